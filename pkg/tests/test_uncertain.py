import json

import pytest
from hypothesis import given, settings, strategies as st

from infertra import datagen
from infertra.datagen import _to_latlon
from infertra.inference import RwrConfig, infer
from infertra.network import RoadNetwork, node_distance
from infertra.nmm import NetworkMobilityModel
from infertra.trajectory import Observation, format_time
from infertra.uncertain import EmptyUncertainTrajectory, UncertainTrajectory

T8 = 8 * 3600


def test_node_weight(d4, d4_u):
    net = d4[0]
    n = net.node_of
    assert d4_u.node_weight(n("d")) == 1.0
    assert d4_u.node_weight(n("a")) == 1.0
    assert d4_u.node_weight(n("b")) == pytest.approx(0.75, abs=0.03)
    with pytest.raises(KeyError):
        UncertainTrajectory(net, n("b"), n("d"), [2], [3], 3).node_weight(n("a"))


def test_likelihood_and_mlt(d4, d4_u):
    net, _, expected = d4
    n = net.node_of
    abd = [n("a"), n("b"), n("d")]
    assert d4_u.trajectory_likelihood(abd) == pytest.approx(0.75, abs=0.03)
    assert d4_u.trajectory_likelihood([n("a"), n("c"), n("d")]) == pytest.approx(0.25, abs=0.03)
    path, p = d4_u.most_likely_trajectory()
    assert path == abd == [n(v) for v in expected["mlt"]["path"]]
    assert p == pytest.approx(0.75, abs=0.03)
    with pytest.raises(ValueError):
        d4_u.trajectory_likelihood([n("a"), n("d")])


def test_single_path_u(d4):
    net = d4[0]
    n = net.node_of
    e = net.edge_between
    u = UncertainTrajectory(net, n("a"), n("d"), [e(n("a"), n("b")), e(n("b"), n("d"))], [7, 7], 7)
    assert u.most_likely_trajectory() == ([n("a"), n("b"), n("d")], 1.0)
    assert u.trajectory_likelihood([n("a"), n("b"), n("d")]) == 1.0
    assert u.top_k_edges(1) == [(e(n("a"), n("b")), 1.0)]


def test_mlt_tie_break(d4):
    net = d4[0]
    n = net.node_of
    u = UncertainTrajectory(net, n("a"), n("d"), [0, 1, 2, 3], [5, 5, 5, 5], 10)
    path, p = u.most_likely_trajectory()
    assert path == [n("a"), n("b"), n("d")] and p == 0.5


def test_top_k(d4, d4_u):
    net = d4[0]
    n = net.node_of
    e = net.edge_between
    top = d4_u.top_k_edges(2)
    assert [x[0] for x in top] == [e(n("a"), n("b")), e(n("b"), n("d"))]
    assert top[0][1] == top[1][1] == pytest.approx(0.75, abs=0.03)
    all_edges = d4_u.top_k_edges(100)
    assert len(all_edges) == 4
    assert [w for _, w in all_edges] == sorted((w for _, w in all_edges), reverse=True)
    with pytest.raises(ValueError):
        d4_u.top_k_edges(0)


def test_location_at_time(d4, d4_u):
    n = d4[0].node_of
    assert d4_u.location_at_time(T8) == {n("a"): 1.0}
    assert d4_u.location_at_time(T8 + 120).get(n("d"), 0) >= 0.95
    for t in (T8, T8 + 30, T8 + 60, T8 + 90, T8 + 120):
        assert sum(d4_u.location_at_time(t).values()) == pytest.approx(1.0, abs=1e-9)


def test_time_at_node(d4, d4_model, d4_u):
    net = d4[0]
    n = net.node_of
    tb = d4_u.time_at_node(n("b"))
    assert not tb.fallback and abs(tb.mean - (T8 + 60)) <= 5
    ta = d4_u.time_at_node(n("a"))
    assert ta.mean == T8 and set(ta.samples) == {T8}
    u = infer(d4_model, Observation((n("b"), n("d")), (T8 + 60, T8 + 120)))
    fb = u.time_at_node(n("a"))
    assert fb.fallback and fb.node in u.nodes


def _line_network():
    pts = [_to_latlon(x, 0) for x in (0, 100, 300)]
    return RoadNetwork(["p", "q", "r"], [p[0] for p in pts], [p[1] for p in pts],
                       [(0, "p", "q", 100.0), (1, "q", "r", 200.0)])


def test_weighted_spatial_distance():
    net = _line_network()
    p, q, r = 0, 1, 2
    u = UncertainTrajectory(net, p, r, [0, 1], [2, 1], 2,
                            traces=[((p, q), (0, 100)), ((p, q, r), (0, 50, 100))])
    assert node_distance(net, p, q) == pytest.approx(100, abs=0.5)
    assert u.weighted_spatial_distance(100, p) == pytest.approx(200, abs=0.5)
    assert u.weighted_spatial_distance(0, p) == 0.0
    assert u.weighted_spatial_distance(100, p) <= node_distance(net, p, r)


def test_json_roundtrip(tmp_path, d4, d4_u):
    net = d4[0]
    d4_u.save(tmp_path / "u.json")
    doc = json.loads((tmp_path / "u.json").read_text())
    assert {"source", "dest", "edges", "node_times"} <= set(doc)
    assert all({"src", "dst", "weight"} <= set(e) for e in doc["edges"])
    back = UncertainTrajectory.load(tmp_path / "u.json", net)
    assert back.dumps() == d4_u.dumps()
    assert back.most_likely_trajectory() == d4_u.most_likely_trajectory()
    gj = d4_u.to_geojson()
    assert gj["type"] == "FeatureCollection" and len(gj["features"]) == 4
    assert all(f["geometry"]["type"] == "LineString" and "weight" in f["properties"] for f in gj["features"])


def test_invalid_construction(d4):
    net = d4[0]
    with pytest.raises(EmptyUncertainTrajectory):
        UncertainTrajectory(net, 0, 3, [], [], 0)
    with pytest.raises(ValueError):
        UncertainTrajectory(net, 0, 3, [0], [5], 3)


def test_format_mean_time(d4_u, d4):
    assert format_time(d4_u.time_at_node(d4[0].node_of("d")).mean) == "08:02:00"


@st.composite
def inferred(draw):
    seed = draw(st.integers(0, 300))
    net = datagen.random_network(7, draw(st.integers(14, 22)), seed=seed, extent=1500)
    pm = datagen.favorite_edge_model(net, seed=seed, trip_edges=(2, 6))
    db = datagen.simulate_corpus(pm, 60)
    model = NetworkMobilityModel(net, order=draw(st.integers(1, 3))).fit(db)
    t = db[draw(st.integers(0, 59))]
    return infer(model, Observation((t.nodes[0], t.nodes[-1]), (t.times[0], t.times[-1])),
                 RwrConfig(seed=seed, min_samples=300, tolerance=0.01))


@settings(max_examples=20, deadline=None)
@given(inferred())
def test_u_properties(u):
    assert u.flow_imbalance() == {}
    assert u.node_weight(u.dest) == 1.0
    paths = u.paths()
    likes = [u.trajectory_likelihood(p) for p in paths]
    if u.is_acyclic():
        assert sum(likes) == pytest.approx(1.0, abs=1e-6)
    _, best = u.most_likely_trajectory()
    assert best >= max(likes) - 1e-12
    for t in (u.observation.times[0], u.observation.times[-1]):
        dist = u.location_at_time(t)
        assert all(p >= 0 for p in dist.values()) and sum(dist.values()) == pytest.approx(1.0, abs=1e-9)
