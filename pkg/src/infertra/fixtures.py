"""Canonical small fixtures and their golden values.

Each fixture directory holds ``nodes.csv``, ``edges.csv``,
``trajectories.jsonl`` and ``expected.json``. Golden values carry a
provenance tag and a tolerance; sampled values also record the seed and the
sample count they were produced with. :func:`regenerate` rebuilds
everything from the builders below and the database oracle.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from .datagen import bimodal_fork_model, simulate_corpus
from .inference import RwrConfig, infer
from .network import RoadNetwork, enumerate_acyclic_paths, read_network, write_network
from .nmm import NetworkMobilityModel
from .oracle import exact_marginals, naive_joint
from .trajectory import Observation, Trajectory, m_histories, read_trajectories, write_trajectories

ROOT = Path(__file__).with_name("fixture_data")
NAMES = ("d4", "branching", "bimodal")
# origin of each golden value, stored next to it in expected.json
TAGS = ("PAPER", "TRIVIAL", "DERIVED")
EIGHT_AM = 8 * 3600


def _edges(pairs, length=1000.0):
    return [(k, u, v, length) for k, (u, v) in enumerate(pairs)]


def d4_network() -> RoadNetwork:
    return RoadNetwork(list("abcd"), [0.0, 0.009, -0.009, 0.0], [0.0, 0.009, 0.009, 0.018],
                       _edges([("a", "b"), ("a", "c"), ("b", "d"), ("c", "d")]))


def _timed(net, names, start=EIGHT_AM, step=60, tid=None):
    nodes = tuple(net.node_of(n) for n in names)
    return Trajectory(nodes, tuple(start + step * i for i in range(len(nodes))), id=tid)


def d4_trajectories(net):
    return [_timed(net, "abd", tid=f"abd{i}") for i in range(6)] + [_timed(net, "acd", tid=f"acd{i}") for i in range(2)]


def branching_network() -> RoadNetwork:
    xy = {"a": (0, 0), "b": (1, 0), "c": (2, 1), "d": (2, -1), "e": (3, 2), "f": (3, -1), "g": (4, 0)}
    names = list("abcdefg")
    return RoadNetwork(names, [xy[n][1] * 0.009 for n in names], [xy[n][0] * 0.009 for n in names],
                       _edges([("a", "b"), ("b", "c"), ("b", "d"), ("d", "c"), ("c", "e"),
                               ("c", "g"), ("d", "f"), ("f", "g")]))


def branching_trajectories(net):
    routes = [("abce", 4), ("abcg", 1), ("abdce", 4), ("abdcg", 1), ("abdfg", 2)]
    return [_timed(net, r, tid=f"{r}{i}") for r, k in routes for i in range(k)]


def bimodal_corpus():
    pm, fork = bimodal_fork_model(seed=7)
    return pm.network, simulate_corpus(pm, 2000), fork


# ---------------------------------------------------------------------------


def fixture_dir(name) -> Path:
    if name not in NAMES:
        raise KeyError(f"unknown fixture {name!r}")
    return ROOT / name


def load_fixture(name):
    """``(network, trajectories, expected)`` as stored on disk."""
    d = fixture_dir(name)
    net = read_network(d)
    db = read_trajectories(d / "trajectories.jsonl", net)
    with open(d / "expected.json", encoding="utf-8") as f:
        expected = json.load(f)
    return net, db, expected


def _value(value, tag, tolerance=0.0, **extra):
    return {"value": value, "tag": tag, "tolerance": tolerance, **extra}


def _edge_name(net, e):
    return f"{net.node_ids[int(net.src[e])]}->{net.node_ids[int(net.dst[e])]}"


def _sampled_marginals(net, model, obs, seed, min_samples, tolerance):
    u = infer(model, obs, RwrConfig(seed=seed, min_samples=min_samples))
    return {_edge_name(net, e): _value(w, "DERIVED", tolerance, seed=seed, samples=u.n_samples)
            for e, w in sorted(u.weights.items())}, u


def _d4_expected(net, db):
    n = net.node_of
    model = NetworkMobilityModel(net, order=1).fit(db)
    obs = Observation((n("a"), n("d")), (EIGHT_AM, EIGHT_AM + 120))
    oracle = exact_marginals(net, db, obs, m=1)
    sampled, u = _sampled_marginals(net, model, obs, seed=0, min_samples=20_000, tolerance=0.03)
    path, p = u.most_likely_trajectory()
    e = net.edge_between
    return {
        "network": {"nodes": _value(net.n_nodes, "DERIVED"), "edges": _value(net.n_edges, "DERIVED")},
        "affinity": {
            "a->b|a@08:00": _value(model.affinity(e(n("a"), n("b")), (n("a"),), EIGHT_AM), "DERIVED", 1e-12),
            "a->c|a@08:00": _value(model.affinity(e(n("a"), n("c")), (n("a"),), EIGHT_AM), "DERIVED", 1e-12),
            "b->d|b@08:01": _value(model.affinity(e(n("b"), n("d")), (n("b"),), EIGHT_AM + 60), "DERIVED", 1e-12),
        },
        "speed": {"a->b@08:00": _value(model.speed(e(n("a"), n("b")), EIGHT_AM), "DERIVED", 0.01)},
        "observation": {"nodes": ["a", "d"], "times": [EIGHT_AM, EIGHT_AM + 120]},
        "oracle_marginals": {_edge_name(net, k): _value(v, "DERIVED", 1e-12) for k, v in sorted(oracle.marginals.items())},
        "naive_joint": {"abd|ad": _value(naive_joint(db, [n(v) for v in "abd"], [n("a"), n("d")]), "DERIVED", 1e-12)},
        "inferred_marginals": sampled,
        "mlt": {"path": [net.node_ids[v] for v in path], "likelihood": _value(p, "DERIVED", 0.03)},
        "node_weight_dest": _value(u.node_weight(n("d")), "DERIVED"),
    }


def _branching_expected(net, db):
    n = net.node_of
    model = NetworkMobilityModel(net, order=1).fit(db)
    obs = Observation((n("a"), n("g")), (EIGHT_AM, EIGHT_AM + 240))
    oracle = exact_marginals(net, db, obs, m=1)
    sampled, u = _sampled_marginals(net, model, obs, seed=0, min_samples=20_000, tolerance=0.03)
    hist = sorted("".join(net.node_ids[v] for v in h) for h in m_histories(net, n("c"), 2))
    paths = sorted("".join(net.node_ids[v] for v in p) for p in enumerate_acyclic_paths(net, (n("a"), n("g"))))
    e = net.edge_between
    abcg = [n(v) for v in "abcg"]
    return {
        "provenance": "PAPER, transcribed from figure: network and trajectories reconstructed so that the "
                      "worked-example numbers in the text hold",
        "m_histories_c_2": _value(hist, "PAPER"),
        "acyclic_paths_a_g": _value(paths, "PAPER"),
        "affinity": {
            "c->e|c": _value(model.affinity(e(n("c"), n("e")), (n("c"),), EIGHT_AM + 120), "DERIVED", 1e-12),
            "b->c|b": _value(model.affinity(e(n("b"), n("c")), (n("b"),), EIGHT_AM + 60), "DERIVED", 1e-12),
            "d->c|d": _value(model.affinity(e(n("d"), n("c")), (n("d"),), EIGHT_AM + 120), "DERIVED", 1e-12),
        },
        "observation": {"nodes": ["a", "g"], "times": [EIGHT_AM, EIGHT_AM + 240]},
        "oracle_marginals": {_edge_name(net, k): _value(v, "DERIVED", 1e-12) for k, v in sorted(oracle.marginals.items())},
        "c->g_weight": _value(oracle.marginals[e(n("c"), n("g"))], "PAPER", 0.03),
        "likelihood_abcg": _value(oracle.paths[tuple(abcg)], "PAPER", 0.03),
        "inferred_marginals": sampled,
    }


def _bimodal_expected(net, db, fork):
    n = net.node_of
    up, down = fork
    learned = NetworkMobilityModel(net).fit(db)
    single = NetworkMobilityModel(net, n_bins=1).fit(db)
    f = (n("f"),)
    obs = Observation((n("s"), n("z")), (EIGHT_AM, EIGHT_AM + 350))
    u_l = infer(learned, obs, RwrConfig(seed=0))
    u_s = infer(single, obs, RwrConfig(seed=0))
    return {
        "planted": {"morning_up": _value(0.8, "DERIVED"), "afternoon_up": _value(0.2, "DERIVED")},
        "learned_bins_fork": _value(learned.table_[f][0], "DERIVED"),
        "affinity_up": {
            "08:00": _value(learned.affinity(up, f, EIGHT_AM), "DERIVED", 0.05),
            "16:00": _value(learned.affinity(up, f, 16 * 3600), "DERIVED", 0.05),
            "single_bin": _value(single.affinity(up, f, EIGHT_AM), "DERIVED", 0.05),
        },
        "observation": {"nodes": ["s", "z"], "times": [EIGHT_AM, EIGHT_AM + 350]},
        "inferred_up": {
            "binned": _value(u_l.weight(up), "DERIVED", 0.03, seed=0, samples=u_l.n_samples),
            "single_bin": _value(u_s.weight(up), "DERIVED", 0.03, seed=0, samples=u_s.n_samples),
        },
    }


def build(name):
    """``(network, trajectories, expected)`` computed from scratch."""
    if name == "d4":
        net = d4_network()
        db = d4_trajectories(net)
        return net, db, _d4_expected(net, db)
    if name == "branching":
        net = branching_network()
        db = branching_trajectories(net)
        return net, db, _branching_expected(net, db)
    if name == "bimodal":
        net, db, fork = bimodal_corpus()
        return net, db, _bimodal_expected(net, db, fork)
    raise KeyError(f"unknown fixture {name!r}")


def dumps_expected(expected) -> str:
    return json.dumps(expected, indent=1, sort_keys=True) + "\n"


def regenerate(names=NAMES, check=False, root=None) -> list:
    """Rebuild fixtures; with ``check`` only compare and return the names whose files would change."""
    root = Path(root) if root is not None else ROOT
    drifted = []
    for name in names:
        net, db, expected = build(name)
        d = root / name
        text = dumps_expected(expected)
        path = d / "expected.json"
        old = path.read_text(encoding="utf-8") if path.exists() else None
        if check:
            if old != text:
                drifted.append(name)
            continue
        os.makedirs(d, exist_ok=True)
        write_network(net, d)
        write_trajectories(d / "trajectories.jsonl", db, net)
        path.write_text(text, encoding="utf-8")
        if old != text:
            drifted.append(name)
    return drifted
