import io

import pytest
from hypothesis import given, settings, strategies as st

from infertra.trajectory import (
    InvalidTrajectoryError, Observation, Trajectory, TrajectoryFormatError, check_trajectory, contains,
    downsample, m_histories, parse_time, read_trajectories, time_distance, unwrap_times,
    validate_trajectory, write_trajectories,
)

T8 = parse_time("08:00")


def traj(net, names, times):
    return Trajectory(tuple(net.node_of(n) for n in names), tuple(times))


def test_validate(d4):
    net = d4[0]
    assert validate_trajectory(net, traj(net, "abd", (T8, T8 + 60, T8 + 120))) == []
    kinds = [v.kind for v in validate_trajectory(net, traj(net, "ad", (T8, T8 + 60)))]
    assert kinds == ["disconnected"]
    kinds = [v.kind for v in validate_trajectory(net, traj(net, "ab", (T8 + 60, T8)))]
    assert "time-order" in kinds
    with pytest.raises(InvalidTrajectoryError):
        check_trajectory(net, traj(net, "ad", (T8, T8 + 60)))


def test_midnight_crossing(d4):
    net = d4[0]
    assert validate_trajectory(net, traj(net, "abd", (86_340, 86_399, 30))) == []
    assert unwrap_times((86_340, 30)) == [86_340, 86_430]


def test_m_histories(d4, branching):
    net = d4[0]
    n = net.node_of
    assert m_histories(net, n("d"), 2) == {(n("b"), n("d")), (n("c"), n("d")), (n("d"),)}
    assert m_histories(net, n("d"), 1) == {(n("d"),)}
    bnet, _, expected = branching
    got = sorted("".join(bnet.node_ids[v] for v in h) for h in m_histories(bnet, bnet.node_of("c"), 2))
    assert got == expected["m_histories_c_2"]["value"] == ["bc", "c", "dc"]


def test_contains(d4):
    net = d4[0]
    n = net.node_of
    t = traj(net, "abd", (T8, T8 + 60, T8 + 120))
    assert contains((n("a"), n("b")), t, T8 + 60, 1800)
    assert not contains((n("a"), n("b")), t, parse_time("20:00"), 60)
    assert contains(t.nodes, t, t.times[-1], 1)


def test_downsample():
    t = Trajectory(tuple(range(5)), tuple(60 * i for i in range(5)))
    assert downsample(t, 0).nodes == t.nodes
    assert downsample(t, 120).nodes == (0, 2, 4)
    assert downsample(t, 10_000).nodes == (0, 4)


def test_time_distance():
    assert time_distance(10, 86_390) == 20
    assert time_distance(0, 43_200) == 43_200


def test_jsonl_roundtrip(tmp_path, d4):
    net, db, _ = d4
    write_trajectories(tmp_path / "t.jsonl", db, net)
    back = read_trajectories(tmp_path / "t.jsonl", net)
    assert [(t.nodes, t.times, t.id) for t in back] == [(t.nodes, t.times, t.id) for t in db]


def test_jsonl_errors(d4):
    net = d4[0]
    with pytest.raises(TrajectoryFormatError, match="unknown node"):
        read_trajectories(io.StringIO('{"id": "x", "points": [{"node": "q", "t": 0}]}\n'), net)
    with pytest.raises(TrajectoryFormatError, match="line 1"):
        read_trajectories(io.StringIO("{nope\n"), net)


def test_observation_points():
    o = Observation((1, 2, 3), (0, 10, 20))
    assert o.pairs() == [((1, 0), (2, 10)), ((2, 10), (3, 20))]


# -- properties -----------------------------------------------------------------

timestamps = st.lists(st.integers(1, 900), min_size=1, max_size=30).map(
    lambda gaps: tuple(__import__("itertools").accumulate([30_000] + gaps)))


@given(timestamps, st.integers(0, 5000))
def test_downsample_is_ordered_subsequence(times, si):
    t = Trajectory(tuple(range(len(times))), times)
    o = downsample(t, si)
    assert o.nodes[0] == 0 and o.nodes[-1] == len(times) - 1
    assert list(o.nodes) == sorted(set(o.nodes))
    assert all(t.times[v] == s for v, s in zip(o.nodes, o.times))


@given(timestamps, st.integers(0, 86_399), st.integers(1, 5000), st.integers(0, 5000))
def test_contains_monotone_in_delta(times, t, delta, extra):
    tr = Trajectory(tuple(range(len(times))), tuple(x % 86_400 for x in times))
    h = tr.nodes[-2:]
    if contains(h, tr, t, delta):
        assert contains(h, tr, t, delta + extra)


@settings(deadline=None, max_examples=30)
@given(st.integers(0, 6), st.integers(1, 4))
def test_histories_nested(v, m):
    from infertra.fixtures import branching_network

    net = branching_network()
    assert m_histories(net, v, m) <= m_histories(net, v, m + 1)


def test_parse_time_forms():
    assert parse_time("08:00") == parse_time("08:00:00") == parse_time("28800") == parse_time(28_800) == 28_800
    for bad in ("25:00", "08:61", "aa:bb", "1:2:3:4", "-5"):
        with pytest.raises(ValueError):
            parse_time(bad)
