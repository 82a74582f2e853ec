"""Network-constrained trajectories, partial observations and their helpers.

Timestamps are integer (or float, for simulated clocks) seconds of the day in
``[0, 86400)``. A trajectory may cross midnight once; :func:`unwrap_times`
turns such a sequence into a monotone one for arithmetic.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

from .network import RoadNetwork, UnknownNodeError

DAY = 86400
# a decrease larger than this is read as a midnight crossing, anything smaller is disorder
_CROSSING_DROP = DAY // 2


class TrajectoryFormatError(ValueError):
    pass


class InvalidTrajectoryError(ValueError):
    def __init__(self, violations, tid=None):
        self.violations = list(violations)
        head = f"trajectory {tid!r}: " if tid is not None else ""
        super().__init__(head + "; ".join(v.message for v in self.violations))


def parse_time(text) -> int:
    """``"HH:MM[:SS]"`` or a number of seconds to seconds of the day."""
    if isinstance(text, (int, float)):
        return int(text) % DAY
    if str(text).strip().isdigit():
        return int(text) % DAY
    try:
        parts = [int(p) for p in str(text).split(":")]
    except ValueError:
        raise ValueError(f"malformed time {text!r}") from None
    if not 2 <= len(parts) <= 3:
        raise ValueError(f"malformed time {text!r}, expected HH:MM[:SS]")
    while len(parts) < 3:
        parts.append(0)
    h, m, s = parts
    if not (0 <= h < 24 and 0 <= m < 60 and 0 <= s < 60):
        raise ValueError(f"time {text!r} out of range")
    return h * 3600 + m * 60 + s


def format_time(t) -> str:
    t = int(round(t)) % DAY
    return f"{t // 3600:02d}:{t % 3600 // 60:02d}:{t % 60:02d}"


def time_distance(a, b) -> float:
    """Circular distance between two times of day."""
    raw = abs(a - b) % DAY
    return min(raw, DAY - raw)


def forward_gap(a, b) -> float:
    """Seconds from ``a`` forward to ``b``, wrapping at midnight."""
    return (b - a) % DAY


def unwrap_times(times: Sequence) -> list:
    """Monotone copy of ``times`` allowing a single midnight crossing.

    A drop smaller than half a day is left in place (it is a time-order
    violation, not a crossing); a second large drop is left in place too.
    """
    out = []
    offset = 0
    crossed = False
    prev = None
    for t in times:
        if prev is not None and t < prev and prev - t > _CROSSING_DROP and not crossed:
            offset = DAY
            crossed = True
        out.append(t + offset)
        prev = t
    return out


@dataclass(frozen=True)
class Trajectory:
    """Fully observed network-constrained trip."""

    nodes: tuple
    times: tuple
    id: str = None

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(int(v) for v in self.nodes))
        object.__setattr__(self, "times", tuple(self.times))
        if len(self.nodes) != len(self.times):
            raise ValueError("nodes and times differ in length")

    def __len__(self):
        return len(self.nodes)

    @property
    def points(self):
        return list(zip(self.nodes, self.times))

    @property
    def duration(self):
        u = unwrap_times(self.times)
        return u[-1] - u[0]


@dataclass(frozen=True)
class Observation:
    """Sparse sightings of an unknown trajectory; consecutive nodes need not be adjacent."""

    nodes: tuple
    times: tuple
    id: str = None

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(int(v) for v in self.nodes))
        object.__setattr__(self, "times", tuple(self.times))
        if len(self.nodes) != len(self.times):
            raise ValueError("nodes and times differ in length")

    def __len__(self):
        return len(self.nodes)

    @property
    def points(self):
        return list(zip(self.nodes, self.times))

    def pairs(self):
        """Consecutive ``((v1, t1), (v2, t2))`` sightings."""
        p = self.points
        return list(zip(p[:-1], p[1:]))


class Violation(NamedTuple):
    kind: str  # "length" | "unknown-node" | "time-range" | "time-order" | "disconnected" | "repeated-node"
    index: int
    message: str


def _time_violations(times):
    out = []
    for i, t in enumerate(times):
        if not (0 <= t < DAY):
            out.append(Violation("time-range", i, f"time {t!r} at point {i} outside [0, 86400)"))
    u = unwrap_times(times)
    for i in range(1, len(u)):
        if not u[i] > u[i - 1]:
            out.append(Violation("time-order", i, f"time at point {i} does not increase"))
    return out


def validate_trajectory(net: RoadNetwork, traj: Trajectory) -> list:
    """Every violated trajectory invariant; an empty list means the trajectory is valid."""
    out = []
    if len(traj.nodes) < 2:
        out.append(Violation("length", 0, "a trajectory needs at least two points"))
    for i, v in enumerate(traj.nodes):
        if not net.has_node(v):
            out.append(Violation("unknown-node", i, f"unknown node {v!r} at point {i}"))
    out.extend(_time_violations(traj.times))
    seen = {}
    for i, v in enumerate(traj.nodes):
        if v in seen:
            out.append(Violation("repeated-node", i, f"node {v} repeats (points {seen[v]} and {i})"))
        else:
            seen[v] = i
    for i in range(1, len(traj.nodes)):
        u, v = traj.nodes[i - 1], traj.nodes[i]
        if (u, v) not in net.edge_index:
            out.append(Violation("disconnected", i, f"no edge between points {i - 1} and {i}"))
    return out


def validate_observation(net: RoadNetwork, obs: Observation) -> list:
    out = []
    if len(obs.nodes) < 2:
        out.append(Violation("length", 0, "an observation needs at least two points"))
    for i, v in enumerate(obs.nodes):
        if not net.has_node(v):
            out.append(Violation("unknown-node", i, f"unknown node {v!r} at point {i}"))
    out.extend(_time_violations(obs.times))
    return out


def check_trajectory(net, traj):
    violations = validate_trajectory(net, traj)
    if violations:
        raise InvalidTrajectoryError(violations, traj.id)
    return traj


def check_observation(net, obs):
    violations = validate_observation(net, obs)
    if violations:
        raise InvalidTrajectoryError(violations, obs.id)
    return obs


def m_histories(net: RoadNetwork, v, m) -> set:
    """Simple paths of at most ``m`` nodes ending at ``v``, as node tuples."""
    net._check(v)
    if m < 1:
        raise ValueError("order must be >= 1")
    out = {(v,)}
    frontier = [(v,)]
    for _ in range(m - 1):
        nxt = []
        for h in frontier:
            for e in net.in_adj[h[0]]:
                u = int(net.src[e])
                if u not in h:
                    g = (u,) + h
                    out.add(g)
                    nxt.append(g)
        frontier = nxt
    return out


def contains(history: Sequence, traj: Trajectory, t, delta) -> bool:
    """Whether ``history`` occurs contiguously in ``traj`` with its last node reached within ``delta`` of ``t``."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    h = tuple(history)
    k = len(h)
    nodes = traj.nodes
    for a in range(len(nodes) - k + 1):
        if nodes[a:a + k] == h and time_distance(t, traj.times[a + k - 1]) <= delta:
            return True
    return False


def downsample(traj: Trajectory, si) -> Observation:
    """Keep the first point, then every point at least ``si`` seconds after the last kept one, and the final point."""
    if si < 0:
        raise ValueError("sampling interval must be >= 0")
    u = unwrap_times(traj.times)
    keep = [0]
    for i in range(1, len(u)):
        if u[i] - u[keep[-1]] >= si:
            keep.append(i)
    if keep[-1] != len(u) - 1:
        keep.append(len(u) - 1)
    return Observation(tuple(traj.nodes[i] for i in keep), tuple(traj.times[i] for i in keep), id=traj.id)


# ---------------------------------------------------------------------------
# JSON Lines I/O


def _records(source):
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8") as f:
            yield from enumerate(f, start=1)
    else:
        yield from enumerate(source, start=1)


def _parse_points(net, rec, lineno):
    nodes, times = [], []
    try:
        points = rec["points"]
    except (KeyError, TypeError):
        raise TrajectoryFormatError(f"line {lineno}: missing 'points'") from None
    for k, p in enumerate(points):
        try:
            nid, t = p["node"], p["t"]
        except (KeyError, TypeError):
            raise TrajectoryFormatError(f"line {lineno}: point {k} needs 'node' and 't'") from None
        try:
            nodes.append(net.node_of(nid))
        except UnknownNodeError:
            raise TrajectoryFormatError(f"line {lineno}: unknown node {nid!r}") from None
        if not isinstance(t, (int, float)) or not (0 <= t < DAY):
            raise TrajectoryFormatError(f"line {lineno}: point {k} time {t!r} outside [0, 86400)")
        times.append(t)
    return nodes, times


def read_trajectories(source, net: RoadNetwork, kind=Trajectory) -> list:
    """Parse a JSON Lines file of ``{"id", "points": [{"node", "t"}, ...]}`` records."""
    out = []
    for lineno, line in _records(source):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TrajectoryFormatError(f"line {lineno}: invalid JSON ({exc.msg})") from None
        nodes, times = _parse_points(net, rec, lineno)
        tid = rec.get("id", str(lineno)) if isinstance(rec, dict) else str(lineno)
        out.append(kind(tuple(nodes), tuple(times), id=str(tid)))
    return out


def read_observations(source, net: RoadNetwork) -> list:
    return read_trajectories(source, net, kind=Observation)


def trajectory_record(traj, net: RoadNetwork) -> dict:
    return {
        "id": traj.id,
        "points": [{"node": net.node_ids[v], "t": t} for v, t in zip(traj.nodes, traj.times)],
    }


def write_trajectories(path, trajectories: Iterable, net: RoadNetwork):
    with open(path, "w", encoding="utf-8") as f:
        for traj in trajectories:
            f.write(json.dumps(trajectory_record(traj, net)) + "\n")
