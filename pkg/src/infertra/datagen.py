"""Synthetic road networks and trajectory corpora drawn from planted movement preferences."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

import numpy as np

from .network import RoadNetwork, haversine
from .trajectory import DAY, Trajectory

# grids are laid out north-east of this point
ORIGIN = (45.0, 7.0)
_M_PER_DEG = 6_371_000 * math.pi / 180


def _to_latlon(x, y, origin=ORIGIN):
    lat0, lon0 = origin
    return lat0 + y / _M_PER_DEG, lon0 + x / (_M_PER_DEG * math.cos(math.radians(lat0)))


def grid_network(rows, cols, spacing=1000.0, one_way=False) -> RoadNetwork:
    """Bidirected ``rows x cols`` grid; node ``r * cols + c`` sits ``spacing`` meters from its neighbours.

    With ``one_way`` only the east- and north-bound edges exist, which makes
    the grid acyclic.
    """
    if rows < 2 or cols < 2:
        raise ValueError("a grid needs at least 2 rows and 2 columns")
    ids, lat, lon = [], [], []
    for r in range(rows):
        for c in range(cols):
            la, lo = _to_latlon(c * spacing, r * spacing)
            ids.append(r * cols + c)
            lat.append(la)
            lon.append(lo)
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            for dr, dc in ((0, 1), (1, 0)) if one_way else ((0, 1), (1, 0), (0, -1), (-1, 0)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < rows and 0 <= cc < cols:
                    edges.append((len(edges), v, rr * cols + cc, float(spacing)))
    return RoadNetwork(ids, lat, lon, edges)


def random_network(n_nodes, n_edges, seed=0, extent=3000.0) -> RoadNetwork:
    """Random strongly connected network: a bidirected spanning tree plus random one-way edges.

    Lengths are the great-circle distances between the random node positions.
    """
    if n_nodes < 2:
        raise ValueError("need at least two nodes")
    if n_edges < 2 * (n_nodes - 1):
        raise ValueError("need at least 2 * (n_nodes - 1) edges for the spanning tree")
    rng = random.Random(seed)
    pos = [_to_latlon(rng.uniform(0, extent), rng.uniform(0, extent)) for _ in range(n_nodes)]
    pairs = []
    for v in range(1, n_nodes):
        u = rng.randrange(v)
        pairs += [(u, v), (v, u)]
    present = set(pairs)
    free = [(u, v) for u in range(n_nodes) for v in range(n_nodes) if u != v and (u, v) not in present]
    rng.shuffle(free)
    pairs += free[:n_edges - len(pairs)]
    edges = [(k, u, v, max(1.0, round(haversine(pos[u], pos[v]), 1))) for k, (u, v) in enumerate(pairs)]
    return RoadNetwork(list(range(n_nodes)), [p[0] for p in pos], [p[1] for p in pos], edges)


def edge_durations(net, speed=10.0):
    """Whole-second traversal times for a constant ``speed`` (m/s), at least one second."""
    return np.maximum(1, np.round(net.length / speed)).astype(np.int64)


@dataclass
class PlantedModel:
    """Ground-truth movement preferences for simulated trips.

    Parameters
    ----------
    network : RoadNetwork
    weights : ndarray of shape (n_bins, n_edges)
        Preference for each edge in each equal time-of-day bin. At every
        step the next edge is drawn in proportion to these, among out-edges
        that do not revisit a node.
    durations : ndarray of shape (n_edges,)
        Whole-second traversal time per edge.
    turn_bias : dict
        ``(in_edge, out_edge) -> factor`` multiplying the preference, for
        second-order behaviour.
    trip_edges : (int, int)
        Inclusive range of the number of edges of a trip; a trip ends early
        at a dead end.
    departure : (int, int)
        Departure time range in seconds of the day.
    sources : sequence of int, optional
        Candidate start nodes; every node with an out-edge when omitted.
    """

    network: RoadNetwork
    weights: np.ndarray
    durations: np.ndarray
    turn_bias: dict = field(default_factory=dict)
    trip_edges: tuple = (5, 20)
    departure: tuple = (6 * 3600, 20 * 3600)
    sources: tuple = None
    seed: int = 0

    def __post_init__(self):
        self.weights = np.atleast_2d(np.asarray(self.weights, dtype=float))
        if self.weights.shape[1] != self.network.n_edges:
            raise ValueError("weights must have one column per edge")
        if (self.weights < 0).any():
            raise ValueError("weights must be non-negative")
        self.durations = np.asarray(self.durations, dtype=np.int64)
        if (self.durations < 1).any():
            raise ValueError("durations must be >= 1 second")
        lo, hi = self.trip_edges
        if not 1 <= lo <= hi:
            raise ValueError("invalid trip length range")
        if self.sources is None:
            self.sources = tuple(v for v in range(self.network.n_nodes) if self.network.out_adj[v])

    @property
    def n_bins(self):
        return self.weights.shape[0]

    def probabilities(self, v, t, prev_edge=None, visited=()):
        """Planted next-edge distribution at node ``v`` and time ``t``."""
        b = min(int(t * self.n_bins / DAY), self.n_bins - 1)
        cands = [e for e in self.network.out_adj[v] if int(self.network.dst[e]) not in visited]
        ws = [self.weights[b, e] * self.turn_bias.get((prev_edge, e), 1.0) for e in cands]
        total = sum(ws)
        if total <= 0:
            return {}
        return {e: w / total for e, w in zip(cands, ws)}

    def trip(self, rng) -> Trajectory:
        net = self.network
        dst = net.dst
        length = rng.randint(*self.trip_edges)
        while True:
            v = self.sources[int(rng.random() * len(self.sources))]
            t = rng.randint(self.departure[0], self.departure[1])
            nodes, times = [v], [t % DAY]
            visited = {v}
            prev = None
            t_abs = t
            for _ in range(length):
                probs = self.probabilities(v, t_abs % DAY, prev, visited)
                if not probs:
                    break
                u = rng.random()
                acc = 0.0
                items = list(probs.items())
                e = items[-1][0]
                for cand, p in items:
                    acc += p
                    if u < acc:
                        e = cand
                        break
                v = int(dst[e])
                t_abs += int(self.durations[e])
                nodes.append(v)
                times.append(t_abs % DAY)
                visited.add(v)
                prev = e
            if len(nodes) >= 2:
                return Trajectory(tuple(nodes), tuple(times))


def _trip_rng(seed, i):
    s = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int(i)]).generate_state(2, np.uint32)
    return random.Random(int(s[0]) << 32 | int(s[1]))


def simulate_corpus(pm: PlantedModel, n) -> list:
    """``n`` trajectories; trip ``i`` uses its own seeded stream, so any prefix of a corpus is stable."""
    if n < 1:
        raise ValueError("n must be >= 1")
    out = []
    for i in range(n):
        t = pm.trip(_trip_rng(pm.seed, i))
        out.append(Trajectory(t.nodes, t.times, id=f"t{i}"))
    return out


# ---------------------------------------------------------------------------
# Ready-made planted models


def favorite_edge_model(net, favor=6.0, seed=0, **kwargs) -> PlantedModel:
    """First-order preferences: every node has one favourite out-edge, ``favor`` times likelier than the rest."""
    rng = random.Random(seed)
    w = np.ones(net.n_edges)
    for v in range(net.n_nodes):
        if net.out_adj[v]:
            w[rng.choice(net.out_adj[v])] = favor
    kwargs.setdefault("durations", edge_durations(net))
    return PlantedModel(net, w[None, :], seed=seed, **kwargs)


def straight_preference_model(net, straight=8.0, seed=0, **kwargs) -> PlantedModel:
    """Second-order preferences on a grid: continuing straight is ``straight`` times likelier than turning."""
    turn_bias = {}
    for e_in in range(net.n_edges):
        a, b = int(net.src[e_in]), int(net.dst[e_in])
        ax, ay = net.lon[a], net.lat[a]
        bx, by = net.lon[b], net.lat[b]
        for e_out in net.out_adj[b]:
            c = int(net.dst[e_out])
            cx, cy = net.lon[c], net.lat[c]
            d1 = (np.sign(round((bx - ax) * 1e9)), np.sign(round((by - ay) * 1e9)))
            d2 = (np.sign(round((cx - bx) * 1e9)), np.sign(round((cy - by) * 1e9)))
            if d1 == d2:
                turn_bias[(e_in, e_out)] = straight
    kwargs.setdefault("durations", edge_durations(net))
    return PlantedModel(net, np.ones((1, net.n_edges)), turn_bias=turn_bias, seed=seed, **kwargs)


def fork_network(branch_hops=3, spacing=500.0) -> RoadNetwork:
    """Approach road into a fork whose two branches rejoin before the end.

    Nodes: ``s -> p -> f``, then ``f -> a1 .. a{k} -> j`` and
    ``f -> b1 .. b{k} -> j``, then ``j -> z``.
    """
    names = ["s", "p", "f"] + [f"a{i}" for i in range(1, branch_hops + 1)] \
        + [f"b{i}" for i in range(1, branch_hops + 1)] + ["j", "z"]
    xy = {"s": (0, 0), "p": (1, 0), "f": (2, 0), "j": (branch_hops + 3, 0), "z": (branch_hops + 4, 0)}
    for i in range(1, branch_hops + 1):
        xy[f"a{i}"] = (2 + i, 1)
        xy[f"b{i}"] = (2 + i, -1)
    chain_a = ["f"] + [f"a{i}" for i in range(1, branch_hops + 1)] + ["j"]
    chain_b = ["f"] + [f"b{i}" for i in range(1, branch_hops + 1)] + ["j"]
    pairs = [("s", "p"), ("p", "f")] + list(zip(chain_a[:-1], chain_a[1:])) \
        + list(zip(chain_b[:-1], chain_b[1:])) + [("j", "z")]
    lat, lon = [], []
    for n in names:
        la, lo = _to_latlon(xy[n][0] * spacing, xy[n][1] * spacing)
        lat.append(la)
        lon.append(lo)
    edges = [(k, u, v, float(spacing)) for k, (u, v) in enumerate(pairs)]
    return RoadNetwork(names, lat, lon, edges)


def bimodal_fork_model(morning=0.8, seed=0, branch_hops=3, **kwargs):
    """Fork model whose upper branch gets ``morning`` of the traffic before noon and ``1 - morning`` after.

    Returns ``(planted_model, fork_edges)`` with the upper and lower fork edges.
    """
    net = fork_network(branch_hops)
    up = net.edge_between(net.node_of("f"), net.node_of("a1"))
    down = net.edge_between(net.node_of("f"), net.node_of("b1"))
    w = np.ones((2, net.n_edges))
    w[0, up], w[0, down] = morning, 1 - morning
    w[1, up], w[1, down] = 1 - morning, morning
    kwargs.setdefault("durations", edge_durations(net))
    kwargs.setdefault("trip_edges", (branch_hops + 4, branch_hops + 4))
    kwargs.setdefault("sources", (net.node_of("s"),))
    kwargs.setdefault("departure", (6 * 3600, 18 * 3600))
    return PlantedModel(net, w, seed=seed, **kwargs), (up, down)
