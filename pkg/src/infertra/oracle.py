"""Slow reference implementations computed straight from the trajectory database.

Nothing here touches a learned model: every probability is a fresh count
over the historical trajectories. The functions are meant as ground truth
for testing the sampler on networks small enough to enumerate.
"""

from __future__ import annotations

import math
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from .network import RoadNetwork, hop_count, hop_distances, path_edges
from .trajectory import DAY, Observation, forward_gap, time_distance, unwrap_times

DEFAULT_SPEED = 30 / 3.6


class NoSupportError(ZeroDivisionError):
    """No historical trajectory supports the requested denominator."""


class BudgetExceeded(RuntimeError):
    pass


@dataclass
class OracleResult:
    marginals: dict
    paths: dict
    stats: dict = field(default_factory=dict)

    def marginal(self, e):
        return self.marginals.get(e, 0.0)

    def to_json(self, net: RoadNetwork):
        ids = net.node_ids
        return {
            "marginals": {f"{ids[int(net.src[e])]}->{ids[int(net.dst[e])]}": p
                          for e, p in sorted(self.marginals.items())},
            "paths": [{"nodes": [ids[v] for v in p], "p": q} for p, q in sorted(self.paths.items())],
            "stats": self.stats,
        }


def _occurs(seq, traj_nodes):
    k = len(seq)
    for a in range(len(traj_nodes) - k + 1):
        if tuple(traj_nodes[a:a + k]) == seq:
            return a
    return -1


def _in_order(nodes, traj_nodes):
    it = iter(traj_nodes)
    return all(v in it for v in nodes)


def naive_joint(db, T, O) -> float:
    """Share of trajectories containing path ``T`` among those covering the observed nodes of ``O``."""
    path = tuple(int(v) for v in T)
    obs = tuple(int(v) for v in (O.nodes if isinstance(O, Observation) else O))
    num = den = 0
    for traj in db:
        if _in_order(obs, traj.nodes):
            den += 1
            if _occurs(path, traj.nodes) >= 0:
                num += 1
    if den == 0:
        raise NoSupportError("no historical trajectory covers every observed node")
    return num / den


def conditional(db, recent, candidate, target, delta=None, t=None, net=None) -> float:
    """Probability of continuing ``recent`` with ``candidate`` among trajectories that later reach ``target``.

    ``recent`` is a node sequence ending at the candidate's origin.
    ``candidate`` is the next node, or an edge index when ``net`` is given.
    With ``delta`` and ``t``, only occurrences whose last ``recent`` node is
    reached within ``delta`` of ``t`` count.
    """
    recent = tuple(int(v) for v in recent)
    if not recent:
        raise ValueError("recent history must not be empty")
    if net is not None:
        if int(net.src[candidate]) != recent[-1]:
            raise ValueError("candidate edge does not leave the last node of the history")
        nxt = int(net.dst[candidate])
    else:
        nxt = int(candidate)
    num = den = 0
    k = len(recent)
    for traj in db:
        a = _occurs(recent, traj.nodes)
        if a < 0:
            continue
        j = a + k - 1
        if delta is not None and time_distance(t, traj.times[j]) > delta:
            continue
        if target not in traj.nodes[j + 1:]:
            continue
        den += 1
        if j + 1 < len(traj.nodes) and traj.nodes[j + 1] == nxt:
            num += 1
    if den == 0:
        raise NoSupportError("no historical trajectory supports the history and target")
    return num / den


def density(history_size, n) -> float:
    """Representative samples per unit volume of an ``n``-edge binary joint space."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n > 60:
        if history_size <= 0:
            return 0.0
        return math.exp(math.log(history_size) - n * math.log(2.0))
    return history_size / 2 ** n


# ---------------------------------------------------------------------------
# Database statistics for walk scoring


class _Counts:
    """History continuation counts scanned directly from the database."""

    def __init__(self, net, db, m):
        self.m = m
        self.next = defaultdict(Counter)
        self.times = defaultdict(list)
        speed = defaultdict(list)
        for traj in db:
            nodes = traj.nodes
            u = unwrap_times(traj.times)
            for j in range(len(nodes) - 1):
                for p in range(1, min(m, j + 1) + 1):
                    h = tuple(nodes[j - p + 1:j + 1])
                    self.next[h][nodes[j + 1]] += 1
                    self.times[h].append((traj.times[j], nodes[j + 1]))
                e = net.edge_index[(nodes[j], nodes[j + 1])]
                speed[e].append(net.length[e] / (u[j + 1] - u[j]))
        self.duration = []
        for e in range(net.n_edges):
            s = sum(speed[e]) / len(speed[e]) if speed[e] else DEFAULT_SPEED
            self.duration.append(float(net.length[e]) / s)

    def ratio(self, h, w, t=None, delta=None):
        h = h[-self.m:]
        if delta is None:
            c = self.next.get(h)
            if not c:
                return None
            return c[w] / sum(c.values())
        ev = [nxt for (s, nxt) in self.times.get(h, ()) if time_distance(t, s) <= delta]
        if not ev:
            return None
        return sum(1 for x in ev if x == w) / len(ev)


def _segment_paths(net, src, dst, cap, forbidden, limit):
    out = []
    dist = hop_distances(net, dst, reverse=True)
    path = [src]
    seen = {src}

    def rec(u):
        for e in net.out_adj[u]:
            w = int(net.dst[e])
            if w in seen or w in forbidden:
                continue
            dw = dist[w]
            if dw < 0 or len(path) + dw > cap:
                continue
            path.append(w)
            if w == dst:
                out.append(tuple(path))
                if len(out) > limit:
                    raise BudgetExceeded(f"more than {limit} paths between a pair")
            else:
                seen.add(w)
                rec(w)
                seen.discard(w)
            path.pop()

    rec(src)
    return out


def _walk_score(net, counts, path, t0, gap, eps, delta, tau_mode):
    """Unnormalized probability that a restarting walk from ``path[0]`` follows ``path`` and is kept."""
    p = 1.0
    t = t0
    elapsed = 0.0
    for i in range(len(path) - 1):
        if elapsed > gap:
            p *= math.exp(-(elapsed - gap) / gap)
        u = path[i]
        visited = set(path[:i + 1])
        cands = [int(net.dst[e]) for e in net.out_adj[u] if int(net.dst[e]) not in visited]
        if len(cands) > 1:
            h = tuple(path[:i + 1])
            ws = []
            for w in cands:
                r = counts.ratio(h, w, t, delta)
                ws.append(eps if r is None else max(r, eps))
            if max(ws) <= eps:
                ws = [1.0] * len(cands)
            p *= ws[cands.index(path[i + 1])] / sum(ws)
        d = counts.duration[net.edge_index[(u, path[i + 1])]]
        t = (t + d) % DAY
        elapsed += d
    if tau_mode == "temporal":
        p *= math.exp(-abs(elapsed - gap) / gap)
    return p


def _dest_score(net, db, path, target, m, eps, delta, t0, counts):
    p = 1.0
    t = t0
    for i in range(len(path) - 1):
        h = tuple(path[max(0, i + 1 - m):i + 1])
        try:
            c = conditional(db, h, path[i + 1], target, delta=delta, t=t if delta else None)
        except NoSupportError:
            c = 0.0
        p *= max(c, eps)
        t = (t + counts.duration[net.edge_index[(path[i], path[i + 1])]]) % DAY
    return p


def exact_marginals(net, db, O, m=3, epsilon=1e-6, delta=None, max_hops_factor=10.0,
                    max_hops=None, destination_conditioned=False, tau_mode="zero",
                    limit=200_000) -> OracleResult:
    """Edge marginals given ``O`` by enumerating every admissible path.

    By default each path between consecutive observations is scored by the
    probability that a restarting walk follows it and is kept: continuation
    ratios counted over the database (``epsilon``-floored, renormalized over
    non-cyclic out-edges, uniform when all are at the floor), times the
    survival of the restart law along the path's clock. ``delta=None`` pools
    the whole day. Paths longer than ``max_hops_factor`` times the hop
    distance are dropped, matching a walker's step cap. Combined paths must
    stay simple.

    With ``destination_conditioned=True`` a segment is instead scored as the
    product of target-conditioned continuation ratios, each floored at
    ``epsilon``.
    """
    obs = O if isinstance(O, Observation) else Observation(*O)
    counts = _Counts(net, db, m)
    segments = []
    n_paths = []
    for i, ((v1, t1), (v2, t2)) in enumerate(obs.pairs()):
        hops = hop_count(net, v1, v2)
        if hops is None:
            raise NoSupportError(f"observation pair {i} is not connected")
        cap = max_hops if max_hops is not None else max(1, math.ceil(max_hops_factor * hops))
        forbidden = set(obs.nodes) - {v1, v2}
        paths = _segment_paths(net, v1, v2, cap, forbidden, limit)
        gap = forward_gap(t1, t2)
        scored = []
        for p in paths:
            if destination_conditioned:
                s = _dest_score(net, db, p, v2, m, epsilon, delta, t1, counts)
            else:
                s = _walk_score(net, counts, p, t1, gap, epsilon, delta, tau_mode)
            if s > 0:
                scored.append((p, s))
        total = sum(s for _, s in scored)
        if total == 0:
            raise NoSupportError(f"no admissible path for observation pair {i}")
        segments.append([(p, s / total) for p, s in sorted(scored)])
        n_paths.append(len(paths))

    table = {}
    budget = [limit]

    def combine(i, nodes, seen, prob):
        if i == len(segments):
            budget[0] -= 1
            if budget[0] < 0:
                raise BudgetExceeded(f"more than {limit} combined paths")
            table[tuple(nodes)] = prob
            return
        for p, s in segments[i]:
            tail = p[1:]
            if any(v in seen for v in tail):
                continue
            combine(i + 1, nodes + list(tail), seen | set(tail), prob * s)

    combine(0, [obs.nodes[0]], {obs.nodes[0]}, 1.0)
    z = sum(table.values())
    if z == 0:
        raise NoSupportError("no simple path through every observation")
    probs = {p: q / z for p, q in table.items()}
    marg = defaultdict(float)
    for p, q in probs.items():
        for e in path_edges(net, p):
            marg[e] += q
    return OracleResult(dict(marg), probs, {"segment_paths": n_paths, "paths": len(probs)})


# ---------------------------------------------------------------------------
# Textbook sampler


def naive_gibbs(net, db, O, m=3, iterations=10_000, rng=None, epsilon=1e-6, max_hops=None,
                max_restarts=10_000):
    """Edge marginals from the sequential sampling loop with per-step database scans.

    The random variables are the edges of all hop-budgeted paths through
    ``O``. Each iteration starts with every variable unset and a timestamp
    of 0, then marks edges traversed one at a time: the next edge is drawn
    among unset variables leaving the current node, in proportion to the
    target-conditioned continuation ratio of the last ``m`` nodes. The
    timestamp counts marked edges. Iterations hitting a dead end are redrawn.
    """
    from .network import enumerate_acyclic_paths

    rng = rng if rng is not None else random.Random(0)
    obs = O if isinstance(O, Observation) else Observation(*O)
    paths = enumerate_acyclic_paths(net, obs.nodes, max_hops=max_hops)
    variables = set()
    for p in paths:
        variables.update(path_edges(net, p))
    out = defaultdict(list)
    for e in sorted(variables):
        out[int(net.src[e])].append(e)
    counts = Counter()
    cache = {}

    def weight(h, e, target):
        key = (h, e, target)
        if key not in cache:
            try:
                c = conditional(db, h, e, target, net=net)
            except NoSupportError:
                c = 0.0
            cache[key] = max(c, epsilon)
        return cache[key]

    done = 0
    restarts = 0
    while done < iterations:
        traversed = []
        nodes = [obs.nodes[0]]
        timestamp = 0
        ok = True
        for target in obs.nodes[1:]:
            while nodes[-1] != target:
                cands = [e for e in out[nodes[-1]] if int(net.dst[e]) not in nodes]
                if not cands:
                    ok = False
                    break
                h = tuple(nodes[-m:])
                ws = [weight(h, e, target) for e in cands]
                u = rng.random() * sum(ws)
                k = len(cands) - 1
                acc = 0.0
                for i, w in enumerate(ws):
                    acc += w
                    if u < acc:
                        k = i
                        break
                traversed.append(cands[k])
                nodes.append(int(net.dst[cands[k]]))
                timestamp += 1
            if not ok:
                break
        if not ok:
            restarts += 1
            if restarts > max_restarts:
                raise BudgetExceeded("too many dead ends")
            continue
        counts.update(traversed)
        done += 1
    if iterations == 0:
        return {e: 0.0 for e in sorted(variables)}
    return {e: counts[e] / iterations for e in sorted(variables)}
