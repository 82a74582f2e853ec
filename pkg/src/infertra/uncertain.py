"""Uncertain trajectories: edge-weighted subgraphs with traversal marginals and their queries."""

from __future__ import annotations

import heapq
import json
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .network import RoadNetwork, distances_from
from .trajectory import DAY, Observation, forward_gap, time_distance


class EmptyUncertainTrajectory(ValueError):
    pass


@dataclass(frozen=True)
class TimeDistribution:
    """Arrival-time samples at ``node``; ``fallback`` marks a nearest-node answer."""

    node: int
    samples: tuple
    reference: float
    fallback: bool = False

    @property
    def mean(self):
        """Mean arrival time, averaged forward from the reference time so midnight is handled."""
        if not self.samples:
            return None
        gaps = [forward_gap(self.reference, s) for s in self.samples]
        return (self.reference + sum(gaps) / len(gaps)) % DAY

    def histogram(self, width=60):
        counts = Counter(int(s // width) * width for s in self.samples)
        n = len(self.samples)
        return {k: c / n for k, c in sorted(counts.items())}


class UncertainTrajectory:
    """Edge-weighted graph ``U`` of traversal marginals between a source and a destination.

    Weights are stored as integer sample counts; ``weight(e) = count / n_samples``.

    Parameters
    ----------
    network : RoadNetwork
    source, dest : int
        Dense node indices.
    edges, counts : sequence of int
        Edges with a positive count and their counts.
    n_samples : int
        Number of successful samples behind the counts.
    traces : sequence of (nodes, times), optional
        Retained sample paths with simulated arrival times.
    """

    def __init__(self, network: RoadNetwork, source, dest, edges, counts, n_samples,
                 traces=(), observation=None, stats=None):
        if n_samples < 1:
            raise EmptyUncertainTrajectory("an uncertain trajectory needs at least one sample")
        self.network = network
        self.source = int(source)
        self.dest = int(dest)
        order = sorted(range(len(edges)), key=lambda i: edges[i])
        self.edges = tuple(int(edges[i]) for i in order)
        self.counts = tuple(int(counts[i]) for i in order)
        if any(c <= 0 or c > n_samples for c in self.counts):
            raise ValueError("edge counts must lie in [1, n_samples]")
        self.n_samples = int(n_samples)
        self.traces = [(tuple(int(v) for v in n), tuple(t)) for n, t in traces]
        self.observation = observation
        self.stats = dict(stats or {})
        self._count = dict(zip(self.edges, self.counts))
        self._out = {}
        self._in = {}
        for e in self.edges:
            u, v = int(network.src[e]), int(network.dst[e])
            self._out.setdefault(u, []).append(e)
            self._in.setdefault(v, []).append(e)
        self.nodes = frozenset({self.source, self.dest} | set(self._out) | set(self._in))

    def __repr__(self):
        return (f"UncertainTrajectory(source={self.source}, dest={self.dest}, "
                f"edges={len(self.edges)}, n_samples={self.n_samples})")

    # -- weights ---------------------------------------------------------------

    def weight(self, e) -> float:
        return self._count.get(int(e), 0) / self.n_samples

    @property
    def weights(self) -> dict:
        return {e: c / self.n_samples for e, c in zip(self.edges, self.counts)}

    def weight_between(self, u, v) -> float:
        e = self.network.edge_between(u, v)
        return 0.0 if e is None else self.weight(e)

    def out_edges(self, v):
        return tuple(self._out.get(v, ()))

    def in_edges(self, v):
        return tuple(self._in.get(v, ()))

    def node_weight(self, v) -> float:
        """Sum of incoming edge weights; 1 for the source."""
        if v not in self.nodes:
            raise KeyError(f"node {v} is not in the uncertain trajectory")
        if v == self.source:
            return 1.0
        return sum(self._count[e] for e in self._in.get(v, ())) / self.n_samples

    def flow_imbalance(self) -> dict:
        """Interior nodes whose incoming and outgoing counts differ (empty when flow is conserved)."""
        out = {}
        for v in self.nodes:
            if v in (self.source, self.dest):
                continue
            cin = sum(self._count[e] for e in self._in.get(v, ()))
            cout = sum(self._count[e] for e in self._out.get(v, ()))
            if cin != cout:
                out[v] = cin - cout
        return out

    # -- path queries ------------------------------------------------------------

    def _step_ratio(self, e):
        u = int(self.network.src[e])
        total = sum(self._count[f] for f in self._out[u])
        return self._count[e] / total

    def trajectory_likelihood(self, path) -> float:
        """Product of each step's weight over the total weight leaving its origin in ``U``."""
        path = [int(v) for v in path]
        if not path or path[0] != self.source or path[-1] != self.dest:
            raise ValueError("path must run from the source to the destination")
        p = 1.0
        for u, v in zip(path[:-1], path[1:]):
            e = self.network.edge_between(u, v)
            if e is None or e not in self._count:
                raise ValueError(f"edge {u}->{v} is not in the uncertain trajectory")
            p *= self._step_ratio(e)
        return p

    def most_likely_trajectory(self):
        """``(path, likelihood)`` of the most likely simple source-to-destination path.

        Costs are negative log step ratios, all non-negative, so a
        shortest-path search yields a simple path. Equal costs go to the
        lexicographically smaller node sequence.
        """
        if self.source == self.dest:
            return [self.source], 1.0
        dst = self.network.dst
        cost = {e: -math.log(self._step_ratio(e)) for e in self.edges}
        settled = set()
        heap = [(0.0, (self.source,))]
        while heap:
            c, path = heapq.heappop(heap)
            u = path[-1]
            if u in settled:
                continue
            settled.add(u)
            if u == self.dest:
                return list(path), self.trajectory_likelihood(path)
            for e in self._out.get(u, ()):
                w = int(dst[e])
                if w not in settled:
                    heapq.heappush(heap, (c + cost[e], path + (w,)))
        raise ValueError("corrupt uncertain trajectory: no path from source to destination")

    def paths(self, limit=100_000) -> list:
        """Every simple source-to-destination path inside ``U``."""
        out = []
        dst = self.network.dst
        path = [self.source]
        seen = {self.source}

        def rec(u):
            if u == self.dest:
                out.append(tuple(path))
                if len(out) > limit:
                    raise RuntimeError(f"more than {limit} paths")
                return
            for e in self._out.get(u, ()):
                w = int(dst[e])
                if w not in seen:
                    seen.add(w)
                    path.append(w)
                    rec(w)
                    path.pop()
                    seen.discard(w)

        rec(self.source)
        return out

    def is_acyclic(self) -> bool:
        indeg = {v: len(self._in.get(v, ())) for v in self.nodes}
        queue = [v for v, d in indeg.items() if d == 0]
        seen = 0
        dst = self.network.dst
        while queue:
            u = queue.pop()
            seen += 1
            for e in self._out.get(u, ()):
                w = int(dst[e])
                indeg[w] -= 1
                if indeg[w] == 0:
                    queue.append(w)
        return seen == len(self.nodes)

    def top_k_edges(self, k):
        """The ``k`` heaviest edges as ``(edge, weight)``, ties broken by edge index."""
        if k < 1:
            raise ValueError("k must be >= 1")
        ranked = sorted(zip(self.edges, self.counts), key=lambda ec: (-ec[1], ec[0]))
        return [(e, c / self.n_samples) for e, c in ranked[:k]]

    # -- time queries ------------------------------------------------------------

    def _require_traces(self):
        if not self.traces:
            raise ValueError("no sample traces were retained")

    def location_at_time(self, t) -> dict:
        """Distribution of the node nearest in time to ``t`` across retained samples."""
        self._require_traces()
        counts = Counter()
        for nodes, times in self.traces:
            best = 0
            best_d = time_distance(t, times[0])
            for i in range(1, len(times)):
                d = time_distance(t, times[i])
                if d < best_d:
                    best, best_d = i, d
            counts[nodes[best]] += 1
        n = len(self.traces)
        return {v: c / n for v, c in sorted(counts.items())}

    def _source_time(self):
        if self.observation is not None:
            return float(self.observation.times[0])
        if self.traces:
            return float(self.traces[0][1][0])
        return 0.0

    def time_at_node(self, v) -> TimeDistribution:
        """Arrival-time samples at ``v``, or at the nearest node of ``U`` when ``v`` is outside it."""
        self._require_traces()
        fallback = False
        if v not in self.nodes:
            cand = sorted(self.nodes)
            d = distances_from(self.network, v, cand)
            v = cand[int(np.argmin(d))]
            fallback = True
        samples = []
        for nodes, times in self.traces:
            for u, t in zip(nodes, times):
                if u == v:
                    samples.append(t)
                    break
        return TimeDistribution(int(v), tuple(samples), self._source_time(), fallback)

    def weighted_spatial_distance(self, t, truth) -> float:
        """Probability-weighted distance (m) between the predicted location at ``t`` and node ``truth``."""
        dist = self.location_at_time(t)
        nodes = list(dist)
        d = distances_from(self.network, truth, nodes)
        return float(sum(dist[v] * d[i] for i, v in enumerate(nodes)))

    # -- serialization -----------------------------------------------------------

    def to_json(self) -> dict:
        net = self.network
        ids = net.node_ids
        node_times = {}
        if self.traces:
            for v in sorted(self.nodes):
                td = self.time_at_node(v)
                node_times[str(ids[v])] = {"mean_t": td.mean, "samples": list(td.samples)}
        doc = {
            "source": ids[self.source],
            "dest": ids[self.dest],
            "n_samples": self.n_samples,
            "edges": [
                {"id": net.edge_ids[e], "src": ids[int(net.src[e])], "dst": ids[int(net.dst[e])],
                 "weight": c / self.n_samples, "count": c}
                for e, c in zip(self.edges, self.counts)
            ],
            "node_times": node_times,
            "traces": [{"nodes": [ids[v] for v in n], "times": list(t)} for n, t in self.traces],
        }
        if self.observation is not None:
            doc["observation"] = [{"node": ids[v], "t": t} for v, t in self.observation.points]
        if self.stats:
            doc["stats"] = self.stats
        return doc

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.dumps() + "\n")

    @classmethod
    def from_json(cls, doc, network: RoadNetwork):
        node = network.node_of
        edges, counts = [], []
        n = int(doc["n_samples"])
        for rec in doc["edges"]:
            e = network.edge_between(node(rec["src"]), node(rec["dst"]))
            if e is None:
                raise ValueError(f"edge {rec['src']!r}->{rec['dst']!r} is not in the network")
            edges.append(e)
            counts.append(int(rec["count"]) if "count" in rec else int(round(rec["weight"] * n)))
        traces = [([node(v) for v in t["nodes"]], t["times"]) for t in doc.get("traces", ())]
        obs = None
        if "observation" in doc:
            pts = doc["observation"]
            obs = Observation(tuple(node(p["node"]) for p in pts), tuple(p["t"] for p in pts))
        return cls(network, node(doc["source"]), node(doc["dest"]), edges, counts, n,
                   traces=traces, observation=obs, stats=doc.get("stats"))

    @classmethod
    def load(cls, path, network: RoadNetwork):
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_json(json.load(f), network)

    def to_geojson(self) -> dict:
        """FeatureCollection of LineStrings carrying ``weight`` properties."""
        net = self.network
        features = []
        for e, c in zip(self.edges, self.counts):
            u, v = int(net.src[e]), int(net.dst[e])
            features.append({
                "type": "Feature",
                "geometry": {"type": "LineString",
                             "coordinates": [[float(net.lon[u]), float(net.lat[u])],
                                             [float(net.lon[v]), float(net.lat[v])]]},
                "properties": {"id": net.edge_ids[e], "src": net.node_ids[u], "dst": net.node_ids[v],
                               "weight": c / self.n_samples},
            })
        return {"type": "FeatureCollection", "features": features}

