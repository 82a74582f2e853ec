"""Directed road networks: loading, adjacency, routing and path enumeration.

Nodes and edges are renumbered to dense integers on load. Every public
function in the package works with these dense indices; the original
identifiers are kept on the network (``node_ids`` / ``edge_ids``) and are
only used again when writing files.
"""

from __future__ import annotations

import csv
import hashlib
import heapq
import io
import json
import math
import os
from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

EARTH_RADIUS_M = 6_371_000.0


class NetworkFormatError(ValueError):
    """Malformed network input; carries the offending position when known."""

    def __init__(self, message, line=None, field=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line = line
        self.field = field


class UnknownNodeError(KeyError):
    pass


@dataclass(frozen=True)
class Node:
    id: int
    lat: float
    lon: float


@dataclass(frozen=True)
class Edge:
    id: int
    p1: int
    p2: int
    length: float


class RoadNetwork:
    """Immutable directed graph with forward and reverse adjacency indexes.

    Parameters
    ----------
    node_ids : sequence
        Original node identifiers, in the order that defines the dense index.
    lat, lon : sequence of float
        Coordinates in degrees, aligned with ``node_ids``.
    edges : sequence of (edge_id, src_id, dst_id, length_m)
        Edge records using the original node identifiers.
    """

    def __init__(self, node_ids, lat, lon, edges):
        self.node_ids = list(node_ids)
        self.index = {}
        for i, nid in enumerate(self.node_ids):
            if nid in self.index:
                raise NetworkFormatError(f"duplicate node id {nid!r}")
            self.index[nid] = i
        self.lat = np.asarray(lat, dtype=float)
        self.lon = np.asarray(lon, dtype=float)
        if len(self.lat) != len(self.node_ids) or len(self.lon) != len(self.node_ids):
            raise NetworkFormatError("coordinate arrays do not match node count")
        for i in range(len(self.node_ids)):
            if not (-90.0 <= self.lat[i] <= 90.0) or not (-180.0 <= self.lon[i] < 180.0):
                raise NetworkFormatError(f"coordinates out of range for node {self.node_ids[i]!r}")

        n = len(self.node_ids)
        self.edge_ids = []
        src, dst, length = [], [], []
        self.edge_index = {}
        seen_edge_ids = set()
        for k, (eid, a, b, ln) in enumerate(edges):
            if a not in self.index:
                raise NetworkFormatError(f"edge {eid!r} references unknown node {a!r}", line=k + 1)
            if b not in self.index:
                raise NetworkFormatError(f"edge {eid!r} references unknown node {b!r}", line=k + 1)
            if eid in seen_edge_ids:
                raise NetworkFormatError(f"duplicate edge id {eid!r}", line=k + 1)
            u, v = self.index[a], self.index[b]
            if u == v:
                raise NetworkFormatError(f"self-loop on edge {eid!r}", line=k + 1)
            if not ln > 0 or not math.isfinite(ln):
                raise NetworkFormatError(f"non-positive length on edge {eid!r}", line=k + 1)
            if (u, v) in self.edge_index:
                raise NetworkFormatError(f"duplicate edge {a!r}->{b!r}", line=k + 1)
            seen_edge_ids.add(eid)
            self.edge_index[(u, v)] = len(src)
            self.edge_ids.append(eid)
            src.append(u)
            dst.append(v)
            length.append(float(ln))
        self.src = np.asarray(src, dtype=np.int64)
        self.dst = np.asarray(dst, dtype=np.int64)
        self.length = np.asarray(length, dtype=float)

        out_adj = [[] for _ in range(n)]
        in_adj = [[] for _ in range(n)]
        for e, (u, v) in enumerate(zip(src, dst)):
            out_adj[u].append(e)
            in_adj[v].append(e)
        self.out_adj = tuple(tuple(a) for a in out_adj)
        self.in_adj = tuple(tuple(a) for a in in_adj)
        self._fingerprint = None

    @property
    def n_nodes(self):
        return len(self.node_ids)

    @property
    def n_edges(self):
        return len(self.edge_ids)

    def __repr__(self):
        return f"RoadNetwork(n_nodes={self.n_nodes}, n_edges={self.n_edges})"

    def node(self, v) -> Node:
        self._check(v)
        return Node(v, float(self.lat[v]), float(self.lon[v]))

    def edge(self, e) -> Edge:
        return Edge(e, int(self.src[e]), int(self.dst[e]), float(self.length[e]))

    def has_node(self, v):
        return isinstance(v, (int, np.integer)) and 0 <= v < self.n_nodes

    def _check(self, v):
        if not self.has_node(v):
            raise UnknownNodeError(v)

    def node_of(self, original_id):
        """Dense index of an original node identifier."""
        try:
            return self.index[original_id]
        except KeyError:
            raise UnknownNodeError(original_id) from None

    def edge_between(self, u, v):
        """Dense edge index of ``u -> v`` or ``None``."""
        return self.edge_index.get((u, v))

    def fingerprint(self) -> bytes:
        """SHA-256 digest of the full structure; identifies the network a model was learned on."""
        if self._fingerprint is None:
            h = hashlib.sha256()
            for i, nid in enumerate(self.node_ids):
                h.update(repr((nid, float(self.lat[i]), float(self.lon[i]))).encode())
            for e, eid in enumerate(self.edge_ids):
                h.update(repr((eid, int(self.src[e]), int(self.dst[e]), float(self.length[e]))).encode())
            self._fingerprint = h.digest()
        return self._fingerprint

    def to_json(self):
        return {
            "nodes": [
                {"id": nid, "lat": float(self.lat[i]), "lon": float(self.lon[i])}
                for i, nid in enumerate(self.node_ids)
            ],
            "edges": [
                {
                    "id": eid,
                    "src": self.node_ids[int(self.src[e])],
                    "dst": self.node_ids[int(self.dst[e])],
                    "length_m": float(self.length[e]),
                }
                for e, eid in enumerate(self.edge_ids)
            ],
        }


def out_edges(net: RoadNetwork, v) -> tuple:
    """Edges leaving ``v``, ordered by edge index."""
    net._check(v)
    return tuple(net.edge(e) for e in net.out_adj[v])


# ---------------------------------------------------------------------------
# I/O


def _parse_id(text):
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        return text


def _open_text(source):
    if isinstance(source, (str, os.PathLike)):
        return open(source, "r", encoding="utf-8", newline="")
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(source.decode("utf-8"))
    if isinstance(source, io.TextIOBase):
        return source
    # assume a binary stream
    return io.TextIOWrapper(source, encoding="utf-8", newline="")


def _read_csv(source, header):
    f = _open_text(source)
    try:
        reader = csv.reader(f)
        try:
            first = next(reader)
        except StopIteration:
            raise NetworkFormatError("empty file", line=1) from None
        if [c.strip() for c in first] != header:
            raise NetworkFormatError(f"expected header {','.join(header)}", line=1)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise NetworkFormatError(f"expected {len(header)} fields, got {len(row)}", line=lineno)
            rows.append((lineno, row))
        return rows
    finally:
        if f is not source:
            f.close()


def _float(text, lineno, field):
    try:
        return float(text)
    except ValueError:
        raise NetworkFormatError(f"not a number: {text!r}", line=lineno, field=field) from None


def load_network(source, edges=None, format="csv") -> RoadNetwork:
    """Load and validate a network.

    ``format="csv"`` reads a nodes file (``node_id,lat,lon``) from ``source``
    and an edges file (``edge_id,src,dst,length_m``) from ``edges``.
    ``format="json"`` reads a single ``{"nodes": [...], "edges": [...]}``
    document from ``source``.
    """
    if format == "json":
        f = _open_text(source)
        try:
            try:
                doc = json.load(f)
            except json.JSONDecodeError as exc:
                raise NetworkFormatError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
        finally:
            if f is not source:
                f.close()
        return network_from_json(doc)
    if format not in ("csv", "csv-pair"):
        raise ValueError(f"unknown network format {format!r}")
    if edges is None:
        raise ValueError("csv format needs both a nodes and an edges source")

    node_ids, lat, lon = [], [], []
    for lineno, row in _read_csv(source, ["node_id", "lat", "lon"]):
        node_ids.append(_parse_id(row[0]))
        lat.append(_float(row[1], lineno, "lat"))
        lon.append(_float(row[2], lineno, "lon"))
    records = []
    for lineno, row in _read_csv(edges, ["edge_id", "src", "dst", "length_m"]):
        records.append((lineno, (_parse_id(row[0]), _parse_id(row[1]), _parse_id(row[2]),
                                 _float(row[3], lineno, "length_m"))))
    try:
        return RoadNetwork(node_ids, lat, lon, [r for _, r in records])
    except NetworkFormatError as exc:
        # re-anchor edge errors on the edges-file line
        if exc.line is not None and exc.line <= len(records):
            raise NetworkFormatError(str(exc).rsplit(" (", 1)[0], line=records[exc.line - 1][0]) from None
        raise


def network_from_json(doc) -> RoadNetwork:
    try:
        nodes = doc["nodes"]
        edges = doc["edges"]
    except (KeyError, TypeError):
        raise NetworkFormatError("expected an object with 'nodes' and 'edges'") from None
    node_ids, lat, lon = [], [], []
    for k, n in enumerate(nodes):
        for key in ("id", "lat", "lon"):
            if key not in n:
                raise NetworkFormatError(f"node record {k} missing key", field=key)
        node_ids.append(n["id"])
        lat.append(float(n["lat"]))
        lon.append(float(n["lon"]))
    records = []
    for k, e in enumerate(edges):
        for key in ("id", "src", "dst", "length_m"):
            if key not in e:
                raise NetworkFormatError(f"edge record {k} missing key", field=key)
        records.append((e["id"], e["src"], e["dst"], float(e["length_m"])))
    return RoadNetwork(node_ids, lat, lon, records)


def read_network(path) -> RoadNetwork:
    """Load from a ``.json`` file or a directory holding ``nodes.csv`` and ``edges.csv``."""
    path = os.fspath(path)
    if os.path.isdir(path):
        return load_network(os.path.join(path, "nodes.csv"), os.path.join(path, "edges.csv"))
    if path.endswith(".json"):
        return load_network(path, format="json")
    raise NetworkFormatError(f"cannot infer network format for {path!r}")


def write_network(net: RoadNetwork, path):
    """Write ``path`` as JSON (``*.json``) or as a ``nodes.csv``/``edges.csv`` directory."""
    path = os.fspath(path)
    if path.endswith(".json"):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(net.to_json(), f)
        return
    os.makedirs(path, exist_ok=True)
    with open(os.path.join(path, "nodes.csv"), "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["node_id", "lat", "lon"])
        for i, nid in enumerate(net.node_ids):
            w.writerow([nid, repr(float(net.lat[i])), repr(float(net.lon[i]))])
    with open(os.path.join(path, "edges.csv"), "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["edge_id", "src", "dst", "length_m"])
        for e, eid in enumerate(net.edge_ids):
            w.writerow([eid, net.node_ids[int(net.src[e])], net.node_ids[int(net.dst[e])],
                        repr(float(net.length[e]))])


# ---------------------------------------------------------------------------
# Geometry


def haversine(a, b) -> float:
    """Great-circle distance in meters between two nodes or ``(lat, lon)`` pairs."""
    lat1, lon1 = (a.lat, a.lon) if isinstance(a, Node) else a
    lat2, lon2 = (b.lat, b.lon) if isinstance(b, Node) else b
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    h = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def node_distance(net: RoadNetwork, u, v) -> float:
    return haversine((net.lat[u], net.lon[u]), (net.lat[v], net.lon[v]))


def distances_from(net: RoadNetwork, v, nodes) -> np.ndarray:
    """Vectorised haversine from node ``v`` to each of ``nodes``."""
    nodes = np.asarray(nodes, dtype=np.int64)
    p1 = math.radians(net.lat[v])
    p2 = np.radians(net.lat[nodes])
    dp = p2 - p1
    dl = np.radians(net.lon[nodes] - net.lon[v])
    h = np.sin(dp / 2) ** 2 + math.cos(p1) * np.cos(p2) * np.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(h)))


# ---------------------------------------------------------------------------
# Routing


def hop_distances(net: RoadNetwork, src, reverse=False) -> np.ndarray:
    """BFS hop counts from ``src`` (to ``src`` when ``reverse``); -1 when unreachable."""
    net._check(src)
    dist = np.full(net.n_nodes, -1, dtype=np.int64)
    dist[src] = 0
    adj, ends = (net.in_adj, net.src) if reverse else (net.out_adj, net.dst)
    q = deque([src])
    while q:
        u = q.popleft()
        for e in adj[u]:
            w = int(ends[e])
            if dist[w] < 0:
                dist[w] = dist[u] + 1
                q.append(w)
    return dist


def hop_count(net: RoadNetwork, src, dst):
    """Minimum number of edges from ``src`` to ``dst`` or ``None``."""
    net._check(dst)
    d = hop_distances(net, src)[dst]
    return None if d < 0 else int(d)


def shortest_path(net: RoadNetwork, src, dst, edge_cost=None):
    """Minimum-cost directed path as ``(nodes, cost)``, or ``None`` if unreachable.

    ``src == dst`` gives the empty path ``([], 0.0)``.

    ``edge_cost`` is an array indexed by edge or a callable ``edge -> cost``;
    edge lengths are used when omitted. Ties are broken towards the
    lexicographically smallest node sequence.
    """
    net._check(src)
    net._check(dst)
    if edge_cost is None:
        cost = net.length
    elif callable(edge_cost):
        cost = [edge_cost(e) for e in range(net.n_edges)]
    else:
        cost = edge_cost
    if src == dst:
        return [], 0.0
    settled = set()
    heap = [(0.0, (src,))]
    while heap:
        c, path = heapq.heappop(heap)
        u = path[-1]
        if u in settled:
            continue
        settled.add(u)
        if u == dst:
            return list(path), c
        for e in net.out_adj[u]:
            w = int(net.dst[e])
            if w in settled:
                continue
            ce = float(cost[e])
            if ce < 0:
                raise ValueError("negative edge cost")
            heapq.heappush(heap, (c + ce, path + (w,)))
    return None


def path_edges(net: RoadNetwork, nodes: Sequence[int]) -> list:
    """Edge indices along a node sequence; raises ``ValueError`` on a missing edge."""
    out = []
    for u, v in zip(nodes[:-1], nodes[1:]):
        e = net.edge_index.get((u, v))
        if e is None:
            raise ValueError(f"no edge {u}->{v}")
        out.append(e)
    return out


def enumerate_acyclic_paths(net: RoadNetwork, waypoints, max_hops=None, limit=None) -> set:
    """All simple paths visiting ``waypoints`` in order with at most ``max_hops`` edges.

    The default hop budget is 2.5 times the shortest hop count through the
    waypoints. ``limit`` bounds the number of returned paths (``RuntimeError``
    when exceeded) and protects callers from combinatorial blow-up.
    """
    waypoints = list(waypoints)
    if not waypoints:
        raise ValueError("need at least one waypoint")
    for w in waypoints:
        net._check(w)
    if len(set(waypoints)) != len(waypoints):
        return set()
    if len(waypoints) == 1:
        return {(waypoints[0],)}
    # reverse BFS per segment target gives an admissible lower bound for pruning
    to_target = [hop_distances(net, w, reverse=True) for w in waypoints[1:]]
    if max_hops is None:
        total = 0
        for i, d in enumerate(to_target):
            h = d[waypoints[i]]
            if h < 0:
                return set()
            total += int(h)
        max_hops = int(math.floor(2.5 * total))
    if max_hops < 0:
        raise ValueError("max_hops must be >= 0")
    remaining_min = [0] * len(waypoints)
    for i in range(len(waypoints) - 2, -1, -1):
        h = to_target[i][waypoints[i]]
        if h < 0:
            return set()
        remaining_min[i] = remaining_min[i + 1] + int(h)

    results = set()
    later = [set(waypoints[i + 2:]) for i in range(len(waypoints) - 1)]
    path = [waypoints[0]]
    visited = {waypoints[0]}

    def extend(seg):
        u = path[-1]
        target = waypoints[seg + 1]
        dist = to_target[seg]
        used = len(path) - 1
        for e in net.out_adj[u]:
            w = int(net.dst[e])
            if w in visited or w in later[seg]:
                continue
            dw = dist[w]
            if dw < 0 or used + 1 + dw + remaining_min[seg + 1] > max_hops:
                continue
            path.append(w)
            visited.add(w)
            if w == target:
                if seg + 1 == len(waypoints) - 1:
                    results.add(tuple(path))
                    if limit is not None and len(results) > limit:
                        raise RuntimeError(f"more than {limit} paths")
                else:
                    extend(seg + 1)
            else:
                extend(seg)
            path.pop()
            visited.discard(w)

    extend(0)
    return results


def is_simple_path(net: RoadNetwork, nodes: Sequence[int]) -> bool:
    if len(set(nodes)) != len(nodes):
        return False
    return all((u, v) in net.edge_index for u, v in zip(nodes[:-1], nodes[1:]))
