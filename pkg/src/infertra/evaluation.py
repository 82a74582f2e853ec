"""Accuracy of inferred trajectories: weighted precision/recall, cross-validation, baselines and query errors."""

from __future__ import annotations

import csv
import json
import logging
import random
from dataclasses import dataclass, field, replace

import numpy as np

from .inference import RwrConfig, UnreachableError, infer
from .network import distances_from, path_edges, shortest_path
from .nmm import NetworkMobilityModel
from .trajectory import Trajectory, downsample, time_distance
from .uncertain import UncertainTrajectory

log = logging.getLogger(__name__)

BASELINES = ("SP", "STP", "MLT")


def _edge_weights(pred, net):
    if isinstance(pred, UncertainTrajectory):
        return pred.weights
    if isinstance(pred, dict):
        return {int(e): float(w) for e, w in pred.items() if w > 0}
    nodes = pred.nodes if isinstance(pred, Trajectory) else list(pred)
    return {e: 1.0 for e in path_edges(net, nodes)}


def precision_recall(truth, pred, net=None, return_flag=False):
    """Weighted precision and recall of ``pred`` against the edges of ``truth``.

    ``pred`` is an :class:`UncertainTrajectory`, an ``{edge: weight}`` dict,
    or a node path (weight 1 on each edge). An empty prediction scores 0 and
    sets the flag returned when ``return_flag`` is true.
    """
    if net is None:
        if not isinstance(pred, UncertainTrajectory):
            raise ValueError("a network is needed to score a path prediction")
        net = pred.network
    nodes = truth.nodes if isinstance(truth, Trajectory) else list(truth)
    true_edges = set(path_edges(net, nodes))
    weights = _edge_weights(pred, net)
    total = sum(weights.values())
    common = sum(w for e, w in weights.items() if e in true_edges)
    empty = total <= 0
    precision = 0.0 if empty else common / total
    recall = common / len(true_edges) if true_edges else 0.0
    if return_flag:
        return precision, recall, empty
    return precision, recall


def f_score(precision, recall) -> float:
    s = precision + recall
    return 0.0 if s <= 0 else 2 * precision * recall / s


def run_baseline(net, model, obs, which, u=None, cfg=None) -> list:
    """Certain path predicted by a baseline: stitched shortest (``SP``) or fastest (``STP``) paths, or ``MLT``."""
    which = which.upper()
    if which == "MLT":
        if u is None:
            u = infer(model, obs, cfg)
        return u.most_likely_trajectory()[0]
    if which == "SP":
        cost = net.length
    elif which == "STP":
        # mean historical traversal time, independent of time of day
        durations = model.durations()
        cost = [sum(d) / len(d) for d in durations]
    else:
        raise ValueError(f"unknown baseline {which!r}")
    nodes = [obs.nodes[0]]
    for (v1, _), (v2, _) in obs.pairs():
        res = shortest_path(net, v1, v2, cost)
        if res is None:
            raise ValueError(f"no path from {net.node_ids[v1]!r} to {net.node_ids[v2]!r}")
        nodes.extend(res[0][1:])
    return nodes


def location_query_eval(net, truth, u, protocol="middle") -> float:
    """Spatial error (m) of the location predicted for one true point that was not observed.

    ``protocol`` is ``"middle"`` (the unobserved point nearest the middle of
    the trajectory) or an integer point index.
    """
    i = _query_index(truth, u.observation, protocol)
    if i is None:
        return 0.0
    return u.weighted_spatial_distance(truth.times[i], truth.nodes[i])


def _query_index(truth, obs, protocol="middle"):
    if isinstance(protocol, int):
        return protocol
    observed = set(obs.nodes) if obs is not None else {truth.nodes[0], truth.nodes[-1]}
    hidden = [i for i, v in enumerate(truth.nodes) if v not in observed]
    if not hidden:
        return None
    mid = (len(truth.nodes) - 1) / 2
    return min(hidden, key=lambda i: (abs(i - mid), i))


def time_query_eval(truth, u, protocol="middle"):
    """Error (s) of the mean arrival time predicted at one unobserved true node."""
    i = _query_index(truth, u.observation, protocol)
    if i is None:
        return 0.0
    td = u.time_at_node(truth.nodes[i])
    if td.mean is None:
        return None
    return time_distance(td.mean, truth.times[i])


def node_probability_vs_distance(net, truths, predictions, spatial_bins=None, temporal_bins=None) -> dict:
    """Mean node weight of true nodes by spatial and temporal distance to the nearest observed point.

    Nodes missing from a prediction count as weight 0. Returns
    ``{"spatial": [...], "temporal": [...]}`` with one
    ``{"lo", "hi", "p", "n"}`` record per bucket; the first bucket holds
    distance 0 only.
    """
    if not truths:
        raise ValueError("need at least one scored trajectory")
    spatial_bins = spatial_bins if spatial_bins is not None else [0, 500, 1000, 2000, 4000, 8000]
    temporal_bins = temporal_bins if temporal_bins is not None else [0, 60, 180, 300, 600, 1200]
    rows_s, rows_t = [], []
    for truth, u in zip(truths, predictions):
        obs = u.observation
        onodes = list(obs.nodes)
        for v, t in zip(truth.nodes, truth.times):
            w = u.node_weight(v) if v in u.nodes else 0.0
            ds = float(distances_from(net, v, onodes).min())
            dt = min(time_distance(t, s) for s in obs.times)
            if v in onodes:
                ds = dt = 0.0
            rows_s.append((ds, w))
            rows_t.append((dt, w))
    return {"spatial": _bucket(rows_s, spatial_bins), "temporal": _bucket(rows_t, temporal_bins)}


def _bucket(rows, edges):
    bounds = [(0.0, 0.0)] + list(zip(edges[:-1], edges[1:])) + [(edges[-1], float("inf"))]
    out = []
    for k, (lo, hi) in enumerate(bounds):
        sel = [w for d, w in rows if (d == 0 if k == 0 else lo < d <= hi)]
        if sel:
            out.append({"lo": float(lo), "hi": float(hi), "p": float(np.mean(sel)), "n": len(sel)})
    return out


# ---------------------------------------------------------------------------
# Reports


@dataclass
class EvalReport:
    """Per-trajectory rows and per-interval summaries of a cross-validation run."""

    rows: list = field(default_factory=list)
    summary: list = field(default_factory=list)
    params: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"params": self.params, "summary": self.summary, "rows": self.rows}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1)

    def save(self, prefix):
        """Write ``<prefix>.json``, ``<prefix>_rows.csv`` and ``<prefix>_summary.csv``."""
        with open(f"{prefix}.json", "w", encoding="utf-8") as f:
            f.write(self.dumps() + "\n")
        for name, table in (("rows", self.rows), ("summary", self.summary)):
            with open(f"{prefix}_{name}.csv", "w", newline="", encoding="utf-8") as f:
                if not table:
                    continue
                names = list(dict.fromkeys(k for row in table for k in row))
                w = csv.DictWriter(f, fieldnames=names)
                w.writeheader()
                w.writerows(table)

    def mean(self, column, si=None):
        vals = [r[column] for r in self.rows if (si is None or r["si"] == si) and r[column] is not None]
        return float(np.mean(vals)) if vals else float("nan")


def _summarize(rows, si, columns):
    sel = [r for r in rows if r["si"] == si]
    out = {"si": si, "n": len(sel)}
    for c in columns:
        vals = np.array([r[c] for r in sel if r.get(c) is not None], dtype=float)
        if len(vals) == 0:
            continue
        out[f"{c}_mean"] = float(vals.mean())
        if c in ("loc_error_m", "time_error_s", "samples"):
            out[f"{c}_p50"] = float(np.percentile(vals, 50))
            out[f"{c}_p90"] = float(np.percentile(vals, 90))
    return out


def _baseline_f(net, model, obs, which, truth, u=None):
    path = run_baseline(net, model, obs, which, u=u)
    return f_score(*precision_recall(truth, path, net))


def fold_assignment(n, folds, seed=0):
    """Fold index per trajectory from a seeded shuffle."""
    if folds < 2:
        raise ValueError("need at least two folds")
    if n < folds:
        raise ValueError(f"{n} trajectories cannot fill {folds} folds")
    order = list(range(n))
    random.Random(seed).shuffle(order)
    fold = [0] * n
    for k, i in enumerate(order):
        fold[i] = k % folds
    return fold


def evaluate(net, model, trajectories, si, cfg=None, baselines=BASELINES, queries=True,
             return_predictions=False):
    """Score inference on held-out ``trajectories`` downsampled at interval ``si``."""
    cfg = cfg or RwrConfig()
    rows, preds = [], []
    for k, truth in enumerate(trajectories):
        obs = downsample(truth, si)
        row = {"id": truth.id, "si": si, "points": len(truth.nodes), "observed": len(obs.nodes)}
        try:
            u = infer(model, obs, replace(cfg, seed=cfg.seed + k))
        except UnreachableError:
            # the model cannot connect the observation: nothing is predicted
            row.update({"precision": 0.0, "recall": 0.0, "f": 0.0, "empty": True, "infeasible": True,
                        "samples": 0})
            for b in baselines:
                row[f"f_{b.lower()}"] = None if b.upper() == "MLT" else _baseline_f(net, model, obs, b, truth)
            if queries:
                row["loc_error_m"] = row["time_error_s"] = None
            rows.append(row)
            if return_predictions:
                preds.append(None)
            continue
        p, r, empty = precision_recall(truth, u, return_flag=True)
        row.update({"precision": p, "recall": r, "f": f_score(p, r), "empty": empty, "infeasible": False,
                    "samples": u.n_samples})
        for b in baselines:
            row[f"f_{b.lower()}"] = _baseline_f(net, model, obs, b, truth, u)
        if queries:
            row["loc_error_m"] = location_query_eval(net, truth, u)
            row["time_error_s"] = time_query_eval(truth, u)
        rows.append(row)
        if return_predictions:
            preds.append(u)
    return (rows, preds) if return_predictions else rows


def kfold_eval(net, db, folds=10, si=900, cfg=None, seed=0, baselines=BASELINES, queries=True,
               **model_params) -> EvalReport:
    """Cross-validated accuracy: learn on ``folds - 1`` folds, infer the held-out fold per interval.

    ``si`` is one sampling interval or a list of them. ``model_params`` go to
    :class:`NetworkMobilityModel`.
    """
    cfg = cfg or RwrConfig(seed=seed)
    sis = list(si) if isinstance(si, (list, tuple)) else [si]
    db = list(db)
    fold = fold_assignment(len(db), folds, seed)
    rows = []
    for f in range(folds):
        train = [t for t, k in zip(db, fold) if k != f]
        test = [t for t, k in zip(db, fold) if k == f]
        model = NetworkMobilityModel(net, **model_params).fit(train)
        for s in sis:
            fr = evaluate(net, model, test, s, replace(cfg, seed=cfg.seed + 100_003 * f), baselines, queries)
            for r in fr:
                r["fold"] = f
            rows.extend(fr)
        log.info("fold %d/%d done", f + 1, folds)
    columns = ["precision", "recall", "f"] + [f"f_{b.lower()}" for b in baselines]
    if queries:
        columns += ["loc_error_m", "time_error_s"]
    columns.append("samples")
    order = {t.id: i for i, t in enumerate(db)}
    rows.sort(key=lambda r: (sis.index(r["si"]), order[r["id"]]))
    summary = [_summarize(rows, s, columns) for s in sis]
    params = {"folds": folds, "si": sis, "seed": seed, "baselines": list(baselines), "rwr": cfg.to_dict(),
              "model": {k: v for k, v in model_params.items()}}
    return EvalReport(rows, summary, params)
