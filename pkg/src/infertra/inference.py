"""Online inference: destination-biased random walks with restarts over a mobility model.

Each consecutive pair of observed points is connected by repeated walks on
the model. A walk picks the next edge in proportion to the model affinity
given its recent history and its simulated clock, never revisiting a node;
once the walk has used up the observed time gap it restarts with growing
probability. Only walks that reach the next observed node are kept. Edge
weights of the result are the fraction of kept samples that use each edge.
"""

from __future__ import annotations

import logging
import math
import os
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator

from . import nmm as nmm_mod
from . import _kernel
from .network import hop_distances
from .trajectory import Observation, forward_gap
from .uncertain import UncertainTrajectory
from .validation import check_is_fitted, check_network, check_observation, check_observations

log = logging.getLogger(__name__)


class UnreachableError(RuntimeError):
    """No walk under the model connects an observed pair."""

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class DeadEnd(Exception):
    """Every out-edge of the current node would close a cycle; the walk must restart."""


@dataclass(frozen=True)
class RwrConfig:
    """Sampling and convergence settings.

    ``tau_mode="zero"`` accepts every walk that reaches its target.
    ``"temporal"`` is an extension that rejects an arrival with probability
    ``1 - exp(-|elapsed - X|/X)``, where ``X`` is the observed gap.
    """

    tau_mode: str = "zero"
    tolerance: float = 1e-3
    window: int = 3
    batch_size: int = 100
    min_samples: int = 1000
    max_samples: int = 100_000
    max_steps_factor: float = 10.0
    max_attempts: int = 50_000
    max_traces: int = 10_000
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        if self.tau_mode not in ("zero", "temporal"):
            raise ValueError(f"unknown tau_mode {self.tau_mode!r}")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        for name in ("window", "batch_size", "min_samples", "max_samples", "max_attempts", "max_traces"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.max_samples < self.min_samples:
            raise ValueError("max_samples must be >= min_samples")
        if not self.max_steps_factor > 0:
            raise ValueError("max_steps_factor must be positive")
        if self.n_jobs < 0:
            raise ValueError("n_jobs must be >= 0")

    def to_dict(self):
        return asdict(self)


def restart_probability(t_elapsed, x_t) -> float:
    """Probability of abandoning a walk that has run ``t_elapsed`` seconds against an observed gap ``x_t``."""
    if not x_t > 0:
        raise ValueError("observed gap must be positive")
    return 1.0 - math.exp(-max(0.0, t_elapsed - x_t) / x_t)


def _tau(t_elapsed, x_t):
    return 1.0 - math.exp(-abs(t_elapsed - x_t) / x_t)


@dataclass
class WalkState:
    """A walk in progress: ``nodes`` is the simple path walked so far."""

    nodes: tuple
    clock: float
    elapsed: float
    origin: tuple
    target: tuple
    edges: tuple = field(default=())

    @property
    def current(self):
        return self.nodes[-1]


def transition_distribution(model, state: WalkState) -> dict:
    """``{edge: probability}`` for the next step of ``state``; restart holds the remaining mass.

    Raises :class:`DeadEnd` when no out-edge avoids a cycle.
    """
    check_is_fitted(model, "table_")
    x_t = forward_gap(state.origin[1], state.target[1])
    r = restart_probability(state.elapsed, x_t)
    visited = set(state.nodes)
    cur = state.current
    cands = [e for e in _out_edges(model)[cur] if int(model.edge_dst_[e]) not in visited]
    if not cands:
        raise DeadEnd(cur)
    weights = [model.affinity(e, state.nodes, state.clock) for e in cands]
    if max(weights) <= model.epsilon:
        weights = [1.0] * len(cands)
    total = sum(weights)
    return {e: (1.0 - r) * w / total for e, w in zip(cands, weights)}


def _out_edges(model):
    adj = getattr(model, "_out_adj", None)
    if adj is None:
        n = int(max(model.edge_src_.max(initial=-1), model.edge_dst_.max(initial=-1)) + 1)
        if model.network is not None:
            n = model.network.n_nodes
        lists = [[] for _ in range(n)]
        for e, u in enumerate(model.edge_src_):
            lists[int(u)].append(e)
        adj = tuple(tuple(a) for a in lists)
        model._out_adj = adj
    return adj


class _Compiled:
    """Flat arrays of a fitted model, as consumed by the compiled sampler."""

    def __init__(self, model):
        net = model.network
        self.m = int(model.order)
        self.eps = float(model.epsilon)
        order = np.argsort(net.src, kind="stable")
        self.out_ptr = np.zeros(net.n_nodes + 1, dtype=np.int64)
        np.add.at(self.out_ptr, net.src + 1, 1)
        self.out_ptr = np.cumsum(self.out_ptr)
        self.out_edge = order.astype(np.int64)
        self.out_dst = net.dst[order].astype(np.int64)
        self.dur = np.array(model.durations(), dtype=np.float64).reshape(net.n_edges, -1)
        hists = sorted(model.table_)
        self.keys = np.full((len(hists), self.m), -1, dtype=np.int64)
        self.klen = np.zeros(len(hists), dtype=np.int64)
        self.nbins = np.zeros(len(hists), dtype=np.int64)
        self.row_ptr = np.zeros(len(hists) + 1, dtype=np.int64)
        ent_next, ent_val, vals = [], [], []
        for i, h in enumerate(hists):
            self.keys[i, :len(h)] = h
            self.klen[i] = len(h)
            b, row = model.table_[h]
            self.nbins[i] = b
            for nxt in sorted(row):
                ent_next.append(nxt)
                ent_val.append(len(vals))
                vals.extend(row[nxt])
            self.row_ptr[i + 1] = len(ent_next)
        self.ent_next = np.array(ent_next, dtype=np.int64)
        self.ent_val = np.array(ent_val, dtype=np.int64)
        self.vals = np.array(vals, dtype=np.float64)
        size = 1
        while size < 2 * max(1, len(hists)):
            size *= 2
        self.table = _kernel.build_table(self.keys, self.klen, size)

    def args(self):
        return (self.out_ptr, self.out_dst, self.out_edge, self.dur, self.m, self.eps, self.keys, self.klen,
                self.table, self.nbins, self.row_ptr, self.ent_next, self.ent_val, self.vals)


def _compiled(model):
    c = getattr(model, "_compiled", None)
    if c is None:
        c = _Compiled(model)
        model._compiled = c
    return c


class _Sampler:
    """Sampling state for one observation: per-pair targets, caps and distance tables."""

    def __init__(self, model, obs: Observation, cfg: RwrConfig):
        net = model.network
        self.cfg = cfg
        self.model_args = _compiled(model).args()
        v1s, t1s, v2s, gaps, caps, dists = [], [], [], [], [], []
        for i, ((v1, t1), (v2, t2)) in enumerate(obs.pairs()):
            dist = hop_distances(net, v2, reverse=True)
            if dist[v1] < 0:
                raise UnreachableError(f"observation pair {i} ({net.node_ids[v1]!r} -> {net.node_ids[v2]!r}) "
                                       "is not connected in the network", pair=i)
            gap = forward_gap(t1, t2)
            if gap <= 0:
                raise ValueError(f"observation pair {i} has no time gap")
            v1s.append(v1)
            t1s.append(float(t1))
            v2s.append(v2)
            gaps.append(float(gap))
            caps.append(max(1, int(math.ceil(cfg.max_steps_factor * int(dist[v1])))))
            dists.append(dist)
        self.pairs = (np.array(v1s, dtype=np.int64), np.array(t1s), np.array(v2s, dtype=np.int64),
                      np.array(gaps), np.array(caps, dtype=np.int64), np.array(dists, dtype=np.int64))
        self.node_ids = net.node_ids

    def batch(self, index, size=None):
        """Samples of batch ``index`` as ``(nodes, times, edges, ptr, attempts, rejected)`` arrays."""
        size = self.cfg.batch_size if size is None else size
        seed = batch_seed(self.cfg.seed, index) & 0xFFFFFFFF
        status, nodes, times, edges, ptr, attempts, rejected = _kernel.batch(
            seed, size, *self.pairs, self.cfg.tau_mode == "temporal", self.cfg.max_attempts, *self.model_args)
        if status == -1_000_000:
            raise UnreachableError("no acyclic concatenation of pair walks found "
                                   f"within {self.cfg.max_attempts} attempts")
        if status < 0:
            i = -status - 1
            v1, v2 = int(self.pairs[0][i]), int(self.pairs[2][i])
            raise UnreachableError(f"no walk reached the target of observation pair {i} "
                                   f"({self.node_ids[v1]!r} -> {self.node_ids[v2]!r}) within "
                                   f"{self.cfg.max_attempts} attempts", pair=i)
        n = ptr[-1]
        return nodes[:n], times[:n], edges[:n - size], ptr, int(attempts), int(rejected)


def batch_seed(seed, index) -> int:
    """Independent, schedule-free seed for batch ``index``."""
    state = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int(index)]).generate_state(2, np.uint32)
    return int(state[0]) << 32 | int(state[1])


def sample_trajectory(model, s1, s2, cfg=None, rng=None):
    """One walk from point ``s1`` to point ``s2`` as ``(nodes, times)``.

    ``s1`` and ``s2`` are ``(node, time)`` pairs. Raises
    :class:`UnreachableError` when every attempt fails.
    """
    cfg = cfg or RwrConfig()
    for v in (s1[0], s2[0]):
        if not model.network.has_node(v):
            raise KeyError(v)
    if s1[0] == s2[0]:
        raise ValueError("endpoints must differ")
    sampler = _Sampler(model, Observation((s1[0], s2[0]), (s1[1], s2[1])), cfg)
    index = 0 if rng is None else rng.getrandbits(31)
    nodes, times, _, _, _, _ = sampler.batch(index, size=1)
    return [int(v) for v in nodes], [float(t) for t in times]


# -- parallel batches -----------------------------------------------------------

_WORKER = None


def _init_worker(sampler):
    global _WORKER
    _WORKER = sampler


def _worker_batch(index):
    return _WORKER.batch(index)


class _Reservoir:
    def __init__(self, capacity, seed):
        self.capacity = capacity
        self.items = []
        self.seen = 0
        self.rng = random.Random(batch_seed(seed, -1 & 0xFFFFFFFF))

    def add(self, nodes, times, a, b):
        self.seen += 1
        if len(self.items) < self.capacity:
            self.items.append((nodes[a:b].tolist(), times[a:b].tolist()))
        else:
            j = int(self.rng.random() * self.seen)
            if j < self.capacity:
                self.items[j] = (nodes[a:b].tolist(), times[a:b].tolist())


def infer(model, obs, cfg=None) -> UncertainTrajectory:
    """Uncertain trajectory for observation ``obs`` under ``model``."""
    check_is_fitted(model, "table_")
    cfg = cfg or RwrConfig()
    net = model.network
    check_network(net)
    obs = check_observation(net, obs)
    sampler = _Sampler(model, obs, cfg)

    counts = np.zeros(net.n_edges, dtype=np.int64)
    total = 0
    prev = np.zeros(net.n_edges)
    stable = 0
    batches = attempts = rejected = 0
    reservoir = _Reservoir(cfg.max_traces, cfg.seed)
    converged = False
    n_jobs = cfg.n_jobs or os.cpu_count() or 1

    def consume(result):
        nonlocal total, attempts, rejected, batches
        nodes, times, edges, ptr, a, rj = result
        attempts += a
        rejected += rj
        batches += 1
        counts[:] += np.bincount(edges, minlength=len(counts))
        for k in range(len(ptr) - 1):
            reservoir.add(nodes, times, ptr[k], ptr[k + 1])
        total += len(ptr) - 1

    def check():
        nonlocal prev, stable, converged
        marg = counts / total
        change = float(np.max(np.abs(marg - prev))) if len(marg) else 0.0
        prev = marg
        if total >= cfg.min_samples and change < cfg.tolerance:
            stable += 1
        else:
            stable = 0
        if stable >= cfg.window:
            converged = True
        return converged or total >= cfg.max_samples

    if n_jobs <= 1:
        b = 0
        while True:
            consume(sampler.batch(b))
            b += 1
            if check():
                break
    else:
        with ProcessPoolExecutor(n_jobs, initializer=_init_worker, initargs=(sampler,)) as pool:
            b = 0
            done = False
            while not done:
                futures = [pool.submit(_worker_batch, b + k) for k in range(n_jobs)]
                b += n_jobs
                for fut in futures:
                    if done:
                        fut.cancel()
                        continue
                    consume(fut.result())
                    if check():
                        done = True

    log.info("inference: %d samples in %d batches, %d walk attempts, converged=%s",
             total, batches, attempts, converged)
    used = np.flatnonzero(counts)
    o = obs
    return UncertainTrajectory(
        network=net,
        source=o.nodes[0],
        dest=o.nodes[-1],
        edges=[int(e) for e in used],
        counts=[int(counts[e]) for e in used],
        n_samples=total,
        traces=reservoir.items,
        observation=o,
        stats={"batches": batches, "attempts": attempts, "rejected": rejected,
               "converged": converged, "samples": total},
    )


class TrajectoryInferer(BaseEstimator):
    """Learn a mobility model from trajectories and infer uncertain trajectories from observations.

    ``fit`` takes fully observed trajectories; ``predict`` takes
    observations and returns one :class:`UncertainTrajectory` each.
    """

    def __init__(self, network=None, order=nmm_mod.DEFAULT_ORDER, delta=nmm_mod.DEFAULT_DELTA,
                 epsilon=nmm_mod.DEFAULT_EPSILON, n_bins=None, tau_mode="zero", tolerance=1e-3,
                 window=3, batch_size=100, min_samples=1000, max_samples=100_000,
                 max_steps_factor=10.0, max_attempts=50_000, max_traces=10_000,
                 random_state=0, n_jobs=1):
        self.network = network
        self.order = order
        self.delta = delta
        self.epsilon = epsilon
        self.n_bins = n_bins
        self.tau_mode = tau_mode
        self.tolerance = tolerance
        self.window = window
        self.batch_size = batch_size
        self.min_samples = min_samples
        self.max_samples = max_samples
        self.max_steps_factor = max_steps_factor
        self.max_attempts = max_attempts
        self.max_traces = max_traces
        self.random_state = random_state
        self.n_jobs = n_jobs

    def config(self) -> RwrConfig:
        return RwrConfig(tau_mode=self.tau_mode, tolerance=self.tolerance, window=self.window,
                         batch_size=self.batch_size, min_samples=self.min_samples,
                         max_samples=self.max_samples, max_steps_factor=self.max_steps_factor,
                         max_attempts=self.max_attempts, max_traces=self.max_traces,
                         seed=self.random_state, n_jobs=self.n_jobs)

    def fit(self, X, y=None):
        self.config()
        self.model_ = nmm_mod.NetworkMobilityModel(
            self.network, order=self.order, delta=self.delta, epsilon=self.epsilon, n_bins=self.n_bins,
        ).fit(X)
        return self

    @classmethod
    def from_model(cls, model, **params):
        est = cls(network=model.network, order=model.order, delta=model.delta,
                  epsilon=model.epsilon, n_bins=model.n_bins, **params)
        est.model_ = model
        return est

    def predict(self, X) -> list:
        check_is_fitted(self, "model_")
        cfg = self.config()
        return [infer(self.model_, o, replace(cfg, seed=cfg.seed + i))
                for i, o in enumerate(check_observations(self.network, X))]

    def score(self, X, y):
        """Mean F-score of predictions for observations ``X`` against true trajectories ``y``."""
        from .evaluation import f_score, precision_recall

        scores = []
        for u, truth in zip(self.predict(X), y):
            p, r = precision_recall(truth, u, self.network)
            scores.append(f_score(p, r))
        return float(np.mean(scores))
