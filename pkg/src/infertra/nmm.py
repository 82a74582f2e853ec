"""Network Mobility Model: time-binned m-history edge affinities and edge speeds.

For every m-history ``H`` (a simple path of at most ``m`` nodes) and every
continuation edge ``e`` leaving the last node of ``H``, the model stores the
fraction of historical trajectories that follow ``H`` with ``e``, among the
trajectories that follow ``H`` with any edge. The fraction is measured in
time windows of width ``delta`` slid over the day in steps of ``stride``;
the resulting per-window series is compacted into equal time-of-day bins
whose count follows the Freedman-Diaconis rule.
"""

from __future__ import annotations

import io
import logging
import math
import os
import struct
import zlib
from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .trajectory import DAY, unwrap_times
from .validation import check_is_fitted, check_network, check_trajectories

log = logging.getLogger(__name__)

DEFAULT_ORDER = 3
DEFAULT_DELTA = 1800
DEFAULT_EPSILON = 1e-6
DEFAULT_STRIDE = 60
DEFAULT_SPEED = 30 / 3.6  # m/s, used for edges never traversed in the training data
DEFAULT_SPEED_BINS = 24
MAX_BINS = 48

MAGIC = b"NMM1"
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


class FingerprintMismatch(ModelFormatError):
    pass


# ---------------------------------------------------------------------------
# Window layout and Freedman-Diaconis binning


def window_bounds(delta, stride):
    """Start/end seconds of the sliding windows; the last window is stretched to midnight."""
    n = max(1, int((DAY - delta) // stride))
    starts = np.arange(n, dtype=float) * stride
    ends = starts + delta
    ends[-1] = max(ends[-1], DAY)
    return starts, ends


def window_centers(delta, stride):
    starts, _ = window_bounds(delta, stride)
    return starts + delta / 2.0


def fd_bin_count(series, max_bins=MAX_BINS) -> int:
    """Freedman-Diaconis bin count ``ceil(range / w)`` with ``w = 2 IQR / n^(1/3)``."""
    series = np.asarray(series, dtype=float)
    n = len(series)
    if n == 0:
        raise ValueError("empty series")
    if n == 1:
        return 1
    q75, q25 = np.percentile(series, [75, 25])
    iqr = q75 - q25
    if iqr <= 0:
        return 1
    width = 2.0 * iqr / n ** (1.0 / 3.0)
    count = math.ceil((series.max() - series.min()) / width)
    return int(min(max(count, 1), max_bins))


@dataclass(frozen=True)
class AffinityProfile:
    """Affinity values over ``n_bins`` equal bins partitioning the day."""

    values: tuple
    epsilon: float = DEFAULT_EPSILON

    @property
    def n_bins(self):
        return len(self.values)

    def bins(self):
        w = DAY / self.n_bins
        return [((i * w, (i + 1) * w), v) for i, v in enumerate(self.values)]

    def at(self, t):
        return self.values[_bin_index(t, self.n_bins)]


def _bin_index(t, n_bins):
    i = int((t % DAY) * n_bins / DAY)
    return i if i < n_bins else n_bins - 1


def _binned_means(num, den, centers, n_bins):
    """Pooled ratio ``sum(num)/sum(den)`` per time bin; bins without windows get the all-day ratio."""
    idx = np.minimum((centers * n_bins / DAY).astype(np.int64), n_bins - 1)
    num_b = np.bincount(idx, weights=num, minlength=n_bins)
    den_b = np.bincount(idx, weights=den, minlength=n_bins)
    overall = num.sum() / den.sum()
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den_b > 0, num_b / np.where(den_b > 0, den_b, 1), overall)
    return out


def bin_profile(series, n=None, centers=None, weights=None, n_bins=None,
                epsilon=DEFAULT_EPSILON) -> AffinityProfile:
    """Compact a per-window affinity series into time-of-day bins.

    Parameters
    ----------
    series : array-like
        Affinity per window.
    n : int, optional
        Window count; must equal ``len(series)`` when given.
    centers : array-like, optional
        Window centers in seconds of the day. Evenly spaced when omitted.
    weights : array-like, optional
        Window support (denominator counts). Bin values are the mean of the
        windows in the bin, weighted by support when given.
    n_bins : int, optional
        Force a bin count instead of the Freedman-Diaconis rule.
    """
    series = np.asarray(series, dtype=float)
    if len(series) == 0:
        raise ValueError("empty series")
    if n is not None and n != len(series):
        raise ValueError("series length does not match window count")
    m = len(series)
    if centers is None:
        centers = (np.arange(m) + 0.5) * DAY / m
    centers = np.asarray(centers, dtype=float)
    w = np.ones(m) if weights is None else np.asarray(weights, dtype=float)
    b = fd_bin_count(series) if n_bins is None else int(n_bins)
    values = _binned_means(series * w, w, centers, b)
    return AffinityProfile(tuple(float(max(v, epsilon)) for v in values), epsilon)


# ---------------------------------------------------------------------------
# The estimator


class NetworkMobilityModel(BaseEstimator):
    """Higher-order, time-aware Markov model of movement on a road network.

    Parameters
    ----------
    network : RoadNetwork
        The network trajectories are constrained to.
    order : int
        Maximum history length ``m`` (in nodes).
    delta : int
        Width of the sliding time window, in seconds.
    epsilon : float
        Floor applied to every affinity.
    stride : int
        Step between consecutive windows, in seconds.
    n_bins : int or None
        Force the number of time bins per history; ``None`` learns it.
    speed_bins : int
        Number of equal time-of-day bins for edge speeds.
    default_speed : float
        Speed (m/s) assumed for edges absent from the training data.

    Attributes
    ----------
    table_ : dict
        ``history tuple -> (n_bins, {next node: tuple of bin affinities})``.
    edge_speed_ : ndarray of shape (n_edges,)
        Mean observed speed per edge, NaN when never traversed.
    speed_table_ : ndarray of shape (n_edges, speed_bins)
        Mean observed speed per edge and time bin, NaN when unobserved.
    """

    def __init__(self, network=None, order=DEFAULT_ORDER, delta=DEFAULT_DELTA,
                 epsilon=DEFAULT_EPSILON, stride=DEFAULT_STRIDE, n_bins=None,
                 speed_bins=DEFAULT_SPEED_BINS, default_speed=DEFAULT_SPEED):
        self.network = network
        self.order = order
        self.delta = delta
        self.epsilon = epsilon
        self.stride = stride
        self.n_bins = n_bins
        self.speed_bins = speed_bins
        self.default_speed = default_speed

    def _check_params(self):
        check_network(self.network)
        if not isinstance(self.order, (int, np.integer)) or self.order < 1:
            raise ValueError(f"order must be an integer >= 1, got {self.order!r}")
        if not 0 < self.delta < DAY:
            raise ValueError(f"delta must lie in (0, {DAY}), got {self.delta!r}")
        if not self.stride > 0:
            raise ValueError("stride must be positive")
        if not 0 <= self.epsilon < 1:
            raise ValueError("epsilon must lie in [0, 1)")
        if self.n_bins is not None and not 1 <= self.n_bins <= MAX_BINS:
            raise ValueError(f"n_bins must lie in [1, {MAX_BINS}]")
        if not self.default_speed > 0:
            raise ValueError("default_speed must be positive")

    def fit(self, X, y=None):
        """Learn affinities and speeds from fully observed trajectories ``X``."""
        self._check_params()
        net = self.network
        trajectories = check_trajectories(net, X)
        m = int(self.order)

        # history -> next node -> anchor times
        events = defaultdict(lambda: defaultdict(list))
        speed_sum = np.zeros((net.n_edges, self.speed_bins))
        speed_cnt = np.zeros((net.n_edges, self.speed_bins))
        edge_index = net.edge_index
        length = net.length
        for traj in trajectories:
            nodes = traj.nodes
            times = traj.times
            unwrapped = unwrap_times(times)
            for j in range(len(nodes) - 1):
                t = times[j]
                nxt = nodes[j + 1]
                for p in range(1, min(m, j + 1) + 1):
                    events[nodes[j - p + 1:j + 1]][nxt].append(t)
                e = edge_index[(nodes[j], nxt)]
                b = _bin_index(t, self.speed_bins)
                speed_sum[e, b] += length[e] / (unwrapped[j + 1] - unwrapped[j])
                speed_cnt[e, b] += 1

        starts, ends = window_bounds(self.delta, self.stride)
        centers = starts + self.delta / 2.0
        eps = float(self.epsilon)
        table = {}
        for hist, nexts in events.items():
            keys = sorted(nexts)
            all_times = np.sort(np.concatenate([np.asarray(nexts[k], dtype=float) for k in keys]))
            den = (np.searchsorted(all_times, ends, "left")
                   - np.searchsorted(all_times, starts, "left")).astype(float)
            seen = den > 0
            den_s = den[seen]
            c_s = centers[seen]
            nums = []
            for k in keys:
                ts = np.sort(np.asarray(nexts[k], dtype=float))
                num = (np.searchsorted(ts, ends, "left") - np.searchsorted(ts, starts, "left")).astype(float)
                nums.append(num[seen])
            if self.n_bins is not None:
                b = int(self.n_bins)
            elif len(keys) == 1:
                b = 1
            else:
                # one bin count per history keeps out-edge affinities summing to one in every bin
                b = max(fd_bin_count(num / den_s) for num in nums)
            row = {}
            for k, num in zip(keys, nums):
                vals = _binned_means(num, den_s, c_s, b)
                row[k] = tuple(float(v) if v > eps else eps for v in vals)
            table[hist] = (b, row)

        with np.errstate(invalid="ignore", divide="ignore"):
            self.speed_table_ = speed_sum / speed_cnt
            self.edge_speed_ = speed_sum.sum(axis=1) / speed_cnt.sum(axis=1)
        self.table_ = table
        self.n_windows_ = len(starts)
        self.n_trajectories_ = len(trajectories)
        self._set_network_arrays(net)
        log.info("learned %d histories from %d trajectories", len(table), len(trajectories))
        return self

    # -- derived state ------------------------------------------------------

    def _set_network_arrays(self, net):
        self.fingerprint_ = net.fingerprint()
        self.edge_src_ = np.asarray(net.src, dtype=np.int64)
        self.edge_dst_ = np.asarray(net.dst, dtype=np.int64)
        self.edge_length_ = np.asarray(net.length, dtype=float)
        self._durations = None
        self._compiled = None
        self._out_adj = None

    def durations(self):
        """Per-edge tuple of travel times for each speed bin (fallbacks applied)."""
        if getattr(self, "_durations", None) is None:
            check_is_fitted(self, "table_")
            out = []
            for e in range(len(self.edge_length_)):
                out.append(tuple(self.edge_length_[e] / self._speed(e, b) for b in range(self.speed_bins)))
            self._durations = out
        return self._durations

    def _speed(self, e, b):
        v = self.speed_table_[e, b]
        if not np.isnan(v) and v > 0:
            return float(v)
        v = self.edge_speed_[e]
        if not np.isnan(v) and v > 0:
            return float(v)
        return float(self.default_speed)

    # -- queries -------------------------------------------------------------

    def affinity(self, edge, history, t) -> float:
        """Affinity of ``edge`` at time ``t`` after following ``history``.

        Only the last ``order`` nodes of ``history`` are used. Unseen
        histories or continuations yield ``epsilon``.
        """
        check_is_fitted(self, "table_")
        h = tuple(int(v) for v in history)
        if not h or h[-1] != self.edge_src_[edge]:
            raise ValueError(f"history must end at the origin of edge {edge}")
        h = h[-self.order:]
        row = self.table_.get(h)
        if row is None:
            return float(self.epsilon)
        b, values = row
        vals = values.get(int(self.edge_dst_[edge]))
        if vals is None:
            return float(self.epsilon)
        return vals[_bin_index(t, b)]

    def profile(self, edge, history) -> AffinityProfile:
        check_is_fitted(self, "table_")
        h = tuple(int(v) for v in history)[-self.order:]
        row = self.table_.get(h)
        if row is None:
            return AffinityProfile((float(self.epsilon),), self.epsilon)
        b, values = row
        vals = values.get(int(self.edge_dst_[edge]), (float(self.epsilon),) * b)
        return AffinityProfile(vals, self.epsilon)

    def speed(self, edge, t) -> float:
        """Mean observed speed (m/s) on ``edge`` around time ``t``."""
        check_is_fitted(self, "table_")
        return self._speed(int(edge), _bin_index(t, self.speed_bins))

    def travel_time(self, edge, t) -> float:
        """Seconds needed to traverse ``edge`` when entering it at time ``t``."""
        return self.durations()[int(edge)][_bin_index(t, self.speed_bins)]

    @property
    def n_keys_(self):
        return sum(len(v[1]) for v in self.table_.values())

    def summary(self) -> dict:
        check_is_fitted(self, "table_")
        bins = [b for b, _ in self.table_.values()]
        return {
            "order": int(self.order),
            "delta": self.delta,
            "epsilon": self.epsilon,
            "histories": len(self.table_),
            "keys": self.n_keys_,
            "max_bins": max(bins) if bins else 0,
            "multi_bin_histories": int(sum(1 for b in bins if b > 1)),
            "windows": self.n_windows_,
            "trajectories": self.n_trajectories_,
        }

    # -- persistence -----------------------------------------------------------

    def save(self, sink):
        """Write the model in the binary ``NMM1`` format (see docs/formats.md)."""
        data = _encode(self)
        if isinstance(sink, (str, os.PathLike)):
            with open(sink, "wb") as f:
                f.write(data)
        else:
            sink.write(data)

    @classmethod
    def load(cls, source, network=None):
        return load_model(source, network)


def learn(net, db, m=DEFAULT_ORDER, delta=DEFAULT_DELTA, epsilon=DEFAULT_EPSILON,
          stride=DEFAULT_STRIDE, **kwargs) -> NetworkMobilityModel:
    return NetworkMobilityModel(net, order=m, delta=delta, epsilon=epsilon, stride=stride, **kwargs).fit(db)


def save_model(model, sink):
    model.save(sink)


# ---------------------------------------------------------------------------
# Binary format


def _encode(model) -> bytes:
    check_is_fitted(model, "table_")
    buf = io.BytesIO()
    w = buf.write
    n_edges = len(model.edge_length_)
    w(MAGIC)
    w(struct.pack("<B", FORMAT_VERSION))
    w(struct.pack("<IddIIi", int(model.order), float(model.delta), float(model.epsilon),
                  int(model.stride), int(model.n_windows_), -1 if model.n_bins is None else int(model.n_bins)))
    w(model.fingerprint_)
    n_nodes = int(max(model.edge_src_.max(initial=-1), model.edge_dst_.max(initial=-1)) + 1)
    if model.network is not None:
        n_nodes = model.network.n_nodes
    w(struct.pack("<IIi", n_nodes, n_edges, int(model.n_trajectories_)))
    edges = np.zeros(n_edges, dtype=[("src", "<u4"), ("dst", "<u4"), ("len", "<f8")])
    edges["src"] = model.edge_src_
    edges["dst"] = model.edge_dst_
    edges["len"] = model.edge_length_
    w(edges.tobytes())
    w(struct.pack("<Id", int(model.speed_bins), float(model.default_speed)))
    w(np.asarray(model.edge_speed_, dtype="<f8").tobytes())
    w(np.asarray(model.speed_table_, dtype="<f8").tobytes())
    w(struct.pack("<I", len(model.table_)))
    for hist in sorted(model.table_):
        b, row = model.table_[hist]
        w(struct.pack("<B", len(hist)))
        w(struct.pack(f"<{len(hist)}I", *hist))
        w(struct.pack("<HH", b, len(row)))
        for nxt in sorted(row):
            w(struct.pack("<I", nxt))
            w(struct.pack(f"<{b}d", *row[nxt]))
    body = buf.getvalue()
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise ModelFormatError("corrupt model file: unexpected end of data")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_model(source, network=None) -> NetworkMobilityModel:
    """Read a model written by :meth:`NetworkMobilityModel.save`.

    When ``network`` is given its fingerprint must match the one stored in
    the file.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as f:
            data = f.read()
    elif isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    else:
        data = source.read()
    if len(data) < 9 or data[:4] != MAGIC:
        raise ModelFormatError("not an NMM model file (bad magic)")
    if data[4] != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model version {data[4]}")
    if len(data) < 4 or struct.unpack("<I", data[-4:])[0] != zlib.crc32(data[:-4]):
        raise ModelFormatError("corrupt model file: checksum mismatch")
    r = _Reader(data[:-4])
    r.take(5)
    order, delta, epsilon, stride, n_windows, n_bins = r.unpack("<IddIIi")
    fingerprint = r.take(32)
    n_nodes, n_edges, n_traj = r.unpack("<IIi")
    edges = np.frombuffer(r.take(16 * n_edges),
                          dtype=[("src", "<u4"), ("dst", "<u4"), ("len", "<f8")])
    speed_bins, default_speed = r.unpack("<Id")
    edge_speed = np.frombuffer(r.take(8 * n_edges), dtype="<f8").copy()
    speed_table = np.frombuffer(r.take(8 * n_edges * speed_bins), dtype="<f8").reshape(n_edges, speed_bins).copy()
    (n_hist,) = r.unpack("<I")
    table = {}
    for _ in range(n_hist):
        (k,) = r.unpack("<B")
        hist = r.unpack(f"<{k}I")
        b, n_next = r.unpack("<HH")
        row = {}
        for _ in range(n_next):
            (nxt,) = r.unpack("<I")
            row[nxt] = r.unpack(f"<{b}d")
        table[tuple(hist)] = (b, row)
    if r.pos != len(r.data):
        raise ModelFormatError("corrupt model file: trailing data")

    if network is not None:
        if network.fingerprint() != fingerprint:
            raise FingerprintMismatch("model was learned on a different network")

    model = NetworkMobilityModel(network, order=order, delta=delta if delta != int(delta) else int(delta),
                                 epsilon=epsilon, stride=stride, n_bins=None if n_bins < 0 else n_bins,
                                 speed_bins=speed_bins, default_speed=default_speed)
    model.table_ = table
    model.edge_speed_ = edge_speed
    model.speed_table_ = speed_table
    model.n_windows_ = n_windows
    model.n_trajectories_ = n_traj
    model.fingerprint_ = fingerprint
    model.edge_src_ = edges["src"].astype(np.int64)
    model.edge_dst_ = edges["dst"].astype(np.int64)
    model.edge_length_ = edges["len"].astype(float)
    model._durations = None
    return model
