"""Compiled sampling loop over flat model arrays.

The model table is flattened into an open-addressing hash of history
tuples (full keys stored and compared), a CSR list of continuations per
history, and one row of bin values per continuation.
"""

from __future__ import annotations

import numpy as np
from numba import njit

DAY = 86400.0


@njit(cache=True)
def _hash(nodes, start, length):
    h = np.int64(1469598103934665603)
    for i in range(start, start + length):
        h = (h ^ (nodes[i] + 1)) * np.int64(1099511628211)
    return h


@njit(cache=True)
def build_table(keys, klen, size):
    table = np.full(size, -1, dtype=np.int64)
    mask = size - 1
    for idx in range(keys.shape[0]):
        s = _hash(keys[idx], 0, klen[idx]) & mask
        while table[s] >= 0:
            s = (s + 1) & mask
        table[s] = idx
    return table


@njit(cache=True)
def find(nodes, start, length, keys, klen, table):
    mask = table.shape[0] - 1
    s = _hash(nodes, start, length) & mask
    while True:
        idx = table[s]
        if idx < 0:
            return -1
        if klen[idx] == length:
            same = True
            for i in range(length):
                if keys[idx, i] != nodes[start + i]:
                    same = False
                    break
            if same:
                return idx
        s = (s + 1) & mask


@njit(cache=True)
def walk(v1, t1, v2, gap, cap, dist, temporal, max_attempts,
         out_ptr, out_dst, out_edge, dur,
         m, eps, keys, klen, table, nbins, row_ptr, ent_next, ent_val, vals,
         stamp, stamp_ref, nodes_buf, times_buf, edges_buf, cand_e, cand_w, wbuf):
    """One successful walk; returns ``(n_edges, attempts)`` with ``n_edges = -1`` on failure."""
    sb = dur.shape[1]
    for attempt in range(1, max_attempts + 1):
        stamp_ref[0] += 1
        st = stamp_ref[0]
        cur = v1
        n = 0
        nodes_buf[0] = v1
        times_buf[0] = t1
        stamp[v1] = st
        t = t1
        elapsed = 0.0
        while True:
            if elapsed > gap:
                if np.random.random() < 1.0 - np.exp(-(elapsed - gap) / gap):
                    break
            nc = 0
            for k in range(out_ptr[cur], out_ptr[cur + 1]):
                w = out_dst[k]
                if stamp[w] != st:
                    cand_e[nc] = out_edge[k]
                    cand_w[nc] = w
                    nc += 1
            if nc == 0:
                break
            pick = 0
            if nc > 1:
                length = min(m, n + 1)
                h = find(nodes_buf, n + 1 - length, length, keys, klen, table)
                uniform = True
                total = 0.0
                if h >= 0:
                    b = nbins[h]
                    bi = int(t * b / DAY)
                    if bi >= b:
                        bi = b - 1
                    hit = False
                    for c in range(nc):
                        x = eps
                        for q in range(row_ptr[h], row_ptr[h + 1]):
                            if ent_next[q] == cand_w[c]:
                                x = vals[ent_val[q] + bi]
                                break
                        if x > eps:
                            hit = True
                        wbuf[c] = x
                        total += x
                    uniform = not hit
                if uniform:
                    pick = int(np.random.random() * nc)
                    if pick >= nc:
                        pick = nc - 1
                else:
                    u = np.random.random() * total
                    acc = 0.0
                    pick = nc - 1
                    for c in range(nc - 1):
                        acc += wbuf[c]
                        if u < acc:
                            pick = c
                            break
            e = cand_e[pick]
            w = cand_w[pick]
            si = int(t * sb / DAY)
            if si >= sb:
                si = sb - 1
            d = dur[e, si]
            t += d
            if t >= DAY:
                t -= DAY
            elapsed += d
            n += 1
            nodes_buf[n] = w
            times_buf[n] = t
            edges_buf[n - 1] = e
            stamp[w] = st
            cur = w
            if w == v2:
                if temporal and np.random.random() < 1.0 - np.exp(-abs(elapsed - gap) / gap):
                    break
                return n, attempt
            # walks that can no longer reach the target within the step cap are certain failures
            if n >= cap or dist[w] < 0 or n + dist[w] > cap:
                break
    return -1, max_attempts


@njit(cache=True)
def batch(seed, batch_size, pv1, pt1, pv2, pgap, pcap, pdist, temporal, max_attempts,
          out_ptr, out_dst, out_edge, dur,
          m, eps, keys, klen, table, nbins, row_ptr, ent_next, ent_val, vals):
    """``batch_size`` full samples: per-pair walks concatenated, redrawn when the result revisits a node.

    Returns ``(status, nodes, times, edges, ptr, attempts, rejected)``. Sample
    ``s`` spans ``nodes[ptr[s]:ptr[s+1]]`` and ``edges[ptr[s]-s:ptr[s+1]-s-1]``.
    ``status`` is 0, ``-(i+1)`` when pair ``i`` failed, or ``-1_000_000``
    when no acyclic concatenation was found.
    """
    np.random.seed(seed)
    n_nodes = out_ptr.shape[0] - 1
    n_pairs = pv1.shape[0]
    longest = 1
    per_sample = 1
    for i in range(n_pairs):
        c = min(pcap[i], n_nodes)
        longest = max(longest, c)
        per_sample += c
    nodes = np.empty(batch_size * per_sample, dtype=np.int64)
    times = np.empty(batch_size * per_sample, dtype=np.float64)
    edges = np.empty(batch_size * per_sample, dtype=np.int64)
    ptr = np.zeros(batch_size + 1, dtype=np.int64)
    stamp = np.zeros(n_nodes, dtype=np.int64)
    stamp_ref = np.zeros(1, dtype=np.int64)
    seen = np.zeros(n_nodes, dtype=np.int64)
    nodes_buf = np.empty(longest + 1, dtype=np.int64)
    times_buf = np.empty(longest + 1, dtype=np.float64)
    edges_buf = np.empty(longest + 1, dtype=np.int64)
    deg = 1
    for v in range(n_nodes):
        deg = max(deg, out_ptr[v + 1] - out_ptr[v])
    cand_e = np.empty(deg, dtype=np.int64)
    cand_w = np.empty(deg, dtype=np.int64)
    wbuf = np.empty(deg, dtype=np.float64)
    attempts = 0
    rejected = 0
    pos = 0
    epos = 0
    sample_mark = 0
    for s in range(batch_size):
        tries = 0
        while True:
            start = pos
            estart = epos
            for i in range(n_pairs):
                n, a = walk(pv1[i], pt1[i], pv2[i], pgap[i], pcap[i], pdist[i], temporal, max_attempts,
                            out_ptr, out_dst, out_edge, dur,
                            m, eps, keys, klen, table, nbins, row_ptr, ent_next, ent_val, vals,
                            stamp, stamp_ref, nodes_buf, times_buf, edges_buf, cand_e, cand_w, wbuf)
                attempts += a
                if n < 0:
                    return -(i + 1), nodes, times, edges, ptr, attempts, rejected
                first = 0 if i == 0 else 1
                for k in range(first, n + 1):
                    nodes[pos] = nodes_buf[k]
                    times[pos] = times_buf[k]
                    pos += 1
                for k in range(n):
                    edges[epos] = edges_buf[k]
                    epos += 1
            sample_mark += 1
            simple = True
            if n_pairs > 1:
                for k in range(start, pos):
                    if seen[nodes[k]] == sample_mark:
                        simple = False
                        break
                    seen[nodes[k]] = sample_mark
            if simple:
                break
            rejected += 1
            tries += 1
            pos = start
            epos = estart
            if tries >= max_attempts:
                return -1_000_000, nodes, times, edges, ptr, attempts, rejected
        ptr[s + 1] = pos
    return 0, nodes, times, edges, ptr, attempts, rejected
