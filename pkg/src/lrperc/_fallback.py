"""Pure NumPy/SciPy backend, bit-compatible with the compiled core.

Slower by roughly two orders of magnitude on the pair scans but exercised by
the same tests; selected when the extension is unavailable or when
LRPERC_FORCE_FALLBACK is set.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from ._bits import GOLDEN, MIX1, MIX2

_U = np.uint64


def _mix_vec(h, w):
    with np.errstate(over="ignore"):
        z = (h ^ w) + _U(GOLDEN)
        z ^= z >> _U(30)
        z *= _U(MIX1)
        z ^= z >> _U(27)
        z *= _U(MIX2)
        z ^= z >> _U(31)
    return z


def _zig_vec(c):
    return ((c << 1) ^ (c >> 63)).astype(np.uint64) & _U(0xFFFFFFFF)


def pair_word(a, b):
    """Pack same-axis coordinates of both endpoints into one mix word."""
    return (_zig_vec(a) << _U(32)) | _zig_vec(b)


def edge_uniforms(seed: int, stream: int, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Uniforms for already-canonical edge arrays of shape (m, d)."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    h = np.broadcast_to(_mix_vec(_U(seed), _U(stream)), a.shape[:1]).copy()
    for i in range(a.shape[1]):
        h = _mix_vec(h, pair_word(a[:, i], b[:, i]))
    return (h >> _U(11)).astype(np.float64) * 2.0**-53


def edge_uniforms_multi(seeds: np.ndarray, stream: int, a: np.ndarray,
                        b: np.ndarray) -> np.ndarray:
    """Uniform matrix (len(seeds), m) for canonical edge arrays of shape (m, d).

    Row r holds the same uniforms edge_uniforms(seeds[r], ...) would give;
    used to vectorize independent replicates over one small edge list.
    """
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    h0 = _mix_vec(np.asarray(seeds, dtype=np.uint64), _U(stream))
    h = np.broadcast_to(h0[:, None], (h0.shape[0], a.shape[0])).copy()
    for i in range(a.shape[1]):
        h = _mix_vec(h, pair_word(a[:, i], b[:, i])[None, :])
    return (h >> _U(11)).astype(np.float64) * 2.0**-53


def scan_pairs(seed, stream, lo, hi, disps, threshs):
    """See _core.scan_pairs; returns (x linear indices, displacement rows)."""
    lo = np.asarray(lo, dtype=np.int64)
    hi = np.asarray(hi, dtype=np.int64)
    d = lo.shape[0]
    strides = np.ones(d, dtype=np.int64)
    for i in range(d - 2, -1, -1):
        strides[i] = strides[i + 1] * (hi[i + 1] - lo[i + 1] + 1)
    hseed = _mix_vec(_U(seed), _U(stream))
    xs_chunks: list[np.ndarray] = []
    ks_chunks: list[np.ndarray] = []
    for k in range(disps.shape[0]):
        t = int(threshs[k])
        if t < 0:
            continue
        u = disps[k]
        xlo = np.maximum(lo, lo - u)
        xhi = np.minimum(hi, hi - u)
        if np.any(xlo > xhi):
            continue
        axes = [np.arange(xlo[i], xhi[i] + 1, dtype=np.int64) for i in range(d)]
        grids = np.meshgrid(*axes, indexing="ij", copy=False)
        h = np.broadcast_to(hseed, grids[0].shape).copy()
        lin = np.zeros(grids[0].shape, dtype=np.int64)
        for i in range(d):
            h = _mix_vec(h, pair_word(grids[i], grids[i] + u[i]))
            lin += (grids[i] - lo[i]) * strides[i]
        mask = (h >> _U(11)) <= _U(t)
        hits = lin[mask]
        xs_chunks.append(hits)
        ks_chunks.append(np.full(hits.shape[0], k, dtype=np.int64))
    if not xs_chunks:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty.copy()
    return np.concatenate(xs_chunks), np.concatenate(ks_chunks)


def components(n, ei, ej):
    """Component labels canonicalized to the smallest member index."""
    if len(ei) == 0:
        return np.arange(n, dtype=np.int64)
    data = np.ones(len(ei), dtype=np.int8)
    graph = csr_matrix((data, (ei, ej)), shape=(n, n))
    ncomp, lab = connected_components(graph, directed=False)
    minv = np.full(ncomp, n, dtype=np.int64)
    np.minimum.at(minv, lab, np.arange(n, dtype=np.int64))
    return minv[lab]


def bfs(indptr, indices, sources, allowed, track_parent=False):
    """Multi-source hop distances restricted to the allowed mask.

    Returns (dist, parent); dist is -1 off the reached set.  Parents form
    some valid BFS tree; tree shape is backend-specific, distances are not.
    """
    n = len(indptr) - 1
    dist = np.full(n, -1, dtype=np.int64)
    parent = np.full(n, -1, dtype=np.int64) if track_parent else None
    src = np.asarray(sources, dtype=np.int64)
    src = src[allowed[src].astype(bool)]
    if src.shape[0] == 0:
        return dist, parent
    if track_parent:
        # Plain frontier BFS; only used on the small graphs that need paths.
        indptr_ = np.asarray(indptr)
        indices_ = np.asarray(indices)
        dist[src] = 0
        frontier = list(dict.fromkeys(src.tolist()))
        level = 0
        while frontier:
            level += 1
            nxt = []
            for v in frontier:
                for w in indices_[indptr_[v]:indptr_[v + 1]]:
                    if allowed[w] and dist[w] < 0:
                        dist[w] = level
                        parent[w] = v
                        nxt.append(int(w))
            frontier = nxt
        return dist, parent
    keep = np.asarray(allowed, dtype=bool)
    sub = np.flatnonzero(keep)
    remap = np.full(n, -1, dtype=np.int64)
    remap[sub] = np.arange(sub.shape[0], dtype=np.int64)
    indptr_ = np.asarray(indptr, dtype=np.int64)
    indices_ = np.asarray(indices, dtype=np.int64)
    counts = np.diff(indptr_)
    src_v = np.repeat(np.arange(n, dtype=np.int64), counts)
    dst_v = indices_
    emask = keep[src_v] & keep[dst_v]
    si, sj = remap[src_v[emask]], remap[dst_v[emask]]
    m = sub.shape[0]
    graph = csr_matrix((np.ones(si.shape[0], dtype=np.int8), (si, sj)), shape=(m, m))
    d = dijkstra(graph, directed=True, unweighted=True, min_only=True,
                 indices=remap[src])
    reached = np.isfinite(d)
    dist[sub[reached]] = d[reached].astype(np.int64)
    return dist, parent
