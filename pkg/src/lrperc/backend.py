"""Backend selection: compiled extension if importable, NumPy otherwise.

Set LRPERC_FORCE_FALLBACK=1 to skip the extension (used by the equivalence
tests and the benchmark).  Both backends expose the same three operations
with identical outputs; parents of BFS trees are the one documented
exception (any valid tree).
"""

from __future__ import annotations

import os

import numpy as np

from . import _fallback

try:  # pragma: no cover - exercised via subprocess in backend tests
    from . import _core as _core_mod
except ImportError:  # pragma: no cover
    _core_mod = None

_use_compiled = _core_mod is not None and not os.environ.get("LRPERC_FORCE_FALLBACK")

backend_name = "compiled" if _use_compiled else "fallback"


def scan_pairs(seed, stream, lo, hi, disps, threshs, expected=None):
    """Open pairs (x linear index, displacement row) in the rectangle.

    disps must be lexicographically positive int64 rows; threshs are the
    53-bit integer thresholds from _bits.threshold_word.
    """
    lo = np.ascontiguousarray(lo, dtype=np.int64)
    hi = np.ascontiguousarray(hi, dtype=np.int64)
    disps = np.ascontiguousarray(disps, dtype=np.int64)
    threshs = np.ascontiguousarray(threshs, dtype=np.int64)
    if not _use_compiled:
        return _fallback.scan_pairs(seed, stream, lo, hi, disps, threshs)
    if expected is None:
        expected = _expected_hits(lo, hi, disps, threshs)
    cap = int(expected + 8.0 * np.sqrt(expected + 1.0)) + 1024
    while True:
        out_x = np.empty(cap, dtype=np.int64)
        out_k = np.empty(cap, dtype=np.int64)
        n = _core_mod.scan_pairs(seed, stream, lo, hi, disps, threshs, out_x, out_k)
        if n >= 0:
            return out_x[:n].copy(), out_k[:n].copy()
        cap *= 2


def _expected_hits(lo, hi, disps, threshs):
    live = threshs >= 0
    if not np.any(live):
        return 0.0
    p = (threshs[live].astype(np.float64) + 1.0) * 2.0**-53
    xlo = np.maximum(lo, lo - disps[live])
    xhi = np.minimum(hi, hi - disps[live])
    counts = np.prod(np.maximum(xhi - xlo + 1, 0).astype(np.float64), axis=1)
    return float(np.sum(p * counts))


def components(n, ei, ej):
    ei = np.ascontiguousarray(ei, dtype=np.int64)
    ej = np.ascontiguousarray(ej, dtype=np.int64)
    if _use_compiled:
        return _core_mod.uf_components(n, ei, ej)
    return _fallback.components(n, ei, ej)


def bfs(indptr, indices, sources, allowed, track_parent=False):
    indptr = np.ascontiguousarray(indptr, dtype=np.int64)
    indices = np.ascontiguousarray(indices, dtype=np.int64)
    sources = np.ascontiguousarray(sources, dtype=np.int64)
    allowed = np.ascontiguousarray(allowed, dtype=np.uint8)
    if not _use_compiled:
        return _fallback.bfs(indptr, indices, sources, allowed, track_parent)
    n = indptr.shape[0] - 1
    dist = np.full(n, -1, dtype=np.int64)
    parent = np.full(n if track_parent else 0, -1, dtype=np.int64)
    _core_mod.bfs_csr(indptr, indices, sources, allowed, dist, parent)
    return dist, (parent if track_parent else None)


def edge_uniforms(seed, stream, a, b):
    """Vector edge uniforms for canonical (a < b) edge arrays, shape (m, d)."""
    return _fallback.edge_uniforms(seed, stream, a, b)
