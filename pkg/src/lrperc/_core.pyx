# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels: per-edge hashing pair scans, union-find, CSR BFS.

Bit-compatible with the NumPy fallback in _fallback.py; see _bits.py for the
hash definition.  Displacements passed to scan_pairs must be lexicographically
positive so (x, x + u) is already the canonical edge order.
"""

import numpy as np

cimport numpy as cnp
from libc.stdint cimport int64_t, uint8_t, uint32_t, uint64_t

cnp.import_array()

DEF MAXDIM = 8


cdef inline uint64_t _mix(uint64_t h, uint64_t w) nogil:
    cdef uint64_t z = (h ^ w) + <uint64_t>0x9E3779B97F4A7C15
    z ^= z >> 30
    z = z * <uint64_t>0xBF58476D1CE4E5B9
    z ^= z >> 27
    z = z * <uint64_t>0x94D049BB133111EB
    z ^= z >> 31
    return z


cdef inline uint64_t _zig(int64_t c) nogil:
    return <uint64_t><uint32_t>((c << 1) ^ (c >> 63))


cdef int64_t _scan(uint64_t hseed, Py_ssize_t d,
                   cnp.int64_t[::1] lo, cnp.int64_t[::1] hi,
                   cnp.int64_t[:, ::1] disps, cnp.int64_t[::1] threshs,
                   cnp.int64_t[::1] out_x, cnp.int64_t[::1] out_k) nogil:
    cdef Py_ssize_t ndisp = disps.shape[0]
    cdef Py_ssize_t cap = out_x.shape[0]
    cdef int64_t strides[MAXDIM]
    cdef int64_t xlo[MAXDIM]
    cdef int64_t xhi[MAXDIM]
    cdef int64_t cur[MAXDIM]
    cdef int64_t u[MAXDIM]
    cdef Py_ssize_t i, k, n = 0
    cdef int64_t t, ul, xl, base_lin, skip
    cdef uint64_t h0, hrow, w

    strides[d - 1] = 1
    for i in range(d - 2, -1, -1):
        strides[i] = strides[i + 1] * (hi[i + 1] - lo[i + 1] + 1)

    for k in range(ndisp):
        t = threshs[k]
        if t < 0:
            continue
        skip = 0
        for i in range(d):
            u[i] = disps[k, i]
            xlo[i] = lo[i] if u[i] >= 0 else lo[i] - u[i]
            xhi[i] = hi[i] - u[i] if u[i] >= 0 else hi[i]
            if xlo[i] > xhi[i]:
                skip = 1
        if skip:
            continue
        ul = u[d - 1]
        for i in range(d - 1):
            cur[i] = xlo[i]
        while True:
            h0 = hseed
            base_lin = 0
            for i in range(d - 1):
                h0 = _mix(h0, (_zig(cur[i]) << 32) | _zig(cur[i] + u[i]))
                base_lin += (cur[i] - lo[i]) * strides[i]
            for xl in range(xlo[d - 1], xhi[d - 1] + 1):
                w = (_zig(xl) << 32) | _zig(xl + ul)
                hrow = _mix(h0, w)
                if <int64_t>(hrow >> 11) <= t:
                    if n >= cap:
                        return -1
                    out_x[n] = base_lin + (xl - lo[d - 1])
                    out_k[n] = k
                    n += 1
            i = d - 2
            while i >= 0:
                cur[i] += 1
                if cur[i] <= xhi[i]:
                    break
                cur[i] = xlo[i]
                i -= 1
            if i < 0:
                break
    return n


def scan_pairs(uint64_t seed, uint64_t stream,
               cnp.int64_t[::1] lo, cnp.int64_t[::1] hi,
               cnp.int64_t[:, ::1] disps, cnp.int64_t[::1] threshs,
               cnp.int64_t[::1] out_x, cnp.int64_t[::1] out_k):
    """Scan all candidate pairs (x, x+u) inside the rectangle [lo, hi].

    Writes the linear index of x (row-major over the full rectangle) and the
    displacement row k for every open pair.  Openness is (hash >> 11) <= t_k
    with t_k < 0 meaning never open.  Returns the number of open pairs, or -1
    when the output capacity is exhausted (caller re-runs with more room).
    """
    cdef Py_ssize_t d = lo.shape[0]
    if d > MAXDIM:
        raise ValueError("dimension above compiled limit")
    cdef uint64_t hseed = _mix(seed, stream)
    cdef int64_t n
    with nogil:
        n = _scan(hseed, d, lo, hi, disps, threshs, out_x, out_k)
    return n


cdef Py_ssize_t _find(int64_t* parent, Py_ssize_t v) nogil:
    while parent[v] != v:
        parent[v] = parent[parent[v]]
        v = parent[v]
    return v


def uf_components(Py_ssize_t n, cnp.int64_t[::1] ei, cnp.int64_t[::1] ej):
    """Component labels; every vertex labeled by the smallest index in its
    component, so labels agree with the fallback backend."""
    cdef cnp.ndarray[cnp.int64_t, ndim=1] parent_arr = np.arange(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] minv_arr = np.arange(n, dtype=np.int64)
    cdef int64_t* parent = <int64_t*>cnp.PyArray_DATA(parent_arr)
    cdef int64_t* minv = <int64_t*>cnp.PyArray_DATA(minv_arr)
    cdef Py_ssize_t m = ei.shape[0]
    cdef Py_ssize_t a, b, v, r
    with nogil:
        for v in range(m):
            a = _find(parent, ei[v])
            b = _find(parent, ej[v])
            if a != b:
                if a < b:
                    parent[b] = a
                else:
                    parent[a] = b
        for v in range(n):
            r = _find(parent, v)
            if v < minv[r]:
                minv[r] = v
        for v in range(n):
            parent[v] = minv[_find(parent, v)]
    return parent_arr


def bfs_csr(cnp.int64_t[::1] indptr, cnp.int64_t[::1] indices,
            cnp.int64_t[::1] sources, cnp.uint8_t[::1] allowed,
            cnp.int64_t[::1] dist, cnp.int64_t[::1] parent):
    """Multi-source BFS restricted to allowed vertices.

    dist must be prefilled with -1; parent of length 0 disables tracking.
    Sources outside the allowed mask are skipped.  Returns visited count.
    """
    cdef Py_ssize_t n = dist.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] queue_arr = np.empty(n, dtype=np.int64)
    cdef int64_t* queue = <int64_t*>cnp.PyArray_DATA(queue_arr)
    cdef bint track = parent.shape[0] > 0
    cdef Py_ssize_t head = 0, tail = 0
    cdef Py_ssize_t i, v, w
    cdef int64_t dv
    with nogil:
        for i in range(sources.shape[0]):
            v = sources[i]
            if allowed[v] and dist[v] < 0:
                dist[v] = 0
                if track:
                    parent[v] = -1
                queue[tail] = v
                tail += 1
        while head < tail:
            v = queue[head]
            head += 1
            dv = dist[v] + 1
            for i in range(indptr[v], indptr[v + 1]):
                w = indices[i]
                if allowed[w] and dist[w] < 0:
                    dist[w] = dv
                    if track:
                        parent[w] = v
                    queue[tail] = w
                    tail += 1
    return tail
