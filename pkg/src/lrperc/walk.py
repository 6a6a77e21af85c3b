"""Random-walk and electrical probes of sampled cluster geometry.

Both probes run on the unweighted open graph of a :class:`BoxConfig`:
the walk picks uniformly among open neighbors, and the resistance
assigns unit conductance to every open edge regardless of its length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import Disconnected, IsolatedStart
from .estimators import Estimate, _estimate
from .sampler import BoxConfig

CG_TOL = 1e-8
CG_MAX_ROUNDS = 20  # times the number of unknowns


@dataclass(frozen=True)
class WalkStats:
    """Summary of a single walk trajectory."""

    steps: int
    returns: int
    visits: np.ndarray
    seed: int

    def __post_init__(self):
        if self.returns < 0 or self.returns > self.steps:
            raise ValueError("return count must lie in [0, steps]")
        if np.any(self.visits < 0):
            raise ValueError("visit counts must be nonnegative")


def _neighbor_table(cfg: BoxConfig) -> tuple[np.ndarray, np.ndarray]:
    """Degrees and a -1 padded (n, max_degree) neighbor matrix."""
    indptr, indices = cfg.csr
    deg = np.diff(indptr).astype(np.int64)
    width = int(deg.max()) if deg.size else 0
    table = np.full((cfg.n_vertices, max(width, 1)), -1, dtype=np.int32)
    rows = np.repeat(np.arange(cfg.n_vertices), deg)
    cols = np.arange(indptr[-1]) - np.repeat(indptr[:-1], deg)
    table[rows, cols] = indices
    return deg, table


def return_frequency(cfg: BoxConfig, start, steps: int, replicates: int,
                     seed: int) -> Estimate:
    """Fraction of walks that revisit their start within the horizon."""
    s = cfg.box.index(start)
    deg, table = _neighbor_table(cfg)
    if deg[s] == 0:
        raise IsolatedStart("start vertex has no open edges")
    rng = np.random.default_rng(np.uint64(seed))
    pos = np.full(replicates, s, dtype=np.int64)
    returned = np.zeros(replicates, dtype=bool)
    for _ in range(steps):
        draws = rng.integers(0, deg[pos])
        pos = table[pos, draws].astype(np.int64)
        returned |= pos == s
        if returned.all():
            break
    return _estimate(returned.astype(np.float64), seed, "return-frequency")


def walk_stats(cfg: BoxConfig, start, steps: int, seed: int) -> WalkStats:
    """One trajectory with per-vertex visit counts."""
    s = cfg.box.index(start)
    deg, table = _neighbor_table(cfg)
    if deg[s] == 0:
        raise IsolatedStart("start vertex has no open edges")
    rng = np.random.default_rng(np.uint64(seed))
    visits = np.zeros(cfg.n_vertices, dtype=np.int64)
    visits[s] = 1
    pos = s
    returns = 0
    for _ in range(steps):
        row = table[pos]
        pos = int(row[rng.integers(0, deg[pos])])
        visits[pos] += 1
        if pos == s:
            returns += 1
    return WalkStats(steps=steps, returns=returns, visits=visits, seed=seed)


def _component_mask(cfg: BoxConfig, source: int) -> np.ndarray:
    indptr, indices = cfg.csr
    allowed = np.ones(cfg.n_vertices, dtype=bool)
    dist, _ = backend.bfs(indptr, indices,
                          np.asarray([source], dtype=np.int64), allowed,
                          track_parent=False)
    return dist >= 0


def effective_resistance(cfg: BoxConfig, center, boundary) -> float:
    """Resistance between center and a grounded vertex set.

    Unit conductance per open edge; potentials solve the Dirichlet
    problem (1 at center, 0 on the boundary) via degree-preconditioned
    conjugate gradients, and the resistance is 1 over the current
    leaving the center.
    """
    c = int(cfg.box.index(center))
    bset = {int(cfg.box.index(b)) for b in boundary}
    if c in bset:
        return 0.0
    comp = _component_mask(cfg, c)
    grounded = np.zeros(cfg.n_vertices, dtype=bool)
    for b in bset:
        grounded[b] = True
    grounded &= comp
    if not grounded.any():
        raise Disconnected("center and boundary share no open component")

    indptr, indices = cfg.csr
    deg = np.diff(indptr).astype(np.float64)
    unknown = comp & ~grounded
    unknown[c] = False
    ids = np.full(cfg.n_vertices, -1, dtype=np.int64)
    ids[unknown] = np.arange(int(unknown.sum()))
    k = int(unknown.sum())

    x = np.zeros(k, dtype=np.float64)
    if k:
        # restricted adjacency and the source term from the center's row
        rows_full = np.repeat(np.arange(cfg.n_vertices), np.diff(indptr))
        keep = unknown[rows_full]
        rows = ids[rows_full[keep]]
        cols_vertex = indices[keep]
        b = np.zeros(k, dtype=np.float64)
        np.add.at(b, rows[cols_vertex == c], 1.0)
        inner = ids[cols_vertex] >= 0
        rows_in = rows[inner]
        cols_in = ids[cols_vertex[inner]]
        diag = deg[unknown]

        def matvec(v):
            out = diag * v
            np.subtract.at(out, rows_in, v[cols_in])
            return out

        pre = 1.0 / diag
        r = b - matvec(x)
        z = pre * r
        p = z.copy()
        rz = float(r @ z)
        bnorm = float(np.linalg.norm(b))
        for _ in range(CG_MAX_ROUNDS * k):
            if np.linalg.norm(r) <= CG_TOL * bnorm:
                break
            ap = matvec(p)
            alpha = rz / float(p @ ap)
            x += alpha * p
            r -= alpha * ap
            z = pre * r
            rz_new = float(r @ z)
            p = z + (rz_new / rz) * p
            rz = rz_new

    nbrs = indices[indptr[c]:indptr[c + 1]]
    pots = np.zeros(nbrs.shape[0], dtype=np.float64)
    free = ids[nbrs] >= 0
    if free.any():
        pots[free] = x[ids[nbrs[free]]]
    current = float(np.sum(1.0 - pots))
    return 1.0 / current
