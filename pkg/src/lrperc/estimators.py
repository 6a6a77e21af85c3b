"""Connection-probability estimators, theta proxies, beta_c bracketing,
sharpness certificates, and locality sweeps."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import _fallback, backend, cluster
from .coupling import CouplingField, replicate_seed
from .errors import DivergentTail, NoCrossing, OriginMissing, TooLarge
from .kernel import Kernel, open_probability, tail_mass, truncate
from .sampler import Box, sample_box

ORACLE_MAX_VERTICES = 6

__all__ = [
    "Estimate",
    "BetaBracket",
    "PhiResult",
    "exact_connect_oracle",
    "connect_prob_mc",
    "boundary_connection_prob",
    "theta_density",
    "betac_bracket",
    "galton_watson_bound",
    "phi_value",
    "locality_sweep",
]


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    replicates: int
    seed: int
    method: str


def _estimate(values: np.ndarray, seed: int, method: str) -> Estimate:
    values = np.asarray(values, dtype=np.float64)
    stderr = 0.0
    if values.size > 1:
        stderr = float(values.std(ddof=1) / math.sqrt(values.size))
    return Estimate(value=float(values.mean()), stderr=stderr,
                    replicates=int(values.size), seed=seed, method=method)


def _edge_list(k: Kernel, beta: float, pts: np.ndarray):
    """Canonical in-set pairs with positive open probability."""
    m = pts.shape[0]
    pairs, probs = [], []
    for i, j in itertools.combinations(range(m), 2):
        p = open_probability(k, beta, pts[i] - pts[j])
        if p > 0.0:
            pairs.append((i, j))
            probs.append(p)
    return pairs, np.asarray(probs, dtype=np.float64)


def _closure(adj: np.ndarray) -> np.ndarray:
    """Batch transitive closure of (K, v, v) boolean adjacency with loops."""
    v = adj.shape[1]
    reach = adj | np.eye(v, dtype=bool)
    hops = 1
    while hops < v:
        m = reach.astype(np.uint8)
        reach = np.matmul(m, m) > 0
        hops *= 2
    return reach


def _connect_rows(k: Kernel, beta: float, pts: np.ndarray, src: int) -> np.ndarray:
    """Exact P(pts[src] <-> pts[j] inside pts) for every j, by enumeration."""
    m = pts.shape[0]
    pairs, probs = _edge_list(k, beta, pts)
    ne = len(pairs)
    configs = np.arange(1 << ne, dtype=np.int64)
    weight = np.ones(1 << ne, dtype=np.float64)
    adj = np.zeros((1 << ne, m, m), dtype=bool)
    for e, ((i, j), p) in enumerate(zip(pairs, probs)):
        on = (configs >> e) & 1 == 1
        weight *= np.where(on, p, 1.0 - p)
        adj[on, i, j] = True
        adj[on, j, i] = True
    reach = _closure(adj)
    return np.einsum("c,cj->j", weight, reach[:, src, :].astype(np.float64))


def exact_connect_oracle(k: Kernel, beta: float, V, x, y) -> float:
    """P(x <-> y within V) summed over every configuration of V's edges."""
    pts = np.asarray([tuple(p) for p in V], dtype=np.int64)
    if pts.shape[0] > ORACLE_MAX_VERTICES:
        raise TooLarge(f"{pts.shape[0]} vertices; enumeration capped at "
                       f"{ORACLE_MAX_VERTICES}")
    keys = [tuple(int(c) for c in row) for row in pts]
    tx, ty = tuple(x), tuple(y)
    if tx not in keys or ty not in keys:
        raise ValueError("endpoints must belong to V")
    row = _connect_rows(k, beta, pts, keys.index(tx))
    return float(row[keys.index(ty)])


def connect_prob_mc(k: Kernel, beta: float, V, x, y, replicates: int,
                    seed: int) -> Estimate:
    """Monte Carlo twin of exact_connect_oracle on the same vertex set."""
    pts = np.asarray([tuple(p) for p in V], dtype=np.int64)
    keys = [tuple(int(c) for c in row) for row in pts]
    xi, yi = keys.index(tuple(x)), keys.index(tuple(y))
    pairs, probs = _edge_list(k, beta, pts)
    if xi == yi:
        return _estimate(np.ones(replicates), seed, "connect-mc")
    # canonical endpoint order for the hash
    a = np.empty((len(pairs), pts.shape[1]), dtype=np.int64)
    b = np.empty_like(a)
    for e, (i, j) in enumerate(pairs):
        lo, hi = sorted((keys[i], keys[j]))
        a[e], b[e] = lo, hi
    seeds = np.array([replicate_seed(seed, r) for r in range(replicates)],
                     dtype=np.uint64)
    if len(pairs):
        u = _fallback.edge_uniforms_multi(seeds, 0, a, b)
        open_mat = u <= probs[None, :]
    else:
        open_mat = np.zeros((replicates, 0), dtype=bool)
    adj = np.zeros((replicates, pts.shape[0], pts.shape[0]), dtype=bool)
    for e, (i, j) in enumerate(pairs):
        adj[open_mat[:, e], i, j] = True
        adj[open_mat[:, e], j, i] = True
    reach = _closure(adj)
    return _estimate(reach[:, xi, yi].astype(np.float64), seed, "connect-mc")


def boundary_connection_prob(k: Kernel, beta: float, n: int, replicates: int,
                             seed: int, miss_budget: float = 1e-3) -> Estimate:
    """Fraction of replicates where the origin reaches the shell |x|_inf = n."""
    box = Box(d=k.d, center=(0,) * k.d, radius=n)
    pts = box.points_array()
    shell = np.max(np.abs(pts), axis=1) == n
    origin = box.index((0,) * k.d)
    hits = np.zeros(replicates, dtype=np.float64)
    for r in range(replicates):
        field = CouplingField(seed=replicate_seed(seed, r))
        cfg = sample_box(k, beta, box, field, miss_budget=miss_budget)
        indptr, indices = cfg.csr
        dist, _ = backend.bfs(indptr, indices,
                              np.array([origin], dtype=np.int64),
                              np.ones(box.volume, dtype=bool))
        hits[r] = 1.0 if np.any(dist[shell] >= 0) else 0.0
    return _estimate(hits, seed, "boundary-crossing")


def theta_density(k: Kernel, beta: float, n: int, replicates: int, seed: int,
                  miss_budget: float = 1e-3) -> Estimate:
    """Mean density of the largest cluster in the box of radius n."""
    box = Box(d=k.d, center=(0,) * k.d, radius=n)
    vals = np.zeros(replicates, dtype=np.float64)
    for r in range(replicates):
        field = CouplingField(seed=replicate_seed(seed, r))
        cfg = sample_box(k, beta, box, field, miss_budget=miss_budget)
        size, _ = cluster.largest_cluster(cluster.components(cfg))
        vals[r] = size / box.volume
    return _estimate(vals, seed, "theta-density")


def galton_watson_bound(k: Kernel) -> float:
    """1 / sum_x J(x): percolation is impossible below this beta."""
    mass = tail_mass(k, 0.0)
    if mass == 0.0:
        return math.inf
    return 1.0 / mass


@dataclass(frozen=True)
class BetaBracket:
    low: float
    high: float
    criterion: str
    radii: tuple[int, ...]
    curves: Mapping[int, tuple[tuple[float, float], ...]]
    replicates: int
    seed: int


_CRITERIA = {"boundary_crossing_half": 0.5, "density_knee": 0.1}


def betac_bracket(k: Kernel, radii: Sequence[int], criterion: str =
                  "boundary_crossing_half", tol: float = 0.05,
                  replicates: int = 100, seed: int = 0,
                  miss_budget: float = 1e-3) -> BetaBracket:
    """Bisection bracket for the percolation threshold.

    The criterion statistic (crossing probability, or largest-cluster density
    for the knee variant) is driven through its level at the largest radius;
    common coupling fields across beta probes make the per-seed statistic
    exactly monotone, so bisection cannot stall on noise.  Curves at every
    radius are kept for finite-size drift diagnosis.
    """
    radii = tuple(int(r) for r in radii)
    if len(radii) < 3 or any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("need at least 3 strictly increasing radii")
    if criterion not in _CRITERIA:
        raise ValueError(f"unknown criterion {criterion!r}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    level = _CRITERIA[criterion]
    gw = galton_watson_bound(k)
    if not math.isfinite(gw):
        raise NoCrossing("kernel has zero mass; no finite threshold")

    curves: dict[int, list[tuple[float, float]]] = {r: [] for r in radii}

    def statistic(beta: float) -> float:
        top = None
        for r in radii:
            if criterion == "boundary_crossing_half":
                est = boundary_connection_prob(k, beta, r, replicates, seed,
                                               miss_budget=miss_budget)
            else:
                est = theta_density(k, beta, r, replicates, seed,
                                    miss_budget=miss_budget)
            curves[r].append((beta, est.value))
            top = est.value
        return top

    lo = gw
    if statistic(lo) >= level:
        raise NoCrossing(f"criterion already above {level} at the "
                         f"Galton-Watson bound {gw:.4g}")
    hi = max(2.0 * lo, 0.5)
    for _ in range(14):
        if statistic(hi) >= level:
            break
        hi *= 2.0
    else:
        raise NoCrossing(f"criterion stays below {level} up to beta={hi:.4g}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if statistic(mid) >= level:
            hi = mid
        else:
            lo = mid
    frozen = {r: tuple(sorted(pts)) for r, pts in curves.items()}
    return BetaBracket(low=lo, high=hi, criterion=criterion, radii=radii,
                       curves=frozen, replicates=replicates, seed=seed)


@dataclass(frozen=True)
class PhiResult:
    value: float
    upper: float
    certified: bool
    mode: str
    tail_bound: float


def _tail_cut_radius(k: Kernel, beta: float, budget: float) -> float:
    """Smallest tested Euclidean radius with beta * tail_mass below budget."""
    r = 1.0
    while beta * tail_mass(k, r) >= budget:
        r *= 2.0
        if r > 2.0**40:
            raise DivergentTail("tail never meets the truncation budget")
    lo, hi = r / 2.0, r
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if beta * tail_mass(k, mid) < budget:
            hi = mid
        else:
            lo = mid
    return hi


def phi_value(k: Kernel, beta: float, S, mode: str = "exact",
              replicates: int = 2000, seed: int = 0,
              tail_tol: float = 1e-9) -> PhiResult:
    """Sharpness functional sum_{x in S, y notin S} P(0<->x in S) p(x-y).

    The y-sum runs over the lattice ball where the kernel still matters; the
    discarded remainder is bounded by beta * tail_mass and added to the
    reported upper value, so upper < 1 is a conservative certificate in
    exact mode.
    """
    pts = np.asarray([tuple(p) for p in S], dtype=np.int64)
    keys = [tuple(int(c) for c in row) for row in pts]
    origin = tuple(0 for _ in range(k.d))
    if origin not in keys:
        raise OriginMissing("S must contain the origin")
    if mode == "exact":
        if pts.shape[0] > ORACLE_MAX_VERTICES:
            raise TooLarge(f"exact mode caps |S| at {ORACLE_MAX_VERTICES}")
        conn = _connect_rows(k, beta, pts, keys.index(origin))
    elif mode == "mc":
        conn = np.array([
            connect_prob_mc(k, beta, pts, origin, key, replicates, seed).value
            for key in keys
        ])
    else:
        raise ValueError(f"unknown mode {mode!r}")

    if beta <= 0.0:
        return PhiResult(0.0, 0.0, mode == "exact", mode, 0.0)

    per_x_budget = tail_tol / pts.shape[0]
    R = _tail_cut_radius(k, beta, per_x_budget)
    M = int(math.floor(R))
    rng = np.arange(-M, M + 1, dtype=np.int64)
    grids = np.meshgrid(*([rng] * k.d), indexing="ij")
    offs = np.stack([g.ravel() for g in grids], axis=1)
    offs = offs[np.sum(offs * offs, axis=1) <= R * R]
    in_s = set(keys)
    total = 0.0
    for xi, key in enumerate(keys):
        ys = offs + pts[xi]
        probs = np.array([
            0.0 if tuple(int(c) for c in y) in in_s
            else open_probability(k, beta, y - pts[xi])
            for y in ys
        ])
        total += conn[xi] * float(probs.sum())
    tail = float(np.sum(conn) * beta * tail_mass(k, R))
    upper = total + tail
    return PhiResult(value=total, upper=upper,
                     certified=(mode == "exact" and upper < 1.0),
                     mode=mode, tail_bound=tail)


def locality_sweep(k: Kernel, n_list: Sequence[float], radii: Sequence[int],
                   criterion: str = "boundary_crossing_half", tol: float = 0.05,
                   replicates: int = 100, seed: int = 0,
                   miss_budget: float = 1e-3) -> list[tuple[float, BetaBracket]]:
    """Brackets for the length-N truncations, then the untruncated kernel.

    All runs share one base seed, so configurations are coupled edgewise and
    the truncated thresholds decrease toward the full-kernel one as N grows.
    """
    n_list = list(n_list)
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("N_list must be increasing")
    out: list[tuple[float, BetaBracket]] = []
    for N in n_list:
        bracket = betac_bracket(truncate(k, float(N)), radii, criterion=criterion,
                                tol=tol, replicates=replicates, seed=seed,
                                miss_budget=miss_budget)
        out.append((float(N), bracket))
    bracket = betac_bracket(k, radii, criterion=criterion, tol=tol,
                            replicates=replicates, seed=seed,
                            miss_budget=miss_budget)
    out.append((math.inf, bracket))
    return out
