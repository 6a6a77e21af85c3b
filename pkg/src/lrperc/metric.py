"""Chemical distances, the projected pseudometric, chemical balls, and the
norm/shape machinery built on a finite-volume stand-in for the infinite
cluster."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

import numpy as np

from . import backend, cluster
from .coupling import CouplingField, replicate_seed
from .errors import DegenerateNorm, EmptyProxy, EmptySources, SubcriticalRegime
from .kernel import Kernel
from .sampler import Box, BoxConfig, sample_box

UNREACHABLE = np.iinfo(np.int64).max

__all__ = [
    "UNREACHABLE",
    "DistanceField",
    "InfiniteClusterProxy",
    "bfs_distances",
    "make_proxy",
    "sample_with_proxy",
    "hat_point",
    "dhat",
    "chemical_ball",
    "max_cluster_distance",
    "MuPoint",
    "mu_sequence",
    "mu_gauge",
    "ShapeReport",
    "shape_check",
]


def _index_set(box: Box, pts) -> np.ndarray:
    if isinstance(pts, np.ndarray) and pts.dtype == bool:
        return np.nonzero(pts)[0].astype(np.int64)
    return np.array(sorted(box.index(p) for p in pts), dtype=np.int64)


@dataclass
class DistanceField:
    """Hop counts from a source set; UNREACHABLE marks separated vertices."""

    config: BoxConfig
    sources: np.ndarray = field(repr=False)
    hops: np.ndarray = field(repr=False)

    def distance(self, x) -> int | float:
        h = int(self.hops[self.config.box.index(x)])
        return math.inf if h == UNREACHABLE else h

    def reachable_mask(self) -> np.ndarray:
        return self.hops != UNREACHABLE


def bfs_distances(config: BoxConfig, sources) -> DistanceField:
    """Unit cost per open edge, whatever its geometric length."""
    src = _index_set(config.box, sources)
    if src.shape[0] == 0:
        raise EmptySources("need at least one source vertex")
    indptr, indices = config.csr
    allowed = np.ones(config.n_vertices, dtype=bool)
    dist, _ = backend.bfs(indptr, indices, src, allowed)
    hops = np.where(dist < 0, UNREACHABLE, dist).astype(np.int64)
    return DistanceField(config=config, sources=src, hops=hops)


@dataclass
class InfiniteClusterProxy:
    """Vertex set standing in for the infinite cluster, with its rule tag.

    vertices are sorted linear indices into box, so position order equals
    lexicographic point order.
    """

    box: Box
    vertices: np.ndarray = field(repr=False)
    rule: str = "largest-cluster"

    @cached_property
    def points(self) -> np.ndarray:
        return self.box.points_array()[self.vertices]

    @property
    def size(self) -> int:
        return int(self.vertices.shape[0])

    def _require_nonempty(self):
        if self.size == 0:
            raise EmptyProxy(f"proxy ({self.rule}) has no vertices")


def make_proxy(config: BoxConfig, working: Box | None = None,
               rule: str = "largest-cluster") -> InfiniteClusterProxy:
    """Stand-in vertex set inside the working box (default: whole box).

    largest-cluster: the configuration's largest component, then intersected
    with the working box.  boundary-touching: every vertex whose component
    meets the sampling box's boundary shell, same intersection.
    """
    box = config.box
    forest = cluster.components(config)
    if rule == "largest-cluster":
        _, rep = cluster.largest_cluster(forest)
        want = forest.labels == box.index(rep)
    elif rule == "boundary-touching":
        pts = box.points_array()
        on_boundary = np.max(np.abs(pts - np.asarray(box.center)), axis=1) == box.radius
        touching = np.unique(forest.labels[on_boundary])
        want = np.isin(forest.labels, touching)
    else:
        raise ValueError(f"unknown proxy rule {rule!r}")
    if working is not None:
        pts = box.points_array()
        inside = np.all(np.abs(pts - np.asarray(working.center)) <= working.radius,
                        axis=1)
        want &= inside
    return InfiniteClusterProxy(box=box, vertices=np.nonzero(want)[0].astype(np.int64),
                                rule=rule)


def sample_with_proxy(k: Kernel, beta: float, working: Box, field: CouplingField,
                      rule: str = "largest-cluster", miss_budget: float = 1e-3,
                      ) -> tuple[BoxConfig, InfiniteClusterProxy]:
    """Sample an enlarged box (radius grown by half) and build the proxy.

    Distances are taken in the enlarged configuration so that paths may use
    the margin; the proxy itself is confined to the working box.
    """
    big = Box(d=working.d, center=working.center,
              radius=working.radius + -(-working.radius // 2))
    config = sample_box(k, beta, big, field, miss_budget=miss_budget)
    return config, make_proxy(config, working=working, rule=rule)


def _round_to_cell(x) -> np.ndarray:
    # half-integers round down: 0.5 -> 0, -0.5 -> -1
    return np.ceil(np.asarray(x, dtype=np.float64) - 0.5).astype(np.int64)


def hat_point(config: BoxConfig, proxy: InfiniteClusterProxy, x) -> tuple[int, ...]:
    """Nearest proxy vertex in sup-norm to the cell of x, smallest-lex on ties."""
    proxy._require_nonempty()
    xd = _round_to_cell(x)
    cheb = np.max(np.abs(proxy.points - xd), axis=1)
    best = int(np.argmin(cheb))  # first minimum = lexicographically smallest
    return tuple(int(c) for c in proxy.points[best])


def dhat(config: BoxConfig, proxy: InfiniteClusterProxy, x, y) -> int | float:
    """Hop distance between the projections of x and y."""
    xh = hat_point(config, proxy, x)
    yh = hat_point(config, proxy, y)
    return bfs_distances(config, [xh]).distance(yh)


def _counts_in_windows(prefix: np.ndarray, lo: np.ndarray,
                       hi: np.ndarray) -> np.ndarray:
    """Proxy points inside [lo, hi] per row, via the padded prefix-sum grid."""
    n, d = lo.shape
    flat = prefix.reshape(-1)
    dims = prefix.shape
    total = np.zeros(n, dtype=np.int64)
    for corner in itertools.product((0, 1), repeat=d):
        idx = [hi[:, a] + 1 if bit else lo[:, a] for a, bit in enumerate(corner)]
        sign = -1 if (d - sum(corner)) % 2 else 1
        total += sign * flat[np.ravel_multi_index(idx, dims)]
    return total


def nearest_proxy_index(config: BoxConfig, proxy: InfiniteClusterProxy) -> np.ndarray:
    """Projection of every box vertex: linear index of its hat vertex.

    Exact sup-norm nearest point with lexicographic tie-break, computed with
    prefix sums over the proxy's indicator grid: the nearest-distance search
    and the coordinatewise minimization are both binary searches answered by
    O(2^d) table lookups, so the whole box is projected in O(n log) time.
    """
    proxy._require_nonempty()
    box = config.box
    shape = tuple(int(s) for s in (box.hi - box.lo + 1))
    d = box.d
    mask = np.zeros(box.volume, dtype=np.int64)
    mask[proxy.vertices] = 1
    grid = mask.reshape(shape)
    prefix = grid
    for a in range(d):
        prefix = np.cumsum(prefix, axis=a)
    prefix = np.pad(prefix, [(1, 0)] * d)

    coords = np.stack(np.unravel_index(np.arange(box.volume), shape), axis=1)
    limit = np.asarray(shape, dtype=np.int64) - 1

    # radius search: smallest r with a proxy point in the clipped cube
    lo_r = np.full(box.volume, -1, dtype=np.int64)
    hi_r = np.full(box.volume, int(max(shape)) - 1, dtype=np.int64)
    while np.any(hi_r - lo_r > 1):
        mid = (lo_r + hi_r) // 2
        wlo = np.clip(coords - np.maximum(mid, 0)[:, None], 0, None)
        whi = np.minimum(coords + np.maximum(mid, 0)[:, None], limit)
        hit = (_counts_in_windows(prefix, wlo, whi) > 0) & (mid >= 0)
        hi_r = np.where(hit, mid, hi_r)
        lo_r = np.where(hit, lo_r, mid)

    wlo = np.clip(coords - hi_r[:, None], 0, None)
    whi = np.minimum(coords + hi_r[:, None], limit)
    # lexicographic minimum: fix coordinates one axis at a time
    for a in range(d):
        lo_c = wlo[:, a] - 1
        hi_c = whi[:, a].copy()
        while np.any(hi_c - lo_c > 1):
            mid = (lo_c + hi_c) // 2
            trial_hi = whi.copy()
            trial_hi[:, a] = np.maximum(mid, wlo[:, a])
            hit = _counts_in_windows(prefix, wlo, trial_hi) > 0
            hit &= mid >= wlo[:, a]
            hi_c = np.where(hit, mid, hi_c)
            lo_c = np.where(hit, lo_c, mid)
        wlo[:, a] = hi_c
        whi[:, a] = hi_c
    return np.ravel_multi_index([wlo[:, a] for a in range(d)], shape)


def chemical_ball(config: BoxConfig, proxy: InfiniteClusterProxy, center,
                  t: int) -> np.ndarray:
    """Lattice points z with projected distance dhat(z, center) <= t.

    Returned as an (m, d) array in lexicographic order.
    """
    proxy._require_nonempty()
    ch = hat_point(config, proxy, center)
    fieldd = bfs_distances(config, [ch])
    within = (fieldd.hops != UNREACHABLE) & (fieldd.hops <= t)
    assign = nearest_proxy_index(config, proxy)
    members = np.nonzero(within[assign])[0]
    return config.box.points_array()[members]


def max_cluster_distance(config: BoxConfig, A) -> tuple[int, tuple | None]:
    """Largest finite hop distance over pairs of A sharing a component."""
    box = config.box
    idx = _index_set(box, A)
    if idx.shape[0] < 2:
        return 0, None
    forest = cluster.components(config)
    labels = forest.labels[idx]
    best, pair = 0, None
    pts = box.points_array()
    for lab in np.unique(labels):
        group = idx[labels == lab]
        if group.shape[0] < 2:
            continue
        for src in group:
            fieldd = bfs_distances(config, [pts[src]])
            h = fieldd.hops[group]
            far = int(h.max())
            if far > best:
                best = far
                far_v = int(group[int(np.argmax(h))])
                pair = (tuple(int(c) for c in pts[src]),
                        tuple(int(c) for c in pts[far_v]))
    return best, pair


@dataclass(frozen=True)
class MuPoint:
    n: int
    mean: float
    stderr: float
    subadd_violations: int
    replicates: int


def mu_sequence(k: Kernel, beta: float, x, n_values, replicates: int, seed: int,
                margin: int = 4, miss_budget: float = 1e-3,
                rule: str = "largest-cluster") -> list[MuPoint]:
    """Monte Carlo means of dhat(0, n*x)/n along a lattice direction.

    Each replicate draws one configuration big enough to hold 0, nx and 2nx
    (box centered at nx) and also records the subadditivity comparison
    dhat(0,2nx) <= dhat(0,nx) + dhat(nx,2nx) in that same configuration.
    Raises SubcriticalRegime when the proxy comes up empty in a majority of
    replicates for some n.
    """
    xv = np.asarray(x, dtype=np.int64)
    xnorm = int(np.max(np.abs(xv)))
    if xnorm == 0:
        raise ValueError("direction must be a nonzero lattice vector")
    out = []
    for n in n_values:
        working = Box(d=k.d, center=tuple(int(c) for c in n * xv),
                      radius=n * xnorm + margin)
        vals, violations, empties = [], 0, 0
        for r in range(replicates):
            fld = CouplingField(seed=replicate_seed(seed, r))
            config, proxy = sample_with_proxy(k, beta, working, fld, rule=rule,
                                              miss_budget=miss_budget)
            if proxy.size == 0:
                empties += 1
                continue
            origin = tuple(0 for _ in range(k.d))
            p1 = tuple(int(c) for c in n * xv)
            p2 = tuple(int(c) for c in 2 * n * xv)
            h0 = hat_point(config, proxy, origin)
            h1 = hat_point(config, proxy, p1)
            h2 = hat_point(config, proxy, p2)
            from0 = bfs_distances(config, [h0])
            d01 = from0.distance(h1)
            d02 = from0.distance(h2)
            d12 = bfs_distances(config, [h1]).distance(h2)
            vals.append(d01 / n)
            if d02 > d01 + d12:
                violations += 1
        if empties > replicates // 2:
            raise SubcriticalRegime(
                f"proxy empty in {empties}/{replicates} replicates at n={n}"
            )
        arr = np.asarray(vals, dtype=np.float64)
        stderr = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
        out.append(MuPoint(n=int(n), mean=float(arr.mean()), stderr=stderr,
                           subadd_violations=violations, replicates=arr.size))
    return out


def _orbit(v: tuple[int, ...]):
    pts = set()
    for perm in itertools.permutations(v):
        for signs in itertools.product((-1, 1), repeat=len(v)):
            pts.add(tuple(s * c for s, c in zip(signs, perm)))
    return pts


def _hull_planes(mu: Mapping[tuple[int, ...], float]) -> np.ndarray:
    """Facet normals (A, b) with the polytope = {x : A x <= b}, b > 0."""
    dirs = list(mu.keys())
    d = len(dirs[0])
    for v, m in mu.items():
        if m <= 0:
            raise DegenerateNorm(f"mu{v} = {m} is not positive")
    verts = []
    for v, m in mu.items():
        for w in _orbit(v):
            verts.append(np.asarray(w, dtype=np.float64) / m)
    verts = np.unique(np.asarray(verts), axis=0)
    if d == 1:
        top = float(np.max(verts))
        return np.array([[1.0, top], [-1.0, top]])
    from scipy.spatial import ConvexHull

    hull = ConvexHull(verts)
    eq = hull.equations  # A x + b <= 0
    return np.column_stack([eq[:, :-1], -eq[:, -1]])


def mu_gauge(mu: Mapping[tuple[int, ...], float], pts) -> np.ndarray:
    """Minkowski gauge of the symmetrized polyhedral interpolation of mu."""
    planes = _hull_planes(mu)
    P = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    vals = P @ planes[:, :-1].T / planes[:, -1]
    return np.max(vals, axis=1)


@dataclass(frozen=True)
class ShapeReport:
    ok: bool
    magnitude: float
    worst_outer: tuple | None
    outer_excess: float
    worst_missing: tuple | None
    inner_deficit: float


def shape_check(ball, t: int, mu: Mapping[tuple[int, ...], float],
                eps: float) -> ShapeReport:
    """Two-sided inclusion of ball/t against the polyhedral mu ball.

    Outer: every ball point z must have gauge(z/t) <= 1+eps.  Inner: every
    lattice z with gauge(z/t) <= 1-eps must belong to the ball.  The report
    carries the worst offender on each side; magnitude is the larger excess.
    """
    d = len(next(iter(mu)))
    if isinstance(ball, np.ndarray):
        pts = ball.reshape(-1, d).astype(np.int64)
    else:
        pts = np.asarray(sorted(ball), dtype=np.int64).reshape(-1, d)
    slack = 1e-9

    outer_excess, worst_outer = 0.0, None
    if pts.shape[0]:
        g = mu_gauge(mu, pts / t)
        i = int(np.argmax(g))
        if g[i] > 1.0 + eps + slack:
            outer_excess = float(g[i] - (1.0 + eps))
            worst_outer = tuple(int(c) for c in pts[i])

    # candidate lattice points of the required inner body
    verts_extent = max(np.max(np.abs(v)) / mu[v] for v in mu)
    radius = int(math.floor((1 - eps) * t * verts_extent)) + 1
    rng = np.arange(-radius, radius + 1, dtype=np.int64)
    grids = np.meshgrid(*([rng] * d), indexing="ij")
    cand = np.stack([g.ravel() for g in grids], axis=1)
    need = cand[mu_gauge(mu, cand / t) <= 1.0 - eps - slack]

    have = {tuple(int(c) for c in row) for row in pts}
    inner_deficit, worst_missing = 0.0, None
    for row in need:
        key = tuple(int(c) for c in row)
        if key not in have:
            deficit = float((1.0 - eps) - mu_gauge(mu, row[None, :] / t)[0])
            if deficit > inner_deficit or worst_missing is None:
                inner_deficit = deficit
                worst_missing = key
    ok = worst_outer is None and worst_missing is None
    return ShapeReport(ok=ok, magnitude=max(outer_excess, inner_deficit),
                       worst_outer=worst_outer, outer_excess=outer_excess,
                       worst_missing=worst_missing, inner_deficit=inner_deficit)
