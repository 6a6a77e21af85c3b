"""Coarse-graining probes built on pads: the annulus pad-connection
frequency, a directed quadrant exploration driven by three coupled edge
streams, the abstract directed site-bond survival model it dominates, and
the depth-without-pad event explored by layered search over a K-box grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _bits, _fallback, backend, cluster
from .coupling import (CouplingField, STREAM_BASE, STREAM_SPRINKLE_1,
                       STREAM_SPRINKLE_2, replicate_seed)
from .errors import GeometryInfeasible, SplitInvalid
from .estimators import Estimate, _estimate
from .kernel import Kernel, tail_mass
from .sampler import Box, open_edges_rect, sample_box, _support_inf_radius


def _csr(n: int, ei: np.ndarray, ej: np.ndarray):
    src = np.concatenate([ei, ej])
    dst = np.concatenate([ej, ei])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    np.cumsum(indptr, out=indptr)
    return indptr, dst


# -- annulus pad connection ----------------------------------------------------


def annulus_pad_probe(k: Kernel, beta: float, n: int, m: int, delta: float,
                      replicates: int, seed: int,
                      miss_budget: float = 1e-3) -> Estimate:
    """Frequency of: the cluster of B_m(0) inside B_n touches, by one open
    edge, the union of open m-pads lying in the annulus between B_n and
    B_{(1+delta)n}.
    """
    if not 0.0 < delta <= 1.0:
        raise GeometryInfeasible("delta must lie in (0, 1]")
    if m < 0 or m >= delta * n / 3.0:
        raise GeometryInfeasible("pads must fit in the annulus: m < delta*n/3")
    outer = int(math.floor((1.0 + delta) * n + 1e-9))
    box = Box(k.d, (0,) * k.d, outer)
    pts = box.points_array()
    cheb = np.max(np.abs(pts), axis=1)
    inner = cheb <= n
    annulus = ~inner
    sources = np.nonzero(cheb <= m)[0]
    hits = np.zeros(replicates, dtype=np.float64)
    for r in range(replicates):
        fld = CouplingField(replicate_seed(seed, r), STREAM_BASE)
        config = sample_box(k, beta, box, fld, miss_budget)
        ei, ej = config.edges_i, config.edges_j
        keep = inner[ei] & inner[ej]
        labels = backend.components(box.volume, ei[keep], ej[keep])
        kr = inner & np.isin(labels, np.unique(labels[sources]))
        indptr, indices = config.csr
        centers = cluster._mpads_grid(indptr, indices, box.lo, box.hi,
                                      annulus, m)
        if not centers:
            continue
        pmask = np.zeros(box.volume, dtype=bool)
        shape = (box.side,) * box.d
        pm = pmask.reshape(shape)
        for c in centers:
            at = np.unravel_index(int(c), shape)
            pm[tuple(slice(a - m, a + m + 1) for a in at)] = True
        touching = (kr[ei] & pmask[ej]) | (pmask[ei] & kr[ej])
        hits[r] = 1.0 if np.any(touching) else 0.0
    return _estimate(hits, seed, "annulus-pad")


# -- directed exploration ------------------------------------------------------


@dataclass
class ExplorationState:
    """Bookkeeping for one directed exploration run."""
    n: int
    m: int
    truncation: int
    beta_tilde: float
    eta: float
    active: dict = field(default_factory=dict)    # level -> sorted vertex list
    anchors: dict = field(default_factory=dict)   # vertex -> anchor points
    dead: set = field(default_factory=set)
    steps: list = field(default_factory=list)     # (k, |A_k|, blocks, edges)
    access_log: list = field(default_factory=list)  # (level, axis, stream tag)


@dataclass(frozen=True)
class _Block:
    """One explored rectangle: everything needed to replay its paths."""
    lo: np.ndarray
    hi: np.ndarray
    r_pts: np.ndarray       # anchor set removed from the rectangle
    bridge_a: np.ndarray    # anchor-side endpoints of sprinkled edges
    bridge_b: np.ndarray    # far-side endpoints, index-aligned with bridge_a


@dataclass(frozen=True)
class _Activation:
    parent: tuple
    axis: int
    pad_center: tuple


@dataclass
class ExplorationResult:
    depth: int              # largest level with active vertices; -1 if none
    survived: bool          # active set nonempty at the depth cap
    trace: list             # rows (level, active, blocks sampled, open edges)
    certificate: list | None  # [(x, y, stream tag)] path, origin pad outward
    certificate_ok: bool | None
    state: ExplorationState


def _unit(axis: int, d: int) -> np.ndarray:
    e = np.zeros(d, dtype=np.int64)
    e[axis - 1] = 1
    return e


class _Explorer:
    def __init__(self, k, beta, n, m, N, seed, beta_tilde, eta, require_pad):
        d = k.d
        if d < 2:
            raise GeometryInfeasible("the quadrant exploration needs d >= 2")
        if n < 1 or not 0 <= m < n:
            raise GeometryInfeasible("pads must fit in the block: 0 <= m < n")
        if not 1 <= N <= 14 * n:
            raise GeometryInfeasible("truncation must lie in [1, 14n]")
        if beta_tilde is None and eta is None:
            beta_tilde, eta = 0.75 * beta, 0.125 * beta
        elif eta is None:
            eta = (beta - beta_tilde) / 2.0
        elif beta_tilde is None:
            beta_tilde = beta - 2.0 * eta
        if (beta_tilde < 0.0 or eta < 0.0 or (beta > 0.0 and beta_tilde == 0.0)
                or abs(beta_tilde + 2.0 * eta - beta) > 1e-9 * max(beta, 1.0)):
            raise SplitInvalid(
                f"need beta_tilde + 2*eta = beta, got {beta_tilde} + "
                f"2*{eta} != {beta}"
            )
        # sup-norm length caps are enforced per scan through max_len
        self.k = k
        self.d, self.n, self.m, self.N = d, n, m, N
        self.beta_tilde, self.eta = float(beta_tilde), float(eta)
        self.require_pad = require_pad
        self.f_beta = CouplingField(seed, STREAM_BASE)
        self.f_eta = (None, CouplingField(seed, STREAM_SPRINKLE_1),
                      CouplingField(seed, STREAM_SPRINKLE_2))
        self.state = ExplorationState(n, m, N, self.beta_tilde, self.eta)
        self.blocks: dict = {}       # (vertex, axis) -> _Block
        self.activations: dict = {}  # vertex -> _Activation
        self.near_x: dict = {}       # vertex -> pass-1 X cut to B_3n(8n u)

    def origin_active(self) -> bool:
        n8 = np.zeros(self.d, dtype=np.int64)
        lo, hi = n8 - self.m, n8 + self.m
        ei, ej = open_edges_rect(self.k, self.beta_tilde, lo, hi,
                                 self.f_beta, max_len=min(2 * self.m, self.N))
        self.state.access_log.append((0, 0, "beta"))
        vol = (2 * self.m + 1) ** self.d
        labels = backend.components(vol, ei, ej)
        if labels.max() != 0:
            return False
        pts = _rect_points(lo, hi)
        self.state.anchors[_origin(self.d)] = pts
        return True

    def explore_block(self, level, u, axis, r_pts):
        """Paper-order block step: sprinkle a bridge out of the anchor set,
        flood the rest of the rectangle at beta_tilde, and look for a pad
        in the forward box.  Returns (activated, X near target, X near u).
        """
        n, d = self.n, self.d
        u8 = 8 * n * np.asarray(u, dtype=np.int64)
        lo = u8 - 3 * n
        hi = u8 + 3 * n
        hi[axis - 1] = u8[axis - 1] + 11 * n
        shape = hi - lo + 1
        vol = int(np.prod(shape))
        bi, bj = open_edges_rect(self.k, self.beta_tilde, lo, hi,
                                 self.f_beta, max_len=self.N)
        si, sj = open_edges_rect(self.k, self.eta, lo, hi,
                                 self.f_eta[axis], max_len=self.N)
        self.state.access_log.append((level, axis, "beta"))
        self.state.access_log.append((level, axis, f"eta{axis}"))
        self._edges_drawn += bi.shape[0] + si.shape[0]
        self._blocks_drawn += 1

        strides = np.ones(d, dtype=np.int64)
        for i in range(d - 2, -1, -1):
            strides[i] = strides[i + 1] * shape[i + 1]
        r_ids = (r_pts - lo) @ strides
        rmask = np.zeros(vol, dtype=bool)
        rmask[r_ids] = True

        keep = ~rmask[bi] & ~rmask[bj]
        bi, bj = bi[keep], bj[keep]
        labels = backend.components(vol, bi, bj)

        cross = rmask[si] ^ rmask[sj]
        a_ids = np.where(rmask[si], si, sj)[cross]
        b_ids = np.where(rmask[si], sj, si)[cross]
        pts = _rect_points(lo, hi)
        self.blocks[(u, axis)] = _Block(lo, hi, r_pts, pts[a_ids], pts[b_ids])
        if b_ids.shape[0] == 0:
            return False, None, None
        xmask = np.isin(labels, np.unique(labels[b_ids])) & ~rmask

        child8 = u8 + 8 * n * _unit(axis, d)
        near_child = np.max(np.abs(pts - child8), axis=1)
        region = xmask & (near_child <= n)
        if self.require_pad:
            indptr, indices = _csr(vol, bi, bj)
            centers = cluster._mpads_grid(indptr, indices, lo, hi, region,
                                          self.m)
            ok = bool(centers)
            pad = tuple(int(c) for c in pts[centers[0]]) if ok else None
        else:
            ok = bool(region.any())
            pad = (tuple(int(c) for c in pts[np.nonzero(region)[0][0]])
                   if ok else None)
        x_child = pts[xmask & (near_child <= 3 * n)] if ok else None
        near_u = np.max(np.abs(pts - u8), axis=1)
        x_u = pts[xmask & (near_u <= 3 * n)]
        return ok, (x_child, pad), x_u

    def run(self, depth: int) -> ExplorationResult:
        st = self.state
        origin = _origin(self.d)
        self._blocks_drawn = self._edges_drawn = 0
        if not self.origin_active():
            if self.require_pad:
                st.steps.append((0, 0, 1, 0))
                return ExplorationResult(-1, False, st.steps, None, None, st)
            st.anchors[origin] = _rect_points(
                np.full(self.d, -self.m, np.int64),
                np.full(self.d, self.m, np.int64))
        st.active[0] = [origin]
        st.steps.append((0, 1, 1, 0))
        last = 0
        for level in range(1, depth + 1):
            self._blocks_drawn = self._edges_drawn = 0
            parents = st.active[level - 1]
            decided: set = set()
            newly: list = []
            for axis in (1, 2):
                for u in parents:
                    child = _shift(u, axis)
                    if axis == 2 and child in decided:
                        continue
                    r_pts = (st.anchors[u] if axis == 1
                             else self._second_anchor(u))
                    ok, payload, x_u = self.explore_block(level, u, axis,
                                                          r_pts)
                    if axis == 1:
                        self.near_x[u] = x_u
                    decided.add(child)
                    if ok:
                        x_child, pad = payload
                        st.anchors[child] = x_child
                        self.activations[child] = _Activation(u, axis, pad)
                        newly.append(child)
                    else:
                        st.dead.add(child)
            st.active[level] = sorted(set(newly))
            st.steps.append((level, len(st.active[level]),
                             self._blocks_drawn, self._edges_drawn))
            if not st.active[level]:
                return ExplorationResult(last, False, st.steps, None, None,
                                         st)
            last = level
        cert = self._certificate(last)
        ok = self._verify(cert, last)
        return ExplorationResult(last, True, st.steps, cert, ok, st)

    def _second_anchor(self, u) -> np.ndarray:
        r1 = self.state.anchors[u]
        x1 = self.near_x.get(u)
        if x1 is None or x1.shape[0] == 0:
            return r1
        both = np.concatenate([r1, x1], axis=0)
        return np.unique(both, axis=0)

    # -- path replay -----------------------------------------------------------

    def _hop_block(self, x: tuple, blk: _Block, axis: int, out: list):
        """Walk beta_tilde edges from x to a sprinkled bridge endpoint, then
        cross the bridge into the anchor set.  Returns the landing point.
        """
        lo, hi = blk.lo, blk.hi
        shape = hi - lo + 1
        vol = int(np.prod(shape))
        strides = np.ones(self.d, dtype=np.int64)
        for i in range(self.d - 2, -1, -1):
            strides[i] = strides[i + 1] * shape[i + 1]
        bi, bj = open_edges_rect(self.k, self.beta_tilde, lo, hi,
                                 self.f_beta, max_len=self.N)
        r_ids = (blk.r_pts - lo) @ strides
        allowed = np.ones(vol, dtype=bool)
        allowed[r_ids] = False
        keep = allowed[bi] & allowed[bj]
        indptr, indices = _csr(vol, bi[keep], bj[keep])
        b_ids = (blk.bridge_b - lo) @ strides
        dist, parent = backend.bfs(indptr, indices, b_ids, allowed,
                                   track_parent=True)
        xid = int((np.asarray(x, dtype=np.int64) - lo) @ strides)
        if dist[xid] < 0:
            return None
        pts = _rect_points(lo, hi)
        v = xid
        while parent[v] >= 0:
            w = int(parent[v])
            out.append((tuple(int(c) for c in pts[v]),
                        tuple(int(c) for c in pts[w]), "beta"))
            v = w
        hit = int(np.nonzero(b_ids == v)[0][0])
        a = tuple(int(c) for c in blk.bridge_a[hit])
        out.append((tuple(int(c) for c in pts[v]), a, f"eta{axis}"))
        return a

    def _certificate(self, last: int) -> list | None:
        st = self.state
        origin = _origin(self.d)
        if last == 0:
            return []
        u = st.active[last][0]
        rec = self.activations[u]
        out: list = []
        x = rec.pad_center
        while True:
            parent = rec.parent
            x = self._hop_block(x, self.blocks[(parent, rec.axis)], rec.axis,
                                out)
            if x is None:
                return None
            if rec.axis == 2:
                r1 = st.anchors[parent]
                inside = np.any(np.all(
                    r1 == np.asarray(x, dtype=np.int64), axis=1))
                if not inside:
                    x = self._hop_block(x, self.blocks[(parent, 1)], 1, out)
                    if x is None:
                        return None
            if parent == origin:
                break
            rec = self.activations[parent]
        if max(abs(c) for c in x) > self.m:
            return None
        out.reverse()
        return [(b, a, tag) for a, b, tag in out]

    def _verify(self, cert: list | None, last: int) -> bool:
        """Independent re-check: every path edge is open in its claimed
        stream, no edge is longer than 14n, and endpoints chain from the
        origin pad to the deepest pad.
        """
        if cert is None:
            return False
        if last == 0:
            return True
        if not cert:
            return False
        betas = {"beta": (self.f_beta, self.beta_tilde),
                 "eta1": (self.f_eta[1], self.eta),
                 "eta2": (self.f_eta[2], self.eta)}
        from .coupling import edge_open
        prev = None
        for a, b, tag in cert:
            fld, bb = betas[tag]
            length = max(abs(ac - bc) for ac, bc in zip(a, b))
            if length > 14 * self.n:
                return False
            if not edge_open(fld, a, b, bb, self.k):
                return False
            if prev is not None and a != prev:
                return False
            prev = b
        start = cert[0][0]
        if max(abs(c) for c in start) > self.m:
            return False
        deepest = self.state.active[last][0]
        rec = self.activations[deepest]
        return prev == rec.pad_center


def _origin(d: int) -> tuple:
    return tuple([0] * d)


def _shift(u: tuple, axis: int) -> tuple:
    v = list(u)
    v[axis - 1] += 1
    return tuple(v)


def _rect_points(lo, hi) -> np.ndarray:
    axes = [np.arange(lo[i], hi[i] + 1, dtype=np.int64)
            for i in range(len(lo))]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def directed_exploration(k: Kernel, beta: float, n: int, m: int, N: int,
                         depth: int, seed: int, beta_tilde: float = None,
                         eta: float = None,
                         require_pad: bool = True) -> ExplorationResult:
    """Run the two-pass quadrant exploration once.

    The base environment uses intensity beta_tilde, the two bridging layers
    intensity eta each, with beta_tilde + 2*eta = beta so the pointwise union
    of the three streams has the law of the single-beta configuration.  A
    surviving run carries a replayed open path from the origin pad to a pad
    of a deepest active block, every edge no longer than 14n.
    """
    ex = _Explorer(k, beta, n, m, N, seed, beta_tilde, eta, require_pad)
    return ex.run(depth)


# -- abstract directed site-bond model ----------------------------------------


@dataclass(frozen=True)
class DirectedModel:
    """Two-pass quadrant model: edge (u, u+e_i) opens with probability
    q(u, i) >= rho, at most one attempt per child vertex, e_1 pass first.
    """
    rho: float
    q: object = None          # callable (u, axis) -> probability, or None
    depth: int | None = None

    def prob(self, u, axis) -> float:
        p = self.rho if self.q is None else float(self.q(u, axis))
        if not (self.rho - 1e-12 <= p <= 1.0):
            raise ValueError(f"q({u},{axis}) = {p} outside [rho, 1]")
        return p


def directed_survival(model: DirectedModel, depth: int, replicates: int,
                      seed: int) -> Estimate:
    """Fraction of runs whose active set is nonempty after `depth` levels.

    The uniform deciding a child is a pure function of (seed, replicate,
    child), so the survival indicator is monotone in rho replicate by
    replicate.
    """
    if not 0.0 <= model.rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    horizon = depth if model.depth is None else min(depth, model.depth)
    alive = np.zeros(replicates, dtype=np.float64)
    for r in range(replicates):
        rs = replicate_seed(seed, r)
        active = [(0, 0)]
        for _ in range(horizon):
            decided = set()
            newly = []
            for axis in (1, 2):
                for u in sorted(active):
                    child = (u[0] + 1, u[1]) if axis == 1 else (u[0], u[1] + 1)
                    if child in decided:
                        continue
                    decided.add(child)
                    p = model.prob(u, axis)
                    h = _bits.edge_hash(rs, 3, child, child)
                    if p > 0.0 and _bits.hash_to_unit(h) <= p:
                        newly.append(child)
            active = newly
            if not active:
                break
        alive[r] = 1.0 if active else 0.0
    return _estimate(alive, seed, "directed-survival")


# -- depth without pads --------------------------------------------------------


@dataclass(frozen=True)
class DepthPadReport:
    estimate: Estimate
    mean_boxes: float


def _neighbor_disps(k: Kernel, beta: float, L: int):
    """Full-ball displacements with positive open probability, plus probs."""
    from .sampler import _lex_positive_disps, _eval_sq_vec
    disps, sq = _lex_positive_disps(k.d, L)
    vals = _eval_sq_vec(k, disps, sq)
    live = vals > 0.0
    disps = disps[live]
    probs = -np.expm1(-beta * vals[live])
    return disps, probs


def _scan_cutoff(k: Kernel, beta: float, r: float, budget: float) -> int:
    support = _support_inf_radius(k)
    if support is not None:
        return int(min(support, r)) if math.isfinite(r) else support
    if beta <= 0.0:
        return 1
    lim = int(r) if math.isfinite(r) else None

    def miss(L: float) -> float:
        return beta * tail_mass(k, L)

    L = 1
    while miss(float(L)) >= budget and (lim is None or L < lim):
        L *= 2
        if L > 2 ** 30:
            raise GeometryInfeasible("scan radius exploded; check the kernel")
    return L if lim is None else min(L, lim)


def depth_no_pad_probe(k: Kernel, beta: float, r: float, N: int, kk: int,
                       replicates: int, seed: int,
                       miss_budget: float = 1e-3) -> DepthPadReport:
    """Estimate the probability that the r-truncated cluster of the origin
    reaches depth kk while every revealed K-box cluster of the N-truncated
    environment stays below kk^(1/(4d)).
    """
    if not r > N:
        raise GeometryInfeasible("need r > N")
    if kk < 2:
        raise ValueError("depth must be at least 2")
    d = k.d
    K = int(math.ceil(round(kk ** (1.0 / (4 * d)), 12)))
    budget = miss_budget / max(4 * kk, 16)
    L = _scan_cutoff(k, beta, r, budget)
    disps, probs = _neighbor_disps(k, beta, L)
    hits = np.zeros(replicates, dtype=np.float64)
    boxes = np.zeros(replicates, dtype=np.float64)
    for rep in range(replicates):
        rs = replicate_seed(seed, rep)
        ok, nboxes = _one_depth_run(k, beta, rs, kk, K, N, disps, probs)
        hits[rep] = 1.0 if ok else 0.0
        boxes[rep] = nboxes
    return DepthPadReport(_estimate(hits, seed, "depth-no-pad"),
                          float(boxes.mean()))


def _layer_neighbors(rs: int, frontier: np.ndarray, disps, probs):
    """Open neighbors of every frontier vertex, duplicates included."""
    outs = []
    for sign in (1, -1):
        a = np.repeat(frontier, disps.shape[0], axis=0)
        b = a + sign * np.tile(disps, (frontier.shape[0], 1))
        lo, hi = (a, b) if sign > 0 else (b, a)
        u = _fallback.edge_uniforms(rs, STREAM_BASE, lo, hi)
        p = np.tile(probs, frontier.shape[0])
        outs.append(b[(u <= p) & (p > 0.0)])
    return np.concatenate(outs, axis=0)


def _one_depth_run(k, beta, rs, kk, K, N, disps, probs):
    d = k.d
    fld = CouplingField(rs, STREAM_BASE)
    origin = np.zeros((1, d), dtype=np.int64)
    seen = {tuple(origin[0])}
    frontier = origin
    seen_boxes = set()
    pending = []
    explored = 0

    def register(pts: np.ndarray):
        rows = sorted(tuple(int(c) for c in row) for row in pts)
        fresh = {}
        for row in rows:
            u = tuple(c // K for c in row)
            if u not in seen_boxes:
                seen_boxes.add(u)
                fresh[u] = row
        pending.extend(fresh.items())

    register(frontier)
    big = False
    for _ in range(kk // 2 + 1):
        for u, y in pending:
            lo = np.asarray(u, dtype=np.int64) * K
            hi = lo + K - 1
            ei, ej = open_edges_rect(k, beta, lo, hi, fld,
                                     max_len=min(N, K - 1))
            labels = backend.components(K ** d, ei, ej)
            yid = int(np.ravel_multi_index(
                np.asarray(y, dtype=np.int64) - lo, (K,) * d))
            if int(np.sum(labels == labels[yid])) >= K:
                big = True
            explored += 1
        pending = []
        if big or frontier.shape[0] == 0:
            break
        nbrs = _layer_neighbors(rs, frontier, disps, probs)
        fresh = []
        for row in nbrs:
            t = tuple(int(c) for c in row)
            if t not in seen:
                seen.add(t)
                fresh.append(t)
        frontier = (np.asarray(sorted(fresh), dtype=np.int64)
                    if fresh else np.empty((0, d), dtype=np.int64))
        register(frontier)
    if big:
        return False, explored
    layer = kk // 2 + 1
    while len(seen) < kk and frontier.shape[0] > 0 and layer < kk:
        nbrs = _layer_neighbors(rs, frontier, disps, probs)
        fresh = []
        for row in nbrs:
            t = tuple(int(c) for c in row)
            if t not in seen:
                seen.add(t)
                fresh.append(t)
        frontier = (np.asarray(sorted(fresh), dtype=np.int64)
                    if fresh else np.empty((0, d), dtype=np.int64))
        layer += 1
    return len(seen) >= kk, explored
