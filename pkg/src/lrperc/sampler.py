"""Materializes open-edge graphs on finite boxes.

Free boundary: only pairs with both endpoints inside the box are candidates.
Openness of every candidate pair is decided by the same stateless hash as
coupling.edge_open, so configurations regenerate bit-exactly and nest
monotonely across beta.  Kernels with unbounded support are cut off at a
sup-norm class length L chosen so the expected number of skipped open edges
stays below the miss budget; the realized bound is recorded in provenance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from . import backend
from . import kernel as kn
from ._bits import threshold_word
from .coupling import CouplingField
from .errors import BudgetInfeasible, DimensionMismatch
from .kernel import (
    Kernel,
    ShortEdgeFunction,
    kernel_from_spec,
    kernel_to_spec,
    pf_tail,
    tail_mass,
)

# Both backends hash every candidate slot (the stateless per-pair RNG rules
# out geometric skipping), so this caps scan work as well as memory.  2^36
# admits a radius-32 box in d=3 at a long cutoff, about half a minute on the
# compiled path; the NumPy fallback wants workloads well below the cap.
PAIR_CAP = float(2**36)


@dataclass(frozen=True)
class Box:
    """Sup-norm ball B_m(center) in Z^d; (2m+1)^d vertices."""

    d: int
    center: tuple[int, ...]
    radius: int

    def __post_init__(self):
        if len(self.center) != self.d:
            raise DimensionMismatch("center has wrong number of coordinates")
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")
        object.__setattr__(self, "center", tuple(int(c) for c in self.center))

    @property
    def side(self) -> int:
        return 2 * self.radius + 1

    @property
    def volume(self) -> int:
        return self.side**self.d

    @property
    def lo(self) -> np.ndarray:
        return np.array(self.center, dtype=np.int64) - self.radius

    @property
    def hi(self) -> np.ndarray:
        return np.array(self.center, dtype=np.int64) + self.radius

    def contains(self, x) -> bool:
        return all(abs(int(c) - cc) <= self.radius for c, cc in zip(x, self.center))

    def index(self, x) -> int:
        idx = 0
        for c, cc in zip(x, self.center):
            off = int(c) - cc + self.radius
            if not 0 <= off < self.side:
                raise ValueError(f"{tuple(x)} outside box")
            idx = idx * self.side + off
        return idx

    def point(self, idx: int) -> tuple[int, ...]:
        out = []
        for _ in range(self.d):
            idx, r = divmod(idx, self.side)
            out.append(r)
        return tuple(
            r - self.radius + cc for r, cc in zip(reversed(out), self.center)
        )

    def points_array(self) -> np.ndarray:
        """(volume, d) coordinates in linear-index order."""
        axes = [
            np.arange(c - self.radius, c + self.radius + 1, dtype=np.int64)
            for c in self.center
        ]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)


@dataclass(frozen=True)
class Provenance:
    model: str  # "beta" or "pf"
    kernel_spec: str
    beta: float
    seed: int
    stream: int
    miss_budget: float
    cutoff_len: int
    miss_bound: float
    length_cap: float = math.inf


@dataclass(frozen=True)
class BoxConfig:
    """Open-edge graph on a box.  Immutable; edges stored canonically."""

    box: Box
    edges_i: np.ndarray
    edges_j: np.ndarray
    provenance: Provenance

    @property
    def n_vertices(self) -> int:
        return self.box.volume

    @property
    def open_edge_count(self) -> int:
        return int(self.edges_i.shape[0])

    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        """Symmetric adjacency (indptr, indices); neighbor lists sorted."""
        n = self.n_vertices
        src = np.concatenate([self.edges_i, self.edges_j])
        dst = np.concatenate([self.edges_j, self.edges_i])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        np.cumsum(indptr, out=indptr)
        return indptr, dst

    def neighbors(self, v: int) -> np.ndarray:
        indptr, indices = self.csr
        return indices[indptr[v]:indptr[v + 1]]

    def has_edge(self, x, y) -> bool:
        i, j = self.box.index(x), self.box.index(y)
        row = self.neighbors(i)
        pos = np.searchsorted(row, j)
        return pos < row.shape[0] and row[pos] == j

    def edge_points(self) -> tuple[np.ndarray, np.ndarray]:
        pts = self.box.points_array()
        return pts[self.edges_i], pts[self.edges_j]


def _lex_positive_disps(d: int, L: int) -> tuple[np.ndarray, np.ndarray]:
    """Half of the sup-norm ball of radius L: first nonzero coordinate > 0."""
    rng = np.arange(-L, L + 1, dtype=np.int64)
    grids = np.meshgrid(*([rng] * d), indexing="ij")
    arr = np.stack([g.ravel() for g in grids], axis=1)
    keep = np.zeros(arr.shape[0], dtype=bool)
    decided = np.zeros(arr.shape[0], dtype=bool)
    for i in range(d):
        col = arr[:, i]
        keep |= (col > 0) & ~decided
        decided |= col != 0
    arr = arr[keep]
    sq = np.sum(arr * arr, axis=1)
    return arr, sq


def _eval_sq_vec(k: Kernel, disps: np.ndarray, sq: np.ndarray) -> np.ndarray:
    """Vectorized kernel values for displacement rows."""
    if isinstance(k, kn.PowerLaw):
        return k.C * sq.astype(np.float64) ** (-k.s / 2.0)
    if isinstance(k, kn.Truncated):
        vals = _eval_sq_vec(k.base, disps, sq)
        return np.where(sq <= k.radius * k.radius, vals, 0.0)
    if isinstance(k, kn.NearestNeighbor):
        return np.where(sq == 1, k.weight, 0.0)
    if isinstance(k, kn.PerturbedNN):
        vals = _eval_sq_vec(k.base, disps, sq)
        return vals + np.where(sq == 1, k.nn_bonus, 0.0)
    if isinstance(k, kn.Tabulated):
        canon = np.sort(np.abs(disps), axis=1)
        out = np.zeros(disps.shape[0], dtype=np.float64)
        for row in range(disps.shape[0]):
            out[row] = k.table.get(tuple(canon[row]), 0.0)
        return out
    raise TypeError(k)


def _support_inf_radius(k: Kernel) -> int | None:
    """Sup-norm radius covering the kernel's support, None if unbounded."""
    classes = kn._finite_classes(k)
    if classes is None:
        return None
    return max((cls[-1] for cls in classes), default=0)


def _choose_cutoff(k: Kernel, beta: float, box: Box, miss_budget: float):
    """(cutoff length, realized miss bound).  Bound 0 means exact."""
    full_len = 2 * box.radius
    support = _support_inf_radius(k)
    if support is not None:
        return min(support, full_len), 0.0
    if beta == 0.0:
        return 1, 0.0
    vol = box.volume

    def miss(L: int) -> float:
        return vol * beta * tail_mass(k, float(L))

    if miss(1) < miss_budget:
        return 1, miss(1)
    lo, hi = 1, full_len
    if miss(full_len) >= miss_budget:
        return full_len, 0.0  # every in-box pair enumerated, nothing skipped
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if miss(mid) < miss_budget:
            hi = mid
        else:
            lo = mid
    return hi, miss(hi)


def _check_pair_cap(box: Box, cutoff: int):
    per_vertex = min(float(2 * cutoff + 1) ** box.d, float(box.volume))
    if box.volume * per_vertex / 2.0 > PAIR_CAP:
        raise BudgetInfeasible(
            f"candidate pair count {box.volume * per_vertex / 2.0:.2e} "
            f"exceeds the memory/time cap"
        )


def _threshold_words(probs: np.ndarray) -> np.ndarray:
    """Vectorized _bits.threshold_word; bit-identical to the scalar form."""
    words = (probs * 9007199254740992.0).astype(np.int64)
    words[probs <= 0.0] = -1
    words[probs >= 1.0] = (1 << 53) - 1
    return words


# (kernel spec, beta, cutoff) -> (disps, threshs); the class tables are pure
# functions of the key and get reused across replicates and bisection probes.
_scan_tables: dict = {}
_SCAN_TABLE_MAX = 4


def _scan_table(k: Kernel, beta: float, cutoff: int):
    key = (kernel_to_spec(k), float(beta), int(cutoff))
    hit = _scan_tables.get(key)
    if hit is None:
        disps, sq = _lex_positive_disps(k.d, cutoff)
        vals = _eval_sq_vec(k, disps, sq)
        live = vals > 0.0
        disps = np.ascontiguousarray(disps[live])
        probs = -np.expm1(-beta * vals[live])
        while len(_scan_tables) >= _SCAN_TABLE_MAX:
            _scan_tables.pop(next(iter(_scan_tables)))
        hit = _scan_tables[key] = (disps, _threshold_words(probs))
    return hit


def _scan_box(box: Box, disps, threshs, field: CouplingField):
    lo, hi = box.lo, box.hi
    xs, ks = backend.scan_pairs(field.seed, field.stream, lo, hi, disps, threshs)
    if xs.shape[0] == 0:
        e = np.empty(0, dtype=np.int64)
        return e, e.copy()
    strides = np.ones(box.d, dtype=np.int64)
    for i in range(box.d - 2, -1, -1):
        strides[i] = strides[i + 1] * box.side
    offs = disps @ strides
    ei = xs
    ej = xs + offs[ks]
    order = np.lexsort((ej, ei))
    return np.ascontiguousarray(ei[order]), np.ascontiguousarray(ej[order])


def sample_box(k: Kernel, beta: float, box: Box, field: CouplingField,
               miss_budget: float = 1e-3) -> BoxConfig:
    """Sample the beta-J configuration on a box.

    Every pair inside the class cutoff is open iff coupling.edge_open agrees;
    classes beyond the cutoff would contribute fewer than miss_budget open
    edges in expectation.  Kernels with bounded support sample exactly.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if not 0.0 < miss_budget <= 1.0:
        raise ValueError("miss_budget must lie in (0, 1]")
    if box.d != k.d:
        raise DimensionMismatch("box and kernel dimensions differ")
    cutoff, miss_bound = _choose_cutoff(k, beta, box, miss_budget)
    _check_pair_cap(box, cutoff)
    disps, threshs = _scan_table(k, beta, cutoff)
    ei, ej = _scan_box(box, disps, threshs, field)
    prov = Provenance("beta", kernel_to_spec(k), beta, field.seed, field.stream,
                      miss_budget, cutoff, miss_bound)
    return BoxConfig(box, ei, ej, prov)


def _pf_disps(sf: ShortEdgeFunction, box: Box, miss_budget: float):
    vol = box.volume
    full_len = 2 * box.radius
    if not sf.power_coef:
        radius = max((cls[-1] for cls in sf.table), default=0)
        cutoff = min(max(radius, 1), full_len)
        miss_bound = 0.0
    else:
        cutoff, miss_bound = full_len, 0.0
        for L in range(1, full_len):
            bound = vol * pf_tail(sf, float(L))
            if bound < miss_budget:
                cutoff, miss_bound = L, bound
                break
    disps, sq = _lex_positive_disps(sf.d, cutoff)
    probs = np.zeros(disps.shape[0])
    canon = np.sort(np.abs(disps), axis=1)
    start2 = sf.power_start * sf.power_start
    for row in range(disps.shape[0]):
        q = int(sq[row])
        if q == 1:
            probs[row] = sf.p
        elif sf.power_coef and q > start2:
            probs[row] = sf.power_coef / q
        else:
            probs[row] = sf.table.get(tuple(canon[row]), 0.0)
    return disps, probs, cutoff, miss_bound


def sample_box_pf(sf: ShortEdgeFunction, box: Box, field: CouplingField,
                  miss_budget: float = 1e-3) -> BoxConfig:
    """Sample the (p, f) short-edge model: probabilities given directly."""
    if not 0.0 < miss_budget <= 1.0:
        raise ValueError("miss_budget must lie in (0, 1]")
    if box.d != sf.d:
        raise DimensionMismatch("box and model dimensions differ")
    disps, probs, cutoff, miss_bound = _pf_disps(sf, box, miss_budget)
    _check_pair_cap(box, cutoff)
    live = probs > 0.0
    disps, probs = disps[live], probs[live]
    threshs = np.array([threshold_word(p) for p in probs], dtype=np.int64)
    ei, ej = _scan_box(box, disps, threshs, field)
    prov = Provenance("pf", pf_to_spec(sf), 0.0, field.seed, field.stream,
                      miss_budget, cutoff, miss_bound)
    return BoxConfig(box, ei, ej, prov)


def open_edges_rect(k: Kernel, beta: float, lo, hi, field: CouplingField,
                    max_len: int) -> tuple[np.ndarray, np.ndarray]:
    """Open pairs inside an integer rectangle, classes of sup-norm <= max_len.

    Used by the renormalization explorer, whose regions are not cubes and
    whose kernels are explicitly length-truncated.  Returns linear indices
    (row-major over [lo, hi]) with ei < ej.
    """
    lo = np.asarray(lo, dtype=np.int64)
    hi = np.asarray(hi, dtype=np.int64)
    d = lo.shape[0]
    span = int(np.max(hi - lo))
    disps, sq = _lex_positive_disps(d, int(min(max_len, span)))
    vals = _eval_sq_vec(k, disps, sq)
    live = vals > 0.0
    disps, vals = disps[live], vals[live]
    probs = -np.expm1(-beta * vals)
    threshs = np.array([threshold_word(p) for p in probs], dtype=np.int64)
    xs, ks = backend.scan_pairs(field.seed, field.stream, lo, hi, disps, threshs)
    if xs.shape[0] == 0:
        e = np.empty(0, dtype=np.int64)
        return e, e.copy()
    strides = np.ones(d, dtype=np.int64)
    for i in range(d - 2, -1, -1):
        strides[i] = strides[i + 1] * int(hi[i + 1] - lo[i + 1] + 1)
    offs = disps @ strides
    ei, ej = xs, xs + offs[ks]
    order = np.lexsort((ej, ei))
    return np.ascontiguousarray(ei[order]), np.ascontiguousarray(ej[order])


def restrict_length(config: BoxConfig, N: float) -> BoxConfig:
    """Drop open edges with sup-norm length above N (the short environment)."""
    pi, pj = config.edge_points()
    keep = np.max(np.abs(pi - pj), axis=1) <= N
    prov = replace(config.provenance, length_cap=float(N))
    return BoxConfig(config.box, config.edges_i[keep], config.edges_j[keep], prov)


# -- plain text serialization --------------------------------------------------


def pf_to_spec(sf: ShortEdgeFunction) -> str:
    items = ";".join(
        f"{','.join(str(c) for c in cls)}:{v!r}" for cls, v in sorted(sf.table.items())
    )
    return (f"pf(d={sf.d},p={sf.p!r},table={items},"
            f"coef={sf.power_coef!r},start={sf.power_start!r})")


def pf_from_spec(spec: str) -> ShortEdgeFunction:
    import re

    m = re.fullmatch(
        r"pf\(d=(\d+),p=([^,]+),table=([^)]*),coef=([^,]+),start=([^)]+)\)",
        spec.strip(),
    )
    if not m:
        raise ValueError(f"unparseable short-edge spec: {spec}")
    table = {}
    if m.group(3):
        for item in m.group(3).split(";"):
            key, v = item.split(":")
            table[tuple(int(c) for c in key.split(","))] = float(v)
    return ShortEdgeFunction(int(m.group(1)), float(m.group(2)), table,
                             float(m.group(4)), float(m.group(5)))


def config_to_text(config: BoxConfig) -> str:
    p = config.provenance
    b = config.box
    header = (
        f"lrperc-box d={b.d} center={','.join(str(c) for c in b.center)} "
        f"radius={b.radius} model={p.model} kernel={p.kernel_spec} "
        f"beta={p.beta!r} seed={p.seed} stream={p.stream} "
        f"miss_budget={p.miss_budget!r} cutoff={p.cutoff_len} "
        f"miss_bound={p.miss_bound!r} length_cap={p.length_cap!r}"
    )
    pi, pj = config.edge_points()
    lines = [header]
    for a, bpt in zip(pi, pj):
        lines.append(
            ",".join(str(c) for c in a) + " " + ",".join(str(c) for c in bpt)
        )
    return "\n".join(lines) + "\n"


def config_from_text(text: str) -> BoxConfig:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    head = lines[0]
    if not head.startswith("lrperc-box "):
        raise ValueError("not a box configuration")
    fields = {}
    key = None
    for tok in head.split()[1:]:
        if "=" in tok:
            key, val = tok.split("=", 1)
            fields[key] = val
        else:  # kernel specs contain no spaces, so this should not happen
            fields[key] += " " + tok
    box = Box(int(fields["d"]),
              tuple(int(c) for c in fields["center"].split(",")),
              int(fields["radius"]))
    prov = Provenance(fields["model"], fields["kernel"], float(fields["beta"]),
                      int(fields["seed"]), int(fields["stream"]),
                      float(fields["miss_budget"]), int(fields["cutoff"]),
                      float(fields["miss_bound"]), float(fields["length_cap"]))
    ei, ej = [], []
    for ln in lines[1:]:
        a_txt, b_txt = ln.split()
        a = tuple(int(c) for c in a_txt.split(","))
        bpt = tuple(int(c) for c in b_txt.split(","))
        ei.append(box.index(a))
        ej.append(box.index(bpt))
    return BoxConfig(box, np.array(ei, dtype=np.int64),
                     np.array(ej, dtype=np.int64), prov)


def regenerate(config: BoxConfig) -> BoxConfig:
    """Re-sample from provenance alone; must reproduce the edge set exactly."""
    p = config.provenance
    field = CouplingField(p.seed, p.stream)
    if p.model == "beta":
        out = sample_box(kernel_from_spec(p.kernel_spec), p.beta, config.box,
                         field, p.miss_budget)
    else:
        out = sample_box_pf(pf_from_spec(p.kernel_spec), config.box, field,
                            p.miss_budget)
    if math.isfinite(p.length_cap):
        out = restrict_length(out, p.length_cap)
    return out
