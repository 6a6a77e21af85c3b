"""Kernel families J: Z^d \\ {0} -> [0, inf) and short-edge functions.

Conventions used throughout the package: truncation radii are Euclidean,
boxes and edge lengths use the sup norm.  Every family is invariant under
coordinate permutations and sign flips; evaluation canonicalizes the
displacement by sorting absolute coordinates.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping

import numpy as np
from scipy.special import exp1, gammaincc, polygamma

from .errors import (
    DimensionMismatch,
    DivergentTail,
    OverlappingSets,
    ZeroDisplacement,
)

TAIL_TOL = 1e-12


def canonical_class(x) -> tuple[int, ...]:
    """Orbit representative under sign flips and coordinate permutations."""
    return tuple(sorted(abs(int(c)) for c in x))


def class_multiplicity(cls: tuple[int, ...]) -> int:
    """Number of lattice points in the orbit of a canonical class."""
    perms = math.factorial(len(cls))
    seen: dict[int, int] = {}
    for c in cls:
        seen[c] = seen.get(c, 0) + 1
    for count in seen.values():
        perms //= math.factorial(count)
    nonzero = sum(1 for c in cls if c != 0)
    return perms * (1 << nonzero)


@dataclass(frozen=True)
class Kernel:
    d: int

    def __post_init__(self):
        if self.d < 1:
            raise DimensionMismatch(f"dimension must be positive, got {self.d}")

    def _value(self, sq: int, cls: tuple[int, ...]) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class PowerLaw(Kernel):
    """J(x) = C * |x|_2^(-s).  Integrable iff s > d."""

    C: float
    s: float

    def __post_init__(self):
        super().__post_init__()
        if self.C <= 0 or self.s <= 0:
            raise ValueError("power_law needs C > 0 and s > 0")

    def _value(self, sq, cls):
        return self.C * sq ** (-self.s / 2.0)


@dataclass(frozen=True)
class Truncated(Kernel):
    base: Kernel
    radius: float

    def __post_init__(self):
        super().__post_init__()
        if self.radius <= 0:
            raise ValueError("truncation radius must be positive")
        if self.base.d != self.d:
            raise DimensionMismatch("truncated base has different dimension")

    def _value(self, sq, cls):
        if sq > self.radius * self.radius:
            return 0.0
        return self.base._value(sq, cls)


@dataclass(frozen=True)
class NearestNeighbor(Kernel):
    weight: float

    def __post_init__(self):
        super().__post_init__()
        if self.weight <= 0:
            raise ValueError("nearest_neighbor weight must be positive")

    def _value(self, sq, cls):
        return self.weight if sq == 1 else 0.0


@dataclass(frozen=True)
class Tabulated(Kernel):
    table: Mapping[tuple[int, ...], float] = field(default_factory=dict)

    def __post_init__(self):
        super().__post_init__()
        canon = {}
        for key, w in self.table.items():
            if len(key) != self.d:
                raise DimensionMismatch(f"table key {key} has wrong dimension")
            if all(c == 0 for c in key):
                raise ZeroDisplacement("table may not assign the zero class")
            if w < 0:
                raise ValueError("table weights must be nonnegative")
            canon[canonical_class(key)] = float(w)
        object.__setattr__(self, "table", canon)

    def _value(self, sq, cls):
        return self.table.get(cls, 0.0)


@dataclass(frozen=True)
class PerturbedNN(Kernel):
    """base + nn_bonus on the 2d unit vectors."""

    base: Kernel
    nn_bonus: float

    def __post_init__(self):
        super().__post_init__()
        if self.nn_bonus < 0:
            raise ValueError("nn_bonus must be nonnegative")
        if self.base.d != self.d:
            raise DimensionMismatch("perturbed base has different dimension")

    def _value(self, sq, cls):
        v = self.base._value(sq, cls)
        return v + self.nn_bonus if sq == 1 else v


def power_law(d: int, C: float, s: float) -> PowerLaw:
    return PowerLaw(d, C, s)


def nearest_neighbor(d: int, weight: float) -> NearestNeighbor:
    return NearestNeighbor(d, weight)


def tabulated(d: int, table: Mapping[tuple[int, ...], float]) -> Tabulated:
    return Tabulated(d, table)


def perturbed_nn(base: Kernel, nn_bonus: float) -> PerturbedNN:
    return PerturbedNN(base.d, base, nn_bonus)


def _check_displacement(k: Kernel, x) -> tuple[int, tuple[int, ...]]:
    if len(x) != k.d:
        raise DimensionMismatch(f"displacement has {len(x)} coords, kernel d={k.d}")
    sq = 0
    for c in x:
        ci = int(c)
        sq += ci * ci
    if sq == 0:
        raise ZeroDisplacement("kernels are not defined at the origin")
    return sq, canonical_class(x)


def kernel_eval(k: Kernel, x) -> float:
    """J(x); equal on every symmetry image of x.  Rejects x = 0."""
    sq, cls = _check_displacement(k, x)
    return k._value(sq, cls)


def open_probability(k: Kernel, beta: float, x) -> float:
    """1 - exp(-beta * J(x))."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    return -math.expm1(-beta * kernel_eval(k, x))


def kernel_mass(k: Kernel, A, B) -> float:
    """J(A, B) = sum over x in A, y in B of J(x - y); A and B disjoint."""
    sa = {tuple(int(c) for c in x) for x in A}
    sb = {tuple(int(c) for c in y) for y in B}
    if sa & sb:
        raise OverlappingSets("kernel_mass needs disjoint vertex sets")
    total = 0.0
    for x in sa:
        for y in sb:
            total += kernel_eval(k, tuple(xc - yc for xc, yc in zip(x, y)))
    return total


def truncate(k: Kernel, N: float) -> Kernel:
    """Zero the kernel outside Euclidean radius N; idempotent."""
    if N <= 0:
        raise ValueError("truncation radius must be positive")
    if isinstance(k, Truncated):
        return Truncated(k.d, k.base, min(k.radius, N))
    return Truncated(k.d, k, N)


# -- tail sums ----------------------------------------------------------------
#
# Power-law tails need sum over |x|_2 > R of C |x|^-s to 1e-12 absolute; naive
# shell accumulation cannot reach that for d >= 2 (the shells decay too
# slowly), so the full lattice sum is evaluated once through its incomplete
# gamma representation and finite partial sums are subtracted.


def _upper_gamma(a: float, x: float) -> float:
    if abs(a) < 1e-12:
        return float(exp1(x))
    if a > 0:
        return float(gammaincc(a, x)) * math.gamma(a)
    return (_upper_gamma(a + 1.0, x) - x**a * math.exp(-x)) / a


@lru_cache(maxsize=None)
def _epstein_zeta(d: int, s: float) -> float:
    """Sum over x in Z^d, x != 0, of |x|_2^(-s), for s > d."""
    half = s / 2.0
    dual = (d - s) / 2.0
    total = 2.0 / (s - d) - 2.0 / s
    rng = np.arange(-5, 6)
    grids = np.meshgrid(*([rng] * d), indexing="ij")
    sq = sum(g * g for g in grids).ravel()
    counts = np.bincount(sq)
    for q, cnt in enumerate(counts):
        if q == 0 or cnt == 0:
            continue
        piq = math.pi * q
        term = (piq**-half) * _upper_gamma(half, piq)
        term += (piq**-dual) * _upper_gamma(dual, piq)
        total += cnt * term
    return total / (math.pi**-half * math.gamma(half))


def _ball_sum_power(d: int, s: float, R: float) -> float:
    """Sum over 0 < |x|_2 <= R of |x|_2^(-s)."""
    M = int(math.floor(R))
    if M < 1:
        return 0.0
    rng = np.arange(-M, M + 1)
    grids = np.meshgrid(*([rng] * d), indexing="ij")
    sq = sum(g * g for g in grids).ravel()
    sq = sq[(sq > 0) & (sq <= R * R)]
    return float(np.sum(sq.astype(np.float64) ** (-s / 2.0)))


def _finite_classes(k: Kernel) -> dict[tuple[int, ...], float] | None:
    """Canonical class -> weight for kernels of finite support, else None."""
    if isinstance(k, NearestNeighbor):
        cls = tuple([0] * (k.d - 1) + [1])
        return {cls: k.weight}
    if isinstance(k, Tabulated):
        return dict(k.table)
    if isinstance(k, PerturbedNN):
        inner = _finite_classes(k.base)
        if inner is None:
            return None
        cls = tuple([0] * (k.d - 1) + [1])
        inner[cls] = inner.get(cls, 0.0) + k.nn_bonus
        return inner
    if isinstance(k, Truncated):
        inner = _finite_classes(k.base)
        if inner is None:
            rad = int(math.floor(k.radius))
            out: dict[tuple[int, ...], float] = {}
            for cls, sq in _classes_within(k.d, rad):
                if sq <= k.radius * k.radius:
                    v = k.base._value(sq, cls)
                    if v != 0.0:
                        out[cls] = v
            return out
        r2 = k.radius * k.radius
        return {c: w for c, w in inner.items() if _sq(c) <= r2}
    return None  # pure power law


def _sq(cls: tuple[int, ...]) -> int:
    return sum(c * c for c in cls)


def _classes_within(d: int, radius: int):
    """All canonical classes with sup norm <= radius, with their |.|_2^2."""
    def rec(prefix, minv, depth):
        if depth == d:
            if any(prefix):
                yield tuple(prefix), sum(c * c for c in prefix)
            return
        for c in range(minv, radius + 1):
            yield from rec(prefix + [c], c, depth + 1)

    yield from rec([], 0, 0)


def tail_mass(k: Kernel, R: float) -> float:
    """Sum of J(x) over Euclidean |x| > R, to 1e-12 absolute."""
    if R < 0:
        raise ValueError("R must be nonnegative")
    if isinstance(k, Truncated):
        if R >= k.radius:
            return 0.0
        return tail_mass(k.base, R) - tail_mass(k.base, k.radius)
    finite = _finite_classes(k)
    if finite is not None:
        r2 = R * R
        return sum(
            w * class_multiplicity(c) for c, w in finite.items() if _sq(c) > r2
        )
    if isinstance(k, PerturbedNN):
        bonus = 2 * k.d * k.nn_bonus if R < 1 else 0.0
        return tail_mass(k.base, R) + bonus
    assert isinstance(k, PowerLaw)
    if k.s <= k.d:
        raise DivergentTail(f"power law with s={k.s} <= d={k.d} has no finite mass")
    return k.C * (_epstein_zeta(k.d, k.s) - _ball_sum_power(k.d, k.s, R))


def _power_part(k: Kernel) -> tuple[float, float] | None:
    """(C, s) of the far-field power component, None if finitely supported."""
    if isinstance(k, PowerLaw):
        return (k.C, k.s)
    if isinstance(k, PerturbedNN):
        return _power_part(k.base)
    return None  # NearestNeighbor, Tabulated, Truncated


def _near_radius(k: Kernel) -> float:
    """Radius beyond which the kernel equals its power part exactly."""
    if isinstance(k, PowerLaw):
        return 0.0
    if isinstance(k, Truncated):
        return k.radius
    if isinstance(k, NearestNeighbor):
        return 1.0
    if isinstance(k, Tabulated):
        return math.sqrt(max((_sq(c) for c in k.table), default=0))
    if isinstance(k, PerturbedNN):
        return max(1.0, _near_radius(k.base))
    raise TypeError(k)


def l1_distance(k1: Kernel, k2: Kernel) -> float:
    """Sum over x of |k1(x) - k2(x)|, to 1e-12 absolute."""
    if k1.d != k2.d:
        raise DimensionMismatch("kernels live in different dimensions")
    d = k1.d
    p1, p2 = _power_part(k1), _power_part(k2)
    Rcut = max(_near_radius(k1), _near_radius(k2), 1.0)
    if p1 and p2 and p1 != p2:
        # beyond the crossing radius the power difference keeps one sign
        (c1, s1), (c2, s2) = p1, p2
        if s1 != s2:
            Rcut = max(Rcut, (c1 / c2) ** (1.0 / (s1 - s2)))
    M = int(math.floor(Rcut))
    total = 0.0
    for cls, sq in _classes_within(d, M):
        if sq <= Rcut * Rcut:
            diff = abs(k1._value(sq, cls) - k2._value(sq, cls))
            if diff:
                total += diff * class_multiplicity(cls)
    if p1 == p2:
        return total
    # at most one distinct power tail survives past Rcut; signs are constant
    t1 = tail_mass(k1, Rcut) if p1 else 0.0
    t2 = tail_mass(k2, Rcut) if p2 else 0.0
    return total + abs(t1 - t2)


# -- short-edge (p, f) model --------------------------------------------------


@dataclass(frozen=True)
class ShortEdgeFunction:
    """Open probabilities directly: p on unit edges, f(x) on longer ones.

    f is a finite table within Euclidean radius `power_start` and
    power_coef / |x|_2^2 beyond it (d = 1 only for the power part).
    """

    d: int
    p: float
    table: Mapping[tuple[int, ...], float] = field(default_factory=dict)
    power_coef: float = 0.0
    power_start: float = math.inf

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must be a probability")
        canon = {}
        for key, v in self.table.items():
            if len(key) != self.d:
                raise DimensionMismatch(f"table key {key} has wrong dimension")
            if not 0.0 <= v < 1.0:
                raise ValueError("f values must lie in [0, 1)")
            canon[canonical_class(key)] = float(v)
        object.__setattr__(self, "table", canon)
        if self.power_coef:
            if self.d != 1:
                raise DimensionMismatch("power-tail f is represented for d=1 only")
            first = math.floor(self.power_start) + 1
            if self.power_coef / (first * first) >= 1.0:
                raise ValueError("power tail reaches 1; not a probability")
            if self.power_coef < 0:
                raise ValueError("power tail must be nonnegative")


def pf_probability(sf: ShortEdgeFunction, x) -> float:
    """Open probability of the displacement x under the (p, f) model."""
    if len(x) != sf.d:
        raise DimensionMismatch(f"displacement has {len(x)} coords, d={sf.d}")
    sq = sum(int(c) * int(c) for c in x)
    if sq == 0:
        raise ZeroDisplacement("no self loops")
    if sq == 1:
        return sf.p
    if sf.power_coef and sq > sf.power_start * sf.power_start:
        return sf.power_coef / sq
    return sf.table.get(canonical_class(x), 0.0)


def pf_tail(sf: ShortEdgeFunction, R: float) -> float:
    """Sum of open probabilities over Euclidean |x| > R (cutoff budgeting)."""
    r2 = R * R
    total = sum(
        v * class_multiplicity(c)
        for c, v in sf.table.items()
        if _sq(c) > r2 and _sq(c) <= sf.power_start**2
    )
    if R < 1 <= sf.power_start:
        total += sf.p * 2 * sf.d
    if sf.power_coef:
        start = int(math.floor(max(R, sf.power_start)))
        # sum_{n > start} n^-2, exactly the trigamma function at start+1
        total += 2.0 * sf.power_coef * float(polygamma(1, start + 1))
    return total


def make_counterexample_1d(f: ShortEdgeFunction, gamma: float, n: int) -> ShortEdgeFunction:
    """f_n agreeing with f up to |x| <= n and gamma / x^2 beyond."""
    if f.d != 1:
        raise DimensionMismatch("counterexample construction is one-dimensional")
    if gamma <= 1.0:
        raise ValueError("gamma must exceed 1")
    if n < 1:
        raise ValueError("n must be a positive integer")
    if gamma / ((n + 1) * (n + 1)) >= 1.0:
        raise ValueError("gamma too large for this n; f would reach 1")
    near = {}
    for j in range(2, n + 1):
        v = pf_probability(f, (j,))
        if v:
            near[(j,)] = v
    return ShortEdgeFunction(1, f.p, near, power_coef=gamma, power_start=float(n))


# -- plain-text kernel specs (configs and provenance) -------------------------


def kernel_to_spec(k: Kernel) -> str:
    if isinstance(k, PowerLaw):
        return f"power_law(d={k.d},C={k.C!r},s={k.s!r})"
    if isinstance(k, Truncated):
        return f"truncated({kernel_to_spec(k.base)},N={k.radius!r})"
    if isinstance(k, NearestNeighbor):
        return f"nearest_neighbor(d={k.d},w={k.weight!r})"
    if isinstance(k, PerturbedNN):
        return f"perturbed_nn({kernel_to_spec(k.base)},bonus={k.nn_bonus!r})"
    if isinstance(k, Tabulated):
        items = ";".join(
            f"{','.join(str(c) for c in cls)}:{w!r}"
            for cls, w in sorted(k.table.items())
        )
        return f"tabulated(d={k.d},table={items})"
    raise TypeError(k)


def kernel_from_spec(spec: str) -> Kernel:
    spec = spec.strip()
    m = re.fullmatch(r"power_law\(d=(\d+),C=([^,]+),s=([^)]+)\)", spec)
    if m:
        return PowerLaw(int(m.group(1)), float(m.group(2)), float(m.group(3)))
    m = re.fullmatch(r"truncated\((.+),N=([^)]+)\)", spec)
    if m:
        return truncate(kernel_from_spec(m.group(1)), float(m.group(2)))
    m = re.fullmatch(r"nearest_neighbor\(d=(\d+),w=([^)]+)\)", spec)
    if m:
        return NearestNeighbor(int(m.group(1)), float(m.group(2)))
    m = re.fullmatch(r"perturbed_nn\((.+),bonus=([^)]+)\)", spec)
    if m:
        base = kernel_from_spec(m.group(1))
        return PerturbedNN(base.d, base, float(m.group(2)))
    m = re.fullmatch(r"tabulated\(d=(\d+),table=([^)]*)\)", spec)
    if m:
        d = int(m.group(1))
        table = {}
        if m.group(2):
            for item in m.group(2).split(";"):
                key, w = item.split(":")
                table[tuple(int(c) for c in key.split(","))] = float(w)
        return Tabulated(d, table)
    raise ValueError(f"unparseable kernel spec: {spec}")
