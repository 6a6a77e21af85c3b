"""Deterministic per-edge uniforms and the sprinkling construction.

A CouplingField is (seed, stream); the uniform attached to an edge is a pure
function of (seed, stream, canonical edge), so beta sweeps are monotone per
seed and independent layers are just distinct streams.  Streams 0, 1, 2 are
reserved for the base environment and the two sprinkling layers.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import _bits
from .errors import DimensionMismatch, SameStream, SelfLoop
from .kernel import Kernel, open_probability

STREAM_BASE = 0
STREAM_SPRINKLE_1 = 1
STREAM_SPRINKLE_2 = 2


@dataclass(frozen=True)
class CouplingField:
    seed: int
    stream: int = STREAM_BASE


def canonical_edge(x, y) -> tuple[tuple[int, ...], tuple[int, ...]]:
    a = tuple(int(c) for c in x)
    b = tuple(int(c) for c in y)
    if len(a) != len(b):
        raise DimensionMismatch("edge endpoints have different dimensions")
    if a == b:
        raise SelfLoop(f"edge endpoints coincide at {a}")
    return (a, b) if a < b else (b, a)


def edge_uniform(field: CouplingField, x, y) -> float:
    """U_e in [0, 1), invariant under endpoint swap."""
    a, b = canonical_edge(x, y)
    return _bits.hash_to_unit(_bits.edge_hash(field.seed, field.stream, a, b))


def edge_open(field: CouplingField, x, y, beta: float, k: Kernel) -> bool:
    """True iff U_e <= 1 - exp(-beta J(x - y)); always false at probability 0."""
    a, b = canonical_edge(x, y)
    p = open_probability(k, beta, tuple(ac - bc for ac, bc in zip(a, b)))
    if p <= 0.0:
        return False
    return edge_uniform(field, a, b) <= p


def union_field(x, y, k: Kernel, f1: CouplingField, beta: float,
                f2: CouplingField, alpha: float) -> bool:
    """Open in the union of independent layers at beta and alpha.

    Distributed like a single layer at beta + alpha.
    """
    if f1.stream == f2.stream:
        raise SameStream("sprinkling layers must use distinct streams")
    return edge_open(f1, x, y, beta, k) or edge_open(f2, x, y, alpha, k)


def replicate_seed(base: int, index: int) -> int:
    """Seed for replicate number index, a pure function of (base, index)."""
    return _bits.mix(base, index)


@dataclass(frozen=True)
class SplitConfig:
    """Decomposition beta = beta_main + 2 * eta across streams 0, 1, 2."""

    beta_main: float
    eta: float

    @property
    def beta(self) -> float:
        return self.beta_main + 2.0 * self.eta


def default_split(beta: float) -> SplitConfig:
    return SplitConfig(0.75 * beta, 0.125 * beta)
