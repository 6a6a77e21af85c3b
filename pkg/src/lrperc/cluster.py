"""Connected components, restricted clusters, and locally padded vertices."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import ndimage

from . import backend
from .errors import EmptySet, SourceOutsideSet
from .sampler import Box, BoxConfig

__all__ = [
    "ClusterForest",
    "components",
    "restricted_cluster",
    "largest_cluster",
    "find_mpads",
]


@dataclass
class ClusterForest:
    """Components of a box configuration, labelled by their smallest vertex.

    labels[v] is the linear index of the lexicographically smallest vertex
    in v's component, so two vertices share an open path iff their labels
    agree.  Linear index order equals lexicographic point order.
    """

    config: BoxConfig
    labels: np.ndarray = field(repr=False)

    @cached_property
    def _counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.labels.shape[0])

    @property
    def n_components(self) -> int:
        return int(np.count_nonzero(self._counts))

    def find(self, x) -> tuple[int, ...]:
        """Representative point (smallest member) of x's component."""
        root = int(self.labels[self.config.box.index(x)])
        return tuple(self.config.box.point(root))

    def size_of(self, x) -> int:
        return int(self._counts[self.labels[self.config.box.index(x)]])


def components(config: BoxConfig) -> ClusterForest:
    labels = backend.components(config.n_vertices, config.edges_i, config.edges_j)
    return ClusterForest(config=config, labels=labels)


def _as_mask(box: Box, A) -> np.ndarray:
    """Boolean membership over linear indices, from a mask or points."""
    if isinstance(A, np.ndarray) and A.dtype == bool:
        if A.shape != (box.volume,):
            raise ValueError(f"mask length {A.shape} does not match box volume")
        return A
    mask = np.zeros(box.volume, dtype=bool)
    for pt in A:
        mask[box.index(pt)] = True
    return mask


def restricted_cluster(config: BoxConfig, x, A) -> set[tuple[int, ...]]:
    """Vertices reachable from x along open edges that stay inside A.

    A is a boolean mask over the box's linear indices or an iterable of
    points.  x must belong to A.
    """
    box = config.box
    mask = _as_mask(box, A)
    xi = box.index(x)
    if not mask[xi]:
        raise SourceOutsideSet(f"{tuple(x)} is not in the restriction set")
    indptr, indices = config.csr
    dist, _ = backend.bfs(indptr, indices, np.array([xi], dtype=np.int64), mask)
    members = np.nonzero(dist >= 0)[0]
    pts = box.points_array()[members]
    return {tuple(int(c) for c in row) for row in pts}


def largest_cluster(forest: ClusterForest, A=None) -> tuple[int, tuple[int, ...]]:
    """(size, representative) of the largest component of the A-induced graph.

    Only edges with both endpoints in A count, so a component here may be a
    fragment of a global one.  Ties go to the component whose smallest
    vertex is lexicographically least; that vertex is the representative.
    """
    config = forest.config
    box = config.box
    if A is None:
        mask = np.ones(box.volume, dtype=bool)
    else:
        mask = _as_mask(box, A)
    if not mask.any():
        raise EmptySet("restriction set is empty")
    if mask.all():
        labels = forest.labels
    else:
        keep = mask[config.edges_i] & mask[config.edges_j]
        labels = backend.components(
            config.n_vertices, config.edges_i[keep], config.edges_j[keep]
        )
    roots = labels[mask]
    counts = np.bincount(roots)
    size = int(counts.max())
    best_root = int(np.nonzero(counts == size)[0][0])
    return size, tuple(int(c) for c in box.point(best_root))


def _mpads_grid(indptr, indices, lo, hi, region_mask, m) -> list[int]:
    """Linear indices x (row-major over [lo, hi]) of m-padded vertices.

    x qualifies when the whole sup-norm ball B_m(x) lies in the region and
    the graph induced on B_m(x) is connected.  Candidates are first pruned
    by component labels (internal connectivity forces one component), then
    confirmed by a ball-local search.
    """
    lo = np.asarray(lo, dtype=np.int64)
    hi = np.asarray(hi, dtype=np.int64)
    shape = tuple(int(s) for s in hi - lo + 1)
    n = int(np.prod(shape))
    region_nd = region_mask.reshape(shape)
    if m == 0:
        return [int(v) for v in np.nonzero(region_mask)[0]]

    inner = ndimage.minimum_filter(
        region_nd.astype(np.uint8), size=2 * m + 1, mode="constant", cval=0
    ).astype(bool)
    candidates = np.nonzero(inner.reshape(-1))[0]
    if candidates.shape[0] == 0:
        return []

    edge_src = np.repeat(
        np.arange(n, dtype=np.int64), np.diff(indptr).astype(np.int64)
    )
    labels = backend.components(n, edge_src, indices).reshape(shape)
    lin_nd = np.arange(n, dtype=np.int64).reshape(shape)
    ball = (2 * m + 1) ** len(shape)

    pads: list[int] = []
    for x in candidates:
        center = np.unravel_index(int(x), shape)
        win = tuple(slice(c - m, c + m + 1) for c in center)
        lab_win = labels[win]
        if lab_win.max() != lab_win.min():
            continue
        inside = set(int(v) for v in lin_nd[win].ravel())
        start = next(iter(inside))
        seen = {start}
        frontier = [start]
        while frontier:
            nxt = []
            for v in frontier:
                for w in indices[indptr[v]:indptr[v + 1]]:
                    w = int(w)
                    if w in inside and w not in seen:
                        seen.add(w)
                        nxt.append(w)
            frontier = nxt
        if len(seen) == ball:
            pads.append(int(x))
    return pads


def find_mpads(config: BoxConfig, region, m: int) -> list[tuple[int, ...]]:
    """Points x of the region whose ball B_m(x) sits in the region and is
    internally connected by open edges.  m = 0 admits every region point."""
    if m < 0:
        raise ValueError("pad radius must be nonnegative")
    box = config.box
    mask = _as_mask(box, region)
    indptr, indices = config.csr
    lins = _mpads_grid(indptr, indices, box.lo, box.hi, mask, m)
    return [tuple(int(c) for c in box.point(v)) for v in lins]
