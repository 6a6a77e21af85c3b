"""Hand-built configurations for graph-level tests."""

from __future__ import annotations

import numpy as np

from lrperc.sampler import Box, BoxConfig, Provenance


def handmade(box: Box, point_pairs) -> BoxConfig:
    """Config with exactly the given open edges (pairs of lattice points)."""
    ei, ej = [], []
    for x, y in point_pairs:
        i, j = box.index(x), box.index(y)
        if i == j:
            raise ValueError("self loop in fixture")
        ei.append(min(i, j))
        ej.append(max(i, j))
    ei = np.asarray(ei, dtype=np.int64)
    ej = np.asarray(ej, dtype=np.int64)
    order = np.lexsort((ej, ei))
    prov = Provenance(
        model="handmade", kernel_spec="none", beta=0.0, seed=0, stream=0,
        miss_budget=1.0, cutoff_len=0, miss_bound=0.0,
    )
    return BoxConfig(box=box, edges_i=ei[order], edges_j=ej[order], provenance=prov)


def add_edge(config: BoxConfig, x, y) -> BoxConfig:
    """Copy of config with one more open edge."""
    box = config.box
    i, j = box.index(x), box.index(y)
    ei = np.append(config.edges_i, min(i, j))
    ej = np.append(config.edges_j, max(i, j))
    order = np.lexsort((ej, ei))
    return BoxConfig(box=box, edges_i=ei[order], edges_j=ej[order],
                     provenance=config.provenance)
