import dataclasses

import numpy as np
import pytest

from lrperc import sampler, walk
from lrperc.coupling import CouplingField, STREAM_BASE
from lrperc.errors import Disconnected, IsolatedStart
from lrperc.kernel import nearest_neighbor, power_law, tabulated

import oracles

NN1 = nearest_neighbor(1, 1.0)
PL24 = power_law(2, 1.0, 4.0)


def pair_config():
    # radius-1 line whose only positive-probability class is distance 2:
    # a single open edge {-1, +1} with the center isolated
    k = tabulated(1, {(2,): 1000.0})
    return sampler.sample_box(k, 1.0, sampler.Box(1, (0,), 1),
                              CouplingField(4, STREAM_BASE))


def path_config(radius):
    return sampler.sample_box(NN1, 800.0, sampler.Box(1, (0,), radius),
                              CouplingField(4, STREAM_BASE))


# ---------------------------------------------------------------- walks

def test_return_frequency_single_edge():
    cfg = pair_config()
    est = walk.return_frequency(cfg, (-1,), steps=2, replicates=50, seed=9)
    assert est.value == 1.0
    assert est.stderr == 0.0


def test_return_frequency_isolated_start():
    cfg = pair_config()
    with pytest.raises(IsolatedStart):
        walk.return_frequency(cfg, (0,), steps=10, replicates=5, seed=9)


def test_return_frequency_finite_path_returns():
    cfg = path_config(2)
    est = walk.return_frequency(cfg, (0,), steps=1000, replicates=100, seed=9)
    assert est.value >= 0.99


def test_return_frequency_horizon_monotone():
    cfg = sampler.sample_box(PL24, 1.0, sampler.Box(2, (0, 0), 10),
                             CouplingField(11, STREAM_BASE))
    short = walk.return_frequency(cfg, (0, 0), steps=4, replicates=400,
                                  seed=9)
    long = walk.return_frequency(cfg, (0, 0), steps=200, replicates=400,
                                 seed=9)
    assert long.value >= short.value


def test_walk_stats_invariants():
    cfg = path_config(3)
    st = walk.walk_stats(cfg, (0,), steps=500, seed=9)
    assert st.steps == 500
    assert 0 <= st.returns <= st.steps
    assert np.all(st.visits >= 0)
    assert int(st.visits.sum()) == 501
    with pytest.raises(ValueError):
        walk.WalkStats(steps=5, returns=6, visits=np.zeros(2, dtype=np.int64),
                       seed=0)


# ---------------------------------------------------------------- resistance

def test_resistance_single_edge():
    cfg = pair_config()
    assert walk.effective_resistance(cfg, (-1,), [(1,)]) == pytest.approx(1.0)


def test_resistance_series():
    cfg = path_config(2)
    r = walk.effective_resistance(cfg, (0,), [(2,)])
    assert r == pytest.approx(2.0, abs=1e-8)


def test_resistance_parallel():
    # two 2-step arms from the center to the grounded pair of endpoints
    cfg = path_config(2)
    r = walk.effective_resistance(cfg, (0,), [(-2,), (2,)])
    assert r == pytest.approx(1.0, abs=1e-8)


def test_resistance_center_in_boundary():
    cfg = path_config(2)
    assert walk.effective_resistance(cfg, (0,), [(0,), (2,)]) == 0.0


def test_resistance_disconnected():
    cfg = pair_config()
    with pytest.raises(Disconnected):
        walk.effective_resistance(cfg, (-1,), [(0,)])


def test_resistance_matches_dense_oracle():
    box = sampler.Box(2, (0, 0), 1)
    corners = [(-1, -1), (-1, 1), (1, -1), (1, 1)]
    checked = 0
    for seed in range(30):
        cfg = sampler.sample_box(PL24, 0.8, box, CouplingField(seed, STREAM_BASE))
        edges = list(zip(cfg.edges_i.tolist(), cfg.edges_j.tolist()))
        bids = [cfg.box.index(c) for c in corners]
        try:
            got = walk.effective_resistance(cfg, (0, 0), corners)
        except Disconnected:
            continue
        want = oracles.resistance_to_set_dense(cfg.n_vertices, edges,
                                               cfg.box.index((0, 0)), bids)
        assert got == pytest.approx(want, abs=1e-6)
        checked += 1
    assert checked >= 10


def test_resistance_rayleigh_monotone_under_added_edge():
    for seed in range(6):
        cfg = sampler.sample_box(PL24, 0.7, sampler.Box(2, (0, 0), 2),
                                 CouplingField(seed, STREAM_BASE))
        try:
            base = walk.effective_resistance(cfg, (0, 0),
                                             [(2, 2), (-2, -2)])
        except Disconnected:
            continue
        # splice in one extra open edge not already present
        present = set(zip(cfg.edges_i.tolist(), cfg.edges_j.tolist()))
        extra = None
        for i in range(cfg.n_vertices):
            for j in range(i + 1, cfg.n_vertices):
                if (i, j) not in present:
                    extra = (i, j)
                    break
            if extra:
                break
        aug = dataclasses.replace(
            cfg,
            edges_i=np.append(cfg.edges_i, extra[0]),
            edges_j=np.append(cfg.edges_j, extra[1]))
        after = walk.effective_resistance(aug, (0, 0), [(2, 2), (-2, -2)])
        assert after <= base + 1e-7


def test_resistance_growth_probe_monotone():
    cfg = sampler.sample_box(PL24, 1.0, sampler.Box(2, (0, 0), 6),
                             CouplingField(3, STREAM_BASE))
    pts = cfg.box.points_array()
    vals = []
    for n in (2, 3, 4, 5, 6):
        rim = pts[np.max(np.abs(pts), axis=1) >= n]
        vals.append(walk.effective_resistance(cfg, (0, 0),
                                              [tuple(p) for p in rim]))
    assert all(a <= b + 1e-9 for a, b in zip(vals, vals[1:]))
