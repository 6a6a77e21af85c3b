import numpy as np
import pytest

from lrperc import renorm
from lrperc.errors import GeometryInfeasible, SplitInvalid
from lrperc.kernel import nearest_neighbor, power_law
from lrperc.renorm import DirectedModel

from oracles import strip_exact

NN2 = nearest_neighbor(2, 1.0)
PL24 = power_law(2, 1.0, 4.0)
PL25 = power_law(2, 1.0, 5.0)


# ---------------------------------------------------------------- annulus

def test_annulus_probe_zero_beta():
    e = renorm.annulus_pad_probe(NN2, 0.0, n=6, m=1, delta=1.0,
                                 replicates=50, seed=3)
    assert e.value == 0.0


def test_annulus_probe_all_open():
    e = renorm.annulus_pad_probe(NN2, 800.0, n=6, m=1, delta=1.0,
                                 replicates=30, seed=3)
    assert e.value == 1.0


def test_annulus_probe_geometry_errors():
    with pytest.raises(GeometryInfeasible):
        renorm.annulus_pad_probe(NN2, 1.0, n=6, m=2, delta=1.0,
                                 replicates=10, seed=3)
    with pytest.raises(GeometryInfeasible):
        renorm.annulus_pad_probe(NN2, 1.0, n=6, m=1, delta=0.0,
                                 replicates=10, seed=3)
    with pytest.raises(GeometryInfeasible):
        renorm.annulus_pad_probe(NN2, 1.0, n=6, m=1, delta=1.5,
                                 replicates=10, seed=3)


def test_annulus_probe_monotone_in_beta():
    # The hit event is increasing in the configuration and the shared seed
    # couples the two betas, so the frequencies must be ordered.
    lo = renorm.annulus_pad_probe(PL24, 0.3, n=6, m=1, delta=1.0,
                                  replicates=80, seed=11)
    hi = renorm.annulus_pad_probe(PL24, 0.6, n=6, m=1, delta=1.0,
                                  replicates=80, seed=11)
    assert hi.value >= lo.value


# ---------------------------------------------------------------- exploration

def test_exploration_all_open_survives():
    r = renorm.directed_exploration(NN2, 800.0, n=2, m=1, N=8, depth=4,
                                    seed=5)
    assert r.survived
    assert r.depth == 4
    # every quadrant vertex on each diagonal stays active
    assert [row[1] for row in r.trace] == [1, 2, 3, 4, 5]
    assert {k: len(v) for k, v in r.state.active.items()} == \
        {0: 1, 1: 2, 2: 3, 3: 4, 4: 5}
    assert r.certificate_ok
    assert len(r.certificate) > 0
    for a, b, _ in r.certificate:
        assert np.max(np.abs(np.asarray(a) - np.asarray(b))) <= 14 * 2


def test_exploration_zero_beta_origin_dies():
    r = renorm.directed_exploration(NN2, 0.0, n=4, m=1, N=8, depth=3, seed=5)
    assert r.depth == -1
    assert not r.survived
    assert r.certificate is None


def test_exploration_zero_beta_point_pad():
    # m=0 makes the origin pad a single vertex, so level 0 is reached
    # but no bridge can open at beta=0.
    r = renorm.directed_exploration(NN2, 0.0, n=4, m=0, N=8, depth=3, seed=5)
    assert r.depth == 0
    assert not r.survived


def test_exploration_geometry_errors():
    with pytest.raises(GeometryInfeasible):
        renorm.directed_exploration(nearest_neighbor(1, 1.0), 1.0,
                                    n=4, m=1, N=8, depth=2, seed=5)
    with pytest.raises(GeometryInfeasible):
        renorm.directed_exploration(NN2, 1.0, n=4, m=4, N=8, depth=2, seed=5)
    with pytest.raises(GeometryInfeasible):
        renorm.directed_exploration(NN2, 1.0, n=4, m=1, N=57, depth=2, seed=5)
    with pytest.raises(GeometryInfeasible):
        renorm.directed_exploration(NN2, 1.0, n=4, m=1, N=0, depth=2, seed=5)


def test_exploration_split_validation():
    with pytest.raises(SplitInvalid):
        renorm.directed_exploration(NN2, 1.0, n=4, m=1, N=8, depth=2, seed=5,
                                    beta_tilde=0.9, eta=0.2)
    with pytest.raises(SplitInvalid):
        renorm.directed_exploration(NN2, 1.0, n=4, m=1, N=8, depth=2, seed=5,
                                    beta_tilde=0.0, eta=0.5)
    with pytest.raises(SplitInvalid):
        renorm.directed_exploration(NN2, 1.0, n=4, m=1, N=8, depth=2, seed=5,
                                    beta_tilde=1.2, eta=-0.1)


def test_exploration_stream_separation():
    r = renorm.directed_exploration(NN2, 800.0, n=2, m=1, N=8, depth=3,
                                    seed=5)
    tags_by_axis = {1: set(), 2: set()}
    for level, axis, tag in r.state.access_log:
        if axis == 0:
            assert tag == "beta"
            continue
        tags_by_axis[axis].add(tag)
    assert tags_by_axis[1] <= {"beta", "eta1"}
    assert tags_by_axis[2] <= {"beta", "eta2"}
    assert "eta1" in tags_by_axis[1]
    assert "eta2" in tags_by_axis[2]


def test_exploration_pad_requirement_matters():
    # With the pad gate disabled the origin is fabricated, but with no open
    # edges the first level still dies: survival stays at zero.
    r = renorm.directed_exploration(NN2, 0.0, n=4, m=1, N=8, depth=3, seed=5,
                                    require_pad=False)
    assert r.depth == 0
    assert not r.survived


def test_exploration_supercritical_survival_nontrivial():
    # Mildly supercritical point run: survivors exist and every survivor
    # carries a verified replay certificate.
    got = 0
    for s in range(12):
        r = renorm.directed_exploration(PL24, 1.0, n=3, m=0, N=6, depth=6,
                                        seed=900 + s)
        if r.survived:
            got += 1
            assert r.certificate_ok
            for a, b, _ in r.certificate:
                assert np.max(np.abs(np.asarray(a) - np.asarray(b))) <= 14 * 3
    assert got > 0


# ---------------------------------------------------------------- site-bond

def test_directed_survival_trivials():
    one = renorm.directed_survival(DirectedModel(1.0), depth=30,
                                   replicates=40, seed=2)
    assert one.value == 1.0
    zero = renorm.directed_survival(DirectedModel(0.0), depth=5,
                                    replicates=40, seed=2)
    assert zero.value == 0.0
    dead = renorm.directed_survival(
        DirectedModel(0.0, q=lambda u, axis: 0.0), depth=5,
        replicates=40, seed=2)
    assert dead.value == 0.0


def test_directed_survival_validation():
    with pytest.raises(ValueError):
        renorm.directed_survival(DirectedModel(1.3), depth=5,
                                 replicates=10, seed=2)
    with pytest.raises(ValueError):
        DirectedModel(0.8, q=lambda u, axis: 0.5).prob((0, 0), 1)


def test_directed_survival_depth_cap_in_model():
    m = DirectedModel(1.0, depth=3)
    est = renorm.directed_survival(m, depth=50, replicates=10, seed=2)
    assert est.value == 1.0


def strip_model(rho):
    return DirectedModel(0.0, q=lambda u, axis: 0.0
                         if (axis == 2 and u[1] >= 3) else rho)


@pytest.mark.parametrize("rho", [0.6, 0.9, 0.99])
def test_directed_survival_matches_strip_recursion(rho):
    depth = 40
    want = strip_exact(rho, depth)
    got = renorm.directed_survival(strip_model(rho), depth=depth,
                                   replicates=3000, seed=17)
    reps = 3000
    sigma = max(got.stderr, np.sqrt(max(want * (1 - want), 1e-12) / reps))
    assert abs(got.value - want) <= 4 * sigma + 1e-6


def test_directed_survival_monotone_in_rho():
    vals = [renorm.directed_survival(DirectedModel(r), depth=25,
                                     replicates=400, seed=23).value
            for r in (0.1, 0.4, 0.7, 0.9, 0.99)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))


# ---------------------------------------------------------------- depth probe

def test_depth_probe_zero_beta():
    rep = renorm.depth_no_pad_probe(NN2, 0.0, r=4, N=1, kk=8,
                                    replicates=40, seed=3)
    assert rep.estimate.value == 0.0
    assert rep.mean_boxes >= 1.0


def test_depth_probe_all_nn_open():
    rep = renorm.depth_no_pad_probe(NN2, 800.0, r=4, N=1, kk=9,
                                    replicates=30, seed=3)
    assert rep.estimate.value == 0.0


def test_depth_probe_validation():
    with pytest.raises(GeometryInfeasible):
        renorm.depth_no_pad_probe(NN2, 1.0, r=1, N=1, kk=8,
                                  replicates=10, seed=3)
    with pytest.raises(ValueError):
        renorm.depth_no_pad_probe(NN2, 1.0, r=4, N=1, kk=1,
                                  replicates=10, seed=3)


def test_depth_probe_decay_small_depths():
    # Decay of the no-pad event with depth is visible at small depths; the
    # frequency drops by roughly a decade per doubling here.
    vals = []
    for kk, reps in ((4, 4000), (8, 20000)):
        rep = renorm.depth_no_pad_probe(PL25, 0.47, r=2, N=1, kk=kk,
                                        replicates=reps, seed=3)
        vals.append(rep.estimate.value)
    assert vals[0] > vals[1] > 0.0
