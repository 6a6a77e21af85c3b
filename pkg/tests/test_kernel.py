import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from lrperc import kernel as kn
from lrperc.errors import (
    DimensionMismatch,
    DivergentTail,
    OverlappingSets,
    ZeroDisplacement,
)

from oracles import CATALAN, dirichlet_beta3, direct_ball_sum, orbit_points, riemann_zeta


def test_eval_power_law_basics():
    k = kn.power_law(2, 1.0, 4.0)
    assert kn.kernel_eval(k, (1, 0)) == 1.0
    assert kn.kernel_eval(k, (0, -1)) == 1.0
    assert kn.kernel_eval(k, (1, 1)) == pytest.approx(0.25)


def test_eval_rejects_origin_and_bad_dimension():
    k = kn.power_law(2, 1.0, 4.0)
    with pytest.raises(ZeroDisplacement):
        kn.kernel_eval(k, (0, 0))
    with pytest.raises(DimensionMismatch):
        kn.kernel_eval(k, (1, 0, 0))


def test_truncated_beyond_radius_is_zero():
    k = kn.truncate(kn.power_law(2, 1.0, 4.0), 2.0)
    assert kn.kernel_eval(k, (3, 0)) == 0.0
    # (1,1) has Euclidean norm sqrt(2) <= 2, still inside
    assert kn.kernel_eval(k, (1, 1)) == 0.25
    tight = kn.truncate(kn.power_law(2, 1.0, 4.0), 1.0)
    assert kn.kernel_eval(tight, (1, 1)) == 0.0


def test_truncate_idempotent():
    k = kn.power_law(2, 1.0, 4.0)
    t2 = kn.truncate(k, 2.0)
    assert kn.truncate(t2, 5.0).radius == 2.0
    assert kn.truncate(t2, 1.0).radius == 1.0


def test_open_probability():
    k = kn.power_law(2, 1.0, 4.0)
    assert kn.open_probability(k, 0.0, (1, 0)) == 0.0
    assert kn.open_probability(k, math.log(2), (1, 0)) == pytest.approx(0.5)
    nn = kn.nearest_neighbor(2, 1.0)
    assert kn.open_probability(nn, 5.0, (1, 1)) == 0.0


def test_kernel_mass_examples():
    k1 = kn.power_law(1, 1.0, 4.0)
    assert kn.kernel_mass(k1, [(0,)], [(1,)]) == 1.0
    assert kn.kernel_mass(k1, [(0,)], [(1,), (2,)]) == pytest.approx(1.0625)
    # two-by-two direct summation
    want = 3.0**-4 + 4.0**-4 + 2.0**-4 + 3.0**-4
    assert kn.kernel_mass(k1, [(0,), (1,)], [(3,), (4,)]) == pytest.approx(want)


def test_kernel_mass_rejects_overlap():
    k = kn.power_law(1, 1.0, 4.0)
    with pytest.raises(OverlappingSets):
        kn.kernel_mass(k, [(0,), (1,)], [(1,), (2,)])


@given(st.integers(-4, 4), st.integers(-4, 4), st.integers(-4, 4))
def test_mass_additivity(a, b, c):
    k = kn.power_law(1, 1.0, 3.0)
    A = [(10,)]
    B, C = [(a,)], [(b,), (c,)]
    if {(a,)} & {(b,), (c,)} or (10,) in [(a,), (b,), (c,)]:
        return
    lhs = kn.kernel_mass(k, A, B + C)
    assert lhs == pytest.approx(kn.kernel_mass(k, A, B) + kn.kernel_mass(k, A, C))


@given(
    st.tuples(st.integers(-6, 6), st.integers(-6, 6), st.integers(-6, 6)).filter(
        lambda x: any(x)
    ),
    st.permutations([0, 1, 2]),
    st.tuples(st.sampled_from([-1, 1]), st.sampled_from([-1, 1]), st.sampled_from([-1, 1])),
)
def test_symmetry_orbit_single_value(x, perm, signs):
    k = kn.tabulated(3, {(1, 2, 3): 0.5, (0, 0, 1): 0.25, (1, 1, 1): 0.125})
    y = tuple(signs[i] * x[perm[i]] for i in range(3))
    assert kn.kernel_eval(k, x) == kn.kernel_eval(k, y)


@given(st.tuples(st.integers(-5, 5), st.integers(-5, 5)).filter(lambda x: any(x)))
def test_truncation_monotone(x):
    k = kn.power_law(2, 1.3, 4.5)
    for N in (1.0, 2.0, 3.5):
        assert kn.kernel_eval(kn.truncate(k, N), x) <= kn.kernel_eval(k, x)


def test_class_multiplicity_matches_brute_force():
    for cls in [(0, 1), (1, 1), (1, 2), (0, 0, 1), (1, 2, 3), (2, 2), (0, 1, 1)]:
        assert kn.class_multiplicity(cls) == len(orbit_points(cls))


# -- tail sums ----------------------------------------------------------------


def test_tail_mass_1d_frozen_example():
    # sum over x != 0 of |x|^-3 equals 2 * zeta(3)
    k = kn.power_law(1, 1.0, 3.0)
    got = kn.tail_mass(k, 0.0)
    assert got == pytest.approx(2.404114, abs=5e-7)
    assert got == pytest.approx(2.0 * riemann_zeta(3.0), abs=1e-12)


def test_epstein_zeta_d2_closed_forms():
    # Z_2(s) = 4 zeta(s/2) beta(s/2) for the square lattice
    assert kn._epstein_zeta(2, 4.0) == pytest.approx(
        4.0 * riemann_zeta(2.0) * CATALAN, abs=1e-12
    )
    assert kn._epstein_zeta(2, 6.0) == pytest.approx(
        4.0 * riemann_zeta(3.0) * dirichlet_beta3(), abs=1e-12
    )


@pytest.mark.parametrize("d,s,R", [(2, 5.0, 40.0), (3, 7.0, 12.0)])
def test_epstein_zeta_sandwich(d, s, R):
    # partial sum < Z < partial sum + covering-integral bound
    partial = direct_ball_sum(d, s, R)
    z = kn._epstein_zeta(d, s)
    surface = 2.0 * math.pi if d == 2 else 4.0 * math.pi
    bound = surface * (R - math.sqrt(d)) ** (d - s) / (s - d)
    assert partial < z < partial + bound


def test_tail_mass_truncated_and_nn():
    base = kn.power_law(2, 1.0, 5.0)
    t = kn.truncate(base, 4.0)
    assert kn.tail_mass(t, 4.0) == 0.0
    assert kn.tail_mass(t, 5.0) == 0.0
    assert kn.tail_mass(kn.nearest_neighbor(2, 3.0), 1.0) == 0.0
    assert kn.tail_mass(kn.nearest_neighbor(2, 3.0), 0.5) == pytest.approx(12.0)


def test_tail_mass_truncated_band():
    base = kn.power_law(2, 1.0, 5.0)
    t = kn.truncate(base, 4.0)
    want = direct_ball_sum(2, 5.0, 4.0) - direct_ball_sum(2, 5.0, 2.0)
    assert kn.tail_mass(t, 2.0) == pytest.approx(want, abs=1e-12)


def test_tail_mass_matches_direct_difference():
    k = kn.power_law(2, 1.0, 5.0)
    full = kn.tail_mass(k, 0.0)
    assert kn.tail_mass(k, 7.0) == pytest.approx(
        full - direct_ball_sum(2, 5.0, 7.0), abs=1e-12
    )


def test_tail_mass_monotone_to_zero():
    k = kn.power_law(2, 2.0, 6.0)
    vals = [kn.tail_mass(k, R) for R in (0.0, 1.0, 2.0, 4.0, 8.0, 16.0)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-2 * vals[0]


def test_tail_mass_divergent():
    with pytest.raises(DivergentTail):
        kn.tail_mass(kn.power_law(2, 1.0, 2.0), 1.0)


def test_perturbed_nn_eval_and_tail():
    k = kn.perturbed_nn(kn.power_law(2, 1.0, 4.0), 1.0)
    assert kn.kernel_eval(k, (1, 0)) == 2.0
    assert kn.kernel_eval(k, (1, 1)) == 0.25
    assert kn.tail_mass(k, 0.5) == pytest.approx(
        kn.tail_mass(k.base, 0.5) + 4 * 1.0, abs=1e-12
    )
    assert kn.tail_mass(k, 1.0) == pytest.approx(kn.tail_mass(k.base, 1.0), abs=1e-12)


# -- L1 distances -------------------------------------------------------------


def test_l1_distance_self_and_truncation_identity():
    k = kn.power_law(2, 1.0, 4.0)
    assert kn.l1_distance(k, k) == 0.0
    for N in (2.0, 4.0, 8.0):
        assert kn.l1_distance(k, kn.truncate(k, N)) == pytest.approx(
            kn.tail_mass(k, N), abs=1e-11
        )


def test_l1_distance_prefactor_gap():
    k1 = kn.power_law(1, 1.0, 4.0)
    k2 = kn.power_law(1, 1.1, 4.0)
    want = 0.1 * 2.0 * riemann_zeta(4.0)
    assert kn.l1_distance(k1, k2) == pytest.approx(want, abs=1e-12)


def test_l1_distance_crossing_exponents():
    # C1 r^-s1 and C2 r^-s2 cross; direct small-d=1 summation as oracle
    k1 = kn.power_law(1, 1.0, 3.0)
    k2 = kn.power_law(1, 2.0, 4.0)
    direct = sum(
        abs(1.0 / x**3 - 2.0 / x**4) * 2.0 for x in range(1, 400000)
    )
    assert kn.l1_distance(k1, k2) == pytest.approx(direct, abs=1e-9)


def test_l1_distance_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        kn.l1_distance(kn.power_law(1, 1.0, 3.0), kn.power_law(2, 1.0, 3.0))


def test_l1_distance_divergent_power_parts():
    k1 = kn.power_law(2, 1.0, 2.0)
    k2 = kn.nearest_neighbor(2, 1.0)
    with pytest.raises(DivergentTail):
        kn.l1_distance(k1, k2)
    # identical divergent parts cancel; distance is the near-field table gap
    k3 = kn.perturbed_nn(k1, 0.5)
    assert kn.l1_distance(k1, k3) == pytest.approx(0.5 * 4)


# -- short-edge model ---------------------------------------------------------


def test_pf_probability_and_validation():
    sf = kn.ShortEdgeFunction(1, 0.5, {(2,): 0.3})
    assert kn.pf_probability(sf, (1,)) == 0.5
    assert kn.pf_probability(sf, (-2,)) == 0.3
    assert kn.pf_probability(sf, (5,)) == 0.0
    with pytest.raises(ZeroDisplacement):
        kn.pf_probability(sf, (0,))
    with pytest.raises(ValueError):
        kn.ShortEdgeFunction(1, 1.5)
    with pytest.raises(ValueError):
        kn.ShortEdgeFunction(1, 0.5, {(2,): 1.0})


def test_make_counterexample_values():
    f = kn.ShortEdgeFunction(1, 0.5, {(2,): 0.3})
    fn = kn.make_counterexample_1d(f, 1.2, 4)
    assert kn.pf_probability(fn, (2,)) == 0.3
    assert kn.pf_probability(fn, (3,)) == 0.0
    assert kn.pf_probability(fn, (8,)) == pytest.approx(1.2 / 64.0)
    assert kn.pf_probability(fn, (-8,)) == pytest.approx(1.2 / 64.0)


def test_make_counterexample_guards():
    f = kn.ShortEdgeFunction(1, 0.5)
    with pytest.raises(ValueError):
        kn.make_counterexample_1d(f, 1.0, 4)
    f2 = kn.ShortEdgeFunction(2, 0.5)
    with pytest.raises(DimensionMismatch):
        kn.make_counterexample_1d(f2, 1.2, 4)


def test_counterexample_gap_decreases_in_n():
    # sum over |x| > n of |f(x) - gamma/x^2| shrinks as n grows
    f = kn.ShortEdgeFunction(1, 0.5)
    gamma = 1.2

    def gap(n):
        return sum(2.0 * gamma / x**2 for x in range(n + 1, 200000))

    assert gap(8) < gap(4)
    f4 = kn.make_counterexample_1d(f, gamma, 4)
    assert kn.pf_tail(f4, 4.0) == pytest.approx(gap(4), abs=1e-4)


def test_pf_tail_table_part():
    sf = kn.ShortEdgeFunction(1, 0.5, {(2,): 0.3, (3,): 0.1})
    assert kn.pf_tail(sf, 2.0) == pytest.approx(0.2)
    assert kn.pf_tail(sf, 0.5) == pytest.approx(0.5 * 2 + 0.6 + 0.2)


# -- spec strings -------------------------------------------------------------


def test_kernel_spec_round_trip():
    zoo = [
        kn.power_law(2, 1.0, 5.0),
        kn.truncate(kn.power_law(2, 1.5, 4.0), 8.0),
        kn.nearest_neighbor(3, 2.0),
        kn.perturbed_nn(kn.power_law(2, 1.0, 4.0), 1.0),
        kn.tabulated(2, {(1, 0): 0.5, (1, 1): 0.25}),
        kn.truncate(kn.truncate(kn.power_law(1, 2.0, 3.0), 9.0), 4.0),
    ]
    for k in zoo:
        assert kn.kernel_from_spec(kn.kernel_to_spec(k)) == k
