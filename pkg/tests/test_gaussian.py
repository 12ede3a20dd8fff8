import random
from fractions import Fraction

import pytest

from xyswap.cli import double_moment_via_rotation, example_f_expected, random_jets, roundtrip_trial
from xyswap.curve import curve_from_preset, trivial_system
from xyswap.gaussian import (GaussianIntegrand, NonInvertibleQuadraticForm, PoleOrderTooLow,
                             ScalingPreconditionViolated, clear_pole, clear_poles,
                             double_factorial, evaluate_single_gaussian, example_f_first_order,
                             forward_operator, gaussian_moment, inverse_operator,
                             kernel_double_transform, key_identity_eval, omega_double_transform,
                             pair_moment, phi_basis_integral, xy_transform_function)
from xyswap.graphsum import build_Omega
from xyswap.kp import build_kernel
from xyswap.series import INF, Q, TruncatedSeries, coefficient

Z2 = ("z1", "z2")


def test_single_moments():
    assert gaussian_moment(0, 3).coeff == 1
    m = gaussian_moment(6, Q(2))
    assert (m.coeff, m.exponent) == (15, Fraction(-7, 2))
    assert gaussian_moment(5, 7).coeff == 0
    assert [double_factorial(k) for k in (-1, 0, 1, 5, 6)] == [1, 1, 1, 15, 48]
    with pytest.raises(NonInvertibleQuadraticForm):
        gaussian_moment(2, 0)


@pytest.mark.parametrize("k,l", [(k, l) for k in range(7) for l in range(7)])
def test_pair_moment_by_rotation(k, l):
    assert pair_moment(k, l) == double_moment_via_rotation(k, l)


def test_vacuum_expansion_with_cubic_and_quartic_vertices():
    # int exp(-xi^2/2 + s k xi^3/3! + s^2 l xi^4/4!) = 1 + h(5k^2/24 + l/8)
    #   + h^2 (385 k^4/1152 + 35 k^2 l/64 + 35 l^2/384) + ...
    higher = TruncatedSeries(("s", "xi", "k", "l"), {(1, 3, 1, 0): Q(1, 6), (2, 4, 0, 1): Q(1, 24)},
                             (4, INF, INF, INF))
    one = TruncatedSeries.const(1, ("s", "xi"))
    res = evaluate_single_gaussian(GaussianIntegrand(one, 1, higher), 2)
    res = res.with_vars(("k", "l", "h"))
    assert res.terms == {(0, 0, 0): 1, (2, 0, 1): Q(5, 24), (0, 1, 1): Q(1, 8),
                         (4, 0, 2): Q(385, 1152), (2, 1, 2): Q(35, 64), (0, 2, 2): Q(35, 384)}


def test_example_f_termwise():
    got = example_f_first_order()
    want = example_f_expected()
    assert got.with_vars(want.vars) == want
    op = forward_operator(1)
    assert (op.out_alpha, op.out_beta) == (Fraction(-1, 2), Fraction(1, 2))


def test_inverse_operator_prefactor():
    op = inverse_operator(1)
    assert (op.out_alpha, op.out_beta) == (Fraction(1, 2), Fraction(-1, 2))


def test_transform_round_trips():
    rng = random.Random(7)
    assert all(roundtrip_trial(rng, order=2, T=10) for _ in range(3))


def test_transform_of_constant_with_linear_functions():
    # x = 2t, y = 3t: no higher jets, so f = sqrt(y'/x') f^vee exactly
    jets_series = (TruncatedSeries(("t",), {(1,): 2}, (8,)), TruncatedSeries(("t",), {(1,): 3}, (8,)))
    from xyswap.gaussian import Jets
    jets = Jets(*jets_series, "t")
    g = TruncatedSeries(("t",), {(0,): 1, (2,): 5}, (8,))
    f = xy_transform_function(g, jets, "xy", 2)
    # the order-hbar term is -g''/(2 x' y') = -10/12
    h1 = coefficient(f.series, "h", 1)
    assert h1.terms == {(0,): Q(-5, 6)}
    assert (f.alpha, f.beta) == (Fraction(-1, 2), Fraction(1, 2))


def test_key_identity_on_random_function():
    rng = random.Random(3)
    jets = random_jets(rng, 12, y_only=True)
    terms = {(0, 0, 0): 1, (1, 1, 1): 2, (2, 2, 1): -1, (1, 2, 2): 3, (0, 3, 2): Q(1, 2)}
    g = TruncatedSeries(("t", "u", "h"), terms, (12, INF, 2))
    lhs, rhs = key_identity_eval(g, jets, 2)
    assert lhs.agrees_with(rhs.with_vars(tuple(dict.fromkeys(rhs.vars + lhs.vars))))


def test_key_identity_scaling_precondition():
    g = TruncatedSeries(("t", "u", "h"), {(0, 1, 0): 1})
    jets = random_jets(random.Random(1), 6)
    with pytest.raises(ScalingPreconditionViolated):
        key_identity_eval(g, jets, 1)


def test_phi_basis_normalization():
    c = curve_from_preset("higher-bgw", 2)
    for i in (1, 2, 3):
        phi = phi_basis_integral(c, i, 2)
        iz = phi.index("z")
        assert min(e[iz] for e in phi.terms) == -i
        assert coefficient(coefficient(phi, "z", -i), "h", 0).constant_term() == 1
        assert coefficient(coefficient(phi, "z", -i), "h", 1).is_zero()


def test_phi_basis_needs_pole():
    from xyswap.curve import SpectralCurve, laurent
    with pytest.raises(PoleOrderTooLow):
        phi_basis_integral(SpectralCurve(laurent({1: 1}), laurent({-1: 1})), 1, 1)


@pytest.mark.parametrize("name,r", [("higher-bgw", 2), ("higher-bgw", 3), ("higher-airy", 2)])
def test_kernel_transform_matches_tr_kernel(systems, name, r):
    c = curve_from_preset(name, r)
    P, _ = kernel_double_transform(TruncatedSeries.const(1, Z2), c, "xy", 2)
    cleared, M = clear_pole(P)
    K = build_kernel(systems(name, r, 2), 2)
    d = TruncatedSeries(Z2, {(1, 0): 1, (0, 1): -1})
    assert cleared == (K.E * (d ** (M - 1)).with_vars(K.E.vars)).with_vars(cleared.vars)


def test_clear_pole_rejects_small_power():
    P = TruncatedSeries(("w", "z1", "z2"), {(2, 0, 0): 1})
    with pytest.raises(ValueError):
        clear_pole(P, power=1)


def _omega_diagram(n, order, T, centers):
    c = curve_from_preset("higher-bgw", 2)
    dual = build_Omega(trivial_system(c, order), n, centers, trunc=T, order=order, direction="yx")
    P, poles = omega_double_transform(dual.series, c, n, "xy", order, centers=centers, trunc=T)
    pairs = [(f"a{i}", f"b{i}") for i in range(1, n + 1)]
    cleared, powers = clear_poles(P, pairs, poles, 2 * order + 1)
    return c, cleared, powers, pairs


def _times_differences(R, pairs, powers):
    for (a, b), M in zip(pairs, powers):
        d = TruncatedSeries((a, b), {(1, 0): 1, (0, 1): -1})
        R = R * (d ** (M - 1)).with_vars(R.vars)
    return R


def test_omega_transform_one_pair(systems):
    cs = (Q(1, 2),)
    c, cleared, powers, pairs = _omega_diagram(1, 2, 8, cs)
    R = build_Omega(systems("higher-bgw", 2, 2), 1, cs, trunc=8, order=2).series
    R = _times_differences(R, pairs, powers)
    assert cleared.agrees_with(R.with_vars(tuple(dict.fromkeys(R.vars + cleared.vars))))


def test_omega_transform_two_pairs(systems):
    cs = (Q(1, 2), Q(-2, 3))
    c, cleared, powers, pairs = _omega_diagram(2, 1, 6, cs)
    R = build_Omega(systems("higher-bgw", 2, 1), 2, cs, trunc=6, order=1).series
    R = _times_differences(R, pairs, powers)
    assert cleared.agrees_with(R.with_vars(tuple(dict.fromkeys(R.vars + cleared.vars))))
