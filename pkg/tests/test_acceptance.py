"""Acceptance criteria 1 to 11, each checked with exact rational equality.

Every test carries a ``criterion`` marker; the terminal summary prints one
PASS/FAIL line per criterion.  Run alone with ``pytest tests/test_acceptance.py``.
"""
import random
import time
from fractions import Fraction

import pytest

from xyswap.cli import (d_operator_curve, double_moment_via_rotation, example_f_expected,
                        perturbed_system, planted_coordinate)
from xyswap.curve import SpectralCurve, curve_from_preset, laurent, pullback_kernel_defect, trivial_system
from xyswap.gaussian import (Jets, clear_pole, double_factorial, example_f_first_order,
                             forward_operator, gaussian_moment, kernel_double_transform,
                             key_identity_eval, pair_moment, phi_basis_integral,
                             xy_transform_function)
from xyswap.graphsum import xy_swap, yx_swap
from xyswap.kp import (ad_spectrum_check, apply_D_operator, build_kernel, frame_from_kernel,
                       kp_check, normalize_omega02, pairing_matrix, plucker_check,
                       potential_from_system, tau_from_frame, tau_schur_coefficients)
from xyswap.series import INF, Q, TruncatedSeries

criterion = pytest.mark.criterion


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        if exc[0] is None:
            assert self.elapsed < self.seconds, f"took {self.elapsed:.1f}s"


def common(a, b):
    allv = tuple(dict.fromkeys(a.vars + b.vars))
    return a.with_vars(allv), b.with_vars(allv)


def equal(a, b):
    a, b = common(a, b)
    return (a - b).is_zero()


def random_rational(rng):
    return Q(rng.randint(-5, 5), rng.randint(1, 4))


def random_laurent_curve(rng, center=1):
    """Random Laurent polynomials x, y with z^-2 .. z^3, both unramified at ``center``."""
    while True:
        x = {k: random_rational(rng) for k in range(-2, 4)}
        y = {k: random_rational(rng) for k in range(-2, 4)}
        dx = sum(k * c * Fraction(center) ** (k - 1) for k, c in x.items())
        dy = sum(k * c * Fraction(center) ** (k - 1) for k, c in y.items())
        if dx and dy:
            return SpectralCurve(laurent(x), laurent(y))


@criterion(1, "example f: order-hbar transform termwise, with sqrt(y'/x') prefactor")
def test_criterion_1_example_f():
    with Budget(1):
        op = forward_operator(1)
        got = example_f_first_order()
        want = example_f_expected()
    assert (op.out_alpha, op.out_beta) == (Fraction(-1, 2), Fraction(1, 2))
    assert len(want.terms) == 7
    assert got.with_vars(want.vars).terms == want.terms


@criterion(2, "single and pair Gaussian moments, k, l <= 10")
def test_criterion_2_moments():
    with Budget(1):
        for k in range(11):
            for a in (Q(1), Q(-3), Q(2, 5)):
                m = gaussian_moment(k, a)
                assert m.coeff == (0 if k % 2 else double_factorial(k - 1))
                assert m.exponent == Fraction(-(k + 1), 2)
            for l in range(11):
                assert pair_moment(k, l) == double_moment_via_rotation(k, l)


@criterion(3, "inverse transform after forward is the identity, 20 random inputs, hbar^3")
def test_criterion_3_transform_round_trip():
    rng = random.Random(2024)
    with Budget(30):
        for _ in range(20):
            jets = Jets.at_point(random_laurent_curve(rng), 1, 14, "t")
            g = TruncatedSeries(("t",), {(k,): Q(rng.randint(-3, 3)) for k in range(6)}, (14,))
            f = xy_transform_function(g, jets, "xy", 3)
            assert not equal(f.series, g)
            back = xy_transform_function(f.series, jets, "yx", 3, f.alpha, f.beta)
            assert (back.alpha, back.beta) == (0, 0)
            assert equal(back.series, g)


@criterion(4, "key identity on 20 random admissible g, hbar^3")
def test_criterion_4_key_identity():
    rng = random.Random(4)
    with Budget(30):
        for _ in range(20):
            jets = Jets.at_point(random_laurent_curve(rng), 1, 16, "t")
            terms = {}
            for k in range(4):
                for h in range(4):
                    for r in range(2 * h + 1):
                        if rng.random() < 0.4:
                            terms[(k, r, h)] = Q(rng.randint(-3, 3))
            terms[(1, 2, 1)] = Q(1)
            g = TruncatedSeries(("t", "u", "h"), terms, (16, INF, 3))
            lhs, rhs = key_identity_eval(g, jets, 3)
            assert not lhs.is_zero()
            assert equal(lhs, rhs)


@criterion(5, "yx_swap(xy_swap) = identity on higher BGW r=2, hbar^4")
def test_criterion_5_swap_involution(systems):
    with Budget(300):
        s = systems("higher-bgw", 2, 4)
        dual = xy_swap(s, 4)
        back = yx_swap(dual, 4)
    assert sorted(s.keys()) == sorted((g, n) for g, n in s.types() if 2 * g - 2 + n <= 4
                                      and (g, n) != (0, 2) and not s.get(g, n).is_zero())
    assert not back.difference(s)
    assert back.same_as(s)


@criterion(6, "determinantal formulas n <= 3 at hbar^4 for bgw r=2,3 and airy r=2")
@pytest.mark.parametrize("name,r", [("higher-bgw", 2), ("higher-bgw", 3), ("higher-airy", 2)])
def test_criterion_6_kp_integrability(systems, name, r):
    with Budget(600):
        rep = kp_check(systems(name, r, 4), max_n=3, order=4)
    assert rep.passed, rep.first_mismatch
    assert set(rep.per_type) == {(0, 2), (1, 1), (2, 1), (1, 2), (2, 2), (0, 3), (1, 3)}


@criterion(7, "double transform of the trivial dual kernel = kernel of the TR system, bgw r=2, hbar^2")
def test_criterion_7_kernel_cross_route(systems):
    with Budget(300):
        c = curve_from_preset("higher-bgw", 2)
        P, _ = kernel_double_transform(TruncatedSeries.const(1, ("z1", "z2")), c, "xy", 2)
        cleared, M = clear_pole(P)
        K = build_kernel(systems("higher-bgw", 2, 2), 2)
    d = TruncatedSeries(("z1", "z2"), {(1, 0): 1, (0, 1): -1})
    assert equal(cleared, K.E * (d ** (M - 1)).with_vars(K.E.vars))


@criterion(8, "kernel frame = Gaussian basis (i <= 3), pairing identity (i, j <= 4), Pluecker to degree 4")
def test_criterion_8_grassmannian_frame(systems):
    with Budget(300):
        s = systems("higher-bgw", 2, 2)
        c = s.curve
        duals = [phi_basis_integral(c, i, 1, dual=True) for i in range(1, 5)]
        fr = frame_from_kernel(build_kernel(s, 1), 4, 1, dual_basis=duals)
        for i in range(1, 4):
            assert equal(fr.vectors[i - 1], phi_basis_integral(c, i, 1))
        pm = pairing_matrix(fr, 4)
        one = TruncatedSeries.const(1, ("h",)).truncate({"h": 1})
        for i in range(4):
            for j in range(4):
                assert pm[i][j] == one if i == j else pm[i][j].is_zero()
        rep = plucker_check(tau_from_frame(fr, 4), 4)
    assert rep.passed and rep.relations > 0


@criterion(9, "A_d spectrum i(d-i) for d <= 8 and planted z + (2/5) z^3 recovered to order 6")
def test_criterion_9_semiclassical():
    with Budget(30):
        spectrum = ad_spectrum_check(8)
        phi = planted_coordinate()
        nf = normalize_omega02(pullback_kernel_defect(phi, "x", 4), 6)
    assert spectrum.passed and len(spectrum.entries) == sum(d // 2 + 1 for d in range(2, 9))
    assert nf.coordinate.truncate({"x": 6}).terms == phi.terms
    assert nf.residual.is_zero()


@criterion(10, "kp_check verdicts agree across xy_swap and points 0, 1 on the BGW family, hbar^2")
@pytest.mark.parametrize("r", [2, 3])
def test_criterion_10_kp_duality(systems, r):
    with Budget(600):
        s = systems("higher-bgw", r, 2)
        cases = [("PASS", s)]
        bad = perturbed_system(s)
        if bad is not None:
            cases.append(("FAIL", bad))
        for expected, system in cases:
            dual = xy_swap(system, 2)
            verdicts = {kp_check(x, max_n=3, order=2, point=pt).status
                        for x in (system, dual) for pt in (0, 1)}
            assert verdicts == {expected}
    assert r == 2 or len(cases) == 2


@criterion(11, "tau of the swap image = D applied to the trivial tau, x=z, y=1/z, degree 3")
def test_criterion_11_d_operator():
    with Budget(60):
        c = d_operator_curve()
        trivial = trivial_system(c, 3)
        image = xy_swap(trivial, 3)
        lhs = tau_schur_coefficients(potential_from_system(image, 3, 3))
        rhs = apply_D_operator(tau_schur_coefficients(potential_from_system(trivial, 3, 3)))
    assert lhs.equals(rhs)
    # dx has no zeros on this curve, so the swap image is again trivial and
    # both sides reduce to the constant tau function 1
    assert image.entries == {} and set(lhs.coeffs) == {()}
