import pytest
from hypothesis import given, settings, strategies as st

from xyswap.cli import perturbed_system, planted_coordinate
from xyswap.curve import curve_from_preset, pullback_kernel_defect, trivial_system
from xyswap.gaussian import phi_basis_integral
from xyswap.graphsum import tr_via_dual_swap, xy_swap
from xyswap.kp import (KPError, ObstructionFound, Potential, SchurExpansion, ad_eigenvector,
                       ad_operator_apply, ad_spectrum_check, alpha_coordinate, apply_D_operator,
                       build_kernel, content_multiplier, frame_from_kernel, kp_check,
                       normalize_omega02, pairing_matrix, partitions, plucker_check,
                       potential_from_system, same_plane, schur_polynomial, tau_from_frame,
                       tau_schur_coefficients, z_lambda)
from xyswap.series import INF, Q, TruncatedSeries, derive

H = ("h",)


def hser(terms, order=3):
    return TruncatedSeries(H, {(k,): v for k, v in terms.items()}, (order,))


def character(lam, mu):
    """Murnaghan-Nakayama rule on beta-numbers."""
    if not mu:
        return 1 if not lam else 0
    k, rest = mu[0], mu[1:]
    m = len(lam)
    beta = [lam[j] + (m - 1 - j) for j in range(m)]
    total = 0
    for j, b in enumerate(beta):
        if b - k < 0 or b - k in beta:
            continue
        sign = (-1) ** sum(1 for c in beta if b - k < c < b)
        nb = sorted([c for c in beta if c != b] + [b - k], reverse=True)
        new = tuple(x for x in (nb[i] - (m - 1 - i) for i in range(m)) if x)
        total += sign * character(new, rest)
    return total


def schur_by_characters(tau_coeff, lam):
    """c_lambda = sum_mu [p_mu] tau * chi^lambda(mu)."""
    return sum((tau_coeff(mu) * character(lam, mu) for mu in partitions(sum(lam))), Q(0))


def test_characters_small():
    assert character((2, 1), (1, 1, 1)) == 2
    assert character((2, 1), (3,)) == -1
    assert character((3,), (2, 1)) == 1
    assert character((2, 2), (2, 2)) == 2


@pytest.mark.parametrize("lam", [lam for n in range(1, 5) for lam in partitions(n)])
def test_schur_polynomial_agrees_with_characters(lam):
    d = sum(lam)
    s = schur_polynomial(lam, d)
    for mu in partitions(d):
        exps = [0] * d
        for k in mu:
            exps[k - 1] += 1
        assert s.terms.get(tuple(exps), 0) * z_lambda(mu) == character(lam, mu)


def test_bgw_potential_low_terms(systems):
    # genus one is -(1/8) log(1 - p1); genus two starts with (3/128) p3
    P = potential_from_system(systems("higher-bgw", 2, 3), 3, 3)
    assert P.series.terms == {(1, 0, 0, 1): Q(1, 8), (2, 0, 0, 2): Q(1, 16),
                              (3, 0, 0, 3): Q(1, 24), (0, 0, 1, 3): Q(3, 128)}
    assert P.coefficient((1, 1), g=1).terms == {(): Q(1, 8)}


def test_tau_schur_coefficients_against_characters(systems):
    P = potential_from_system(systems("higher-bgw", 2, 3), 3, 3)
    T = tau_schur_coefficients(P)
    # exp(F) by hand: F = h p1/8 + h^2 p1^2/16 + h^3 (p1^3/24 + 3 p3/128)
    tau = {(): hser({0: 1}), (1,): hser({1: Q(1, 8)}),
           (1, 1): hser({2: Q(1, 16) + Q(1, 128)}),
           (1, 1, 1): hser({3: Q(1, 24) + Q(1, 128) + Q(1, 3072)}),
           (3,): hser({3: Q(3, 128)})}
    zero = hser({})
    for n in range(4):
        for lam in partitions(n):
            want = sum((tau.get(mu, zero).scale(character(lam, mu)) for mu in partitions(n)), zero)
            assert T.get(lam) == want
    assert T.get((1, 1, 1)) == hser({3: Q(75, 1024)})


@pytest.mark.parametrize("name,r", [("higher-bgw", 2), ("higher-bgw", 3), ("higher-airy", 2)])
def test_kp_check_passes_for_recursion_output(systems, name, r):
    rep = kp_check(systems(name, r, 3), max_n=3, order=3)
    assert rep.passed, rep.first_mismatch
    assert rep.per_type[(1, 1)] == "match" and rep.per_type[(0, 3)] == "match"


def test_kp_check_detects_perturbation(systems):
    bad = perturbed_system(systems("higher-bgw", 3, 2))
    rep = kp_check(bad, max_n=3, order=2)
    assert rep.status == "FAIL"
    assert rep.first_mismatch == {"g": 1, "n": 2, "hbar": 2}


def test_constant_perturbation_is_not_exercised(systems):
    assert perturbed_system(systems("higher-bgw", 2, 2)) is None


def test_kp_refuses_formal_deformation():
    c = curve_from_preset("deformed-bgw", 2)
    with pytest.raises(KPError):
        kp_check(tr_via_dual_swap(c, 1), order=1)


@pytest.mark.parametrize("name", ["higher-bgw", "higher-airy"])
def test_frame_route_matches_potential_route(systems, name):
    s = systems(name, 2, 2)
    K = build_kernel(s, 2)
    duals = [phi_basis_integral(s.curve, i, 2, dual=True) for i in range(1, 5)]
    fr = frame_from_kernel(K, 4, 2, dual_basis=duals)
    assert fr.check_normalized()
    assert tau_from_frame(fr, 3).equals(tau_schur_coefficients(potential_from_system(s, 2, 3)))
    pm = pairing_matrix(fr, 4)
    one = hser({0: 1}, 2)
    for i in range(4):
        for j in range(4):
            assert pm[i][j] == one if i == j else pm[i][j].is_zero()
    assert same_plane(fr, frame_from_kernel(K, 4, 2), 4)


def test_frame_vectors_match_gaussian_basis(systems):
    s = systems("higher-bgw", 3, 2)
    K = build_kernel(s, 1)
    duals = [phi_basis_integral(s.curve, i, 1, dual=True) for i in range(1, 4)]
    fr = frame_from_kernel(K, 3, 1, dual_basis=duals)
    for i in range(1, 4):
        a, b = fr.vectors[i - 1], phi_basis_integral(s.curve, i, 1)
        allv = tuple(dict.fromkeys(a.vars + b.vars))
        assert (a.with_vars(allv) - b.with_vars(allv)).is_zero()


def test_plucker_accepts_exponential_of_p1():
    # exp(p1) = sum_lambda dim(lambda)/|lambda|! s_lambda
    F = TruncatedSeries(("p1", "p2", "p3", "p4", "h"), {(1, 0, 0, 0, 0): 1}, (INF,) * 4 + (0,))
    T = tau_schur_coefficients(Potential(F, 4, 0))
    assert T.get((2, 1)) == hser({0: Q(2, 6)}, 0)
    rep = plucker_check(T, 4)
    assert rep.passed and rep.relations > 0


def test_plucker_rejects_non_tau():
    # c_0 c_22 - c_1 c_21 + c_2 c_11 = 3 for this expansion
    T = SchurExpansion({(): hser({0: 1}, 0), (2,): hser({0: 3}, 0), (1, 1): hser({0: 1}, 0)}, 4, 0)
    rep = plucker_check(T, 4)
    assert not rep.passed and rep.failures


def test_content_multiplier():
    assert content_multiplier((), 3) == hser({0: 1})
    assert content_multiplier((2,), 3) == hser({0: 1, 1: -1})
    assert content_multiplier((1, 1), 3) == hser({0: 1, 1: 1})
    assert content_multiplier((2, 1), 3) == hser({0: 1, 2: -1})
    assert content_multiplier((3,), 3) == hser({0: 1, 1: -3, 2: 2})


@given(st.dictionaries(st.sampled_from([lam for n in range(4) for lam in partitions(n)]),
                       st.fractions(max_denominator=5).filter(bool), min_size=1, max_size=4))
@settings(max_examples=25, deadline=None)
def test_D_operator_inverse(coeffs):
    S = SchurExpansion({lam: hser({0: c}, 3) for lam, c in coeffs.items()}, 3, 3)
    assert apply_D_operator(apply_D_operator(S), "inverse").equals(S)


def test_D_operator_matches_swap_of_trivial_system():
    from xyswap.cli import d_operator_curve
    c = d_operator_curve()
    dual = xy_swap(trivial_system(c, 3), 3)
    lhs = tau_schur_coefficients(potential_from_system(dual, 3, 3))
    rhs = apply_D_operator(tau_schur_coefficients(potential_from_system(trivial_system(c, 3), 3, 3)))
    assert lhs.equals(rhs)


def test_ad_spectrum():
    rep = ad_spectrum_check(8)
    assert rep.passed
    zero = [(e["d"], e["i"]) for e in rep.entries if e["zero_vector"]]
    assert all(d + 1 - 2 * i <= 2 for d, i in zero)


def test_ad_operator_low_degree_examples():
    v40 = TruncatedSeries(("z1", "z2"), {(2, 0): 1, (1, 1): 1, (0, 2): 1})
    assert ad_eigenvector(4, 0) == v40 and ad_operator_apply(v40, 4).is_zero()
    v41 = ad_eigenvector(4, 1)
    assert v41 == TruncatedSeries(("z1", "z2"), {(2, 0): Q(-1, 2), (1, 1): 1, (0, 2): Q(-1, 2)})
    assert ad_operator_apply(v41, 4) == v41.scale(3)
    v31 = ad_eigenvector(3, 1)
    assert ad_operator_apply(v31, 3) == v31.scale(2)


def test_D_operator_on_bgw_tau(systems):
    T = tau_schur_coefficients(potential_from_system(systems("higher-bgw", 2, 3), 3, 3))
    D = apply_D_operator(T)
    assert D.get((2,)) == hser({2: Q(9, 128), 3: Q(-9, 128)})
    assert D.get((1, 1)) == hser({2: Q(9, 128), 3: Q(9, 128)})
    assert D.get(()) == T.get(())


@pytest.mark.parametrize("d,i", [(4, 0), (5, 1), (6, 2), (7, 1)])
def test_ad_eigenvector(d, i):
    v = ad_eigenvector(d, i)
    assert ad_operator_apply(v, d) == v.scale(i * (d - i))


def test_planted_coordinate_two_routes():
    phi = planted_coordinate()
    B = pullback_kernel_defect(phi, "x", 4)
    nf = normalize_omega02(B, 6)
    assert nf.coordinate.terms == phi.terms
    assert nf.residual.is_zero()
    assert alpha_coordinate(B, 6).terms == phi.terms


def test_obstruction_from_nonzero_eigenvalue():
    v = ad_eigenvector(6, 1)
    h2 = v * TruncatedSeries(v.vars, {(1, 1): 1})
    B = derive(derive(h2, "z1"), "z2").rename({"z1": "x1", "z2": "x2"})
    with pytest.raises(ObstructionFound) as err:
        normalize_omega02(B, 7)
    assert err.value.degree == 6
    assert err.value.report["eigen_coefficients"]["1"] == "1"


def test_tau_of_potential_free_of_p_is_one():
    F = TruncatedSeries(("p1", "h"), {}, (INF, 2))
    T = tau_schur_coefficients(Potential(F, 1, 2))
    assert set(T.coeffs) == {()}
