from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from xyswap.series import (INF, ConstantTermPresent, NonInvertible, NotUnitLeading,
                           OutOfTruncationWindow, Q, ResiduePresent, TruncatedSeries, coefficient,
                           derive, exp_series, integrate_primitive, invert, log_series, restrict,
                           sfunction_coefficients, sfunction_series, substitute)

VARS = ("x", "y")
fracs = st.fractions(min_value=-5, max_value=5, max_denominator=6)


def poly(max_exp=3, trunc=(6, INF), low_exp=0):
    mono = st.tuples(st.integers(low_exp, max_exp), st.integers(0, max_exp))
    return st.dictionaries(mono, fracs, max_size=6).map(
        lambda d: TruncatedSeries(VARS, d, trunc))


def positive_order():
    """Divisible by x, the truncated variable, so powers leave the window."""
    return poly().map(lambda p: p * TruncatedSeries(VARS, {(1, 0): 1}))


def unit():
    return st.tuples(fracs.filter(lambda c: c != 0), positive_order()).map(
        lambda p: p[1] + p[0])


@given(poly(), poly())
def test_addition_commutes(a, b):
    assert a + b == b + a


@given(poly(), poly(), poly())
@settings(max_examples=50)
def test_multiplication_associates(a, b, c):
    assert ((a * b) * c).agrees_with(a * (b * c))


@given(poly(), poly(), poly())
@settings(max_examples=50)
def test_distributive(a, b, c):
    assert (a * (b + c)).agrees_with(a * b + a * c)


@given(unit())
@settings(max_examples=50)
def test_inverse_times_series_is_one(a):
    assert (a * invert(a)).agrees_with(TruncatedSeries.const(1, VARS))


@given(positive_order())
@settings(max_examples=40)
def test_log_inverts_exp(s):
    assert log_series(exp_series(s)).agrees_with(s)


@given(poly(), poly())
@settings(max_examples=50)
def test_leibniz_rule(a, b):
    for v in VARS:
        assert derive(a * b, v).agrees_with(derive(a, v) * b + a * derive(b, v))


@given(poly())
def test_primitive_then_derivative(a):
    assert derive(integrate_primitive(a, "x"), "x") == a


@given(poly())
def test_json_round_trip(a):
    assert TruncatedSeries.from_json(a.dumps()) == a


@given(poly(trunc=(INF, INF)), poly(trunc=(INF, INF)), fracs)
def test_evaluation_is_multiplicative(a, b, q):
    lhs = restrict(a * b, {"y": q})
    rhs = restrict(a, {"y": q}) * restrict(b, {"y": q})
    assert lhs == rhs


@given(poly())
def test_substituting_identity(a):
    assert substitute(a, "y", TruncatedSeries(("y",), {(1,): 1})).agrees_with(a)


def test_geometric_series():
    one_minus_x = TruncatedSeries(("x",), {(0,): 1, (1,): -1}, (5,))
    inv = invert(one_minus_x)
    assert inv == TruncatedSeries(("x",), {(k,): 1 for k in range(6)}, (5,))


def test_inverse_of_laurent_monomial_times_unit():
    a = TruncatedSeries(("x",), {(-2,): 2, (-1,): 2}, (4,))
    inv = invert(a)
    # relative precision is kept: 2 x^-2 (1 + x) known through x^4 gives x^8
    assert inv.trunc == (8,)
    assert inv.terms == {(k,): Q((-1) ** k, 2) for k in range(2, 9)}


def test_exp_coefficients():
    x = TruncatedSeries(("x",), {(1,): 1}, (6,))
    e = exp_series(x)
    from math import factorial
    assert e.terms == {(k,): Q(1, factorial(k)) for k in range(7)}


def test_sfunction_times_argument_is_sinh_difference():
    t = TruncatedSeries(("t",), {(1,): 1}, (9,))
    lhs = sfunction_series(t) * t
    half = t.scale(Fraction(1, 2))
    rhs = exp_series(half) - exp_series(-half)
    assert lhs.truncate({"t": 9}).agrees_with(rhs)
    assert sfunction_coefficients(4) == [1, 0, Q(1, 24), 0, Q(1, 1920)]


def test_errors():
    with pytest.raises(NonInvertible):
        invert(TruncatedSeries.zero(("x",), (3,)))
    with pytest.raises(ConstantTermPresent):
        exp_series(TruncatedSeries.const(1, ("x",), (3,)))
    with pytest.raises(NotUnitLeading):
        log_series(TruncatedSeries.const(2, ("x",), (3,)))
    with pytest.raises(ResiduePresent):
        integrate_primitive(TruncatedSeries(("x",), {(-1,): 1}), "x")
    with pytest.raises(OutOfTruncationWindow):
        coefficient(TruncatedSeries(("x",), {(1,): 1}, (3,)), "x", 4)


def test_truncated_product_keeps_known_window():
    a = TruncatedSeries(("x",), {(0,): 1, (1,): 1}, (2,))
    b = TruncatedSeries(("x",), {(1,): 1})
    p = a * b
    assert p.trunc == (3,)
    assert p.terms == {(1,): 1, (2,): 1}
    # an unknown x^3 in b would meet the constant of a
    assert (a * b.truncate({"x": 2})).trunc == (2,)
