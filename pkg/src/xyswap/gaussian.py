"""Formal Gaussian integrals and the transforms built from them.

Integrals are never evaluated as contour integrals.  They are defined by the
moment rules

    (1/sqrt(2 pi)) int xi^k exp(-a xi^2/2) = (k-1)!! a^(-(k+1)/2)   (k even)
    (i/2 pi) iint xi^k zeta^l exp(-xi zeta) = delta_kl k!

after rescaling the integration variable by ``s = sqrt(hbar)`` around the
critical point.  Half-integer powers of ``s`` are kept on a doubled grid
while expanding and must cancel before the result is returned.

Single transforms are compiled once into operators whose coefficients are
polynomials in symbolic jets ``X1, X2, ...`` (derivatives of x) and
``Y1, Y2, ...`` (derivatives of y), Laurent in ``X1`` and ``Y1``.  A compiled
operator can be printed, compared symbolically or applied to concrete
expansions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from gmpy2 import mpq

from .curve import Z, SpectralCurve, shift
from .series import (INF, Q, SeriesError, TruncatedSeries, coefficient, derive, exp_series,
                     invert, log_series, restrict)

S = "s"      # square root of hbar
XI = "xi"
XI2 = "xi2"
H = "h"


class GaussianError(ArithmeticError):
    pass


class NonInvertibleQuadraticForm(GaussianError):
    pass


class TruncationExceeded(GaussianError):
    pass


class ScalingPreconditionViolated(GaussianError):
    pass


class PoleOrderTooLow(GaussianError):
    pass


class HalfIntegerLeak(GaussianError):
    pass


# ---------------------------------------------------------------- moment rules

def double_factorial(k: int) -> int:
    """(k)!! with (-1)!! = 1."""
    out = 1
    while k > 1:
        out *= k
        k -= 2
    return out


@dataclass(frozen=True)
class Radical:
    """``coeff * base^exponent`` with a half-integer ``exponent``."""
    coeff: object
    base: object
    exponent: Fraction

    def integral_part(self):
        """Split off the integer power: returns (series, leftover exponent)."""
        whole = math.floor(self.exponent)
        rest = self.exponent - whole
        val = self.coeff
        if whole and not (isinstance(self.coeff, (int, mpq)) and self.coeff == 0):
            val = self.base ** whole * self.coeff if isinstance(self.base, TruncatedSeries) \
                else Q(self.coeff) * Q(self.base) ** whole
        return val, rest


def gaussian_moment(k: int, a) -> Radical:
    """The single Gaussian moment of xi^k against exp(-a xi^2/2)."""
    if isinstance(a, TruncatedSeries):
        try:
            invert(a)
        except SeriesError as exc:
            raise NonInvertibleQuadraticForm(str(exc)) from exc
    elif Q(a) == 0:
        raise NonInvertibleQuadraticForm("a = 0")
    if k < 0:
        raise ValueError("k must be non-negative")
    if k % 2:
        return Radical(0, a, Fraction(-(k + 1), 2))
    return Radical(double_factorial(k - 1), a, Fraction(-(k + 1), 2))


def pair_moment(k: int, l: int) -> int:
    """The double Gaussian moment of xi^k zeta^l against exp(-xi zeta)."""
    if k < 0 or l < 0:
        raise ValueError("exponents must be non-negative")
    return math.factorial(k) if k == l else 0


# ------------------------------------------------------------------ integrands

def _reduce_moments(p, var, a_inv, keep_odd_s=False):
    """Apply xi^(2j) -> (2j-1)!! a_inv^j to the ``var`` dependence of ``p``."""
    if var not in p.vars:
        return p
    i = p.index(var)
    rest_vars = p.vars[:i] + p.vars[i + 1:]
    groups = {}
    for e, c in p.terms.items():
        k = e[i]
        if k % 2:
            continue
        groups.setdefault(k, {})[e[:i] + e[i + 1:]] = c
    trunc = p.trunc[:i] + p.trunc[i + 1:]
    out = TruncatedSeries.zero(rest_vars, trunc)
    power = None
    cache = {0: None}
    for k in sorted(groups):
        j = k // 2
        part = TruncatedSeries(rest_vars, groups[k], trunc)
        if j:
            if j not in cache:
                prev = max(m for m in cache if m < j)
                base = cache[prev]
                for _ in range(j - prev):
                    base = a_inv if base is None else base * a_inv
                cache[j] = base
            power = cache[j].with_vars(tuple(dict.fromkeys(rest_vars + cache[j].vars)))
            part = part.with_vars(power.vars) * power
            part = part.scale(double_factorial(2 * j - 1))
        allv = tuple(dict.fromkeys(out.vars + part.vars))
        out = out.with_vars(allv) + part.with_vars(allv)
    return out


def _s_to_h(p, order):
    """Map s^(2k) -> h^k; odd powers of s must have cancelled."""
    if S not in p.vars:
        return p.with_vars(p.vars + (H,)).truncate({H: order})
    i = p.index(S)
    terms = {}
    for e, c in p.terms.items():
        if e[i] % 2:
            raise HalfIntegerLeak(f"odd power s^{e[i]} survived the moment rule")
        if e[i] // 2 <= order:
            terms[e[:i] + (e[i] // 2,) + e[i + 1:]] = c
    vs = p.vars[:i] + (H,) + p.vars[i + 1:]
    tr = list(p.trunc)
    tr[i] = order
    low = list(p.low)
    low[i] = 0
    return TruncatedSeries(vs, terms, tuple(tr), tuple(low))


@dataclass
class GaussianIntegrand:
    """``prefactor * exp(higher)`` integrated against ``exp(-a xi^2/2)``.

    ``prefactor`` and ``higher`` are series in ``s`` (= sqrt hbar), ``xi`` and
    external variables; ``higher`` must have positive ``s``-order.  ``a`` is a
    series in the external variables only.
    """
    prefactor: TruncatedSeries
    a: object
    higher: TruncatedSeries | None = None
    var: str = XI


def evaluate_single_gaussian(integrand: GaussianIntegrand, order: int):
    """hbar-expansion of the integral divided by its ``a^(-1/2)`` normalization.

    The result is a series in ``h`` and the external variables; the
    normalization ``a^(-1/2)`` is left to the caller, who knows the branch.
    """
    a = integrand.a
    if not isinstance(a, TruncatedSeries):
        a = TruncatedSeries.const(a)
    try:
        a_inv = invert(a)
    except SeriesError as exc:
        raise NonInvertibleQuadraticForm(str(exc)) from exc
    p = integrand.prefactor
    if S in p.vars:
        p = p.truncate({S: 2 * order})
    if integrand.higher is not None and not integrand.higher.is_zero():
        hi = integrand.higher.truncate({S: 2 * order})
        allv = tuple(dict.fromkeys(p.vars + hi.vars))
        p = p.with_vars(allv) * exp_series(hi.with_vars(allv))
    return _s_to_h(_reduce_moments(p, integrand.var, a_inv), order)


# ------------------------------------------------------------ symbolic jets

def _jet(prefix, k):
    return f"{prefix}{k}"


def jet_derivative(expr):
    """Total z-derivative of a polynomial in jets ``X_k``, ``Y_k``, ``F_k``."""
    out = {}
    for e, c in expr.terms.items():
        for i, v in enumerate(expr.vars):
            k = e[i]
            if not k:
                continue
            nxt = v[0] + str(int(v[1:]) + 1)
            base = list(e)
            base[i] -= 1
            out.setdefault(nxt, []).append((tuple(base), c * k))
    # assemble on an enlarged variable list
    vs = list(expr.vars)
    for nxt in out:
        if nxt not in vs:
            vs.append(nxt)
    vs = tuple(vs)
    terms = {}
    pad = len(vs) - len(expr.vars)
    for nxt, items in out.items():
        j = vs.index(nxt)
        for base, c in items:
            e = list(base) + [0] * pad
            e[j] += 1
            e = tuple(e)
            terms[e] = terms.get(e, 0) + c
    return TruncatedSeries(vs, terms)


def _jet_poly(prefix, k, coeff=1):
    return TruncatedSeries((_jet(prefix, k),), {(1,): coeff})


def _shifted_jet_ratio(prefix, count):
    """``f'(z + s xi) / f'(z)`` as a series in s, xi and jets of f."""
    terms = {}
    lead = _jet(prefix, 1)
    vs = (S, XI, lead) + tuple(_jet(prefix, m + 1) for m in range(1, count + 1))
    for m in range(0, count + 1):
        e = [0] * len(vs)
        e[0] = m
        e[1] = m
        e[2] = -1
        if m == 0:
            e[2] = 0
        else:
            e[2 + m] += 1
        terms[tuple(e)] = Q(1, math.factorial(m))
    return TruncatedSeries(vs, terms, (count,) + (INF,) * (len(vs) - 1))


def _shifted_function(prefix, count, start=0):
    """``f(z + s xi)`` with ``f^(m)`` named ``{prefix}{m + start}``."""
    vs = (S, XI) + tuple(_jet(prefix, m + start) for m in range(count + 1))
    terms = {}
    for m in range(count + 1):
        e = [0] * len(vs)
        e[0] = m
        e[1] = m
        e[2 + m] = 1
        terms[tuple(e)] = Q(1, math.factorial(m))
    return TruncatedSeries(vs, terms, (count,) + (INF,) * (len(vs) - 1))


def _exponent_coefficient(k, swap):
    """a_k = sum_{j=1}^{k-1} C(k-1, j) P_j Q_{k-j}, with (P, Q) = (X, Y) or (Y, X)."""
    p, q = ("Y", "X") if swap else ("X", "Y")
    out = None
    for j in range(1, k):
        t = _jet_poly(p, j) * _jet_poly(q, k - j)
        t = t.scale(math.comb(k - 1, j))
        out = t if out is None else out + t
    return out


def _power_of_ratio(prefix, exponent, count):
    ratio = _shifted_jet_ratio(prefix, count)
    if exponent == 0:
        return None
    if Fraction(exponent).denominator == 1 and exponent > 0:
        return ratio ** int(exponent)
    lg = log_series(ratio)
    return exp_series(lg.scale(Q(Fraction(exponent).numerator, Fraction(exponent).denominator)))


@dataclass
class TransformOperator:
    """hbar-expansion of a Gaussian transform as differential operators.

    ``terms[k][m]`` is the jet polynomial multiplying ``g^(m)`` at order
    ``hbar^k``.  The transform sends ``x'^alpha y'^beta g`` to
    ``x'^out_alpha y'^out_beta * sum_k hbar^k sum_m terms[k][m] g^(m)``.
    """
    order: int
    swap: bool
    sigma: int
    alpha: Fraction
    beta: Fraction
    out_alpha: Fraction
    out_beta: Fraction
    terms: list = field(default_factory=list)

    def coefficient(self, k, m):
        return self.terms[k].get(m)

    def max_derivative(self, k):
        return max(self.terms[k], default=-1)

    def to_json(self):
        return {
            "order": self.order, "swap": self.swap, "sigma": self.sigma,
            "in_exponents": [str(self.alpha), str(self.beta)],
            "out_exponents": [str(self.out_alpha), str(self.out_beta)],
            "terms": [[[m, c.to_json()] for m, c in sorted(level.items())]
                      for level in self.terms],
        }


def _kernel_integrand(order, swap, sigma, alpha, beta, fprefix="F"):
    """prefactor * exp(higher) of the compiled single transform, in jets."""
    count = 2 * order + 2
    g = _shifted_function(fprefix, 3 * count)
    higher = None
    for k in range(3, 2 * order + 3):
        ak = _exponent_coefficient(k, swap)
        t = TruncatedSeries((S, XI), {(k - 2, k): Q(sigma, math.factorial(k))}, (2 * order, INF))
        allv = tuple(dict.fromkeys(t.vars + ak.vars))
        t = t.with_vars(allv) * ak.with_vars(allv)
        higher = t if higher is None else higher + t
    pref = g
    for prefix, ex in (("X", alpha), ("Y", beta)):
        r = _power_of_ratio(prefix, ex, 2 * order)
        if r is not None:
            allv = tuple(dict.fromkeys(pref.vars + r.vars))
            pref = pref.with_vars(allv) * r.with_vars(allv)
    return pref.truncate({S: 2 * order}), higher


def compile_transform(order: int, swap=False, sigma=1, alpha=0, beta=0) -> TransformOperator:
    """Compile sum_j (2j-1)!! (-sigma x'y')^(-j) [xi^2j] of the Gaussian integrand.

    ``swap`` selects the exponent coefficients built from ``y x'`` instead
    of ``x y'``; ``sigma`` is the sign of the exponent.  ``alpha``/``beta``
    twist the input by ``(x'(chi)/x'(z))^alpha (y'(chi)/y'(z))^beta``.
    """
    alpha, beta = Fraction(alpha), Fraction(beta)
    pref, higher = _kernel_integrand(order, swap, sigma, alpha, beta)
    a = TruncatedSeries(("X1", "Y1"), {(1, 1): Q(-sigma)})
    res = evaluate_single_gaussian(GaussianIntegrand(pref, a, higher), order)
    terms = []
    fvars = [v for v in res.vars if v.startswith("F")]
    ih = res.index(H)
    for k in range(order + 1):
        level = {}
        for e, c in res.terms.items():
            if e[ih] != k:
                continue
            fs = [(v, e[res.index(v)]) for v in fvars if e[res.index(v)]]
            if len(fs) != 1 or fs[0][1] != 1:
                raise GaussianError("transform is not linear in the input")
            m = int(fs[0][0][1:])
            rest = tuple(x for i, x in enumerate(e) if res.vars[i] not in fvars and i != ih)
            level.setdefault(m, {})[rest] = c
        jv = tuple(v for v in res.vars if v not in fvars and v != H)
        jv_sorted = tuple(sorted(jv, key=lambda v: (v[0], int(v[1:]))))
        out = {}
        for m, tm in level.items():
            s = TruncatedSeries(jv, tm).with_vars(jv_sorted)
            out[m] = s
        terms.append(out)
    return TransformOperator(order, swap, sigma, alpha, beta, alpha, beta, terms)


_CACHE = {}


def _compiled(order, swap, sigma, alpha, beta):
    key = (order, swap, sigma, Fraction(alpha), Fraction(beta))
    if key not in _CACHE:
        _CACHE[key] = compile_transform(order, swap, sigma, alpha, beta)
    return _CACHE[key]


def forward_operator(order, alpha=0, beta=0):
    """Operator of the x-y transform acting on ``x'^alpha y'^beta g``."""
    op = _compiled(order, False, 1, alpha, Fraction(beta) + 1)
    return TransformOperator(order, False, 1, Fraction(alpha), Fraction(beta),
                             Fraction(alpha) - Fraction(1, 2), Fraction(beta) + Fraction(1, 2),
                             op.terms)


def inverse_operator(order, alpha=0, beta=0):
    """Operator of the inverse (y-x) transform acting on ``x'^alpha y'^beta g``."""
    op = _compiled(order, True, -1, Fraction(alpha) + 1, beta)
    return TransformOperator(order, True, -1, Fraction(alpha), Fraction(beta),
                             Fraction(alpha) + Fraction(1, 2), Fraction(beta) - Fraction(1, 2),
                             op.terms)


# ---------------------------------------------------------- concrete jets

class Jets:
    """Concrete derivatives of x, y (and of an input function) near a point.

    ``x`` and ``y`` are series in ``var``; derivatives are taken in ``var``.
    """

    def __init__(self, x, y, var):
        self.var = var
        self.x = x
        self.y = y
        self._cache = {}

    def get(self, name):
        if name in self._cache:
            return self._cache[name]
        prefix, k = name[0], int(name[1:])
        if k < 0:
            raise ValueError(name)
        base = {"X": self.x, "Y": self.y}[prefix]
        val = base if k == 0 else derive(self.get(f"{prefix}{k - 1}"), self.var)
        self._cache[name] = val
        return val

    def inverse(self, name):
        key = "inv:" + name
        if key not in self._cache:
            try:
                self._cache[key] = invert(self.get(name))
            except SeriesError as exc:
                raise NonInvertibleQuadraticForm(f"{name} is not invertible here") from exc
        return self._cache[key]

    @classmethod
    def at_point(cls, curve: SpectralCurve, center, trunc, var="t"):
        """Jets of a curve at ``z = center + var`` (exact when center is 0)."""
        x = _drop_eps(shift(curve.x, Z, center, var, trunc))
        y = _drop_eps(shift(curve.y, Z, center, var, trunc))
        return cls(x, y, var)

    @classmethod
    def global_(cls, curve: SpectralCurve, var=Z):
        x = _drop_eps(curve.x).rename({Z: var})
        y = _drop_eps(curve.y).rename({Z: var})
        return cls(x, y, var)


def _drop_eps(s):
    if "eps" in s.vars and all(e[s.index("eps")] == 0 for e in s.terms):
        return s.drop_var("eps")
    return s


def _evaluate_monomial(jets, vs, e, cache):
    out = None
    for v, k in zip(vs, e):
        if not k:
            continue
        key = (v, k)
        if key not in cache:
            if k > 0:
                base = jets.get(v)
                cache[key] = base if k == 1 else _pow_cached(cache, jets, v, k, base)
            else:
                base = jets.inverse(v)
                cache[key] = base ** (-k)
        f = cache[key]
        out = f if out is None else _mulx(out, f)
    return out


def _pow_cached(cache, jets, v, k, base):
    prev = cache.get((v, k - 1))
    if prev is None:
        return base ** k
    return _mulx(prev, base)


def _mulx(a, b):
    if a.vars != b.vars:
        allv = tuple(dict.fromkeys(a.vars + b.vars))
        a, b = a.with_vars(allv), b.with_vars(allv)
    return a * b


def _addx(a, b):
    if a is None:
        return b
    if a.vars != b.vars:
        allv = tuple(dict.fromkeys(a.vars + b.vars))
        a, b = a.with_vars(allv), b.with_vars(allv)
    return a + b


def evaluate_jet_polynomial(poly, jets, cache=None):
    """Substitute concrete jets into a jet polynomial."""
    cache = {} if cache is None else cache
    out = None
    for e, c in poly.terms.items():
        mono = _evaluate_monomial(jets, poly.vars, e, cache)
        if mono is None:
            mono = TruncatedSeries.const(c, (jets.var,))
        else:
            mono = mono.scale(c)
        out = _addx(out, mono)
    if out is None:
        out = TruncatedSeries.zero((jets.var,))
    return out


def apply_operator(op: TransformOperator, g, jets: Jets, order=None):
    """Apply a compiled operator to a concrete function ``g`` of ``jets.var``.

    Returns ``sum_k h^k sum_m terms[k][m] g^(m)`` as a series in ``h`` and
    the variables of ``g``; the prefactor exponents are ``op.out_alpha``
    and ``op.out_beta``.
    """
    order = op.order if order is None else order
    cache = {}
    derivs = [g]
    result = None
    for k in range(order + 1):
        for m, coef in sorted(op.terms[k].items()):
            while len(derivs) <= m:
                derivs.append(derive(derivs[-1], jets.var))
            val = _mulx(evaluate_jet_polynomial(coef, jets, cache), derivs[m])
            hk = TruncatedSeries((H,), {(k,): 1}, (order,))
            result = _addx(result, _mulx(val, hk))
    if result is None:
        result = TruncatedSeries.zero((H,), (order,))
    return result


# -------------------------------------------------------- named transforms

@dataclass
class Transformed:
    """``x'^alpha y'^beta * series``: a function with a tracked radical prefactor."""
    series: TruncatedSeries
    alpha: Fraction
    beta: Fraction


def xy_transform_function(f, curve_or_jets, direction="xy", order=1, alpha=0, beta=0,
                          center=0, trunc=12, var="t"):
    """Transform ``x'^alpha y'^beta f`` by the x-y (or inverse y-x) Gaussian integral.

    ``f`` is a concrete series in ``var`` (the local coordinate around
    ``center``).  The result carries the new prefactor exponents.
    """
    jets = curve_or_jets
    if isinstance(curve_or_jets, SpectralCurve):
        jets = Jets.at_point(curve_or_jets, center, trunc, var)
    if direction == "xy":
        op = forward_operator(order, alpha, beta)
    elif direction == "yx":
        op = inverse_operator(order, alpha, beta)
    else:
        raise ValueError("direction must be 'xy' or 'yx'")
    if f.vars != (jets.var,) and jets.var not in f.vars:
        f = f.with_vars(f.vars + (jets.var,))
    return Transformed(apply_operator(op, f, jets, order), op.out_alpha, op.out_beta)


def example_f_first_order():
    """The order-hbar coefficient of the forward transform, divided by sqrt(y'/x')."""
    op = forward_operator(1)
    out = None
    for m, c in op.terms[1].items():
        t = c.with_vars(tuple(dict.fromkeys(c.vars + (f"F{m}",))))
        t = t * TruncatedSeries((f"F{m}",), {(1,): 1}).with_vars(t.vars)
        out = _addx(out, t)
    return out


# ---------------------------------------------------------- key identity

def _key_gaussian_operator(r):
    """Jet operator for the double Gaussian side of the key identity, u^r part.

    Rescaling U = s u and zeta = z + s Z, the integrand becomes
    ``U^r g(z + sZ) y'(z + sZ)/y'(z) exp(-U sum_{k>=2} s^(k-1) y^(k) Z^k/k!)``
    against ``exp(-y' U Z)``.  Pairing U^a with Z^a forces the total power
    of s to equal r, so only that coefficient is kept.
    """
    g = _shifted_function("G", r).rename({XI: "Zv"})
    ratio = _shifted_jet_ratio("Y", r).rename({XI: "Zv"})
    p = _mulx(g, ratio)
    higher = None
    for k in range(2, r + 2):
        t = TruncatedSeries((S, "U", "Zv", f"Y{k}"), {(k - 1, 1, k, 1): Q(-1, math.factorial(k))},
                            (r, INF, INF, INF))
        higher = _addx(higher, t)
    if higher is not None:
        p = _mulx(p, exp_series(higher))
    p = p.with_vars(tuple(dict.fromkeys(p.vars + ("U", "Zv", "Y1"))))
    p = coefficient(p.truncate({S: r}), S, r)
    iu, iz, iy = p.index("U"), p.index("Zv"), p.index("Y1")
    keep = [i for i in range(len(p.vars)) if i not in (iu, iz)]
    vs = tuple(p.vars[i] for i in keep)
    out = {}
    for e, c in p.terms.items():
        a = e[iu] + r
        if a != e[iz]:
            continue
        ne = list(e)
        ne[iy] -= a
        key = tuple(ne[i] for i in keep)
        out[key] = out.get(key, 0) + c * math.factorial(a)
    return TruncatedSeries(vs, {k: v for k, v in out.items() if v})


_KEY_CACHE = {}


def key_identity_eval(g, curve_or_jets, order, center=0, trunc=14, var="t", u="u"):
    """Both sides of the key identity for ``g`` (series in var, u, h).

    Left: ``sum_r d_y^r [u^r] g``.  Right: the double Gaussian integral
    ``(i/2pi) iint g(zeta,u) y'(zeta) exp(-u (y(zeta)-y(z))) du dzeta``.
    ``g(z, u/sqrt(hbar))`` must only involve non-negative powers of hbar.
    """
    jets = curve_or_jets
    if isinstance(curve_or_jets, SpectralCurve):
        jets = Jets.at_point(curve_or_jets, center, trunc, var)
    if u in g.vars:
        iu = g.index(u)
        ih = g.index(H) if H in g.vars else None
        for e in g.terms:
            hk = e[ih] if ih is not None else 0
            if 2 * hk < e[iu]:
                raise ScalingPreconditionViolated(
                    f"term u^{e[iu]} h^{hk} has negative power of hbar after u -> u/sqrt(hbar)")
    inv_y1 = jets.inverse("Y1")
    rmax = int(g.degree(u)) if u in g.vars and g.terms else 0
    lhs = None
    rhs = None
    for r in range(rmax + 1):
        gr = coefficient(g, u, r) if u in g.vars else (g if r == 0 else None)
        if gr is None or gr.is_zero():
            continue
        # operator side: (1/y' d/dz)^r
        cur = gr
        for _ in range(r):
            cur = _mulx(derive(cur, jets.var), inv_y1)
        lhs = _addx(lhs, cur)
        if r not in _KEY_CACHE:
            _KEY_CACHE[r] = _key_gaussian_operator(r)
        opr = _KEY_CACHE[r]
        derivs = [gr]
        cache = {}
        groups = {}
        gv = [v for v in opr.vars if v.startswith("G")]
        for e, c in opr.terms.items():
            ms = [(int(v[1:]), e[opr.index(v)]) for v in gv if e[opr.index(v)]]
            m = ms[0][0]
            rest_e = tuple(0 if opr.vars[i].startswith("G") else x for i, x in enumerate(e))
            groups.setdefault(m, {})[rest_e] = c
        for m, tm in groups.items():
            while len(derivs) <= m:
                derivs.append(derive(derivs[-1], jets.var))
            poly = TruncatedSeries(opr.vars, tm)
            rhs = _addx(rhs, _mulx(evaluate_jet_polynomial(poly, jets, cache), derivs[m]))
    zero = TruncatedSeries.zero((jets.var,))
    return (lhs if lhs is not None else zero), (rhs if rhs is not None else zero)


# ----------------------------------------------------------- kernel transform

def _point_expansion(jets_prefix_series, var, center_var):
    return jets_prefix_series


def _moment_factor(x1, y1, sigma):
    """``(-sigma x'y')^{-1}`` for the moment rule."""
    return invert(_mulx(x1, y1).scale(-sigma))


def _local_integrand(curve_jets, z_name, xi_name, sigma, beta, order):
    """``exp(sigma sum_{k>=3} s^(k-2) a_k xi^k/k!) (y'(z+s xi)/y'(z))^beta`` concretely.

    ``curve_jets`` provides X_k, Y_k as series in ``z_name``.
    """
    out = None
    for k in range(3, 2 * order + 3):
        ak = None
        for j in range(1, k):
            t = _mulx(curve_jets.get(f"X{j}"), curve_jets.get(f"Y{k - j}")).scale(math.comb(k - 1, j))
            ak = _addx(ak, t)
        mono = TruncatedSeries((S, xi_name), {(k - 2, k): Q(sigma, math.factorial(k))},
                               (2 * order, INF))
        out = _addx(out, _mulx(mono, ak))
    expo = exp_series(out) if out is not None else None
    ratio = None
    if beta:
        terms = None
        y1inv = curve_jets.inverse("Y1")
        for m in range(1, 2 * order + 1):
            mono = TruncatedSeries((S, xi_name), {(m, m): Q(1, math.factorial(m))}, (2 * order, INF))
            terms = _addx(terms, _mulx(mono, _mulx(curve_jets.get(f"Y{m + 1}"), y1inv)))
        one = TruncatedSeries.const(1, terms.vars)
        lr = log_series(one + terms)
        ratio = exp_series(lr.scale(Q(Fraction(beta).numerator, Fraction(beta).denominator)))
    if expo is None:
        return ratio
    if ratio is None:
        return expo
    return _mulx(expo, ratio)


def _shift_bivariate(f, a, b, xa, xb, order):
    """Taylor shift ``f(a + s xa, b + s xb)`` of an exact series in a, b."""
    out = None
    da = f
    for i in range(2 * order + 1):
        db = da
        for j in range(2 * order + 1 - i):
            if not db.is_zero():
                mono = TruncatedSeries((S, xa, xb), {(i + j, i, j): Q(1, math.factorial(i) * math.factorial(j))},
                                       (2 * order, INF, INF))
                out = _addx(out, _mulx(mono, db))
            db = derive(db, b)
        da = derive(da, a)
    return out


def kernel_double_transform(regular_dual, curve: SpectralCurve, direction="xy", order=2,
                            vars=("z1", "z2"), pole="w", center=None, trunc=None):
    """Transform a kernel ``(1/(z1-z2)) * R(z1, z2)`` (half-densities in z).

    ``regular_dual`` is the exact series ``R`` multiplying ``1/(z1 - z2)`` in
    the dual kernel ``K_dual sqrt(dy1 dy2) / sqrt(dz1 dz2)``.  The result
    is returned as ``(P, w)``: ``P`` is a polynomial in ``w = 1/(z1 - z2)``
    and the z's whose value is the transformed kernel in the same
    normalization.  The critical point is ``(chi1, chi2) = (z2, z1)``.

    With ``center`` given, ``vars`` are local offsets from it (jets to
    ``trunc``) and ``w`` is ``1/(offset1 - offset2)``; ``pole`` names ``w``.
    """
    z1, z2 = vars
    c = curve if direction == "xy" else curve.swapped()
    if center is None:
        j1 = Jets.global_(c, z1)
        j2 = Jets.global_(c, z2)
    else:
        j1 = Jets.at_point(c, center, trunc, z1)
        j2 = Jets.at_point(c, center, trunc, z2)
    xi1, xi2 = XI, XI2
    # chi1 = z2 + s xi1 (sign -1 exponent), chi2 = z1 + s xi2 (sign +1)
    loc1 = _local_integrand(j2, z2, xi1, -1, Fraction(1, 2), order)
    loc2 = _local_integrand(j1, z1, xi2, 1, Fraction(1, 2), order)
    # 1/(chi1 - chi2) = 1/(z2 - z1 + s(xi1 - xi2)) = -w sum_m (s (xi1 - xi2) w)^m
    w = pole
    geo = {}
    for m in range(2 * order + 1):
        for i in range(m + 1):
            coef = Q(math.comb(m, i) * (-1) ** (m - i)) * (-1)
            geo[(m, i, m - i, m + 1)] = geo.get((m, i, m - i, m + 1), 0) + coef
    pole = TruncatedSeries((S, xi1, xi2, w), geo, (2 * order, INF, INF, INF))
    R = regular_dual.rename({H: "_hin"}) if H in regular_dual.vars else regular_dual
    R = R.with_vars(tuple(dict.fromkeys(R.vars + (z1, z2))))
    # R is evaluated at (chi1, chi2) = (z2 + s xi1, z1 + s xi2)
    Rswap = R.rename({z1: "_a", z2: "_b"}).rename({"_a": z2, "_b": z1})
    # Rswap(z2, z1) means R(first=z2, second=z1)
    shifted = _shift_bivariate(Rswap, z2, z1, xi1, xi2, order)
    p = _mulx(_mulx(pole, shifted), loc2)
    if loc1 is not None:
        p = _mulx(p, loc1)
    p = p.truncate({S: 2 * order})
    p = _reduce_moments(p, xi1, _moment_factor(j2.get("X1"), j2.get("Y1"), -1))
    p = _reduce_moments(p, xi2, _moment_factor(j1.get("X1"), j1.get("Y1"), 1))
    res = _s_to_h(p, order).scale(-1)
    if "_hin" in res.vars:
        res = restrict(res, {"_hin": H}).truncate({H: order})
    return res, w


def omega_double_transform(regular_dual, curve: SpectralCurve, n, direction="xy", order=2,
                           centers=None, trunc=None):
    """Transform ``Omega_n`` one index pair at a time.

    The integrand is a product over pairs apart from the input itself, so
    the pairs ``(w_i, wb_i)`` (global) or local offsets ``(a_i, b_i)`` at
    ``centers`` are integrated successively, each exactly as a kernel.
    Input and output are ``R`` in ``prod 1/(w_i - wb_i) * R`` (half-density
    normalization); the output is polynomial in the poles ``q_i``.
    """
    res = regular_dual
    poles = []
    for i in range(1, n + 1):
        if centers is None:
            vs, ctr = (f"w{i}", f"wb{i}"), None
        else:
            vs, ctr = (f"a{i}", f"b{i}"), centers[i - 1]
        res, q = kernel_double_transform(res, curve, direction, order, vs, f"q{i}", ctr, trunc)
        poles.append(q)
    return res, tuple(poles)


def clear_poles(P, pairs, poles, power=None):
    """Clear every pole ``q_i = 1/(a_i - b_i)``; returns the polynomial and the powers.

    For local (truncated) inputs pass ``power = 2 order + 1``: a pole power
    whose coefficient vanishes inside the window is still present.
    """
    powers = []
    for (a, b), q in zip(pairs, poles):
        P, m = clear_pole(P, q, (a, b), power)
        powers.append(m)
    return P, tuple(powers)


def clear_pole(P, w="w", vars=("z1", "z2"), power=None):
    """Multiply a polynomial in ``w = 1/(z1-z2)`` by ``(z1-z2)^power``."""
    z1, z2 = vars
    if w not in P.vars:
        P = P.with_vars(P.vars + (w,))
    top = int(P.degree(w)) if P.terms else 0
    power = top if power is None else power
    if power < top:
        raise ValueError("power too small to clear the pole")
    out = None
    diff = TruncatedSeries((z1, z2), {(1, 0): 1, (0, 1): -1})
    for k in range(top + 1):
        part = coefficient(P, w, k)
        if part.is_zero():
            continue
        out = _addx(out, _mulx(part, diff ** (power - k)))
    return out if out is not None else TruncatedSeries.zero((z1, z2)), power


# --------------------------------------------------------- Phi bases

def _pole_order_xy(curve):
    prod = curve.dx * curve.dy
    iz = prod.index(Z)
    return -min(e[iz] for e in prod.terms)


def phi_basis_integral(curve: SpectralCurve, i: int, order: int, dual=False):
    """Phi_i (or the dual Phi*_{1-i} when ``dual``) from the trivial-dual Gaussian integral.

    Returns a Laurent series in ``z`` and ``h`` normalized as
    ``z^-i (1 + O(z))`` (resp. ``z^(i-1)(1 + O(z))``).
    """
    if _pole_order_xy(curve) < 3:
        raise PoleOrderTooLow("x'y' must have a pole of order at least 3 at z = 0")
    jets = Jets.global_(curve, Z)
    sigma = -1 if dual else 1
    op = _compiled(order, False, sigma, 0, Fraction(1, 2))
    g = TruncatedSeries((Z,), {((i - 1) if dual else -i,): 1})
    return apply_operator(op, g, jets, order)


def gaussian_integrand_from_exponent(exponent, prefactor, z=Z, order=1):
    """Build a :class:`GaussianIntegrand` from an exponent ``E(chi)/hbar``.

    ``exponent`` and ``prefactor`` are callables that receive the series
    ``chi = z + s xi`` and return series; ``exponent`` must vanish to second
    order at ``chi = z``.  Returns the integrand normalized so that the
    quadratic part is ``-a xi^2/2`` and ``exp(higher)`` the rest.
    """
    chi = TruncatedSeries((z, S, XI), {(1, 0, 0): 1, (0, 1, 1): 1}, (INF, 2 * order + 2, INF))
    e = exponent(chi)
    if S not in e.vars:
        raise GaussianError("exponent does not depend on the integration variable")
    e = e.truncate({S: 2 * order + 2})
    quad = coefficient(coefficient(e, S, 2), XI, 2) if XI in e.vars else None
    for k in (0, 1):
        if not coefficient(e, S, k).is_zero():
            raise GaussianError("exponent is not critical at chi = z")
    rest_terms = {}
    i_s, i_x = e.index(S), e.index(XI)
    for ex, c in e.terms.items():
        if ex[i_s] < 2:
            continue
        if ex[i_s] == 2 and ex[i_x] == 2:
            continue
        ne = list(ex)
        ne[i_s] -= 2
        rest_terms[tuple(ne)] = c
    higher = TruncatedSeries(e.vars, rest_terms, tuple(
        2 * order if v == S else t for v, t in zip(e.vars, e.trunc)))
    a = quad.scale(-2)
    a = a.drop_var(S) if S in a.vars else a
    pref = prefactor(chi)
    return GaussianIntegrand(pref.truncate({S: 2 * order}), a, higher)
