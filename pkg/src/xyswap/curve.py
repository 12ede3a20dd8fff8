"""Rational spectral curves and systems of symmetric differentials on them.

A curve is a pair of Laurent polynomials ``x(z)``, ``y(z)`` in a global
coordinate ``z``.  Coefficients may depend polynomially on a formal
deformation parameter ``eps`` (kept as a truncated series variable).

A :class:`DifferentialSystem` stores ``omega^(g)_n / (dz_1 ... dz_n)`` as exact
Laurent polynomials in ``z1 .. zn``.  The (0,2) entry is stored as its
regular part; the standard singular part ``1/(z1-z2)^2`` is implied.
"""

from __future__ import annotations

import json
from fractions import Fraction

from .series import (INF, Q, NonInvertible, SeriesError, TruncatedSeries, derive,
                     invert, substitute)

Z = "z"
EPS = "eps"


class CurveError(ValueError):
    pass


class ZeroDerivative(CurveError):
    pass


class UnknownPreset(CurveError):
    pass


class NotQuasiHomogeneous(CurveError):
    pass


class NotRegularPoint(CurveError):
    pass


class NonInvertibleCoordinate(CurveError):
    pass


class AsymmetricSystem(CurveError):
    pass


def zvar(i):
    return f"z{i}"


def zvars(n):
    return tuple(zvar(i) for i in range(1, n + 1))


def laurent(coeffs, var=Z, extra=()):
    """Build an exact Laurent polynomial from ``{exponent: coeff}``.

    ``extra`` lists ``(eps_power, {exponent: coeff})`` blocks for deformed
    coefficients.
    """
    terms = {(k, 0): c for k, c in coeffs.items()}
    for p, block in extra:
        for k, c in block.items():
            terms[(k, p)] = terms.get((k, p), 0) + Q(c)
    return TruncatedSeries((var, EPS), terms)


def _as_curve_series(s, eps_order):
    if isinstance(s, TruncatedSeries):
        s = s.with_vars(tuple(sorted(set(s.vars) | {Z, EPS}, key=lambda v: (v != Z, v))))
        s = TruncatedSeries((Z, EPS), {(e[s.vars.index(Z)], e[s.vars.index(EPS)]): c
                                       for e, c in s.terms.items()})
    else:
        s = laurent({k: Q(c) for k, c in dict(s).items()})
    return s.truncate({EPS: eps_order}) if eps_order is not None else s


class SpectralCurve:
    """``x(z)``, ``y(z)`` with optional formal deformation parameter ``eps``."""

    def __init__(self, x, y, name="custom", params=None, eps_order=None):
        self.eps_order = eps_order
        self.x = _as_curve_series(x, eps_order)
        self.y = _as_curve_series(y, eps_order)
        self.name = name
        self.params = dict(params or {})
        self.dx = derive(self.x, Z)
        self.dy = derive(self.y, Z)
        if self.dx.is_zero() or self.dy.is_zero():
            raise ZeroDerivative("x and y must both be non-constant")

    # -- structure -------------------------------------------------------
    @property
    def deformed(self):
        return any(e[1] for s in (self.x, self.y) for e in s.terms)

    def swapped(self):
        """The same curve with the roles of ``x`` and ``y`` exchanged."""
        c = SpectralCurve.__new__(SpectralCurve)
        c.eps_order = self.eps_order
        c.x, c.y, c.dx, c.dy = self.y, self.x, self.dy, self.dx
        c.name = self.name + "^swap"
        c.params = dict(self.params)
        return c

    def weights(self):
        """Scaling weights ``(p, q, w_eps)`` with ``x ~ z^p``, ``y ~ z^q``.

        Raises :class:`NotQuasiHomogeneous` if no such weights exist.
        Constant terms are ignored because only derivatives enter.
        """
        weps = None
        degs = []
        for s in (self.x, self.y):
            pure = {e[0] for e in s.terms if e[1] == 0 and e[0] != 0}
            if len(pure) != 1:
                raise NotQuasiHomogeneous("leading part must be a single monomial")
            p = pure.pop()
            degs.append(p)
            for (k, b), _ in s.terms.items():
                if b and k != 0:
                    w = Fraction(p - k, b)
                    if weps is not None and w != weps:
                        raise NotQuasiHomogeneous("inconsistent deformation weight")
                    weps = w
        return degs[0], degs[1], weps

    def degree(self, g, n, eps_power=0):
        """Homogeneous degree in z of the eps^k part of omega^(g)_n/prod dz."""
        p, q, w = self.weights()
        d = -n - (2 * g - 2 + n) * (p + q)
        if eps_power:
            d -= eps_power * w
        return d

    def hbar_weight(self):
        p, q, _ = self.weights()
        return p + q

    def jet(self, which, center, trunc, var="t"):
        """Expansion of x, y, x', y' (``which``) at ``z = center + var``."""
        s = {"x": self.x, "y": self.y, "dx": self.dx, "dy": self.dy}[which]
        return shift(s, Z, center, var, trunc)

    def to_json(self):
        return {"name": self.name, "params": {k: str(v) for k, v in self.params.items()},
                "x": self.x.to_json(), "y": self.y.to_json(), "eps_order": self.eps_order}

    def __repr__(self):
        return f"SpectralCurve({self.name}, x={self.x!r}, y={self.y!r})"


def shift(s, var, center, new_var, trunc):
    """Re-expand the Laurent polynomial ``s`` in ``var`` around ``center``.

    Returns a series in ``new_var`` with ``var = center + new_var``.  For
    ``center == 0`` the result is exact.  Other variables are untouched.
    """
    i = s.index(var)
    others = tuple(v for v in s.vars if v != var)
    out_vars = others + (new_var,)
    c = Q(center)
    if c == 0:
        terms = {tuple(e[:i] + e[i + 1:]) + (e[i],): v for e, v in s.terms.items()}
        return TruncatedSeries(out_vars, terms, tuple(t for j, t in enumerate(s.trunc) if j != i)
                               + (s.trunc[i],))
    out = TruncatedSeries.zero(out_vars, {new_var: trunc})
    powers = {}
    for e, v in s.terms.items():
        k = e[i]
        if k not in powers:
            powers[k] = shifted_power(c, k, new_var, trunc)
        mono = TruncatedSeries(others, {tuple(e[:i] + e[i + 1:]): v}).with_vars(out_vars)
        out = out + mono * powers[k].with_vars(out_vars)
    return out


def shifted_power(c, k, var, trunc):
    """``(c + var)^k`` as a series truncated at ``var^trunc`` (c nonzero)."""
    c = Q(c)
    terms = {}
    binom = Q(1)
    m = 0
    while m <= trunc:
        if binom == 0:
            break
        terms[(m,)] = binom * c ** (k - m)
        binom = binom * (k - m) / (m + 1)
        m += 1
    exact = k >= 0 and k <= trunc
    return TruncatedSeries((var,), terms, (INF if exact else trunc,))


def expand_entry(entry, legs):
    """Evaluate an exact Laurent polynomial in z1..zk at expanded points.

    ``legs[j]`` is a callable ``k -> series`` returning the expansion of
    ``z_{j+1}^k``.  All returned series must share a common variable list.
    """
    names = entry.vars
    zi = [names.index(zvar(j + 1)) for j in range(len(legs))]
    rest = [i for i, v in enumerate(names) if v not in {zvar(j + 1) for j in range(len(legs))}]
    cache = {}
    total = None
    for e, c in entry.terms.items():
        term = None
        for j, idx in enumerate(zi):
            key = (j, e[idx])
            if key not in cache:
                cache[key] = legs[j](e[idx])
            f = cache[key]
            term = f if term is None else term * f
        extra = TruncatedSeries(tuple(names[i] for i in rest), {tuple(e[i] for i in rest): c})
        if term is None:
            term = extra
        else:
            allv = tuple(dict.fromkeys(term.vars + extra.vars))
            term = term.with_vars(allv) * extra.with_vars(allv)
        total = term if total is None else total + term
    return total


# -- systems ------------------------------------------------------------------

def is_symmetric(entry, n):
    """Invariance under a transposition and an n-cycle (which generate S_n)."""
    idx = [entry.index(v) for v in zvars(n)]
    gens = [[1, 0] + list(range(2, n)), list(range(1, n)) + [0]]
    for perm in gens:
        for e, c in entry.terms.items():
            f = list(e)
            for a, b in enumerate(perm):
                f[idx[a]] = e[idx[b]]
            if entry.terms.get(tuple(f)) != c:
                return False
    return True


def normalize_entry(s, n):
    names = zvars(n) + (EPS,)
    if not set(s.vars) <= set(names):
        raise CurveError(f"unexpected variables {sorted(set(s.vars) - set(names))}")
    return s.with_vars(names)


class DifferentialSystem:
    """Symmetric differentials ``omega^(g)_n`` with the standard (0,2) pole.

    ``entries[(g, n)]`` is ``omega^(g)_n / prod dz_i`` for ``(g, n) != (0, 2)``
    and the regular part of ``omega^(0)_2 / dz_1 dz_2`` for ``(0, 2)``.
    Missing entries are zero.  ``hbar_order`` bounds ``2g - 2 + n``.
    """

    def __init__(self, curve, entries=None, hbar_order=0, check_symmetry=True):
        self.curve = curve
        self.hbar_order = hbar_order
        self.entries = {}
        for (g, n), s in (entries or {}).items():
            if 2 * g - 2 + n > hbar_order or (g, n) == (0, 1):
                continue
            s = normalize_entry(s, n)
            if check_symmetry and n > 1 and not is_symmetric(s, n):
                raise AsymmetricSystem(f"entry ({g},{n}) is not symmetric")
            if not s.is_zero():
                self.entries[(g, n)] = s
        self.check_homogeneous()

    def check_homogeneous(self):
        try:
            self.curve.weights()
        except NotQuasiHomogeneous:
            return False
        for (g, n), s in self.entries.items():
            ie = s.index(EPS)
            zi = [s.index(v) for v in zvars(n)]
            for e in s.terms:
                if sum(e[i] for i in zi) != self.curve.degree(g, n, e[ie]):
                    raise NotQuasiHomogeneous(
                        f"entry ({g},{n}) is not homogeneous of degree {self.curve.degree(g, n)}")
        return True

    def get(self, g, n):
        s = self.entries.get((g, n))
        if s is None:
            return TruncatedSeries.zero(zvars(n) + (EPS,))
        return s

    def keys(self):
        return sorted(self.entries)

    def types(self):
        """All (g, n) with 2g-2+n <= hbar_order and n >= 1, in order."""
        out = []
        for k in range(0, self.hbar_order + 1):
            for g in range(0, k // 2 + 2):
                n = k - 2 * g + 2
                if n >= 1 and (g, n) != (0, 1):
                    out.append((g, n))
        return sorted(out, key=lambda t: (2 * t[0] - 2 + t[1], t[1]))

    def same_as(self, other):
        keys = set(self.entries) | set(other.entries)
        return all(self.get(*k).terms == other.get(*k).terms for k in keys)

    def difference(self, other):
        keys = sorted(set(self.entries) | set(other.entries))
        return {k: self.get(*k) - other.get(*k) for k in keys
                if self.get(*k).terms != other.get(*k).terms}

    def to_json(self):
        return {"curve": self.curve.to_json(), "hbar_order": self.hbar_order,
                "entries": {f"{g},{n}": s.to_json() for (g, n), s in sorted(self.entries.items())}}

    def dumps(self):
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, data, curve):
        entries = {tuple(int(a) for a in k.split(",")): TruncatedSeries.from_json(v)
                   for k, v in data["entries"].items()}
        return cls(curve, entries, data["hbar_order"])

    def __repr__(self):
        return f"DifferentialSystem({self.curve.name}, order={self.hbar_order}, entries={self.keys()})"


def trivial_system(curve, hbar_order):
    """Only the standard (0,2) kernel; every other entry vanishes."""
    return DifferentialSystem(curve, {}, hbar_order)


class RationalDifferentialRep:
    """Laurent part plus poles ``c (z_i - z_j)^(-k)`` on diagonals."""

    def __init__(self, laurent_part, diagonal=None):
        self.laurent = laurent_part
        self.diagonal = dict(diagonal or {})

    def biresidue(self, i=1, j=2):
        return self.diagonal.get((i, j, 2), Q(0))

    def expand(self, var_small, var_big, trunc):
        """Expand for ``|var_small| < |var_big|`` up to ``var_small^trunc``."""
        out = self.laurent
        for (i, j, k), c in self.diagonal.items():
            a, b = zvar(i), zvar(j)
            sign = 1
            if a == var_small:
                a, b = b, a
                sign = (-1) ** k
            # (b_big - a_small)^(-k) = b^-k sum C(k+m-1, m) (a/b)^m
            terms = {}
            coef = Q(1)
            for m in range(trunc + 1):
                terms[(m, -k - m)] = Q(c) * sign * coef
                coef = coef * (k + m) / (m + 1)
            s = TruncatedSeries((var_small, var_big), terms, (trunc, INF))
            allv = tuple(dict.fromkeys(out.vars + s.vars))
            out = out.with_vars(allv) + s.with_vars(allv)
        return out


def standard_kernel():
    return RationalDifferentialRep(TruncatedSeries.zero(zvars(2)), {(1, 2, 2): Q(1)})


def dx_dy_ratio(curve):
    """``dx/dy`` as an exact Laurent polynomial when ``y'`` is invertible."""
    try:
        return curve.dx * invert(curve.dy)
    except NonInvertible as exc:
        raise CurveError("dy has no Laurent inverse") from exc


def check_regular_point(system, point):
    """Raise :class:`NotRegularPoint` if some entry has a pole at ``point``."""
    bad = []
    for (g, n), s in system.entries.items():
        zi = [s.index(v) for v in zvars(n)]
        for e in s.terms:
            if point == "inf":
                if any(e[i] > -2 for i in zi):
                    bad.append((g, n))
                    break
            elif Q(point) == 0 and any(e[i] < 0 for i in zi):
                bad.append((g, n))
                break
    if point == "inf":
        bad.append((0, 2))  # the standard kernel is singular at infinity in z
    if bad:
        raise NotRegularPoint(f"entries {sorted(set(bad))} are singular at {point}")
    return True


def divided_difference(f, var=Z, a="z1", b="z2"):
    """``(f(a) - f(b)) / (a - b)`` for a Laurent polynomial ``f``.

    Exact: ``(a^k - b^k)/(a - b)`` is a complete homogeneous sum, and
    ``(a^-m - b^-m)/(a - b) = -h_{m-1}(a, b) / (a^m b^m)``.
    """
    i = f.index(var)
    others = tuple(v for v in f.vars if v != var)
    out_vars = (a, b) + others
    terms = {}
    for e, c in f.terms.items():
        k = e[i]
        rest = e[:i] + e[i + 1:]
        if k > 0:
            for p in range(k):
                key = (p, k - 1 - p) + rest
                terms[key] = terms.get(key, 0) + c
        elif k < 0:
            m = -k
            for p in range(m):
                key = (p - m, m - 1 - p - m) + rest
                terms[key] = terms.get(key, 0) - c
    return TruncatedSeries(out_vars, terms)


def divide_by_difference(p, a="z1", b="z2"):
    """Exact quotient ``p / (a - b)`` of a Laurent polynomial; raises if inexact."""
    ia = p.index(a)
    # multiply through by a monomial so that a-exponents are non-negative
    shift_a = -min((e[ia] for e in p.terms), default=0)
    shift_a = max(shift_a, 0)
    # group by (b exponent, other exponents) after substituting a = b + d:
    # synthetic division of a polynomial in a with coefficients in Q[b^{+-1}, ...]
    by_rest = {}
    for e, c in p.terms.items():
        rest = tuple(x for j, x in enumerate(e) if j != ia)
        by_rest.setdefault(rest, {})[e[ia] + shift_a] = c
    # p(a) = sum_k c_k(b,...) a^k ; divide by (a - b): q_{k-1} = c_k + b q_k
    quotient = {}
    poly = {}
    for rest, coeffs in by_rest.items():
        for k, c in coeffs.items():
            poly.setdefault(k, {})
            poly[k][rest] = poly[k].get(rest, 0) + c
    if not poly:
        return TruncatedSeries(p.vars, {})
    top = max(poly)
    carry = {}
    rb = [j for j, v in enumerate(v for v in p.vars if v != a) if v == b][0]
    for k in range(top, 0, -1):
        cur = dict(poly.get(k, {}))
        for r, c in carry.items():
            cur[r] = cur.get(r, 0) + c
        cur = {r: c for r, c in cur.items() if c}
        for r, c in cur.items():
            quotient[(k - 1, r)] = c
        carry = {}
        for r, c in cur.items():
            r2 = r[:rb] + (r[rb] + 1,) + r[rb + 1:]
            carry[r2] = carry.get(r2, 0) + c
    remainder = dict(poly.get(0, {}))
    for r, c in carry.items():
        remainder[r] = remainder.get(r, 0) + c
    if any(c for c in remainder.values()):
        raise SeriesError("polynomial is not divisible by the difference")
    terms = {}
    for (k, r), c in quotient.items():
        e = list(r)
        e.insert(ia, k - shift_a)
        terms[tuple(e)] = c
    return TruncatedSeries(p.vars, terms)


def omega02_singular_difference(f):
    """Data for ``1/(z1-z2)^2 - f'(z1) f'(z2)/(f(z1)-f(z2))^2``.

    Returns ``(P, q)`` with ``q = (f(z1)-f(z2))/(z1-z2)`` and the difference
    equal to ``P / q^2``.  Both are exact Laurent polynomials.
    """
    q = divided_difference(f)
    df = derive(f, Z)
    d1 = df.rename({Z: "z1"})
    d2 = df.rename({Z: "z2"})
    allv = tuple(dict.fromkeys(q.vars + d1.vars + d2.vars))
    q = q.with_vars(allv)
    num = q * q - d1.with_vars(allv) * d2.with_vars(allv)
    p = divide_by_difference(divide_by_difference(num))
    return p, q


def pullback_kernel_defect(phi, var, order):
    """Regular part of the standard kernel pulled back along ``z = phi(var)``.

    ``phi`` is a polynomial in ``var`` with ``phi'(0) != 0``.  Returns the
    symmetric power series ``phi'_1 phi'_2/(phi_1-phi_2)^2 - 1/(x_1-x_2)^2`` in
    variables ``x1, x2``, correct through total degree ``order``.
    """
    f = phi.rename({var: Z}) if var != Z else phi
    p, q = omega02_singular_difference(f)
    p = p.rename({"z1": "x1", "z2": "x2"})
    q = q.rename({"z1": "x1", "z2": "x2"})
    # -(P/q^2): the defect is phi'phi'/(phi-phi)^2 - 1/(x-x)^2 = -P/q^2
    eta = "_eta"
    def graded(s):
        terms = {}
        i1, i2 = s.index("x1"), s.index("x2")
        for e, c in s.terms.items():
            terms[e + (e[i1] + e[i2],)] = c
        return TruncatedSeries(s.vars + (eta,), terms, s.trunc + (order,))
    qq = graded(q * q)
    out = graded(p).scale(-1) * invert(qq)
    keep = out.index(eta)
    terms = {}
    for e, c in out.terms.items():
        if e[keep] <= order:
            terms[e[:keep] + e[keep + 1:]] = c
    vs = tuple(v for v in out.vars if v != eta)
    return TruncatedSeries(vs, terms)


def _series_reversion(phi, var, order):
    """``psi`` with ``phi(psi(w)) = w`` through ``w^order`` (as a polynomial)."""
    lin = phi.terms.get((1,), Q(0)) if phi.vars == (var,) else None
    if phi.vars != (var,) or phi.terms.get((0,), Q(0)) != 0 or not lin:
        raise NonInvertibleCoordinate("need phi(0) = 0 and phi'(0) != 0 in one variable")
    if min(e[0] for e in phi.terms) < 0:
        raise NonInvertibleCoordinate("coordinate change has a pole")
    w = TruncatedSeries((var,), {(1,): 1}, (order,))
    psi = w.scale(1 / lin)
    for _ in range(order + 1):
        psi = psi - (substitute(phi, var, psi, {var: order}) - w).scale(1 / lin)
        psi = psi.truncate({var: order})
    return TruncatedSeries((var,), psi.terms)


def change_local_coordinate(expansion, phi, order, var=Z):
    """Re-expand local entries in the new coordinate ``w = phi(z)``.

    ``expansion`` maps ``(g, n)`` to power series in ``z1 .. zn`` (for (0,2)
    the regular part next to ``1/(z1-z2)^2``).  Returned entries use the same
    variable names, now standing for the new coordinate, and are correct
    through total degree ``order`` in each variable.  The (0,2) entry picks up
    the regular difference between the two standard kernels.
    """
    psi = _series_reversion(phi, var, 2 * order + 4)
    dpsi = derive(psi, var)
    out = {}
    for (g, n), s in expansion.items():
        names = zvars(n)
        cur = s.with_vars(tuple(dict.fromkeys(s.vars + names))).truncate({v: order for v in names})
        for v in names:
            if v not in cur.vars:
                continue
            sub = TruncatedSeries((v,), psi.terms, (order,))
            cur = substitute(cur, v, sub, {v: order})
        for v in names:
            cur = cur.with_vars(tuple(dict.fromkeys(cur.vars + (v,))))
            cur = (cur * dpsi.rename({var: v}).with_vars(cur.vars)).truncate({v: order})
        if (g, n) == (0, 2):
            # z = psi(w): dz1 dz2/(z1-z2)^2 = dw1 dw2/(w1-w2)^2 + defect
            defect = pullback_kernel_defect(psi, var, 2 * order)
            defect = defect.rename({"x1": "z1", "x2": "z2"})
            defect = TruncatedSeries(defect.vars, {e: c for e, c in defect.terms.items()
                                                   if max(e) <= order})
            allv = tuple(dict.fromkeys(cur.vars + defect.vars))
            cur = cur.with_vars(allv) + defect.with_vars(allv)
        out[(g, n)] = cur.truncate({v: order for v in names})
    return out


# -- presets ------------------------------------------------------------------

PRESETS = ("higher-airy", "higher-bgw", "deformed-bgw")


def curve_from_preset(name, r=2, eps_order=None, epsilon=None):
    """Named curve families in the global coordinate z.

    * ``higher-airy``:  x = z^-r / r,  y = -1/z
    * ``higher-bgw``:   x = z^-r / r,  y = -z
    * ``deformed-bgw``: x = z^-r / r - eps z^-1,  y = -z  (eps formal)
    """
    r = int(r)
    if r < 2:
        raise CurveError("r must be at least 2")
    x = {-r: Fraction(1, r)}
    if name == "higher-airy":
        return SpectralCurve(laurent(x), laurent({-1: -1}), name, {"r": r})
    if name == "higher-bgw":
        return SpectralCurve(laurent(x), laurent({1: -1}), name, {"r": r})
    if name == "deformed-bgw":
        order = 2 if eps_order is None else int(eps_order)
        xs = laurent(x, extra=[(1, {-1: -1})])
        return SpectralCurve(xs, laurent({1: -1}), name, {"r": r, "eps_order": order},
                             eps_order=order)
    raise UnknownPreset(name)
