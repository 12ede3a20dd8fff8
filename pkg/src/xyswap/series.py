"""Exact truncated multivariate Laurent series over the rationals.

A series stores a sparse map from integer exponent vectors to rationals
together with two per-variable bounds:

``trunc[i]``
    every coefficient whose exponent vector lies in the box
    ``e[j] <= trunc[j]`` (all j) is known exactly.  ``INF`` means the
    series is exact (polynomial) in that variable.
``low[i]``
    a lower bound for the exponent of variable ``i`` in the *true*
    (untruncated) object.  Products use it to decide which coefficients
    are still exact.

Coefficients are ``gmpy2.mpq`` values.  Series are immutable.
"""
from __future__ import annotations

import json
import math
from fractions import Fraction

from gmpy2 import mpq, mpz

INF = math.inf

_ZERO = mpq(0)
_ONE = mpq(1)


class SeriesError(ArithmeticError):
    pass


class NonInvertible(SeriesError):
    pass


class ResiduePresent(SeriesError):
    pass


class ConstantTermPresent(SeriesError):
    pass


class NotUnitLeading(SeriesError):
    pass


class NonConvergentComposition(SeriesError):
    pass


class OutOfTruncationWindow(SeriesError):
    pass


def Q(x, d=None) -> mpq:
    """Coerce ints, Fractions, strings like '3/4' or mpq into mpq."""
    if d is not None:
        return mpq(x, d)
    if isinstance(x, Fraction):
        return mpq(x.numerator, x.denominator)
    if isinstance(x, float):
        raise TypeError("floating point coefficients are not allowed")
    return mpq(x)


def _tadd(a, b):
    return tuple(x + y for x, y in zip(a, b))


class TruncatedSeries:
    __slots__ = ("vars", "terms", "trunc", "low", "_hash")

    def __init__(self, variables=(), terms=None, trunc=None, low=None, _trusted=False):
        variables = tuple(variables)
        if len(set(variables)) != len(variables):
            raise ValueError("duplicate variable names")
        nv = len(variables)
        self.vars = variables
        if trunc is None:
            trunc = (INF,) * nv
        elif isinstance(trunc, dict):
            trunc = tuple(trunc.get(v, INF) for v in variables)
        trunc = tuple(INF if t is None else t for t in trunc)
        if _trusted:
            self.terms = terms
        else:
            clean = {}
            for e, c in (terms or {}).items():
                e = tuple(int(k) for k in e)
                if len(e) != nv:
                    raise ValueError("exponent length mismatch")
                c = Q(c)
                if c == 0:
                    continue
                if any(e[i] > trunc[i] for i in range(nv)):
                    continue
                clean[e] = clean.get(e, _ZERO) + c
            self.terms = {e: c for e, c in clean.items() if c != 0}
        if low is None:
            if self.terms:
                low = tuple(min(e[i] for e in self.terms) for i in range(nv))
            else:
                low = tuple(t + 1 if t != INF else INF for t in trunc)
        elif isinstance(low, dict):
            low = tuple(low.get(v, 0) for v in variables)
        low = tuple(low)
        # a series known to vanish on a slab e[j] <= trunc[j] is exact there
        # irrespective of the other variables
        for j in range(nv):
            if low[j] > trunc[j]:
                trunc = tuple(trunc[j] if k == j else INF for k in range(nv))
                break
        self.trunc = trunc
        self.low = low
        self._hash = None

    # ------------------------------------------------------------------ basics
    @classmethod
    def const(cls, c, variables=(), trunc=None):
        nv = len(variables)
        terms = {(0,) * nv: Q(c)} if Q(c) != 0 else {}
        low = (0,) * nv if terms else None
        return cls(variables, terms, trunc, low=low)

    @classmethod
    def var(cls, name, trunc=INF, power=1, coeff=1):
        return cls((name,), {(power,): coeff}, (trunc,))

    @classmethod
    def monomial(cls, variables, exps, coeff=1, trunc=None):
        return cls(variables, {tuple(exps): coeff}, trunc)

    @classmethod
    def zero(cls, variables=(), trunc=None):
        return cls(variables, {}, trunc)

    def index(self, v):
        return self.vars.index(v)

    def is_zero(self):
        return not self.terms

    def __bool__(self):
        return bool(self.terms)

    def items(self):
        return self.terms.items()

    def __len__(self):
        return len(self.terms)

    def trunc_of(self, v):
        return self.trunc[self.vars.index(v)] if v in self.vars else INF

    def low_of(self, v):
        return self.low[self.vars.index(v)] if v in self.vars else 0

    def valuation(self, v):
        """Smallest stored exponent of ``v`` (INF for the zero series)."""
        if v not in self.vars:
            return 0 if self.terms else INF
        i = self.vars.index(v)
        return min((e[i] for e in self.terms), default=INF)

    def degree(self, v):
        if v not in self.vars:
            return 0 if self.terms else -INF
        i = self.vars.index(v)
        return max((e[i] for e in self.terms), default=-INF)

    def constant_term(self):
        return self.terms.get((0,) * len(self.vars), _ZERO)

    def with_vars(self, variables):
        """Re-embed into a superset of variables (new ones exact, exponent 0)."""
        variables = tuple(variables)
        if variables == self.vars:
            return self
        pos = []
        for v in self.vars:
            if v not in variables:
                if self.valuation(v) == 0 and self.degree(v) == 0 or not self.terms:
                    pos.append(None)
                    continue
                raise ValueError(f"cannot drop variable {v!r}")
            pos.append(variables.index(v))
        nv = len(variables)
        terms = {}
        for e, c in self.terms.items():
            ne = [0] * nv
            for k, p in enumerate(pos):
                if p is not None:
                    ne[p] = e[k]
            terms[tuple(ne)] = c
        trunc = [INF] * nv
        low = [0] * nv
        for k, p in enumerate(pos):
            if p is not None:
                trunc[p] = self.trunc[k]
                low[p] = self.low[k]
        return TruncatedSeries(variables, terms, tuple(trunc), tuple(low), _trusted=True)

    def _aligned(self, other):
        if isinstance(other, TruncatedSeries):
            if other.vars == self.vars:
                return self, other
            vs = list(self.vars)
            for v in other.vars:
                if v not in vs:
                    vs.append(v)
            return self.with_vars(vs), other.with_vars(vs)
        return self, TruncatedSeries.const(other, self.vars)

    # -------------------------------------------------------------- arithmetic
    def __add__(self, other):
        a, b = self._aligned(other)
        trunc = tuple(min(x, y) for x, y in zip(a.trunc, b.trunc))
        low = tuple(min(x, y) for x, y in zip(a.low, b.low))
        terms = dict(a.terms)
        for e, c in b.terms.items():
            s = terms.get(e)
            if s is None:
                terms[e] = c
            else:
                s = s + c
                if s:
                    terms[e] = s
                else:
                    del terms[e]
        if any(t != INF for t in trunc):
            terms = {e: c for e, c in terms.items() if all(x <= t for x, t in zip(e, trunc))}
        return TruncatedSeries(a.vars, terms, trunc, low, _trusted=True)

    __radd__ = __add__

    def __neg__(self):
        return TruncatedSeries(self.vars, {e: -c for e, c in self.terms.items()},
                               self.trunc, self.low, _trusted=True)

    def __sub__(self, other):
        if isinstance(other, TruncatedSeries):
            return self + (-other)
        return self + (-Q(other))

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c):
        c = Q(c)
        if c == 0:
            return TruncatedSeries(self.vars, {}, self.trunc, self.low, _trusted=True)
        return TruncatedSeries(self.vars, {e: c * v for e, v in self.terms.items()},
                               self.trunc, self.low, _trusted=True)

    def __mul__(self, other):
        if not isinstance(other, TruncatedSeries):
            return self.scale(other)
        a, b = self._aligned(other)
        trunc = tuple(min(ta + lb, tb + la)
                      for ta, tb, la, lb in zip(a.trunc, b.trunc, a.low, b.low))
        low = tuple(x + y for x, y in zip(a.low, b.low))
        terms = {}
        bounded = any(t != INF for t in trunc)
        at, bt = a.terms, b.terms
        if len(at) > len(bt):
            at, bt = bt, at
        bitems = list(bt.items())
        get = terms.get
        if bounded:
            nv = len(trunc)
            idx = [i for i in range(nv) if trunc[i] != INF]
            for ea, ca in at.items():
                lim = [trunc[i] - ea[i] for i in idx]
                for eb, cb in bitems:
                    ok = True
                    for k, i in enumerate(idx):
                        if eb[i] > lim[k]:
                            ok = False
                            break
                    if ok:
                        e = tuple(x + y for x, y in zip(ea, eb))
                        terms[e] = get(e, _ZERO) + ca * cb
        else:
            for ea, ca in at.items():
                for eb, cb in bitems:
                    e = tuple(x + y for x, y in zip(ea, eb))
                    terms[e] = get(e, _ZERO) + ca * cb
        terms = {e: c for e, c in terms.items() if c}
        return TruncatedSeries(a.vars, terms, trunc, low, _trusted=True)

    __rmul__ = __mul__

    def __pow__(self, k):
        if not isinstance(k, int):
            raise TypeError("integer powers only")
        if k < 0:
            return invert(self) ** (-k)
        result = TruncatedSeries.const(1, self.vars)
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    def __truediv__(self, other):
        if isinstance(other, TruncatedSeries):
            return self * invert(other)
        return self.scale(_ONE / Q(other))

    def __rtruediv__(self, other):
        return invert(self).scale(other)

    # ------------------------------------------------------------- comparison
    def __eq__(self, other):
        if not isinstance(other, TruncatedSeries):
            other = TruncatedSeries.const(other, self.vars)
        a, b = self._aligned(other)
        return a.terms == b.terms and a.trunc == b.trunc

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.vars, frozenset(self.terms.items()), self.trunc))
        return self._hash

    def agrees_with(self, other):
        """True when both series coincide on their common exact window."""
        diff = self - other
        return diff.is_zero()

    def truncate(self, bounds):
        """Lower the truncation: ``bounds`` maps variable -> new bound."""
        trunc = tuple(min(t, bounds.get(v, INF)) for v, t in zip(self.vars, self.trunc))
        terms = {e: c for e, c in self.terms.items() if all(x <= t for x, t in zip(e, trunc))}
        return TruncatedSeries(self.vars, terms, trunc, self.low, _trusted=True)

    def map_coefficients(self, fn):
        terms = {e: Q(fn(c)) for e, c in self.terms.items()}
        return TruncatedSeries(self.vars, {e: c for e, c in terms.items() if c},
                               self.trunc, self.low, _trusted=True)

    def rename(self, mapping):
        vs = tuple(mapping.get(v, v) for v in self.vars)
        return TruncatedSeries(vs, self.terms, self.trunc, self.low, _trusted=True)

    def drop_var(self, v):
        """Remove a variable that only occurs with exponent 0."""
        if v not in self.vars:
            return self
        i = self.vars.index(v)
        if any(e[i] for e in self.terms):
            raise ValueError(f"{v!r} still occurs")
        vs = self.vars[:i] + self.vars[i + 1:]
        terms = {e[:i] + e[i + 1:]: c for e, c in self.terms.items()}
        t = self.trunc
        return TruncatedSeries(vs, terms, t[:i] + t[i + 1:], self.low[:i] + self.low[i + 1:],
                               _trusted=True)

    def __repr__(self):
        if not self.terms:
            body = "0"
        else:
            parts = []
            for e in sorted(self.terms):
                mono = "*".join(f"{v}^{k}" if k != 1 else v for v, k in zip(self.vars, e) if k)
                c = self.terms[e]
                parts.append(f"({c})" + ("*" + mono if mono else ""))
            body = " + ".join(parts)
        tr = {v: t for v, t in zip(self.vars, self.trunc) if t != INF}
        return f"TruncatedSeries({body}; trunc={tr})"

    # ------------------------------------------------------------------- JSON
    def to_json(self):
        return {
            "vars": list(self.vars),
            "trunc": {v: (None if t == INF else int(t)) for v, t in zip(self.vars, self.trunc)},
            "terms": [[list(e), [int(c.numerator), int(c.denominator)]]
                      for e, c in sorted(self.terms.items())],
        }

    def dumps(self):
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, data):
        if isinstance(data, str):
            data = json.loads(data)
        vs = tuple(data["vars"])
        tr = data.get("trunc", {})
        trunc = tuple(INF if tr.get(v) is None else tr[v] for v in vs)
        terms = {tuple(e): mpq(int(nd[0]), int(nd[1])) for e, nd in data["terms"]}
        return cls(vs, terms, trunc)


# ---------------------------------------------------------------------------
# module level operations

def add(a, b):
    return a + b


def mul(a, b):
    return a * b


def scalar_mul(c, a):
    return a.scale(c)


def neg(a):
    return -a


def pow(a, k):  # noqa: A001 - mirrors the operation name
    return a ** k


def _nilpotent_certificate(s):
    """Check that powers of ``s`` leave every truncation window.

    Each term must have a positive exponent in some variable with a finite
    truncation and a non-negative lower bound, and all lower bounds must be
    non-negative in those variables.
    """
    finite = [i for i, t in enumerate(s.trunc) if t != INF and s.low[i] >= 0]
    for e in s.terms:
        if not any(e[i] > 0 for i in finite):
            return False
    return True


def _window(s):
    return {v: t for v, t in zip(s.vars, s.trunc) if t != INF}


def _geometric_inverse(one_plus_s_minus_one):
    s = one_plus_s_minus_one
    win = _window(s)
    result = TruncatedSeries.const(1, s.vars)
    power = TruncatedSeries.const(1, s.vars)
    sign = 1
    while True:
        power = (power * s).truncate(win)
        sign = -sign
        if not power.terms:
            result = result + power
            break
        result = result + power.scale(sign)
    return result


def _lead_candidates(a):
    nv = len(a.vars)
    lead = tuple(min(e[i] for e in a.terms) for i in range(nv))
    if lead in a.terms:
        yield lead
    # otherwise look for a monomial that is minimal in the non-negative directions
    zdirs = [i for i in range(nv) if a.trunc[i] != INF and lead[i] >= 0]
    cands = [e for e in a.terms if all(e[i] == lead[i] for i in zdirs)]
    cands.sort(key=lambda e: tuple(e[i] for i in range(nv) if i not in zdirs))
    for e in cands[:64]:
        if e != lead:
            yield e


def invert(a):
    """Multiplicative inverse of a = c*m*(1+s) with s nilpotent in the window."""
    if not a.terms:
        raise NonInvertible("zero series")
    for lead in _lead_candidates(a):
        c = a.terms[lead]
        inv_c = _ONE / c
        s_terms = {}
        for e, v in a.terms.items():
            if e != lead:
                s_terms[tuple(x - y for x, y in zip(e, lead))] = v * inv_c
        trunc = tuple(t - m for t, m in zip(a.trunc, lead))
        s = TruncatedSeries(a.vars, s_terms, trunc, None, _trusted=True)
        if not s_terms or _nilpotent_certificate(s):
            break
    else:
        raise NonInvertible("no leading monomial with a nilpotent remainder")
    inv = _geometric_inverse(s) if s_terms else TruncatedSeries.const(1, a.vars, trunc)
    inv = TruncatedSeries(inv.vars, inv.terms,
                          tuple(min(x, y) for x, y in zip(inv.trunc, trunc)), inv.low, _trusted=True)
    neg_lead = tuple(-m for m in lead)
    terms = {_tadd(e, neg_lead): v * inv_c for e, v in inv.terms.items()}
    tr = tuple(t - m for t, m in zip(inv.trunc, lead))
    low = tuple(l - m for l, m in zip(inv.low, lead))
    return TruncatedSeries(a.vars, terms, tr, low)


def derive(a, var):
    if var not in a.vars:
        return TruncatedSeries(a.vars, {}, a.trunc, None)
    i = a.vars.index(var)
    terms = {}
    for e, c in a.terms.items():
        k = e[i]
        if k:
            ne = e[:i] + (k - 1,) + e[i + 1:]
            terms[ne] = c * k
    trunc = a.trunc[:i] + (a.trunc[i] - 1,) + a.trunc[i + 1:]
    li = a.low[i]
    nl = li - 1 if li != 0 else 0
    if li == INF:
        nl = INF
    low = a.low[:i] + (nl,) + a.low[i + 1:]
    return TruncatedSeries(a.vars, terms, trunc, low, _trusted=True)


def integrate_primitive(a, var):
    """Primitive in ``var`` with zero constant of integration."""
    if var not in a.vars:
        a = a.with_vars(a.vars + (var,))
    i = a.vars.index(var)
    if a.trunc[i] < -1 and a.low[i] <= -1:
        raise ResiduePresent("residue coefficient lies outside the truncation window")
    terms = {}
    for e, c in a.terms.items():
        k = e[i]
        if k == -1:
            raise ResiduePresent(f"coefficient of {var}^-1 is nonzero")
        terms[e[:i] + (k + 1,) + e[i + 1:]] = c / (k + 1)
    trunc = a.trunc[:i] + (a.trunc[i] + 1,) + a.trunc[i + 1:]
    low = a.low[:i] + (a.low[i] + 1,) + a.low[i + 1:]
    return TruncatedSeries(a.vars, terms, trunc, low, _trusted=True)


def exp_series(a):
    """exp(a) for a series without constant term and of positive order."""
    if a.constant_term() != 0:
        raise ConstantTermPresent("exp needs a vanishing constant term")
    if not _nilpotent_certificate(a):
        raise ConstantTermPresent("exp argument has no positive order in a truncated variable")
    win = _window(a)
    result = TruncatedSeries.const(1, a.vars)
    power = TruncatedSeries.const(1, a.vars)
    k = 0
    while True:
        k += 1
        power = (power * a).truncate(win).scale(mpq(1, k))
        result = result + power
        if not power.terms:
            break
    return result


def log_series(a):
    if a.constant_term() != 1:
        raise NotUnitLeading("log needs constant term 1")
    s = a - 1
    if not _nilpotent_certificate(s):
        raise NotUnitLeading("log argument is not 1 + (positive order)")
    win = _window(s)
    result = TruncatedSeries.zero(a.vars)
    power = TruncatedSeries.const(1, a.vars)
    k = 0
    while True:
        k += 1
        power = (power * s).truncate(win)
        result = result + power.scale(mpq((-1) ** (k + 1), k))
        if not power.terms:
            break
    return result


def coefficient(a, var, k):
    """Coefficient of var^k as a series in the remaining variables."""
    if var not in a.vars:
        if k == 0:
            return a
        return TruncatedSeries.zero(a.vars, a.trunc)
    i = a.vars.index(var)
    if k > a.trunc[i]:
        raise OutOfTruncationWindow(f"{var}^{k} beyond truncation {a.trunc[i]}")
    terms = {e[:i] + e[i + 1:]: c for e, c in a.terms.items() if e[i] == k}
    vs = a.vars[:i] + a.vars[i + 1:]
    return TruncatedSeries(vs, terms, a.trunc[:i] + a.trunc[i + 1:],
                           a.low[:i] + a.low[i + 1:], _trusted=True)


def restrict(a, assignments):
    """Merge variables (``{'z2': 'z1'}``) or evaluate them at rationals."""
    out = a
    for src, dst in assignments.items():
        if src not in out.vars:
            continue
        i = out.vars.index(src)
        if isinstance(dst, str):
            if dst == src:
                continue
            if dst not in out.vars:
                out = out.rename({src: dst})
                continue
            j = out.vars.index(dst)
            terms = {}
            for e, c in out.terms.items():
                ne = list(e)
                ne[j] += ne[i]
                ne[i] = 0
                ne = tuple(ne)
                terms[ne] = terms.get(ne, _ZERO) + c
            trunc = list(out.trunc)
            low = list(out.low)
            trunc[j] = min(out.trunc[j] + out.low[i], out.trunc[i] + out.low[j])
            low[j] = out.low[j] + out.low[i]
            trunc[i] = INF
            low[i] = 0
            merged = TruncatedSeries(out.vars, terms, tuple(trunc), tuple(low))
            out = merged.drop_var(src) if src in merged.vars else merged
        else:
            val = Q(dst)
            if out.trunc[i] != INF:
                raise NonConvergentComposition(f"cannot evaluate truncated variable {src!r}")
            terms = {}
            for e, c in out.terms.items():
                ne = e[:i] + (0,) + e[i + 1:]
                k = e[i]
                if k < 0 and val == 0:
                    raise ZeroDivisionError(f"negative power of {src!r} at 0")
                terms[ne] = terms.get(ne, _ZERO) + c * val ** k
            low = out.low[:i] + (0,) + out.low[i + 1:]
            out = TruncatedSeries(out.vars, terms, out.trunc, low).drop_var(src)
    return out


def substitute(a, var, b, trunc=None):
    """Compose: replace ``var`` in ``a`` by the series ``b``."""
    if var not in a.vars:
        return a
    i = a.vars.index(var)
    if not isinstance(b, TruncatedSeries):
        b = TruncatedSeries.const(b)
    exps = sorted({e[i] for e in a.terms})
    t_var = a.trunc[i]
    rest_vars = a.vars[:i] + a.vars[i + 1:]
    vs = list(rest_vars)
    for v in b.vars:
        if v not in vs:
            vs.append(v)
    vs = tuple(vs)
    bb = b.with_vars(vs)
    result = TruncatedSeries.zero(vs)
    if t_var != INF:
        # unknown tail sum_{k > T} a_k b^k must sit outside the window
        pos = [j for j in range(len(vs)) if bb.low[j] > 0 and bb.trunc[j] != INF]
        if not pos:
            raise NonConvergentComposition("substituted series has no positive order")
        coef_low = dict(zip(rest_vars, a.low[:i] + a.low[i + 1:]))
        bound = {}
        for j in pos:
            v = vs[j]
            bound[v] = coef_low.get(v, 0) + (t_var + 1) * bb.low[j] - 1
        result = TruncatedSeries(vs, {}, tuple(bound.get(v, INF) for v in vs), None)
    if not exps:
        out = result if t_var != INF else TruncatedSeries.zero(vs, tuple(
            a.trunc[a.vars.index(v)] if v in a.vars and v != var else INF for v in vs))
        return out if trunc is None else out.truncate(trunc)
    powers = {}
    lo, hi = exps[0], exps[-1]
    if lo < 0:
        binv = invert(bb)
        p = TruncatedSeries.const(1, vs)
        for k in range(-1, lo - 1, -1):
            p = p * binv
            powers[k] = p
    p = TruncatedSeries.const(1, vs)
    powers[0] = p
    for k in range(1, hi + 1):
        p = p * bb
        if trunc is not None:
            p = p.truncate(trunc)
        powers[k] = p
    for k in exps:
        ck = coefficient(a, var, k).with_vars(vs)
        result = result + ck * powers[k]
    if t_var == INF:
        pass
    if trunc is not None:
        result = result.truncate(trunc)
    return result


def sfunction_coefficients(max_degree):
    """Coefficients of S(t) = (e^{t/2} - e^{-t/2}) / t up to t^max_degree."""
    coeffs = []
    fact = mpz(1)
    # coefficient of t^k in e^{t/2} - e^{-t/2} is 2*(1/2)^k/k! for odd k
    for k in range(max_degree + 2):
        if k:
            fact *= k
        if k >= 1:
            val = mpq(1 - (-1) ** k, 2 ** k * fact)
            coeffs.append(val)
    return coeffs[: max_degree + 1]


def sfunction_series(argument, order=None):
    """S(argument) where ``argument`` has positive order."""
    if not isinstance(argument, TruncatedSeries):
        raise TypeError("argument must be a TruncatedSeries")
    if argument.constant_term() != 0 or (argument.terms and not _nilpotent_certificate(argument)):
        raise ConstantTermPresent("S needs an argument of positive order")
    result = TruncatedSeries.const(1, argument.vars)
    win = _window(argument)
    if order is not None:
        win.update(order)
    sq = (argument * argument).truncate(win)
    power = TruncatedSeries.const(1, argument.vars)
    m = 0
    fact = mpz(1)
    while True:
        m += 1
        fact *= (2 * m) * (2 * m + 1)
        power = (power * sq).truncate(win)
        result = result + power.scale(mpq(1, 4 ** m * fact))
        if not power.terms:
            break
    if order is not None:
        result = result.truncate(order)
    return result
