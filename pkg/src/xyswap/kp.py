"""KP integrability of systems of differentials.

Everything here works with exact Laurent polynomials when the expansion
point is ``z = 0`` and with truncated series in ``t`` when it is
``z = c + t`` for a nonzero rational ``c``.

Conventions:

* the potential is ``F = sum hbar^(2g-2+n)/n! sum f p_k1 ... p_kn`` with
  ``omega^(g)_n / prod dz = sum f prod(k_i z_i^(k_i - 1))``;
* the kernel is ``K(z1, z2) = E(z1, z2) / (z1 - z2)``, and only ``E`` is
  stored;
* Schur coefficients ``c_lambda`` are read off with the Hall inner product
  from ``exp(F)``, or as minors of the frame matrix.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

from .curve import (EPS, Z, NotRegularPoint, check_regular_point,
                    divide_by_difference, pullback_kernel_defect, shift, zvars)
from .series import (INF, Q, ResiduePresent, TruncatedSeries, coefficient,
                     derive, exp_series, integrate_primitive, restrict)

H = "h"


class KPError(ArithmeticError):
    pass


class NotStandardKernel(KPError):
    pass


class NormalizationFailure(KPError):
    pass


class ObstructionFound(KPError):
    """The (0,2) defect has a component outside the solvable direction."""

    def __init__(self, degree, report):
        super().__init__(f"semi-classical obstruction at degree {degree}: {report}")
        self.degree = degree
        self.report = report


# ------------------------------------------------------------------ helpers

def _mulx(a, b):
    if a.vars != b.vars:
        allv = tuple(dict.fromkeys(a.vars + b.vars))
        a, b = a.with_vars(allv), b.with_vars(allv)
    return a * b


def _addx(a, b):
    if a is None:
        return b
    if b is None:
        return a
    if a.vars != b.vars:
        allv = tuple(dict.fromkeys(a.vars + b.vars))
        a, b = a.with_vars(allv), b.with_vars(allv)
    return a + b


def _hpow(k, order):
    return TruncatedSeries((H,), {(k,): 1}, (order,))


def _strip_eps(s):
    if EPS in s.vars:
        i = s.index(EPS)
        if any(e[i] for e in s.terms):
            raise KPError("deformed entries must be specialised before KP checks")
        return s.drop_var(EPS)
    return s


def _local_names(point, n, prefix=None):
    if prefix is None:
        prefix = "z" if Q(point) == 0 else "t"
    return tuple(f"{prefix}{i + 1}" for i in range(n))


def local_entry(entry, n, point=0, trunc=8, names=None):
    """An entry ``omega/prod dz`` in the local variables at ``z_i = point + t_i``."""
    s = _strip_eps(entry)
    names = names or _local_names(point, n)
    c = Q(point)
    if c == 0:
        return s.rename(dict(zip(zvars(n), names)))
    for v, t in zip(zvars(n), names):
        if v in s.vars:
            s = shift(s, v, c, t, trunc)
        else:
            s = s.with_vars(s.vars + (t,))
    return s


def iterated_integral(p, names, ends=("z1", "z2")):
    """``int_{b}^{a} ... int_{b}^{a} p`` over every variable of ``names``.

    ``p`` must be symmetric in ``names``; the result is a series in ``ends``.
    """
    a, b = ends
    prim = p
    for v in names:
        prim = integrate_primitive(prim, v)
    n = len(names)
    total = None
    for k in range(n + 1):
        assign = {v: (a if i < k else b) for i, v in enumerate(names)}
        val = restrict(prim, assign)
        for e in ends:
            if e not in val.vars:
                val = val.with_vars(val.vars + (e,))
        val = val.scale(math.comb(n, k) * (-1) ** (n - k))
        total = _addx(total, val)
    return total


# ---------------------------------------------------------------- potential

@dataclass
class Potential:
    """``F`` as a series in ``p1 .. pD`` and ``h`` (degree in p weighted by index)."""
    series: TruncatedSeries
    degree: int
    order: int
    point: object = 0

    def coefficient(self, ks, g=None):
        """f_{k1..kn} (summed over genera unless ``g`` is given), as a series in h."""
        n = len(ks)
        exps = {}
        for k in ks:
            exps[f"p{k}"] = exps.get(f"p{k}", 0) + 1
        s = self.series
        for v in s.vars:
            if v == H:
                continue
            s = coefficient(s, v, exps.get(v, 0))
        mult = math.factorial(n)
        for m in exps.values():
            mult //= math.factorial(m)
        s = s.scale(Q(math.factorial(n), mult))
        if g is not None:
            return coefficient(s, H, 2 * g - 2 + n)
        return s

    def to_json(self):
        return {"degree": self.degree, "order": self.order, "point": str(self.point),
                "F": self.series.to_json()}


def _pvars(degree):
    return tuple(f"p{k}" for k in range(1, degree + 1))


def potential_from_system(system, order=None, degree=4, point=0, trunc=None):
    """The potential at ``z = point`` in the coordinate ``z - point``."""
    order = system.hbar_order if order is None else order
    c = Q(point)
    if c == 0:
        check_regular_point(system, 0)
    trunc = degree if trunc is None else trunc
    pv = _pvars(degree)
    allv = pv + (H,)
    trunc_v = (INF,) * degree + (order,)
    total = TruncatedSeries.zero(allv, trunc_v)
    items = [((0, 2), system.get(0, 2))] + [((g, n), system.get(g, n)) for (g, n) in system.keys()
                                              if (g, n) != (0, 2)]
    for (g, n), entry in items:
        k = 2 * g - 2 + n
        if k > order or entry.is_zero():
            continue
        loc = local_entry(entry, n, c, trunc + 1, names=_local_names(c, n, "t"))
        if c == 0:
            for e0 in loc.terms:
                if any(x < 0 for x in e0):
                    raise NotRegularPoint(f"entry ({g},{n}) has a pole at the expansion point")
        terms = {}
        idx = [loc.index(v) for v in _local_names(c, n, "t")]
        for e, coef in loc.terms.items():
            ks = [e[i] + 1 for i in idx]
            if sum(ks) > degree:
                continue
            val = coef / Q(math.prod(ks))
            key = [0] * degree
            for kk in ks:
                key[kk - 1] += 1
            key = tuple(key) + (k,)
            terms[key] = terms.get(key, 0) + val / math.factorial(n)
        total = total + TruncatedSeries(allv, terms, trunc_v)
    return Potential(total, degree, order, point)


# ------------------------------------------------------------------ kernel

@dataclass
class BAKernel:
    """``K(a, b) = E(a, b)/(a - b)`` with ``E`` a series in ``a``, ``b`` and ``h``.

    ``normalization`` records that K is a half-density in the coordinate
    ``z - point`` (i.e. K sqrt(dz1 dz2)).
    """
    E: TruncatedSeries
    order: int
    point: object = 0
    names: tuple = ("z1", "z2")
    normalization: str = "sqrt(dz1 dz2)"

    def regular_part(self):
        """``K - 1/(a - b)`` as a series, exact only at z = 0 for polynomial E."""
        a, b = self.names
        return divide_by_difference(self.E - TruncatedSeries.const(1, self.E.vars), a, b)

    def swapped(self):
        a, b = self.names
        return self.E.rename({a: "_x", b: a}).rename({"_x": b})

    def to_json(self):
        return {"order": self.order, "point": str(self.point), "vars": list(self.names),
                "normalization": self.normalization, "E": self.E.to_json()}


def kernel_exponent(system, order=None, point=0, trunc=8):
    """``sum hbar^(2g-2+n)/n! int..int omega^(g)_n + (1/2) int int R``."""
    order = system.hbar_order if order is None else order
    c = Q(point)
    ends = _local_names(c, 2)
    total = TruncatedSeries.zero(ends + (H,), (INF, INF, order) if c == 0 else (trunc, trunc, order))
    for (g, n) in system.keys():
        k = 2 * g - 2 + n
        if k > order:
            continue
        names = _local_names(c, n, "a")
        loc = local_entry(system.get(g, n), n, c, trunc, names)
        try:
            val = iterated_integral(loc, names, ends)
        except ResiduePresent as exc:
            if (g, n) == (0, 2):
                raise NotStandardKernel(str(exc)) from exc
            raise
        if (g, n) == (0, 2):
            val = val.scale(Q(1, 2))
        else:
            val = val.scale(Q(1, math.factorial(n)))
        total = _addx(total, _mulx(val, _hpow(k, order)))
    return total


def build_kernel(system, order=None, point=0, trunc=8):
    """The Baker-Akhiezer kernel of ``system`` at ``z = point``.

    At ``point == 0`` the result is exact (Laurent entries allowed as long
    as no residues occur).  At other points the kernel is a series in
    ``t1, t2`` truncated at ``trunc``.  A non-standard (0,2) part at z = 0
    needs a finite ``trunc`` for the exponential to be a finite object.
    """
    order = system.hbar_order if order is None else order
    c = Q(point)
    A = kernel_exponent(system, order, c, trunc)
    names = _local_names(c, 2)
    if c == 0 and not system.get(0, 2).is_zero():
        A = A.truncate({names[0]: trunc, names[1]: trunc})
    E = exp_series(A) if not A.is_zero() else TruncatedSeries.const(1, A.vars).truncate({H: order})
    return BAKernel(E, order, c, names)


# ------------------------------------------------------------ determinantal

def _vandermonde_sq(names):
    out = TruncatedSeries.const(1, names)
    for i, j in itertools.combinations(range(len(names)), 2):
        d = TruncatedSeries(names, {tuple(1 if m == i else 0 for m in range(len(names))): 1,
                                    tuple(1 if m == j else 0 for m in range(len(names))): -1})
        out = out * d * d
    return out


def _cycles(n):
    for perm in itertools.permutations(range(1, n)):
        cyc = (0,) + perm
        sigma = [0] * n
        for a, b in zip(cyc, cyc[1:] + cyc[:1]):
            sigma[a] = b
        yield tuple(sigma)


def _kernel_in(kernel, a, b):
    x, y = kernel.names
    return kernel.E.rename({x: "_p", y: "_q"}).rename({"_p": a, "_q": b})


def omega_n_series(system, n, order, point=0, trunc=8, names=None):
    """``sum_g hbar^(2g-2+n) omega^(g)_n / prod dz`` in local variables (no (0,2) pole)."""
    c = Q(point)
    names = names or _local_names(c, n)
    total = None
    for g in range(0, order + 1):
        k = 2 * g - 2 + n
        if k < 0 or k > order:
            continue
        if (g, n) == (0, 1):
            continue
        entry = system.get(g, n)
        if entry.is_zero():
            continue
        loc = local_entry(entry, n, c, trunc, names)
        total = _addx(total, _mulx(loc, _hpow(k, order)))
    if total is None:
        total = TruncatedSeries.zero(names + (H,))
    return total


def determinantal_eval(kernel, n):
    """The right-hand side of the determinantal formula for ``omega_n``.

    Returns ``(candidate, multiplier)``: for n = 1 the diagonal limit, for
    n = 2 the series ``E12 E21 - 1`` to be compared with
    ``(z1-z2)^2 omega_2^reg``, and for n >= 3 the cyclic sum multiplied by
    the squared Vandermonde ``multiplier``.
    """
    a, b = kernel.names
    if n == 1:
        d = derive(kernel.E, a)
        return restrict(d, {b: a}), None
    names = tuple(f"{a[0]}{i + 1}" for i in range(n))
    if n == 2:
        e12 = _kernel_in(kernel, names[0], names[1])
        e21 = _kernel_in(kernel, names[1], names[0])
        prod = _mulx(e12, e21)
        return prod - TruncatedSeries.const(1, prod.vars), None
    V = _vandermonde_sq(names)
    total = None
    for sigma in _cycles(n):
        poly = V
        for i in range(n):
            poly = divide_by_difference(poly, names[i], names[sigma[i]])
        term = poly
        for i in range(n):
            term = _mulx(term, _kernel_in(kernel, names[i], names[sigma[i]]))
        total = _addx(total, term)
    return total.scale((-1) ** (n - 1)), V


@dataclass
class KPReport:
    status: str
    per_type: dict = field(default_factory=dict)
    first_mismatch: object = None
    point: object = 0
    order: int = 0

    @property
    def passed(self):
        return self.status == "PASS"

    def to_json(self):
        return {"status": self.status, "point": str(self.point), "order": self.order,
                "per_type": {f"{g},{n}": v for (g, n), v in sorted(self.per_type.items())},
                "first_mismatch": self.first_mismatch}


def _h_parts(s, order):
    out = {}
    for k in range(order + 1):
        out[k] = coefficient(s, H, k) if H in s.vars else (s if k == 0 else s.truncate({}) * 0)
    return out


def kp_check(system, kernel=None, max_n=3, order=None, point=0, trunc=8):
    """Compare the determinantal formulas with the system for n <= max_n."""
    order = system.hbar_order if order is None else order
    c = Q(point)
    if kernel is None:
        kernel = build_kernel(system, order, c, trunc)
    report = KPReport("PASS", point=c, order=order)
    for n in range(1, max_n + 1):
        cand, V = determinantal_eval(kernel, n)
        names = tuple(f"{kernel.names[0][0]}{i + 1}" for i in range(n))
        omega = omega_n_series(system, n, order, c, trunc, names)
        if n == 1:
            diff = _addx(cand, omega.scale(-1))
        elif n == 2:
            d = TruncatedSeries(names, {(1, 0): 1, (0, 1): -1})
            reg = _addx(omega, local_entry(system.get(0, 2), 2, c, trunc, names))
            diff = _addx(cand, _mulx(_mulx(d, d), reg).scale(-1))
        else:
            diff = _addx(cand, _mulx(V, omega).scale(-1))
        for k in range(order + 1):
            part = coefficient(diff, H, k) if H in diff.vars else (diff if k == 0 else None)
            if part is None:
                continue
            if (k - n + 2) % 2:
                if not part.is_zero():
                    report.status = "FAIL"
                    report.first_mismatch = report.first_mismatch or {"n": n, "hbar": k}
                continue
            g = (k - n + 2) // 2
            if g < 0:
                if not part.is_zero():
                    report.status = "FAIL"
                    report.first_mismatch = report.first_mismatch or {"n": n, "hbar": k}
                continue
            ok = part.is_zero()
            report.per_type[(g, n)] = "match" if ok else "mismatch"
            if not ok and report.first_mismatch is None:
                report.status = "FAIL"
                report.first_mismatch = {"g": g, "n": n, "hbar": k}
    return report


# ------------------------------------------------------------------ frames

def _zero_h(order):
    return TruncatedSeries.zero((H,), (order,))


def _coef_z(s, k, order, var=Z):
    c = coefficient(s, var, k) if var in s.vars else (s if k == 0 else s.truncate({}).scale(0))
    c = c.with_vars(tuple(v for v in c.vars if v == H) + ((H,) if H not in c.vars else ()))
    return c.with_vars((H,)).truncate({H: order})


@dataclass
class GrassmannianFrame:
    """Vectors ``Phi_i`` (series in z, h) and optionally the duals ``Phi*_{1-i}``."""
    vectors: list
    order: int
    duals: list | None = None

    def matrix_entry(self, a, j):
        return _coef_z(self.vectors[a - 1], j, self.order)

    def check_normalized(self):
        for i, v in enumerate(self.vectors, start=1):
            iz = v.index(Z)
            low = min((e[iz] for e in v.terms), default=0)
            if low < -i or _coef_z(v, -i, self.order) != TruncatedSeries.const(1, (H,)).truncate({H: self.order}):
                raise NormalizationFailure(f"Phi_{i} is not z^-{i}(1 + O(z))")
        return True

    def to_json(self):
        out = {"order": self.order,
               "vectors": {str(i): v.to_json() for i, v in enumerate(self.vectors, start=1)}}
        if self.duals is not None:
            out["duals"] = {str(1 - i): v.to_json() for i, v in enumerate(self.duals, start=1)}
        return out


def frame_from_kernel(kernel, count, order=None, dual_basis=None):
    """Expand the kernel in ``z2`` (``|z2| < |z1|``) against a dual basis.

    Without ``dual_basis`` the monomials ``z2^(i-1)`` are used.  Otherwise
    ``dual_basis[i-1]`` is ``Phi*_{1-i}`` (series in z, h), which must be
    triangular: ``z^(i-1)`` plus higher powers of ``z``.
    """
    if Q(kernel.point) != 0:
        raise KPError("frames are read off at z = 0")
    order = kernel.order if order is None else order
    a, b = kernel.names
    E = kernel.E.truncate({H: order})
    mono = []
    for i in range(1, count + 1):
        phi = None
        for m in range(i):
            part = coefficient(E, b, i - 1 - m) if b in E.vars else (E if i - 1 - m == 0 else None)
            if part is None or part.is_zero():
                continue
            part = _mulx(part, TruncatedSeries((a,), {(-m - 1,): 1}))
            phi = _addx(phi, part)
        phi = phi.rename({a: Z}) if phi is not None else TruncatedSeries.zero((Z, H))
        mono.append(phi.with_vars((Z, H)) if set(phi.vars) <= {Z, H} else phi)
    if dual_basis is None:
        duals = [TruncatedSeries((Z, H), {(i, 0): 1}, (INF, order)) for i in range(count)]
        return GrassmannianFrame(mono, order, duals)
    vecs = []
    for j in range(1, count + 1):
        phi = mono[j - 1]
        for i in range(1, j):
            T = _coef_z(dual_basis[i - 1], j - 1, order)
            if j - 1 < i - 1 and not T.is_zero():
                raise KPError("dual basis is not triangular")
            if not T.is_zero():
                phi = _addx(phi, _mulx(vecs[i - 1], T).scale(-1)).truncate({H: order})
        diag = _coef_z(dual_basis[j - 1], j - 1, order)
        if diag != TruncatedSeries.const(1, (H,)).truncate({H: order}):
            raise NormalizationFailure(f"dual vector {1 - j} is not z^{j - 1}(1 + O(z))")
        for low in range(0, j - 1):
            if not _coef_z(dual_basis[j - 1], low, order).is_zero():
                raise KPError("dual basis is not triangular")
        vecs.append(phi)
    return GrassmannianFrame(vecs, order, list(dual_basis[:count]))


def pairing_matrix(frame, size):
    """``res_{z=0} Phi_i Phi*_{1-j} dz`` for i, j <= size (should be the identity)."""
    out = []
    for i in range(1, size + 1):
        row = []
        for j in range(1, size + 1):
            prod = _mulx(frame.vectors[i - 1], frame.duals[j - 1]).truncate({H: frame.order})
            row.append(_coef_z(prod, -1, frame.order))
        out.append(row)
    return out


def same_plane(frame_a, frame_b, count):
    """True when every ``Phi_i`` of ``frame_a`` is a combination of ``frame_b``'s (i <= count).

    Uses the triangular shape: subtract multiples of ``frame_b`` vectors to
    clear the negative powers of z, then require the remainder to vanish.
    """
    order = min(frame_a.order, frame_b.order)
    for i in range(1, count + 1):
        rem = frame_a.vectors[i - 1].truncate({H: order})
        for j in range(i, 0, -1):
            cj = _coef_z(rem, -j, order)
            if not cj.is_zero():
                rem = _addx(rem, _mulx(frame_b.vectors[j - 1], cj).scale(-1)).truncate({H: order})
        iz = rem.index(Z)
        neg = any(e[iz] < 0 for e in rem.terms)
        if neg:
            return False
        # the non-negative part must vanish for an element of the plane
        if not rem.is_zero():
            return False
    return True


# --------------------------------------------------------- Schur machinery

def partitions(n, max_part=None):
    """Partitions of n, largest parts first."""
    max_part = n if max_part is None else max_part
    if n == 0:
        yield ()
        return
    for k in range(min(n, max_part), 0, -1):
        for rest in partitions(n - k, k):
            yield (k,) + rest


def partitions_upto(d):
    for n in range(d + 1):
        yield from partitions(n)


def z_lambda(mu):
    out = 1
    for k in set(mu):
        m = mu.count(k)
        out *= k ** m * math.factorial(m)
    return out


def _det(mat):
    n = len(mat)
    if n == 0:
        return None
    if n == 1:
        return mat[0][0]
    total = None
    for j in range(n):
        entry = mat[0][j]
        if entry is None or (hasattr(entry, "is_zero") and entry.is_zero()):
            continue
        minor = [row[:j] + row[j + 1:] for row in mat[1:]]
        sub = _det(minor)
        if sub is None:
            continue
        term = _mulx(entry, sub)
        if j % 2:
            term = term.scale(-1)
        total = _addx(total, term)
    return total


def complete_homogeneous(degree):
    """``h_0 .. h_degree`` as polynomials in p1..p_degree."""
    pv = _pvars(max(degree, 1))
    t = "_t"
    arg = TruncatedSeries(pv + (t,), {tuple(1 if i == k - 1 else 0 for i in range(len(pv))) + (k,): Q(1, k)
                                      for k in range(1, degree + 1)}, (INF,) * len(pv) + (degree,))
    gen = exp_series(arg) if degree else TruncatedSeries.const(1, arg.vars)
    return [coefficient(gen, t, k) for k in range(degree + 1)]


_SCHUR_CACHE = {}


def schur_polynomial(lam, degree=None):
    """Jacobi-Trudi ``s_lambda = det h_{lambda_i - i + j}`` in power sums."""
    degree = max(sum(lam), 1) if degree is None else degree
    key = (tuple(lam), degree)
    if key in _SCHUR_CACHE:
        return _SCHUR_CACHE[key]
    hs = complete_homogeneous(degree)
    pv = _pvars(degree)
    l = len(lam)
    if l == 0:
        out = TruncatedSeries.const(1, pv)
    else:
        zero = TruncatedSeries.zero(pv)
        mat = [[(hs[lam[i] - i + j].with_vars(pv) if 0 <= lam[i] - i + j <= degree else zero)
                for j in range(l)] for i in range(l)]
        out = _det(mat)
        out = out.with_vars(pv) if out is not None else TruncatedSeries.zero(pv)
    _SCHUR_CACHE[key] = out
    return out


@dataclass
class SchurExpansion:
    """Partition -> coefficient (a series in h)."""
    coeffs: dict
    degree: int
    order: int

    def get(self, lam):
        return self.coeffs.get(tuple(lam), _zero_h(self.order))

    def equals(self, other):
        keys = set(self.coeffs) | set(other.coeffs)
        return all(self.get(k) == other.get(k) for k in keys)

    def to_json(self):
        out = {}
        for lam, c in sorted(self.coeffs.items()):
            out[",".join(map(str, lam)) or "0"] = {
                str(e[0]): [int(v.numerator), int(v.denominator)] for e, v in sorted(c.terms.items())}
        return {"degree": self.degree, "order": self.order, "coefficients": out}


def _as_h(s, order):
    if H not in s.vars:
        s = s.with_vars(s.vars + (H,))
    rest = [v for v in s.vars if v != H]
    for v in rest:
        s = coefficient(s, v, 0)
    return s.with_vars((H,)).truncate({H: order})


def tau_series(potential):
    """``exp(F)`` truncated at weighted p-degree ``potential.degree``."""
    F = potential.series
    q = "_q"
    pv = _pvars(potential.degree)
    terms = {}
    for e, c in F.terms.items():
        w = sum((i + 1) * e[F.index(v)] for i, v in enumerate(pv))
        terms[e + (w,)] = c
    graded = TruncatedSeries(F.vars + (q,), terms, F.trunc + (potential.degree,))
    if graded.is_zero():
        tau = TruncatedSeries.const(1, graded.vars)
    else:
        tau = exp_series(graded)
    tau = tau.truncate({H: potential.order})
    return tau, q


def tau_schur_coefficients(potential):
    """Schur coefficients of ``exp(F)`` via the Hall inner product."""
    tau, q = tau_series(potential)
    pv = _pvars(potential.degree)
    out = {}
    for lam in partitions_upto(potential.degree):
        s_lam = schur_polynomial(lam, potential.degree)
        total = _zero_h(potential.order)
        d = sum(lam)
        part_tau = coefficient(tau, q, d)
        for mu in partitions(d):
            exps = [0] * len(pv)
            for k in mu:
                exps[k - 1] += 1
            coef_s = s_lam.terms.get(tuple(exps), 0) if pv else (1 if not mu else 0)
            if not coef_s:
                continue
            t = part_tau
            for v, m in zip(pv, exps):
                t = coefficient(t, v, m)
            t = _as_h(t, potential.order)
            total = total + t.scale(coef_s * z_lambda(mu))
        if not total.is_zero():
            out[lam] = total
    return SchurExpansion(out, potential.degree, potential.order)


def tau_from_frame(frame, max_degree):
    """``c_lambda = det [z^(lambda_b - b)] Phi_a`` over ``a, b <= l(lambda)``."""
    out = {}
    one = TruncatedSeries.const(1, (H,)).truncate({H: frame.order})
    for lam in partitions_upto(max_degree):
        l = len(lam)
        if l == 0:
            out[lam] = one
            continue
        if l > len(frame.vectors):
            raise KPError("frame has too few vectors for this degree")
        mat = [[frame.matrix_entry(a, lam[b - 1] - b) for b in range(1, l + 1)] for a in range(1, l + 1)]
        c = _det(mat)
        if c is not None and not c.is_zero():
            out[lam] = c.truncate({H: frame.order})
    return SchurExpansion(out, max_degree, frame.order)


def _maya(lam, m):
    lam = list(lam) + [0] * (m - len(lam))
    return tuple(lam[j] - (j + 1) + m for j in range(m))


def _from_maya(s, m):
    """Partition from a strictly decreasing index tuple, or None."""
    lam = tuple(s[j] + (j + 1) - m for j in range(m))
    if any(x < 0 for x in lam) or any(lam[i] < lam[i + 1] for i in range(m - 1)):
        return None
    return tuple(x for x in lam if x)


def _plucker_coordinate(schur, indices, m):
    """Antisymmetric Pluecker coordinate for an index tuple (any order)."""
    if len(set(indices)) < len(indices):
        return None, 0
    order = sorted(range(len(indices)), key=lambda i: -indices[i])
    sign = 1
    perm = list(order)
    seen = [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    s = tuple(indices[i] for i in order)
    lam = _from_maya(s, m)
    if lam is None:
        return None, 0
    return lam, sign


@dataclass
class PluckerReport:
    status: str
    relations: int
    failures: list

    @property
    def passed(self):
        return self.status == "PASS"


def plucker_check(schur, max_degree=None):
    """All three-or-more-term Pluecker relations among c_lambda with total degree <= max_degree."""
    D = schur.degree if max_degree is None else max_degree
    m = max(D, 1)
    top = m + D
    failures = []
    count = 0
    for A in itertools.combinations(range(top), m - 1):
        for B in itertools.combinations(range(top), m + 1):
            # total degree = sum of the two partitions' sizes, constant along the relation
            tot = sum(A) + sum(B) - 2 * sum(range(m))
            if tot > D:
                continue
            rel = None
            nonzero_terms = 0
            for k, b in enumerate(B):
                lam1, s1 = _plucker_coordinate(schur, A + (b,), m)
                rest = B[:k] + B[k + 1:]
                lam2, s2 = _plucker_coordinate(schur, rest, m)
                if lam1 is None or lam2 is None:
                    continue
                if sum(lam1) > D or sum(lam2) > D:
                    continue
                nonzero_terms += 1
                term = _mulx(schur.get(lam1), schur.get(lam2)).truncate({H: schur.order})
                term = term.scale(s1 * s2 * (-1) ** k)
                rel = _addx(rel, term)
            if nonzero_terms < 2 or rel is None:
                continue
            count += 1
            if not rel.is_zero():
                failures.append({"A": list(A), "B": list(B)})
    return PluckerReport("PASS" if not failures else "FAIL", count, failures)


def content_multiplier(lam, order):
    """``prod_{(i,j) in lambda} (1 + hbar (i - j))`` with i the row index."""
    out = TruncatedSeries.const(1, (H,)).truncate({H: order})
    for i, row in enumerate(lam, start=1):
        for j in range(1, row + 1):
            out = out * TruncatedSeries((H,), {(0,): 1, (1,): i - j}, (order,))
    return out


def apply_D_operator(schur, direction="forward"):
    """Multiply ``c_lambda`` by the content product (or by its inverse series)."""
    from .series import invert
    out = {}
    for lam, c in schur.coeffs.items():
        m = content_multiplier(lam, schur.order)
        if direction == "inverse":
            m = invert(m)
        elif direction != "forward":
            raise ValueError("direction must be 'forward' or 'inverse'")
        val = _mulx(c, m).truncate({H: schur.order})
        if not val.is_zero():
            out[lam] = val
    return SchurExpansion(out, schur.degree, schur.order)


# ------------------------------------------------------ semi-classical limit

def _poly2(terms, names=("z1", "z2")):
    return TruncatedSeries(names, terms)


def ad_operator_apply(p, d, names=("z1", "z2")):
    """``A_d``: with ``h = z1 z2 p``, return d1 d2 h - (h11 - h12 - h21 + h22)/(z1-z2)^2."""
    a, b = names
    p = p.with_vars(names) if set(p.vars) <= set(names) else p
    h = _mulx(p, TruncatedSeries(names, {(1, 1): 1}))
    dd = derive(derive(h, a), b)
    h11 = restrict(h, {b: a}).with_vars((a,)).with_vars(names)
    h22 = restrict(h, {a: b}).with_vars((b,)).with_vars(names)
    h21 = h.rename({a: "_u"}).rename({b: a}).rename({"_u": b}).with_vars(names)
    num = h11 - h - h21 + h22
    q = divide_by_difference(divide_by_difference(num, a, b), a, b)
    return dd - q


def ad_eigenvector(d, i, names=("z1", "z2")):
    """The polynomial ``v_{d,i}`` (degree d - 2); identically zero when ``d + 1 - 2i <= 2``."""
    if i == 0:
        return _poly2({(k, d - 2 - k): 1 for k in range(d - 1)}, names)
    j = d + 1 - 2 * i
    terms = {}
    for k in range(j):
        terms[(k, j - 1 - k)] = terms.get((k, j - 1 - k), 0) + 1
    terms[(j - 1, 0)] = terms.get((j - 1, 0), 0) - Q(j, 2)
    terms[(0, j - 1)] = terms.get((0, j - 1), 0) - Q(j, 2)
    base = _poly2({k: v for k, v in terms.items() if v}, names)
    return _mulx(base, _poly2({(i - 1, i - 1): 1}, names)).with_vars(names)


@dataclass
class SpectrumReport:
    status: str
    entries: list

    @property
    def passed(self):
        return self.status == "PASS"


def ad_spectrum_check(d_max):
    """``A_d v_{d,i} = i(d-i) v_{d,i}`` for 2 <= d <= d_max and 0 <= i <= floor(d/2)."""
    entries = []
    ok = True
    for d in range(2, d_max + 1):
        for i in range(0, d // 2 + 1):
            v = ad_eigenvector(d, i)
            lhs = ad_operator_apply(v, d)
            good = lhs == v.scale(i * (d - i))
            ok = ok and good
            entries.append({"d": d, "i": i, "eigenvalue": i * (d - i), "zero_vector": v.is_zero(),
                            "holds": good})
    return SpectrumReport("PASS" if ok else "FAIL", entries)


def _homogeneous_part(s, deg, names):
    ia, ib = s.index(names[0]), s.index(names[1])
    return TruncatedSeries(names, {(e[ia], e[ib]): c for e, c in s.terms.items()
                                   if e[ia] + e[ib] == deg})


def _eigen_decomposition(p, d, names):
    """Coefficients of ``p`` (symmetric, degree d-2) in the nonzero eigenvectors v_{d,i}."""
    basis = [(i, ad_eigenvector(d, i, names)) for i in range(d // 2 + 1)]
    basis = [(i, v) for i, v in basis if not v.is_zero()]
    monos = sorted({(k, d - 2 - k) for k in range(d - 1) if k <= d - 2 - k})
    mat = [[v.terms.get(mo, 0) for _, v in basis] for mo in monos]
    rhs = [p.terms.get(mo, 0) for mo in monos]
    from .graphsum import solve_linear
    sol = solve_linear(mat, [rhs])
    return {i: sol[0][r] for r, (i, _) in enumerate(basis)}


def _double_primitive(q, names):
    return integrate_primitive(integrate_primitive(q, names[0]), names[1])


@dataclass
class NormalForm:
    coordinate: TruncatedSeries
    order: int
    residual: TruncatedSeries


def normalize_omega02(regular_part, order, var="x", names=("x1", "x2")):
    """Find ``z(x) = x + O(x^3)`` pulling the standard kernel back to the input.

    ``regular_part`` is ``omega^(0)_2/(dx1 dx2) - 1/(x1-x2)^2`` as a symmetric
    series in ``names``, known through total degree ``order - 2``.  The
    coordinate is determined through ``x^order``; the Moebius freedom is
    fixed by ``z = x + 0 x^2 + ...``.
    """
    B = regular_part.with_vars(names) if set(regular_part.vars) <= set(names) else regular_part
    w = TruncatedSeries((var,), {(1,): 1})
    for d in range(2, order):
        # current defect in degree d - 2 comes from the x^(d+1) coefficient
        pb = pullback_kernel_defect(w, var, d - 2).rename(dict(zip(("x1", "x2"), names)))
        diff = _addx(B, pb.scale(-1))
        for low in range(0, d - 2):
            if not _homogeneous_part(diff, low, names).is_zero():
                raise KPError("internal: lower-degree defect survived")
        q = _homogeneous_part(diff, d - 2, names)
        if q.is_zero():
            continue
        H2 = _double_primitive(q, names)
        p = _divide_monomial(H2, names)
        decomposition = _eigen_decomposition(p, d, names)
        if any(c for i, c in decomposition.items() if i != 0):
            raise ObstructionFound(d, {"eigen_coefficients": {str(i): str(c) for i, c in decomposition.items()},
                                       "equation_residual": {str(i): str(c * i * (d - i))
                                                             for i, c in decomposition.items()}})
        c = decomposition.get(0, 0)
        w = w + TruncatedSeries((var,), {(d + 1,): c})
    pb = pullback_kernel_defect(w, var, order - 2).rename(dict(zip(("x1", "x2"), names)))
    resid = _addx(B, pb.scale(-1))
    ia, ib = resid.index(names[0]), resid.index(names[1])
    resid = TruncatedSeries(resid.vars, {e: c for e, c in resid.terms.items()
                                         if e[ia] + e[ib] <= order - 2})
    return NormalForm(w, order, resid)


def _divide_monomial(h, names):
    """``h / (z1 z2)``; h has no terms free of z1 or z2."""
    ia, ib = h.index(names[0]), h.index(names[1])
    terms = {}
    for e, c in h.terms.items():
        if e[ia] < 1 or e[ib] < 1:
            raise KPError("double primitive is not divisible by z1 z2")
        ne = list(e)
        ne[ia] -= 1
        ne[ib] -= 1
        terms[tuple(ne)] = c
    return TruncatedSeries(h.vars, terms)


def alpha_coordinate(regular_part, order, var="x", names=("x1", "x2")):
    """Independent route: ``z = -1/int alpha`` from the one-form ``alpha = omega02(., x2=0)``.

    ``alpha/dx = 1/x^2 + B(x, 0)``; the primitive is ``-1/x + int B(x,0)``
    and the coordinate is renormalized to ``x + 0 x^2 + ...`` by a Moebius
    map.  Returns the coordinate through ``x^order``.
    """
    from .series import invert
    b0 = restrict(regular_part.with_vars(names), {names[1]: 0}).rename({names[0]: var})
    b0 = b0.truncate({var: order})
    prim = integrate_primitive(b0, var) + TruncatedSeries((var,), {(-1,): -1})
    prim = prim.truncate({var: order})
    z = invert(prim).scale(-1)
    # z = x + a x^2 + ...; compose with the Moebius map z -> z/(1 + a z)
    a = z.terms.get((2,), 0)
    if a:
        denom = TruncatedSeries.const(1, z.vars) + z.scale(a)
        z = (z * invert(denom)).truncate({var: order})
    return z.truncate({var: order})
