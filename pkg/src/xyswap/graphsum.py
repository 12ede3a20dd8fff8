"""Graph-sum transformation exchanging the roles of x and y.

Outputs are reconstructed globally: the graph sum is evaluated exactly at
random rational points (with local jets for all derivatives), and the
symmetric Laurent polynomial is recovered by interpolation in the basis of
monomial symmetric functions.  Quasi-homogeneity of the curve fixes the total
degree; the lowest exponent comes from a one-variable Laurent slice at z1 = 0.
Each reconstruction is confirmed at an extra random point.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, field
from functools import lru_cache

from .curve import (EPS, Z, DifferentialSystem, expand_entry, omega02_singular_difference, shift,
                    shifted_power, zvar, zvars)
from .series import (INF, Q, TruncatedSeries, coefficient, derive,
                     exp_series, invert, log_series, restrict, sfunction_coefficients)

H = "h"


class GraphSumError(ArithmeticError):
    pass


class DiagonalPoleUnregularized(GraphSumError):
    pass


class ReconstructionFailed(GraphSumError):
    pass


# -- graphs -------------------------------------------------------------------

@dataclass(frozen=True)
class Graph:
    """Connected hypergraph on vertices 1..n.

    ``edges`` is a sorted tuple of ``(genus, legs)`` with ``legs`` a sorted
    tuple of vertex labels (repetition allowed).
    """

    n: int
    edges: tuple

    @property
    def legs(self):
        return sum(len(l) for _, l in self.edges)

    @property
    def betti(self):
        return self.legs - self.n - len(self.edges) + 1

    @property
    def weight(self):
        return 2 * self.betti + sum(2 * g - 2 + len(l) for g, l in self.edges)

    @property
    def genus_cost(self):
        """Power of hbar^2 carried by the graph and its edge labels."""
        return self.betti + sum(g for g, _ in self.edges)

    @property
    def aut(self):
        total = 1
        counts = {}
        for e in self.edges:
            counts[e] = counts.get(e, 0) + 1
        for (g, legs), m in counts.items():
            total *= math.factorial(m)
            per = 1
            for v in set(legs):
                per *= math.factorial(legs.count(v))
            total *= per ** m
        return total

    def degree(self, v):
        return sum(l.count(v) for _, l in self.edges)


def _connected(n, edges):
    parent = list(range(n + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for _, legs in edges:
        for v in legs[1:]:
            ra, rb = find(legs[0]), find(v)
            if ra != rb:
                parent[ra] = rb
    roots = {find(v) for v in range(1, n + 1)}
    return len(roots) == 1


def _edge_types(n, max_legs, allowed):
    out = []
    for k in range(1, max_legs + 1):
        for legs in itertools.combinations_with_replacement(range(1, n + 1), k):
            for g in sorted({g for g, kk in allowed if kk == k}):
                out.append((g, legs))
    return out


def _enumerate(n, cost_of_edge, limit, allowed, max_legs):
    """Multisets of edge types with sum(cost) - offset <= limit, connected."""
    types = _edge_types(n, max_legs, allowed)
    costs = [cost_of_edge(t) for t in types]
    found = []

    def rec(start, acc, chosen):
        if _connected(n, chosen):
            found.append(tuple(chosen))
        for i in range(start, len(types)):
            c = costs[i]
            if acc + c > limit:
                continue
            chosen.append(types[i])
            rec(i, acc + c, chosen)
            chosen.pop()

    rec(0, 0, [])
    return [Graph(n, tuple(sorted(e))) for e in found]


def _default_allowed(max_genus, max_legs):
    return {(g, k) for g in range(max_genus + 1) for k in range(1, max_legs + 1)
            if (g, k) != (0, 1)}


def enumerate_graphs(n, target, allowed=None):
    """All connected graphs on n labelled vertices with weight <= target.

    The weight is ``2 betti + sum(2 g_e - 2 + |e|)``.  ``allowed`` optionally
    restricts the edge labels ``(g_e, |e|)``.
    """
    if n < 1:
        raise ValueError("n must be positive")
    max_legs = target + 2 * n
    if allowed is None:
        allowed = _default_allowed(target // 2 + 1, max_legs)
    # each edge adds 3|e| + 2g_e - 4 to 2(L - E) + sum(...), offset 2(n - 1)
    graphs = _enumerate(n, lambda t: 3 * len(t[1]) + 2 * t[0] - 4, target + 2 * (n - 1),
                        allowed, max_legs)
    return sorted((gr for gr in graphs if gr.weight <= target), key=lambda gr: (gr.weight, gr.edges))


def graphs_for_genus(n, genus, allowed=None):
    """Connected graphs with betti + sum of edge genera <= genus."""
    max_legs = genus + n
    if allowed is None:
        allowed = _default_allowed(genus, max_legs)
    graphs = _enumerate(n, lambda t: len(t[1]) - 1 + t[0], genus + n - 1, allowed, max_legs)
    return sorted((gr for gr in graphs if gr.genus_cost <= genus),
                  key=lambda gr: (gr.genus_cost, gr.edges))


# -- local evaluation ---------------------------------------------------------

@lru_cache(maxsize=None)
def _s_coeffs(m):
    return sfunction_coefficients(2 * m)


def _embed(s, allv):
    return s.with_vars(allv) if s.vars != allv else s


def _mul(a, b):
    allv = tuple(dict.fromkeys(a.vars + b.vars))
    return _embed(a, allv) * _embed(b, allv)


def _add(a, b):
    allv = tuple(dict.fromkeys(a.vars + b.vars))
    return _embed(a, allv) + _embed(b, allv)


class _Point:
    """Vertex centers: rationals, or ``None`` for the symbolic slice vertex."""

    def __init__(self, centers, slice_trunc=None):
        self.centers = list(centers)
        self.slice_trunc = slice_trunc

    def symbolic(self, v):
        return self.centers[v - 1] is None


class _Evaluator:
    """Evaluates the swap graph sum at a point.

    ``X`` is the function whose derivatives act on edges and inside the vertex
    exponential; ``Y`` is the function the outer derivatives are taken along.
    """

    def __init__(self, curve, X, Y, dX, dY, system, genus, n):
        self.curve = curve
        self.X, self.Y, self.dX, self.dY = X, Y, dX, dY
        self.system = system
        self.genus = genus
        self.n = n
        self.htrunc = 2 * genus
        self.eps_trunc = curve.eps_order if curve.eps_order is not None else INF
        p02, q02 = omega02_singular_difference(X)
        self.P02, self.q02 = p02, q02
        self.cache = {}

    # basic jets -------------------------------------------------------------
    def _base(self, allv):
        tr = {H: self.htrunc, EPS: self.eps_trunc}
        return TruncatedSeries(allv, {}, tr)

    def point_power(self, pt, v, k, var, trunc, leg=None, leg_trunc=None):
        """``z_v^k`` at the vertex ``v`` expanded in ``var`` (plus optional leg)."""
        key = ("pow", pt.centers[v - 1], k, var, trunc, leg, leg_trunc)
        if key in self.cache:
            return self.cache[key]
        c = pt.centers[v - 1]
        if c is None:
            if leg is None:
                out = TruncatedSeries((var,), {(k,): 1}, (trunc,) if trunc is not None else None)
            else:
                terms = {}
                binom = Q(1)
                for m in range(leg_trunc + 1):
                    if binom == 0:
                        break
                    terms[(k - m, m)] = binom
                    binom = binom * (k - m) / (m + 1)
                exact = 0 <= k <= leg_trunc
                out = TruncatedSeries((var, leg), terms, (INF, INF if exact else leg_trunc))
        else:
            out = shifted_power(c, k, var, trunc)
        self.cache[key] = out
        return out

    def func_jet(self, f, pt, v, var, trunc, leg=None, leg_trunc=None):
        """Jet of a one-variable Laurent polynomial (vars z, eps) at vertex v."""
        key = ("jet", id(f), pt.centers[v - 1], var, trunc, leg, leg_trunc)
        if key in self.cache:
            return self.cache[key]
        iz, ie = f.index(Z), f.index(EPS)
        out = None
        for e, c in f.terms.items():
            term = self.point_power(pt, v, e[iz], var, trunc, leg, leg_trunc)
            term = _mul(term, TruncatedSeries((EPS,), {(e[ie],): c}, (self.eps_trunc,)))
            out = term if out is None else _add(out, term)
        self.cache[key] = out
        return out

    def entry_jet(self, entry, legs):
        """Evaluate an entry in z1..zk at leg descriptions ``(pt, v, var, trunc, leg, leg_trunc)``."""
        names = entry.vars
        zi = [names.index(zvar(j + 1)) for j in range(len(legs))]
        ie = names.index(EPS)
        total = None
        for e, c in entry.terms.items():
            term = TruncatedSeries((EPS,), {(e[ie],): c}, (self.eps_trunc,))
            for j, idx in enumerate(zi):
                term = _mul(term, self.point_power(*legs[j][:2], e[idx], *legs[j][2:]))
            total = term if total is None else _add(total, term)
        return total

    def inv_dX(self, pt, v, var, trunc, leg=None, leg_trunc=None):
        key = ("idX", pt.centers[v - 1], var, trunc, leg, leg_trunc)
        if key not in self.cache:
            self.cache[key] = invert(self.func_jet(self.dX, pt, v, var, trunc, leg, leg_trunc))
        return self.cache[key]

    # edges ------------------------------------------------------------------
    def edge(self, pt, g_e, legs, vtrunc, budget):
        key = ("edge", g_e, legs, tuple(vtrunc[v] for v in legs), budget)
        if key in self.cache:
            return self.cache[key]
        counts = {v: legs.count(v) for v in legs}
        descr = []
        leg_vars = []
        for j, v in enumerate(legs):
            tv = f"t{v}"
            L = vtrunc[v] + budget
            if counts[v] == 1:
                if pt.symbolic(v):
                    descr.append((pt, v, tv, None, None, None))
                else:
                    descr.append((pt, v, tv, L, None, None))
                leg_vars.append((tv, v, False))
            else:
                lv = f"l{j + 1}"
                if pt.symbolic(v):
                    descr.append((pt, v, tv, None, lv, budget))
                else:
                    descr.append((pt, v, lv, L, None, None))
                leg_vars.append((lv, v, True))
        k = len(legs)
        if (g_e, k) == (0, 2):
            if legs[0] != legs[1]:
                za = self.point_power(*descr[0][:2], 1, *descr[0][2:])
                zb = self.point_power(*descr[1][:2], 1, *descr[1][2:])
                d = _add(za, zb.scale(-1))
                d = d.truncate({f"t{w}": pt.slice_trunc if pt.symbolic(w) else vtrunc[w] + budget
                                for w in legs})
                sing = invert(_mul(d, d))
            else:
                pj = self.entry_jet(self.P02, descr)
                sing = None
                if pj is not None:
                    qj = self.entry_jet(self.q02, descr)
                    sing = _mul(pj, invert(_mul(qj, qj)))
            reg = self.system.get(0, 2)
            G = sing
            if reg.terms:
                rj = self.entry_jet(reg, descr)
                G = rj if G is None else _add(G, rj)
            if G is None:
                self.cache[key] = None
                return None
        else:
            G = self.entry_jet(self.system.get(g_e, k), descr)
            if G is None:
                self.cache[key] = None
                return None
        for j in range(k):
            G = _mul(G, self.inv_dX(*descr[j]))
        # S(hbar u d/dX) on every leg, then the u prefactor
        for j, (var, v, _) in enumerate(leg_vars):
            D = self.inv_dX(*descr[j])
            u = f"u{v}"
            total = G
            cur = G
            coeffs = _s_coeffs(budget // 2)
            for m in range(1, budget // 2 + 1):
                cur = _mul(D, derive(_mul(D, derive(cur, var)), var))
                fac = TruncatedSeries((H, u), {(2 * m, 2 * m): coeffs[2 * m]}, (self.htrunc, INF))
                total = _add(total, _mul(cur, fac))
            G = _mul(total, TruncatedSeries((u,), {(1,): 1}))
        if g_e:
            G = _mul(G, TruncatedSeries((H,), {(2 * g_e,): 1}, (self.htrunc,)))
        # merge legs into the vertex variables
        for var, v, is_leg in leg_vars:
            if not is_leg:
                continue
            if pt.symbolic(v):
                G = coefficient(G, var, 0) if var in G.vars else G
            else:
                G = restrict(G, {var: f"t{v}"}) if var in G.vars else G
        self.cache[key] = G
        return G

    # vertices ---------------------------------------------------------------
    def vertex_factor(self, pt, v, T, budget, with_ratio=True):
        key = ("vf", pt.centers[v - 1], T, budget, with_ratio)
        if key in self.cache:
            return self.cache[key]
        tv, u = f"t{v}", f"u{v}"
        trunc = None if pt.symbolic(v) else T + budget
        Dx = invert(self.func_jet(self.dX, pt, v, tv, trunc))
        cur = self.func_jet(self.Y, pt, v, tv, trunc)
        coeffs = _s_coeffs(budget // 2)
        expo = None
        for m in range(1, budget // 2 + 1):
            cur = _mul(Dx, derive(_mul(Dx, derive(cur, tv)), tv))
            fac = TruncatedSeries((H, u), {(2 * m, 2 * m + 1): -coeffs[2 * m]}, (self.htrunc, INF))
            term = _mul(cur, fac)
            expo = term if expo is None else _add(expo, term)
        out = TruncatedSeries((u,), {(-1,): 1})
        if with_ratio:
            ratio = _mul(self.func_jet(self.dX, pt, v, tv, trunc),
                         invert(self.func_jet(self.dY, pt, v, tv, trunc)))
            out = _mul(ratio, out)
        if expo is not None:
            allv = tuple(dict.fromkeys(expo.vars + (H,)))
            expo = _embed(expo, allv).truncate({H: self.htrunc})
            out = _mul(out, exp_series(expo))
        self.cache[key] = out
        return out

    def vertex_operator(self, pt, v, series, T, budget):
        tv, u = f"t{v}", f"u{v}"
        if u not in series.vars:
            series = _embed(series, series.vars + (u,))
        iu = series.index(u)
        # every u-degree that can occur must be visited, even when its
        # coefficient is zero inside the window, to keep the truncation honest
        degs = sorted({e[iu] for e in series.terms} | set(range(0, T + 1)))
        trunc = None if pt.symbolic(v) else T + budget
        Dy = None
        out = None
        for r in degs:
            if r < 0:
                continue
            cur = coefficient(series, u, r)
            if r and Dy is None:
                Dy = invert(self.func_jet(self.dY, pt, v, tv, trunc))
            for _ in range(r):
                cur = _mul(Dy, derive(cur, tv))
            out = cur if out is None else _add(out, cur)
        if out is None:
            # nothing survives: keep the truncation information of the input
            out = coefficient(series, u, 0).scale(0)
        if not pt.symbolic(v) and tv in out.vars:
            if out.trunc_of(tv) < 0:
                raise GraphSumError("jet truncation too small")
            out = coefficient(out, tv, 0)
        return out

    # graphs -----------------------------------------------------------------
    def graph_term(self, pt, graph):
        budget = 2 * (self.genus - graph.genus_cost)
        if budget < 0:
            return None
        extra = (3 * budget) // 2
        vtrunc = {v: max(graph.degree(v) - 1 + extra, 0) for v in range(1, self.n + 1)}
        term = TruncatedSeries((H,), {(2 * graph.betti,): Q(1, graph.aut)}, (self.htrunc,))
        for g_e, legs in graph.edges:
            E = self.edge(pt, g_e, legs, vtrunc, budget)
            if E is None:
                return None
            term = _mul(term, E)
        for v in range(1, self.n + 1):
            term = _mul(self.vertex_factor(pt, v, vtrunc[v], budget), term)
            term = self.vertex_operator(pt, v, term, vtrunc[v], budget)
        return term

    def w_term(self, pt, graph, T, regularize=True):
        """Prefactors times edge factors of one graph, before any outer operator."""
        budget = 2 * (self.genus - graph.genus_cost)
        if budget < 0:
            return None
        if not regularize and any(g_e == 0 and len(legs) == 2 and legs[0] == legs[1]
                                  for g_e, legs in graph.edges):
            raise DiagonalPoleUnregularized("same-vertex (0,2) edge needs the kernel subtracted")
        vtrunc = {v: T for v in range(1, self.n + 1)}
        term = TruncatedSeries((H,), {(2 * graph.betti,): Q(1, graph.aut)}, (self.htrunc,))
        for g_e, legs in graph.edges:
            E = self.edge(pt, g_e, legs, vtrunc, budget)
            if E is None:
                return None
            term = _mul(term, E)
        for v in range(1, self.n + 1):
            term = _mul(self.vertex_factor(pt, v, T, budget, with_ratio=False), term)
        return term

    def evaluate(self, pt, graphs):
        self.cache.clear()
        total = None
        for gr in graphs:
            t = self.graph_term(pt, gr)
            if t is None:
                continue
            total = t if total is None else _add(total, t)
        if total is None:
            total = TruncatedSeries((H,), {}, (self.htrunc,))
        if H in total.vars:
            total = coefficient(total, H, 2 * self.genus)
        total = total.scale((-1) ** self.n)
        # omega / prod dY  ->  omega / prod dz
        for v in range(1, self.n + 1):
            tv = f"t{v}"
            if pt.symbolic(v):
                total = _mul(total, self.func_jet(self.dY, pt, v, tv, None))
            else:
                total = _mul(total, self.func_jet(self.dY, pt, v, tv, 0))
                if tv in total.vars:
                    total = coefficient(total, tv, 0)
        return total


# -- reconstruction -----------------------------------------------------------

def _partitions_in_box(total, n, lo, hi):
    """Non-increasing tuples of length n, entries in [lo, hi], summing to total."""
    out = []

    def rec(prefix, remaining, slots, cap):
        if slots == 0:
            if remaining == 0:
                out.append(tuple(prefix))
            return
        lo_need = lo * (slots - 1)
        for e in range(min(cap, hi, remaining - lo_need), lo - 1, -1):
            if e * slots < remaining:
                break
            prefix.append(e)
            rec(prefix, remaining - e, slots - 1, e)
            prefix.pop()

    rec([], total, n, hi)
    return out


def monomial_symmetric(lam, point):
    seen = set()
    total = Q(0)
    for perm in itertools.permutations(lam):
        if perm in seen:
            continue
        seen.add(perm)
        term = Q(1)
        for e, c in zip(perm, point):
            term *= Q(c) ** e
        total += term
    return total


def solve_linear(matrix, rhs_columns):
    """Exact Gauss-Jordan elimination; ``rhs_columns`` is a list of columns."""
    n = len(matrix)
    m = len(matrix[0]) if matrix else 0
    aug = [list(map(Q, row)) + [Q(col[i]) for col in rhs_columns] for i, row in enumerate(matrix)]
    piv_cols = []
    r = 0
    for c in range(m):
        p = next((i for i in range(r, n) if aug[i][c] != 0), None)
        if p is None:
            continue
        aug[r], aug[p] = aug[p], aug[r]
        inv = 1 / aug[r][c]
        aug[r] = [x * inv for x in aug[r]]
        for i in range(n):
            if i != r and aug[i][c] != 0:
                f = aug[i][c]
                aug[i] = [x - f * y for x, y in zip(aug[i], aug[r])]
        piv_cols.append(c)
        r += 1
    if len(piv_cols) < m:
        raise ReconstructionFailed("interpolation matrix is singular")
    for i in range(r, n):
        if any(aug[i][m:]):
            raise ReconstructionFailed("inconsistent interpolation data")
    return [[aug[i][m + k] for i in range(m)] for k in range(len(rhs_columns))]


def _eps_split(value, eps_trunc):
    """Map eps power -> rational from a series in eps (or a constant)."""
    out = {}
    if not value.terms:
        return out
    ie = value.index(EPS) if EPS in value.vars else None
    for e, c in value.terms.items():
        if any(x for j, x in enumerate(e) if j != ie):
            raise GraphSumError("unexpected leftover variables in point value")
        k = e[ie] if ie is not None else 0
        out[k] = out.get(k, Q(0)) + c
    return out


class SwapEngine:
    """Computes the transformed system entry by entry."""

    def __init__(self, system, direction="xy", seed=0, verify_points=1):
        self.system = system
        self.curve = curve = system.curve
        if direction == "xy":
            X, Y, dX, dY = curve.x, curve.y, curve.dx, curve.dy
        elif direction == "yx":
            X, Y, dX, dY = curve.y, curve.x, curve.dy, curve.dx
        else:
            raise ValueError("direction must be 'xy' or 'yx'")
        self.X, self.Y, self.dX, self.dY = X, Y, dX, dY
        self.direction = direction
        self.rng = random.Random(seed)
        self.verify_points = verify_points
        self.eps_trunc = curve.eps_order if curve.eps_order is not None else 0
        self.stats = {}
        # the same-vertex (0,2) edge vanishes when X is a Moebius function of z
        P02, _ = omega02_singular_difference(X)
        self.selfloop02 = bool(P02.terms) or bool(system.get(0, 2).terms)

    def _allowed(self):
        allowed = {k for k in self.system.entries if k != (0, 2)}
        allowed.add((0, 2))
        return allowed

    def graphs(self, g, n):
        allowed = self._allowed()
        out = []
        for gr in graphs_for_genus(n, g, allowed):
            if not self.selfloop02 and any(e == 0 and legs[0] == legs[1] and len(legs) == 2
                                           for e, legs in gr.edges):
                continue
            out.append(gr)
        return out

    def _random_point(self, n, used):
        dX, dY = self.dX, self.dY
        while True:
            num = self.rng.randint(-30, 30)
            den = self.rng.randint(1, 13)
            c = Q(num, den)
            if c == 0 or c in used:
                continue
            ok = True
            for f in (dX, dY):
                val = sum((v * c ** e[0] for e, v in f.terms.items() if e[1] == 0), Q(0))
                if val == 0:
                    ok = False
            if ok:
                return c

    def _points(self, n, count):
        pts = []
        for _ in range(count):
            used = set()
            row = []
            for _ in range(n):
                c = self._random_point(n, used)
                used.add(c)
                row.append(c)
            pts.append(row)
        return pts

    def _value(self, ev, graphs, centers, g, n):
        val = ev.evaluate(_Point(centers), graphs)
        parts = _eps_split(val, self.eps_trunc)
        if (g, n) == (0, 2):
            parts[0] = parts.get(0, Q(0)) - 1 / (Q(centers[0]) - Q(centers[1])) ** 2
        return parts

    def _slice(self, ev, graphs, g, n, target, margin):
        """Laurent expansion of the entry in z1 near 0, others at random points."""
        rest = self._points(n, 1)[0][1:]
        while True:
            pt = _Point([None] + rest, slice_trunc=target + margin)
            val = ev.evaluate(pt, graphs)
            if "t1" in val.vars and val.trunc_of("t1") < target:
                margin *= 2
                if margin > 4096:
                    raise ReconstructionFailed("slice window does not converge")
                continue
            break
        ev.cache.clear()
        out = {}
        if not val.terms:
            return out
        it = val.index("t1") if "t1" in val.vars else None
        ie = val.index(EPS) if EPS in val.vars else None
        for e, c in val.terms.items():
            k = e[ie] if ie is not None else 0
            ex = e[it] if it is not None else 0
            out.setdefault(k, {})
            out[k][ex] = out[k].get(ex, Q(0)) + c
        if (g, n) == (0, 2):
            # remove the expansion of 1/(z1 - c2)^2 from the eps^0 part
            c2 = Q(rest[0])
            for m in range(0, target + 1):
                out.setdefault(0, {})
                out[0][m] = out[0].get(m, Q(0)) - (m + 1) / c2 ** (m + 2)
        return {k: {e: c for e, c in d.items() if c and e <= target} for k, d in out.items()}

    def entry(self, g, n):
        """Reconstruct ``omega^(g)_n / prod dz`` of the transformed system."""
        curve = self.curve
        graphs = self.graphs(g, n)
        self.stats[(g, n)] = len(graphs)
        ev = _Evaluator(curve, self.X, self.Y, self.dX, self.dY, self.system, g, n)
        eps_powers = list(range(self.eps_trunc + 1))
        degrees = {k: curve.degree(g, n, k) for k in eps_powers}
        targets = {k: math.floor(degrees[k] / n) for k in eps_powers
                   if degrees[k] == int(degrees[k])}
        if not targets:
            return self._result(n, {})
        target = max(targets.values())
        sl = self._slice(ev, graphs, g, n, target, margin=8)
        lows = {}
        for k, t in targets.items():
            exps = [e for e, c in sl.get(k, {}).items() if e <= t]
            if exps:
                lows[k] = min(exps)
        if not lows:
            return self._result(n, {})
        bases = {}
        for k, lo in lows.items():
            D = int(degrees[k])
            hi = D - (n - 1) * lo
            bases[k] = _partitions_in_box(D, n, lo, hi)
        count = max(len(b) for b in bases.values())
        pts = self._points(n, count + self.verify_points)
        values = [self._value(ev, graphs, p, g, n) for p in pts]
        terms = {}
        for k, basis in bases.items():
            rows = [[monomial_symmetric(lam, p) for lam in basis] for p in pts[:len(basis)]]
            rhs = [values[i].get(k, Q(0)) for i in range(len(basis))]
            (sol,) = solve_linear(rows, [rhs])
            for i, p in enumerate(pts[len(basis):]):
                check = sum((c * monomial_symmetric(lam, p) for lam, c in zip(basis, sol)), Q(0))
                if check != values[len(basis) + i].get(k, Q(0)):
                    raise ReconstructionFailed(f"verification failed for ({g},{n}) eps^{k}")
            for lam, c in zip(basis, sol):
                if c == 0:
                    continue
                for perm in set(itertools.permutations(lam)):
                    terms[tuple(perm) + (k,)] = c
        # eps powers with no low exponent must vanish at the verification points
        for k in eps_powers:
            if k not in lows:
                for v in values:
                    if v.get(k, Q(0)) != 0:
                        raise ReconstructionFailed(f"slice missed a nonzero part of ({g},{n})")
        return self._result(n, terms)

    def _result(self, n, terms):
        eps = INF if self.curve.eps_order is None else self.curve.eps_order
        return TruncatedSeries(zvars(n) + (EPS,), terms, (INF,) * n + (eps,))


def _swap(system, order, direction, seed=0):
    eng = SwapEngine(system, direction, seed=seed)
    entries = {}
    for g, n in system.types() if order == system.hbar_order else \
            DifferentialSystem(system.curve, {}, order).types():
        if 2 * g - 2 + n > order:
            continue
        entries[(g, n)] = eng.entry(g, n)
    out = DifferentialSystem(system.curve, entries, order, check_symmetry=False)
    out.graph_counts = dict(eng.stats)
    return out


def xy_swap(system, order=None, seed=0):
    """The dual system: derivatives along x on edges, outer derivatives along y."""
    return _swap(system, system.hbar_order if order is None else order, "xy", seed)


def yx_swap(system, order=None, seed=0):
    """The inverse transformation (roles of x and y exchanged)."""
    return _swap(system, system.hbar_order if order is None else order, "yx", seed)


def tr_via_dual_swap(curve, order, seed=0):
    """Differentials obtained from the trivial dual system by the swap."""
    from .curve import trivial_system
    return yx_swap(trivial_system(curve, order), order, seed)


# -- extended objects W and Omega (local jets at rational centers) -----------

def _roles(curve, direction):
    if direction == "xy":
        return curve.x, curve.y, curve.dx, curve.dy
    if direction == "yx":
        return curve.y, curve.x, curve.dy, curve.dx
    raise ValueError("direction must be 'xy' or 'yx'")


def _param(direction):
    return "u" if direction == "xy" else "v"


def _value_at(f, c):
    iz = f.index(Z)
    ie = f.index(EPS) if EPS in f.vars else None
    return sum((v * Q(c) ** e[iz] for e, v in f.terms.items() if ie is None or e[ie] == 0), Q(0))


def _check_centers(curve, centers):
    cs = [Q(c) for c in centers]
    if len(set(cs)) != len(cs) or any(c == 0 for c in cs):
        raise ValueError("centers must be distinct nonzero rationals")
    for c in cs:
        if _value_at(curve.dx, c) == 0 or _value_at(curve.dy, c) == 0:
            raise ValueError(f"dx or dy vanishes at {c}")
    return cs


@dataclass
class WObject:
    """Local jet of W (direction ``xy``, parameters ``u``) or its dual (``yx``, ``v``).

    ``series`` is in ``t1 .. tn`` with ``z_i = centers[i-1] + t_i``.
    """
    series: TruncatedSeries
    g: int
    n: int
    centers: tuple
    direction: str
    curve: object = field(repr=False)

    @property
    def param(self):
        return _param(self.direction)

    def at_zero_parameters(self):
        """Setting every parameter to 0 gives ``omega / prod dX``."""
        out = self.series
        for i in range(1, self.n + 1):
            out = coefficient(out, f"{self.param}{i}", 0)
        return out


def _rename_params(s, n, direction):
    if direction == "xy":
        return s
    return s.rename({f"u{i}": f"v{i}" for i in range(1, n + 1) if f"u{i}" in s.vars})


def evaluate_graph_term(graph, system, centers, genus, jet_order, direction="xy",
                        regularize=True):
    """One graph's contribution to ``W^(genus)_n``: prefactors, edges, hbar^(2 betti)/|Aut|."""
    curve = system.curve
    _check_centers(curve, centers)
    ev = _Evaluator(curve, *_roles(curve, direction), system, genus, graph.n)
    term = ev.w_term(_Point(centers), graph, jet_order, regularize)
    return None if term is None else _rename_params(term, graph.n, direction)


def build_W(system, g, n, centers, jet_order=4, direction="xy"):
    """``W^(g)_n`` of ``system`` as a jet at ``centers``, exact in the parameters."""
    curve = system.curve
    _check_centers(curve, centers)
    ev = _Evaluator(curve, *_roles(curve, direction), system, g, n)
    pt = _Point(centers)
    allowed = set(system.entries) | {(0, 2)}
    total = None
    for gr in graphs_for_genus(n, g, allowed):
        t = ev.w_term(pt, gr, jet_order)
        if t is not None:
            total = t if total is None else _add(total, t)
    total = coefficient(total, H, 2 * g) if H in total.vars else total
    total = total.truncate({f"t{i}": jet_order for i in range(1, n + 1)})
    return WObject(_rename_params(total, n, direction), g, n, tuple(centers), direction, curve)


def w_swap_relation(W):
    """Image of W under ``(-1)^n prod e^(q A) sum_r d_B^r [p^r] (dA/dB) e^(-q A)``.

    For ``W`` of direction ``xy`` this is A = x, B = y, p = u, q = v and the
    result is the dual ``W``; for direction ``yx`` the roles are exchanged.
    Conjugation by the exponential turns ``d_B`` into ``d_B - q dA/dB``.
    """
    curve = W.curve
    _, _, dA, dB = _roles(curve, W.direction)
    src = W.param
    dst = "v" if src == "u" else "u"
    out = W.series
    for i, c in enumerate(W.centers, 1):
        t, p = f"t{i}", f"{src}{i}"
        T = out.trunc_of(t)
        jA = shift(dA, Z, c, t, T)
        invB = invert(shift(dB, Z, c, t, T))
        ratio = _mul(jA, invB)
        qratio = _mul(ratio, TruncatedSeries((f"{dst}{i}",), {(1,): 1}))
        degs = {e[out.index(p)] for e in out.terms} if p in out.vars else {0}
        if min(degs, default=0) < 0:
            raise GraphSumError("negative powers of the parameter are outside the relation")
        total = None
        for r in range(max(degs, default=0) + 1):
            cur = _mul(coefficient(out, p, r), ratio)
            for _ in range(r):
                cur = _add(_mul(invB, derive(cur, t)), _mul(qratio, cur).scale(-1))
            total = cur if total is None else _add(total, cur)
        out = total
    out = out.scale((-1) ** W.n)
    return WObject(out, W.g, W.n, W.centers, "yx" if W.direction == "xy" else "xy", curve)


@dataclass
class OmegaObject:
    """``Omega_n`` near the diagonals, as a jet at ``w_i = c_i + a_i``, ``wbar_i = c_i + b_i``.

    ``series`` is ``R`` in ``Omega_n prod sqrt(X'(w_i) X'(wbar_i)) = R / prod (a_i - b_i)``,
    where X is x (direction ``xy``) or y (``yx``).
    """
    series: TruncatedSeries
    n: int
    centers: tuple
    direction: str
    order: int
    trunc: int
    curve: object = field(repr=False)


def _local_primitive_power(c, e, var, T):
    """Primitive of ``(c + var)^e`` vanishing at ``var = 0``, through ``var^T``."""
    terms = {}
    binom = Q(1)
    for m in range(T):
        if binom == 0:
            break
        terms[(m + 1,)] = binom * Q(c) ** (e - m) / (m + 1)
        binom = binom * (e - m) / (m + 1)
    exact = 0 <= e < T
    return TruncatedSeries((var,), terms, (INF if exact else T,))


def _set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        yield [[first]] + part
        for k in range(len(part)):
            yield part[:k] + [[first] + part[k]] + part[k + 1:]


def _omega_all_graphs(system, S, cs, T, order, allv):
    """Sum over all (not necessarily connected) graphs on the vertex set ``S``."""
    cache = {}

    def J(e):
        if e not in cache:
            tot = None
            for i in S:
                for var, sign in ((f"a{i}", 1), (f"b{i}", -1)):
                    p = _local_primitive_power(cs[i - 1], e, var, T).scale(sign)
                    tot = p if tot is None else _add(tot, p)
            cache[e] = _embed(tot, allv)
        return cache[e]

    expo = None
    for (g, k), entry in system.entries.items():
        w = 2 * g - 2 + k
        if w > order or not entry.terms or w < 0:
            continue
        val = expand_entry(entry, [J] * k)
        fac = TruncatedSeries((H,), {(w,): Q(1, math.factorial(k))}, (order,))
        val = _mul(val, fac)
        expo = val if expo is None else _add(expo, val)
    Z_S = TruncatedSeries.const(1, allv)
    if expo is not None:
        Z_S = _mul(Z_S, exp_series(_embed(expo, tuple(dict.fromkeys(allv + expo.vars)))))
    # standard kernel between distinct vertices: cross ratios
    for i, j in itertools.combinations(S, 2):
        d = cs[i - 1] - cs[j - 1]

        def lin(u, v):
            return TruncatedSeries((u, v), {(0, 0): d, (1, 0): 1, (0, 1): -1}, (T, T))

        num = _mul(lin(f"a{i}", f"a{j}"), lin(f"b{i}", f"b{j}"))
        den = _mul(lin(f"a{i}", f"b{j}"), lin(f"b{i}", f"a{j}"))
        Z_S = _mul(Z_S, _mul(num, invert(den)))
    return Z_S


def build_Omega(system, n, centers, trunc=6, order=None, direction="xy"):
    """``Omega_n`` of ``system`` (or the dual one, ``direction='yx'``) near the diagonals.

    Summing over all graphs gives an exponential of single-edge terms; the
    connected part is extracted by Moebius inversion over set partitions.
    The self-loops of the standard kernel, together with the prefactor,
    make up exactly the half-density normalization and so drop out of ``R``.
    """
    curve = system.curve
    cs = _check_centers(curve, centers)
    order = system.hbar_order if order is None else order
    allv = tuple(v for i in range(1, n + 1) for v in (f"a{i}", f"b{i}")) + (H,)
    Z_cache = {}

    def Z_of(block):
        key = tuple(sorted(block))
        if key not in Z_cache:
            Z_cache[key] = _omega_all_graphs(system, key, cs, trunc, order, allv)
        return Z_cache[key]

    total = None
    for part in _set_partitions(list(range(1, n + 1))):
        k = len(part)
        term = TruncatedSeries.const((-1) ** (k - 1) * math.factorial(k - 1), allv)
        for block in part:
            term = _mul(term, Z_of(block))
        total = term if total is None else _add(total, term)
    total = total.truncate({H: order, **{v: trunc for v in allv if v != H}})
    return OmegaObject(total, n, tuple(centers), direction, order, trunc, curve)


def omega_restriction(Om, g):
    """``[h^(2g-2+n)]`` of ``prod d/da_i R`` on the diagonals: ``omega^(g)_n / prod dz``."""
    out = Om.series
    k = 2 * g - 2 + Om.n
    if k > Om.order:
        raise GraphSumError("hbar order beyond the computed Omega")
    out = coefficient(out, H, k) if H in out.vars else out
    for i in range(1, Om.n + 1):
        out = derive(out, f"a{i}")
    return restrict(out, {**{f"a{i}": f"t{i}" for i in range(1, Om.n + 1)},
                          **{f"b{i}": f"t{i}" for i in range(1, Om.n + 1)}})


def _local_divided_difference(f, t, a, b):
    """``(f(a) - f(b))/(a - b)`` for a series ``f`` in ``t``."""
    it = f.index(t)
    others = tuple(v for v in f.vars if v != t)
    T = f.trunc_of(t)
    terms = {}
    for e, c in f.terms.items():
        m = e[it]
        rest = e[:it] + e[it + 1:]
        for p in range(m):
            key = (p, m - 1 - p) + rest
            terms[key] = terms.get(key, 0) + c
    half = (T - 1) // 2 if T != INF else INF
    tr = (half, half) + tuple(f.trunc_of(v) for v in others)
    return TruncatedSeries((a, b) + others, terms, tr)


def half_density_factor(curve, direction, center, i, T):
    """``(X(w) - X(wbar)) / ((w - wbar) sqrt(X'(w) X'(wbar)))``, equal to 1 on the diagonal."""
    X, _, dX, _ = _roles(curve, direction)
    a, b = f"a{i}", f"b{i}"
    dd = _local_divided_difference(shift(X, Z, center, "_t", 2 * T + 1), "_t", a, b)
    x1 = _value_at(dX, center)
    ja = shift(dX, Z, center, a, T).scale(1 / x1)
    jb = shift(dX, Z, center, b, T).scale(1 / x1)
    root = exp_series(log_series(_mul(ja, jb)).scale(Q(-1, 2)))
    return _mul(dd.scale(1 / x1), root)


def omega_to_W(Om, g):
    """``W^(g)_n`` from Omega by ``w = e^(h u d_X / 2) z``, ``wbar = e^(-h u d_X / 2) z``.

    Under this substitution ``X(w) - X(wbar) = u h``.
    """
    n, curve = Om.n, Om.curve
    X, Y, dX, dY = _roles(curve, Om.direction)
    K = 2 * g - 2 + 2 * n
    T = Om.trunc
    xi = Om.series
    for i, c in enumerate(Om.centers, 1):
        xi = _mul(xi, half_density_factor(curve, Om.direction, c, i, T))
    for i, c in enumerate(Om.centers, 1):
        a, b, u = f"a{i}", f"b{i}", f"u{i}"
        Da = invert(shift(dX, Z, c, a, T))
        Db = invert(shift(dX, Z, c, b, T))
        out = None
        da = xi
        for p in range(K + 1):
            db = da
            for q in range(K + 1 - p):
                coef = Q((-1) ** q, 2 ** (p + q) * math.factorial(p) * math.factorial(q))
                mono = TruncatedSeries((H, u), {(p + q, p + q): coef}, (K, INF))
                out = _add(out, _mul(mono, db)) if out is not None else _mul(mono, db)
                db = _mul(Db, derive(db, b))
            da = _mul(Da, derive(da, a))
        xi = restrict(out, {a: f"t{i}", b: f"t{i}"})
    ev = _Evaluator(curve, X, Y, dX, dY, None, (K + 1) // 2, n)
    pt = _Point(Om.centers)
    budget = 2 * ((K + 1) // 2)
    for v in range(1, n + 1):
        Tv = xi.trunc_of(f"t{v}")
        xi = _mul(ev.vertex_factor(pt, v, Tv, budget, with_ratio=False), xi)
    xi = xi.truncate({H: K})
    out = coefficient(xi, H, K)
    return WObject(_rename_params(out, n, Om.direction), g, n, Om.centers, Om.direction, curve)
