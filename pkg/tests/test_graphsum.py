import itertools
from math import factorial

import pytest
from hypothesis import given, settings, strategies as st

from xyswap.curve import curve_from_preset, trivial_system
from xyswap.graphsum import (DiagonalPoleUnregularized, Graph, GraphSumError, build_Omega, build_W,
                             enumerate_graphs, evaluate_graph_term, graphs_for_genus,
                             monomial_symmetric, omega_restriction, omega_to_W, solve_linear,
                             w_swap_relation, xy_swap, yx_swap)
from xyswap.kp import local_entry
from xyswap.series import Q, TruncatedSeries

CENTERS = (Q(1, 2), Q(-2, 3), Q(3))


def brute_force_aut(graph):
    """Count vertex-fixing permutations of half-edges that map edges onto equal-genus edges."""
    halves = [(k, v) for k, (_, legs) in enumerate(graph.edges) for v in legs]
    genus = [g for g, _ in graph.edges]
    count = 0
    for perm in itertools.permutations(range(len(halves))):
        if any(halves[i][1] != halves[p][1] for i, p in enumerate(perm)):
            continue
        image = {}
        ok = True
        for i, p in enumerate(perm):
            src, dst = halves[i][0], halves[p][0]
            if image.setdefault(src, dst) != dst or genus[src] != genus[dst]:
                ok = False
                break
        if ok and len(set(image.values())) == len(image):
            count += 1
    return count


def connected(n, edges):
    seen, stack = {1}, [1]
    while stack:
        v = stack.pop()
        for _, legs in edges:
            if v in legs:
                for w in legs:
                    if w not in seen:
                        seen.add(w)
                        stack.append(w)
    return len(seen) == n


def brute_force_graphs(n, target):
    """Grow edge multisets one edge at a time; every edge raises 2(L - E) + sum(2g - 2 + |e|)."""
    limit = target + 2 * (n - 1)
    cost = {}
    for k in range(1, limit + 2):
        for legs in itertools.combinations_with_replacement(range(1, n + 1), k):
            for g in range(limit + 1):
                if (g, k) != (0, 1) and 3 * k + 2 * g - 4 <= limit:
                    cost[(g, legs)] = 3 * k + 2 * g - 4
    level, found = {()}, set()
    while level:
        grown = set()
        for ms in level:
            if connected(n, ms) and Graph(n, ms).weight <= target:
                found.add(ms)
            c = sum(cost[t] for t in ms)
            grown |= {tuple(sorted(ms + (t,))) for t in cost if c + cost[t] <= limit}
        level = grown
    return found


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("target", [0, 1, 2, 3, 4])
def test_enumeration_matches_brute_force(n, target):
    assert {gr.edges for gr in enumerate_graphs(n, target)} == brute_force_graphs(n, target)


SMALL_GRAPHS = sorted({gr for n in (1, 2, 3) for gr in enumerate_graphs(n, 4) + graphs_for_genus(n, 2)
                       if gr.legs <= 6}, key=lambda gr: (gr.n, gr.edges))


@pytest.mark.parametrize("graph", SMALL_GRAPHS, ids=lambda gr: f"n{gr.n}-{gr.edges}")
def test_automorphisms_against_brute_force(graph):
    assert graph.aut == brute_force_aut(graph)


def test_graph_invariants():
    loop = Graph(1, ((0, (1, 1)),))
    assert (loop.betti, loop.genus_cost, loop.weight, loop.aut) == (1, 1, 2, 2)
    theta = Graph(2, ((0, (1, 2)), (0, (1, 2)), (0, (1, 2))))
    assert (theta.betti, theta.aut) == (2, 6)


@pytest.mark.parametrize("n,g,count", [(1, 0, 1), (1, 1, 3), (2, 0, 1), (2, 1, 9), (3, 0, 4)])
def test_graph_counts(n, g, count):
    allowed = {(0, 2), (1, 1), (0, 3), (1, 2), (0, 4), (2, 1), (1, 3)}
    assert len(graphs_for_genus(n, g, allowed)) == count


@given(st.integers(1, 3), st.integers(0, 2))
@settings(max_examples=15, deadline=None)
def test_enumerated_graphs_are_connected_and_bounded(n, target):
    for gr in enumerate_graphs(n, target):
        assert gr.weight <= target
        assert gr.betti >= 0
        assert {v for _, legs in gr.edges for v in legs} == set(range(1, n + 1)) or n == 1


def test_solve_linear_exact():
    (sol,) = solve_linear([[2, 1], [1, 3]], [[3, 5]])
    assert sol == [Q(4, 5), Q(7, 5)]


def test_monomial_symmetric():
    assert monomial_symmetric((2, 0), (Q(1), Q(2))) == 5
    assert monomial_symmetric((1, 1), (Q(1), Q(2))) == 2


def test_bgw_genus_one_slice(systems):
    # genus-one BGW free energy restricted to p1 is -(1/8) log(1 - p1):
    # omega^(1)_n is the constant (n-1)!/8 for r = 2
    s = systems("higher-bgw", 2, 3)
    for n in (1, 2, 3):
        e = s.get(1, n)
        assert e.terms == {(0,) * (n + 1): Q(factorial(n - 1), 8)}
    assert s.get(0, 3).is_zero() and s.get(0, 4).is_zero()


def test_swap_round_trip_order_two(systems):
    s = systems("higher-bgw", 3, 2)
    dual = xy_swap(s, 2)
    assert dual.entries == {}
    assert yx_swap(dual, 2).same_as(s)


def test_swap_of_trivial_system_round_trips():
    c = curve_from_preset("higher-airy", 2)
    d = trivial_system(c, 2)
    tr = yx_swap(d, 2)
    assert tr.entries
    assert xy_swap(tr, 2).same_as(d)


def test_w_at_zero_parameters_is_omega_over_dx(systems):
    s = systems("higher-bgw", 2, 4)
    c = s.curve
    W = build_W(s, 1, 1, CENTERS[:1], 4)
    omega = local_entry(s.get(1, 1), 1, CENTERS[0], 4, ("t1",))
    from xyswap.curve import shift
    from xyswap.series import invert
    dx = invert(shift(c.dx, "z", CENTERS[0], "t1", 4)).drop_var("eps")
    assert W.at_zero_parameters().agrees_with((omega * dx.with_vars(omega.vars)))


@pytest.mark.parametrize("name", ["higher-bgw", "higher-airy"])
@pytest.mark.parametrize("g,n,J", [(1, 1, 2), (0, 2, 1)])
def test_omega_to_w_matches_graph_sum(systems, name, g, n, J):
    s = systems(name, 2, 4)
    K = 2 * g - 2 + 2 * n
    W = build_W(s, g, n, CENTERS[:n], J)
    Om = build_Omega(s, n, CENTERS[:n], trunc=J + K, order=K)
    assert (omega_to_W(Om, g).series - W.series).is_zero()


def test_omega_restriction_gives_omega(systems):
    s = systems("higher-bgw", 2, 4)
    Om = build_Omega(s, 1, CENTERS[:1], trunc=6, order=2)
    got = omega_restriction(Om, 1)
    assert got.agrees_with(TruncatedSeries.const(Q(1, 8), got.vars))


@pytest.mark.parametrize("name", ["higher-bgw", "higher-airy"])
@pytest.mark.parametrize("g,n,J", [(1, 1, 3), (0, 2, 2), (1, 2, 1)])
def test_w_swap_relation(systems, name, g, n, J):
    s = systems(name, 2, 4)
    dual = build_W(trivial_system(s.curve, 4), g, n, CENTERS[:n], J + 2 * g + n + 2,
                   direction="yx")
    image = w_swap_relation(dual)
    assert image.direction == "xy"
    assert (image.series - build_W(s, g, n, CENTERS[:n], J).series).is_zero()
    assert (w_swap_relation(image).series - dual.series).is_zero()


def test_w_swap_relation_rejects_negative_parameter_powers(systems):
    s = systems("higher-bgw", 2, 4)
    W = build_W(s, 1, 1, CENTERS[:1], 2)
    W.series = W.series * TruncatedSeries(("u1",), {(-1,): 1}).with_vars(W.series.vars)
    with pytest.raises(GraphSumError):
        w_swap_relation(W)


def test_self_loop_needs_regularization():
    c = curve_from_preset("higher-bgw", 2)
    loop = Graph(1, ((0, (1, 1)),))
    with pytest.raises(DiagonalPoleUnregularized):
        evaluate_graph_term(loop, trivial_system(c, 2), CENTERS[:1], 1, 2, regularize=False)
    assert evaluate_graph_term(loop, trivial_system(c, 2), CENTERS[:1], 1, 2) is not None


def test_centers_must_be_distinct_and_nonzero():
    c = curve_from_preset("higher-bgw", 2)
    with pytest.raises(ValueError):
        build_W(trivial_system(c, 2), 0, 2, (Q(1), Q(1)), 1)
    with pytest.raises(ValueError):
        build_W(trivial_system(c, 2), 1, 1, (Q(0),), 1)
