"""Command-line front end.

``xyswap compute`` writes JSON artifacts (system, kernel, frame, schur,
potential) for a named or custom curve; ``xyswap verify`` runs the check
suites and exits 1 if any check fails.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

from .curve import (PRESETS, CurveError, SpectralCurve, curve_from_preset, laurent,
                    pullback_kernel_defect, trivial_system)
from .gaussian import (GaussianError, Jets, clear_pole, example_f_first_order, gaussian_moment,
                       kernel_double_transform, pair_moment, phi_basis_integral,
                       xy_transform_function)
from .graphsum import GraphSumError, tr_via_dual_swap, xy_swap, yx_swap
from .kp import (KPError, apply_D_operator, build_kernel, frame_from_kernel,
                 ad_spectrum_check, kp_check, normalize_omega02, pairing_matrix,
                 plucker_check, potential_from_system, tau_from_frame, tau_schur_coefficients)
from .series import Q, SeriesError, TruncatedSeries

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_MATH = 0, 1, 2, 3
MATH_ERRORS = (SeriesError, CurveError, GaussianError, GraphSumError, KPError)
EMITS = ("system", "kernel", "frame", "schur", "potential")
SUITES = ("gaussian", "moments", "roundtrip", "swap", "kp", "kp-duality", "kernel", "frame",
          "semiclassical", "d-operator")
FORMAT = "xyswap-artifact/1"

EXPLAIN = {
    "higher-airy": "x = z^-r / r, y = -1/z; global coordinate z, expansion point z = 0.",
    "higher-bgw": "x = z^-r / r, y = -z; global coordinate z (not 1/z), expansion point z = 0.",
    "deformed-bgw": ("x = z^-r / r - eps z^-1, y = -z; eps is a formal parameter kept to order "
                     "--epsilon (default 2); KP-type outputs need an undeformed curve."),
    "custom": "x, y read from a JSON file mapping exponents of z to rationals.",
}


class ConfigError(ValueError):
    pass


@dataclass
class JobConfig:
    command: str
    preset: str | None = "higher-bgw"
    r: int = 2
    epsilon: int | None = None
    curve_file: str | None = None
    order: int = 2
    n_max: int = 3
    emit: list = field(default_factory=lambda: ["system"])
    suite: list = field(default_factory=lambda: ["all"])
    threads: int = 1
    out: str | None = None
    dmax: int = 8
    json: bool = False
    explain: bool = False

    def validate(self):
        if self.order < 0:
            raise ConfigError("--order must be non-negative")
        if self.n_max < 1:
            raise ConfigError("--n-max must be at least 1")
        if self.threads < 1:
            raise ConfigError("--threads must be at least 1")
        if self.dmax < 2:
            raise ConfigError("--dmax must be at least 2")
        if self.r < 2:
            raise ConfigError("--r must be at least 2")
        if self.epsilon is not None and self.epsilon < 0:
            raise ConfigError("--epsilon must be a non-negative truncation order")
        if self.curve_file is None and self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}")
        for e in self.emit:
            if e not in EMITS:
                raise ConfigError(f"unknown artifact {e!r}; choose from {', '.join(EMITS)}")
        for s in self.suite:
            if s != "all" and s not in SUITES:
                raise ConfigError(f"unknown suite {s!r}; choose from all, {', '.join(SUITES)}")
        return self

    def describe(self):
        d = asdict(self)
        for k in ("json", "explain", "out", "threads"):
            d.pop(k)
        if self.command == "compute":
            d.pop("suite")
            d.pop("dmax")
        else:
            d.pop("emit")
        return d


# ------------------------------------------------------------------ curves

def _rational(v):
    try:
        return Fraction(str(v))
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"not a rational number: {v!r}") from exc


def load_custom_curve(path):
    """``{"x": {"-2": "1/2"}, "y": {"1": "-1"}}`` -> SpectralCurve."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read curve file {path}: {exc}") from exc
    if not isinstance(data, dict) or not all(isinstance(data.get(k), dict) for k in ("x", "y")):
        raise ConfigError("curve file needs objects 'x' and 'y' mapping exponents to rationals")
    parts = []
    for k in ("x", "y"):
        try:
            coeffs = {int(e): _rational(c) for e, c in data[k].items()}
        except ValueError as exc:
            raise ConfigError(f"bad exponent in '{k}': {exc}") from exc
        parts.append(laurent({e: c for e, c in coeffs.items() if c}))
    return SpectralCurve(parts[0], parts[1], data.get("name", "custom"))


def build_curve(cfg):
    if cfg.curve_file is not None:
        return load_custom_curve(cfg.curve_file)
    if cfg.preset == "deformed-bgw":
        return curve_from_preset(cfg.preset, cfg.r, eps_order=cfg.epsilon)
    return curve_from_preset(cfg.preset, cfg.r)


def _system(curve, order, cache):
    key = order
    if key not in cache:
        cache[key] = tr_via_dual_swap(curve, order)
    return cache[key]


# ------------------------------------------------------------------ output

def canonical(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True) + "\n"


def cmd_compute(cfg, stdout=sys.stdout):
    curve = build_curve(cfg)
    cache = {}
    system = _system(curve, cfg.order, cache)
    artifacts = {}
    kernel = None
    for name in cfg.emit:
        if name == "system":
            artifacts[name] = system.to_json()
        elif name in ("kernel", "frame"):
            if kernel is None:
                kernel = build_kernel(system, cfg.order)
            if name == "kernel":
                artifacts[name] = kernel.to_json()
            else:
                frame = frame_from_kernel(kernel, cfg.n_max, cfg.order)
                frame.check_normalized()
                artifacts[name] = dict(frame.to_json(), normalized=True)
        elif name == "potential":
            artifacts[name] = potential_from_system(system, cfg.order, cfg.n_max + 1).to_json()
        elif name == "schur":
            pot = potential_from_system(system, cfg.order, cfg.n_max + 1)
            artifacts[name] = tau_schur_coefficients(pot).to_json()
    out = Path(cfg.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    for name, art in artifacts.items():
        path = out / f"{name}.json"
        path.write_text(canonical({"format": FORMAT, "config": cfg.describe(), name: art}))
        print(path, file=stdout)
    return EXIT_OK


# ------------------------------------------------------------------ checks

@dataclass
class Check:
    suite: str
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0


# the order-hbar coefficient of the transform of f^vee, divided by sqrt(y'/x'),
# written as monomials in X1..X3 = x', x'', x''', Y1..Y3 and F0..F2 = f^vee, f^vee', f^vee''
EXAMPLE_F_TERMS = (
    ({"F0": 1, "X3": 1, "X1": -2, "Y1": -1}, Fraction(1, 8)),
    ({"F0": 1, "Y3": 1, "X1": -1, "Y1": -2}, Fraction(-1, 8)),
    ({"F0": 1, "X2": 2, "X1": -3, "Y1": -1}, Fraction(-5, 24)),
    ({"F0": 1, "X2": 1, "Y2": 1, "X1": -2, "Y1": -2}, Fraction(1, 24)),
    ({"F0": 1, "Y2": 2, "X1": -1, "Y1": -3}, Fraction(1, 6)),
    ({"F1": 1, "X2": 1, "X1": -2, "Y1": -1}, Fraction(1, 2)),
    ({"F2": 1, "X1": -1, "Y1": -1}, Fraction(-1, 2)),
)


def example_f_expected():
    names = ("X1", "X2", "X3", "Y1", "Y2", "Y3", "F0", "F1", "F2")
    terms = {}
    for mono, c in EXAMPLE_F_TERMS:
        terms[tuple(mono.get(v, 0) for v in names)] = Q(c)
    return TruncatedSeries(names, terms)


def suite_gaussian(ctx):
    from .gaussian import forward_operator
    op = forward_operator(1)
    pref = (op.out_alpha, op.out_beta) == (Fraction(-1, 2), Fraction(1, 2))
    lead = set(op.terms[0]) == {0} and op.terms[0][0] == TruncatedSeries.const(1, op.terms[0][0].vars)
    got = example_f_first_order()
    exp = example_f_expected()
    got = got.with_vars(exp.vars)
    mismatched = [str(k) for k in set(got.terms) | set(exp.terms)
                  if got.terms.get(k) != exp.terms.get(k)]
    return [Check("gaussian", "sqrt(y'/x') prefactor", pref),
            Check("gaussian", "order-0 term is f^vee", lead),
            Check("gaussian", "order-hbar terms", not mismatched,
                  {"terms": len(exp.terms), "mismatched": mismatched})]


def double_moment_via_rotation(k, l):
    """Pair moment from single moments after xi = a + b, zeta = a - b."""
    from math import comb
    total = Fraction(0)
    for i in range(k + 1):
        for j in range(l + 1):
            pa, pb = i + j, (k - i) + (l - j)
            if pa % 2 or pb % 2:
                continue
            c = comb(k, i) * comb(l, j) * (-1) ** (l - j)
            ma = gaussian_moment(pa, 2).integral_part()[0]
            mb = gaussian_moment(pb, -2).integral_part()[0]
            total += Fraction(c) * Fraction(ma) * Fraction(mb)
    # Jacobian 2 and i/(2 pi) against two 1/sqrt(2 pi), times the leftover
    # half powers 2^(1/2) (-2)^(1/2) = 2i: 2i * 2i = -4
    return -4 * total


def suite_moments(ctx, kmax=10):
    from .gaussian import double_factorial
    bad_single, bad_pair = [], []
    for k in range(kmax + 1):
        for a in (Q(1), Q(3), Q(-2), Q(5, 7)):
            m = gaussian_moment(k, a)
            want = 0 if k % 2 else double_factorial(k - 1)
            if m.coeff != want or m.exponent != Fraction(-(k + 1), 2):
                bad_single.append([k, str(a)])
        for l in range(kmax + 1):
            if pair_moment(k, l) != double_moment_via_rotation(k, l):
                bad_pair.append([k, l])
    return [Check("moments", "single moments k<=10", not bad_single, {"failures": bad_single}),
            Check("moments", "pair moments k,l<=10 (rotation route)", not bad_pair,
                  {"failures": bad_pair})]


def random_jets(rng, T, y_only=False):
    def rnd(k):
        return Q(rng.randint(-5, 5), rng.randint(1, 4))
    xs = {(k,): rnd(k) for k in range(T + 1)}
    ys = {(k,): rnd(k) for k in range(T + 1)}
    if not y_only:
        xs[(1,)] = Q(rng.choice([1, 2, -3]))
    ys[(1,)] = Q(rng.choice([1, -2, 3]))
    return Jets(TruncatedSeries(("t",), xs, (T,)), TruncatedSeries(("t",), ys, (T,)), "t")


def roundtrip_trial(rng, order=3, T=14):
    jets = random_jets(rng, T)
    g = TruncatedSeries(("t",), {(k,): Q(rng.randint(-3, 3)) for k in range(6)}, (T,))
    f = xy_transform_function(g, jets, "xy", order)
    back = xy_transform_function(f.series, jets, "yx", order, f.alpha, f.beta)
    d = back.series - g.with_vars(back.series.vars)
    return d.is_zero() and (back.alpha, back.beta) == (0, 0)


def suite_roundtrip(ctx, trials=20):
    rng = random.Random(1)
    fails = [i for i in range(trials) if not roundtrip_trial(rng)]
    return [Check("roundtrip", f"inverse after forward, {trials} random inputs, hbar^3",
                  not fails, {"failing_trials": fails})]


def suite_swap(ctx):
    system = ctx.system()
    dual = xy_swap(system, ctx.order)
    back = yx_swap(dual, ctx.order)
    diff = sorted(back.difference(system))
    return [Check("swap", f"yx_swap(xy_swap) = id to order {ctx.order}", not diff,
                  {"types": [list(k) for k in system.types()],
                   "first_mismatch": list(diff[0]) if diff else None})]


def suite_kp(ctx):
    rep = kp_check(ctx.system(), max_n=ctx.n_max, order=ctx.order)
    return [Check("kp", f"determinantal formulas n<={ctx.n_max} to order {ctx.order}",
                  rep.passed, rep.to_json())]


def perturbed_system(system):
    """Add a homogeneous symmetric monomial to omega^(1)_2.

    Returns None when omega^(1)_2 has degree <= 0: a constant shift there
    is still KP, so it would not exercise a failing verdict.
    """
    from .curve import DifferentialSystem
    D = int(system.curve.degree(1, 2))
    if D <= 0:
        return None
    a, b = (D + 1) // 2, D // 2
    entries = dict(system.entries)
    old = system.get(1, 2)
    bump = TruncatedSeries(old.vars, {(a, b, 0): 1, (b, a, 0): 1})
    entries[(1, 2)] = old + bump
    return DifferentialSystem(system.curve, entries, system.hbar_order)


def suite_kp_duality(ctx):
    order = min(ctx.order, 2)
    out = []
    cases = [("TR", ctx.system(order)), ("perturbed", perturbed_system(ctx.system(order)))]
    for label, system in cases:
        if system is None:
            continue
        dual = xy_swap(system, order)
        verdicts = {f"{side}@{pt}": kp_check(s, max_n=3, order=order, point=pt).status
                    for side, s in (("before", system), ("after", dual)) for pt in (0, 1)}
        expect = "PASS" if label == "TR" else "FAIL"
        out.append(Check("kp-duality", f"{label}: verdicts agree across swap and points 0, 1",
                         len(set(verdicts.values())) == 1 and verdicts["before@0"] == expect,
                         verdicts))
    return out


def suite_kernel(ctx):
    order = min(ctx.order, 2)
    P, _ = kernel_double_transform(TruncatedSeries.const(1, ("z1", "z2")), ctx.curve, "xy", order)
    cleared, M = clear_pole(P)
    K = build_kernel(ctx.system(order), order)
    d = TruncatedSeries(("z1", "z2"), {(1, 0): 1, (0, 1): -1})
    rhs = K.E * (d ** (M - 1)).with_vars(K.E.vars)
    allv = tuple(dict.fromkeys(cleared.vars + rhs.vars))
    ok = (cleared.with_vars(allv) - rhs.with_vars(allv)).is_zero()
    return [Check("kernel", f"double transform of trivial dual kernel = TR kernel, order {order}",
                  ok, {"pole_power": M})]


def suite_frame(ctx):
    order = 1
    curve = ctx.curve
    phis = [phi_basis_integral(curve, i, order) for i in range(1, 5)]
    duals = [phi_basis_integral(curve, i, order, dual=True) for i in range(1, 5)]
    K = build_kernel(ctx.system(max(order, 1)), order)
    fr = frame_from_kernel(K, 4, order, dual_basis=duals)
    same = []
    for i in range(3):
        a, b = fr.vectors[i], phis[i]
        allv = tuple(dict.fromkeys(a.vars + b.vars))
        same.append((a.with_vars(allv) - b.with_vars(allv)).is_zero())
    pm = pairing_matrix(fr, 4)
    one = TruncatedSeries.const(1, ("h",)).truncate({"h": order})
    ident = all((pm[i][j] == one) if i == j else pm[i][j].is_zero()
                for i in range(4) for j in range(4))
    pl = plucker_check(tau_from_frame(fr, 4), 4)
    return [Check("frame", "kernel frame = Gaussian Phi_i, i<=3, order 1", all(same),
                  {"per_vector": same}),
            Check("frame", "pairing <Phi_i, Phi*_(1-j)> = identity, i,j<=4", ident),
            Check("frame", "Pluecker relations to degree 4", pl.passed,
                  {"relations": pl.relations, "failures": pl.failures[:3]})]


def planted_coordinate(eps=Fraction(2, 5)):
    return TruncatedSeries(("x",), {(1,): 1, (3,): Q(eps)})


def suite_semiclassical(ctx):
    spectrum = ad_spectrum_check(ctx.dmax)
    phi = planted_coordinate()
    order = 6
    B = pullback_kernel_defect(phi, "x", order - 2)
    nf = normalize_omega02(B, order)
    got = nf.coordinate.truncate({"x": order})
    ok = (got - phi.with_vars(got.vars).truncate({"x": order})).is_zero()
    failing = [[e["d"], e["i"]] for e in spectrum.entries if not e["holds"]]
    return [Check("semiclassical", f"A_d eigenvalues i(d-i), d<={ctx.dmax}", spectrum.passed,
                  {"failing": failing}),
            Check("semiclassical", "recovers planted z + (2/5) z^3 to order 6", ok,
                  {"coordinate": str(nf.coordinate)})]


def d_operator_curve():
    return SpectralCurve(laurent({1: 1}), laurent({-1: 1}), "x=z,y=1/z")


def suite_d_operator(ctx, degree=3):
    curve = d_operator_curve()
    order = degree
    dual = xy_swap(trivial_system(curve, order), order)
    lhs = tau_schur_coefficients(potential_from_system(dual, order, degree))
    rhs = apply_D_operator(tau_schur_coefficients(
        potential_from_system(trivial_system(curve, order), order, degree)))
    return [Check("d-operator", f"tau of swap image = D applied to trivial tau, degree {degree}",
                  lhs.equals(rhs))]


SUITE_FUNCS = {
    "gaussian": suite_gaussian, "moments": suite_moments, "roundtrip": suite_roundtrip,
    "swap": suite_swap, "kp": suite_kp, "kp-duality": suite_kp_duality, "kernel": suite_kernel,
    "frame": suite_frame, "semiclassical": suite_semiclassical, "d-operator": suite_d_operator,
}


class Context:
    """Lazily computed curve and systems shared between suites."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.order = cfg.order
        self.n_max = cfg.n_max
        self.dmax = cfg.dmax
        self._curve = None
        self._systems = {}

    @property
    def curve(self):
        if self._curve is None:
            self._curve = build_curve(self.cfg)
        return self._curve

    def system(self, order=None):
        return _system(self.curve, self.order if order is None else order, self._systems)


def run_suites(cfg):
    ctx = Context(cfg)
    names = list(SUITES) if "all" in cfg.suite else list(dict.fromkeys(cfg.suite))
    checks = []
    for name in names:
        t = time.perf_counter()
        got = SUITE_FUNCS[name](ctx)
        dt = time.perf_counter() - t
        for c in got:
            c.seconds = round(dt / len(got), 3)
        checks.extend(got)
    return checks


def report_json(cfg, checks):
    first = next((c for c in checks if not c.passed), None)
    return {"format": FORMAT, "config": cfg.describe(),
            "status": "PASS" if first is None else "FAIL",
            "first_failure": None if first is None else {"suite": first.suite, "check": first.name,
                                                         "detail": first.detail},
            "checks": [{"suite": c.suite, "check": c.name, "passed": c.passed,
                        "detail": c.detail} for c in checks]}


def cmd_verify(cfg, stdout=sys.stdout):
    checks = run_suites(cfg)
    rep = report_json(cfg, checks)
    if cfg.json:
        stdout.write(canonical(rep))
    else:
        for c in checks:
            print(f"{'PASS' if c.passed else 'FAIL'}  [{c.suite}] {c.name}  ({c.seconds:.2f}s)",
                  file=stdout)
            if not c.passed:
                print(f"      {json.dumps(c.detail, default=str)}", file=stdout)
        print(f"overall: {rep['status']}", file=stdout)
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(canonical(rep))
    return EXIT_OK if rep["status"] == "PASS" else EXIT_CHECK


# ------------------------------------------------------------------ parsing

def _csv(s):
    return [p.strip() for p in s.split(",") if p.strip()]


def build_parser():
    p = argparse.ArgumentParser(prog="xyswap", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--preset", default="higher-bgw", choices=PRESETS)
    common.add_argument("--r", type=int, default=2)
    common.add_argument("--epsilon", type=int, default=None,
                        help="truncation order of the formal eps (deformed-bgw)")
    common.add_argument("--curve", dest="curve_file", metavar="FILE",
                        help="custom curve JSON; overrides --preset")
    common.add_argument("--order", type=int, default=2, help="hbar order")
    common.add_argument("--n-max", type=int, default=3)
    common.add_argument("--threads", type=int, default=1,
                        help="accepted for compatibility; work runs in one thread")
    common.add_argument("--out", metavar="DIR")
    common.add_argument("--explain", action="store_true", help="describe the curve conventions")
    sub = p.add_subparsers(dest="command", required=True)
    c = sub.add_parser("compute", parents=[common], help="write JSON artifacts")
    c.add_argument("--emit", type=_csv, default=["system"], metavar="LIST",
                   help=f"comma list from {','.join(EMITS)}")
    v = sub.add_parser("verify", parents=[common], help="run check suites")
    v.add_argument("--suite", type=_csv, default=["all"], metavar="NAME",
                   help=f"comma list from all,{','.join(SUITES)}")
    v.add_argument("--dmax", type=int, default=8)
    v.add_argument("--json", action="store_true", help="print the JSON report")
    return p


def config_from_args(ns):
    d = vars(ns).copy()
    return JobConfig(**{k: v for k, v in d.items() if k in JobConfig.__dataclass_fields__})


def main(argv=None, stdout=None):
    stdout = stdout or sys.stdout
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = config_from_args(ns).validate()
        if cfg.explain:
            key = "custom" if cfg.curve_file else cfg.preset
            print(EXPLAIN[key], file=stdout)
        if cfg.command == "compute":
            return cmd_compute(cfg, stdout)
        return cmd_verify(cfg, stdout)
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        print(f"xyswap: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MATH_ERRORS as exc:
        print(f"xyswap: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_MATH


if __name__ == "__main__":
    sys.exit(main())
