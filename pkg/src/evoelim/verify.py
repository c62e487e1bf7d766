"""Named verification suites. Each suite returns :class:`CheckResult` records
whose ``passed`` flag compares a measured quantity with a fixed bound."""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from xml.sax.saxutils import escape, quoteattr

import mpmath
import numpy as np

from .analysis import (
    AnalysisError,
    ConservationError,
    basin_fraction,
    bnn_lyapunov,
    bnn_lyapunov_derivative,
    bnn_q_form,
    boundary_certificate,
    characteristic_matrix,
    conservation_check,
    draw_initial_conditions,
    elimination_status,
    gamma_residual,
    gap_fixed_point,
    hofbauer_certificate,
    sample_simplex,
    shapley_w,
    switching_gaps,
    v0,
    vapp,
    vertex_inequality_check,
)
from .dynamics import DynamicsSpec
from .equilibria import ce_mass_bounds, strategies_used_in_ce
from .game import Game, build_g0, build_rps4, extend_with_mixed, induce_strategy, random_perturbation
from .integrate import euler_br, integrate_br, integrate_smooth


@dataclass
class CheckResult:
    name: str
    criterion: int
    passed: bool
    measured: float
    bound: float
    detail: str = ""
    seconds: float = field(default=0.0, compare=False)

    def summary(self, timings: bool = False) -> dict:
        d = {"pass": bool(self.passed), "measured": self.measured, "bound": self.bound}
        if timings:
            d["seconds"] = round(self.seconds, 3)
        return d


@dataclass(frozen=True)
class Context:
    """Inputs shared by the suites: the main game, a seed and a worker cap."""

    game: Game
    seed: int = 0
    jobs: int = 1

    @property
    def epsilon(self) -> float:
        return float(self.game.meta.get("epsilon", 0.1))


def _pmap(fn, items, jobs):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def _check(name, criterion, measured, bound, le=True, detail=""):
    measured = float(measured)
    ok = measured <= bound if le else measured >= bound
    return CheckResult(name, criterion, bool(ok and not math.isnan(measured)), measured, float(bound), detail)


# 1. uniqueness of the correlated equilibrium -------------------------------

CE_GAMES = ((0.1, 0.1), (0.2, 0.1), (0.5, 0.05))


def suite_ce_uniqueness(ctx: Context) -> list[CheckResult]:
    low44, high_other, wrong = 1.0, 0.0, 0
    rng = np.random.default_rng(ctx.seed)
    for eps, a in CE_GAMES:
        g = build_rps4(eps, a)
        b = ce_mass_bounds(g)
        low44 = min(low44, b[3, 3])
        high_other = max(high_other, np.delete(b.ravel(), 15).max())
        for _ in range(20):
            if strategies_used_in_ce(random_perturbation(g, 1e-3, rng)) != {3}:
                wrong += 1
    return [
        _check("ce_bound_44", 1, 1.0 - low44, 1e-8, detail="1 - min over games of the (4,4) mass bound"),
        _check("ce_bound_other", 1, high_other, 1e-8, detail="largest mass bound on any other cell"),
        _check("ce_perturbed_support", 1, wrong, 0, detail="perturbed games whose CE use a strategy other than 4"),
    ]


# 2. elimination under best-response dynamics ------------------------------

BR_PRECISION = 50


def _br_laws(args):
    u, x0, horizon = args
    tr = integrate_br(u, x0, horizon, precision=BR_PRECISION)
    with mpmath.workdps(BR_PRECISION):
        xs = tr.initial(exact=True)
        xe = tr.final(exact=True)
        decay = mpmath.exp(-mpmath.mpf(horizon))
        x4_err = abs(xe[3] - xs[3] * decay) / (xs[3] * decay)
        w_ratio = shapley_w(u, xe) / (shapley_w(u, xs) * decay)
    return float(x4_err), float(w_ratio)


def suite_br_elimination(ctx: Context, count: int = 50, horizon: float = 40.0) -> list[CheckResult]:
    u = ctx.game.u
    x0s = draw_initial_conditions(u, count, ctx.seed, "br_singleton_not4")
    res = _pmap(_br_laws, [(u, x, horizon) for x in x0s], ctx.jobs)
    x4_err = max(r[0] for r in res)
    w_ratio = max(r[1] for r in res)
    return [
        _check("br_x4_law", 2, x4_err, 1e-9, detail="relative error of x4(t) = x4(0) exp(-t) at t=40"),
        _check("br_w_law", 2, w_ratio, 1 + 1e-6, detail="max W(x(40)) / (W(x(0)) exp(-40))"),
    ]


# 3. switching gaps ---------------------------------------------------------


def suite_switching_gaps(ctx: Context, count: int = 10, horizon: float = 60.0, burn_in: float = 5.0):
    u = ctx.game.u
    x0s = [np.array([0.7, 0.15, 0.1, 0.05])]
    x0s += list(draw_initial_conditions(u, count, ctx.seed, "br_singleton_not4"))
    gstar = gap_fixed_point(u)
    rel, late = 0.0, 0.0
    for x0 in x0s:
        recs = switching_gaps(integrate_br(u, x0, horizon))
        for r in recs:
            if r.t > burn_in and r.measured_next is not None:
                rel = max(rel, abs(r.predicted_next - r.measured_next) / r.measured_next)
        late = max(late, max(abs(r.g_value - gstar) for r in recs[-3:]))
    return [
        _check("gap_recurrence", 3, rel, 1e-6, detail="relative error of predicted vs measured gap after t=5"),
        _check("gap_fixed_point", 3, late, 1e-4, detail=f"late gaps vs fixed point {gstar:.6g}"),
        _check("gap_fixed_point_formula", 3, abs(gstar - (1 - ctx.epsilon)), 1e-12,
               detail="fixed point of the recurrence vs 1 - epsilon"),
    ]


# 4. stability certificates ---------------------------------------------------

EPS_GRID = tuple(round(0.05 * k, 2) for k in range(1, 11))
CERT_SPECS = (DynamicsSpec.replicator(), DynamicsSpec.monotonic_exp(0.5), DynamicsSpec.monotonic_exp(1.0))


def alpha_grid(eps: float, points: int = 5) -> tuple:
    top = (1 - eps) / 3
    return tuple(top * k / (points + 1) for k in range(1, points + 1))


def _grid():
    return [(e, a) for e in EPS_GRID for a in alpha_grid(e)]


def suite_certificate(ctx: Context) -> list[CheckResult]:
    out = []
    rng = np.random.default_rng(ctx.seed)
    perturbed = [random_perturbation(ctx.game, 1e-3, rng) for _ in range(20)]
    for spec in CERT_SPECS:
        missing, ineq_fail, boundary = 0, [], -math.inf
        for e, a in _grid():
            u = build_rps4(e, a)
            c = characteristic_matrix(spec, u)
            missing += not hofbauer_certificate(c).exists
            boundary = max(boundary, float(boundary_certificate(c).max()))
            if not vertex_inequality_check(spec, u):
                ineq_fail.append(f"({e:g},{a:.4g})")
        p_missing = sum(not hofbauer_certificate(characteristic_matrix(spec, g)).exists for g in perturbed)
        p_ineq = sum(not vertex_inequality_check(spec, g) for g in perturbed)
        lab = spec.label
        out += [
            _check(f"certificate[{lab}]", 4, missing, 0, detail="grid games without a certificate"),
            _check(f"boundary_certificate[{lab}]", 0, boundary, 0.0 - 1e-12,
                   detail="largest entry of C_hat p_hat over the grid (must be negative)"),
            _check(f"vertex_inequalities[{lab}]", 4, len(ineq_fail), 0,
                   detail="grid games failing: " + (" ".join(ineq_fail) or "none")),
            _check(f"certificate_perturbed[{lab}]", 4, p_missing + p_ineq, 0,
                   detail="perturbed games failing the certificate or the vertex inequalities"),
        ]
    return out


# 5. replicator attraction -------------------------------------------------


def _rep_end(args):
    u, x0, horizon, tol = args
    return gamma_residual(integrate_smooth(DynamicsSpec.replicator(), u, x0, horizon, tol, stride=None).final)


def _vapp_increase(args):
    u0, x0, horizon = args
    tr = integrate_smooth(DynamicsSpec.replicator(), u0, x0, horizon, 1e-10, stride=0.1)
    return float(np.diff([vapp(x) for x in tr.x]).max())


def suite_replicator_gamma(ctx: Context, count: int = 20, horizon: float = 150.0) -> list[CheckResult]:
    u = ctx.game.u
    x0s = draw_initial_conditions(u, count, ctx.seed, "x4<=0.2")
    ends = _pmap(_rep_end, [(u, x, horizon, 1e-9) for x in x0s], ctx.jobs)
    u0 = build_g0(ctx.epsilon).u
    inc = _pmap(_vapp_increase, [(u0, x, 100.0) for x in sample_simplex(4, 10, ctx.seed)], ctx.jobs)
    return [
        _check("replicator_gamma_residual", 5, max(ends), 1e-3, detail="largest gamma residual at t=150"),
        _check("replicator_vapp_decreasing", 5, max(inc), 0.0 - 1e-300,
               detail="largest one-sample change of Vapp on reference-game runs (must be negative)"),
    ]


# 6. BNN elimination ----------------------------------------------------------

BNN_GAME = (0.1, 0.01)
BNN_FS = (("identity", 1.0), ("power", 2.0), ("sqrt", 1.0))


def _bnn_end(args):
    spec_d, u, x0 = args
    tr = integrate_smooth(DynamicsSpec.from_dict(spec_d), u, x0, 200.0, 1e-9, stride=1.0)
    v = elimination_status(tr, 3)
    return float(tr.final[3]), v.fitted_rate


def _bnn_derivative(args):
    """Worst relative error of the derivative formula against centered differences
    of the Lyapunov function, and the smallest q-form value off the equilibrium segment."""
    spec_d, u0, x0, h = args
    spec = DynamicsSpec.from_dict(spec_d)
    tr = integrate_smooth(spec, u0, x0, 20.0, 1e-12, stride=0.5)
    worst, qmin, n = 0.0, math.inf, 0
    for y in tr.x[1:]:
        if v0(u0, y) > 1e-16:
            qmin = min(qmin, bnn_q_form(u0, y, spec.f))
        w = integrate_smooth(spec, u0, y, 2 * h, 1e-12, stride=h).x
        fd = (bnn_lyapunov(u0, w[2], spec.f) - bnn_lyapunov(u0, w[0], spec.f)) / (2 * h)
        an = bnn_lyapunov_derivative(u0, w[1], spec.f)
        if abs(an) > 1e-6:
            n += 1
            worst = max(worst, abs(fd - an) / abs(an))
    return worst, qmin, n


def suite_bnn_elimination(ctx: Context, count: int = 20) -> list[CheckResult]:
    eps, a = BNN_GAME
    u = build_rps4(eps, a).u
    u0 = build_g0(eps).u
    x0s = draw_initial_conditions(u, count, ctx.seed, lambda _u, x: v0(u0, x) >= 0.01)
    out = []
    for tag, p in BNN_FS:
        spec = DynamicsSpec.bnn(tag, p)
        ends = _pmap(_bnn_end, [(spec.to_dict(), u, x) for x in x0s], ctx.jobs)
        worst_x4 = max(e[0] for e in ends)
        slowest = max(e[1] for e in ends)
        der = _pmap(_bnn_derivative, [(spec.to_dict(), u0, x, 1e-4) for x in x0s[:10]], ctx.jobs)
        lab = spec.label
        out += [
            _check(f"bnn_x4_t200[{lab}]", 6, worst_x4, 1e-4,
                   detail=f"largest x4(200); slowest fitted log-rate {slowest:.4g}"),
            _check(f"bnn_lyapunov_derivative[{lab}]", 6, max(d[0] for d in der), 1e-3,
                   detail=f"relative error vs centered differences at {sum(d[2] for d in der)} points"),
            _check(f"bnn_q_bound[{lab}]", 6, min(d[1] for d in der), (1 - eps) / 18, le=False,
                   detail="smallest (q - e4).U0(q - e4) off the equilibrium segment"),
        ]
    return out


# 7. mixed-strategy extension -------------------------------------------------

EXTRAS = ((0.25, 0.25, 0.25, 0.25), (0.0, 0.0, 0.5, 0.5), (1 / 3, 1 / 3, 1 / 3, 0.0))


def _near_cycle(n, count, seed, weight=0.05):
    rng = np.random.default_rng(seed)
    out = []
    for noise in sample_simplex(n, count, seed + 1):
        i, s = int(rng.integers(3)), rng.uniform()
        b = np.zeros(n)
        b[i], b[(i + 1) % 3] = s, 1 - s
        out.append((1 - weight) * b + weight * noise)
    return out


def suite_extension(ctx: Context, count: int = 10, extras=None) -> list[CheckResult]:
    g = ctx.game
    ext = extend_with_mixed(g, EXTRAS if extras is None else extras)
    rep = DynamicsSpec.replicator()
    # (a) BR in the extension projects onto BR in the base game
    sup = 0.0
    for x0 in draw_initial_conditions(ext.u, count, ctx.seed, "br_singleton_not4"):
        big = integrate_br(ext.u, x0, 20.0)
        small = integrate_br(g.u, induce_strategy(ext, x0), 20.0)
        t, xs = big.sample(0.05, include_events=True)
        for ti, xi in zip(t, xs):
            sup = max(sup, float(np.abs(xi @ ext.strategies - small.state(ti)).max()))
    # (b) conservation law of the replicator
    resid = 0.0
    for x0 in sample_simplex(ext.n, count, ctx.seed):
        tr = integrate_smooth(rep, ext, x0, 10.0, 1e-10, stride=0.1)
        try:
            resid = max(resid, conservation_check(tr, ext))
        except ConservationError:
            resid = math.inf
            break
    # (c) types putting weight on strategy 4 vanish near the cycle
    uses4 = [k for k in range(ext.n) if ext.strategies[k, 3] > 0]
    worst = 0.0
    for x0 in _near_cycle(ext.n, count, ctx.seed):
        xf = integrate_smooth(rep, ext, x0, 150.0, 1e-9, stride=None).final
        worst = max(worst, float(xf[uses4].max()))
    return [
        _check("extension_br_projection", 7, sup, 1e-6, detail="sup-norm gap between projected and base BR paths"),
        _check("extension_conservation", 7, resid, 1e-5, detail="largest relative residual of the conservation law"),
        _check("extension_elimination", 7, worst, 1e-6,
               detail="largest final share of a type using strategy 4 (1-based types "
               + ",".join(str(k + 1) for k in uses4) + ")"),
    ]


# 8. independent oracles ------------------------------------------------------

HALVING_SPECS = (
    DynamicsSpec.replicator(),
    DynamicsSpec.monotonic_exp(1.0),
    DynamicsSpec.bnn(),
    DynamicsSpec.bnn("power", 2.0),
)


def _halving(spec, u, x0, horizon, tol):
    a = integrate_smooth(spec, u, x0, horizon, tol, stride=None).final
    b = integrate_smooth(spec, u, x0, horizon, tol / 2, stride=None).final
    return float(np.abs(a - b).max()) / tol


def suite_oracles(ctx: Context, count: int = 10, tol: float = 1e-9) -> list[CheckResult]:
    u = ctx.game.u
    sup = 0.0
    for x0 in draw_initial_conditions(u, count, ctx.seed, "br_singleton_not4"):
        exact = integrate_br(u, x0, 10.0)
        t, xe = euler_br(u, x0, 10.0, dt=1e-4, stride=0.01)
        xs = np.array([exact.state(s) for s in t])
        sup = max(sup, float(np.abs(xs - xe).max()))
    x0 = np.array([0.5, 0.3, 0.19, 0.01])
    halving = max(_halving(s, u, x0, 50.0, tol) for s in HALVING_SPECS)
    sqrt_halving = _halving(DynamicsSpec.bnn("sqrt"), u, x0, 50.0, tol)
    orders = 0.0
    for s in HALVING_SPECS:
        a = integrate_smooth(s, u, x0, 50.0, 1e-10, stride=None).final
        b = integrate_smooth(s, u, x0, 50.0, 1e-10, stride=None, method="bs32").final
        orders = max(orders, float(np.abs(a - b).max()))
    return [
        _check("br_vs_euler", 8, sup, 1e-3, detail="sup-norm over [0,10], Euler step 1e-4"),
        _check("rk_tolerance_halving", 8, halving, 10.0,
               detail=f"endpoint change / tol at t=50 (Lipschitz fields); sqrt BNN for reference: {sqrt_halving:.3g}"),
        _check("rk_order_agreement", 8, orders, 1e-6, detail="5(4) vs 3(2) pair endpoints at tol 1e-10"),
    ]


# 9. basin examples (not an acceptance criterion) -----------------------------


def suite_basin(ctx: Context) -> list[CheckResult]:
    br = DynamicsSpec.best_response()
    inside = basin_fraction(br, ctx.game, ctx.seed, 200, "br_singleton_not4", jobs=ctx.jobs)
    near4 = basin_fraction(br, ctx.game, ctx.seed, 50, "x4>0.95", jobs=ctx.jobs)
    return [
        _check("basin_br_not4", 0, 1.0 - inside.fraction, 0.0, detail="1 - fraction eliminating 4"),
        _check("basin_br_near_e4", 0, near4.fraction, 0.0, detail="fraction eliminating 4 near e4"),
    ]


SUITES = {
    "ce_uniqueness": suite_ce_uniqueness,
    "br_elimination": suite_br_elimination,
    "switching_gaps": suite_switching_gaps,
    "certificate": suite_certificate,
    "replicator_gamma": suite_replicator_gamma,
    "bnn_elimination": suite_bnn_elimination,
    "extension": suite_extension,
    "oracles": suite_oracles,
    "basin": suite_basin,
}
ACCEPTANCE_SUITES = tuple(list(SUITES)[:8])


def run_suites(names, ctx: Context) -> list[CheckResult]:
    if "all" in names:
        names = list(SUITES)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise AnalysisError(f"unknown suite(s) {unknown}; choose from {sorted(SUITES)} or 'all'")
    out = []
    for name in names:
        t0 = time.perf_counter()
        res = SUITES[name](ctx)
        dt = time.perf_counter() - t0
        for r in res:
            r.seconds = dt
        out += res
    return out


def summary(results, timings: bool = False) -> dict:
    return {r.name: r.summary(timings) for r in results}


def junit_xml(results, suite_name: str = "evoelim.verify", timings: bool = False) -> str:
    fails = sum(not r.passed for r in results)
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<testsuite name={quoteattr(suite_name)} tests="{len(results)}" failures="{fails}" errors="0">',
    ]
    for r in results:
        t = f' time="{r.seconds:.3f}"' if timings else ""
        head = f"  <testcase classname=\"criterion{r.criterion}\" name={quoteattr(r.name)}{t}"
        msg = f"measured={r.measured!r} bound={r.bound!r} {r.detail}"
        if r.passed:
            lines.append(head + f"><system-out>{escape(msg)}</system-out></testcase>")
        else:
            lines.append(head + f"><failure message={quoteattr(msg)}/></testcase>")
    lines.append("</testsuite>")
    return "\n".join(lines) + "\n"
