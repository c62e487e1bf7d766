"""Lyapunov monitors, heteroclinic-cycle certificates, switching recurrences,
conservation laws and elimination/basin measurements along trajectories."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dynamics import (
    BEST_RESPONSE,
    DynamicsError,
    DynamicsSpec,
    FCatalog,
    best_responses,
    excess_payoffs,
    growth_rates,
)
from .game import ExtendedGame, Game, as_strategy, payoff_matrix, vertex
from .integrate import BRTrajectory, HypothesisError, IntegrationError, Trajectory, integrate_br, integrate_smooth
from .lp import LinearProgram, LPStatus, solve

# Horizons after which elimination of strategy 4 is judged.
DEFAULT_HORIZON = {"best_response": 40.0, "replicator": 150.0, "monotonic_exp": 150.0, "bnn": 200.0}
DEFAULT_THRESHOLD = 1e-8


class AnalysisError(ValueError):
    pass


# --- vanishing functions of the attractors --------------------------------


def shapley_v(u, x):
    """Largest payoff among strategies 1-3 minus the diagonal-weighted payoff.

    Works on object arrays of mpmath numbers as well as floats.
    """
    u = payoff_matrix(u)
    p = u.dot(x)
    return max(p[:3]) - np.diag(u).dot(x)


def shapley_w(u, x):
    """Zero exactly on the Shapley triangle of the BR dynamics."""
    return max(x[3], abs(shapley_v(u, x)))


def v0(u0, x) -> float:
    """Half the sum of squared excess payoffs in the reference game."""
    k = excess_payoffs(u0, x).k
    return 0.5 * float(k @ k)


def vapp(x) -> float:
    """``3 (x1 x2 x3)^(1/3) / (x1 + x2 + x3)``: 1 on the equilibrium segment, 0 on the RPS boundary."""
    s = x[0] + x[1] + x[2]
    if s <= 0:
        return float("nan")
    return 3.0 * np.cbrt(x[0] * x[1] * x[2]) / s


def gamma_residual(x) -> float:
    """Vanishes exactly on the heteroclinic cycle (x4 = 0 and x1 x2 x3 = 0)."""
    return max(float(x[3]), float(np.cbrt(x[0] * x[1] * x[2])))


@dataclass(frozen=True)
class LyapunovRecord:
    V: float
    W: float
    V0: float
    Vapp: float | None
    gamma_residual: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def lyapunov_values(u, u0, x) -> LyapunovRecord:
    """All monitors at ``x``; ``Vapp`` is None at the vertex e4 where it is undefined."""
    u = payoff_matrix(u)
    x = as_strategy(x, u.shape[0])
    v = float(shapley_v(u, x))
    va = None if x[0] + x[1] + x[2] == 0 else float(vapp(x))
    return LyapunovRecord(
        V=v, W=max(float(x[3]), abs(v)), V0=v0(u0, x), Vapp=va, gamma_residual=gamma_residual(x)
    )


# --- BNN ------------------------------------------------------------------


def bnn_lyapunov(u0, x, f: FCatalog = FCatalog()) -> float:
    """``sum_i F(k_i)`` with ``F`` the antiderivative of ``f`` (``V0`` for identity f)."""
    return float(np.sum(f.antiderivative(excess_payoffs(u0, x).k)))


def bnn_lyapunov_derivative(u0, x, f: FCatalog = FCatalog()) -> float:
    """Time derivative of :func:`bnn_lyapunov` along the (generalized) BNN field of ``u0``.

    With ``fbar = sum f(k_i)`` and ``q = f(k) / fbar`` this is
    ``fbar^2 [(q - x).U0(q - x) - (q - x).U0 x]``; 0 at rest points.
    """
    u0 = payoff_matrix(u0)
    x = np.asarray(x, dtype=float)
    fk = f(excess_payoffs(u0, x).k)
    fbar = float(fk.sum())
    if fbar == 0:
        return 0.0
    d = fk / fbar - x
    return fbar**2 * float(d @ u0 @ d - d @ u0 @ x)


def bnn_q_form(u0, x, f: FCatalog = FCatalog()) -> float:
    """``(q - e4).U0(q - e4)`` for the normalized responses ``q``; nan at rest points."""
    u0 = payoff_matrix(u0)
    fk = f(excess_payoffs(u0, x).k)
    if fk.sum() == 0:
        return float("nan")
    d = fk / fk.sum() - vertex(3, u0.shape[0])
    return float(d @ u0 @ d)


def on_segment_e0(x, tol: float = 1e-12) -> bool:
    """Whether ``x`` lies on the segment from (1/3, 1/3, 1/3, 0) to e4."""
    m = (1.0 - x[3]) / 3.0
    return bool(np.all(np.abs(np.asarray(x[:3]) - m) <= tol))


# --- heteroclinic cycle certificates --------------------------------------


@dataclass(frozen=True)
class CharMatrix:
    """``c[i, j] = g_j(e_i)`` for i in the cycle vertices 1-3."""

    c: np.ndarray

    def to_list(self):
        return self.c.tolist()


@dataclass(frozen=True)
class Certificate:
    p: np.ndarray | None
    slack: float

    @property
    def exists(self) -> bool:
        return self.p is not None

    def to_dict(self) -> dict:
        return {"p": None if self.p is None else self.p.tolist(), "slack": self.slack}


def characteristic_matrix(spec: DynamicsSpec, u) -> CharMatrix:
    u = payoff_matrix(u)
    if not spec.face_invariant:
        raise DynamicsError(f"characteristic matrix needs growth rates; {spec.kind} has none")
    n = u.shape[0]
    c = np.array([growth_rates(spec, u, vertex(i, n)) for i in range(3)])
    return CharMatrix(c)


def hofbauer_certificate(c: CharMatrix | np.ndarray, min_slack: float = 1e-9) -> Certificate:
    """Search ``p >= 1`` with ``C p <= -s`` maximizing ``s <= 1``.

    A certificate exists iff the optimal ``s`` exceeds ``min_slack``.
    """
    C = np.asarray(c.c if isinstance(c, CharMatrix) else c, dtype=float)
    m, n = C.shape
    # variables: p_1..p_n, s
    lp = LinearProgram(np.r_[np.zeros(n), 1.0], maximize=True)
    for row in C:
        lp.add_row(np.r_[row, 1.0], "<=", 0.0)
    lower = np.r_[np.ones(n), -np.inf]
    upper = np.r_[np.full(n, np.inf), 1.0]
    lp.lower, lp.upper = lower, upper
    out = solve(lp)
    if out.status is not LPStatus.OPTIMAL:
        raise AnalysisError(f"certificate LP returned {out.status.value}")
    s = float(out.x[-1])
    if s > min_slack:
        return Certificate(p=out.x[:n].copy(), slack=s)
    return Certificate(p=None, slack=s)


def boundary_certificate(c: CharMatrix) -> np.ndarray:
    """``C_hat p_hat`` for the 3x3 cycle block and ``p_hat = (1/3, 1/3, 1/3)``;
    all entries negative is the LP-checkable part of stability within the boundary."""
    return np.asarray(c.c)[:, :3] @ np.full(3, 1.0 / 3.0)


def vertex_inequality_check(spec: DynamicsSpec, u) -> bool:
    """``g4(e_i) < 0`` and ``0 < g_{i+1}(e_i) < -g_{i-1}(e_i)`` for i = 1, 2, 3."""
    c = characteristic_matrix(spec, u).c
    for i in range(3):
        nxt, prv = (i + 1) % 3, (i - 1) % 3
        if not (c[i, 3] < 0 and 0 < c[i, nxt] < -c[i, prv]):
            return False
    return True


# --- best-response switching ----------------------------------------------


def cycle_coefficients(u) -> tuple[np.ndarray, np.ndarray]:
    """``alpha_i = u_ii - u_{i-1,i}`` and ``beta_i = u_{i+1,i} - u_ii`` (indices mod 3)."""
    u = payoff_matrix(u)
    a = np.array([u[i, i] - u[(i - 1) % 3, i] for i in range(3)])
    b = np.array([u[(i + 1) % 3, i] - u[i, i] for i in range(3)])
    return a, b


def gap_map(g: float, alpha, beta) -> float:
    """Payoff spread one full cycle later, labels starting at the new best response."""
    a1, a2, a3 = alpha
    b1, b2, b3 = beta
    return a1 * a2 * a3 * g / (b1 * b2 * b3 + g * (a1 * a2 + a1 * b3 + b2 * b3))


def gap_fixed_point(u) -> float:
    a, b = cycle_coefficients(u)
    return float((a.prod() - b.prod()) / (a[0] * a[1] + a[0] * b[2] + b[1] * b[2]))


@dataclass(frozen=True)
class GapRecord:
    k: int
    t: float
    strategy: int
    g_value: float
    predicted_next: float
    measured_next: float | None


def switching_gaps(traj: BRTrajectory, u=None) -> list[GapRecord]:
    """Payoff spread among strategies 1-3 at each switch, with the recurrence's
    prediction for the spread when the same strategy next becomes best."""
    u = traj.u if u is None else payoff_matrix(u)
    a, b = cycle_coefficients(u)
    if np.any(a <= 0) or np.any(b <= 0):
        raise AnalysisError(f"cycle coefficients must be positive: alpha={a}, beta={b}")
    values, strategies = [], []
    for ev in traj.events:
        p = u[:3] @ traj.state(ev.t)
        values.append(float(p.max() - p.min()))
        (j,) = ev.new
        strategies.append(j)
    out = []
    for k, (gv, j) in enumerate(zip(values, strategies)):
        if j > 2:
            raise AnalysisError(f"switch to strategy {j + 1} is outside the cycle")
        rot = [(j + r) % 3 for r in range(3)]
        pred = gap_map(gv, a[rot], b[rot])
        nxt = values[k + 3] if k + 3 < len(values) else None
        out.append(GapRecord(k, float(traj.events[k].t), j, gv, pred, nxt))
    return out


def improvement_check(traj: BRTrajectory, u=None, tol: float = 1e-12) -> bool:
    """Each newcomer ``b'`` earns at least ``b.Ub`` against the vertex ``b`` it replaces,
    strictly when it was not already best at the segment start."""
    u = traj.u if u is None else payoff_matrix(u)
    for seg, ev in zip(traj.segments, traj.events):
        (old,) = ev.old
        (new,) = ev.new
        gain = u[new, old] - u[old, old]
        if gain < -tol:
            return False
        start_br = best_responses(u, np.asarray(seg.x0, dtype=float))
        if new not in start_br and not gain > 0:
            return False
    return True


def switch_gaps_in_time(traj: BRTrajectory, burn_in: float = 0.0) -> float:
    """Shortest time between consecutive switches after ``burn_in``."""
    t = traj.switch_times
    t = t[t >= burn_in]
    return float(np.diff(t).min()) if t.size > 1 else float("inf")


# --- elimination and conservation -----------------------------------------


@dataclass(frozen=True)
class EliminationVerdict:
    eliminated: bool
    final_mass: float
    fitted_rate: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _samples(traj):
    if isinstance(traj, BRTrajectory):
        t, x = traj.sample(stride=traj.horizon / 400)
        return t, x
    return traj.t, traj.x


def elimination_status(traj: Trajectory | BRTrajectory, i: int, threshold: float = DEFAULT_THRESHOLD) -> EliminationVerdict:
    """Final share of strategy ``i`` and the log-linear decay rate over the last third."""
    if not 0 < threshold < 1:
        raise AnalysisError("threshold must lie in (0, 1)")
    t, x = _samples(traj)
    if len(t) < 10:
        raise AnalysisError(f"need at least 10 samples, got {len(t)}")
    final = float(traj.final()[i]) if isinstance(traj, BRTrajectory) else float(x[-1, i])
    tail = slice(len(t) - len(t) // 3, None)
    tt, xi = t[tail], x[tail, i]
    keep = xi > 0
    rate = float("nan")
    if np.count_nonzero(keep) >= 2:
        rate = float(np.polyfit(tt[keep], np.log(xi[keep]), 1)[0])
    return EliminationVerdict(eliminated=final < threshold, final_mass=final, fitted_rate=rate)


class ConservationError(AnalysisError):
    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


def conservation_check(traj: Trajectory, g: ExtendedGame, floor: float = 1e-6) -> float:
    """Largest relative residual of ``x'_k(T) = x'_k(0) prod_i (x'_i(T)/x'_i(0))^(p^k_i)``
    over the added types ``k`` and all sample times."""
    nb = g.base.n
    x = traj.x
    low = np.nonzero(x[:, :nb].min(axis=1) <= floor)[0]
    if low.size:
        raise ConservationError(
            f"a base share fell to {x[low[0], :nb].min():.3g} at t={traj.t[low[0]]:.6g}", traj.t[low[0]]
        )
    if g.n == nb:
        return 0.0
    logs = np.log(x[:, :nb] / x[0, :nb])
    worst = 0.0
    for k in range(nb, g.n):
        pred = x[0, k] * np.exp(logs @ g.strategies[k])
        worst = max(worst, float(np.max(np.abs(x[:, k] - pred) / x[:, k])))
    return worst


# --- basins ---------------------------------------------------------------


def sample_simplex(n: int, count: int, seed: int) -> np.ndarray:
    """Uniform points of the simplex: normalized standard exponentials drawn
    from numpy's PCG64 generator seeded with ``seed``."""
    rng = np.random.default_rng(seed)
    e = rng.standard_exponential((count, n))
    return e / e.sum(axis=1, keepdims=True)


def _filter_fn(name, u):
    if name is None:
        return None
    if callable(name):
        return lambda x: bool(name(u, x))
    if name == "br_singleton_not4":
        def ok(x):
            br = best_responses(u, x)
            return len(br) == 1 and 3 not in br
        return ok
    if name.startswith("x4>"):
        bound = float(name[3:])
        return lambda x: x[3] > bound
    if name.startswith("x4<="):
        bound = float(name[4:])
        return lambda x: x[3] <= bound
    raise AnalysisError(f"unknown filter {name!r}")


def draw_initial_conditions(u, count: int, seed: int, filt=None, batch: int = 4096, max_draws: int = 50_000_000):
    """``count`` seeded uniform points of the simplex passing ``filt`` (rejection sampling)."""
    u = payoff_matrix(u)
    n = u.shape[0]
    keep = _filter_fn(filt, u)
    rng = np.random.default_rng(seed)
    out, drawn = [], 0
    while len(out) < count:
        e = rng.standard_exponential((batch, n))
        xs = e / e.sum(axis=1, keepdims=True)
        drawn += batch
        for x in xs:
            if keep is None or keep(x):
                out.append(x)
                if len(out) == count:
                    break
        if drawn > max_draws:
            raise AnalysisError(f"filter {filt!r} accepted {len(out)} of {drawn} draws")
    return np.array(out)


@dataclass(frozen=True)
class BasinResult:
    fraction: float
    successes: int
    evaluated: int
    failures: int
    outcomes: tuple

    def to_dict(self) -> dict:
        return {
            "fraction": self.fraction,
            "successes": self.successes,
            "evaluated": self.evaluated,
            "failures": self.failures,
        }


def _basin_job(args):
    spec_d, u, x0, strategy, threshold, horizon, tol = args
    spec = DynamicsSpec.from_dict(spec_d)
    try:
        if spec.kind == BEST_RESPONSE:
            final = integrate_br(u, x0, horizon, strict=False).final()
        else:
            final = integrate_smooth(spec, u, x0, horizon, tol, stride=None).final
    except (IntegrationError, HypothesisError) as exc:
        return ("failed", str(exc))
    return ("eliminated" if final[strategy] < threshold else "survived", float(final[strategy]))


def basin_fraction(
    spec: DynamicsSpec,
    u,
    seed: int,
    count: int,
    filt: str | Callable | None = None,
    *,
    strategy: int = 3,
    threshold: float = DEFAULT_THRESHOLD,
    horizon: float | None = None,
    tol: float = 1e-8,
    jobs: int = 1,
) -> BasinResult:
    """Fraction of seeded uniform initial conditions (passing ``filt``) from
    which ``strategy`` falls below ``threshold`` by ``horizon``.

    Failed integrations are reported separately and left out of the fraction.
    Results are merged by sample index, so ``jobs`` never changes the output.
    """
    if count < 1:
        raise AnalysisError("count must be at least 1")
    u = payoff_matrix(u)
    horizon = DEFAULT_HORIZON[spec.kind] if horizon is None else horizon
    x0s = draw_initial_conditions(u, count, seed, filt)
    tasks = [(spec.to_dict(), u, x0, strategy, threshold, horizon, tol) for x0 in x0s]
    if jobs > 1 and not callable(filt):
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_basin_job, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        outcomes = [_basin_job(t) for t in tasks]
    failures = sum(1 for o in outcomes if o[0] == "failed")
    wins = sum(1 for o in outcomes if o[0] == "eliminated")
    evaluated = len(outcomes) - failures
    frac = wins / evaluated if evaluated else float("nan")
    return BasinResult(frac, wins, evaluated, failures, tuple(outcomes))
