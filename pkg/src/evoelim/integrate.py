"""Trajectories on the simplex.

Smooth fields use an embedded Runge-Kutta pair with local error control,
clamping and renormalizing onto the simplex after every accepted step.
Best-response dynamics is solved exactly: between switches the state moves
straight toward a vertex, ``x(t) = b + (x0 - b) exp(-(t - t0))``, so each
switch time is the root of ``A + B exp(-s)`` and has a closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import mpmath
import numpy as np

from .dynamics import BEST_RESPONSE, BNN, DynamicsSpec, best_responses, bnn_field_on, excess, field
from .game import as_strategy, payoff_matrix

MIN_STEP = 1e-14
MAX_SWITCHES = 1_000_000


class IntegrationError(RuntimeError):
    """Integration could not proceed; ``partial`` holds what was computed."""

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


class HypothesisError(ValueError):
    """The initial condition is outside the class the BR solver handles."""


# Butcher tableaux: (c, A, b_high, b_low, low order)
_DOPRI5 = (
    np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1]),
    np.array(
        [
            [0, 0, 0, 0, 0, 0],
            [1 / 5, 0, 0, 0, 0, 0],
            [3 / 40, 9 / 40, 0, 0, 0, 0],
            [44 / 45, -56 / 15, 32 / 9, 0, 0, 0],
            [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0, 0],
            [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0],
            [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
        ]
    ),
    np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0]),
    np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]),
    4,
)
_BS32 = (
    np.array([0, 1 / 2, 3 / 4, 1]),
    np.array([[0, 0, 0], [1 / 2, 0, 0], [0, 3 / 4, 0], [2 / 9, 1 / 3, 4 / 9]]),
    np.array([2 / 9, 1 / 3, 4 / 9, 0]),
    np.array([7 / 24, 1 / 4, 1 / 3, 1 / 8]),
    2,
)
METHODS = {"dopri5": _DOPRI5, "bs32": _BS32}


@dataclass
class Trajectory:
    """Sampled solution of a smooth dynamics; ``x[k]`` is the state at ``t[k]``."""

    spec: DynamicsSpec
    u: np.ndarray
    t: np.ndarray
    x: np.ndarray
    stats: dict = dc_field(default_factory=dict)

    @property
    def final(self) -> np.ndarray:
        return self.x[-1]

    def component(self, i: int) -> np.ndarray:
        return self.x[:, i]

    def __len__(self):
        return len(self.t)


def _output_times(horizon, stride):
    if stride is None:
        return None
    n = int(math.floor(horizon / stride + 1e-9))
    ts = stride * np.arange(1, n + 1)
    ts = ts[ts < horizon - 1e-12 * max(1.0, horizon)]
    return np.append(ts, horizon)


def integrate_smooth(
    spec: DynamicsSpec,
    g,
    x0,
    horizon: float,
    tol: float = 1e-9,
    *,
    stride: float | None = 0.1,
    method: str = "dopri5",
    atol: float | None = None,
    max_steps: int = 10_000_000,
) -> Trajectory:
    """Integrate a smooth dynamics from ``x0`` over ``[0, horizon]``.

    Steps are chosen so the local error estimate stays below
    ``atol + tol * |x_i|`` componentwise. Fields of the form ``x_i g_i``
    default to ``atol = 1e-300`` (pure relative control), which keeps tiny
    shares accurate near the boundary; BNN fields default to ``atol = tol``.
    Samples are taken every ``stride`` time units (every accepted step if
    ``stride`` is None); steps are shortened to land on sample times.
    """
    if spec.kind == BEST_RESPONSE:
        raise ValueError("best-response dynamics is handled by integrate_br")
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if not 1e-12 <= tol <= 1e-3:
        raise ValueError("tol must lie in [1e-12, 1e-3]")
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {sorted(METHODS)}")
    u = payoff_matrix(g)
    n = u.shape[0]
    x = as_strategy(x0, n)
    if atol is None:
        atol = 1e-300 if spec.face_invariant else tol
    c, A, b_hi, b_lo, q = METHODS[method]
    db = b_hi - b_lo
    s = len(c)

    outs = _output_times(horizon, stride)
    ts, xs = [0.0], [x.copy()]
    stats = {"steps": 0, "rejected_steps": 0, "switches": 0, "max_simplex_drift": 0.0, "method": method}

    def partial():
        return Trajectory(spec, u, np.array(ts), np.array(xs), dict(stats))

    # BNN is only piecewise smooth: its field has kinks where a strategy's
    # payoff crosses the mean. Within a step the set of such strategies is
    # frozen (the field is then smooth) and steps end exactly on crossings.
    switching = spec.kind == BNN
    active = excess(u, x) > 0 if switching else None

    def fld(y):
        return bnn_field_on(spec, u, y, active) if switching else field(spec, u, y)

    K = np.zeros((s, n))

    def step(h):
        K[0] = f0
        for i in range(1, s):
            K[i] = fld(x + h * (A[i, :i] @ K[:i]))
        x_new = x + h * (b_hi @ K)
        sc = atol + tol * np.maximum(np.abs(x), np.abs(x_new))
        err = float(np.max(np.abs(h * (db @ K)) / sc))
        return x_new, (err if np.isfinite(err) else 1e10)

    def crossed(y):
        e = excess(u, y)
        return np.nonzero(np.where(active, e < 0, e > 0))[0]

    def first_crossing(h, idx):
        # bracketed secant (Illinois) on the smallest signed excess among idx
        sgn = np.where(active[idx], 1.0, -1.0)

        def phi(hh):
            return float(np.min(sgn * excess(u, step(hh)[0])[idx]))

        a, fa = 0.0, max(float(np.min(sgn * excess(u, x)[idx])), 0.0)
        b, fb = h, phi(h)
        side = 0
        while b - a > 1e-9 * h + 1e-15:
            c = b - fb * (b - a) / (fb - fa) if fb != fa else 0.5 * (a + b)
            if not a < c < b:
                c = 0.5 * (a + b)
            fc = phi(c)
            if fc > 0:
                a, fa = c, fc
                if side == -1:
                    fb *= 0.5
                side = -1
            else:
                b, fb = c, fc
                if side == 1:
                    fa *= 0.5
                side = 1
        return b

    f0 = fld(x)
    d0 = float(np.max(np.abs(f0) / (atol + tol * np.abs(x))))
    h_nat = 0.01 * horizon if d0 == 0 else min(0.1 * horizon, 0.1 * d0 ** (-1.0 / (q + 1)))
    h_nat = max(h_nat, 1e-6 * min(1.0, horizon))
    t = 0.0
    next_out = 0
    while t < horizon:
        target = horizon if outs is None else outs[next_out]
        h = h_nat
        clipped = t + h >= target - 1e-13 * max(1.0, target)
        if clipped:
            h = target - t
        x_new, err = step(h)
        if err <= 1.0:
            shortened = False
            if switching:
                idx = crossed(x_new)
                if idx.size:
                    hc = first_crossing(h, idx)
                    if hc < h:
                        h, clipped, shortened = hc, False, True
                        x_new, _ = step(h)
                    stats["switches"] += 1
            stats["steps"] += 1
            drift = max(abs(x_new.sum() - 1.0), float(-x_new.min()))
            stats["max_simplex_drift"] = max(stats["max_simplex_drift"], drift)
            x = np.clip(x_new, 0.0, None)
            x /= x.sum()
            t = target if clipped else t + h
            if outs is None or clipped:
                ts.append(t)
                xs.append(x.copy())
                if outs is not None:
                    next_out += 1
            if switching:
                e = excess(u, x)
                # strategies sitting on the surface keep the side they were heading to
                active = np.where(e > 0, True, np.where(e < 0, False, active))
                if shortened:
                    active[idx] = ~active[idx] if np.all(e[idx] == 0) else active[idx]
            f0 = fld(x)
            grow = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** (-1.0 / (q + 1))))
            h_nat = max(h_nat, h * grow) if clipped or shortened else h * grow
        else:
            stats["rejected_steps"] += 1
            h_nat = h * max(0.1, 0.9 * err ** (-1.0 / (q + 1)))
            if h_nat < MIN_STEP:
                raise IntegrationError(f"step size underflow at t={t:.6g}", partial())
        if stats["steps"] + stats["rejected_steps"] > max_steps:
            raise IntegrationError(f"step budget exhausted at t={t:.6g}", partial())
    return partial()


@dataclass(frozen=True)
class BRSegment:
    """Straight run toward vertex ``target`` on ``[t0, t1]`` starting from ``x0``."""

    t0: object
    t1: object
    target: int
    x0: np.ndarray


@dataclass(frozen=True)
class SwitchEvent:
    t: object
    old: frozenset
    new: frozenset


@dataclass
class BRTrajectory:
    """Exact piecewise solution of the best-response dynamics.

    With ``precision`` set, times and states are mpmath numbers carrying that
    many significant digits; :meth:`state` returns floats unless ``exact``.
    """

    u: np.ndarray
    horizon: float
    segments: list
    events: list
    precision: int | None = None

    @property
    def n(self) -> int:
        return self.u.shape[0]

    @property
    def switch_times(self) -> np.ndarray:
        return np.array([float(e.t) for e in self.events])

    def _segment_at(self, t):
        for seg in self.segments:
            if t <= seg.t1:
                return seg
        return self.segments[-1]

    def state(self, t, exact: bool = False) -> np.ndarray:
        seg = self._segment_at(t)
        if self.precision is not None and exact:
            with mpmath.workdps(self.precision):
                decay = mpmath.exp(-(mpmath.mpf(t) - seg.t0))
                x = seg.x0 * decay
                x[seg.target] += 1 - decay
                return x
        decay = math.exp(-(float(t) - float(seg.t0)))
        x = np.asarray(seg.x0, dtype=float) * decay
        x[seg.target] += 1.0 - decay
        return x

    def initial(self, exact: bool = False) -> np.ndarray:
        x0 = self.segments[0].x0
        return x0.copy() if exact else np.asarray(x0, dtype=float)

    def final(self, exact: bool = False) -> np.ndarray:
        return self.state(self.segments[-1].t1, exact=exact)

    def sample(self, stride: float = 0.1, include_events: bool = False):
        """Float samples ``(t, x)`` on a regular grid (plus switch times if asked)."""
        t = np.append(np.arange(0.0, self.horizon, stride), self.horizon)
        if include_events and self.events:
            t = np.unique(np.concatenate([t, self.switch_times]))
        return t, np.array([self.state(s) for s in t])

    def to_trajectory(self, stride: float = 0.1) -> Trajectory:
        t, x = self.sample(stride)
        stats = {"steps": len(self.segments), "rejected_steps": 0, "max_simplex_drift": 0.0}
        return Trajectory(DynamicsSpec.best_response(), self.u, t, x, stats)


def _br_backend(precision):
    if precision is None:
        return float, math.exp, math.log
    return mpmath.mpf, mpmath.exp, mpmath.log


def integrate_br(
    g,
    x0,
    horizon: float,
    *,
    precision: int | None = None,
    strict: bool = True,
    excluded: int | None = 3,
    tie_tol: float = 1e-12,
    max_switches: int = MAX_SWITCHES,
) -> BRTrajectory:
    """Event-driven solution of the best-response dynamics from ``x0``.

    The initial best response must be a single pure strategy. With
    ``strict`` (the default) it must also differ from ``excluded`` (0-based
    strategy 4 of the four-strategy family). Along a run toward vertex ``b``
    every payoff difference is ``A + B exp(-s)``; the next switch is the
    smallest positive root over the challengers. Simultaneous roots are
    accepted only when exactly one of them is the cyclic successor among
    the first three strategies; other ties raise :class:`IntegrationError`.
    """
    u = payoff_matrix(g)
    n = u.shape[0]
    xf = as_strategy(x0, n)
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    br = best_responses(u, xf)
    if len(br) != 1:
        names = ", ".join(str(i + 1) for i in sorted(br))
        raise HypothesisError(f"initial best response is not unique (tied strategies {names})")
    (i,) = br
    if strict and excluded is not None and i == excluded:
        raise HypothesisError(f"strategy {excluded + 1} is a best response to x0")

    num, exp, log = _br_backend(precision)
    ctx = mpmath.workdps(precision) if precision is not None else _NullCtx()
    with ctx:
        U = np.array([[num(float(v)) for v in row] for row in u], dtype=object)
        x = np.array([num(float(v)) for v in xf], dtype=object)
        zero, one = num(0), num(1)
        t = zero
        T = num(horizon)
        segments, events = [], []

        def partial():
            return BRTrajectory(u, horizon, segments, events, precision)

        while True:
            px = U.dot(x)
            pb = U[:, i]
            best_tau, challengers = None, []
            for j in range(n):
                if j == i:
                    continue
                A = pb[j] - pb[i]
                B = (px[j] - pb[j]) - (px[i] - pb[i])
                if A <= 0 or A + B >= 0:
                    continue
                tau = log(-B / A)
                if best_tau is None or tau < best_tau - tie_tol:
                    best_tau, challengers = tau, [j]
                elif tau <= best_tau + tie_tol:
                    challengers.append(j)
            if best_tau is None or t + best_tau >= T:
                segments.append(BRSegment(t, T, i, x))
                return partial()
            if len(challengers) > 1:
                succ = (i + 1) % 3 if i < 3 else None
                if succ in challengers:
                    challengers = [succ]
                else:
                    names = ", ".join(str(j + 1) for j in sorted(challengers))
                    raise IntegrationError(f"simultaneous switch to {names} at t={float(t + best_tau):.6g}", partial())
            (j,) = challengers
            # the newcomer must stay best while heading to its own vertex
            if not U[j, j] - U[i, j] > 0:
                raise IntegrationError(
                    f"switch {i + 1}->{j + 1} at t={float(t + best_tau):.6g} has no unique continuation",
                    partial(),
                )
            t1 = t + best_tau
            decay = exp(-best_tau)
            x_new = x * decay
            x_new[i] += one - decay
            segments.append(BRSegment(t, t1, i, x))
            events.append(SwitchEvent(t1, frozenset({i}), frozenset({j})))
            if len(events) > max_switches:
                raise IntegrationError("switch events accumulate", partial())
            x, i, t = x_new, j, t1


class _NullCtx:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


def euler_br(g, x0, horizon: float, dt: float = 1e-4, stride: float = 0.1):
    """Explicit Euler on the inclusion, heading to the max-payoff vertex
    (lowest index on ties) each step. Independent check for :func:`integrate_br`."""
    u = payoff_matrix(g)
    x = as_strategy(x0, u.shape[0])
    nsteps = int(round(horizon / dt))
    every = max(1, int(round(stride / dt)))
    ts, xs = [0.0], [x.copy()]
    for k in range(1, nsteps + 1):
        b = int(np.argmax(u @ x))
        x = x * (1.0 - dt)
        x[b] += dt
        if k % every == 0 or k == nsteps:
            ts.append(k * dt)
            xs.append(x.copy())
    return np.array(ts), np.array(xs)
