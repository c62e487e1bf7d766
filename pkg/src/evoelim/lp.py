"""Dense two-phase simplex method.

Small problems only (a few dozen variables). The basis is refactorized
from the original data at every pivot instead of updating a tableau, which
keeps the degenerate CE programs accurate. Every run is deterministic for
identical input.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

TOL_LP = 1e-8
MAX_PIVOTS = 1_000_000

_PIVOT_TOL = 1e-9
_COST_TOL = 1e-9


class LPError(ValueError):
    """Malformed linear program."""


class LPStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    STALLED = "stalled"


@dataclass
class LinearProgram:
    """``objective . x`` subject to ``rows`` and ``lower <= x <= upper``.

    Each row is ``(coeffs, sense, rhs)`` with sense one of ``"<="``, ``"="``,
    ``">="``. Lower bounds default to 0 and may be ``-inf``; upper bounds
    default to ``+inf``.
    """

    objective: Sequence[float]
    rows: list = field(default_factory=list)
    lower: Sequence[float] | None = None
    upper: Sequence[float] | None = None
    maximize: bool = True

    def add_row(self, coeffs, sense: str, rhs: float) -> None:
        self.rows.append((coeffs, sense, rhs))


@dataclass
class LPOutcome:
    status: LPStatus
    x: np.ndarray | None = None
    value: float = float("nan")
    pivots: int = 0
    residual: float = float("nan")

    @property
    def optimal(self) -> bool:
        return self.status is LPStatus.OPTIMAL


_SENSES = {"<=": -1, "≤": -1, "le": -1, "=": 0, "==": 0, "eq": 0, ">=": 1, "≥": 1, "ge": 1}


def _normalize(lp: LinearProgram):
    c = np.asarray(lp.objective, dtype=float).ravel()
    n = c.size
    if n == 0:
        raise LPError("objective is empty")
    A, senses, b = [], [], []
    for k, (coeffs, sense, rhs) in enumerate(lp.rows):
        a = np.asarray(coeffs, dtype=float).ravel()
        if a.size != n:
            raise LPError(f"row {k} has width {a.size}, objective has {n}")
        if sense not in _SENSES:
            raise LPError(f"row {k}: unknown sense {sense!r}")
        A.append(a)
        senses.append(_SENSES[sense])
        b.append(float(rhs))
    A = np.array(A).reshape(len(A), n)
    b = np.array(b)
    lo = np.zeros(n) if lp.lower is None else np.asarray(lp.lower, dtype=float).ravel()
    hi = np.full(n, np.inf) if lp.upper is None else np.asarray(lp.upper, dtype=float).ravel()
    if lo.size != n or hi.size != n:
        raise LPError("bound vectors must match the objective length")
    for name, arr in (("objective", c), ("constraint matrix", A), ("rhs", b)):
        if not np.all(np.isfinite(arr)):
            raise LPError(f"{name} contains NaN or Inf")
    if np.any(np.isnan(lo)) or np.any(np.isnan(hi)) or np.any(lo == np.inf) or np.any(hi == -np.inf):
        raise LPError("invalid variable bounds")
    return c, A, np.array(senses, dtype=int), b, lo, hi


def _simplex(A, b, cost, basis, allowed, budget):
    """Minimize ``cost . y`` over ``A y = b, y >= 0`` from a feasible ``basis``.

    The basis inverse is refactorized from the original data at every pivot,
    so rounding errors never accumulate across degenerate pivots. Pricing
    is Dantzig's (most negative reduced cost) until a basis repeats, then
    Bland's rule, which cannot cycle. Returns
    ``(state, pivots, basic values)`` with state ``optimal``, ``unbounded``
    or ``stalled``.
    """
    m = len(basis)
    ctol = _COST_TOL * max(1.0, float(np.abs(cost).max(initial=0.0)))
    pivots = 0
    seen, bland = set(), False
    while True:
        key = frozenset(basis)
        bland = bland or key in seen
        seen.add(key)
        B = A[:, basis]
        xb = np.maximum(np.linalg.solve(B, b), 0.0)
        rc = cost - np.linalg.solve(B.T, cost[basis]) @ A
        rc[basis] = 0.0
        candidates = np.nonzero((rc < -ctol) & allowed)[0]
        if candidates.size == 0:
            return "optimal", pivots, xb
        if pivots >= budget:
            return "stalled", pivots, xb
        j = int(candidates[0] if bland else candidates[np.argmin(rc[candidates])])
        col = np.linalg.solve(B, A[:, j])
        rows = np.nonzero(col > _PIVOT_TOL * max(1.0, float(np.abs(col).max())))[0]
        if rows.size == 0:
            return "unbounded", pivots, xb
        ratios = xb[rows] / col[rows]
        best = ratios.min()
        tied = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
        r = int(min(tied, key=lambda i: basis[i]))
        basis[r] = j
        pivots += 1


def solve(lp: LinearProgram, max_pivots: int = MAX_PIVOTS) -> LPOutcome:
    """Solve ``lp`` by the two-phase simplex method.

    Raises :class:`LPError` on malformed input. Hitting ``max_pivots``
    returns status ``STALLED``.
    """
    c, A, senses, b, lo, hi = _normalize(lp)
    n = c.size

    # x = offset + M y with y >= 0; free variables are split in two
    cols, offset = [], np.zeros(n)
    for j in range(n):
        if np.isfinite(lo[j]):
            offset[j] = lo[j]
            cols.append((j, 1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    M = np.zeros((n, len(cols)))
    for k, (j, s) in enumerate(cols):
        M[j, k] = s

    rows_A, rows_s, rows_b = [A], [senses], [b]
    for j in np.nonzero(np.isfinite(hi))[0]:
        e = np.zeros(n)
        e[j] = 1.0
        rows_A.append(e[None, :])
        rows_s.append(np.array([-1]))
        rows_b.append(np.array([hi[j]]))
    A = np.vstack(rows_A)
    senses = np.concatenate(rows_s)
    b = np.concatenate(rows_b)

    Ay = A @ M
    by = b - A @ offset
    cy = (-c if lp.maximize else c) @ M
    flip = by < 0
    Ay[flip] *= -1
    by[flip] *= -1
    senses = np.where(flip, -senses, senses)

    # standard form: [Ay | slacks/surpluses | artificials]
    m, ny = Ay.shape
    n_slack = int(np.count_nonzero(senses != 0))
    n_art = int(np.count_nonzero(senses >= 0))
    ncols = ny + n_slack + n_art
    S = np.zeros((m, ncols))
    S[:, :ny] = Ay
    basis = [0] * m
    s_col, a_col = ny, ny + n_slack
    for i in range(m):
        if senses[i] == -1:
            S[i, s_col] = 1.0
            basis[i] = s_col
            s_col += 1
        else:
            if senses[i] == 1:
                S[i, s_col] = -1.0
                s_col += 1
            S[i, a_col] = 1.0
            basis[i] = a_col
            a_col += 1
    first_art = ny + n_slack

    pivots = 0
    allowed = np.ones(ncols, dtype=bool)
    if n_art:
        c1 = np.zeros(ncols)
        c1[first_art:] = 1.0
        state, k, xb = _simplex(S, by, c1, basis, allowed, max_pivots)
        pivots += k
        if state == "stalled":
            return LPOutcome(LPStatus.STALLED, pivots=pivots)
        scale = max(1.0, float(np.abs(by).max(initial=0.0)))
        if sum(v for v, j in zip(xb, basis) if j >= first_art) > 1e-9 * scale:
            return LPOutcome(LPStatus.INFEASIBLE, pivots=pivots)
        # swap zero-level artificials for real columns; any left sit on redundant rows
        BA = np.linalg.solve(S[:, basis], S)
        for r in range(m):
            if basis[r] < first_art:
                continue
            row = np.abs(BA[r, :first_art])
            row[[j for j in basis if j < first_art]] = 0.0
            j = int(np.argmax(row))
            if row[j] > 1e-9 * max(1.0, float(np.abs(BA[r]).max())):
                basis[r] = j
                BA = np.linalg.solve(S[:, basis], S)
        allowed[first_art:] = False

    c2 = np.zeros(ncols)
    c2[:ny] = cy
    state, k, xb = _simplex(S, by, c2, basis, allowed, max_pivots - pivots)
    pivots += k
    if state == "stalled":
        return LPOutcome(LPStatus.STALLED, pivots=pivots)
    if state == "unbounded":
        return LPOutcome(LPStatus.UNBOUNDED, pivots=pivots)

    y = np.zeros(ncols)
    y[basis] = xb
    x = offset + M @ y[:ny]
    return LPOutcome(
        LPStatus.OPTIMAL, x=x, value=float(c @ x), pivots=pivots, residual=_residual(lp, x)
    )


def _residual(lp: LinearProgram, x: np.ndarray) -> float:
    """Largest constraint violation of ``x`` (0 when feasible)."""
    _, A, senses, b, lo, hi = _normalize(lp)
    r = A @ x - b
    viol = np.where(senses < 0, r, np.where(senses > 0, -r, np.abs(r)))
    worst = max(viol.max(initial=0.0), (lo - x).max(initial=0.0), (x - hi).max(initial=0.0))
    return float(max(worst, 0.0))
