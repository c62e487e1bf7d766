"""Correlated-equilibrium polytope of a symmetric game and LP probes of it."""

from __future__ import annotations

from dataclasses import dataclass
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .game import as_strategy, payoff_matrix
from .lp import LinearProgram, LPStatus, solve


class EquilibriumError(RuntimeError):
    """An LP over the CE polytope failed where it structurally cannot."""


@dataclass(frozen=True)
class CESystem:
    """Constraint rows over the flattened joint distribution ``mu[i * n + j]``.

    ``incentive`` holds one row per (player, recommended i, deviation j != i),
    each meaning ``row . mu >= 0``; ``labels`` records those triples with
    player 0 the row player. Nonnegativity is carried by variable bounds.
    """

    u: np.ndarray
    incentive: np.ndarray
    labels: tuple

    @property
    def n(self) -> int:
        return self.u.shape[0]

    @property
    def n_vars(self) -> int:
        return self.n**2

    def index(self, i: int, j: int) -> int:
        return i * self.n + j

    def violation(self, mu) -> float:
        """Largest violated incentive/normalization/sign constraint for ``mu``."""
        m = np.asarray(mu, dtype=float).ravel()
        worst = max(0.0, -float((self.incentive @ m).min()), -float(m.min()))
        return max(worst, abs(float(m.sum()) - 1.0))

    def program(self, objective, maximize: bool = True) -> LinearProgram:
        lp = LinearProgram(np.asarray(objective, dtype=float), maximize=maximize)
        for row in self.incentive:
            lp.add_row(row, ">=", 0.0)
        lp.add_row(np.ones(self.n_vars), "=", 1.0)
        return lp


def ce_polytope(g) -> CESystem:
    u = payoff_matrix(g)
    n = u.shape[0]
    rows, labels = [], []
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            # row player told i, tempted by j: sum_l mu(i,l) (u[i,l] - u[j,l]) >= 0
            r = np.zeros((n, n))
            r[i, :] = u[i, :] - u[j, :]
            rows.append(r.ravel())
            labels.append((0, i, j))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            # column player told i; in a symmetric game their payoff at (k, i) is u[i, k]
            r = np.zeros((n, n))
            r[:, i] = u[i, :] - u[j, :]
            rows.append(r.ravel())
            labels.append((1, i, j))
    inc = np.array(rows).reshape(len(rows), n * n)
    inc.setflags(write=False)
    return CESystem(u=u, incentive=inc, labels=tuple(labels))


def _optimize(system: CESystem, objective, maximize=True):
    out = solve(system.program(objective, maximize))
    if out.status is not LPStatus.OPTIMAL:
        # the polytope always contains a Nash product distribution and is bounded
        raise EquilibriumError(f"CE linear program returned {out.status.value}")
    return out


def _cell_objective(system, i, j):
    c = np.zeros(system.n_vars)
    c[system.index(i, j)] = 1.0
    return c


def ce_cell_ranges(g, jobs: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Minimum and maximum of every cell ``mu(i, j)`` over the CE polytope.

    The CE is unique iff both matrices coincide.
    """
    system = ce_polytope(g)
    n = system.n
    tasks = [(i, j, sense) for i in range(n) for j in range(n) for sense in (True, False)]

    def run(task):
        i, j, sense = task
        return _optimize(system, _cell_objective(system, i, j), sense).value

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            values = list(pool.map(run, tasks))
    else:
        values = [run(t) for t in tasks]
    hi, lo = np.zeros((n, n)), np.zeros((n, n))
    for (i, j, sense), v in zip(tasks, values):
        (hi if sense else lo)[i, j] = min(max(v, 0.0), 1.0)
    return lo, hi


def ce_mass_bounds(g) -> np.ndarray:
    """Entry (i, j) is the largest probability any CE puts on (i, j)."""
    system = ce_polytope(g)
    n = system.n
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            v = _optimize(system, _cell_objective(system, i, j)).value
            out[i, j] = min(max(v, 0.0), 1.0)
    return out


def max_marginal(g) -> np.ndarray:
    """Largest symmetrized marginal ``(row_i + col_i)/2`` of each strategy over all CE."""
    system = ce_polytope(g)
    n = system.n
    out = np.zeros(n)
    for i in range(n):
        c = np.zeros((n, n))
        c[i, :] += 0.5
        c[:, i] += 0.5
        out[i] = _optimize(system, c.ravel()).value
    return out


def strategies_used_in_ce(g, tol: float = 1e-7) -> set[int]:
    """0-based indices of strategies with marginal above ``tol`` in some CE."""
    return {int(i) for i in np.nonzero(max_marginal(g) > tol)[0]}


def find_ce(g, objective=None) -> np.ndarray:
    """Some CE (optimal for ``objective`` if given) as an n x n matrix."""
    system = ce_polytope(g)
    c = np.zeros(system.n_vars) if objective is None else np.asarray(objective, dtype=float).ravel()
    out = _optimize(system, c)
    return np.clip(out.x, 0.0, None).reshape(system.n, system.n)


@dataclass(frozen=True)
class NashReport:
    residual: float
    strict: bool

    def to_dict(self) -> dict:
        return {"residual": self.residual, "strict": self.strict}


def nash_report(g, x, tol: float = 1e-12) -> NashReport:
    """Best-deviation gain at ``(x, x)``; ``strict`` only for vertices where
    every other pure strategy is worse by more than ``tol``."""
    u = payoff_matrix(g)
    x = as_strategy(x, u.shape[0])
    p = u @ x
    residual = float(p.max() - x @ p)
    strict = False
    support = np.nonzero(x > 0)[0]
    if support.size == 1:
        i = int(support[0])
        others = np.delete(p, i)
        strict = bool(np.all(others < p[i] - tol))
    return NashReport(residual=residual, strict=strict)
