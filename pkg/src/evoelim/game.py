"""Symmetric two-player games: the four-strategy RPS family, perturbations,
and extensions that add mixed strategies as new pure strategies.

Strategies are 0-based in code and 1-based in every serialized form.
``u[i, j]`` is the payoff of the row strategy ``i`` against ``j``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

TOL_SIMPLEX = 1e-9


class GameError(ValueError):
    """Invalid game parameters or malformed strategy data."""


class SimplexWarning(UserWarning):
    """Input was within tolerance of the simplex and has been renormalized."""


def as_strategy(w, n: int | None = None, tol: float = TOL_SIMPLEX) -> np.ndarray:
    """Validate ``w`` as a point of the simplex and return a float copy.

    Entries down to ``-tol`` and a total mass off by at most ``tol`` are
    accepted; the vector is then clamped at zero, rescaled, and a
    :class:`SimplexWarning` is emitted.
    """
    x = np.array(w, dtype=float).ravel()
    if n is not None and x.size != n:
        raise GameError(f"strategy has length {x.size}, expected {n}")
    if not np.all(np.isfinite(x)):
        raise GameError("strategy has non-finite entries")
    if x.min() < -tol or abs(x.sum() - 1.0) > tol:
        raise GameError(f"not in the simplex: min={x.min():.3g}, sum={x.sum():.17g}")
    # rounding-level mass errors are left alone
    if x.min() < 0 or abs(x.sum() - 1.0) > 8 * np.finfo(float).eps * x.size:
        x = np.clip(x, 0.0, None)
        x /= x.sum()
        warnings.warn("strategy renormalized onto the simplex", SimplexWarning, stacklevel=2)
    return x


def as_distribution(m, n: int | None = None, tol: float = TOL_SIMPLEX) -> np.ndarray:
    """Validate an ``n x n`` joint distribution (same rules as :func:`as_strategy`)."""
    a = np.array(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise GameError(f"joint distribution must be square, got shape {a.shape}")
    if n is not None and a.shape[0] != n:
        raise GameError(f"joint distribution is {a.shape[0]}x{a.shape[0]}, expected {n}x{n}")
    flat = as_strategy(a.ravel(), tol=tol)
    return flat.reshape(a.shape)


def vertex(i: int, n: int) -> np.ndarray:
    e = np.zeros(n)
    e[i] = 1.0
    return e


@dataclass(frozen=True)
class Game:
    """Payoff matrix of a symmetric two-player game plus free-form metadata."""

    u: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        if u.ndim != 2 or u.shape[0] != u.shape[1] or u.shape[0] == 0:
            raise GameError(f"payoff matrix must be square and non-empty, got shape {u.shape}")
        if not np.all(np.isfinite(u)):
            raise GameError("payoff matrix has non-finite entries")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)

    @property
    def n(self) -> int:
        return self.u.shape[0]

    def payoffs(self, x) -> np.ndarray:
        """Payoff of each pure strategy against the population state ``x``."""
        return self.u @ x

    def mean_payoff(self, x) -> float:
        return x @ self.u @ x

    def to_dict(self) -> dict:
        return {"n": self.n, "u": self.u.tolist(), "meta": dict(self.meta)}


def payoff_matrix(g) -> np.ndarray:
    """Return the payoff array of a :class:`Game`, :class:`ExtendedGame` or array."""
    if isinstance(g, Game):
        return g.u
    if isinstance(g, ExtendedGame):
        return g.game.u
    if isinstance(g, np.ndarray) and g.dtype == float and g.ndim == 2 and g.shape[0] == g.shape[1]:
        return g
    return Game(g).u


@dataclass(frozen=True)
class RPS4Params:
    epsilon: float
    alpha: float

    @classmethod
    def parse(cls, text: str) -> "RPS4Params":
        """Parse ``"eps=0.1,alpha=0.1"`` (``epsilon``/``a`` spellings accepted)."""
        values = {}
        for part in filter(None, (p.strip() for p in text.split(","))):
            key, _, val = part.partition("=")
            key = {"eps": "epsilon", "e": "epsilon", "a": "alpha"}.get(key.strip(), key.strip())
            if key not in ("epsilon", "alpha"):
                raise GameError(f"unknown rps4 parameter {key!r}")
            values[key] = float(val)
        if set(values) != {"epsilon", "alpha"}:
            raise GameError("rps4 needs both eps and alpha")
        return cls(**values)


def check_rps4_params(epsilon: float, alpha: float) -> None:
    if not 0.0 < epsilon < 1.0:
        raise GameError(f"epsilon={epsilon} violates 0 < epsilon < 1")
    bound = (1.0 - epsilon) / 3.0
    if not 0.0 <= alpha < bound:
        raise GameError(f"alpha={alpha} violates 0 <= alpha < (1 - epsilon)/3 = {bound:.6g}")


def build_rps4(epsilon: float | RPS4Params, alpha: float | None = None, *, check: bool = True) -> Game:
    """The 4x4 game: a cyclic RPS block (wins ``epsilon``, losses -1), a
    fourth strategy that costs ``alpha`` to the RPS strategies and earns
    ``(-1 + epsilon)/3 + alpha`` against each of them.

    ``alpha = 0`` gives the reference game with a segment of equilibria.
    ``check=False`` skips range validation (used to build counterexamples).
    """
    if isinstance(epsilon, RPS4Params):
        epsilon, alpha = epsilon.epsilon, epsilon.alpha
    if alpha is None:
        raise GameError("alpha is required")
    if check:
        check_rps4_params(epsilon, alpha)
    e, a = float(epsilon), float(alpha)
    r4 = (-1.0 + e) / 3.0 + a
    u = np.array(
        [
            [0.0, -1.0, e, -a],
            [e, 0.0, -1.0, -a],
            [-1.0, e, 0.0, -a],
            [r4, r4, r4, 0.0],
        ]
    )
    return Game(u, meta={"epsilon": e, "alpha": a})


def build_g0(epsilon: float) -> Game:
    return build_rps4(epsilon, 0.0)


def perturb(g, delta, rho: float) -> Game:
    """Return ``u + rho * delta``; ``delta`` must match in shape with entries in [-1, 1]."""
    u = payoff_matrix(g)
    d = np.asarray(delta, dtype=float)
    if d.shape != u.shape:
        raise GameError(f"perturbation shape {d.shape} does not match game shape {u.shape}")
    if rho < 0:
        raise GameError("rho must be nonnegative")
    if np.max(np.abs(d), initial=0.0) > 1.0:
        raise GameError("perturbation entries must lie in [-1, 1]")
    meta = dict(g.meta) if isinstance(g, Game) else {}
    if rho:
        meta["perturbation_rho"] = float(rho)
    return Game(u + rho * d, meta=meta)


def random_perturbation(g, rho: float, rng: np.random.Generator) -> Game:
    u = payoff_matrix(g)
    return perturb(g, rng.uniform(-1.0, 1.0, size=u.shape), rho)


@dataclass(frozen=True)
class ExtendedGame:
    """A game whose pure strategies are (possibly mixed) strategies of ``base``.

    Row ``k`` of ``strategies`` is the base-game mixed strategy played by
    type ``k``; the first ``base.n`` rows are the base vertices.
    """

    base: Game
    strategies: np.ndarray
    game: Game

    @property
    def n(self) -> int:
        return self.game.n

    @property
    def u(self) -> np.ndarray:
        return self.game.u

    def to_dict(self) -> dict:
        d = self.game.to_dict()
        d["strategies"] = self.strategies.tolist()
        d["base"] = self.base.to_dict()
        return d


def extend_with_mixed(g, extras: Sequence) -> ExtendedGame:
    """Append each mixed strategy in ``extras`` as a new pure strategy.

    Payoffs between types are the bilinear payoffs of their base strategies.
    """
    base = g if isinstance(g, Game) else Game(g)
    n = base.n
    rows = [vertex(i, n) for i in range(n)]
    for p in extras:
        try:
            rows.append(as_strategy(p, n))
        except GameError as exc:
            raise GameError(f"extra strategy {list(p)} is not in the base simplex: {exc}") from None
    p = np.array(rows)
    p.setflags(write=False)
    uext = p @ base.u @ p.T
    # the base block must be bit-identical to the base game
    uext[:n, :n] = base.u
    meta = dict(base.meta)
    meta["extended"] = True
    return ExtendedGame(base=base, strategies=p, game=Game(uext, meta=meta))


def induce_strategy(g: ExtendedGame, xprime) -> np.ndarray:
    """Base-game population state ``sum_k x'_k p^k`` induced by ``x'``."""
    xp = as_strategy(xprime, g.n)
    return xp @ g.strategies


def induce_distribution(g: ExtendedGame, muprime) -> np.ndarray:
    """Push a joint distribution on extended types forward to the base game."""
    m = as_distribution(muprime, g.n)
    return g.strategies.T @ m @ g.strategies


def game_from_dict(d: dict[str, Any]) -> Game | ExtendedGame:
    u = np.asarray(d["u"], dtype=float)
    if "n" in d and int(d["n"]) != u.shape[0]:
        raise GameError(f"declared n={d['n']} does not match matrix size {u.shape[0]}")
    meta = dict(d.get("meta", {}))
    if "strategies" in d:
        base = game_from_dict(d["base"]) if "base" in d else None
        strategies = np.asarray(d["strategies"], dtype=float)
        if base is None:
            nb = strategies.shape[1]
            base = Game(u[:nb, :nb], meta={k: v for k, v in meta.items() if k != "extended"})
        ext = extend_with_mixed(base, strategies[base.n :])
        if not np.allclose(ext.u, u, rtol=0, atol=1e-12):
            raise GameError("extended payoff matrix is inconsistent with its strategies")
        return ext
    return Game(u, meta=meta)


def dump_game(g) -> str:
    return json.dumps(g.to_dict(), indent=2)
