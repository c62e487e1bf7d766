"""Vector fields of the dynamics families: replicator, exponential
monotonic, (generalized) Brown-von Neumann-Nash, and best-response sets."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .game import payoff_matrix


class DynamicsError(ValueError):
    pass


@dataclass(frozen=True)
class FCatalog:
    """Response function ``f`` of generalized BNN: ``f(0) = 0`` and ``f > 0`` on ``u > 0``.

    ``antiderivative`` gives ``F`` with ``F(0) = 0``; ``sum_i F(k_i)`` is the
    matching Lyapunov function.
    """

    tag: str = "identity"
    p: float = 1.0

    def __post_init__(self):
        if self.tag not in ("identity", "power", "sqrt"):
            raise DynamicsError(f"unknown f tag {self.tag!r}")
        if self.tag == "power" and not (self.p >= 1 and math.isfinite(self.p)):
            raise DynamicsError("power f needs a finite exponent p >= 1")

    def __call__(self, k):
        k = np.maximum(k, 0.0)
        if self.tag == "identity":
            return k
        if self.tag == "power":
            return k**self.p
        return np.sqrt(k)

    def antiderivative(self, k):
        k = np.maximum(k, 0.0)
        if self.tag == "identity":
            return 0.5 * k**2
        if self.tag == "power":
            return k ** (self.p + 1) / (self.p + 1)
        return (2.0 / 3.0) * k**1.5

    def odd(self, k):
        """Odd extension of ``f`` to negative arguments (used for trial states
        that overshoot a sign change of the excess payoff)."""
        k = np.asarray(k, dtype=float)
        if self.tag == "identity":
            return k
        if self.tag == "power":
            return np.sign(k) * np.abs(k) ** self.p
        return np.sign(k) * np.sqrt(np.abs(k))

    def to_dict(self) -> dict:
        d = {"f": self.tag}
        if self.tag == "power":
            d["p"] = self.p
        return d


REPLICATOR = "replicator"
BNN = "bnn"
MONOTONIC_EXP = "monotonic_exp"
BEST_RESPONSE = "best_response"
KINDS = (REPLICATOR, BNN, MONOTONIC_EXP, BEST_RESPONSE)


@dataclass(frozen=True)
class DynamicsSpec:
    kind: str
    f: FCatalog = FCatalog()
    lam: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DynamicsError(f"unknown dynamics kind {self.kind!r}")
        if self.kind == MONOTONIC_EXP and not (self.lam > 0 and math.isfinite(self.lam)):
            raise DynamicsError("monotonic_exp needs a finite lambda > 0")

    @classmethod
    def replicator(cls):
        return cls(REPLICATOR)

    @classmethod
    def bnn(cls, tag: str = "identity", p: float = 1.0):
        return cls(BNN, f=FCatalog(tag, p))

    @classmethod
    def monotonic_exp(cls, lam: float = 1.0):
        return cls(MONOTONIC_EXP, lam=lam)

    @classmethod
    def best_response(cls):
        return cls(BEST_RESPONSE)

    @property
    def face_invariant(self) -> bool:
        """True for fields of the form ``x_i g_i(x)``."""
        return self.kind in (REPLICATOR, MONOTONIC_EXP)

    @property
    def label(self) -> str:
        if self.kind == BNN:
            if self.f.tag == "identity":
                return "bnn"
            return f"bnn[power{self.f.p:g}]" if self.f.tag == "power" else "bnn[sqrt]"
        if self.kind == MONOTONIC_EXP:
            return f"monotonic_exp[{self.lam:g}]"
        return self.kind

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == BNN:
            d.update(self.f.to_dict())
        if self.kind == MONOTONIC_EXP:
            d["lambda"] = self.lam
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DynamicsSpec":
        kind = {"br": BEST_RESPONSE, "rep": REPLICATOR, "mon": MONOTONIC_EXP}.get(d["kind"], d["kind"])
        return cls(
            kind,
            f=FCatalog(d.get("f", "identity"), float(d.get("p", 1.0))),
            lam=float(d.get("lambda", 1.0)),
        )


@dataclass(frozen=True)
class ExcessPayoffs:
    k: np.ndarray
    kbar: float
    q: np.ndarray | None


def excess_payoffs(g, x) -> ExcessPayoffs:
    """Positive parts of payoff minus mean payoff, their sum, and their
    normalization (``None`` at rest points)."""
    u = payoff_matrix(g)
    x = np.asarray(x, dtype=float)
    p = u @ x
    k = np.maximum(0.0, p - x @ p)
    kbar = float(k.sum())
    return ExcessPayoffs(k=k, kbar=kbar, q=k / kbar if kbar > 0 else None)


def growth_rates(spec: DynamicsSpec, g, x) -> np.ndarray:
    """Per-capita growth rates ``g_i`` with field ``x_i g_i``; defined for every i."""
    u = payoff_matrix(g)
    x = np.asarray(x, dtype=float)
    p = u @ x
    if spec.kind == REPLICATOR:
        return p - x @ p
    if spec.kind == MONOTONIC_EXP:
        w = np.exp(spec.lam * p)
        return w - x @ w
    raise DynamicsError(f"growth rates are undefined for {spec.kind}")


def field(spec: DynamicsSpec, g, x) -> np.ndarray:
    """Velocity of the population state ``x``."""
    if spec.kind == BEST_RESPONSE:
        raise DynamicsError("best-response dynamics is set-valued; use integrate.integrate_br")
    x = np.asarray(x, dtype=float)
    if spec.face_invariant:
        return x * growth_rates(spec, g, x)
    fk = spec.f(excess_payoffs(g, x).k)
    return fk - x * fk.sum()


def excess(g, x) -> np.ndarray:
    """Payoff minus mean payoff for every pure strategy (signed)."""
    u = payoff_matrix(g)
    p = u @ np.asarray(x, dtype=float)
    return p - x @ p


def bnn_field_on(spec: DynamicsSpec, g, x, active) -> np.ndarray:
    """BNN field with the set of strategies earning above average frozen to ``active``.

    Equals :func:`field` wherever ``active`` is the true set; inside a
    region of fixed ``active`` it is smooth, which the integrator uses to
    step exactly onto the switching surfaces ``(Ux)_i = x.Ux``.
    """
    x = np.asarray(x, dtype=float)
    fk = spec.f.odd(np.where(active, excess(g, x), 0.0))
    return fk - x * fk.sum()


def best_responses(g, x, tol: float = 1e-10) -> set[int]:
    """0-based pure best responses to ``x`` (within ``tol`` of the best payoff)."""
    u = payoff_matrix(g)
    p = u @ np.asarray(x, dtype=float)
    return {int(i) for i in np.nonzero(p >= p.max() - tol)[0]}
