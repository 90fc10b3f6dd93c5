"""Exponent bookkeeping for quasiconformal distortion of dimensions and capacities.

Functions accept floats, ``fractions.Fraction`` or sympy numbers; exact
inputs give exact outputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from numbers import Real
from typing import Any

__all__ = ["t_prime", "t_from_t_prime", "DistortionIndices", "indices_from_target", "conjugate"]


def _check(cond: Any, msg: str) -> None:
    # symbolic inputs cannot always be compared; only numbers are validated
    try:
        ok = bool(cond)
    except TypeError:
        return
    if not ok:
        raise ValueError(msg)


def conjugate(p):
    """Hölder conjugate p' = p/(p-1)."""
    return p / (p - 1)


def t_prime(t, K):
    """Image dimension 2Kt / (2 + (K-1)t)."""
    if isinstance(t, Real) and isinstance(K, Real):
        _check(0 < t <= 2, "t must lie in (0, 2]")
        _check(K >= 1, "K must be >= 1")
    return 2 * K * t / (2 + (K - 1) * t)


def t_from_t_prime(tp, K):
    """Inverse of ``t_prime`` in t: solves 1/t - 1/2 = K (1/t' - 1/2)."""
    if isinstance(tp, Real) and isinstance(K, Real):
        _check(0 < tp <= 2, "t' must lie in (0, 2]")
        _check(K >= 1, "K must be >= 1")
    return 2 * tp / (tp + K * (2 - tp))


@dataclass(frozen=True)
class DistortionIndices:
    """(K, t, t', beta, q, alpha, p) tied together by

    t' = 2 - beta q, t' = t_prime(t, K), p = 1 + (K t / t') (q - 1), 2 - alpha p = t.
    """

    K: Any
    t: Any
    t_prime: Any
    beta: Any
    q: Any
    alpha: Any
    p: Any

    @property
    def q_prime(self):
        return conjugate(self.q)

    @property
    def p_prime(self):
        return conjugate(self.p)

    @property
    def capacity_exponent(self):
        """t'/(K t), the power on the source side of the capacity inequality."""
        return self.t_prime / (self.K * self.t)

    def identity_gap(self):
        """t K (p'-1) - t' (q'-1); zero for consistent indices."""
        return self.t * self.K * (self.p_prime - 1) - self.t_prime * (self.q_prime - 1)

    def as_dict(self) -> dict:
        return {k: float(getattr(self, k)) for k in ("K", "t", "t_prime", "beta", "q", "alpha", "p")}


def indices_from_target(beta, q, K) -> DistortionIndices:
    """Source indices (alpha, p) and dimensions matched to the target pair (beta, q)."""
    if all(isinstance(v, Real) for v in (beta, q, K)):
        _check(q > 1, "q must exceed 1")
        _check(0 < beta * q < 2, "need 0 < beta*q < 2")
        _check(K >= 1, "K must be >= 1")
    tp = 2 - beta * q
    t = t_from_t_prime(tp, K)
    p = 1 + (K * t / tp) * (q - 1)
    alpha = (2 - t) / p
    return DistortionIndices(K, t, tp, beta, q, alpha, p)
