"""Domain types and the state-space / quadratic-constraint builders.

Everything here is a small immutable value.  Matrices are the dimension-free
2x2 blocks; the Kronecker lift to R^n is never formed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class RCParams:
    """Regularity Condition constants RC(mu, lambda, epsilon).

    ``epsilon=None`` means the condition holds globally.
    """

    mu: float
    lambda_: float
    epsilon: Optional[float] = None

    def __post_init__(self):
        if not (math.isfinite(self.mu) and self.mu > 0):
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not (math.isfinite(self.lambda_) and self.lambda_ > 0):
            raise ValueError(f"lambda must be positive, got {self.lambda_}")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        # products within rounding of 1 are the rank-one boundary case
        if self.mu * self.lambda_ > 1.0 + 1e-12:
            raise ValueError(
                f"RC requires mu*lambda <= 1, got {self.mu}*{self.lambda_}="
                f"{self.mu * self.lambda_}"
            )

    @property
    def root(self) -> float:
        """sqrt(1 - mu*lambda), clipped at 0."""
        return math.sqrt(max(0.0, 1.0 - self.mu * self.lambda_))


@dataclass(frozen=True)
class AGDParams:
    """Step size and the two momentum parameters of the general method.

    Heavy-ball is ``beta2 = 0``; Nesterov is ``beta1 = beta2``.
    """

    alpha: float
    beta1: float = 0.0
    beta2: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        for name in ("beta1", "beta2"):
            v = getattr(self, name)
            if not (0.0 <= v < 1.0):
                raise ValueError(f"{name} must lie in [0, 1), got {v}")

    @classmethod
    def heavy_ball(cls, alpha: float, beta: float) -> "AGDParams":
        return cls(alpha, beta, 0.0)

    @classmethod
    def nesterov(cls, alpha: float, beta: float) -> "AGDParams":
        return cls(alpha, beta, beta)


@dataclass(frozen=True)
class StateSpace:
    """Two-state SISO realization G(A, B, C, D)."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: float = 0.0
    delta: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "a", _frozen(self.a).reshape(2, 2))
        object.__setattr__(self, "b", _frozen(self.b).reshape(2))
        object.__setattr__(self, "c", _frozen(self.c).reshape(2))
        object.__setattr__(self, "d", float(self.d))

    def step(self, state: np.ndarray, u) -> np.ndarray:
        """One state update, applied coordinatewise (state has shape (2, n))."""
        state = np.asarray(state, dtype=float)
        u = np.broadcast_to(np.asarray(u, dtype=float), state.shape[1:])
        return self.a @ state + np.multiply.outer(self.b, u)

    def output(self, state: np.ndarray) -> np.ndarray:
        return self.c @ np.asarray(state, dtype=float)

    def frequency_response(self, omega) -> np.ndarray:
        """C (e^{jw} I - A)^{-1} B + D for an array of frequencies."""
        z = np.exp(1j * np.asarray(omega, dtype=float))
        a = self.a
        det = (z - a[0, 0]) * (z - a[1, 1]) - a[0, 1] * a[1, 0]
        # adjugate of (zI - A) applied to B
        x0 = ((z - a[1, 1]) * self.b[0] + a[0, 1] * self.b[1]) / det
        x1 = (a[1, 0] * self.b[0] + (z - a[0, 0]) * self.b[1]) / det
        return self.c[0] * x0 + self.c[1] * x1 + self.d


@dataclass(frozen=True)
class QuadForm:
    """Symmetric 2x2 weight on the stacked pair (y - y*, u - u*)."""

    m: np.ndarray = field()

    def __post_init__(self):
        m = np.array(self.m, dtype=float).reshape(2, 2)
        if m[0, 1] != m[1, 0]:
            raise ValueError("quadratic form must be exactly symmetric")
        object.__setattr__(self, "m", _frozen(m))

    def evaluate(self, y, u) -> float:
        """Sum over coordinates of [y; u]^T (M kron I) [y; u]."""
        y = np.asarray(y, dtype=float)
        u = np.asarray(u, dtype=float)
        m = self.m
        return float(
            m[0, 0] * np.sum(y * y) + 2.0 * m[0, 1] * np.sum(y * u) + m[1, 1] * np.sum(u * u)
        )


@dataclass(frozen=True)
class SectorBound:
    """Nonlinearity confined between lines of slope ``m_lo`` and ``l_hi``."""

    m_lo: float
    l_hi: float

    def __post_init__(self):
        if not (0 < self.m_lo <= self.l_hi):
            raise ValueError(f"sector needs 0 < m <= L, got m={self.m_lo}, L={self.l_hi}")


def build_original_system(p: AGDParams) -> StateSpace:
    """Realization whose feedback is u_k = grad f(y_k)."""
    b1, b2 = p.beta1, p.beta2
    return StateSpace(
        a=[[1.0 + b1, -b1], [1.0, 0.0]],
        b=[-p.alpha, 0.0],
        c=[1.0 + b2, -b2],
    )


def build_shifted_system(p: AGDParams, delta: float) -> StateSpace:
    """Realization whose feedback is u_k = -alpha grad f(y_k) - delta y_k.

    Any finite ``delta`` reproduces the same iterates as the original system.
    """
    if not math.isfinite(delta):
        raise ValueError("delta must be finite")
    b1, b2 = p.beta1, p.beta2
    return StateSpace(
        a=[[1.0 + b1 + delta + delta * b2, -(b1 + delta * b2)], [1.0, 0.0]],
        b=[1.0, 0.0],
        c=[1.0 + b2, -b2],
        delta=delta,
    )


def build_rc_quadform(rc: RCParams) -> QuadForm:
    return QuadForm([[-rc.lambda_, 1.0], [1.0, -rc.mu]])


def build_shifted_quadform(rc: RCParams, p: AGDParams, delta: float) -> QuadForm:
    """Quadratic bound satisfied by (y, -alpha grad f(y) - delta y) under RC."""
    a, mu, lam = p.alpha, rc.mu, rc.lambda_
    off = -a - mu * delta
    return QuadForm([[-(2 * a * delta + lam * a * a + mu * delta * delta), off], [off, -mu]])


def sector_to_rc(s: SectorBound) -> RCParams:
    total = s.m_lo + s.l_hi
    return RCParams(mu=2.0 / total, lambda_=2.0 * s.m_lo * s.l_hi / total)


def rc_to_sector(rc: RCParams) -> SectorBound:
    if rc.mu * rc.lambda_ > 1.0 + 1e-12:
        raise ValueError("mu*lambda > 1 has no equivalent sector")
    r = rc.root
    # (1 - r)/mu rewritten as lambda/(1 + r) to avoid cancellation when mu*lambda is small
    m_lo = rc.lambda_ / (1.0 + r)
    l_hi = (1.0 + r) / rc.mu
    # at mu*lambda = 1 both slopes collapse to 1/mu
    return SectorBound(min(m_lo, l_hi), l_hi)
