"""Run GD / heavy-ball / Nesterov / general AGD and replay certificates on the runs."""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional

import numpy as np

from .model import AGDParams, RCParams


class Algo(str, enum.Enum):
    GD = "GD"
    HB = "HB"
    NAG = "NAG"
    GENERAL = "General"


@dataclass(frozen=True)
class GradOracle:
    dim: int
    eval_f: Callable[[np.ndarray], float]
    eval_grad: Callable[[np.ndarray], np.ndarray]
    minimizer: np.ndarray
    rc_claim: Optional[RCParams] = None
    name: str = "custom"

    def __post_init__(self):
        x = np.asarray(self.minimizer, dtype=float).reshape(self.dim)
        object.__setattr__(self, "minimizer", x)
        g = np.asarray(self.eval_grad(x), dtype=float)
        if not np.all(np.abs(g) <= 1e-8):
            raise ValueError(f"gradient at the claimed minimizer is {g}, not 0")


@dataclass
class Trace:
    """Iterates z_0..z_K, gradient points y_0..y_{K-1}, and the seed z_{-1}."""

    points: List[np.ndarray]
    aux: List[np.ndarray]
    params: AGDParams
    algo: Algo
    z_prev: np.ndarray
    status: str = "max_iter"

    @property
    def iterations(self) -> int:
        return len(self.points) - 1

    def distances(self, x_star) -> np.ndarray:
        x_star = np.asarray(x_star, dtype=float)
        return np.array([np.linalg.norm(z - x_star) for z in self.points])

    def states(self) -> np.ndarray:
        """phi_k = (z_k, z_{k-1}) for k = 0..K, shape (K+1, 2, n)."""
        prev = [self.z_prev] + self.points[:-1]
        return np.stack([np.stack([z, zp]) for z, zp in zip(self.points, prev)])


class NonFiniteGradientError(RuntimeError):
    def __init__(self, message: str, trace: Trace):
        super().__init__(message)
        self.trace = trace


def momentum_pair(algo: Algo, p: AGDParams) -> AGDParams:
    """Parameters actually used by ``algo``; ``p.beta1`` is the momentum for HB/NAG."""
    algo = Algo(algo)
    if algo is Algo.GD:
        return AGDParams(p.alpha)
    if algo is Algo.HB:
        return AGDParams(p.alpha, p.beta1, 0.0)
    if algo is Algo.NAG:
        return AGDParams(p.alpha, p.beta1, p.beta1)
    return p


def run(oracle: GradOracle, algo, p: AGDParams, z_init, z_prev=None, max_iter: int = 1000,
        stop_tol: float = 1e-6, divergence: float = 1e12) -> Trace:
    """z_{k+1} = (1+b1) z_k - b1 z_{k-1} - alpha grad f(y_k), y_k = (1+b2) z_k - b2 z_{k-1}."""
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    algo = Algo(algo)
    q = momentum_pair(algo, p)
    b1, b2, alpha = q.beta1, q.beta2, q.alpha
    z = np.array(z_init, dtype=float).reshape(oracle.dim)
    zp = z.copy() if z_prev is None else np.array(z_prev, dtype=float).reshape(oracle.dim)
    x_star = oracle.minimizer
    trace = Trace([z.copy()], [], q, algo, zp.copy())
    if np.linalg.norm(z - x_star) <= stop_tol:
        trace.status = "converged"
        return trace
    for _ in range(max_iter):
        y = (1 + b2) * z - b2 * zp
        g = np.asarray(oracle.eval_grad(y), dtype=float)
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient at y={y} (iteration {trace.iterations})", trace)
        z_new = (1 + b1) * z - b1 * zp - alpha * g
        trace.aux.append(y)
        trace.points.append(z_new)
        zp, z = z, z_new
        if np.linalg.norm(z - x_star) <= stop_tol:
            trace.status = "converged"
            break
        if not np.linalg.norm(z) <= divergence:
            trace.status = "diverged"
            break
    return trace


# ---------------------------------------------------------------------------
# the one-dimensional benchmark


def _bench_f(x):
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    val = np.where(ax <= 6.0, x * x, x * x + 1.5 * ax * (np.cos(ax - 6.0) - 1.0))
    return float(np.sum(val))


def _bench_grad(x):
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    outer = 2.0 * x + 1.5 * np.sign(x) * ((np.cos(ax - 6.0) - 1.0) - ax * np.sin(ax - 6.0))
    return np.where(ax < 6.0, 2.0 * x, outer)


def benchmark_44() -> GradOracle:
    """f(x) = x^2 on [-6, 6], x^2 + 1.5|x|(cos(|x| - 6) - 1) outside; RC(0.5, 0.5)."""
    return GradOracle(1, _bench_f, _bench_grad, np.zeros(1), RCParams(0.5, 0.5), "benchmark-44")


def quadratic_oracle(curvature: float, dim: int = 1) -> GradOracle:
    """f(x) = curvature/2 ||x||^2, which satisfies RC(1/L, L) with L = curvature."""
    return GradOracle(dim, lambda x: 0.5 * curvature * float(np.dot(x, x)),
                      lambda x: curvature * np.asarray(x, dtype=float), np.zeros(dim),
                      RCParams(1.0 / curvature, curvature), f"quadratic-{curvature:g}")


# ---------------------------------------------------------------------------
# checks


@dataclass
class RCReport:
    passed: bool
    min_slack: float
    worst_point: np.ndarray
    n_points: int
    n_violations: int


def rc_slack(oracle: GradOracle, rc: RCParams, z) -> float:
    z = np.asarray(z, dtype=float)
    e = z - oracle.minimizer
    g = np.asarray(oracle.eval_grad(z), dtype=float)
    return float(np.dot(g, e) - 0.5 * rc.mu * np.dot(g, g) - 0.5 * rc.lambda_ * np.dot(e, e))


def verify_rc(oracle: GradOracle, rc: RCParams, sample_points: Iterable) -> RCReport:
    """Check the Regularity Condition inequality at every sample point.

    With ``rc.epsilon`` set, points must lie within that distance of the
    minimizer.
    """
    pts = [np.asarray(z, dtype=float).reshape(oracle.dim) for z in sample_points]
    if not pts:
        raise ValueError("need at least one sample point")
    if rc.epsilon is not None:
        far = [z for z in pts if np.linalg.norm(z - oracle.minimizer) > rc.epsilon]
        if far:
            raise ValueError(f"{len(far)} sample points lie outside the RC neighbourhood")
    slacks = np.array([rc_slack(oracle, rc, z) for z in pts])
    k = int(np.argmin(slacks))
    n_bad = int(np.sum(slacks < 0))
    return RCReport(n_bad == 0, float(slacks[k]), pts[k], len(pts), n_bad)


@dataclass
class DecayReport:
    ok: bool
    steps_checked: int
    max_contraction: float
    first_violation: Optional[dict] = None
    envelope_violation: Optional[dict] = None


def check_certified_decay(trace: Trace, p_matrix, rho: float, x_star, tol: float = 1e-9) -> DecayReport:
    """Replay V(phi) = (phi - phi*)^T (P kron I) (phi - phi*) along a trace.

    Asserts V_{k+1} <= rho^2 V_k and the envelope
    ||phi_k - phi*|| <= sqrt(cond P) rho^k ||phi_0 - phi*||, each with relative
    slack ``tol``.
    """
    p_matrix = np.asarray(getattr(p_matrix, "p", p_matrix), dtype=float)
    x_star = np.asarray(x_star, dtype=float)
    err = trace.states() - x_star  # (K+1, 2, n)
    v = np.einsum("kin,ij,kjn->k", err, p_matrix, err)
    norms = np.sqrt(np.einsum("kin,kin->k", err, err))
    ev = np.linalg.eigvalsh(p_matrix)
    cond = ev[-1] / ev[0]
    report = DecayReport(True, len(v) - 1, 0.0)
    for k in range(len(v) - 1):
        rhs = rho * rho * v[k]
        if v[k] > 0:
            report.max_contraction = max(report.max_contraction, v[k + 1] / v[k])
        if v[k + 1] > rhs * (1 + tol):
            report.ok = False
            report.first_violation = {"k": k, "lhs": float(v[k + 1]), "rhs": float(rhs)}
            break
    bound = math.sqrt(cond) * rho ** np.arange(len(v)) * norms[0] * (1 + tol)
    bad = np.nonzero(norms > bound)[0]
    if bad.size:
        k = int(bad[0])
        report.ok = False
        report.envelope_violation = {"k": k, "norm": float(norms[k]), "bound": float(bound[k])}
    return report


def safe_init_radius(eps: float, cond_p: float) -> float:
    """Radius of the initialization ball that keeps every y_k within ``eps``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not cond_p >= 1:
        raise ValueError("cond_p must be >= 1")
    return eps / math.sqrt(10.0 * cond_p)


def check_local_trace(trace: Trace, eps: float, x_star) -> bool:
    """Every gradient point y_k stays within ``eps`` of the minimizer."""
    x_star = np.asarray(x_star, dtype=float)
    return all(np.linalg.norm(y - x_star) <= eps for y in trace.aux)


def write_trace_csv(trace: Trace, oracle: GradOracle, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "z", "dist", "f"])
        for k, z in enumerate(trace.points):
            w.writerow([k, ";".join(repr(float(v)) for v in z),
                        repr(float(np.linalg.norm(z - oracle.minimizer))), repr(float(oracle.eval_f(z)))])
