"""Small LMI certificates for the two-state AGD realizations.

The decision variable is a symmetric 2x2 P, so the search space is three
dimensional.  Feasibility is searched with a logarithmic grid followed by
Nelder-Mead refinement of the largest eigenvalue of the assembled 3x3 matrix.
A failed search proves nothing; only the frequency-domain routes decide
infeasibility.  Every witness is re-verified with ``numpy.linalg.eigvalsh``,
independently of the closed-form eigenvalues used inside the search.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .analytic import admissible_delta_interval, fdi_exact, fdi_sampled, kypc_alpha_bound
from .model import (
    AGDParams,
    QuadForm,
    RCParams,
    StateSpace,
    build_shifted_quadform,
    build_shifted_system,
)

log = logging.getLogger(__name__)

STRICT_TOL = 1e-10
PD_TOL = 1e-10


# ---------------------------------------------------------------------------
# closed-form symmetric eigenvalues


def sym_eig2(p) -> tuple:
    """Eigenvalues (ascending) of a symmetric 2x2 matrix."""
    a, b, c = p[0][0], p[0][1], p[1][1]
    mid = 0.5 * (a + c)
    rad = math.hypot(0.5 * (a - c), b)
    return mid - rad, mid + rad


def sym_eig3(m) -> tuple:
    """Eigenvalues (ascending) of a symmetric 3x3 matrix.

    The eigenvalue farthest from the mean comes from the trigonometric formula;
    the other two come from the 2x2 block on its orthogonal complement, which
    keeps near-equal pairs accurate.
    """
    a11, a12, a13 = m[0][0], m[0][1], m[0][2]
    a22, a23, a33 = m[1][1], m[1][2], m[2][2]
    off = a12 * a12 + a13 * a13 + a23 * a23
    q = (a11 + a22 + a33) / 3.0
    if off == 0.0:
        return tuple(sorted((a11, a22, a33)))
    d1, d2, d3 = a11 - q, a22 - q, a33 - q
    p = math.sqrt((d1 * d1 + d2 * d2 + d3 * d3 + 2.0 * off) / 6.0)
    if p == 0.0:
        return (q, q, q)
    b11, b22, b33 = d1 / p, d2 / p, d3 / p
    b12, b13, b23 = a12 / p, a13 / p, a23 / p
    det = (b11 * (b22 * b33 - b23 * b23) - b12 * (b12 * b33 - b23 * b13)
           + b13 * (b12 * b23 - b22 * b13))
    r = min(1.0, max(-1.0, 0.5 * det))
    phi = math.acos(r) / 3.0
    e_hi = q + 2.0 * p * math.cos(phi)
    e_lo = q + 2.0 * p * math.cos(phi + 2.0 * math.pi / 3.0)
    e1 = e_hi if e_hi - q >= q - e_lo else e_lo
    # eigenvector of e1: largest cross product of two rows of (M - e1 I)
    mat = np.array([[a11, a12, a13], [a12, a22, a23], [a13, a23, a33]], dtype=float)
    rows = mat - e1 * np.eye(3)
    cands = [np.cross(rows[0], rows[1]), np.cross(rows[0], rows[2]), np.cross(rows[1], rows[2])]
    v = max(cands, key=lambda c: float(c @ c))
    nv = math.sqrt(float(v @ v))
    if nv == 0.0:
        e_mid = 3.0 * q - e_hi - e_lo
        return tuple(sorted((e_lo, e_mid, e_hi)))
    v = v / nv
    # orthonormal basis of the complement
    k = int(np.argmin(np.abs(v)))
    u = np.eye(3)[k] - v[k] * v
    u = u / math.sqrt(float(u @ u))
    w = np.cross(v, u)
    basis = np.stack([u, w])
    sub = basis @ mat @ basis.T
    lo2, hi2 = sym_eig2(0.5 * (sub + sub.T))
    return tuple(sorted((e1, lo2, hi2)))


def cond_number(p) -> float:
    lo, hi = sym_eig2(p)
    return hi / lo if lo > 0 else math.inf


# ---------------------------------------------------------------------------
# problems and witnesses


@dataclass(frozen=True)
class LmiProblem:
    sys: StateSpace
    quad: QuadForm
    rho: float = 1.0
    strict: bool = True

    def __post_init__(self):
        if not (0.0 < self.rho <= 1.0):
            raise ValueError(f"rho must lie in (0, 1], got {self.rho}")


@dataclass(frozen=True)
class PWitness:
    p: np.ndarray
    max_eig_lhs: float
    min_eig_p: float
    cond_p: float

    def as_dict(self) -> dict:
        return {
            "P": [[float(v) for v in row] for row in self.p],
            "max_eig_lhs": self.max_eig_lhs,
            "min_eig_p": self.min_eig_p,
            "cond_p": self.cond_p,
        }


@dataclass(frozen=True)
class RateCertificate:
    rho: float
    witness: PWitness
    bisection_tol: float
    delta: float


def constraint_term(prob: LmiProblem) -> np.ndarray:
    """[[C, D], [0, 1]]^T M [[C, D], [0, 1]]."""
    s = prob.sys
    outer = np.array([[s.c[0], s.c[1], s.d], [0.0, 0.0, 1.0]])
    return outer.T @ prob.quad.m @ outer


def assemble_lmi(prob: LmiProblem, p) -> np.ndarray:
    """Left-hand side of the rate-rho dissipation inequality for a given P."""
    p = np.asarray(p, dtype=float)
    a, b = prob.sys.a, prob.sys.b.reshape(2, 1)
    top = a.T @ p @ a - prob.rho ** 2 * p
    cross = a.T @ p @ b
    corner = b.T @ p @ b
    lyap = np.block([[top, cross], [cross.T, corner]])
    out = lyap + constraint_term(prob)
    return 0.5 * (out + out.T)


def _basis(prob: LmiProblem):
    """Affine decomposition LHS(P) = L0 + p11 E11 + p12 E12 + p22 E22."""
    l0 = constraint_term(prob)
    e = []
    for mat in ([[1, 0], [0, 0]], [[0, 1], [1, 0]], [[0, 0], [0, 1]]):
        e.append(assemble_lmi(prob, mat) - l0)
    return l0, e


def _p_from(x) -> np.ndarray:
    return np.array([[x[0], x[1]], [x[1], x[2]]])


def verify_witness(prob: LmiProblem, p) -> PWitness:
    """Eigenvalue check of P and of the assembled LHS via LAPACK."""
    p = np.asarray(p, dtype=float)
    p = 0.5 * (p + p.T)
    lhs = assemble_lmi(prob, p)
    ev_p = np.linalg.eigvalsh(p)
    max_lhs = float(np.linalg.eigvalsh(lhs)[-1])
    min_p = float(ev_p[0])
    cond = float(ev_p[-1] / ev_p[0]) if ev_p[0] > 0 else math.inf
    return PWitness(p, max_lhs, min_p, cond)


def is_feasible(prob: LmiProblem, w: PWitness) -> bool:
    if w.min_eig_p <= PD_TOL:
        return False
    return w.max_eig_lhs < -STRICT_TOL if prob.strict else w.max_eig_lhs <= 0.0


# ---------------------------------------------------------------------------
# KYP conditions


def check_kypc(sys: StateSpace, quad: QuadForm, tol: float = 1e-12):
    """KYP side conditions for a 2x2 A and the upper-left corner of M.

    The characteristic polynomial is z^2 - t z + d.  A root lies on the unit
    circle exactly when z = 1 or z = -1 is a root, or when d = 1 with |t| <= 2.
    """
    a = sys.a
    t = float(a[0, 0] + a[1, 1])
    d = float(a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0])
    on_circle = abs(1 - t + d) <= tol or abs(1 + t + d) <= tol or (abs(d - 1) <= tol and abs(t) <= 2)
    disc = t * t - 4 * d
    if disc >= 0:
        sq = math.sqrt(disc)
        radius = max(abs(0.5 * (t + sq)), abs(0.5 * (t - sq)))
    else:
        radius = math.sqrt(d)
    detail = {
        "no_unit_circle_eigenvalue": not on_circle,
        # a root flagged on the circle is never counted as inside it
        "schur_stable": radius < 1.0 and not on_circle,
        "spectral_radius": radius,
        "corner_psd": bool(quad.m[0, 0] >= 0.0),
    }
    ok = detail["no_unit_circle_eigenvalue"] and detail["schur_stable"] and detail["corner_psd"]
    return ok, detail


# ---------------------------------------------------------------------------
# feasibility search


def _objective_factory(prob: LmiProblem):
    """max(lambda_max(LHS(P)), -lambda_min(P)) as a scalar function of (p11, p12, p22)."""
    l0, mats = _basis(prob)
    idx = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))
    c0 = [float(l0[i, j]) for i, j in idx]
    c1, c2, c3 = ([float(m[i, j]) for i, j in idx] for m in mats)
    def obj(x):
        x0, x1, x2 = float(x[0]), float(x[1]), float(x[2])
        a11, a12, a13, a22, a23, a33 = (
            c0[k] + x0 * c1[k] + x1 * c2[k] + x2 * c3[k] for k in range(6)
        )
        off = a12 * a12 + a13 * a13 + a23 * a23
        q = (a11 + a22 + a33) / 3.0
        d1, d2, d3 = a11 - q, a22 - q, a33 - q
        pp = math.sqrt((d1 * d1 + d2 * d2 + d3 * d3 + 2.0 * off) / 6.0)
        if pp == 0.0:
            top = q
        else:
            det = (d1 * (d2 * d3 - a23 * a23) - a12 * (a12 * d3 - a23 * a13)
                   + a13 * (a12 * a23 - d2 * a13)) / (pp * pp * pp)
            r = 1.0 if det >= 2.0 else -1.0 if det <= -2.0 else 0.5 * det
            top = q + 2.0 * pp * math.cos(math.acos(r) / 3.0)
        p_lo = 0.5 * (x0 + x2) - math.hypot(0.5 * (x0 - x2), x1)
        return top if top > -p_lo else -p_lo

    return obj


def _seed_points(scale_lo: float = -4.0, scale_hi: float = 3.0, n_scales: int = 15) -> List[np.ndarray]:
    seeds = []
    for s in np.logspace(scale_lo, scale_hi, n_scales):
        for ratio in (0.25, 1.0, 4.0):
            for corr in (-0.9, -0.5, 0.0, 0.5, 0.9):
                off = corr * math.sqrt(ratio)
                seeds.append(s * np.array([1.0, off, ratio]))
    return seeds


def _nelder_mead(obj, x0, restarts: int = 4, maxfev: int = 1500, stop_below: Optional[float] = None):
    """Nelder-Mead with fresh-simplex restarts; a restart that fails to improve
    is retried once with a larger simplex before giving up."""
    best_x, best_f = np.asarray(x0, dtype=float), obj(x0)
    widen = 0.1
    for _ in range(restarts):
        scale = max(float(np.max(np.abs(best_x))), 1e-8)
        simplex = np.vstack([best_x] + [best_x + widen * scale * e for e in np.eye(3)])
        res = minimize(obj, best_x, method="Nelder-Mead",
                       options={"initial_simplex": simplex, "xatol": 1e-13 * scale, "fatol": 1e-15,
                                "maxfev": maxfev})
        if res.fun < best_f - 1e-14 * max(1.0, abs(best_f)):
            best_x, best_f = res.x, float(res.fun)
            widen = 0.1
        elif widen < 0.5:
            widen = 0.5
        else:
            break
        if stop_below is not None and best_f < stop_below:
            break
    return best_x, best_f


def find_feasible_p(prob: LmiProblem, x0=None, n_starts: int = 3) -> Optional[PWitness]:
    """Search for P > 0 making the assembled LHS negative (semi)definite.

    Returns a re-verified witness or None when the budget is exhausted.
    """
    obj = _objective_factory(prob)
    seeds = _seed_points()
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float)
        seeds.insert(0, np.array([x0[0, 0], x0[0, 1], x0[1, 1]]) if x0.shape == (2, 2) else x0)
    scored = sorted(((obj(s), i) for i, s in enumerate(seeds)))
    for f0, i in scored[:n_starts]:
        x, _ = _nelder_mead(obj, seeds[i], stop_below=-1e3 * STRICT_TOL)
        w = verify_witness(prob, _p_from(x))
        if is_feasible(prob, w):
            return w
    return None


def _isotropic_probe(prob: LmiProblem) -> Optional[PWitness]:
    obj = _objective_factory(prob)
    res = minimize_scalar(lambda t: obj((math.exp(t), 0.0, math.exp(t))), bounds=(-20.0, 10.0),
                          method="bounded", options={"xatol": 1e-10})
    c = math.exp(res.x)
    w = verify_witness(prob, np.eye(2) * c)
    return w if is_feasible(prob, w) else None


# ---------------------------------------------------------------------------
# rates and conditioning


def shifted_problem(rc: RCParams, p: AGDParams, delta: float, rho: float = 1.0, strict: bool = True) -> LmiProblem:
    return LmiProblem(build_shifted_system(p, delta), build_shifted_quadform(rc, p, delta), rho, strict)


def feasible_at_rate(rc: RCParams, p: AGDParams, rho: float, deltas, x0=None):
    for delta in deltas:
        w = find_feasible_p(shifted_problem(rc, p, delta, rho), x0=x0)
        if w is not None:
            return w, delta
    return None


def certify_rate(rc: RCParams, p: AGDParams, tol: float = 1e-3, n_deltas: int = 5) -> Optional[RateCertificate]:
    """Smallest rate rho (to within ``tol``) with a verified certificate.

    Each candidate rate tries ``n_deltas`` deterministic shifts from the
    admissible interval.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    deltas = admissible_delta_interval(rc, p).points(n_deltas)
    if not deltas:
        return None
    hi = 1.0 - tol
    found = feasible_at_rate(rc, p, hi, deltas)
    if found is None:
        return None
    best_w, best_delta = found
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        found = feasible_at_rate(rc, p, mid, [best_delta] + [d for d in deltas if d != best_delta], x0=best_w.p)
        if found is None:
            lo = mid
        else:
            hi = mid
            best_w, best_delta = found
    return RateCertificate(hi, best_w, tol, best_delta)


def min_cond_p(rc: RCParams, p: AGDParams, rho: float, n_deltas: int = 5, x0=None,
               certificate: Optional[RateCertificate] = None) -> Optional[PWitness]:
    """Best-effort minimisation of cond(P) over certificates at rate ``rho``.

    A ``certificate`` for a rate no larger than ``rho`` is kept as a candidate,
    so the result is never worse than its witness.
    """
    if not (0.0 < rho < 1.0):
        raise ValueError("rho must lie in (0, 1)")
    best: Optional[PWitness] = None
    if certificate is not None and certificate.rho <= rho:
        best = certificate.witness
    for delta in admissible_delta_interval(rc, p).points(n_deltas):
        prob = shifted_problem(rc, p, delta, rho)
        iso = _isotropic_probe(prob)
        if iso is not None:
            return iso
        start = find_feasible_p(prob, x0=x0)
        if start is None:
            continue
        feas = _objective_factory(prob)

        def obj(x):
            v = feas(x)
            if v >= -STRICT_TOL:
                return 1e6 + v
            return cond_number(((x[0], x[1]), (x[1], x[2])))

        x = np.array([start.p[0, 0], start.p[0, 1], start.p[1, 1]])
        x, _ = _nelder_mead(obj, x)
        cand = verify_witness(prob, _p_from(x))
        if not is_feasible(prob, cand) or cand.cond_p > start.cond_p:
            cand = start
        if best is None or cand.cond_p < best.cond_p:
            best = cand
    return best


# ---------------------------------------------------------------------------
# frequency-domain / LMI equivalence harness


class WitnessVerificationError(RuntimeError):
    """A witness returned by the search failed independent re-verification."""


@dataclass
class HarnessReport:
    n_trials: int
    agreements: int = 0
    fdi_stable: int = 0
    lmi_found: int = 0
    skipped_kypc: int = 0
    rejected_margin: int = 0
    counterexamples: List[dict] = field(default_factory=list)
    witnesses: List[tuple] = field(default_factory=list)  # (problem, PWitness) pairs

    @property
    def ok(self) -> bool:
        return not self.counterexamples and self.agreements == self.n_trials


def _sample_point(rng: np.random.Generator):
    mu = rng.uniform(0.1, 1.5)
    lam = rng.uniform(0.1, 1.0) / mu
    beta1 = rng.uniform(0.0, 0.9)
    kind = rng.integers(3)
    beta2 = 0.0 if kind == 0 else beta1 if kind == 1 else rng.uniform(0.0, 0.9)
    rc = RCParams(mu, lam)
    bound = kypc_alpha_bound(rc, beta1, beta2)
    # log-uniform step sizes so both small and near-bound steps are covered
    alpha = bound * math.exp(rng.uniform(math.log(0.01), math.log(0.999)))
    return rc, AGDParams(alpha, beta1, beta2)


def kyp_equivalence_harness(n_trials: int = 200, seed: int = 42, margin: float = 1e-2,
                            max_draws: int = 100_000) -> HarnessReport:
    """Spot-check that LMI feasibility and the exact FDI verdict coincide.

    Points are drawn with the shift strictly inside the admissible interval and
    the worst FDI value at least ``margin`` away from zero.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    rng = np.random.default_rng(seed)
    report = HarnessReport(n_trials)
    done = draws = 0
    while done < n_trials:
        draws += 1
        if draws > max_draws:
            raise RuntimeError("sampling budget exhausted before n_trials accepted draws")
        rc, p = _sample_point(rng)
        verdict = fdi_exact(rc, p)
        if abs(verdict.margin) <= margin:
            report.rejected_margin += 1
            continue
        interval = admissible_delta_interval(rc, p)
        if not interval.nonempty:
            report.skipped_kypc += 1
            continue
        delta = interval.lo + rng.uniform(0.05, 0.95) * (interval.hi - interval.lo)
        prob = shifted_problem(rc, p, delta)
        kypc_ok, _ = check_kypc(prob.sys, prob.quad)
        if not kypc_ok:
            report.skipped_kypc += 1
            continue
        done += 1
        w = find_feasible_p(prob)
        dump = {"trial": done, "mu": rc.mu, "lambda": rc.lambda_, "alpha": p.alpha,
                "beta1": p.beta1, "beta2": p.beta2, "delta": delta,
                "fdi_stable": verdict.stable, "fdi_margin": verdict.margin}
        if w is not None:
            again = verify_witness(prob, w.p)
            if not is_feasible(prob, again):
                raise WitnessVerificationError(f"witness failed re-verification: {dump}")
            report.lmi_found += 1
            report.witnesses.append((prob, again))
            if not fdi_sampled(rc, p).stable:
                report.counterexamples.append({**dump, "reason": "witness found but sampled FDI unstable"})
                continue
        report.fdi_stable += int(verdict.stable)
        if (w is not None) == verdict.stable:
            report.agreements += 1
        else:
            reason = "FDI stable but no witness" if verdict.stable else "witness for FDI-unstable point"
            report.counterexamples.append({**dump, "reason": reason})
            log.warning("KYP harness counterexample: %s", dump)
    return report
