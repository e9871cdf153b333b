"""Closed-form convergence regions and frequency-domain stability tests.

Every route here answers the same question for a parameter point
(alpha, beta1, beta2) under RC(mu, lambda): does the shifted realization admit
a positive definite certificate?  The routes are

* ``fdi_exact``   - quadratic-in-cos(w) inequality decided in closed form
* ``fdi_sampled`` - frequency response of the shifted realization on a grid
* ``hb_region`` / ``nag_region`` - the published closed-form regions

``fdi_exact`` is the canonical verdict; the others are cross-checks.
"""
from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, List, Optional, Sequence

import numpy as np

from .model import AGDParams, RCParams, build_shifted_quadform, build_shifted_system

BOUNDARY_BAND = 1e-3
_DEGENERATE_LEAD = 1e-14
_EXACT_FALLBACK = 1e-9


class Route(str, enum.Enum):
    THEOREM_HB = "theorem-hb"
    THEOREM_NAG = "theorem-nag"
    FDI_EXACT = "fdi-exact"
    FDI_SAMPLED = "fdi-sampled"


@dataclass(frozen=True)
class RegionVerdict:
    stable: bool
    route: Route
    margin: float
    detail: str = ""

    def near_boundary(self, band: float = BOUNDARY_BAND) -> bool:
        return abs(self.margin) <= band


@dataclass(frozen=True)
class DeltaInterval:
    lo: float
    hi: float
    nonempty: bool

    def points(self, k: int = 5) -> List[float]:
        """``k`` deterministic interior points: midpoint first, then quartiles."""
        if not self.nonempty:
            return []
        if self.lo == self.hi:
            return [self.lo]
        fracs = [0.5, 0.25, 0.75, 0.1, 0.9, 0.4, 0.6][:k]
        return [self.lo + f * (self.hi - self.lo) for f in fracs]


# ---------------------------------------------------------------------------
# KYP conditions on the shifted realization


def kypc_alpha_bound(rc: RCParams, beta1: float, beta2: float) -> float:
    """Largest step size (exclusive) for which some shift satisfies the KYP conditions."""
    return 2.0 * (1.0 + beta1) * (1.0 + rc.root) / (rc.lambda_ * (1.0 + 2.0 * beta2))


def schur_delta_range(beta1: float, beta2: float) -> tuple:
    """Open interval of shifts making A' Schur stable."""
    return (-2.0 * (1.0 + beta1) / (1.0 + 2.0 * beta2), 0.0)


def admissible_delta_interval(rc: RCParams, p: AGDParams) -> DeltaInterval:
    """Shifts delta for which the shifted realization satisfies all KYP conditions.

    The Schur range is open, the PSD-corner range is closed.  Open ends are
    pulled inward by a relative 1e-12.
    """
    r = rc.root
    lam, a = rc.lambda_, p.alpha
    s_lo, s_hi = schur_delta_range(p.beta1, p.beta2)
    # -(alpha*lambda)/(1 - r), written without cancellation
    psd_lo = -a * (1.0 + r) / rc.mu if r < 1.0 else -math.inf
    psd_hi = -a * lam / (1.0 + r)
    shrink = 1e-12
    lo, hi = psd_lo, psd_hi
    if lo <= s_lo:
        lo = s_lo * (1.0 - shrink)
    if hi >= s_hi:
        hi = s_hi - shrink * abs(s_lo)
    if r == 0.0:
        # single admissible shift -alpha*lambda
        if s_lo < psd_hi < s_hi:
            return DeltaInterval(psd_hi, psd_hi, True)
        return DeltaInterval(psd_hi, psd_hi, False)
    if lo < hi:
        return DeltaInterval(lo, hi, True)
    return DeltaInterval(lo, hi, False)


# ---------------------------------------------------------------------------
# the frequency-domain inequality as a quadratic in u = cos(w)


def fdi_coefficients(rc: RCParams, p: AGDParams, exact: bool = False):
    """(a, b, c) with FDI(w) = a cos^2 w + b cos w + c; stability needs FDI < 0."""
    if exact:
        mu, lam = Fraction(rc.mu), Fraction(rc.lambda_)
        al, b1, b2 = Fraction(p.alpha), Fraction(p.beta1), Fraction(p.beta2)
    else:
        mu, lam = rc.mu, rc.lambda_
        al, b1, b2 = p.alpha, p.beta1, p.beta2
    qa = 4 * (al * b2 - mu * b1)
    qb = 2 * (mu * (1 + b1) ** 2 + lam * al * al * b2 * (1 + b2) - al * (1 + b1) * (1 + 2 * b2))
    qc = 2 * al * (1 + b1 + 2 * b1 * b2) - 2 * mu * (1 + b1 * b1) - lam * al * al * (b2 * b2 + (1 + b2) ** 2)
    return qa, qb, qc


def fdi_polynomial(rc: RCParams, p: AGDParams, u):
    qa, qb, qc = fdi_coefficients(rc, p)
    u = np.asarray(u, dtype=float)
    return (qa * u + qb) * u + qc


def _max_on_unit_interval(qa, qb, qc, degenerate: bool):
    """Max of qa u^2 + qb u + qc over [-1, 1] and where it is attained."""
    cands = [(qa - qb + qc, -1), (qa + qb + qc, 1)]
    if not degenerate:
        v = -qb / (2 * qa)
        if -1 < v < 1:
            cands.append((qc - qb * qb / (4 * qa), v))
    return max(cands, key=lambda t: t[0])


def fdi_worst(rc: RCParams, p: AGDParams):
    """Worst (largest) FDI value over all frequencies, with its argmax in cos(w).

    Near-zero maxima are recomputed in exact rational arithmetic so the sign is
    never a rounding artefact.
    """
    qa, qb, qc = fdi_coefficients(rc, p)
    val, where = _max_on_unit_interval(qa, qb, qc, abs(qa) < _DEGENERATE_LEAD)
    if abs(val) < _EXACT_FALLBACK:
        ea, eb, ec = fdi_coefficients(rc, p, exact=True)
        eval_, ewhere = _max_on_unit_interval(ea, eb, ec, ea == 0)
        return float(eval_), float(ewhere), (eval_ > 0) - (eval_ < 0)
    val = float(val)
    return val, float(where), (val > 0) - (val < 0)


def fdi_exact(rc: RCParams, p: AGDParams) -> RegionVerdict:
    worst, where, sign = fdi_worst(rc, p)
    bound = kypc_alpha_bound(rc, p.beta1, p.beta2)
    fdi_ok = sign < 0
    alpha_ok = p.alpha < bound
    margin = min(-worst, bound - p.alpha)
    parts = [f"max FDI {worst:.6g} at cos(w)={where:.6g}"]
    if not alpha_ok:
        parts.append(f"alpha >= KYP bound {bound:.6g}")
    return RegionVerdict(fdi_ok and alpha_ok, Route.FDI_EXACT, margin, "; ".join(parts))


def fdi_sampled(rc: RCParams, p: AGDParams, n_samples: int = 10_000, full_circle: bool = False) -> RegionVerdict:
    """Brute-force FDI check from the frequency response of the shifted realization.

    The response is evaluated on a uniform grid and the quadratic form in the
    shifted constraint is applied to [G(e^{jw}); 1].  The value is multiplied
    by |det(e^{jw} I - A')|^2 > 0 so it is directly comparable with the
    polynomial used by ``fdi_exact``.  The result does not depend on the shift;
    the centre of the Schur range is used because it keeps poles off the circle.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    s_lo, _ = schur_delta_range(p.beta1, p.beta2)
    delta = 0.5 * s_lo
    sys = build_shifted_system(p, delta)
    m = build_shifted_quadform(rc, p, delta).m
    omega = np.linspace(0.0, 2 * np.pi if full_circle else np.pi, n_samples)
    g = sys.frequency_response(omega)
    z = np.exp(1j * omega)
    a = sys.a
    det = (z - a[0, 0]) * (z - a[1, 1]) - a[0, 1] * a[1, 0]
    vals = (m[0, 0] * np.abs(g) ** 2 + 2 * m[0, 1] * g.real + m[1, 1]) * np.abs(det) ** 2
    k = int(np.argmax(vals))
    worst = float(vals[k])
    bound = kypc_alpha_bound(rc, p.beta1, p.beta2)
    stable = worst < 0 and p.alpha < bound
    margin = min(-worst, bound - p.alpha)
    return RegionVerdict(stable, Route.FDI_SAMPLED, margin, f"max FDI {worst:.6g} at w={omega[k]:.6g}")


# ---------------------------------------------------------------------------
# Heavy-ball closed form


def hb_h1(rc: RCParams, beta: float) -> float:
    return rc.mu * (beta * beta + 6 * beta + 1) / (beta + 1)


def hb_h2(rc: RCParams, beta: float) -> float:
    """Larger root of P1 a^2 - P2 a + P3 = 0.

    P2^2 - 4 P1 P3 reduces to 16 mu^3 lambda beta (1 - beta)^4, which gives the
    cancellation-free form below; ``hb_h2_from_polynomials`` keeps the textbook
    expression for cross-checking.
    """
    mu = rc.mu
    return mu * (1 - beta) ** 2 / ((1 + beta) - 2 * math.sqrt(mu * rc.lambda_ * beta))


def hb_h2_from_polynomials(rc: RCParams, beta: float) -> float:
    mu, lam, b = rc.mu, rc.lambda_, beta
    p1 = 4 * mu * lam * b - b * b - 1 - 2 * b
    p2 = 2 * mu * b + 2 * mu * b * b - 2 * mu * b ** 3 - 2 * mu
    p3 = 4 * mu * mu * b ** 3 + 4 * mu * mu * b - 6 * mu * mu * b * b - mu * mu * b ** 4 - mu * mu
    return (p2 - math.sqrt(max(0.0, p2 * p2 - 4 * p1 * p3))) / (2 * p1)


def hb_upper(rc: RCParams, beta: float) -> float:
    # 2(beta+1)(1 - r)/lambda with 1 - r = mu*lambda/(1 + r)
    return 2 * (beta + 1) * rc.mu / (1 + rc.root)


def hb_boundaries(rc: RCParams, beta: float) -> List[float]:
    """Every alpha at which some branch of the heavy-ball region starts or stops."""
    return [hb_h1(rc, beta), hb_h2(rc, beta), hb_upper(rc, beta), kypc_alpha_bound(rc, beta, 0.0)]


def _interval_margin(x: float, lo: float, hi: float) -> float:
    return min(x - lo, hi - x)


def _check_beta(beta: float) -> None:
    if not (0.0 < beta < 1.0):
        raise ValueError(f"closed-form regions need 0 < beta < 1, got {beta}")


def hb_region(rc: RCParams, alpha: float, beta: float) -> RegionVerdict:
    """Membership in the closed-form heavy-ball region, strict at every boundary."""
    _check_beta(beta)
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    h1, h2, up = hb_h1(rc, beta), hb_h2(rc, beta), hb_upper(rc, beta)
    m_upper = _interval_margin(alpha, h1, up)
    m_lower = _interval_margin(alpha, 0.0, min(h1, h2))
    margin = max(m_upper, m_lower)
    if m_lower >= m_upper:
        detail = f"branch 0<alpha<=min(H1,H2)={min(h1, h2):.6g}"
    else:
        detail = f"branch H1={h1:.6g}<=alpha<={up:.6g}"
    if abs(margin) <= BOUNDARY_BAND:
        detail += "; boundary"
    return RegionVerdict(margin > 0, Route.THEOREM_HB, margin, detail)


# ---------------------------------------------------------------------------
# Nesterov closed form


def nag_n1(rc: RCParams, beta: float) -> float:
    """Step size where the FDI vertex reaches cos(w) = -1 (smaller root)."""
    q1 = 1 + 7 * beta + 2 * beta * beta
    k = 1 + 6 * beta + beta * beta
    disc = q1 * q1 - k * 4 * rc.mu * rc.lambda_ * beta * (1 + beta)
    return 2 * rc.mu * k / (q1 + math.sqrt(max(0.0, disc)))


def nag_vertex_lower(rc: RCParams, beta: float) -> float:
    """Step size where the FDI vertex reaches cos(w) = +1 (smaller root)."""
    b1 = 1 - beta + 2 * beta * beta
    c1 = 4 * rc.mu * rc.lambda_ * beta * (1 + beta) * (1 - beta) ** 2
    return 2 * rc.mu * (1 - beta) ** 2 / (b1 + math.sqrt(max(0.0, b1 * b1 - c1)))


def nag_r1(rc: RCParams, beta: float) -> float:
    return 2 * (beta + 1) * rc.mu / ((1 + rc.root) * (1 + 2 * beta))


def nag_vertex(rc: RCParams, alpha: float, beta: float) -> float:
    """Axis of symmetry S of the Nesterov FDI quadratic (alpha != mu)."""
    mu, lam = rc.mu, rc.lambda_
    num = (mu - alpha) * (1 + beta) ** 2 + (lam * alpha * alpha - alpha) * (beta + beta * beta)
    return num / (4 * mu * beta - 4 * alpha * beta)


def nag_g(rc: RCParams, alpha: float, beta: float, eta: float) -> float:
    mu, lam = rc.mu, rc.lambda_
    return (
        4 * mu * beta * eta * eta
        - 2 * (2 * mu * beta + mu * beta * beta - alpha * beta + mu - alpha) * eta
        + 2 * mu + 2 * mu * beta * beta - 2 * alpha - 2 * alpha * beta + lam * alpha * alpha
    )


VERTEX_RULES = ("printed", "nag")


def _vertex_ok(rc: RCParams, alpha: float, beta: float, rule: str) -> bool:
    s = nag_vertex(rc, alpha, beta)
    if rule == "printed":
        return nag_g(rc, alpha, beta, s) <= 0
    return float(fdi_polynomial(rc, AGDParams(alpha, beta, beta), s)) <= 0


def nag_n2(rc: RCParams, beta: float, vertex_rule: str = "printed", scan: int = 64, iters: int = 60) -> float:
    """Upper step-size limit from the interior-vertex condition.

    Scans alpha over (vertex_lower, N1) for the first point that violates the
    vertex condition and bisects the crossing.  Returns N1 if none fails.
    """
    if vertex_rule not in VERTEX_RULES:
        raise ValueError(f"vertex_rule must be one of {VERTEX_RULES}")
    lo_edge, hi_edge = nag_vertex_lower(rc, beta), nag_n1(rc, beta)
    if not hi_edge > lo_edge:
        return hi_edge
    grid = np.linspace(lo_edge, hi_edge, scan + 2)[1:-1]
    prev = lo_edge
    for a in grid:
        if abs(a - rc.mu) < 1e-15:
            continue
        if not _vertex_ok(rc, a, beta, vertex_rule):
            lo, hi = prev, a
            for _ in range(iters):
                mid = 0.5 * (lo + hi)
                if _vertex_ok(rc, mid, beta, vertex_rule):
                    lo = mid
                else:
                    hi = mid
            return lo
        prev = a
    return hi_edge


def nag_region(rc: RCParams, alpha: float, beta: float, vertex_rule: str = "printed") -> RegionVerdict:
    """Membership in the closed-form Nesterov region.

    ``vertex_rule="printed"`` evaluates the published function g at the vertex;
    ``"nag"`` evaluates the Nesterov FDI quadratic itself there.  The first is
    kept because it is what the closed form states; it disagrees with the exact
    FDI on part of the plane, so callers compare against ``fdi_exact``.
    """
    _check_beta(beta)
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    r1 = nag_r1(rc, beta)
    if alpha == rc.mu:
        # vertex formula divides by mu - alpha; linear FDI, worst at cos(w) = -1
        margin = r1 - alpha
        detail = f"alpha = mu, linear FDI; limit R1={r1:.6g}"
        if abs(margin) <= BOUNDARY_BAND:
            detail += "; boundary"
        return RegionVerdict(margin > 0, Route.THEOREM_NAG, margin, detail)
    n1 = nag_n1(rc, beta)
    n2 = nag_n2(rc, beta, vertex_rule)
    m_upper = _interval_margin(alpha, n1, r1)
    m_lower = _interval_margin(alpha, 0.0, min(n1, n2))
    margin = max(m_upper, m_lower)
    if m_lower >= m_upper:
        detail = f"branch 0<alpha<=min(N1,N2)={min(n1, n2):.6g} ({vertex_rule} vertex rule)"
    else:
        detail = f"branch N1={n1:.6g}<=alpha<R1={r1:.6g}"
    if abs(margin) <= BOUNDARY_BAND:
        detail += "; boundary"
    return RegionVerdict(margin > 0, Route.THEOREM_NAG, margin, detail)


# ---------------------------------------------------------------------------
# families, scans, thresholds


@dataclass(frozen=True)
class Family:
    """Maps a scalar momentum beta to (beta1, beta2).

    ``general`` uses beta1 = beta and beta2 = beta2_scale * beta + beta2_const.
    """

    name: str
    beta2_scale: float = 0.0
    beta2_const: float = 0.0

    def __post_init__(self):
        if self.name not in ("hb", "nag", "general"):
            raise ValueError(f"unknown family {self.name!r}")

    def params(self, alpha: float, beta: float) -> AGDParams:
        if self.name == "hb":
            return AGDParams(alpha, beta, 0.0)
        if self.name == "nag":
            return AGDParams(alpha, beta, beta)
        return AGDParams(alpha, beta, self.beta2_scale * beta + self.beta2_const)


HB = Family("hb")
NAG = Family("nag")


def evaluate(rc: RCParams, family: Family, alpha: float, beta: float, route: str = "fdi-exact",
             n_samples: int = 10_000) -> RegionVerdict:
    route = Route(route)
    if route is Route.FDI_EXACT:
        return fdi_exact(rc, family.params(alpha, beta))
    if route is Route.FDI_SAMPLED:
        return fdi_sampled(rc, family.params(alpha, beta), n_samples)
    if route is Route.THEOREM_HB:
        if family.name != "hb":
            raise ValueError("theorem-hb route only applies to the hb family")
        return hb_region(rc, alpha, beta)
    if family.name != "nag":
        raise ValueError("theorem-nag route only applies to the nag family")
    return nag_region(rc, alpha, beta)


@dataclass
class ScanResult:
    alphas: np.ndarray
    betas: np.ndarray
    verdicts: List[List[RegionVerdict]]  # [i_alpha][j_beta]

    def stable_mask(self) -> np.ndarray:
        return np.array([[v.stable for v in row] for row in self.verdicts], dtype=bool)

    def stable_count(self) -> int:
        return int(self.stable_mask().sum())


def _scan_row(args):
    rc, family, alpha, betas, route, n_samples = args
    return [evaluate(rc, family, alpha, float(b), route, n_samples) for b in betas]


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("AGD_RC_THREADS", "1")))
    except ValueError:
        return 1


def region_scan(rc: RCParams, family: Family, alpha_grid: Sequence[float], beta_grid: Sequence[float],
                route: str = "fdi-exact", n_samples: int = 10_000,
                workers: Optional[int] = None) -> ScanResult:
    """Evaluate every (alpha, beta) cell independently; rows are alphas."""
    alphas = np.asarray(alpha_grid, dtype=float)
    betas = np.asarray(beta_grid, dtype=float)
    if alphas.size == 0 or betas.size == 0:
        raise ValueError("grids must be nonempty")
    for g in (alphas, betas):
        if g.size > 1 and not (np.all(np.diff(g) > 0) or np.all(np.diff(g) < 0)):
            raise ValueError("grids must be monotone")
    jobs = [(rc, family, float(a), betas, route, n_samples) for a in alphas]
    workers = default_workers() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_scan_row, jobs))
    else:
        rows = [_scan_row(j) for j in jobs]
    return ScanResult(alphas, betas, rows)


def sup_stable_beta(rc: RCParams, alpha: float, family: Family, lo: float = 1e-6, hi: float = 1 - 1e-9,
                    tol: float = 1e-10, verdict: Optional[Callable] = None) -> float:
    """Bisection for the largest momentum keeping the point stable.

    Assumes stable at ``lo`` and unstable at ``hi`` and a single crossing.
    """
    verdict = verdict or (lambda b: fdi_exact(rc, family.params(alpha, b)).stable)
    if not verdict(lo):
        raise ValueError(f"point is not stable at beta={lo}")
    if verdict(hi):
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if verdict(mid):
            lo = mid
        else:
            hi = mid
    return lo


def boundary_probe(rc: RCParams, p: AGDParams, family: str = "general", band: float = BOUNDARY_BAND,
                   steps: int = 4) -> bool:
    """True when the exact verdict flips somewhere within ``band`` of the point.

    Probes along alpha and along the family's momentum direction(s).
    """
    center = fdi_exact(rc, p)
    if center.margin == 0:
        return True
    if family == "hb":
        dirs = [(1, 0, 0), (0, 1, 0)]
    elif family == "nag":
        dirs = [(1, 0, 0), (0, 1, 1)]
    else:
        dirs = [(1, 0, 0), (0, 1, 0), (0, 0, 1)]
    for da, db1, db2 in dirs:
        for t in np.linspace(-band, band, 2 * steps + 1).tolist():
            if t == 0:
                continue
            try:
                q = AGDParams(p.alpha + t * da, p.beta1 + t * db1, p.beta2 + t * db2)
            except ValueError:
                continue
            if fdi_exact(rc, q).stable != center.stable:
                return True
    return False
