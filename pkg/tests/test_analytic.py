import decimal
import math
from decimal import Decimal

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

import oracles
from agd_rc import analytic as an
from agd_rc.model import AGDParams, RCParams

RC = RCParams(0.5, 0.5)


def test_kypc_alpha_bound_examples():
    assert an.kypc_alpha_bound(RC, 0, 0) == pytest.approx(2 * (1 + math.sqrt(0.75)) / 0.5, rel=1e-14)
    assert an.kypc_alpha_bound(RC, 0, 0) == pytest.approx(7.4641, abs=1e-4)
    assert an.kypc_alpha_bound(RCParams(1.0, 1.0), 0, 0) == pytest.approx(2.0)
    assert an.kypc_alpha_bound(RC, 0.59, 0) == pytest.approx(11.868, abs=1e-3)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 0.9), st.floats(0.0, 0.9), st.floats(0.01, 0.09))
def test_kypc_alpha_bound_monotone(b1, b2, step):
    lo = an.kypc_alpha_bound(RC, b1, b2)
    assert an.kypc_alpha_bound(RC, b1 + step, b2) > lo
    assert an.kypc_alpha_bound(RC, b1, b2 + step) < lo
    assert an.kypc_alpha_bound(RCParams(0.5, 0.5 + step), b1, b2) < lo


def test_admissible_delta_interval_example():
    iv = an.admissible_delta_interval(RC, AGDParams(0.1, 0.59))
    r = math.sqrt(0.75)
    assert iv.nonempty
    assert iv.lo == pytest.approx(-0.05 / (1 - r), rel=1e-12)
    assert iv.hi == pytest.approx(-0.05 / (1 + r), rel=1e-12)
    assert iv.lo == pytest.approx(-0.37321, abs=1e-5) and iv.hi == pytest.approx(-0.026795, abs=1e-6)
    pts = iv.points(5)
    assert len(pts) == 5 and all(iv.lo < d < iv.hi for d in pts)


def test_admissible_delta_interval_empty_beyond_bound():
    bound = an.kypc_alpha_bound(RC, 0.3, 0.1)
    assert not an.admissible_delta_interval(RC, AGDParams(bound * 1.0001, 0.3, 0.1)).nonempty
    assert an.admissible_delta_interval(RC, AGDParams(bound * 0.999, 0.3, 0.1)).nonempty
    assert an.admissible_delta_interval(RC, AGDParams(bound * 1.0001, 0.3, 0.1)).points() == []


def test_admissible_delta_interval_degenerate():
    rc = RCParams(1.0, 1.0)
    iv = an.admissible_delta_interval(rc, AGDParams(0.5, 0.2))
    assert iv.nonempty and iv.lo == iv.hi == -0.5
    assert iv.points() == [-0.5]
    # alpha*lambda beyond the Schur range
    iv = an.admissible_delta_interval(rc, AGDParams(2.5, 0.2))
    assert not iv.nonempty


@settings(max_examples=200, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(0.05, 1.0), st.floats(0.0, 0.95), st.floats(0.0, 0.95), st.floats(0.01, 1.2))
def test_admissible_iff_below_bound(mu, lamfrac, b1, b2, frac):
    rc = RCParams(mu, lamfrac / mu)
    bound = an.kypc_alpha_bound(rc, b1, b2)
    assume(abs(frac - 1) > 1e-6)
    iv = an.admissible_delta_interval(rc, AGDParams(frac * bound, b1, b2))
    assert iv.nonempty == (frac < 1)
    if iv.nonempty:
        assert iv.lo <= iv.hi < 0
        assert (iv.lo == iv.hi) == (rc.root == 0.0)


def test_fdi_exact_examples():
    assert an.fdi_exact(RC, AGDParams(0.1, 0.59)).stable
    assert not an.fdi_exact(RC, AGDParams(0.1, 0.60)).stable
    worst, where, _ = an.fdi_worst(RC, AGDParams(0.1))
    # gradient descent: linear in cos(w), worst at cos(w) = 1 with value -lambda alpha^2
    assert where == 1.0 and worst == pytest.approx(-0.005, abs=1e-15)
    v = an.fdi_exact(RC, AGDParams(0.1))
    assert v.stable and v.margin > 0 and v.route is an.Route.FDI_EXACT


def test_fdi_value_at_unit_frequency_is_minus_lambda_alpha_squared():
    for p in (AGDParams(0.3, 0.2, 0.7), AGDParams(1.1, 0.5), AGDParams(0.05, 0.9, 0.9)):
        assert float(an.fdi_polynomial(RC, p, 1.0)) == pytest.approx(-RC.lambda_ * p.alpha ** 2, rel=1e-12)


def test_fdi_matches_sampled_transfer_function():
    rng = np.random.default_rng(3)
    for _ in range(40):
        p = AGDParams(rng.uniform(0.01, 3), rng.uniform(0, 0.95), rng.uniform(0, 0.95))
        s_lo, _ = an.schur_delta_range(p.beta1, p.beta2)
        from agd_rc.model import build_shifted_quadform, build_shifted_system
        sys = build_shifted_system(p, 0.5 * s_lo)
        m = build_shifted_quadform(RC, p, 0.5 * s_lo).m
        w = np.linspace(0, np.pi, 17)
        g = sys.frequency_response(w)
        z = np.exp(1j * w)
        det = (z - sys.a[0, 0]) * (z - sys.a[1, 1]) - sys.a[0, 1] * sys.a[1, 0]
        lhs = (m[0, 0] * np.abs(g) ** 2 + 2 * m[0, 1] * g.real + m[1, 1]) * np.abs(det) ** 2
        np.testing.assert_allclose(lhs, an.fdi_polynomial(RC, p, np.cos(w)), atol=1e-10, rtol=1e-10)


@st.composite
def points(draw):
    mu = draw(st.floats(0.1, 1.5))
    lam = draw(st.floats(0.1, 1.0)) / mu
    b1 = draw(st.floats(0.0, 0.95))
    kind = draw(st.sampled_from(["hb", "nag", "free"]))
    b2 = 0.0 if kind == "hb" else b1 if kind == "nag" else draw(st.floats(0.0, 0.95))
    rc = RCParams(mu, lam)
    alpha = draw(st.floats(0.005, 1.2)) * an.kypc_alpha_bound(rc, b1, b2)
    return rc, AGDParams(alpha, b1, b2)


@settings(max_examples=300, deadline=None)
@given(points())
def test_fdi_exact_agrees_with_loop_transformed_oracle(pt):
    rc, p = pt
    v = an.fdi_exact(rc, p)
    assume(abs(v.margin) > 1e-6)
    assume(abs(p.alpha - an.kypc_alpha_bound(rc, p.beta1, p.beta2)) > 1e-9)
    assume(not an.boundary_probe(rc, p, band=1e-4))
    assert v.stable == oracles.loop_transformed_stable(rc.mu, rc.lambda_, p.alpha, p.beta1, p.beta2)


@settings(max_examples=200, deadline=None)
@given(points())
def test_fdi_sampled_agrees_with_exact(pt):
    rc, p = pt
    v = an.fdi_exact(rc, p)
    assume(v.margin > 1e-6 or not an.boundary_probe(rc, p, band=1e-4))
    assert an.fdi_sampled(rc, p, 10_000).stable == v.stable


@settings(max_examples=100, deadline=None)
@given(points(), st.integers(4, 400))
def test_fdi_sampled_half_and_full_circle_agree(pt, n):
    rc, p = pt
    half = an.fdi_sampled(rc, p, n)
    full = an.fdi_sampled(rc, p, 2 * n - 1, full_circle=True)
    assert half.stable == full.stable
    assert half.margin == pytest.approx(full.margin, rel=1e-9, abs=1e-12)


def test_fdi_sampled_examples():
    assert not an.fdi_sampled(RC, AGDParams(0.1, 0.60), 10_000).stable
    assert an.fdi_sampled(RC, AGDParams(0.1, 0.59), 10_000).stable
    with pytest.raises(ValueError):
        an.fdi_sampled(RC, AGDParams(0.1), 1)
    # tiny step: stable, worst value at w = 0 is -lambda alpha^2
    v = an.fdi_sampled(RC, AGDParams(1e-4), 1000)
    assert v.stable and "w=0" in v.detail


def test_degenerate_leading_coefficient():
    # alpha*beta2 == mu*beta1 makes the FDI linear in cos(w)
    rc = RCParams(0.5, 0.5)
    p = AGDParams(0.25, 0.25, 0.5)
    qa, _, _ = an.fdi_coefficients(rc, p, exact=True)
    assert qa == 0
    v = an.fdi_exact(rc, p)
    assert v.stable == oracles.loop_transformed_stable(0.5, 0.5, 0.25, 0.25, 0.5)


def test_near_zero_fdi_uses_exact_arithmetic():
    # pick the HB step where the worst FDI value crosses zero
    beta = 0.5
    h2 = an.hb_h2(RC, beta)
    for a in (h2 * (1 - 1e-12), h2 * (1 + 1e-12)):
        worst, _, sign = an.fdi_worst(RC, AGDParams(a, beta))
        assert sign == (worst > 0) - (worst < 0)
    assert an.fdi_exact(RC, AGDParams(h2 * (1 - 1e-9), beta)).stable
    assert not an.fdi_exact(RC, AGDParams(h2 * (1 + 1e-9), beta)).stable


# ---------------------------------------------------------------------------
# heavy ball


def test_hb_helpers():
    assert an.hb_h2(RC, 0.59) == pytest.approx(0.1023, abs=1e-4)
    assert an.hb_h2(RC, 0.59) >= 0.1
    assert an.hb_h2(RC, 0.60) == pytest.approx(0.0969, abs=1e-4)
    assert an.hb_h1(RC, 1e-12) == pytest.approx(0.5, rel=1e-9)
    assert an.hb_h2(RC, 1e-12) == pytest.approx(0.5, rel=1e-5)


@settings(max_examples=300, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(0.02, 1.0), st.floats(0.01, 0.99))
def test_hb_h2_simplified_matches_polynomial_form(mu, frac, beta):
    rc = RCParams(mu, frac / mu)
    # the polynomial form cancels badly as beta -> 1, so evaluate it in 50 digits
    with decimal.localcontext() as ctx:
        ctx.prec = 50
        m, lam, b = Decimal(rc.mu), Decimal(rc.lambda_), Decimal(beta)
        p1 = 4 * m * lam * b - b * b - 1 - 2 * b
        p2 = 2 * m * b + 2 * m * b * b - 2 * m * b ** 3 - 2 * m
        p3 = 4 * m * m * b ** 3 + 4 * m * m * b - 6 * m * m * b * b - m * m * b ** 4 - m * m
        ref = float((p2 - (p2 * p2 - 4 * p1 * p3).sqrt()) / (2 * p1))
    assert an.hb_h2(rc, beta) == pytest.approx(ref, rel=1e-12)
    assert an.hb_h2_from_polynomials(rc, beta) == pytest.approx(ref, rel=1e-5)


def test_hb_region_examples():
    v = an.hb_region(RC, 0.1, 0.59)
    assert v.stable and v.route is an.Route.THEOREM_HB and "min(H1,H2)" in v.detail
    assert not an.hb_region(RC, 0.1, 0.60).stable
    # upper branch [H1, 2(beta+1)mu/(1+r)] = [2.8333, 3] at mu = lambda = 1, beta = 0.5
    upper = an.hb_region(RCParams(1.0, 1.0), 2.9, 0.5)
    assert upper.stable and "H1=" in upper.detail
    assert an.fdi_exact(RCParams(1.0, 1.0), AGDParams(2.9, 0.5)).stable
    with pytest.raises(ValueError):
        an.hb_region(RC, 0.1, 0.0)
    with pytest.raises(ValueError):
        an.hb_region(RC, 0.1, 1.0)


def test_hb_threshold_matches_independent_oracle():
    ours = an.sup_stable_beta(RC, 0.1, an.HB)
    ref = oracles.bisect_sup(lambda b: oracles.loop_transformed_stable(0.5, 0.5, 0.1, b, 0.0), 0.01, 0.99, 1e-8)
    assert ours == pytest.approx(ref, abs=1e-5)
    theorem = an.sup_stable_beta(RC, 0.1, an.HB, verdict=lambda b: an.hb_region(RC, 0.1, b).stable)
    assert theorem == pytest.approx(ours, abs=1e-8)


@pytest.mark.parametrize("mu,lam", [(0.5, 0.5), (0.2, 0.8), (0.9, 0.9), (1.0, 1.0), (1.5, 0.3)])
def test_hb_region_equals_fdi_exact_off_boundary(mu, lam):
    rc = RCParams(mu, lam)
    for beta in np.linspace(0.02, 0.98, 25):
        for alpha in np.linspace(0.01, 3.0, 40):
            if min(abs(alpha - b) for b in an.hb_boundaries(rc, beta)) <= 1e-3:
                continue
            assert an.hb_region(rc, alpha, beta).stable == an.fdi_exact(rc, AGDParams(alpha, beta)).stable


# ---------------------------------------------------------------------------
# Nesterov


def test_nag_threshold_matches_independent_oracle():
    ours = an.sup_stable_beta(RC, 0.1, an.NAG)
    ref = oracles.bisect_sup(lambda b: oracles.loop_transformed_stable(0.5, 0.5, 0.1, b, b), 0.01, 0.99, 1e-8)
    assert ours == pytest.approx(ref, abs=1e-5)


def test_nag_alpha_equals_mu_branch():
    limit = (-1 + 0.25 + math.sqrt(0.75)) / (2 * 0.75)
    for beta in (0.5 * limit, 0.95 * limit):
        v = an.nag_region(RC, 0.5, beta)
        assert v.stable and "alpha = mu" in v.detail
        assert an.fdi_exact(RC, AGDParams(0.5, beta, beta)).stable
    for beta in (1.05 * limit, 2 * limit):
        assert not an.nag_region(RC, 0.5, beta).stable
        assert not an.fdi_exact(RC, AGDParams(0.5, beta, beta)).stable
    assert an.nag_r1(RC, limit) == pytest.approx(0.5, rel=1e-12)


def test_nag_small_beta_matches_gradient_descent():
    for alpha in (0.1, 0.4, 0.9, 1.02):
        gd = an.fdi_exact(RC, AGDParams(alpha)).stable
        assert an.nag_region(RC, alpha, 1e-9, "nag").stable == gd
        assert an.hb_region(RC, alpha, 1e-9).stable == gd


def test_nag_vertex_rule_nag_matches_fdi_exact():
    for alpha in np.linspace(0.02, 1.5, 30):
        for beta in np.linspace(0.02, 0.98, 30):
            p = AGDParams(alpha, beta, beta)
            if abs(alpha - RC.mu) < 1e-3 or an.boundary_probe(RC, p, "nag"):
                continue
            assert an.nag_region(RC, alpha, beta, "nag").stable == an.fdi_exact(RC, p).stable


def test_nag_printed_rule_is_reported_with_its_disagreement():
    # the published vertex function is quadratic in eta with heavy-ball coefficients;
    # at (0.1, 0.6) it rejects a point the exact analysis accepts
    assert an.fdi_exact(RC, AGDParams(0.1, 0.6, 0.6)).stable
    assert an.nag_region(RC, 0.1, 0.6, "nag").stable
    assert not an.nag_region(RC, 0.1, 0.6, "printed").stable
    with pytest.raises(ValueError):
        an.nag_n2(RC, 0.5, "other")


def test_nag_n1_is_root_of_vertex_condition():
    for beta in (0.2, 0.5, 0.8):
        n1 = an.nag_n1(RC, beta)
        # vertex sits at cos(w) = -1 there
        assert an.nag_vertex(RC, n1, beta) == pytest.approx(-1.0, abs=1e-9)
        lo = an.nag_vertex_lower(RC, beta)
        assert an.nag_vertex(RC, lo, beta) == pytest.approx(1.0, abs=1e-9)


# ---------------------------------------------------------------------------
# scans


def test_region_scan_single_cell_and_orientation():
    one = an.region_scan(RC, an.HB, [0.1], [0.59])
    assert one.verdicts[0][0] == an.fdi_exact(RC, AGDParams(0.1, 0.59))
    grid = an.region_scan(RC, an.NAG, [0.1, 0.2, 0.3], [0.3, 0.6])
    assert grid.stable_mask().shape == (3, 2)
    assert grid.verdicts[2][1] == an.fdi_exact(RC, AGDParams(0.3, 0.6, 0.6))
    with pytest.raises(ValueError):
        an.region_scan(RC, an.HB, [0.1, 0.3, 0.2], [0.5])
    with pytest.raises(ValueError):
        an.region_scan(RC, an.HB, [], [0.5])


def test_region_scan_routes_and_parallel():
    a, b = np.linspace(0.05, 1.5, 12), np.linspace(0.05, 0.95, 9)
    serial = an.region_scan(RC, an.HB, a, b, "theorem-hb")
    par = an.region_scan(RC, an.HB, a, b, "theorem-hb", workers=2)
    assert serial.verdicts == par.verdicts
    with pytest.raises(ValueError):
        an.region_scan(RC, an.HB, a, b, "theorem-nag")
    gen = an.region_scan(RC, an.Family("general", 1.0, 0.0), a, b)
    assert gen.verdicts == an.region_scan(RC, an.NAG, a, b).verdicts


def test_family_validation():
    with pytest.raises(ValueError):
        an.Family("other")
    assert an.Family("general", 0.5, 0.1).params(0.2, 0.4) == AGDParams(0.2, 0.4, 0.30000000000000004)


def test_region_grows_with_mu_on_sampled_lines():
    lam = 0.5
    rng = np.random.default_rng(11)
    reported = []
    for _ in range(60):
        mu0 = rng.uniform(0.1, 1.0)
        p = AGDParams(rng.uniform(0.01, 1.0), rng.uniform(0.05, 0.95))
        if not an.fdi_exact(RCParams(mu0, lam), p).stable:
            continue
        for mu in np.linspace(mu0, min(1 / lam, 2 * mu0), 8):
            if not an.fdi_exact(RCParams(mu, lam), p).stable:
                reported.append((mu0, mu, p))
    # failures are allowed only right next to the theorem boundary
    for mu0, mu, p in reported:
        assert an.boundary_probe(RCParams(mu, lam), p, "hb", band=1e-2)


def test_boundary_probe():
    assert an.boundary_probe(RC, AGDParams(0.1, 0.5942), "hb")
    assert not an.boundary_probe(RC, AGDParams(0.1, 0.59), "hb")
    assert not an.boundary_probe(RC, AGDParams(0.1, 0.7), "hb")
