"""agd-rc command line: region scans, certification, rates, simulation, RC checks."""
from __future__ import annotations

import argparse
import os
import re
import sys
from decimal import Decimal, InvalidOperation
from typing import List, Optional

import numpy as np

from . import analytic as an
from . import lmi
from . import output as out
from . import simulate as sim
from .model import AGDParams, RCParams, SectorBound, rc_to_sector, sector_to_rc

EXIT_OK, EXIT_INPUT, EXIT_DISAGREE = 0, 2, 3


class InputError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument parsing helpers


def parse_range(text: str) -> np.ndarray:
    """``lo:hi:step`` (hi included when on the grid) or a single number.

    Values are lo + i*step computed in decimal, so 0.01 steps do not drift.
    """
    parts = text.split(":")
    try:
        nums = [Decimal(s) for s in parts]
    except InvalidOperation:
        raise InputError(f"bad range {text!r}")
    if len(nums) == 1:
        return np.array([float(nums[0])])
    if len(nums) != 3:
        raise InputError(f"range must be lo:hi:step, got {text!r}")
    lo, hi, step = nums
    if step <= 0 or hi < lo:
        raise InputError(f"range needs step > 0 and hi >= lo, got {text!r}")
    # decimal arithmetic is exact here, so floor keeps every value <= hi
    n = int(((hi - lo) / step).to_integral_value(rounding="ROUND_FLOOR")) + 1
    return np.array([float(lo + i * step) for i in range(n)])


def parse_span(text: str):
    """``lo:hi`` for sampling intervals."""
    parts = text.split(":")
    if len(parts) != 2:
        raise InputError(f"interval must be lo:hi, got {text!r}")
    try:
        lo, hi = float(parts[0]), float(parts[1])
    except ValueError:
        raise InputError(f"bad interval {text!r}")
    if not hi > lo:
        raise InputError(f"interval needs hi > lo, got {text!r}")
    return lo, hi


def parse_list(text: str) -> List[float]:
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise InputError(f"bad number list {text!r}")


_NEG_VALUE = re.compile(r"^-[\d.]")


def _join_negative_values(argv: List[str]) -> List[str]:
    """Turn ``--flag -50:50`` into ``--flag=-50:50`` so argparse accepts it."""
    res: List[str] = []
    for tok in argv:
        if res and _NEG_VALUE.match(tok) and res[-1].startswith("--") and "=" not in res[-1]:
            res[-1] = f"{res[-1]}={tok}"
        else:
            res.append(tok)
    return res


def _rc(args) -> RCParams:
    try:
        return RCParams(float(args.mu), float(args.lambda_), getattr(args, "epsilon", None))
    except ValueError as e:
        raise InputError(str(e))


def _family(args) -> an.Family:
    if args.family == "general":
        return an.Family("general", args.beta2_scale, args.beta2_const)
    return an.Family(args.family)


def _point(args) -> AGDParams:
    try:
        if args.family == "hb":
            return AGDParams.heavy_ball(args.alpha, _need(args.beta, "--beta"))
        if args.family == "nag":
            return AGDParams.nesterov(args.alpha, _need(args.beta, "--beta"))
        return AGDParams(args.alpha, _need(args.beta1, "--beta1"), args.beta2)
    except ValueError as e:
        raise InputError(str(e))


def _need(v, name):
    if v is None:
        raise InputError(f"{name} is required for this family")
    return v


def _emit(args, payload: dict) -> None:
    try:
        out.write_text(getattr(args, "out", None), out.dumps(payload), sys.stdout)
    except OSError as e:
        raise InputError(f"cannot write {args.out}: {e}")


def _suffixed(path: str, tag: str) -> str:
    root, ext = os.path.splitext(path)
    return f"{root}_{tag}{ext}"


# ---------------------------------------------------------------------------
# commands


def cmd_region(args) -> int:
    mus, lams = parse_list(args.mu), parse_list(args.lambda_)
    alphas, betas = parse_range(args.alpha), parse_range(args.beta)
    family = _family(args)
    sweep = len(mus) > 1 or len(lams) > 1
    runs = []
    for mu in mus:
        for lam in lams:
            try:
                rc = RCParams(mu, lam)
            except ValueError as e:
                raise InputError(str(e))
            try:
                scan = an.region_scan(rc, family, alphas, betas, args.route, args.n_samples)
            except ValueError as e:
                raise InputError(str(e))
            tag = f"mu{mu:g}_lambda{lam:g}"
            csv_path = _suffixed(args.csv, tag) if sweep else args.csv
            svg_path = (_suffixed(args.svg, tag) if sweep else args.svg) if args.svg else None
            try:
                out.write_scan_csv(scan, csv_path)
                if svg_path:
                    out.write_text(svg_path, out.scan_svg(scan, title=f"{family.name} mu={mu:g} lambda={lam:g}"))
            except OSError as e:
                raise InputError(f"cannot write output: {e}")
            runs.append({"mu": mu, "lambda": lam, "csv": csv_path, "svg": svg_path,
                         "cells": int(alphas.size * betas.size), "stable_cells": scan.stable_count()})
    _emit(args, {"command": "region", "family": family.name, "route": args.route, "runs": runs})
    return EXIT_OK


def _verdict_dict(v: an.RegionVerdict) -> dict:
    return {"stable": v.stable, "route": v.route.value, "margin": v.margin, "detail": v.detail}


def certify_report(rc: RCParams, p: AGDParams, family: str, n_samples: int = 10_000,
                   vertex_rule: str = "printed") -> dict:
    """Run every route on one point and cross-check them."""
    exact = an.fdi_exact(rc, p)
    sampled = an.fdi_sampled(rc, p, n_samples)
    routes = {"fdi_exact": _verdict_dict(exact), "fdi_sampled": _verdict_dict(sampled)}
    verdicts = [exact.stable, sampled.stable]
    theorem_flag = None
    theorem_margin_small = False
    if family == "hb" and p.beta1 > 0:
        th = an.hb_region(rc, p.alpha, p.beta1)
        routes["theorem"] = _verdict_dict(th)
        verdicts.append(th.stable)
        theorem_margin_small = th.near_boundary()
    elif family == "nag" and p.beta1 > 0:
        th = an.nag_region(rc, p.alpha, p.beta1, vertex_rule)
        routes["theorem"] = _verdict_dict(th)
        # the published Nesterov region is reported, not used as an authority
        theorem_flag = th.stable == exact.stable

    interval = an.admissible_delta_interval(rc, p)
    lmi_block = {"found": False, "delta": None, "witness": None, "kypc": None}
    for delta in interval.points(5):
        prob = lmi.shifted_problem(rc, p, delta)
        ok, detail = lmi.check_kypc(prob.sys, prob.quad)
        if lmi_block["kypc"] is None:
            lmi_block["kypc"] = {"delta": delta, "ok": ok, **detail}
        w = lmi.find_feasible_p(prob)
        if w is not None:
            lmi_block.update(found=True, delta=delta, witness=w.as_dict(), kypc={"delta": delta, "ok": ok, **detail})
            break
    verdicts.append(lmi_block["found"])

    # FDI slack is not in parameter units, so the band is probed in (alpha, beta) directly
    boundary = an.boundary_probe(rc, p, family) or theorem_margin_small
    agreement = len(set(verdicts)) == 1
    report = {
        "command": "certify",
        "rc": {"mu": rc.mu, "lambda": rc.lambda_},
        "family": family,
        "params": {"alpha": p.alpha, "beta1": p.beta1, "beta2": p.beta2},
        "stable": exact.stable,
        "routes": routes,
        "delta_interval": {"lo": interval.lo, "hi": interval.hi, "nonempty": interval.nonempty},
        "kypc_alpha_bound": an.kypc_alpha_bound(rc, p.beta1, p.beta2),
        "lmi": lmi_block,
        "boundary": boundary,
        "agreement": agreement,
    }
    if theorem_flag is not None:
        report["theorem_agreement"] = theorem_flag
        report["vertex_rule"] = vertex_rule
    return report


def cmd_certify(args) -> int:
    rc = _rc(args)
    p = _point(args)
    report = certify_report(rc, p, args.family, args.n_samples, args.vertex_rule)
    _emit(args, report)
    if not report["agreement"] and not report["boundary"]:
        print("route disagreement outside the boundary band", file=sys.stderr)
        return EXIT_DISAGREE
    return EXIT_OK


def cmd_rate(args) -> int:
    rc = _rc(args)
    p = _point(args)
    if not args.tol > 0:
        raise InputError("--tol must be positive")
    cert = lmi.certify_rate(rc, p, args.tol)
    payload = {"command": "rate", "rc": {"mu": rc.mu, "lambda": rc.lambda_},
               "params": {"alpha": p.alpha, "beta1": p.beta1, "beta2": p.beta2}, "tol": args.tol}
    if cert is None:
        payload.update(certified=False, status="not certified")
    else:
        w = lmi.min_cond_p(rc, p, cert.rho, certificate=cert) or cert.witness
        payload.update(certified=True, status="certified", rho=cert.rho, delta=cert.delta,
                       P=w.p, cond_p=w.cond_p, witness=w.as_dict())
        if args.epsilon is not None:
            payload["epsilon"] = args.epsilon
            payload["safe_init_radius"] = sim.safe_init_radius(args.epsilon, w.cond_p)
    _emit(args, payload)
    return EXIT_OK


def _oracle(args) -> sim.GradOracle:
    if args.benchmark != "44":
        raise InputError(f"unknown benchmark {args.benchmark!r}")
    return sim.benchmark_44()


def cmd_simulate(args) -> int:
    oracle = _oracle(args)
    z0 = parse_list(args.init)
    zp = parse_list(args.init_prev) if args.init_prev else z0
    if len(z0) != oracle.dim or len(zp) != oracle.dim:
        raise InputError(f"initial points must have {oracle.dim} coordinate(s)")
    if args.max_iter < 1:
        raise InputError("--max-iter must be >= 1")
    runs = [("GD", AGDParams(args.alpha))]
    try:
        if args.hb_beta is not None:
            runs.append(("HB", AGDParams.heavy_ball(args.alpha, args.hb_beta)))
        if args.nag_beta is not None:
            runs.append(("NAG", AGDParams.nesterov(args.alpha, args.nag_beta)))
        if args.beta1 is not None:
            runs.append(("General", AGDParams(args.alpha, args.beta1, args.beta2)))
    except ValueError as e:
        raise InputError(str(e))
    try:
        os.makedirs(args.outdir, exist_ok=True)
    except OSError as e:
        raise InputError(f"cannot create {args.outdir}: {e}")
    summary = []
    for name, p in runs:
        try:
            trace = sim.run(oracle, name, p, z0, zp, args.max_iter, args.stop_tol)
        except sim.NonFiniteGradientError as e:
            summary.append({"algo": name, "status": "non-finite gradient", "detail": str(e)})
            continue
        path = os.path.join(args.outdir, f"trace_{name}.csv")
        try:
            sim.write_trace_csv(trace, oracle, path)
        except OSError as e:
            raise InputError(f"cannot write {path}: {e}")
        final = trace.points[-1]
        summary.append({"algo": name, "params": {"alpha": p.alpha, "beta1": p.beta1, "beta2": p.beta2},
                        "status": trace.status, "iterations": trace.iterations,
                        "final_dist": float(np.linalg.norm(final - oracle.minimizer)), "csv": path})
    payload = {"command": "simulate", "benchmark": args.benchmark, "init": z0, "init_prev": zp,
               "stop_tol": args.stop_tol, "runs": summary}
    if args.out is None:
        args.out = os.path.join(args.outdir, "summary.json")
    _emit(args, payload)
    return EXIT_OK


def cmd_verify_rc(args) -> int:
    oracle = _oracle(args)
    rc = _rc(args)
    lo, hi = parse_span(args.range)
    if args.n < 1:
        raise InputError("--n must be >= 1")
    pts = np.linspace(lo, hi, args.n)[:, None]
    try:
        rep = sim.verify_rc(oracle, rc, pts)
    except ValueError as e:
        raise InputError(str(e))
    _emit(args, {"command": "verify-rc", "benchmark": args.benchmark, "rc": {"mu": rc.mu, "lambda": rc.lambda_},
                 "range": [lo, hi], "n_points": rep.n_points, "passed": rep.passed, "min_slack": rep.min_slack,
                 "worst_point": rep.worst_point, "n_violations": rep.n_violations})
    return EXIT_OK


def cmd_convert(args) -> int:
    have_sector = args.m is not None or args.L is not None
    have_rc = args.mu is not None or args.lambda_ is not None
    if have_sector == have_rc:
        raise InputError("give either --m and --L, or --mu and --lambda")
    try:
        if have_sector:
            rc = sector_to_rc(SectorBound(_need(args.m, "--m"), _need(args.L, "--L")))
            payload = {"command": "convert", "direction": "sector-to-rc", "m": args.m, "L": args.L,
                       "mu": rc.mu, "lambda": rc.lambda_}
        else:
            s = rc_to_sector(RCParams(_need(args.mu, "--mu"), _need(args.lambda_, "--lambda")))
            payload = {"command": "convert", "direction": "rc-to-sector", "mu": args.mu, "lambda": args.lambda_,
                       "m": s.m_lo, "L": s.l_hi}
    except ValueError as e:
        raise InputError(str(e))
    _emit(args, payload)
    return EXIT_OK


# ---------------------------------------------------------------------------


def _add_point_args(sp, need_beta=True):
    sp.add_argument("--family", choices=["hb", "nag", "general"], default="hb")
    sp.add_argument("--mu", type=float, required=True)
    sp.add_argument("--lambda", dest="lambda_", type=float, required=True)
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--beta", type=float, help="momentum for hb / nag")
    sp.add_argument("--beta1", type=float, help="outer momentum (general)")
    sp.add_argument("--beta2", type=float, default=0.0, help="inner momentum (general)")
    sp.add_argument("--out", help="JSON output path (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="agd-rc", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("region", help="stability region on an (alpha, beta) grid")
    sp.add_argument("--family", choices=["hb", "nag", "general"], default="hb")
    sp.add_argument("--beta2-scale", type=float, default=0.0)
    sp.add_argument("--beta2-const", type=float, default=0.0)
    sp.add_argument("--mu", required=True, help="value or comma list")
    sp.add_argument("--lambda", dest="lambda_", required=True, help="value or comma list")
    sp.add_argument("--alpha", required=True, help="lo:hi:step")
    sp.add_argument("--beta", required=True, help="lo:hi:step")
    sp.add_argument("--route", choices=[r.value for r in an.Route], default="fdi-exact")
    sp.add_argument("--n-samples", type=int, default=10_000)
    sp.add_argument("--csv", default="region.csv")
    sp.add_argument("--svg")
    sp.add_argument("--out", help="JSON summary path (default stdout)")
    sp.set_defaults(func=cmd_region)

    sp = sub.add_parser("certify", help="all routes at one parameter point")
    _add_point_args(sp)
    sp.add_argument("--n-samples", type=int, default=10_000)
    sp.add_argument("--vertex-rule", choices=list(an.VERTEX_RULES), default="printed")
    sp.set_defaults(func=cmd_certify)

    sp = sub.add_parser("rate", help="bisect the certified linear rate")
    _add_point_args(sp)
    sp.add_argument("--tol", type=float, default=1e-3)
    sp.add_argument("--epsilon", type=float, help="RC radius for the safe initialization ball")
    sp.set_defaults(func=cmd_rate)

    sp = sub.add_parser("simulate", help="run GD / HB / NAG on a benchmark")
    sp.add_argument("--benchmark", default="44")
    sp.add_argument("--init", default="24", help="z_0 (comma list for n > 1)")
    sp.add_argument("--init-prev", help="z_{-1}; defaults to z_0")
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--hb-beta", type=float)
    sp.add_argument("--nag-beta", type=float)
    sp.add_argument("--beta1", type=float, help="also run the general method")
    sp.add_argument("--beta2", type=float, default=0.0)
    sp.add_argument("--max-iter", type=int, default=1000)
    sp.add_argument("--stop-tol", type=float, default=1e-6)
    sp.add_argument("--outdir", default=".")
    sp.add_argument("--out", help="summary JSON path (default OUTDIR/summary.json; - for stdout)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("verify-rc", help="check RC on a sampled interval")
    sp.add_argument("--benchmark", default="44")
    sp.add_argument("--mu", type=float, required=True)
    sp.add_argument("--lambda", dest="lambda_", type=float, required=True)
    sp.add_argument("--epsilon", type=float)
    sp.add_argument("--range", default="-50:50", help="lo:hi")
    sp.add_argument("--n", type=int, default=10_000)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_verify_rc)

    sp = sub.add_parser("convert", help="sector bound <-> RC constants")
    sp.add_argument("--m", type=float)
    sp.add_argument("--L", type=float)
    sp.add_argument("--mu", type=float)
    sp.add_argument("--lambda", dest="lambda_", type=float)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_convert)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(_join_negative_values(argv))
    try:
        return args.func(args)
    except InputError as e:
        print(f"agd-rc: error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
