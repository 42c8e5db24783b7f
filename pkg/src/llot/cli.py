"""Command-line entry point: llot {regularize, quantum-check, mmot, sweep, selftest}.

All reports are deterministic JSON (sorted keys, no timestamps); identical
inputs produce byte-identical output.  Exit codes: 0 success, 1 validation
error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import fileio, presets
from .errors import NumericalError, ValidationError
from .grids import h1_seminorm_sqrt, marginal, separation, symmetrize
from .mmot import TransportProblem, check_dual, plan_separation, solve_lp, solve_sinkhorn
from .mollifier import BumpProfile
from .quantum import MixedStateKernel, kernel_eval, kinetic_trace, one_particle_density
from .quantum import quadratic_form, trace
from .regularizer import CoulombPair, build_regularized, density_of
from .regularizer import kinetic_of_sqrt, potential_error
from .semiclassics import sweep as run_sweep


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="llot", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", default=None, help="report path (default stdout)")
        p.add_argument("--threads", type=int, default=1,
                       help="parallelism cap (echoed; evaluation is serial)")

    p = sub.add_parser("regularize", help="build the pinned smoothing and verify it")
    p.add_argument("--plan", required=True)
    p.add_argument("--density", required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--checks", default="marginal",
                   help="comma list from {marginal,kinetic,potential}")
    p.add_argument("--mass-convention", default="auto",
                   choices=["auto", "probability", "particle-number"])
    common(p)

    p = sub.add_parser("quantum-check", help="verify the fermionic mixed state")
    p.add_argument("--plan", required=True)
    p.add_argument("--density", required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mass-convention", default="auto",
                   choices=["auto", "probability", "particle-number"])
    common(p)

    p = sub.add_parser("mmot", help="solve the pinned-marginal transport problem")
    p.add_argument("--density", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--solver", default="lp", choices=["lp", "sinkhorn"])
    p.add_argument("--beta", type=float, default=200.0)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--plan-out", dest="plan_out", default=None,
                   help="write the optimal plan JSON here")
    p.add_argument("--mass-convention", default="auto",
                   choices=["auto", "probability", "particle-number"])
    common(p)

    p = sub.add_parser("sweep", help="rate study of the trial upper bound")
    p.add_argument("--density", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--etas", default="1e-4:1e-1:10",
                   help="log-spaced range lo:hi:count")
    p.add_argument("--eps-min", type=float, default=None)
    p.add_argument("--csv", default=None, help="write per-eta records CSV here")
    p.add_argument("--mass-convention", default="auto",
                   choices=["auto", "probability", "particle-number"])
    common(p)

    p = sub.add_parser("selftest", help="run the built-in desk instances")
    common(p)
    return parser


def _emit(report: dict, out):
    text = fileio.write_report(out, report)
    if out is None:
        sys.stdout.write(text)


def _parse_etas(spec: str):
    parts = spec.split(":")
    if len(parts) != 3:
        raise ValidationError("etas must be lo:hi:count")
    lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    if lo <= 0 or hi <= lo or count < 2:
        raise ValidationError("etas range must satisfy 0 < lo < hi, count >= 2")
    return np.geomspace(lo, hi, count)


def _load(args):
    rho = fileio.read_density(args.density, convention=args.mass_convention,
                              n_particles=getattr(args, "n", None))
    return rho


def _cmd_regularize(args) -> dict:
    plan = fileio.read_plan(args.plan)
    rho = fileio.read_density(args.density, convention=args.mass_convention,
                              n_particles=plan.n)
    plan = symmetrize(plan)
    rp = build_regularized(plan, rho, args.eps)
    checks = [c.strip() for c in args.checks.split(",") if c.strip()]
    unknown = set(checks) - {"marginal", "kinetic", "potential"}
    if unknown:
        raise ValidationError(f"unknown checks: {sorted(unknown)}")
    result = {}
    if "marginal" in checks:
        result["marginal_l1_error"] = density_of(rp).l1_distance(rho)
    if "kinetic" in checks:
        lhs = kinetic_of_sqrt(rp)
        rhs = plan.n * (h1_seminorm_sqrt(rho)
                        + BumpProfile(rho.grid.dim).moments()[0] / args.eps**2)
        result["kinetic"] = {"lhs": lhs, "rhs": rhs, "ratio": lhs / rhs}
    if "potential" in checks:
        lhs, bound = potential_error(rp, CoulombPair())
        result["potential"] = {"lhs": lhs, "bound": bound,
                               "satisfied": bool(lhs <= bound)}
    return {
        "command": "regularize",
        "config": {"plan": args.plan, "density": args.density, "eps": args.eps,
                   "checks": checks, "threads": args.threads},
        "separation": rp.alpha if np.isfinite(rp.alpha) else "inf",
        "checks": result,
    }


def _cmd_quantum_check(args) -> dict:
    plan = fileio.read_plan(args.plan)
    rho = fileio.read_density(args.density, convention=args.mass_convention,
                              n_particles=plan.n)
    plan = symmetrize(plan)
    rp = build_regularized(plan, rho, args.eps)
    kernel = MixedStateKernel(rp)
    tr = trace(kernel)
    dens_err = one_particle_density(kernel).l1_distance(rho)
    rng = np.random.default_rng(args.seed)
    # diagonal identity on sampled support configurations
    max_abs = 0.0
    max_val = 0.0
    n_samples = min(args.samples, 2000)
    for _ in range(n_samples):
        a = rng.integers(rp.source.n_atoms)
        config = rp.source.configs[a] + rng.uniform(-2 * rp.eps, 2 * rp.eps,
                                                    size=(rp.n, rp.source.dim))
        diag = kernel_eval(kernel, config, config)
        direct = rp.evaluate(config)
        max_abs = max(max_abs, abs(diag - direct))
        max_val = max(max_val, abs(direct))
    analytic, quadrature = kinetic_trace(kernel)
    # positivity on random tensor-grid vectors
    worst = 0.0
    shape = (rp.grid.n_sites,) * rp.n
    for _ in range(min(100, args.samples)):
        psi = rng.standard_normal(shape)
        val = quadratic_form(kernel, psi)
        worst = min(worst, val / float((psi * psi).sum()))
    return {
        "command": "quantum-check",
        "config": {"plan": args.plan, "density": args.density, "eps": args.eps,
                   "samples": args.samples, "seed": args.seed,
                   "threads": args.threads},
        "trace": tr,
        "density_l1_error": dens_err,
        "diagonal_max_abs_error": max_abs,
        "diagonal_max_value": max_val,
        "kinetic": {"analytic": analytic, "quadrature": quadrature,
                    "rel_mismatch": abs(analytic - quadrature) / analytic},
        "positivity_min": worst,
    }


def _cmd_mmot(args) -> dict:
    rho = _load(args)
    problem = TransportProblem(n=args.n, marginal=rho)
    if args.solver == "lp":
        sol = solve_lp(problem)
        dual = check_dual(sol, problem, tol=args.tol)
        extra = {"duality_gap": sol.duality_gap,
                 "dual_feasible": bool(dual.ok),
                 "complementary_residual": dual.complementary_residual}
    else:
        sol = solve_sinkhorn(problem, beta=args.beta, tol=args.tol)
        extra = {"beta": args.beta, "iterations": sol.iterations}
    if args.plan_out:
        fileio.write_plan(args.plan_out, sol.plan)
    report = {
        "command": "mmot",
        "config": {"density": args.density, "n": args.n, "solver": args.solver,
                   "beta": args.beta, "tol": args.tol, "threads": args.threads},
        "value": sol.value,
        "marginal_residual": sol.marginal_residual,
        "separation": plan_separation(sol).alpha,
        "n_atoms": sol.plan.n_atoms,
    }
    report.update(extra)
    if rho.grid.dim != 3:
        report["dimension_note"] = (
            f"pairwise 1/|x-y| cost evaluated in dimension {rho.grid.dim}; "
            "the physical statement is for dimension 3"
        )
    return report


def _cmd_sweep(args) -> dict:
    rho = _load(args)
    etas = _parse_etas(args.etas)
    result = run_sweep(rho, args.n, etas, eps_min=args.eps_min)
    if args.csv:
        fileio.write_sweep_csv(args.csv, result.records)
    return {
        "command": "sweep",
        "config": {"density": args.density, "n": args.n, "etas": args.etas,
                   "eps_min": args.eps_min, "threads": args.threads},
        "e_ot": result.e_ot,
        "separation": result.alpha,
        "fitted_slope": result.fitted_slope,
        "records": [
            {"eta": r.eta, "eps_opt": r.eps_opt, "total": r.total,
             "gap": r.gap, "assembled_c": r.assembled_c,
             "scan_fallback": r.scan_fallback, "error": r.error}
            for r in result.records
        ],
    }


def _cmd_selftest(args) -> dict:
    checks = []

    def record(name, passed, detail):
        checks.append({"name": name, "passed": bool(passed), "detail": detail})

    for name, grid, plan, eps_list in presets.identity_fixtures():
        rho = marginal(plan, grid)
        for eps in eps_list:
            rp = build_regularized(plan, rho, eps)
            err = density_of(rp).l1_distance(rho)
            record(f"marginal-pinning:{name}:eps={eps:.6g}", err <= 1e-10,
                   {"l1_error": err})
            kernel = MixedStateKernel(rp)
            tr = trace(kernel)
            record(f"trace-one:{name}:eps={eps:.6g}", abs(tr - 1.0) <= 1e-10,
                   {"trace": tr})

    sol2 = solve_lp(TransportProblem(2, presets.two_site_density()))
    record("lp-two-site", abs(sol2.value - 1.0) <= 1e-10, {"value": sol2.value})
    sol3 = solve_lp(TransportProblem(3, presets.three_site_density()))
    record("lp-three-site", abs(sol3.value - 2.5) <= 1e-10, {"value": sol3.value})
    p16 = TransportProblem(2, presets.sixteen_site_density())
    sol16 = solve_lp(p16)
    dual16 = check_dual(sol16, p16)
    record("lp-16-site-dual", dual16.ok and sol16.duality_gap <= 1e-8,
           {"value": sol16.value, "duality_gap": sol16.duality_gap})

    ok = all(c["passed"] for c in checks)
    return {
        "command": "selftest",
        "config": {"threads": args.threads},
        "all_passed": ok,
        "checks": checks,
    }


_COMMANDS = {
    "regularize": _cmd_regularize,
    "quantum-check": _cmd_quantum_check,
    "mmot": _cmd_mmot,
    "sweep": _cmd_sweep,
    "selftest": _cmd_selftest,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        report = _COMMANDS[args.command](args)
    except ValidationError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except FileNotFoundError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except NumericalError as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return 2
    _emit(report, args.out)
    if args.command == "selftest" and not report["all_passed"]:
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
