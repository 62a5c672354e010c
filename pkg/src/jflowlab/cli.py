"""Command-line orchestration of experiments.

Subcommands: check-cone, run-flow, solve-elliptic, acceptance.
Exit codes: 0 success, 2 validation failure, 3 designed fallback
(e.g. degenerate solve routed to continuation), 4 numerical failure.
"""

import argparse
import concurrent.futures
import json
import sys
from pathlib import Path

import numpy as np

from . import fieldio
from .config import load_config
from .errors import (ConfigError, ContinuationRequired, JFlowError,
                     NewtonError, NonFiniteError, PositivityError,
                     ValidationError)
from .flow import FlowContext, run_to_convergence
from .geometry import random_bandlimited, subsolution_check, zero_potential

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_FALLBACK = 3
EXIT_NUMERICAL = 4


def _load(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = int(args.seed)
        cfg.raw = dict(cfg.raw, seed=int(args.seed))
    return cfg


def _out_dir(cfg, args):
    out = Path(args.out) if args.out else Path(cfg.output["directory"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(report, out_dir, name):
    text = json.dumps(report, indent=2, sort_keys=True, default=fieldio._jsonable)
    print(text)
    if out_dir is not None:
        (out_dir / name).write_text(text + "\n")


def cmd_check_cone(args):
    """Validate theta (semi-positivity and, when declared, the degeneracy
    bound) and report the cone-condition margin for the candidate metric."""
    cfg = _load(args)
    out = _out_dir(cfg, args)
    grid = cfg.build_grid()
    theta = cfg.build_theta(grid)
    beta = float(cfg.geometry.get("beta", 0.0))
    validation = theta.validate()
    report = {
        "config_hash": fieldio.config_hash(cfg.hashable()),
        "theta_min_eig": validation.min_eig,
        "theta_min_eig_at": list(validation.location),
        "theta_psd": validation.psd_ok,
        "class_trace": validation.class_trace,
        "degeneracy_ok": validation.degeneracy_ok,
        "c0_effective": validation.c0_effective,
        "warnings": list(validation.messages),
    }
    if validation.class_trace <= 0.0:
        report["warnings"].append(
            "degenerate class: the twist form integrates to zero against "
            "omega^(n-1), outside the admissible family")
    if not validation.psd_ok or validation.degeneracy_ok is False:
        report["margin"] = None
        _emit(report, out, "check_cone.json")
        return EXIT_VALIDATION
    from .geometry import cohomology_constant
    c_beta = cohomology_constant(theta, beta)
    candidate = zero_potential(grid)
    sub_modes = cfg.geometry.get("subsolution_modes") or []
    if sub_modes:
        from .config import _parse_mode
        from .geometry import potential_from_modes
        candidate = potential_from_modes(grid, [_parse_mode(m, grid.n) for m in sub_modes])
    sub = subsolution_check(candidate, theta, c_beta)
    report.update({
        "c_beta": c_beta,
        "margin": sub.margin,
        "margin_at": list(sub.location),
    })
    _emit(report, out, "check_cone.json")
    return EXIT_OK if sub.passed else EXIT_VALIDATION


def _single_epsilon_run(cfg_raw, epsilon, out_dir_str):
    """Worker for --parallel: one epsilon entry, cold start, own directory."""
    import dataclasses

    cfg = load_config(cfg_raw)
    cfg.flow = dataclasses.replace(cfg.flow, epsilon_schedule=(epsilon,))
    setup = cfg.build_setup()
    phi0 = cfg.initial_potential(setup.grid)
    out = Path(out_dir_str)
    out.mkdir(parents=True, exist_ok=True)
    chash = fieldio.config_hash(cfg.hashable())
    ctx = FlowContext(setup, epsilon, cfg.flow)
    result = run_to_convergence(phi0, setup, epsilon, cfg.flow, ctx=ctx)
    fieldio.write_series(out / "flow_e00.csv", result.series, chash)
    fieldio.write_field(out / "phi_e00", result.phi.values, "potential",
                        {"n": setup.grid.n, "N": setup.grid.N, "epsilon": epsilon})
    return {
        "epsilon": epsilon,
        "converged": bool(result.converged),
        "steps": result.steps,
        "sup_abs_dphi": result.sup_abs_dphi,
        "oscillation": result.phi.oscillation(),
    }


def cmd_run_flow(args):
    """Run the epsilon continuation (warm-started), flushing per-epsilon
    series, final fields and a JSON summary. Exit 0 iff every run converged."""
    cfg = _load(args)
    out = _out_dir(cfg, args)
    chash = fieldio.config_hash(cfg.hashable())
    try:
        setup = cfg.build_setup()
    except ConfigError as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    phi0 = cfg.initial_potential(setup.grid)
    schedule = cfg.flow.epsilon_schedule
    summary = {"config_hash": chash, "runs": [], "parallel": int(args.parallel)}
    if args.parallel > 1 and len(schedule) > 1:
        # Independent entries fan out cold-started into isolated directories.
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.parallel) as pool:
            futures = [
                pool.submit(_single_epsilon_run, cfg.raw, eps, str(out / f"eps{i:02d}"))
                for i, eps in enumerate(schedule)
            ]
            for fut in futures:
                summary["runs"].append(fut.result())
        ok = all(r["converged"] for r in summary["runs"])
        fieldio.write_summary(out / "summary.json", summary)
        return EXIT_OK if ok else EXIT_NUMERICAL
    from .flow import epsilon_continuation
    try:
        cont = epsilon_continuation(phi0, setup, cfg.flow)
    except (PositivityError, NonFiniteError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for i, run in enumerate(cont.runs):
        fieldio.write_series(out / f"flow_e{i:02d}.csv", run.result.series, chash)
        fieldio.write_field(out / f"phi_e{i:02d}", run.result.phi.values, "potential",
                            {"n": setup.grid.n, "N": setup.grid.N, "epsilon": run.epsilon})
        summary["runs"].append({
            "epsilon": run.epsilon,
            "converged": bool(run.result.converged),
            "steps": run.result.steps,
            "rejections": run.result.rejections,
            "sup_abs_dphi": run.result.sup_abs_dphi,
            "oscillation": run.oscillation,
            "weighted_c2": run.weighted_c2_final,
            "min_eig": run.min_eig_final,
            "shift_from_previous": None if np.isnan(run.shift_from_previous)
            else run.shift_from_previous,
        })
    summary["converged_all"] = bool(cont.converged_all)
    summary["oscillation_max"] = cont.oscillation_max
    summary["oscillation_last_variation"] = cont.oscillation_last_variation
    summary["weighted_c2_last_variation"] = cont.weighted_c2_last_variation
    fieldio.write_summary(out / "summary.json", summary)
    return EXIT_OK if cont.converged_all else EXIT_NUMERICAL


def _solve_one_seed(cfg_raw, seed_index, out_dir_str):
    cfg = load_config(cfg_raw)
    setup = cfg.build_setup()
    from .elliptic import EllipticProblem, newton_solve
    problem = EllipticProblem.twisted_j_equation(
        setup, normalization=cfg.solver["normalization"])
    u0 = _seed_potential(cfg, setup, seed_index)
    result = newton_solve(problem, u0, tol=cfg.solver["tol"],
                          max_iter=cfg.solver["max_iter"])
    out = Path(out_dir_str)
    out.mkdir(parents=True, exist_ok=True)
    fieldio.write_field(out / f"u_seed{seed_index:02d}", result.u.values, "potential",
                        {"n": setup.grid.n, "N": setup.grid.N})
    return {"seed_index": seed_index, "sup_residual": result.sup_residual,
            "iterations": result.iterations}


def _seed_potential(cfg, setup, index):
    if index == 0:
        return zero_potential(setup.grid)
    from .geometry import PotentialField, omega_phi
    rng = np.random.default_rng(cfg.seed + index)
    seed = random_bandlimited(setup.grid, rng,
                              max_mode=int(cfg.solver["seed_max_mode"]),
                              amplitude=float(cfg.solver["seed_amplitude"]))
    while omega_phi(seed).min_eig()[0] < 0.1:
        seed = PotentialField(setup.grid, 0.5 * seed.values)
    return seed


def cmd_solve_elliptic(args):
    """Newton solve of the stationary equation; optional uniqueness probe
    across seeds. Degenerate twist with beta = 0 exits 3 by design."""
    cfg = _load(args)
    out = _out_dir(cfg, args)
    chash = fieldio.config_hash(cfg.hashable())
    try:
        setup = cfg.build_setup()
    except ConfigError as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    from .elliptic import EllipticProblem, newton_solve, uniqueness_probe
    problem = EllipticProblem.twisted_j_equation(
        setup, normalization=cfg.solver["normalization"])
    nseeds = int(cfg.solver["seeds"])
    report = {"config_hash": chash, "subsolution_margin": problem.subsolution_margin}
    try:
        if nseeds > 1 and args.parallel > 1:
            with concurrent.futures.ProcessPoolExecutor(max_workers=args.parallel) as pool:
                futures = [pool.submit(_solve_one_seed, cfg.raw, i, str(out / f"seed{i:02d}"))
                           for i in range(nseeds)]
                seed_reports = [f.result() for f in futures]
            report["seeds"] = seed_reports
            solutions = [fieldio.read_field(out / f"seed{i:02d}" / f"u_seed{i:02d}")[0]
                         for i in range(nseeds)]
            worst = 0.0
            for i in range(nseeds):
                for j in range(i + 1, nseeds):
                    a = solutions[i] - solutions[i].mean()
                    b = solutions[j] - solutions[j].mean()
                    worst = max(worst, float(np.abs(a - b).max()))
            report["max_pairwise_diff"] = worst
        elif nseeds > 1:
            seeds = [_seed_potential(cfg, setup, i) for i in range(nseeds)]
            probe = uniqueness_probe(problem, seeds, tol=cfg.solver["tol"],
                                     max_iter=cfg.solver["max_iter"])
            for i, sol in enumerate(probe.solutions):
                fieldio.write_field(out / f"u_seed{i:02d}", sol.values, "potential",
                                    {"n": setup.grid.n, "N": setup.grid.N})
            report["seeds"] = [{"seed_index": i, "sup_residual": r}
                               for i, r in enumerate(probe.residuals)]
            report["max_pairwise_diff"] = probe.max_pairwise_diff
            report["agree"] = probe.agree
        else:
            result = newton_solve(problem, _seed_potential(cfg, setup, 0),
                                  tol=cfg.solver["tol"],
                                  max_iter=cfg.solver["max_iter"])
            fieldio.write_field(out / "u", result.u.values, "potential",
                                {"n": setup.grid.n, "N": setup.grid.N})
            report["sup_residual"] = result.sup_residual
            report["iterations"] = result.iterations
    except ContinuationRequired as exc:
        report["fallback"] = str(exc)
        _emit(report, out, "elliptic.json")
        return EXIT_FALLBACK
    except (NewtonError, PositivityError, NonFiniteError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    _emit(report, out, "elliptic.json")
    return EXIT_OK


def cmd_acceptance(args):
    """Run the acceptance suite end to end; prints one pass/fail line per
    criterion and writes a machine-readable table."""
    from . import acceptance
    overrides = {}
    criteria = None
    seed = 0
    out = None
    if args.config:
        cfg = _load(args)
        overrides = cfg.acceptance.get("tolerances", {})
        criteria = cfg.acceptance.get("criteria")
        seed = cfg.seed
        out = _out_dir(cfg, args)
    elif args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
    if args.criteria:
        criteria = [c.strip() for c in args.criteria.split(",") if c.strip()]
    if args.seed is not None:
        seed = int(args.seed)
    results = acceptance.run_suite(criteria=criteria, overrides=overrides, seed=seed)
    table = []
    all_pass = True
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        all_pass = all_pass and res.passed
        print(f"{status} {res.key}: {res.summary}")
        table.append({"criterion": res.key, "passed": res.passed,
                      "summary": res.summary, "details": res.details})
    if out is not None:
        fieldio.write_summary(out / "acceptance.json", {"results": table})
    return EXIT_OK if all_pass else EXIT_NUMERICAL


def build_parser():
    parser = argparse.ArgumentParser(
        prog="jflowlab",
        description="Twisted J-flow laboratory on the flat periodic torus")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required,
                       help="path to a YAML experiment config")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--parallel", type=int, default=1,
                       help="fan independent schedule entries / seeds across workers")

    p = sub.add_parser("check-cone", help="validate theta and the cone condition")
    common(p)
    p.set_defaults(func=cmd_check_cone)
    p = sub.add_parser("run-flow", help="run the (continued) flow to convergence")
    common(p)
    p.set_defaults(func=cmd_run_flow)
    p = sub.add_parser("solve-elliptic", help="Newton solve of the stationary equation")
    common(p)
    p.set_defaults(func=cmd_solve_elliptic)
    p = sub.add_parser("acceptance", help="run the acceptance suite")
    common(p, config_required=False)
    p.add_argument("--criteria", default=None,
                   help="comma-separated criterion keys (default: all)")
    p.set_defaults(func=cmd_acceptance)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        code = args.func(args)
    except ConfigError as exc:
        print(f"config rejected: {exc}", file=sys.stderr)
        code = EXIT_VALIDATION
    except ContinuationRequired as exc:
        print(f"designed fallback: {exc}", file=sys.stderr)
        code = EXIT_FALLBACK
    except JFlowError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        code = EXIT_NUMERICAL
    return code


if __name__ == "__main__":
    sys.exit(main())
