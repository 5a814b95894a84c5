import os
import sys
import time
import argparse
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .config import AppConfig
from .errors import (InfeasibleAtNominal, NonTermination, NoUpperBound, NotConverged, ParseError,
                     StabRadError, UsageError)
from .utils_log import log_event, say, set_verbose
from .utils_paths import bundled_problem

from .services.matrix_core import normality_gap
from .services.perturbation_model import ProblemSpec
from .services.sensitivity import build_sensitivities, describe

from .pipelines.sr_la_pipeline import STATUS_INFEASIBLE, SRReport, sr_la
from .pipelines.sr_sla_pipeline import sr_sla
from .pipelines.oracle_pipeline import approximation_errors, normality_study, sr_oracle
from .pipelines.design_pipeline import design_sweep, solve_design

from .problem_io import parse_problem, write_problem
from .report_io import (design_report_to_dict, dumps_report, sr_report_to_dict, write_design_sweep_csv,
                        write_report, write_study_csv, write_sweep_csv, write_trace_csv)
from .tools.random_specs import random_stable_spec

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2
EXIT_NOT_CONVERGED = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; 2 means 'infeasible' here."""

    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (InfeasibleAtNominal, NoUpperBound)):
        return EXIT_INFEASIBLE
    if isinstance(exc, (NotConverged, NonTermination)):
        return EXIT_NOT_CONVERGED
    return EXIT_ERROR


def _resolve_problem(arg: str) -> str:
    """A path, or the name of a bundled problem ('case1')."""
    if os.path.exists(arg):
        return arg
    bundled = bundled_problem(arg)
    if os.path.exists(bundled):
        return bundled
    raise ParseError(f"problem file not found: {arg}")


def _load(args, cfg: AppConfig) -> tuple:
    spec, overrides = parse_problem(_resolve_problem(args.problem))
    return spec, cfg.with_overrides(overrides)


def _cli_overrides(cfg: AppConfig, **values: Any) -> AppConfig:
    return cfg.with_overrides({k: v for k, v in values.items() if v is not None})


def _emit(cfg: AppConfig, doc: Dict[str, Any], out: Optional[str]) -> None:
    print(dumps_report(doc), end="")
    if out:
        path = write_report(out, doc)
        log_event(cfg.session_log_file, "artifact_written", file=path)


def _parse_float_list(text: str, name: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",")]
    except ValueError:
        raise UsageError(f"{name}: expected comma-separated numbers, got {text!r}")


# ---------- commands ----------

def cmd_analyze(args, cfg: AppConfig) -> int:
    spec, cfg = _load(args, cfg)
    cfg = _cli_overrides(cfg, beta=args.beta, seed=args.seed, refine_final=True if args.refine_final else None)
    methods = ["la", "sla"] if args.method == "both" else [args.method]

    code = EXIT_OK
    reports: List[SRReport] = []
    for method in methods:
        t0 = time.perf_counter()
        if method == "la":
            rep = sr_la(spec, cfg)
        else:
            try:
                rep = sr_sla(spec, cfg)
            except InfeasibleAtNominal as e:
                say("sla", str(e))
                rep = SRReport(problem=spec.name, method="sla", status=STATUS_INFEASIBLE)
        log_event(cfg.session_log_file, "method_done", method=method, status=rep.status,
                  elapsed_sec=round(time.perf_counter() - t0, 6))
        if rep.status == STATUS_INFEASIBLE:
            print(f"SR_{method}({spec.name}): infeasible, the feasible set K is empty "
                  f"(no eigenvalue can be moved by a perturbation respecting the mask S)", file=sys.stderr)
            code = EXIT_INFEASIBLE
        reports.append(rep)

    doc = {
        "problem": spec.name,
        "reports": [sr_report_to_dict(r) for r in reports],
        "config": cfg.to_dict(),
    }
    _emit(cfg, doc, args.out)

    if args.trace_out:
        sla_reps = [r for r in reports if r.method == "sla" and r.trace is not None]
        if not sla_reps:
            raise UsageError("--trace-out needs --method sla or both")
        path = write_trace_csv(args.trace_out, sla_reps[0].trace)
        log_event(cfg.session_log_file, "artifact_written", file=path)
    return code


def cmd_sweep(args, cfg: AppConfig) -> int:
    spec, cfg = _load(args, cfg)
    if not args.gamma_max > 0:
        raise UsageError(f"--gamma-max must be > 0, got {args.gamma_max}")
    steps = args.steps if args.steps is not None else cfg.sweep_steps
    if steps < 2:
        raise UsageError(f"--steps must be >= 2, got {steps}")
    cfg = _cli_overrides(cfg, grid_points=args.grid_points)

    gammas = np.linspace(0.0, args.gamma_max, steps)
    rows = approximation_errors(spec, cfg, gammas, with_oracle=args.oracle, points_per_axis=cfg.grid_points)
    path = write_sweep_csv(args.out, rows, with_oracle=args.oracle)
    log_event(cfg.session_log_file, "artifact_written", file=path)

    if args.oracle:
        print(f"{spec.name}: {len(rows)} rows, max e_la = {max(r['e_la'] for r in rows):.6g}, "
              f"max e_sla = {max(r['e_sla'] for r in rows):.6g}")
    else:
        print(f"{spec.name}: {len(rows)} rows")
    print(path)
    return EXIT_OK


def cmd_design(args, cfg: AppConfig) -> int:
    spec, cfg = _load(args, cfg)
    cfg = _cli_overrides(cfg, restarts=args.restarts, seed=args.seed)

    if args.epsilon_sweep:
        parts = _parse_float_list(args.epsilon_sweep, "--epsilon-sweep")
        if len(parts) != 3 or int(parts[2]) != parts[2] or parts[2] < 1:
            raise UsageError("--epsilon-sweep expects a,b,N with N a positive integer")
        epsilons = np.linspace(parts[0], parts[1], int(parts[2]))
        rows = design_sweep(spec, epsilons, cfg, method=args.method)
        path = write_design_sweep_csv(args.out, rows)
        log_event(cfg.session_log_file, "artifact_written", file=path)
        print(path)
        return EXIT_OK if all(r["converged"] for r in rows) else EXIT_NOT_CONVERGED

    code = EXIT_OK
    try:
        rep = solve_design(spec, args.epsilon, cfg, method=args.method)
    except NotConverged as e:
        print(f"design: {e}", file=sys.stderr)
        rep = e.report
        code = EXIT_NOT_CONVERGED
    doc = design_report_to_dict(rep, cfg.to_dict())
    _emit(cfg, doc, args.out)
    return code


def cmd_oracle(args, cfg: AppConfig) -> int:
    spec, cfg = _load(args, cfg)
    cfg = _cli_overrides(cfg, grid_points=args.grid_points, bisect_tol=args.bisect_tol)
    value = sr_oracle(spec, cfg.grid_points, cfg.bisect_tol, cfg)
    print("%.17g" % value)
    return EXIT_OK


def cmd_normality(args, cfg: AppConfig) -> int:
    spec, cfg = _load(args, cfg)
    bundle = build_sensitivities(spec, tol_feas=cfg.tol_feas(spec.B, spec.C),
                                 simplicity_tol=cfg.simplicity_tol(spec.A))
    print(f"NG(A) = {normality_gap(spec.A):.17g}")
    for row in describe(bundle):
        re, im = row["eigenvalue"]
        print(f"k={row['k']} lambda={re:.10g}{im:+.10g}j "
              f"|P_r|={row['norm_P_r']:.17g} |S o P_r|={row['norm_masked_P_r']:.17g} "
              f"kappa={row['eigvec_condition']:.6g} feasible={'yes' if row['feasible'] else 'no'}")
    return EXIT_OK


def cmd_study(args, cfg: AppConfig) -> int:
    cfg = _cli_overrides(cfg, grid_points=args.grid_points)
    rows = normality_study(cfg, count=args.count, n=args.n, m=args.m, p=args.p, gamma=args.gamma,
                           seed=args.seed, points_per_axis=cfg.grid_points)
    path = write_study_csv(args.out, rows)
    log_event(cfg.session_log_file, "artifact_written", file=path)
    if rows:
        print(f"{len(rows)} triplets, median e_la = {np.median([r['e_la'] for r in rows]):.6g}, "
              f"median e_sla = {np.median([r['e_sla'] for r in rows]):.6g}")
    print(path)
    return EXIT_OK


def cmd_random_problem(args, cfg: AppConfig) -> int:
    rng = np.random.default_rng(args.seed)
    spec: ProblemSpec = random_stable_spec(rng, args.n, args.m, args.p,
                                           mask=np.eye(args.m or args.n, args.p or args.n) if args.identity_mask else None,
                                           name=args.name)
    path = write_problem(args.out, spec)
    log_event(cfg.session_log_file, "artifact_written", file=path)
    print(path)
    return EXIT_OK


# ---------- parser ----------

def build_parser(cfg: AppConfig) -> argparse.ArgumentParser:
    parser = _Parser(prog="stabrad", description="Approximate stability radii under sparse structured perturbations")
    parser.add_argument("--verbose", action="store_true", help="tagged progress lines on stderr")
    sub = parser.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p_an = sub.add_parser("analyze", help="SR_la / SR_sla of a problem file")
    p_an.add_argument("problem", help="problem file, or a bundled name like case1")
    p_an.add_argument("--method", choices=["la", "sla", "both"], default="la")
    p_an.add_argument("--beta", type=float, default=None, help="SLA step size")
    p_an.add_argument("--refine-final", action="store_true", help="bisect the last SLA step onto alpha = 0")
    p_an.add_argument("--seed", type=int, default=None, help="repair-noise seed")
    p_an.add_argument("--out", default=None, help="write the report JSON here")
    p_an.add_argument("--trace-out", default=None, help="write the SLA iteration trace CSV here")
    p_an.set_defaults(func=cmd_analyze)

    p_sw = sub.add_parser("sweep", help="alpha_la / alpha_sla (and exact alpha) over gamma in [0, gamma_max]")
    p_sw.add_argument("problem")
    p_sw.add_argument("--gamma-max", type=float, required=True)
    p_sw.add_argument("--steps", type=int, default=None, help=f"number of gamma values (default {cfg.sweep_steps})")
    p_sw.add_argument("--oracle", action="store_true", help="add the grid-search alpha and the errors")
    p_sw.add_argument("--grid-points", type=int, default=None)
    p_sw.add_argument("--out", required=True, help="CSV path")
    p_sw.set_defaults(func=cmd_sweep)

    p_de = sub.add_parser("design", help="minimum-norm Delta_o raising SR to epsilon")
    p_de.add_argument("problem")
    p_de.add_argument("--epsilon", type=float, default=None, help="target (default: design.epsilon of the file)")
    p_de.add_argument("--epsilon-sweep", default=None, help="a,b,N: solve for N targets in [a, b], write CSV")
    p_de.add_argument("--method", choices=["la", "sla"], default="la")
    p_de.add_argument("--restarts", type=int, default=None)
    p_de.add_argument("--seed", type=int, default=None)
    p_de.add_argument("--out", required=True)
    p_de.set_defaults(func=cmd_design)

    p_or = sub.add_parser("oracle", help="grid-search reference stability radius (<= 4 free entries)")
    p_or.add_argument("problem")
    p_or.add_argument("--grid-points", type=int, default=None)
    p_or.add_argument("--bisect-tol", type=float, default=None)
    p_or.set_defaults(func=cmd_oracle)

    p_no = sub.add_parser("normality", help="normality gap and per-eigenvalue sensitivity norms")
    p_no.add_argument("problem")
    p_no.set_defaults(func=cmd_normality)

    p_st = sub.add_parser("study", help="random-triplet normality gap vs approximation error")
    p_st.add_argument("--count", type=int, required=True)
    p_st.add_argument("--n", type=int, default=5)
    p_st.add_argument("--m", type=int, default=2)
    p_st.add_argument("--p", type=int, default=2)
    p_st.add_argument("--gamma", type=float, default=10.0)
    p_st.add_argument("--seed", type=int, default=0)
    p_st.add_argument("--grid-points", type=int, default=None)
    p_st.add_argument("--out", required=True)
    p_st.set_defaults(func=cmd_study)

    p_rp = sub.add_parser("random-problem", help="write a seeded random stable problem file")
    p_rp.add_argument("--n", type=int, required=True)
    p_rp.add_argument("--m", type=int, default=None)
    p_rp.add_argument("--p", type=int, default=None)
    p_rp.add_argument("--seed", type=int, default=0)
    p_rp.add_argument("--identity-mask", action="store_true", help="S = I instead of all ones")
    p_rp.add_argument("--name", default="random")
    p_rp.add_argument("--out", required=True)
    p_rp.set_defaults(func=cmd_random_problem)

    return parser


def run_cli(argv: Optional[Sequence[str]] = None, cfg: Optional[AppConfig] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        cfg = cfg or AppConfig()
        args = build_parser(cfg).parse_args(argv)
    except StabRadError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except SystemExit as e:
        # --help
        return int(e.code or 0)

    set_verbose(args.verbose or cfg.verbose)
    log_event(cfg.session_log_file, "session_start", argv=argv, cmd=args.cmd)
    t0 = time.perf_counter()
    try:
        code = args.func(args, cfg)
    except (StabRadError, ValueError, OSError) as e:
        code = exit_code_for(e)
        print(f"error: {e}", file=sys.stderr)
        log_event(cfg.session_log_file, "command_failed", cmd=args.cmd, error=str(e),
                  error_type=type(e).__name__, exit_code=code,
                  elapsed_sec=round(time.perf_counter() - t0, 6))
        return code

    log_event(cfg.session_log_file, "command_done", cmd=args.cmd, exit_code=code,
              elapsed_sec=round(time.perf_counter() - t0, 6))
    return code


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
