"""Command-line driver.

    tpilu stencil --grid 40 --out cube40.mtx
    tpilu solve --matrix cube40.mtx --k 0 --method auto --threads 4
    tpilu bench --grid 40 --k 1 --threads 1,2,4
    tpilu pipeline-sim --bands 4 --nodes 4

Reports are flat ``key=value`` lines (``--format structured``, the
default) or an aligned listing (``--format human``).  Keys are documented
in ``docs/report-schema.md``.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Sequence

import numpy as np

from . import __version__
from .engine import default_band_size, pipeline_simulate
from .numeric import PivotPolicy, ZeroPivotError
from .solver import SolverConfig, solve
from .sparse import MatrixMarketError, gen_stencil_27pt, read_matrix_market, write_matrix_market

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NO_INPUT = 3
EXIT_PARSE = 4
EXIT_BREAKDOWN = 5
EXIT_NOT_CONVERGED = 6
EXIT_INCONSISTENT = 7

THREADS_ENV = "TPILU_THREADS"
REPORT_VERSION = 1


class UsageError(Exception):
    pass


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt(x) for x in v)
    return str(v)


def render(report: dict, style: str) -> str:
    if style == "human":
        width = max(len(k) for k in report)
        return "".join(f"{k.ljust(width)}  {_fmt(v)}\n" for k, v in report.items())
    return "".join(f"{k}={_fmt(v)}\n" for k, v in report.items())


def _emit(report: dict, args) -> None:
    text = render(report, args.format)
    if args.out_report:
        with open(args.out_report, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _threads(args) -> tuple[int, str]:
    if args.threads is not None:
        return args.threads, "flag"
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            w = int(env)
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
        if w < 1:
            raise UsageError(f"{THREADS_ENV} must be >= 1")
        return w, "env"
    return 1, "default"


def _load(args):
    if (args.matrix is None) == (args.grid is None):
        raise UsageError("give exactly one of --matrix or --grid")
    if args.grid is not None:
        if args.grid < 1:
            raise UsageError("--grid must be >= 1")
        return gen_stencil_27pt(args.grid), f"stencil27:{args.grid}"
    return read_matrix_market(args.matrix), args.matrix


def _config(args) -> SolverConfig:
    try:
        return SolverConfig(args.rtol, args.max_iters, args.failfast_window, args.failfast_growth)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _pivot(args) -> PivotPolicy:
    if args.pivot_perturb is None:
        return PivotPolicy()
    return PivotPolicy(perturb=True, eps=args.pivot_perturb)


def _header(command: str, a, source: str, k: int, w: int, wsrc: str, band_size: int) -> dict:
    return {
        "format_version": REPORT_VERSION,
        "tool_version": __version__,
        "command": command,
        "matrix": source,
        "n": a.n,
        "nnz": a.nnz,
        "k": k,
        "threads": w,
        "threads_source": wsrc,
        "band_size": band_size,
    }


def cmd_solve(args) -> int:
    a, source = _load(args)
    w, wsrc = _threads(args)
    bs = args.band_size or default_band_size(a.n, w)
    cfg = _config(args)
    report = _header("solve", a, source, args.k, w, wsrc, bs)
    report.update(method_requested=args.method, rtol=cfg.rtol, max_iters=cfg.max_iters,
                  failfast_window=cfg.failfast_window, failfast_growth=cfg.failfast_growth)
    try:
        x, rep, fr = solve(a, args.k, args.method, w, bs, cfg, pivot=_pivot(args))
    except ZeroPivotError as exc:
        report.update(outcome="factorization-breakdown", breakdown_row=exc.row, message=str(exc))
        _emit(report, args)
        return EXIT_BREAKDOWN
    abandoned = rep.attempts[0] if rep.attempts else None
    report.update(
        nbands=fr.partition.nbands,
        method=rep.method,
        outcome=rep.outcome,
        iterations=rep.iterations,
        final_residual=rep.final_residual,
        true_residual=rep.true_residual,
        failfast_engaged=abandoned is not None,
        failfast_outcome=abandoned.outcome if abandoned else "none",
        failfast_iterations=abandoned.iterations if abandoned else 0,
        output_entries=fr.pattern.nnz,
        entry_count_convention="stored-including-diagonal",
        fpa_factor=rep.fpa.factor,
        fpa_linv=rep.fpa.linv,
        fpa_uinv=rep.fpa.uinv,
        fpa_total=rep.fpa.total,
        fpa_factor_flops=rep.fpa.factor_flops,
        time_symbolic=fr.timings.get("symbolic", 0.0),
        time_numeric=fr.timings.get("numeric", 0.0),
        time_inverse=fr.timings.get("inverse", 0.0),
        time_iterations=rep.timings["iterations"] + rep.timings.get("abandoned_iterations", 0.0),
        residual_history=rep.residual_history,
    )
    if args.solution:
        np.savetxt(args.solution, x, fmt="%.17g")
    _emit(report, args)
    return EXIT_OK if rep.converged else EXIT_NOT_CONVERGED


def cmd_bench(args) -> int:
    a, source = _load(args)
    try:
        counts = [int(s) for s in args.threads_list.split(",") if s.strip()]
    except ValueError:
        raise UsageError("--threads must be a comma-separated list of integers") from None
    if not counts or min(counts) < 1:
        raise UsageError("--threads entries must be >= 1")
    bs = args.band_size or default_band_size(a.n, max(counts))
    cfg = _config(args)
    report = _header("bench", a, source, args.k, counts[0], "flag", bs)
    report["thread_counts"] = counts
    report["method_requested"] = args.method
    ref = None
    consistent = True
    status = EXIT_OK
    for i, w in enumerate(counts):
        try:
            x, rep, fr = solve(a, args.k, args.method, w, bs, cfg, pivot=_pivot(args))
        except ZeroPivotError as exc:
            report.update(outcome="factorization-breakdown", breakdown_row=exc.row, message=str(exc))
            _emit(report, args)
            return EXIT_BREAKDOWN
        if ref is None:
            ref = fr
        else:
            same = fr.filled == ref.filled and fr.fpa == ref.fpa and (
                fr.inverse is None or fr.inverse == ref.inverse)
            consistent &= same
        pre = "run.%d." % i
        report.update({
            pre + "threads": w,
            pre + "method": rep.method,
            pre + "outcome": rep.outcome,
            pre + "iterations": rep.iterations,
            pre + "output_entries": fr.pattern.nnz,
            pre + "fpa_total": rep.fpa.total,
            pre + "time_symbolic": fr.timings.get("symbolic", 0.0),
            pre + "time_numeric": fr.timings.get("numeric", 0.0),
            pre + "time_inverse": fr.timings.get("inverse", 0.0),
            pre + "time_iterations": rep.timings["iterations"],
        })
        if not rep.converged:
            status = EXIT_NOT_CONVERGED
    report["sequentially_consistent"] = consistent
    _emit(report, args)
    if not consistent:
        return EXIT_INCONSISTENT
    return status


def cmd_stencil(args) -> int:
    if args.grid < 1:
        raise UsageError("--grid must be >= 1")
    a = gen_stencil_27pt(args.grid)
    write_matrix_market(a, args.out)
    report = {"format_version": REPORT_VERSION, "command": "stencil", "grid": args.grid,
              "n": a.n, "nnz": a.nnz, "out": args.out}
    _emit(report, args)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    if args.bands < 1 or args.nodes < 1:
        raise UsageError("--bands and --nodes must be >= 1")
    tr = pipeline_simulate(args.bands, args.nodes)
    report = {
        "format_version": REPORT_VERSION,
        "command": "pipeline-sim",
        "bands": args.bands,
        "nodes": args.nodes,
        "messages": len(tr.messages),
        "timesteps": (tr.messages[-1].timestep + 1) if tr.messages else 0,
        "band_completion_steps": tr.completed_at,
    }
    for i, m in enumerate(tr.messages):
        report[f"msg.{i}"] = f"t={m.timestep} from={m.sender} to={m.receiver} band={m.band}"
    _emit(report, args)
    return EXIT_OK


def _add_solver_flags(p):
    src = p.add_argument_group("input")
    src.add_argument("--matrix", help="Matrix Market file")
    src.add_argument("--grid", type=int, help="use the 27-point stencil on a GRID^3 cube")
    p.add_argument("--k", type=int, default=1, help="level limit (default 1)")
    p.add_argument("--band-size", type=int, default=None,
                   help="rows per band (default max(16, n/(8*threads)))")
    p.add_argument("--method", choices=("base", "iilu", "auto"), default="auto")
    p.add_argument("--rtol", type=float, default=1e-8)
    p.add_argument("--max-iters", type=int, default=1000)
    p.add_argument("--failfast-window", type=int, default=10)
    p.add_argument("--failfast-growth", type=float, default=10.0)
    p.add_argument("--pivot-perturb", type=float, default=None, metavar="EPS",
                   help="replace vanishing pivots by EPS*max|a_i*| instead of failing")


def _add_output_flags(p):
    p.add_argument("--format", choices=("structured", "human"), default="structured")
    p.add_argument("--report", dest="out_report", default=None, help="write the report here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tpilu", description="Task-parallel ILU(k) preconditioned BiCGSTAB")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="factor and solve A x = A*1")
    _add_solver_flags(p)
    p.add_argument("--threads", type=int, default=None, help=f"workers (default ${THREADS_ENV} or 1)")
    p.add_argument("--solution", default=None, help="write x here, one value per line")
    _add_output_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="solve once per thread count and compare outputs")
    _add_solver_flags(p)
    p.add_argument("--threads", dest="threads_list", default="1,2,4", help="comma-separated thread counts")
    _add_output_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("stencil", help="write the 27-point stencil matrix")
    p.add_argument("--grid", type=int, required=True)
    p.add_argument("--out", required=True)
    _add_output_flags(p)
    p.set_defaults(func=cmd_stencil)

    p = sub.add_parser("pipeline-sim", help="simulate the ring broadcast of completed bands")
    p.add_argument("--bands", type=int, required=True)
    p.add_argument("--nodes", type=int, required=True)
    _add_output_flags(p)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))  # exits with EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"tpilu: cannot read input: {exc}", file=sys.stderr)
        return EXIT_NO_INPUT
    except (IsADirectoryError, PermissionError) as exc:
        print(f"tpilu: cannot read input: {exc}", file=sys.stderr)
        return EXIT_NO_INPUT
    except MatrixMarketError as exc:
        print(f"tpilu: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
