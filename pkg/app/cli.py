"""Command-line entry point: ``python -m app.cli <command> [flags]``.

Exit codes: 0 on success, 1 when a verification fails or a solve breaks down,
2 on usage errors.
"""
import argparse
import json
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from app.core.config import settings
from app.core.errors import HardyFEMError, ParameterError
from app.core.logging import configure_logging
from app.schemas import CutoffParams, StudySpec
from app.services import analytic, assembly, reporting
from app.services.lemmas import CHECKS, verify_lemmas
from app.services.mesh import build_ball_mesh, build_interval_mesh, quality
from app.services.rates import fit_rate
from app.services.studies import run_study

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


def parse_levels(text: Optional[str], dim: int) -> List[int]:
    """``a..b`` or ``a``: refinement levels in 3D, exponents of 2 cell counts in 1D."""
    if text is None:
        return list(settings.RADIAL_LEVELS if dim == 1 else settings.BALL_LEVELS)
    try:
        if ".." in text:
            first, last = (int(part) for part in text.split("..", 1))
        else:
            first = last = int(text)
    except ValueError as exc:
        raise ParameterError(f"levels must look like a..b, got {text!r}") from exc
    if last < first:
        raise ParameterError(f"empty level range {text!r}")
    levels = list(range(first, last + 1))
    return [2 ** k for k in levels] if dim == 1 else levels


def parse_eps(text: Optional[str]) -> List[float]:
    if not text:
        return [2.0 ** -k for k in range(4, 10)]
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ParameterError(f"--eps expects a comma separated list, got {text!r}") from exc


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dim", type=int, choices=(1, 3), default=1, help="1: radial oracle, 3: ball meshes")
    parser.add_argument("--N", type=int, default=3, help="ambient dimension of the radial problem")
    parser.add_argument("--levels", help="a..b; 3D refinement levels or 1D exponents of 2")
    parser.add_argument("--lambda", dest="lambda_amp", type=float, default=0.0, help="subcritical amplitude")
    parser.add_argument("--alpha", type=float, default=1.0)
    parser.add_argument("--mu", type=float, default=0.25)
    parser.add_argument("--eps", help="comma separated cutoff scales")
    parser.add_argument("--tol", type=float, default=None, help="quadrature tolerance")
    parser.add_argument("--boundary", choices=("projected", "polyhedral"), default="projected")
    parser.add_argument("--grading", type=float, default=1.0, help="radial node grading exponent")
    parser.add_argument("--out", help="output path (stdout when omitted)")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    parser.add_argument("--log-level", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hardy-fem", description="Discrete Hardy constants and their convergence rates")
    commands = parser.add_subparsers(dest="command", required=True)

    mesh_info = commands.add_parser("mesh-info", help="mesh sizes and shape constants per level")
    _common(mesh_info)
    mesh_info.add_argument("--dump", choices=("mesh", "stiffness", "hardy"), help="write the finest mesh or matrix as text")

    for name, help_text in (
        ("hardy", "discrete Hardy constant study"),
        ("critical", "first eigenvalue of the critical operator"),
        ("subcritical", "first eigenvalue with a subcritical potential"),
    ):
        command = commands.add_parser(name, help=help_text)
        _common(command)
        if name == "critical":
            command.add_argument("--weighted", action="store_true", help="use the |x|^-(N-2) weighted pencil")

    radial = commands.add_parser("radial", help="radial oracle study of any problem kind")
    _common(radial)
    radial.add_argument(
        "--kind", choices=("hardy", "critical", "subcritical", "weighted_mu", "log_hardy"), default="hardy"
    )

    minseq = commands.add_parser("minseq", help="energy integrals of the truncated minimising sequence")
    _common(minseq)
    minseq.add_argument("--h2", action="store_true", help="also report the squared Hessian norm")

    verify = commands.add_parser("verify", help="run the named verification checks")
    _common(verify)
    verify.add_argument("--select", help="comma separated subset of: " + ", ".join(CHECKS))
    verify.add_argument("--quick", action="store_true", help="coarser level schedules")

    fit = commands.add_parser("fit", help="fit a rate to a study CSV or JSON report")
    _common(fit)
    fit.add_argument("--input", required=True)
    fit.add_argument("--model", choices=("power_in_h", "power_in_log"), default="power_in_h")
    return parser


def _emit(text: str, args: argparse.Namespace) -> None:
    if args.out:
        reporting.write_output(text, args.out)
    else:
        sys.stdout.write(text)


def _study(args: argparse.Namespace, kind: str) -> int:
    spec = StudySpec(
        kind=kind,
        domain="radial" if args.dim == 1 else "ball",
        N=args.N,
        lambda_amp=args.lambda_amp,
        levels=parse_levels(args.levels, args.dim),
        boundary=args.boundary,
        grading=args.grading,
        tol=args.tol,
    )
    report = run_study(spec)
    text = reporting.report_to_json(report) + "\n" if args.format == "json" else reporting.report_to_csv(report)
    _emit(text, args)
    return EXIT_OK


def _mesh_info(args: argparse.Namespace) -> int:
    rows = []
    mesh = None
    for level in parse_levels(args.levels, args.dim):
        mesh = build_interval_mesh(level, args.grading) if args.dim == 1 else build_ball_mesh(level, args.boundary)
        q = quality(mesh)
        rows.append({
            "level": level,
            "vertices": mesh.n_vertices,
            "cells": mesh.n_cells,
            "dofs": assembly.dof_map(mesh).n_dofs,
            "h": q.h,
            "h_min": q.h_min,
            "sigma": q.sigma,
            "quasi_uniform_ratio": q.quasi_uniform_ratio,
            "volume": q.volume,
        })

    if args.dump:
        N = args.N if args.dim == 1 else None
        match args.dump:
            case "mesh":
                text = reporting.mesh_to_text(mesh)
            case "stiffness":
                text = reporting.matrix_to_text(assembly.assemble_stiffness(mesh, N))
            case _:
                text = reporting.matrix_to_text(assembly.assemble_hardy_mass(mesh, N, args.tol))
    elif args.format == "json":
        text = json.dumps(rows, indent=2) + "\n"
    else:
        header = list(rows[0])
        lines = [",".join(header)]
        lines += [",".join(reporting.format_number(row[key]) for key in header) for row in rows]
        text = "\n".join(lines) + "\n"
    _emit(text, args)
    return EXIT_OK


def _minseq(args: argparse.Namespace) -> int:
    reports = [
        analytic.minseq_report(
            CutoffParams(eps=eps, mu=args.mu, alpha=args.alpha, N=args.N),
            tol=args.tol or settings.ASSEMBLY_TOL,
            with_h2=args.h2,
        )
        for eps in parse_eps(args.eps)
    ]
    if args.format == "json":
        text = json.dumps([r.model_dump() for r in reports], indent=2) + "\n"
    else:
        fields = ["eps", "mu", "alpha", "N", "A_eps", "B_eps", "ratio", "h2_norm_sq"]
        lines = [",".join(fields)]
        lines += [",".join(reporting.format_number(getattr(r, f)) for f in fields) for r in reports]
        text = "\n".join(lines) + "\n"
    _emit(text, args)
    return EXIT_OK


def _verify(args: argparse.Namespace) -> int:
    selection = [name.strip() for name in args.select.split(",")] if args.select else None
    report = verify_lemmas(selection, quick=args.quick)
    _emit(report.model_dump_json(indent=2) + "\n", args)
    return EXIT_OK if report.passed else EXIT_FAILED


def _fit(args: argparse.Namespace) -> int:
    with open(args.input, encoding="utf-8") as handle:
        text = handle.read()
    if text.lstrip().startswith("{"):
        rows = reporting.report_from_json(text).rows
    else:
        rows = reporting.rows_from_csv(text)
    points = [(row.h, row.error) for row in rows if row.error is not None]
    result = fit_rate(points, args.model)
    _emit(result.model_dump_json(indent=2) + "\n", args)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)

    try:
        match args.command:
            case "mesh-info":
                return _mesh_info(args)
            case "hardy" | "subcritical":
                return _study(args, args.command)
            case "critical":
                return _study(args, "weighted_mu" if args.weighted else "critical")
            case "radial":
                args.dim = 1
                return _study(args, args.kind)
            case "minseq":
                return _minseq(args)
            case "verify":
                return _verify(args)
            case "fit":
                return _fit(args)
    except (ParameterError, ValidationError, FileNotFoundError) as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    except HardyFEMError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return EXIT_FAILED
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
