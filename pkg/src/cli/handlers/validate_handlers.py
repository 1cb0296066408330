"""
Validate Handlers - analytic engine against oracle, Monte Carlo, Laplace and residual checks
"""
import argparse
import sys
from pathlib import Path
from typing import Any, Dict, Sequence

from src.services.crosscheck_service import MODES, CrosscheckService
from src.services.report_builder import ReportBuilder
from src.services.validation_service import ValidationService
from src.cli.handlers.common import (
    ManifestRecorder, add_model_arguments, add_order_arguments, build_model, build_order, checked,
    parse_floats, parse_grid,
)
from src.utils.constants import ExitCodes


class ValidateHandlers:
    """validate command"""

    @staticmethod
    def register(subparsers) -> None:
        validate = subparsers.add_parser("validate", help="Cross-check the analytic engine")
        add_model_arguments(validate)
        add_order_arguments(validate)
        validate.add_argument("--mode", choices=MODES, required=True)
        validate.add_argument("--t-grid", dest="t_grid", default="0:2:0.1")
        validate.add_argument("--tol", type=float, help="Pass threshold (mode default when omitted)")
        validate.add_argument("--states", type=int, help="Number of states checked")
        validate.add_argument("--step", type=float, help="Oracle step")
        validate.add_argument("--samples", help="Monte Carlo sample count")
        validate.add_argument("--seed", default="0")
        validate.add_argument("--s-values", dest="s_values", help="Comma-separated Laplace arguments")
        validate.add_argument("--threads", type=int)
        validate.add_argument("--out", help="Report file (JSON); stdout when omitted")
        validate.set_defaults(handler=ValidateHandlers.handle_validate)

    @staticmethod
    def handle_validate(args: argparse.Namespace, argv: Sequence[str]) -> int:
        """Exit 0 iff the report passes, 3 otherwise"""
        recorder = ManifestRecorder("validate", argv)
        model = build_model(args)
        order = build_order(args)
        times = parse_grid(args.t_grid)
        seed = checked(ValidationService.validate_seed(args.seed))

        options: Dict[str, Any] = {"seed": seed, "threads": args.threads}
        if args.tol is not None:
            options["tolerance"] = args.tol
        if args.states is not None:
            options["states"] = args.states
        if args.step is not None:
            options["step"] = args.step
        if args.samples is not None:
            options["samples"] = checked(ValidationService.validate_positive_int(args.samples, "samples"))
        if args.s_values:
            options["s_values"] = parse_floats(args.s_values, "s")

        report = CrosscheckService.run(args.mode, model, order, times, **options)
        payload = report.model_dump_json(indent=2)
        if args.out:
            Path(args.out).write_text(payload + "\n", encoding="utf-8")
            recorder.write(
                [args.out], model=model, order=order, grids={"t_grid": args.t_grid},
                tolerances={"tolerance": report.tolerance}, seed=seed,
            )
        else:
            sys.stdout.write(payload + "\n")
        sys.stderr.write(ReportBuilder.validation_summary(report) + "\n")
        return ExitCodes.OK if report.passed else ExitCodes.TOLERANCE_FAILURE
