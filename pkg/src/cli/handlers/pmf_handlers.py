"""
Pmf Handlers - pmf tables, oracle tables and Mittag-Leffler evaluation
"""
import argparse
import logging
import sys
from typing import List, Sequence

from src.config import settings
from src.models.domain import PmfTable, SolverConfig, SolverScheme
from src.services.oracle_service import OracleService
from src.services.pmf_service import STRATEGIES, PmfService
from src.services.report_builder import ReportBuilder
from src.services.special_functions import evaluate_mittag_leffler
from src.services.validation_service import ValidationService
from src.storage.writers import table_rows, write_table_csv, write_table_json, TABLE_HEADER
from src.cli.handlers.common import (
    ManifestRecorder, add_model_arguments, add_order_arguments, build_model, build_order, checked, parse_grid,
)
from src.utils.constants import ExitCodes
from src.utils.exceptions import InputError

logger = logging.getLogger(__name__)


def _emit_table(table: PmfTable, out: str) -> List[str]:
    """Write to --out by suffix, or CSV on stdout"""
    if not out:
        sys.stdout.write(",".join(TABLE_HEADER) + "\n")
        for row in table_rows(table):
            sys.stdout.write(",".join(row) + "\n")
        return []
    if out.endswith(".json"):
        write_table_json(table, out)
    else:
        write_table_csv(table, out)
    return [out]


class PmfHandlers:
    """pmf, oracle and ml-eval commands"""

    @staticmethod
    def register(subparsers) -> None:
        pmf = subparsers.add_parser("pmf", help="Tabulate state probabilities")
        add_model_arguments(pmf)
        add_order_arguments(pmf)
        pmf.add_argument("--t-grid", dest="t_grid", required=True, help="start:stop:step")
        pmf.add_argument("--mass-tol", dest="mass_tol", type=float, default=1e-9)
        pmf.add_argument("--states", type=int, help="Fixed number of states instead of the mass target")
        pmf.add_argument("--strategy", choices=[s for s in STRATEGIES if s != "patterns"], default="auto")
        pmf.add_argument("--state-budget", dest="state_budget", type=int)
        pmf.add_argument("--pattern-budget", dest="pattern_budget", type=int)
        pmf.add_argument("--override-explosion", dest="override", action="store_true")
        pmf.add_argument("--out", help="Output file (.csv or .json); CSV on stdout when omitted")
        pmf.set_defaults(handler=PmfHandlers.handle_pmf)

        oracle = subparsers.add_parser("oracle", help="Solve the forward equations numerically")
        add_model_arguments(oracle)
        add_order_arguments(oracle)
        oracle.add_argument("--t-end", dest="t_end", type=float, required=True)
        oracle.add_argument("--step", type=float, default=1e-3)
        oracle.add_argument("--n-max", dest="n_max", type=int, default=10)
        oracle.add_argument("--scheme", choices=[s.value for s in SolverScheme], default=SolverScheme.fractional_abm.value)
        oracle.add_argument("--corrector", choices=["pece", "implicit"], default="pece")
        oracle.add_argument("--simultaneous", action="store_true")
        oracle.add_argument("--memory", type=int, help="Short-memory window in steps")
        oracle.add_argument("--out", help="Output file (.csv or .json); CSV on stdout when omitted")
        oracle.set_defaults(handler=PmfHandlers.handle_oracle)

        ml = subparsers.add_parser("ml-eval", help="Evaluate E_alpha(z)")
        ml.add_argument("--alpha", required=True)
        ml.add_argument("--z", required=True, help="Comma-separated real arguments")
        ml.set_defaults(handler=PmfHandlers.handle_ml_eval)

    @staticmethod
    def handle_pmf(args: argparse.Namespace, argv: Sequence[str]) -> int:
        """Tabulate p(n, t); exit 3 when the mass target is missed, 4 on the pattern budget"""
        recorder = ManifestRecorder("pmf", argv)
        model = build_model(args)
        order = build_order(args)
        times = parse_grid(args.t_grid)
        if args.states is not None:
            table = PmfService.pmf_grid(
                model, order, args.states, times, strategy=args.strategy, pattern_budget=args.pattern_budget
            )
        else:
            table = PmfService.pmf_table(
                model, order, times, args.mass_tol, state_budget=args.state_budget, override=args.override,
                strategy=args.strategy, pattern_budget=args.pattern_budget,
            )
        outputs = _emit_table(table, args.out)
        recorder.write(
            outputs, model=model, order=order, grids={"t_grid": args.t_grid},
            tolerances={"mass_tol": args.mass_tol},
        )
        sys.stderr.write(ReportBuilder.table_summary(table) + "\n")

        if "pattern_budget_exhausted" in table.flags:
            return ExitCodes.BUDGET_EXCEEDED
        if "state_budget_exhausted" in table.flags or "rate_table_exhausted" in table.flags:
            return ExitCodes.TOLERANCE_FAILURE
        return ExitCodes.OK

    @staticmethod
    def handle_oracle(args: argparse.Namespace, argv: Sequence[str]) -> int:
        recorder = ManifestRecorder("oracle", argv)
        model = build_model(args)
        order = build_order(args)
        config = SolverConfig(
            step=args.step, n_max=args.n_max, max_memory_terms=args.memory,
            scheme=SolverScheme(args.scheme), corrector=args.corrector, simultaneous=args.simultaneous,
        )
        table = OracleService.solve_fractional_system(model, order, args.t_end, config)
        outputs = _emit_table(table, args.out)
        recorder.write(
            outputs, model=model, order=order, grids={"t_end": args.t_end, "step": args.step},
            tolerances={"solver_bound_epsilon": settings.solver_bound_epsilon},
        )
        sys.stderr.write(ReportBuilder.table_summary(table) + "\n")
        return ExitCodes.OK

    @staticmethod
    def handle_ml_eval(args: argparse.Namespace, argv: Sequence[str]) -> int:
        alpha = checked(ValidationService.validate_alpha(args.alpha))
        try:
            arguments = [float(part) for part in args.z.split(",")]
        except ValueError:
            raise InputError(f"--z must be comma-separated numbers, got {args.z!r}")
        results = [evaluate_mittag_leffler(alpha, z) for z in arguments]
        sys.stdout.write(ReportBuilder.mittag_leffler_rows(alpha, arguments, results) + "\n")
        return ExitCodes.OK
