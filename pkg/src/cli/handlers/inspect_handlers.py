"""
Inspect Handlers - jump-pattern listings and explosion checks
"""
import argparse
import sys
from typing import Sequence

from src.config import settings
from src.services.combinat_service import CombinatService
from src.services.rate_service import RateService
from src.services.report_builder import ReportBuilder
from src.cli.handlers.common import add_model_arguments, build_model
from src.utils.constants import ExitCodes


class InspectHandlers:
    """theta and explosion commands"""

    @staticmethod
    def register(subparsers) -> None:
        theta = subparsers.add_parser("theta", help="List the jump patterns of n with jumps up to k")
        theta.add_argument("n", type=int)
        theta.add_argument("k", type=int)
        theta.set_defaults(handler=InspectHandlers.handle_theta)

        explosion = subparsers.add_parser("explosion", help="Classify the non-explosion series")
        add_model_arguments(explosion)
        explosion.add_argument("--terms", type=int, default=settings.explosion_check_terms)
        explosion.set_defaults(handler=InspectHandlers.handle_explosion)

    @staticmethod
    def handle_theta(args: argparse.Namespace, argv: Sequence[str]) -> int:
        patterns = CombinatService.enumerate_theta(args.n, args.k)
        sys.stdout.write(ReportBuilder.theta_listing(patterns) + "\n")
        return ExitCodes.OK

    @staticmethod
    def handle_explosion(args: argparse.Namespace, argv: Sequence[str]) -> int:
        model = build_model(args)
        report = RateService.explosion_check(model, args.terms)
        sys.stdout.write(ReportBuilder.explosion_summary(report) + "\n")
        return ExitCodes.OK
