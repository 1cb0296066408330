"""
Report Builder - plain-text summaries printed by the command line
"""
import json
from typing import Iterable, Sequence

from src.models.domain import (
    ExplosionReport, JumpPattern, KernelResult, PmfTable, ValidationReport,
)
from src.utils.helpers import format_float


class ReportBuilder:
    """Human-readable output"""

    @staticmethod
    def theta_listing(patterns: Iterable[JumpPattern]) -> str:
        """Patterns as a compact JSON array"""
        return json.dumps([list(x) for x in patterns], separators=(",", ":"))

    @staticmethod
    def table_summary(table: PmfTable) -> str:
        deficit = table.deficit()
        lines = [
            f"source: {table.source.value}",
            f"states: {table.states[0]}..{table.states[-1]} ({len(table.states)})" if table.states else "states: none",
            f"times: {len(table.times)} points in [{min(table.times):g}, {max(table.times):g}]",
            f"max deficit: {float(deficit.max()):.3e}",
        ]
        if table.flags:
            lines.append(f"flags: {', '.join(table.flags)}")
        return "\n".join(lines)

    @staticmethod
    def explosion_summary(report: ExplosionReport) -> str:
        """Verdict with the numbers behind it"""
        return "\n".join([
            f"verdict: {report.verdict.value}",
            f"terms: {report.terms}",
            f"partial sum: {format_float(report.trace[-1])}",
            f"growth exponent: {report.growth_exponent:.6g}",
            f"last increment: {report.last_increment:.6g}",
        ])

    @staticmethod
    def validation_summary(report: ValidationReport) -> str:
        status = "PASS" if report.passed else "FAIL"
        return f"{report.mode}: {status} max deviation {report.max_deviation:.3e} (tolerance {report.tolerance:g})"

    @staticmethod
    def mittag_leffler_rows(alpha: float, arguments: Sequence[float], results: Sequence[KernelResult]) -> str:
        """CSV lines alpha,z,value,error_bound,reduced_accuracy"""
        lines = ["alpha,z,value,error_bound,reduced_accuracy"]
        for z, result in zip(arguments, results):
            lines.append(",".join([
                format_float(alpha), format_float(z), format_float(result.value),
                format_float(result.error_bound), str(result.reduced_accuracy).lower(),
            ]))
        return "\n".join(lines)
