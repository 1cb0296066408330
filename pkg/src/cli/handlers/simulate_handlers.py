"""
Simulate Handlers - Monte Carlo ensembles
"""
import argparse
import logging
import sys
from typing import Dict, List, Sequence

from src.models.domain import EmpiricalPmf
from src.services.simulation_service import SimulationService
from src.services.validation_service import ValidationService
from src.storage.writers import ENSEMBLE_HEADER, ensemble_rows, write_ensemble_csv, write_paths_jsonl
from src.cli.handlers.common import (
    ManifestRecorder, add_model_arguments, build_model, build_order, checked, parse_grid,
)
from src.utils.constants import ExitCodes
from src.utils.exceptions import InputError

logger = logging.getLogger(__name__)


class SimulateHandlers:
    """simulate command"""

    @staticmethod
    def register(subparsers) -> None:
        simulate = subparsers.add_parser("simulate", help="Simulate an ensemble of paths")
        add_model_arguments(simulate)
        simulate.add_argument("--alpha", default="1", help="1 for paths, 0.5 for the Brownian clock")
        simulate.add_argument("--horizon", type=float, required=True)
        simulate.add_argument("--paths", required=True, help="Number of samples")
        simulate.add_argument("--seed", required=True)
        simulate.add_argument("--t-grid", dest="t_grid", help="Times for the ensemble pmf (default: horizon)")
        simulate.add_argument("--threads", type=int)
        simulate.add_argument("--out", help="Paths as JSON lines (order 1 only)")
        simulate.add_argument("--ensemble-out", dest="ensemble_out", help="Ensemble pmf CSV; stdout when omitted")
        simulate.set_defaults(handler=SimulateHandlers.handle_simulate)

    @staticmethod
    def handle_simulate(args: argparse.Namespace, argv: Sequence[str]) -> int:
        """Empirical pmf at each requested time, optionally with the raw paths"""
        recorder = ManifestRecorder("simulate", argv)
        model = build_model(args)
        order = build_order(args)
        alpha = order.at(model.n0)
        count = checked(ValidationService.validate_positive_int(args.paths, "paths"))
        seed = checked(ValidationService.validate_seed(args.seed))
        horizon = checked(ValidationService.validate_positive_float(args.horizon, "horizon"))
        times = parse_grid(args.t_grid) if args.t_grid else [horizon]
        if max(times) > horizon:
            raise InputError(f"Times must not exceed the horizon {horizon}")

        columns: Dict[float, EmpiricalPmf] = {}
        outputs: List[str] = []
        if alpha == 1.0:
            paths = SimulationService.run_ensemble(model, horizon, count, seed, args.threads)
            for t in times:
                columns[t] = SimulationService.empirical_pmf(SimulationService.states_at(paths, t))
            if args.out:
                write_paths_jsonl(paths, args.out)
                outputs.append(args.out)
        elif alpha == 0.5:
            if args.out:
                raise InputError("Paths are only written at order 1; the order-1/2 sampler returns states")
            for index, t in enumerate(times):
                states = SimulationService.sample_gfbp_half_ensemble(model, t, count, seed + index, args.threads)
                columns[t] = SimulationService.empirical_pmf(states)
        else:
            raise InputError(f"Simulation supports the orders 1 and 0.5, got {alpha}")

        if args.ensemble_out:
            write_ensemble_csv(columns, args.ensemble_out)
            outputs.append(args.ensemble_out)
        else:
            sys.stdout.write(",".join(ENSEMBLE_HEADER) + "\n")
            for row in ensemble_rows(columns):
                sys.stdout.write(",".join(row) + "\n")

        recorder.write(
            outputs, model=model, order=order,
            grids={"horizon": horizon, "times": times, "samples": count}, seed=seed,
        )
        return ExitCodes.OK
