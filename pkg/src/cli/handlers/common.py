"""
Common CLI arguments - model, order and grid options shared by the commands
"""
import argparse
import logging
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from src import __version__
from src.config import settings
from src.models.domain import ConstantOrder, ModelKind, OrderSpec, RateModel, RateModelDocument, RunManifest
from src.services.rate_service import RateService
from src.services.validation_service import ValidationService
from src.storage.writers import manifest_path, write_manifest
from src.utils.constants import PresetNames
from src.utils.exceptions import InputError

logger = logging.getLogger(__name__)


def add_model_arguments(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("rate model")
    group.add_argument("--model", help="Model document (JSON)")
    group.add_argument("--preset", help=f"Named special case: {', '.join(PresetNames.ALL)}")
    group.add_argument("--lambda", dest="lam", help="Rate for tfpp and stfpp")
    group.add_argument("--lambdas", help="Comma-separated rates for gfcp and fpbp")
    group.add_argument("--rates", help="fpbp birth rates as a formula in n")
    group.add_argument("--beta", help="stfpp index, or cfpp tail sequence as a formula in i")
    group.add_argument("--formula", help="rate(n, i) as a formula in n and i")
    group.add_argument("--k", help="Largest jump size for --formula, or 'unbounded'")
    group.add_argument("--n0", type=int, help="Initial state")


def add_order_arguments(parser: argparse.ArgumentParser, required: bool = True) -> None:
    group = parser.add_mutually_exclusive_group(required=required)
    group.add_argument("--alpha", help="Constant fractional order in (0, 1]")
    group.add_argument("--alpha-per-state", dest="alpha_per_state", help="Per-state order document (JSON)")


def checked(result):
    """Unpack a (is_valid, value, error) validator result"""
    is_valid, value, error = result
    if not is_valid:
        raise InputError(error)
    return value


def build_model(args: argparse.Namespace) -> RateModel:
    """Rate model from --model, --preset or --formula"""
    chosen = [name for name in ("model", "preset", "formula") if getattr(args, name, None)]
    if len(chosen) != 1:
        raise InputError("Give exactly one of --model, --preset or --formula")

    if args.model:
        return RateService.load_model_file(args.model)

    if args.formula:
        k: Any = args.k or "1"
        if k != "unbounded":
            k = checked(ValidationService.validate_positive_int(k, "k"))
        document = RateModelDocument(
            n0=args.n0 or 0, k=k, kind=ModelKind.formula, formula=args.formula,
            tail_tolerance=settings.tail_tolerance,
        )
        return RateService.from_document(document)

    is_valid, error = ValidationService.validate_preset(args.preset)
    if not is_valid:
        raise InputError(error)
    preset = args.preset.lower()
    params: Dict[str, Any] = {}
    if args.lam is not None:
        params["lambda"] = checked(ValidationService.validate_positive_float(args.lam, "lambda"))
    if args.lambdas is not None:
        params["lambdas"] = checked(ValidationService.validate_lambdas(args.lambdas))
    if args.rates is not None:
        params["rates"] = args.rates
    if args.beta is not None:
        params["beta"] = args.beta if preset == PresetNames.CFPP else checked(
            ValidationService.validate_positive_float(args.beta, "beta")
        )
    return RateService.preset(preset, params, args.n0)


def build_order(args: argparse.Namespace) -> Optional[OrderSpec]:
    if getattr(args, "alpha_per_state", None):
        try:
            text = Path(args.alpha_per_state).read_text(encoding="utf-8")
        except OSError as e:
            raise InputError(f"Cannot read order file {args.alpha_per_state}: {e}")
        return checked(ValidationService.validate_order_document(text))
    if getattr(args, "alpha", None) is None:
        return None
    return ConstantOrder(checked(ValidationService.validate_alpha(args.alpha)))


def parse_grid(text: str) -> List[float]:
    return checked(ValidationService.validate_t_grid(text))


def parse_floats(text: str, name: str) -> List[float]:
    values = []
    for part in text.split(","):
        values.append(checked(ValidationService.validate_positive_float(part, name)))
    return values


class ManifestRecorder:
    """Collects what a command did and writes the manifest beside each output"""

    def __init__(self, command: str, argv: Sequence[str]):
        self.command = command
        self.argv = list(argv)
        self.started = time.perf_counter()

    def write(self, outputs: Sequence[str], model: Optional[RateModel] = None,
              order: Optional[OrderSpec] = None, grids: Optional[Dict[str, Any]] = None,
              tolerances: Optional[Dict[str, float]] = None, seed: Optional[int] = None) -> RunManifest:
        manifest = RunManifest(
            command=self.command,
            arguments=self.argv,
            model=model.document.model_dump(mode="json", exclude_none=True) if model and model.document else None,
            order=order.describe() if order else None,
            grids=grids or {},
            tolerances=tolerances or {},
            seed=seed,
            outputs=list(outputs),
            settings=settings.model_dump(mode="json"),
            tool_version=__version__,
            wall_clock_seconds=time.perf_counter() - self.started,
        )
        for output in outputs:
            write_manifest(manifest, manifest_path(output))
        return manifest
