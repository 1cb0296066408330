"""
Rate Service - rate models, presets and the non-explosion heuristic
"""
import json
import logging
import math
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError
from scipy.special import gammaln

from src.config import settings
from src.models.domain import (
    UNBOUNDED, ExplosionReport, ExplosionVerdict, ExtensionPolicy, ModelKind,
    RateModel, RateModelDocument, TotalRate,
)
from src.utils.constants import ErrorMessages, NumericConstants, PresetNames
from src.utils.exceptions import DivergentRatesError, InputError, RateModelError
from src.utils.formula import parse_formula
from src.utils.validators import validate_positive, validate_strictly_decreasing

logger = logging.getLogger(__name__)


class RateService:
    """Rate model construction and analysis"""

    # ------------------------------------------------------------------
    # Presets
    # ------------------------------------------------------------------

    @staticmethod
    def preset(name: str, params: Dict[str, Any], n0: Optional[int] = None,
               tail_tolerance: Optional[float] = None) -> RateModel:
        """
        Build one of the named special cases

        Args:
            name: tfpp, fpbp, gfcp, cfpp or stfpp
            params: Preset parameters
            n0: Initial state (preset default when omitted)
            tail_tolerance: Relative cutoff for unbounded rate sums

        Returns:
            RateModel: Model carrying its own JSON document
        """
        name = name.lower()
        builders = {
            PresetNames.TFPP: RateService._tfpp,
            PresetNames.FPBP: RateService._fpbp,
            PresetNames.GFCP: RateService._gfcp,
            PresetNames.CFPP: RateService._cfpp,
            PresetNames.STFPP: RateService._stfpp,
        }
        if name not in builders:
            raise RateModelError(f"Unknown preset {name!r}; expected one of {', '.join(PresetNames.ALL)}")
        tol = settings.tail_tolerance if tail_tolerance is None else tail_tolerance
        model = builders[name](dict(params), n0, tol)
        logger.debug(f"Built preset {name} with n0={model.n0}, k={model.k}")
        return model

    @staticmethod
    def _document(name: str, n0: int, k, params: Dict[str, Any], tol: float) -> RateModelDocument:
        return RateModelDocument(n0=n0, k=k, kind=ModelKind.preset, preset=name, params=params, tail_tolerance=tol)

    @staticmethod
    def _positive_param(params: Dict[str, Any], key: str) -> float:
        if key not in params:
            raise RateModelError(f"Missing parameter {key!r}")
        value = params[key]
        if not validate_positive(value):
            raise RateModelError(f"Parameter {key!r} must be strictly positive, got {value}")
        return float(value)

    @staticmethod
    def _positive_list(params: Dict[str, Any], key: str) -> List[float]:
        values = params.get(key)
        if not values:
            raise RateModelError(f"Parameter {key!r} must be a non-empty list")
        for index, value in enumerate(values, start=1):
            if not validate_positive(value):
                raise RateModelError(f"{key}[{index}] must be strictly positive, got {value}")
        return [float(v) for v in values]

    @staticmethod
    def _tfpp(params: Dict[str, Any], n0: Optional[int], tol: float) -> RateModel:
        lam = RateService._positive_param(params, "lambda")
        n0 = 0 if n0 is None else n0
        return RateModel(
            n0=n0, k=1, rate_fn=lambda n, i: lam, tail_tolerance=tol, name=PresetNames.TFPP,
            document=RateService._document(PresetNames.TFPP, n0, 1, {"lambda": lam}, tol),
        )

    @staticmethod
    def _fpbp(params: Dict[str, Any], n0: Optional[int], tol: float) -> RateModel:
        n0 = 1 if n0 is None else n0
        if "rates" in params:
            source = str(params["rates"])
            formula = parse_formula(source)
            sample = [formula(n, 1) for n in range(n0, n0 + NumericConstants.PRESET_CHECK_TERMS)]
            for offset, value in enumerate(sample):
                if not value > 0:
                    raise RateModelError(
                        ErrorMessages.NON_POSITIVE_RATE.format(n=n0 + offset, i=1, value=value)
                    )
            if len(set(sample)) != len(sample):
                raise RateModelError("Birth rates lambda_n must be pairwise distinct")
            rate_fn = lambda n, i: formula(n, 1)
            stored = {"rates": source}
            last_state = None
        else:
            lambdas = RateService._positive_list(params, "lambdas")
            if len(set(lambdas)) != len(lambdas):
                raise RateModelError("Birth rates lambda_n must be pairwise distinct")

            def rate_fn(n: int, i: int) -> float:
                if n - n0 >= len(lambdas):
                    raise RateModelError(f"Birth rate for state {n} is not given ({len(lambdas)} rates listed)")
                return lambdas[n - n0]

            stored = {"lambdas": lambdas}
            last_state = n0 + len(lambdas) - 1
        return RateModel(
            n0=n0, k=1, rate_fn=rate_fn, tail_tolerance=tol, name=PresetNames.FPBP,
            document=RateService._document(PresetNames.FPBP, n0, 1, stored, tol), last_state=last_state,
        )

    @staticmethod
    def _gfcp(params: Dict[str, Any], n0: Optional[int], tol: float) -> RateModel:
        lambdas = RateService._positive_list(params, "lambdas")
        n0 = 0 if n0 is None else n0
        k = len(lambdas)
        return RateModel(
            n0=n0, k=k, rate_fn=lambda n, i: lambdas[i - 1], tail_tolerance=tol, name=PresetNames.GFCP,
            document=RateService._document(PresetNames.GFCP, n0, k, {"lambdas": lambdas}, tol),
        )

    @staticmethod
    def _cfpp(params: Dict[str, Any], n0: Optional[int], tol: float) -> RateModel:
        if "beta" not in params:
            raise RateModelError("Missing parameter 'beta' (an expression in i)")
        source = str(params["beta"])
        formula = parse_formula(source)
        n0 = 0 if n0 is None else n0
        horizon = NumericConstants.PRESET_CHECK_TERMS
        betas = [formula(0, i) for i in range(horizon + 2)]
        if not all(b > 0 for b in betas):
            raise RateModelError("beta_i must be strictly positive")
        if not validate_strictly_decreasing(betas):
            raise RateModelError("beta_i must be strictly decreasing (beta_i > beta_{i+1} > 0)")
        ratios = [b / a for a, b in zip(betas[horizon // 2:], betas[horizon // 2 + 1:])]
        if max(ratios) >= NumericConstants.RATIO_CEILING:
            raise RateModelError(
                f"beta_(i+1)/beta_i reaches {max(ratios):.6g}; the limit must stay below 1"
            )

        def beta(i: int) -> float:
            return formula(0, i)

        return RateModel(
            n0=n0, k=UNBOUNDED, rate_fn=lambda n, i: beta(i - 1) - beta(i), tail_tolerance=tol,
            name=PresetNames.CFPP, closed_total=lambda n: beta(0), tail_fn=lambda n, i: beta(i),
            document=RateService._document(PresetNames.CFPP, n0, UNBOUNDED, {"beta": source}, tol),
        )

    @staticmethod
    def _stfpp(params: Dict[str, Any], n0: Optional[int], tol: float) -> RateModel:
        lam = RateService._positive_param(params, "lambda")
        if "beta" not in params:
            raise RateModelError("Missing parameter 'beta'")
        beta = float(params["beta"])
        if not 0.0 < beta <= 1.0:
            raise RateModelError(f"beta must lie in (0, 1], got {beta}")
        n0 = 0 if n0 is None else n0
        stored = {"lambda": lam, "beta": beta}
        if beta == 1.0:
            return RateModel(
                n0=n0, k=1, rate_fn=lambda n, i: lam, tail_tolerance=tol, name=PresetNames.STFPP,
                document=RateService._document(PresetNames.STFPP, n0, 1, stored, tol),
            )

        scale = lam ** beta
        log_norm = gammaln(1.0 - beta)

        def rate_fn(n: int, i: int) -> float:
            return scale * beta * math.exp(gammaln(i - beta) - log_norm - gammaln(i + 1.0))

        def tail_fn(n: int, i: int) -> float:
            return scale * math.exp(gammaln(i + 1.0 - beta) - log_norm - gammaln(i + 1.0))

        sample = [rate_fn(n0, i) for i in range(1, NumericConstants.PRESET_CHECK_TERMS + 1)]
        for i, value in enumerate(sample, start=1):
            if not value > 0:
                raise RateModelError(ErrorMessages.NON_POSITIVE_RATE.format(n=n0, i=i, value=value))

        return RateModel(
            n0=n0, k=UNBOUNDED, rate_fn=rate_fn, tail_tolerance=tol, name=PresetNames.STFPP,
            closed_total=lambda n: scale, tail_fn=tail_fn,
            document=RateService._document(PresetNames.STFPP, n0, UNBOUNDED, stored, tol),
        )

    # ------------------------------------------------------------------
    # Documents
    # ------------------------------------------------------------------

    @staticmethod
    def from_document(document: RateModelDocument) -> RateModel:
        """Build a model from its JSON document"""
        if document.kind is ModelKind.preset:
            model = RateService.preset(document.preset, document.params, document.n0, document.tail_tolerance)
            if model.k != document.k:
                raise RateModelError(f"Preset {document.preset} has k={model.k}, document says k={document.k}")
            return model

        if document.kind is ModelKind.formula:
            formula = parse_formula(document.formula)
            return RateModel(
                n0=document.n0, k=document.k, rate_fn=formula,
                tail_tolerance=document.tail_tolerance, name="formula", document=document,
            )

        rows = [list(map(float, row)) for row in document.rates]
        repeat = document.extension is ExtensionPolicy.repeat_last_row
        n0 = document.n0

        def rate_fn(n: int, i: int) -> float:
            index = n - n0
            if index >= len(rows):
                if not repeat:
                    raise RateModelError(f"State {n} lies beyond the rate table ({len(rows)} rows, extension 'error')")
                index = len(rows) - 1
            return rows[index][i - 1]

        return RateModel(
            n0=n0, k=document.k, rate_fn=rate_fn,
            tail_tolerance=document.tail_tolerance, name="table", document=document,
            last_state=None if repeat else n0 + len(rows) - 1,
        )

    @staticmethod
    def to_document(model: RateModel) -> RateModelDocument:
        if model.document is None:
            raise InputError("Rate model was built from a raw function and has no document form")
        return model.document

    @staticmethod
    def load_document(text: str) -> RateModelDocument:
        """
        Parse a model document

        Raises:
            InputError: With line and column for malformed JSON
        """
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise InputError(f"Malformed model JSON: {e.msg}", e.lineno, e.colno)
        try:
            return RateModelDocument.model_validate(data)
        except ValidationError as e:
            problems = "; ".join(
                f"{'.'.join(str(p) for p in err['loc']) or 'document'}: {err['msg']}" for err in e.errors()
            )
            raise InputError(f"Invalid model document: {problems}")

    @staticmethod
    def load_model_file(path: str) -> RateModel:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise InputError(f"Cannot read model file {path}: {e}")
        return RateService.from_document(RateService.load_document(text))

    # ------------------------------------------------------------------
    # Rate sums
    # ------------------------------------------------------------------

    @staticmethod
    def total_rate(model: RateModel, n: int) -> float:
        """Sum over jump sizes of rate(n, i)"""
        return RateService.total_rate_details(model, n).value

    @staticmethod
    def total_rate_details(model: RateModel, n: int, max_terms: Optional[int] = None) -> TotalRate:
        """
        Total intensity with the discarded tail

        For unbounded k the sum stops once a term is below tail_tolerance
        times the running sum while terms decrease. The tail estimate is the
        closed tail when the model has one, otherwise a geometric estimate
        from the last two terms.
        """
        if n < model.n0:
            raise InputError(ErrorMessages.INVALID_STATE.format(n=n, n0=model.n0))
        key = ("total", n)
        cached = model._cache.get(key)
        if cached is not None:
            return cached

        if model.closed_total is not None:
            result = TotalRate(float(model.closed_total(n)), 0.0, 0)
        elif not model.unbounded:
            result = TotalRate(math.fsum(model.rate(n, i) for i in range(1, int(model.k) + 1)), 0.0, int(model.k))
        else:
            result = RateService._truncated_total(model, n, max_terms or settings.max_rate_terms)

        model._cache[key] = result
        return result

    @staticmethod
    def _truncated_total(model: RateModel, n: int, max_terms: int) -> TotalRate:
        terms: List[float] = []
        previous = math.inf
        running = 0.0
        for i in range(1, max_terms + 1):
            term = model.rate(n, i)
            terms.append(term)
            running += term
            if term < model.tail_tolerance * running and term < previous:
                if model.tail_fn is not None:
                    tail = float(model.tail_fn(n, i))
                else:
                    ratio = term / previous
                    tail = term * ratio / (1.0 - ratio)
                logger.debug(f"Rate sum at state {n} truncated after {i} terms, tail {tail:.3e}")
                return TotalRate(math.fsum(terms), tail, i)
            previous = term
        raise DivergentRatesError(ErrorMessages.DIVERGENT_RATES.format(n=n, terms=max_terms))

    @staticmethod
    def tail_mass(model: RateModel, n: int, i: int) -> float:
        """Intensity of jumps larger than i at state n"""
        if not model.unbounded and i >= model.k:
            return 0.0
        if model.tail_fn is not None:
            return float(model.tail_fn(n, i))
        if not model.unbounded:
            return math.fsum(model.rate(n, j) for j in range(i + 1, int(model.k) + 1))
        total = RateService.total_rate_details(model, n)
        head = math.fsum(model.rate(n, j) for j in range(1, min(i, total.terms) + 1))
        return max(total.value - head, 0.0) + total.tail_bound

    # ------------------------------------------------------------------
    # Explosion
    # ------------------------------------------------------------------

    @staticmethod
    def explosion_check(model: RateModel, M: int,
                        growth_threshold: Optional[float] = None,
                        increment_tolerance: Optional[float] = None,
                        flat_exponent: Optional[float] = None,
                        max_jump_terms: Optional[int] = None) -> ExplosionReport:
        """
        Classify the non-explosion series

        S_M = sum over m of (sum_i sum_{j<=i} rate(m-j+1, i)^2)^(-1/2), m from n0
        to n0+M. Growth exponents come from a log-log fit over the last half
        of the trace.

        Args:
            model: Rate model
            M: Number of terms beyond n0

        Returns:
            ExplosionReport: Verdict and partial-sum trace
        """
        if M < 1:
            raise InputError(f"Explosion check needs M >= 1, got {M}")
        growth_threshold = settings.explosion_growth_threshold if growth_threshold is None else growth_threshold
        increment_tolerance = (
            settings.explosion_increment_tolerance if increment_tolerance is None else increment_tolerance
        )
        flat_exponent = settings.explosion_flat_exponent if flat_exponent is None else flat_exponent
        finite = model.last_state is not None
        if finite:
            M = min(M, model.last_state - model.n0)
        jumps = int(model.k) if not model.unbounded else RateService._explosion_jump_terms(
            model, M, max_jump_terms or settings.explosion_max_jump_terms
        )

        squares = np.array([
            [model.rate(model.n0 + row, i) ** 2 for i in range(1, jumps + 1)]
            for row in range(M + 1)
        ])
        cumulative = np.vstack([np.zeros((1, jumps)), np.cumsum(squares, axis=0)])
        rows = np.arange(M + 1)
        inner = np.zeros(M + 1)
        for i in range(1, jumps + 1):
            low = np.maximum(rows - i + 1, 0)
            inner += cumulative[rows + 1, i - 1] - cumulative[low, i - 1]

        increments = inner ** -0.5
        trace = np.cumsum(increments)
        exponent = RateService._growth_exponent(trace)
        last_increment = float(increments[-1])

        if finite or exponent >= growth_threshold:
            # rates end at last_state, so only finitely many states are reachable
            verdict = ExplosionVerdict.non_exploding
        elif last_increment < increment_tolerance or exponent < flat_exponent:
            verdict = ExplosionVerdict.possibly_exploding
        else:
            verdict = ExplosionVerdict.inconclusive
        logger.info(f"Explosion check over {M} terms: {verdict.value} (growth exponent {exponent:.4g})")
        return ExplosionReport(verdict, tuple(float(v) for v in trace), exponent, last_increment, M)

    @staticmethod
    def _explosion_jump_terms(model: RateModel, M: int, ceiling: int) -> int:
        """Jump sizes kept by the rate-sum truncation at states n0..n0+M, at most ceiling"""
        terms = 0
        for row in range(M + 1):
            count = RateService.total_rate_details(model, model.n0 + row).terms
            if count == 0:
                # closed totals carry no truncation point
                return ceiling
            terms = max(terms, count)
        return min(terms, ceiling)

    @staticmethod
    def _growth_exponent(trace: Sequence[float]) -> float:
        start = len(trace) // 2
        tail = np.asarray(trace[start:])
        if len(tail) < 2:
            return float("nan")
        index = np.arange(start + 1, len(trace) + 1, dtype=float)
        slope, _ = np.polyfit(np.log(index), np.log(tail), 1)
        return float(slope)


def make_rate_model(n0: int, k, rate_fn: Callable[[int, int], float],
                    tail_tolerance: Optional[float] = None) -> RateModel:
    """Wrap a raw rate function"""
    if k != UNBOUNDED and (not isinstance(k, int) or k < 1):
        raise RateModelError(f"k must be a positive integer or 'unbounded', got {k!r}")
    return RateModel(
        n0=n0, k=k, rate_fn=rate_fn,
        tail_tolerance=settings.tail_tolerance if tail_tolerance is None else tail_tolerance,
    )
