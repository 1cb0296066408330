"""
Validation Service - command-line input checks and error handling
"""
import json
import logging
from typing import List, Optional, Tuple

from pydantic import ValidationError

from src.models.domain import OrderDocument, OrderSpec
from src.utils.constants import ErrorMessages, ExitCodes, PresetNames
from src.utils.exceptions import (
    BudgetExceededError, GFBPError, InputError, ToleranceError,
)
from src.utils.helpers import parse_t_grid
from src.utils.validators import is_finite_number, validate_order

logger = logging.getLogger(__name__)

SEED_LIMIT = 2 ** 64


class ValidationService:
    """User input checks"""

    @staticmethod
    def validate_alpha(alpha_text: str) -> Tuple[bool, Optional[float], Optional[str]]:
        """
        Fractional order check

        Args:
            alpha_text: Order as typed

        Returns:
            Tuple[bool, Optional[float], Optional[str]]: (is_valid, alpha, error_message)
        """
        try:
            alpha = float(str(alpha_text).strip())
        except ValueError:
            return False, None, ErrorMessages.INVALID_ORDER.format(value=alpha_text)

        if not validate_order(alpha):
            return False, None, ErrorMessages.INVALID_ORDER.format(value=alpha)

        return True, alpha, None

    @staticmethod
    def validate_t_grid(grid_text: str) -> Tuple[bool, Optional[List[float]], Optional[str]]:
        """
        Time grid check

        Args:
            grid_text: Grid as start:stop:step

        Returns:
            Tuple[bool, Optional[List[float]], Optional[str]]: (is_valid, times, error_message)
        """
        try:
            times = parse_t_grid(grid_text)
        except InputError as e:
            return False, None, str(e)

        if times[0] < 0:
            return False, None, f"Times must be non-negative, got start {times[0]}"

        return True, times, None

    @staticmethod
    def validate_seed(seed_text: str) -> Tuple[bool, Optional[int], Optional[str]]:
        """Seed check: an unsigned 64-bit integer"""
        try:
            seed = int(str(seed_text).strip())
        except ValueError:
            return False, None, f"Seed must be an integer, got {seed_text!r}"

        if not 0 <= seed < SEED_LIMIT:
            return False, None, f"Seed must lie in [0, 2^64), got {seed}"

        return True, seed, None

    @staticmethod
    def validate_positive_int(text: str, name: str) -> Tuple[bool, Optional[int], Optional[str]]:
        try:
            value = int(str(text).strip())
        except ValueError:
            return False, None, f"{name} must be an integer, got {text!r}"

        if value < 1:
            return False, None, f"{name} must be at least 1, got {value}"

        return True, value, None

    @staticmethod
    def validate_positive_float(text: str, name: str) -> Tuple[bool, Optional[float], Optional[str]]:
        try:
            value = float(str(text).strip())
        except ValueError:
            return False, None, f"{name} must be a number, got {text!r}"

        if not (is_finite_number(value) and value > 0):
            return False, None, f"{name} must be positive and finite, got {value}"

        return True, value, None

    @staticmethod
    def validate_lambdas(lambdas_text: str) -> Tuple[bool, Optional[List[float]], Optional[str]]:
        """
        Comma-separated rate list check

        Args:
            lambdas_text: Rates such as "1,3"

        Returns:
            Tuple[bool, Optional[List[float]], Optional[str]]: (is_valid, rates, error_message)
        """
        parts = [p.strip() for p in str(lambdas_text).split(",") if p.strip()]
        if not parts:
            return False, None, "At least one rate is required"

        try:
            values = [float(p) for p in parts]
        except ValueError:
            return False, None, f"Rates must be numbers, got {lambdas_text!r}"

        for value in values:
            if not (is_finite_number(value) and value > 0):
                return False, None, f"Rates must be positive and finite, got {value}"

        return True, values, None

    @staticmethod
    def validate_preset(name: str) -> Tuple[bool, Optional[str]]:
        """
        Preset name check

        Returns:
            Tuple[bool, Optional[str]]: (is_valid, error_message)
        """
        if not name or name.lower() not in PresetNames.ALL:
            return False, f"Unknown preset {name!r}; expected one of {', '.join(PresetNames.ALL)}"

        return True, None

    @staticmethod
    def validate_order_document(text: str) -> Tuple[bool, Optional[OrderSpec], Optional[str]]:
        """
        Per-state order file check

        Args:
            text: JSON such as {"alphas": {"1": 0.5, "2": 0.9}, "default": 0.9}

        Returns:
            Tuple[bool, Optional[OrderSpec], Optional[str]]: (is_valid, order, error_message)
        """
        try:
            document = OrderDocument.model_validate_json(text)
        except ValidationError as e:
            return False, None, f"Invalid order document: {e.errors()[0]['msg']}"

        try:
            return True, document.to_order(), None
        except InputError as e:
            return False, None, str(e)


class ErrorHandler:
    """Error reporting"""

    @staticmethod
    def exit_code_for(error: Exception) -> int:
        """
        Exit code for a failed command

        Args:
            error: Raised exception

        Returns:
            int: 2 input error, 3 tolerance failure, 4 budget exceeded
        """
        if isinstance(error, BudgetExceededError):
            return ExitCodes.BUDGET_EXCEEDED
        if isinstance(error, (InputError, json.JSONDecodeError)):
            return ExitCodes.INPUT_ERROR
        # numerical failures are reported as unmet tolerances
        if isinstance(error, (ToleranceError, GFBPError)):
            return ExitCodes.TOLERANCE_FAILURE
        return ExitCodes.INPUT_ERROR

    @staticmethod
    def get_user_friendly_error(error: Exception) -> str:
        """One-line message for stderr"""
        if isinstance(error, BudgetExceededError):
            return f"{error}; raise --pattern-budget or choose a smaller state"

        if isinstance(error, GFBPError):
            return str(error)

        if isinstance(error, OSError):
            return f"File error: {error}"

        return f"{ErrorMessages.GENERIC_ERROR}: {type(error).__name__}: {error}"

    @staticmethod
    def log_error(error: Exception, context: str = "") -> None:
        """
        Log an error with its traceback

        Args:
            error: Raised exception
            context: Where it happened
        """
        error_msg = f"Error in {context}: {type(error).__name__}: {str(error)}"
        logger.error(error_msg, exc_info=True)
