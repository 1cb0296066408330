"""
Constants - Toolkit constants
"""


class NumericConstants:
    """Numeric constants shared by the services"""

    # Machine epsilon for double precision
    DOUBLE_EPS = 2.220446049250313e-16

    # Probability slack allowed around [0, 1]
    PROBABILITY_SLACK = 1e-9

    # |B(t)| solves the heat equation u_t = u_xx, so Var B(t) = 2t
    HEAT_KERNEL_VARIANCE_FACTOR = 2.0

    # Confidence level of the Wilson intervals
    WILSON_CONFIDENCE = 0.99

    # Extra decimal digits carried by mpmath above the estimated cancellation
    GUARD_DIGITS = 12

    # Decimal digits of a double
    DOUBLE_DIGITS = 15

    # Positivity check horizon for unbounded-k presets
    PRESET_CHECK_TERMS = 200

    # Largest accepted tail ratio beta_{i+1}/beta_i for the convoluted preset
    RATIO_CEILING = 0.99

    # Partial-fraction kernels with a larger bound are retried with the series
    KERNEL_FALLBACK_BOUND = 1e-10


class ExitCodes:
    """CLI exit code contract"""

    OK = 0
    INPUT_ERROR = 2
    TOLERANCE_FAILURE = 3
    BUDGET_EXCEEDED = 4


class PresetNames:
    """Named special cases of the rate family"""

    TFPP = "tfpp"
    FPBP = "fpbp"
    GFCP = "gfcp"
    CFPP = "cfpp"
    STFPP = "stfpp"

    ALL = (TFPP, FPBP, GFCP, CFPP, STFPP)


class ErrorMessages:
    """Error message templates"""

    GENERIC_ERROR = "Unexpected error"
    INVALID_ORDER = "Fractional order must lie in (0, 1], got {value}"
    INVALID_STATE = "State {n} is below the initial state n0={n0}"
    INVALID_JUMP = "Jump size {i} is outside 1..{k}"
    NON_POSITIVE_RATE = "rate({n}, {i}) = {value} is not strictly positive"
    DIVERGENT_RATES = (
        "Rate sum at state {n} shows no decay within {terms} terms; "
        "the jump intensities must have a finite sum"
    )
    DEGENERATE_RATES = (
        "Rates {mu} are not separated by more than {tol} relative; "
        "use the general inversion series"
    )
    BUDGET_EXCEEDED = "Jump-pattern set has {count} elements, above the limit {limit}"
    SERIES_NOT_CERTIFIED = "Series tail not certified below {eps} within {terms} terms"
    SOLVER_UNSTABLE = (
        "Solution left [{low}, {high}] at t={t}; refine the step (currently {step})"
    )
    INVALID_GRID = "Time grid '{text}' must look like start:stop:step with step > 0"
    EXPLOSION_RISK = "Rate model may explode ({verdict}); pass override to tabulate anyway"
