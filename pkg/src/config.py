"""
GFBP Toolkit Configuration
"""
import logging
from pydantic_settings import BaseSettings
from pydantic import Field

logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    """Toolkit settings"""

    # Parallelism
    threads: int = Field(default=1, ge=1)

    # Logging
    log_level: str = Field(default="INFO")

    # Pattern enumeration
    pattern_budget: int = Field(default=2_000_000, ge=1)
    theta_cache_max_m: int = Field(default=25, ge=1)

    # Rate sums
    tail_tolerance: float = Field(default=1e-12, gt=0)
    max_rate_terms: int = Field(default=100_000, ge=1)

    # Special functions
    degeneracy_tolerance: float = Field(default=1e-8, gt=0)
    ml_z_switch: float = Field(default=5.0, gt=0)
    ml_certified_abs_z: float = Field(default=50.0, gt=0)
    ml_series_growth_log10: float = Field(default=4.0, gt=0)
    series_eps: float = Field(default=1e-15, gt=0)
    series_max_terms: int = Field(default=4000, ge=10)

    # Explosion heuristic
    explosion_growth_threshold: float = Field(default=0.5, gt=0)
    explosion_increment_tolerance: float = Field(default=1e-10, gt=0)
    explosion_flat_exponent: float = Field(default=0.01, gt=0)
    explosion_max_jump_terms: int = Field(default=200, ge=1)
    explosion_check_terms: int = Field(default=2000, ge=1)

    # Tables
    state_budget: int = Field(default=400, ge=1)

    # Simulation
    max_events_per_path: int = Field(default=1_000_000, ge=1)
    simulation_block_size: int = Field(default=1000, ge=1)

    # Oracle
    caputo_max_step: float = Field(default=1e-2, gt=0)
    solver_bound_epsilon: float = Field(default=1e-6, gt=0)

    model_config = {
        "env_prefix": "GFBP_",
        "env_file": ".env",
        "env_file_encoding": "utf-8",
        "case_sensitive": False,
        "extra": "ignore"
    }


def create_settings() -> Settings:
    """Build settings from the environment"""
    try:
        return Settings()
    except Exception as e:
        logger.error(f"Failed to load configuration: {e}")
        raise


settings = create_settings()

