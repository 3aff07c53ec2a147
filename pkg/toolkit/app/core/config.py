"""
Reward Audit Configuration Settings
Environment variables and toolkit configuration
"""

from pydantic_settings import BaseSettings
from typing import List, Optional


class Settings(BaseSettings):
    """Reward audit toolkit settings"""

    # App Configuration
    APP_NAME: str = "Reward Audit Toolkit"
    VERSION: str = "1.0.0"
    CORPUS_VERSION: str = "2021.1"

    # Logging
    LOG_LEVEL: str = "WARNING"
    LOG_FILE: Optional[str] = None

    # Baseline override document (baselines/scenario format)
    REWARD_AUDIT_BASELINES: Optional[str] = None

    # Default coverage requirement for the missing-attribute lint
    REQUIRED_OUTCOME_TAGS: List[str] = ["progress", "collision", "passenger_experience"]

    # Numeric tolerances
    ABS_TOL: float = 1e-9
    REL_TOL: float = 1e-9
    ORACLE_REL_TOL: float = 1e-6
    STEP_GUARD_S: float = 1e-9

    # Report precision
    P_DECIMALS: int = 4
    KM_DECIMALS: int = 2

    # Concurrent corpus audits
    AUDIT_WORKERS: int = 4

    # Human risk baselines (km per collision)
    DRUNK_TEEN_KM_PER_COLLISION: float = 2040.0
    SOBER_TEEN_RISK_FACTOR: float = 37.0
    ADULT_50_60_KM_PER_COLLISION: Optional[float] = None
    DEFAULT_BASELINE: str = "drunk_teen_16_17"

    # Share of the path replayed as a loop by the loophole probe
    LOOPHOLE_PROBE_FRACTION: float = 0.1

    class Config:
        env_file = ".env"
        case_sensitive = True


# Global settings instance
settings = Settings()
