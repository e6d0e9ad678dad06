from typing import Optional
from pydantic_settings import BaseSettings

class Settings(BaseSettings):
    # Environment
    LOG_LEVEL: str = "INFO"
    VERSION: str = "1.0.0"

    # Run catalogue
    DATABASE_URL: str = "sqlite:///sgbh_runs.db"
    RECORD_RUNS: bool = True

    # Ensemble driver (None lets the executor pick)
    MAX_WORKERS: Optional[int] = None

    # Heat kernel
    KERNEL_IMAGE_TERMS: int = 20
    KERNEL_CROSSOVER: float = 0.05  # lag nu*tau where image sum hands over to the sine series
    KERNEL_SPECTRAL_TOL: float = 1e-16
    KERNEL_NU_SCALED: bool = True  # False reproduces the unit-diffusivity reading of the mild form

    # Picard scheme
    CONTRACTION_TARGET: float = 0.5
    HOLDER_EXPONENT: float = 0.25
    LAMBDA_MAX_T: float = 30.0  # upper bound on lambda*T

    # Malliavin
    FD_RELATIVE_STEP: float = 1e-6

    # Analysis
    KDE_MIN_SAMPLES: int = 200
    ATOM_VARIANCE_FLOOR: float = 1e-20
    COMPARISON_SLACK: float = 10.0

    class Config:
        env_file = ".env"
        env_prefix = "SGBH_"

settings = Settings()
