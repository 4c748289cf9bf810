import os
from dataclasses import dataclass

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


@dataclass
class Config:
    """Configuration settings for the LIBOR term-structure toolkit"""

    # Monte Carlo defaults (scenario values override these, CLI flags override both)
    DEFAULT_PATHS: int = int(os.getenv("LMM_PATHS", "100000"))
    DEFAULT_SEED: int = int(os.getenv("LMM_SEED", "42"))
    STEPS_PER_PERIOD: int = int(os.getenv("LMM_STEPS_PER_PERIOD", "8"))  # h = delta / 8

    # Random substreams: one per block of paths. Changing the block size changes the draws.
    PATH_BLOCK_SIZE: int = int(os.getenv("LMM_PATH_BLOCK_SIZE", "4096"))
    MAX_WORKERS: int = int(os.getenv("LMM_MAX_WORKERS", "4"))  # never affects results

    # Compensator-correction quadrature
    QUADRATURE_NODES: int = 64
    JUMP_MASS_TOLERANCE: float = 1e-10  # jump mass left outside the truncated domain

    # Gamma interpolation root search
    GAMMA_TOLERANCE: float = 1e-10
    GAMMA_MAX_ITER: int = 60

    # Validation tolerances
    Z_TOLERANCE: float = 3.0  # standard errors
    IDENTITY_TOLERANCE: float = 1e-12
    COEFFICIENT_TOLERANCE: float = 1e-14
    # mean absolute gap between the bond-ratio density and its stochastic exponential
    STOCHASTIC_EXPONENTIAL_TOLERANCE: float = 5e-3
    GRID_TOLERANCE: float = 1e-12

    # Output settings
    CSV_MAX_PATHS: int = int(os.getenv("LMM_CSV_MAX_PATHS", "1000"))
    LOG_LEVEL: str = os.getenv("LMM_LOG_LEVEL", "INFO")


config = Config()
