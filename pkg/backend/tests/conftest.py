"""
Shared pytest fixtures for the LIBOR term-structure tests.
Curves, grids, models and small simulation settings with fixed seeds.
"""

import sys
from pathlib import Path
from unittest.mock import Mock

import pytest

# Add parent directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from lmm_dynamics import build_model  # noqa: E402
from models import (  # noqa: E402
    DiscountCurve,
    GaussianJumps,
    LevyCharacteristics,
    MeasureLabel,
    SimConfig,
    VolatilitySpec,
)
from term_structure import build_equidistant_grid  # noqa: E402

SCENARIO_DIR = Path(__file__).parent.parent.parent / "scenarios"


@pytest.fixture
def mock_config():
    """Configuration with small Monte Carlo defaults."""
    config = Mock()
    config.DEFAULT_PATHS = 2000
    config.DEFAULT_SEED = 42
    config.STEPS_PER_PERIOD = 8
    config.CSV_MAX_PATHS = 10
    config.LOG_LEVEL = "INFO"
    return config


@pytest.fixture
def short_curve():
    """B(0, 0.5) = 0.98, B(0, 1.0) = 0.955, B(0, 1.5) = 0.93."""
    return DiscountCurve(pillars=((0.5, 0.98), (1.0, 0.955), (1.5, 0.93)))


@pytest.fixture
def reference_curve():
    """Five pillars half a year apart, enough for four grid rates."""
    return DiscountCurve(
        pillars=((0.5, 0.98), (1.0, 0.955), (1.5, 0.93), (2.0, 0.905), (2.5, 0.88))
    )


@pytest.fixture
def short_grid():
    return build_equidistant_grid(0.5, 0.5, 3)


@pytest.fixture
def reference_grid():
    """T_1 = 0.5, ..., T_5 = 2.5: four modelled rates."""
    return build_equidistant_grid(0.5, 0.5, 5)


@pytest.fixture
def gaussian_characteristics():
    """c = 1, eta = 1, Gaussian jump sizes with sd 0.1."""
    return LevyCharacteristics(
        diffusion=1.0, intensity=1.0, jumps=GaussianJumps(mean=0.0, sd=0.1)
    )


@pytest.fixture
def black_model(short_grid, short_curve):
    """Jump-free model with L0 = 0.05 under the forward measure of T = 1.5."""
    return build_model(
        short_grid,
        short_curve,
        VolatilitySpec(default=0.2),
        LevyCharacteristics(diffusion=1.0),
        MeasureLabel.forward(1.5),
        initial_rates=(0.05, 0.05),
    )


@pytest.fixture
def jump_model(reference_grid, reference_curve, gaussian_characteristics):
    """Four-rate jump-diffusion under the spot-LIBOR measure."""
    return build_model(
        reference_grid, reference_curve, VolatilitySpec(default=0.2), gaussian_characteristics
    )


@pytest.fixture
def diffusion_model(reference_grid, reference_curve):
    return build_model(
        reference_grid,
        reference_curve,
        VolatilitySpec(default=0.2),
        LevyCharacteristics(diffusion=1.0),
    )


@pytest.fixture
def zero_vol_model(reference_grid, reference_curve, gaussian_characteristics):
    """Jumps are present but no rate is exposed to them."""
    return build_model(
        reference_grid, reference_curve, VolatilitySpec(default=0.0), gaussian_characteristics
    )


@pytest.fixture
def small_sim():
    """h = delta / 8 with a few thousand paths."""
    return SimConfig(step=0.0625, n_paths=2000, seed=42)


@pytest.fixture
def large_sim():
    """10^5 paths for distributional checks."""
    return SimConfig(step=0.0625, n_paths=100_000, seed=42)


@pytest.fixture
def rate_state(reference_grid):
    """Rates at t- for every grid maturity."""
    return {m: 0.04 + 0.002 * i for i, m in enumerate(reference_grid.rate_maturities)}


@pytest.fixture
def scenario_dir():
    return SCENARIO_DIR
