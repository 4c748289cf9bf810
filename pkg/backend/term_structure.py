import logging
import math
from pathlib import Path

import numpy as np
import pandas as pd

from config import config
from errors import ExtrapolationError, InputValidationError, OutOfRangeError, ScenarioError
from models import DiscountCurve, TenorGrid, maturity_key

logger = logging.getLogger(__name__)

__all__ = [
    "build_equidistant_grid",
    "discount",
    "extend_grid",
    "forward_libor_from_prices",
    "initial_forward_libor",
    "initial_rates_from_curve",
    "load_curve_csv",
    "locate_index",
    "maturity_key",
]


def build_equidistant_grid(first_maturity: float, delta: float, count: int) -> TenorGrid:
    """Tenor grid T_i = first_maturity + (i - 1) * delta, i = 1..count"""
    if first_maturity <= 0 or delta <= 0:
        raise InputValidationError(
            f"grid needs a positive first maturity and spacing, got {first_maturity}, {delta}"
        )
    if count < 2:
        raise InputValidationError(f"grid needs at least two maturities, got {count}")
    maturities = tuple(first_maturity + i * delta for i in range(count))
    return TenorGrid(maturities=maturities, spacing=delta)


def extend_grid(grid: TenorGrid, count: int = 1) -> TenorGrid:
    """Append `count` dates to the end of the grid keeping its spacing"""
    if count < 0:
        raise InputValidationError(f"cannot extend a grid by {count} dates")
    first = grid.maturities[0]
    return build_equidistant_grid(first, grid.spacing, grid.count + count)


def locate_index(grid: TenorGrid, t: float) -> int:
    """i(t) = min{i : t <= T_i}, 1-based, inclusive at grid dates"""
    if t < 0:
        raise InputValidationError(f"time {t} is negative")
    if t > grid.last + config.GRID_TOLERANCE:
        raise OutOfRangeError(f"time {t} lies beyond the last grid date {grid.last}")
    shifted = np.asarray(grid.maturities) + config.GRID_TOLERANCE
    return int(np.searchsorted(shifted, t, side="left")) + 1


def discount(curve: DiscountCurve, maturity: float) -> float:
    """B(0, T): exact at pillars, log-linear in T between them"""
    if maturity < 0:
        raise InputValidationError(f"maturity {maturity} is negative")
    maturities = curve.maturities
    if maturity > maturities[-1] + config.GRID_TOLERANCE:
        raise ExtrapolationError(
            f"maturity {maturity} lies beyond the last curve pillar {maturities[-1]}"
        )

    index = int(np.searchsorted(maturities, maturity - config.GRID_TOLERANCE, side="left"))
    if index < len(maturities) and abs(maturities[index] - maturity) <= config.GRID_TOLERANCE:
        return curve.pillars[index][1]

    (left, p_left), (right, p_right) = curve.pillars[index - 1], curve.pillars[index]
    weight = (maturity - left) / (right - left)
    return math.exp((1.0 - weight) * math.log(p_left) + weight * math.log(p_right))


def forward_libor_from_prices(price_start: float, price_end: float, delta: float) -> float:
    """Simple forward rate implied by two bond prices delta apart"""
    if delta <= 0:
        raise InputValidationError(f"accrual period must be positive, got {delta}")
    if price_start <= 0 or price_end <= 0:
        raise InputValidationError("bond prices must be strictly positive")
    return (price_start / price_end - 1.0) / delta


def initial_forward_libor(curve: DiscountCurve, settlement: float, delta: float) -> float:
    """L(0, settlement - delta) from the curve"""
    start = settlement - delta
    if start < -config.GRID_TOLERANCE:
        raise InputValidationError(
            f"settlement {settlement} is shorter than the accrual period {delta}"
        )
    return forward_libor_from_prices(
        discount(curve, max(start, 0.0)), discount(curve, settlement), delta
    )


def initial_rates_from_curve(curve: DiscountCurve, grid: TenorGrid) -> tuple[float, ...]:
    """L(0, T_i) for every modelled grid rate"""
    return tuple(
        initial_forward_libor(curve, settlement, grid.spacing)
        for settlement in grid.maturities[1:]
    )


def load_curve_csv(path: str | Path) -> DiscountCurve:
    """Read a curve file with header `maturity,discount`"""
    path = Path(path)
    frame = pd.read_csv(path)
    frame.columns = [str(c).strip().lower() for c in frame.columns]
    missing = {"maturity", "discount"} - set(frame.columns)
    if missing:
        raise ScenarioError(f"{path}: missing column(s) {', '.join(sorted(missing))}")

    pillars = tuple(
        (float(m), float(p)) for m, p in zip(frame["maturity"], frame["discount"], strict=True)
    )
    logger.info("Loaded %d curve pillars from %s", len(pillars), path)
    return DiscountCurve(pillars=pillars)
