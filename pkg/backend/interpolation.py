"""
Continuous-tenor construction on top of a simulated discrete model.

The spot-LIBOR numeraire B* is known at tenor dates from the simulated
fixings. Between two tenor dates it is blended log-linearly with a
deterministic weight gamma(T), chosen on a fixed sample set so that
E[1 / B*(T)] reproduces the initial discount curve.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy.optimize import bisect

from config import config
from errors import (
    DependencyError,
    InfeasibleCurveError,
    InputValidationError,
    MaturedBondError,
    MeasureCoverageError,
    OutOfRangeError,
)
from lmm_dynamics import RateState
from measure_engine import accrual_weight, jump_beta
from models import DiscountCurve, ModelSpec, RatePathSet, TenorGrid, maturity_key
from term_structure import discount

logger = logging.getLogger(__name__)


class GammaInterpolation(BaseModel):
    """Blend weights gamma(T) on one tenor interval [start, end]"""

    model_config = ConfigDict(frozen=True)

    start: float
    end: float
    points: tuple[tuple[float, float], ...] = ()  # (T, gamma(T)) for solved interior dates

    @model_validator(mode="after")
    def _check_monotone(self) -> "GammaInterpolation":
        gammas = [0.0, *(g for _, g in sorted(self.points)), 1.0]
        if any(not 0.0 <= g <= 1.0 for g in gammas):
            raise ValueError("gamma must lie in [0, 1]")
        if any(b < a for a, b in zip(gammas, gammas[1:], strict=False)):
            raise ValueError("gamma must be nondecreasing in T")
        return self

    def __call__(self, maturity: float) -> float:
        if abs(maturity - self.start) <= config.GRID_TOLERANCE:
            return 0.0
        if abs(maturity - self.end) <= config.GRID_TOLERANCE:
            return 1.0
        key = maturity_key(maturity)
        for point, gamma in self.points:
            if maturity_key(point) == key:
                return gamma
        raise DependencyError(f"gamma was not solved for {maturity} in [{self.start}, {self.end}]")


@dataclass
class SpotNumerairePath:
    """Rolled-over numeraire B*(t) per path at tenor dates and interpolated dates"""

    dates: np.ndarray  # 0, T_1, ..., T_{n+1}
    values: np.ndarray  # (date, path)
    curve: DiscountCurve
    gammas: dict[tuple[float, float], GammaInterpolation] = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.values.shape[1]

    def interval_of(self, maturity: float) -> int:
        """Index n with dates[n] < T < dates[n + 1]"""
        if maturity < 0 or maturity > self.dates[-1] + config.GRID_TOLERANCE:
            raise OutOfRangeError(f"{maturity} lies outside [0, {self.dates[-1]}]")
        return max(int(np.searchsorted(self.dates, maturity, side="left")) - 1, 0)

    def at(self, maturity: float) -> np.ndarray:
        """B*(T) per path"""
        matches = np.flatnonzero(np.abs(self.dates - maturity) <= config.GRID_TOLERANCE)
        if len(matches):
            return self.values[matches[0]]
        n = self.interval_of(maturity)
        if n == 0:
            # Before T_1 the numeraire is deterministic
            return np.full(self.n_paths, 1.0 / discount(self.curve, maturity))
        interval = (maturity_key(self.dates[n]), maturity_key(self.dates[n + 1]))
        if interval not in self.gammas:
            raise DependencyError(f"no gamma interpolation for the interval containing {maturity}")
        gamma = self.gammas[interval](maturity)
        return np.exp((1.0 - gamma) * np.log(self.values[n]) + gamma * np.log(self.values[n + 1]))

    def with_gammas(
        self, gammas: dict[tuple[float, float], GammaInterpolation]
    ) -> "SpotNumerairePath":
        return replace(self, gammas={**self.gammas, **gammas})


def spot_numeraire_path(
    paths: RatePathSet, grid: TenorGrid, curve: DiscountCurve
) -> SpotNumerairePath:
    """B*(T_k) = (1 / B(0, T_1)) * prod_{j<k} (1 + delta * L(T_j, T_j)), B*(0) = 1"""
    n_rates = grid.n_rates
    factors = []
    for j in range(1, n_rates + 1):
        maturity = grid.maturities[j - 1]
        if not paths.has_maturity(maturity):
            raise DependencyError(f"paths are missing the fixing L({maturity:g}, {maturity:g})")
        factors.append(1.0 + grid.spacing * paths.fixing(maturity))

    start = np.full(paths.n_paths, 1.0 / discount(curve, grid.maturities[0]))
    values = [np.ones(paths.n_paths), start]
    for factor in factors:
        values.append(values[-1] * factor)
    return SpotNumerairePath(
        dates=np.array([0.0, *grid.maturities]),
        values=np.vstack(values),
        curve=curve,
    )


def solve_gamma(
    samples_n: np.ndarray,
    samples_n1: np.ndarray,
    curve: DiscountCurve,
    maturity: float,
    tol: float | None = None,
    interval: tuple[float, float] | None = None,
) -> float:
    """
    Blend weight gamma in [0, 1] with mean(B*(T_n)^-(1-gamma) * B*(T_{n+1})^-gamma) = B(0, T).

    Args:
        samples_n: B*(T_n) per path
        samples_n1: B*(T_{n+1}) per path, paired with samples_n
        curve: Initial discount curve providing the target B(0, T)
        maturity: Date T inside the interval
        tol: Residual tolerance on the sample mean
        interval: (T_n, T_{n+1}); endpoints then return exactly 0 and 1

    Returns:
        gamma(T)
    """
    tol = config.GAMMA_TOLERANCE if tol is None else tol
    if interval is not None:
        start, end = interval
        if not start - config.GRID_TOLERANCE <= maturity <= end + config.GRID_TOLERANCE:
            raise InputValidationError(f"{maturity} lies outside the interval {interval}")
        if abs(maturity - start) <= config.GRID_TOLERANCE:
            return 0.0
        if abs(maturity - end) <= config.GRID_TOLERANCE:
            return 1.0

    log_n, log_n1 = np.log(samples_n), np.log(samples_n1)
    target = discount(curve, maturity)

    def residual(gamma: float) -> float:
        return float(np.mean(np.exp(-(1.0 - gamma) * log_n - gamma * log_n1))) - target

    at_zero, at_one = residual(0.0), residual(1.0)
    if abs(at_zero) <= tol:
        return 0.0
    if abs(at_one) <= tol:
        return 1.0
    if at_zero < 0 or at_one > 0:
        raise InfeasibleCurveError(
            f"B(0, {maturity:g}) = {target:.10g} is outside the attainable range "
            f"[{at_one + target:.10g}, {at_zero + target:.10g}] of the sample set"
        )

    gamma = bisect(residual, 0.0, 1.0, xtol=tol * 1e-3, maxiter=config.GAMMA_MAX_ITER, disp=False)
    if abs(residual(gamma)) > tol:
        raise InfeasibleCurveError(
            f"gamma search for {maturity:g} stopped with residual {residual(gamma):.3g} > {tol:g}"
        )
    return float(gamma)


def build_gamma_interpolation(
    numeraire: SpotNumerairePath,
    curve: DiscountCurve,
    dates: list[float],
    tol: float | None = None,
) -> dict[tuple[float, float], GammaInterpolation]:
    """
    Solve gamma for every requested date, walking the intervals from the last one back.

    The same sample set is used throughout, so gamma is nondecreasing in T
    within each interval.
    """
    by_interval: dict[int, list[float]] = {}
    for maturity in dates:
        if np.any(np.abs(numeraire.dates - maturity) <= config.GRID_TOLERANCE):
            continue
        by_interval.setdefault(numeraire.interval_of(maturity), []).append(maturity)

    result = {}
    for n in range(len(numeraire.dates) - 2, -1, -1):
        start, end = float(numeraire.dates[n]), float(numeraire.dates[n + 1])
        points = []
        for maturity in sorted(by_interval.get(n, [])):
            gamma = solve_gamma(
                numeraire.values[n], numeraire.values[n + 1], curve, maturity, tol, (start, end)
            )
            points.append((maturity, gamma))
        result[(maturity_key(start), maturity_key(end))] = GammaInterpolation(
            start=start, end=end, points=tuple(points)
        )
        if points:
            logger.debug("Solved %d gamma values on [%g, %g]", len(points), start, end)
    return result


def interpolated_forward_density(
    numeraire: SpotNumerairePath, curve: DiscountCurve, maturity: float
) -> np.ndarray:
    """Density of the forward measure of an off-grid date T against the spot-LIBOR measure"""
    return 1.0 / (numeraire.at(maturity) * discount(curve, maturity))


def _blend_weight(
    gammas: dict[tuple[float, float], GammaInterpolation], start: float, end: float, maturity: float
) -> float:
    """gamma(T) on [start, end], exact at the endpoints even without a solved interpolation"""
    if abs(maturity - start) <= config.GRID_TOLERANCE:
        return 0.0
    if abs(maturity - end) <= config.GRID_TOLERANCE:
        return 1.0
    interval = (maturity_key(start), maturity_key(end))
    if interval not in gammas:
        raise DependencyError(f"gamma was not solved for {maturity} in [{start}, {end}]")
    return gammas[interval](maturity)


def _pieces(grid: TenorGrid, start: float, end: float) -> list[tuple[int, float, float]]:
    """[start, end] cut at tenor dates into (n, a, b) with T_n <= a < b <= T_{n+1}, T_0 = 0"""
    if end > grid.last + config.GRID_TOLERANCE:
        raise MeasureCoverageError(f"maturity {end} is not covered by the tenor grid")
    dates = np.array([0.0, *grid.maturities])
    pieces, a = [], start
    while end - a > config.GRID_TOLERANCE:
        n = max(int(np.searchsorted(dates, a + config.GRID_TOLERANCE, side="right")) - 1, 0)
        b = min(end, float(dates[n + 1]))
        pieces.append((n, a, b))
        a = b
    return pieces


def _exponent(grid: TenorGrid, gammas: dict, n: int, a: float, b: float) -> float:
    """Power of 1 + delta * L(t, T_n) in the piece [a, b] of interval n"""
    start, end = float(grid.maturities[n - 1]), float(grid.maturities[n])
    return _blend_weight(gammas, start, end, b) - _blend_weight(gammas, start, end, a)


@dataclass
class ForwardProcessCoefficients:
    """Volatility loading alpha and jump factor beta of F(., U, S)"""

    alpha: float | np.ndarray
    links: tuple = ()  # (l, lambda, power) of every link between U and S

    def beta(self, size):
        """Product of the link jump factors at jump size x"""
        factor = 1.0
        for weight, loading, power in self.links:
            factor = factor * jump_beta(weight, loading, size) ** power
        return factor


def forward_process_coefficients(
    model: ModelSpec,
    start: float,
    end: float,
    t: float,
    state: RateState,
    gammas: dict[tuple[float, float], GammaInterpolation] | None = None,
) -> ForwardProcessCoefficients:
    """
    Coefficients of the forward process F(t, U, S) = B(t, U) / B(t, S).

    [U, S] is cut at tenor dates. A piece [a, b] of [T_n, T_{n+1}] is the link
    (1 + delta * L(t, T_n)) ** (gamma(b) - gamma(a)), so a whole period is the
    plain accrual factor and a fractional one follows the gamma-blended
    numeraire. alpha adds up and beta multiplies across links. Pieces before
    T_1 and links whose rate has fixed are deterministic.

    Args:
        model: Model providing the grid and the loadings
        start: U
        end: S, at most the last tenor date
        t: Time of evaluation, at most U
        state: Grid rates at t_-
        gammas: Solved gamma interpolations, needed for off-grid U or S
    """
    if end <= start + config.GRID_TOLERANCE:
        raise InputValidationError(f"forward process needs U < S, got [{start}, {end}]")
    if t > start + config.GRID_TOLERANCE:
        raise OutOfRangeError(f"forward process F(., {start:g}, {end:g}) has ended at t={t}")
    grid, gammas = model.grid, gammas or {}
    alpha, links = 0.0, []
    for n, a, b in _pieces(grid, start, end):
        if n == 0 or t > grid.maturities[n - 1] + config.GRID_TOLERANCE:
            continue
        key = maturity_key(grid.maturities[n - 1])
        if key not in state:
            raise MeasureCoverageError(f"no rate L(t-, {grid.maturities[n - 1]:g}) for the link")
        power = _exponent(grid, gammas, n, a, b)
        loading = model.lambda_curve(n)(t)
        weight = accrual_weight(grid.spacing, state[key])
        alpha = alpha + power * weight * loading
        links.append((weight, loading, power))
    return ForwardProcessCoefficients(alpha=alpha, links=tuple(links))


@dataclass
class ForwardProcessPaths:
    """F(t, T, T + delta) = 1 + delta * L(t, T) for every simulated maturity"""

    times: np.ndarray
    maturities: tuple[float, ...]
    values: np.ndarray  # (maturity, time node, path)
    delta: float
    curve: DiscountCurve
    grid: TenorGrid
    gammas: dict[tuple[float, float], GammaInterpolation] = field(default_factory=dict)

    def link(self, maturity: float) -> np.ndarray:
        key = maturity_key(maturity)
        for row, m in enumerate(self.maturities):
            if maturity_key(m) == key:
                return self.values[row]
        raise DependencyError(f"no forward process for the link starting at {maturity}")


def forward_process_paths(
    paths: RatePathSet,
    curve: DiscountCurve,
    gammas: dict[tuple[float, float], GammaInterpolation] | None = None,
) -> ForwardProcessPaths:
    return ForwardProcessPaths(
        times=paths.times,
        maturities=paths.maturities,
        values=1.0 + paths.delta * paths.rates,
        delta=paths.delta,
        curve=curve,
        grid=paths.grid,
        gammas=dict(gammas or {}),
    )


def bond_price(forward_paths: ForwardProcessPaths, maturity: float, t: float) -> np.ndarray:
    """
    B(t, T) = 1 / F(t, t, T) per path.

    The links are cut at tenor dates as in forward_process_coefficients, with
    the rates of time t. At t = 0 the curve value is returned; at t = T the
    bond is worth 1. Off-grid t or T need their gamma values.
    """
    if t > maturity + config.GRID_TOLERANCE:
        raise MaturedBondError(f"bond maturing at {maturity} has expired at t={t}")
    n_paths = forward_paths.values.shape[2]
    if t == 0.0:
        return np.full(n_paths, discount(forward_paths.curve, maturity))
    if abs(maturity - t) <= config.GRID_TOLERANCE:
        return np.ones(n_paths)

    k = int(np.argmin(np.abs(forward_paths.times - t)))
    if abs(forward_paths.times[k] - t) > config.GRID_TOLERANCE:
        raise DependencyError(f"time {t} is not a simulation node")

    grid, curve = forward_paths.grid, forward_paths.curve
    log_forward = np.zeros(n_paths)
    for n, a, b in _pieces(grid, t, maturity):
        if n == 0:
            # Before T_1 the numeraire is deterministic
            log_forward += np.log(discount(curve, a)) - np.log(discount(curve, b))
            continue
        power = _exponent(grid, forward_paths.gammas, n, a, b)
        log_forward += power * np.log(forward_paths.link(grid.maturities[n - 1])[k])
    return np.exp(-log_forward)
