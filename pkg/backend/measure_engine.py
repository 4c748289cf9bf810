"""
Change-of-measure algebra between forward measures and the spot-LIBOR measure.

Every supported measure is identified by the set of grid rates whose
accrual factors 1 + delta * L make up its numeraire relative to the terminal
bond B(., T_{n+1}): Forward(T_k) uses rates k..n, SpotLibor uses rates 1..n
with each factor frozen at its fixing. Densities between two measures are
ratios of these products, normalised to 1 at time 0.
"""

import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from config import config
from errors import (
    DegenerateRateError,
    DependencyError,
    InputValidationError,
    InvalidStateError,
    MeasureCoverageError,
    MeasureMismatchError,
)
from models import MeasureLabel, MeasurePair, ModelSpec, RatePathSet, TenorGrid
from term_structure import locate_index

logger = logging.getLogger(__name__)


@dataclass
class DensityPath:
    """Radon-Nikodym density process dTarget/dSource on the simulation nodes"""

    times: np.ndarray
    values: np.ndarray  # (time node, path)
    pair: MeasurePair

    def mean(self) -> np.ndarray:
        return self.values.mean(axis=1)

    def standard_error(self) -> np.ndarray:
        n_paths = self.values.shape[1]
        if n_paths < 2:
            return np.zeros(len(self.times))
        return self.values.std(axis=1, ddof=1) / np.sqrt(n_paths)

    def at(self, t: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > config.GRID_TOLERANCE:
            raise DependencyError(f"time {t} is not a simulation node")
        return self.values[k]


def accrual_weight(delta: float, rate):
    """
    Accrual weight delta * L / (1 + delta * L).

    Works elementwise on arrays of rates.
    """
    accrual = 1.0 + delta * np.asarray(rate, dtype=float)
    if np.any(accrual <= 0):
        raise DegenerateRateError(f"1 + delta * L is not positive for delta={delta}")
    weight = delta * np.asarray(rate, dtype=float) / accrual
    return float(weight) if np.ndim(weight) == 0 else weight


def jump_beta(weight, loading, size):
    """Jump factor l * (exp(lambda * x) - 1) + 1"""
    beta = np.asarray(weight) * np.expm1(np.asarray(loading) * np.asarray(size)) + 1.0
    return float(beta) if np.ndim(beta) == 0 else beta


def brownian_drift_adjustment(terms: Iterable[tuple[float, float]], diffusion: float):
    """Girsanov shift per unit time: sum over terms (lambda_j, l_j) of l_j * lambda_j * sqrt(c)"""
    if diffusion < 0:
        raise InputValidationError(f"diffusion must be nonnegative, got {diffusion}")
    root = np.sqrt(diffusion)
    total = 0.0
    for loading, weight in terms:
        total = total + weight * loading * root
    return total


def compensator_factor(betas: Sequence):
    """Product of 1 / beta_j; rescales a compensator density to the target measure"""
    factor = 1.0
    for beta in betas:
        if np.any(np.asarray(beta) <= 0):
            raise InvalidStateError("jump factor beta is not strictly positive")
        factor = factor / beta
    return factor


def numeraire_indices(label: MeasureLabel, grid: TenorGrid) -> set[int]:
    """Grid rates whose accrual factors form the numeraire of `label` over the terminal bond"""
    if label.is_spot:
        return set(range(1, grid.n_rates + 1))
    k = grid.index_of(label.maturity)
    if k is None:
        raise MeasureCoverageError(f"measure {label} is not on the tenor grid {grid.maturities}")
    return set(range(k, grid.n_rates + 1))


def _check_paths(rate_paths: RatePathSet, grid: TenorGrid, indices: set[int]) -> None:
    if abs(rate_paths.delta - grid.spacing) > config.GRID_TOLERANCE:
        raise MeasureCoverageError("paths were simulated on a grid with a different spacing")
    for j in indices:
        if j > grid.n_rates or not rate_paths.has_maturity(grid.maturities[j - 1]):
            raise MeasureCoverageError(f"paths do not cover the grid rate T_{j}")


def density_path(rate_paths: RatePathSet, grid: TenorGrid, pair: MeasurePair) -> DensityPath:
    """
    Density dTarget/dSource as a ratio of telescoping bond products.

    Args:
        rate_paths: Simulated rates covering every grid rate the two numeraires use
        grid: Tenor grid the measures refer to
        pair: Source and target measure

    Returns:
        DensityPath equal to 1 at time 0, strictly positive on every path
    """
    source = numeraire_indices(pair.source, grid)
    target = numeraire_indices(pair.target, grid)
    _check_paths(rate_paths, grid, source ^ target)

    delta = grid.spacing
    values = np.ones((len(rate_paths.times), rate_paths.n_paths))
    for j in sorted(target - source):
        rates = rate_paths.grid_rate(j)
        values *= (1.0 + delta * rates) / (1.0 + delta * rates[0])
    for j in sorted(source - target):
        rates = rate_paths.grid_rate(j)
        values *= (1.0 + delta * rates[0]) / (1.0 + delta * rates)

    if not np.all(values > 0):
        raise InvalidStateError(f"density {pair.source} -> {pair.target} is not strictly positive")
    return DensityPath(times=rate_paths.times, values=values, pair=pair)


def _girsanov_indices(label: MeasureLabel, grid: TenorGrid, current: int) -> range:
    """Grid rates i(t) .. k - 1 separating `label` from the spot-LIBOR measure at time t"""
    if label.is_spot:
        return range(current, current)
    k = grid.index_of(label.maturity)
    if k is None:
        raise MeasureCoverageError(f"measure {label} is not on the tenor grid {grid.maturities}")
    return range(current, max(k, current))


def _log_rescaling(terms: dict, indices: range, paths: np.ndarray, sizes: np.ndarray):
    """log of prod 1 / beta_j over `indices` at the given jumps"""
    total = np.zeros(len(sizes))
    for j in indices:
        loading, weight = terms[j]
        total -= np.log(jump_beta(np.asarray(weight)[paths], loading, sizes))
    return total


def stochastic_exponential_density(
    rate_paths: RatePathSet, model: ModelSpec, pair: MeasurePair
) -> DensityPath:
    """
    Same density built as the stochastic exponential of its Girsanov kernel.

    The kernel is read off the coefficients: the Brownian part
    -(sum of l_j lambda_j) sqrt(c) dW and the jump part (Y - 1)(mu - nu), where Y
    is the ratio of the products of 1 / beta_j that rescale the compensators of
    the two measures. Both are frozen at the left node of every step and
    driven by the increments the simulation consumed, so agreement with
    density_path tests the drift and compensator algebra, not the rates alone.
    Normalised to 1 at time 0.

    Args:
        rate_paths: Paths simulated under `pair.source`, with their noise record
        model: Model the paths were simulated from
        pair: Source and target measure

    Returns:
        DensityPath on the simulation nodes
    """
    if pair.source != rate_paths.measure:
        raise MeasureMismatchError(
            f"paths were simulated under {rate_paths.measure}, not under {pair.source}"
        )
    noise = rate_paths.noise
    times = rate_paths.times
    if noise is None or len(noise.times) != len(times):
        raise DependencyError("paths carry no record of the noise that drove them")

    grid = model.grid
    used: set[int] = set()
    for label in (pair.source, pair.target):
        used |= set(_girsanov_indices(label, grid, 1))
    _check_paths(rate_paths, grid, used)

    chars = model.characteristics
    if chars.has_jumps:
        nodes, weights = chars.jumps.quadrature(config.QUADRATURE_NODES, config.JUMP_MASS_TOLERANCE)
        x, w = nodes[:, None], weights[:, None]

    n_paths = rate_paths.n_paths
    log_values = np.zeros((len(times), n_paths))
    for m, (start, end) in enumerate(zip(times, times[1:], strict=False)):
        t_mid = 0.5 * (start + end)
        current = locate_index(grid, t_mid)
        target = _girsanov_indices(pair.target, grid, current)
        source = _girsanov_indices(pair.source, grid, current)
        if target == source:
            log_values[m + 1] = log_values[m]
            continue

        terms = {}
        for j in set(target) | set(source):
            weight = accrual_weight(grid.spacing, rate_paths.grid_rate(j)[m])
            terms[j] = (model.lambda_curve(j)(t_mid), weight)
        shift = sum(terms[j][0] * terms[j][1] for j in target) - sum(
            terms[j][0] * terms[j][1] for j in source
        )
        shift = np.broadcast_to(np.asarray(shift, dtype=float), (n_paths,))
        variance = chars.diffusion.integral(start, end)
        increment = -shift * noise.brownian[m] - 0.5 * shift**2 * variance

        if chars.has_jumps:
            events = np.flatnonzero(noise.event_step == m)
            paths, sizes = noise.event_path[events], noise.event_size[events]
            log_jumps = _log_rescaling(terms, target, paths, sizes) - _log_rescaling(
                terms, source, paths, sizes
            )
            np.add.at(increment, paths, log_jumps)

            rescaled = [
                compensator_factor([jump_beta(terms[j][1], terms[j][0], x) for j in indices])
                for indices in (target, source)
            ]
            mass = chars.intensity(t_mid) * (end - start)
            increment -= mass * np.sum(w * (rescaled[0] - rescaled[1]), axis=0)

        log_values[m + 1] = log_values[m] + increment
    return DensityPath(times=times, values=np.exp(log_values), pair=pair)
