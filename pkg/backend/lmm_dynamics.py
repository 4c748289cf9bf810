import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from pydantic import ValidationError

from config import config
from errors import (
    ConditionViolationError,
    ConfigurationError,
    DependencyError,
    InputValidationError,
    OutOfRangeError,
)
from measure_engine import accrual_weight, brownian_drift_adjustment, compensator_factor, jump_beta
from models import (
    DiscountCurve,
    JumpDensity,
    LevyCharacteristics,
    MeasureLabel,
    ModelSpec,
    PiecewiseConstant,
    TenorGrid,
    VolatilitySpec,
    maturity_key,
)
from stochastic_driver import check_conditions
from term_structure import (
    extend_grid,
    initial_forward_libor,
    initial_rates_from_curve,
    locate_index,
)

logger = logging.getLogger(__name__)

# Rates at t_-: maturity key -> value (float, or one value per path)
RateState = Mapping[float, float | np.ndarray]


@dataclass
class SdeCoefficients:
    """Coefficients of dL / L_- for one rate under one measure

    dL / L_- = (drift + compensator_correction) dt + diffusion_loading dW
               + int (exp(jump_loading x) - 1) (mu - nu^ref)(dt, dx)

    nu^ref is the jump compensator under the simulation measure: the driver's
    eta * density (the spot-LIBOR one) times the product of 1 / beta_j over
    `measure_terms`. `jump_compensator` is int (exp(jump_loading x) - 1) nu^ref(dx)
    per year, the term the log-Euler scheme subtracts from the log increment.
    """

    drift: float | np.ndarray
    diffusion_loading: float
    jump_loading: float
    compensator_correction: float | np.ndarray
    jump_compensator: float | np.ndarray
    reference: MeasureLabel
    jump_terms: tuple = field(default=(), repr=False)  # (lambda_j, l_j) entering the beta product
    inverse_product: bool = True  # product of 1/beta_j (True) or of beta_j (False)
    measure_terms: tuple = field(default=(), repr=False)  # (lambda_j, l_j) rescaling nu^ref

    def jump_transform(self, size):
        return np.expm1(self.jump_loading * np.asarray(size))

    def correction_integrand(self, size):
        """(exp(lambda x) - 1)(1 - product of beta factors) per unit of the driver's compensator"""
        betas = [jump_beta(weight, loading, size) for loading, weight in self.jump_terms]
        if self.inverse_product:
            product = compensator_factor(betas)
        else:
            product = np.prod(betas, axis=0) if betas else 1.0
        return self.jump_transform(size) * (1.0 - product) * self.measure_rescaling(size)

    def measure_rescaling(self, size):
        """Density of nu^ref against the driver's compensator at jump size x"""
        return compensator_factor([jump_beta(w, lam, size) for lam, w in self.measure_terms])

    def is_zero(self) -> bool:
        return all(
            np.all(np.asarray(value) == 0.0)
            for value in (
                self.drift,
                self.diffusion_loading,
                self.jump_loading,
                self.compensator_correction,
                self.jump_compensator,
            )
        )


@lru_cache(maxsize=32)
def _jump_nodes(jumps: JumpDensity) -> tuple[np.ndarray, np.ndarray]:
    return jumps.quadrature(config.QUADRATURE_NODES, config.JUMP_MASS_TOLERANCE)


def _drift_from_shift(loading: float, diffusion: float, terms: list, sign: float):
    """Drift of dL / L_- produced by a Girsanov shift over `terms`"""
    return sign * loading * math.sqrt(diffusion) * brownian_drift_adjustment(terms, diffusion)


def _nodes(chars: LevyCharacteristics, *term_lists: list) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature nodes shaped to broadcast against per-path weights"""
    nodes, weights = _jump_nodes(chars.jumps)
    ndim = max((np.ndim(weight) for terms in term_lists for _, weight in terms), default=0)
    shape = (-1,) + (1,) * ndim
    return nodes.reshape(shape), weights.reshape(shape)


def _rescaling(measure_terms: list, x: np.ndarray):
    return compensator_factor([jump_beta(weight, lam, x) for lam, weight in measure_terms])


def _as_result(value):
    return float(value) if np.ndim(value) == 0 else value


def _compensator_correction(
    loading: float,
    chars: LevyCharacteristics,
    t: float,
    terms: list,
    inverse: bool,
    measure_terms: list,
):
    """Integral of (exp(lambda x) - 1)(1 - prod beta) against nu^ref at time t"""
    eta = chars.intensity(t)
    if loading == 0.0 or eta == 0.0 or not terms or chars.jumps is None:
        return 0.0

    x, w = _nodes(chars, terms, measure_terms)
    betas = [jump_beta(weight, lam, x) for lam, weight in terms]
    product = compensator_factor(betas) if inverse else np.prod(np.broadcast_arrays(*betas), axis=0)
    integrand = np.expm1(loading * x) * (1.0 - product) * _rescaling(measure_terms, x)
    return _as_result(eta * np.sum(w * integrand, axis=0))


def _jump_compensator(loading: float, chars: LevyCharacteristics, t: float, measure_terms: list):
    """Integral of (exp(lambda x) - 1) against nu^ref at time t"""
    if not measure_terms:
        return chars.jump_compensator(t, loading)
    eta = chars.intensity(t)
    if loading == 0.0 or eta == 0.0 or chars.jumps is None:
        return 0.0
    x, w = _nodes(chars, measure_terms)
    integrand = np.expm1(loading * x) * _rescaling(measure_terms, x)
    return _as_result(eta * np.sum(w * integrand, axis=0))


def _assemble(
    model: ModelSpec,
    loading: float,
    t: float,
    terms: list,
    sign: float,
    inverse: bool,
    reference: MeasureLabel,
    measure_terms: list | None = None,
) -> SdeCoefficients:
    chars = model.characteristics
    measure_terms = measure_terms or []
    diffusion = chars.diffusion(t)
    if loading == 0.0:
        return SdeCoefficients(
            drift=0.0,
            diffusion_loading=0.0,
            jump_loading=0.0,
            compensator_correction=0.0,
            jump_compensator=0.0,
            reference=reference,
        )
    return SdeCoefficients(
        drift=_drift_from_shift(loading, diffusion, terms, sign) if terms else 0.0,
        diffusion_loading=loading * math.sqrt(diffusion),
        jump_loading=loading,
        compensator_correction=_compensator_correction(
            loading, chars, t, terms, inverse, measure_terms
        ),
        jump_compensator=_jump_compensator(loading, chars, t, measure_terms),
        reference=reference,
        jump_terms=tuple(terms),
        inverse_product=inverse,
        measure_terms=tuple(measure_terms),
    )


def _check_rate_index(model: ModelSpec, s: int) -> None:
    if not 1 <= s <= model.grid.n_rates:
        raise InputValidationError(f"rate index {s} outside 1..{model.grid.n_rates}")


def _term(model: ModelSpec, j: int, t: float, state: RateState) -> tuple[float, float | np.ndarray]:
    """(lambda(t, T_j), l(t_-, T_j)) for grid rate j"""
    maturity = model.grid.maturities[j - 1]
    key = maturity_key(maturity)
    if key not in state:
        raise DependencyError(f"state is missing the rate L(t-, {maturity:g})")
    return model.lambda_curve(j)(t), accrual_weight(model.grid.spacing, state[key])


def _measure_index(model: ModelSpec, t: float, measure: MeasureLabel) -> int:
    """Index k with the measure acting like Forward(T_k) at time t"""
    current = locate_index(model.grid, t)
    if measure.is_spot:
        return current
    k = model.grid.index_of(measure.maturity)
    if k is None:
        raise ConfigurationError(f"measure {measure} is not on the tenor grid")
    return max(k, current)


def measure_jump_terms(
    model: ModelSpec, t: float, state: RateState, measure: MeasureLabel
) -> list[tuple[float, float | np.ndarray]]:
    """
    Terms (lambda_j, l_j) for j = i(t) .. k - 1 turning the driver's compensator
    into the one under `measure`.

    The driver's eta * density is the compensator under the spot-LIBOR measure,
    and Forward(T_k) multiplies it by the product of 1 / beta_j over these
    terms. Empty when there are no jumps or the measure acts like the
    spot-LIBOR one.
    """
    if not model.characteristics.has_jumps:
        return []
    current = locate_index(model.grid, t)
    return [_term(model, j, t, state) for j in range(current, _measure_index(model, t, measure))]


def measure_sde_coefficients(
    model: ModelSpec, s: int, t: float, state: RateState, measure: MeasureLabel
) -> SdeCoefficients:
    """
    Coefficients of the grid rate L(., T_s) under any supported measure.

    Forward measures whose bond has already matured are rolled over at the
    fixing, so the spot-LIBOR measure acts locally like Forward(T_{i(t)}).
    """
    _check_rate_index(model, s)
    grid = model.grid
    maturity = grid.maturities[s - 1]
    if t > maturity + config.GRID_TOLERANCE:
        raise OutOfRangeError(f"rate L(., {maturity:g}) is already fixed at t={t}")

    k = _measure_index(model, t, measure)
    rescaling = measure_jump_terms(model, t, state, measure)
    loading = model.lambda_curve(s)(t)
    if s >= k:
        terms = [_term(model, j, t, state) for j in range(k, s + 1)]
        return _assemble(model, loading, t, terms, 1.0, True, measure, rescaling)
    if s == k - 1:
        return _assemble(model, loading, t, [], 1.0, True, measure, rescaling)
    terms = [_term(model, j, t, state) for j in range(s + 1, k)]
    return _assemble(model, loading, t, terms, -1.0, False, measure, rescaling)


def forward_sde_coefficients(
    model: ModelSpec, s: int, t: float, state: RateState
) -> SdeCoefficients:
    """Driftless coefficients of L(., T_s) under its own forward measure P_{T_{s+1}}"""
    _check_rate_index(model, s)
    if t >= model.grid.maturities[s - 1]:
        raise OutOfRangeError(f"forward dynamics of rate {s} need t < T_{s}")
    measure = MeasureLabel.forward(model.grid.maturities[s])
    return measure_sde_coefficients(model, s, t, state, measure)


def spot_sde_coefficients(model: ModelSpec, s: int, t: float, state: RateState) -> SdeCoefficients:
    """Coefficients of L(., T_s) under the spot-LIBOR measure"""
    return measure_sde_coefficients(model, s, t, state, MeasureLabel.spot())


def resolve_volatility(model: ModelSpec, maturity: float) -> PiecewiseConstant:
    """
    Volatility function for any maturity, including off-grid ones.

    Order: explicit entry, linear interpolation in T between the bracketing
    grid rates, default curve.
    """
    curve = model.volatility.curve_for(maturity)
    if curve is not None:
        return curve

    grid_maturities = model.grid.rate_maturities
    for j, (left, right) in enumerate(zip(grid_maturities, grid_maturities[1:], strict=False), 1):
        if left < maturity < right:
            lower, upper = model.lambda_curve(j), model.lambda_curve(j + 1)
            weight = (maturity - left) / (right - left)
            breakpoints = tuple(sorted(set(lower.breakpoints) | set(upper.breakpoints)))
            values = tuple((1 - weight) * lower(b) + weight * upper(b) for b in breakpoints)
            return PiecewiseConstant(breakpoints=breakpoints, values=values)

    if model.volatility.default is not None:
        return model.volatility.default
    raise ConfigurationError(f"no volatility configured for maturity {maturity}")


def interpolated_sde_coefficients(
    model: ModelSpec, maturity: float, t: float, state: RateState
) -> SdeCoefficients:
    """
    Spot-LIBOR coefficients of the rate L(., T) for a maturity T between grid dates.

    The grid rates i(t) .. i(T) - 1 contribute as in the discrete model and the
    rate L(t-, T) itself closes the sum, so at a grid date the result equals
    spot_sde_coefficients.
    """
    grid = model.grid
    if t > maturity + config.GRID_TOLERANCE:
        raise OutOfRangeError(f"rate L(., {maturity:g}) is already fixed at t={t}")
    if maturity > grid.last + config.GRID_TOLERANCE:
        raise OutOfRangeError(f"maturity {maturity} lies beyond the tenor grid")

    loading = resolve_volatility(model, maturity)(t)
    key = maturity_key(maturity)
    if key not in state:
        raise DependencyError(f"state is missing the rate L(t-, {maturity:g})")

    start, end = locate_index(grid, t), locate_index(grid, maturity)
    terms = [_term(model, j, t, state) for j in range(start, end)]
    terms.append((loading, accrual_weight(grid.spacing, state[key])))
    return _assemble(model, loading, t, terms, 1.0, True, MeasureLabel.spot())


def build_model(
    grid: TenorGrid,
    curve: DiscountCurve,
    volatility: VolatilitySpec,
    characteristics: LevyCharacteristics | None = None,
    measure: MeasureLabel | None = None,
    initial_rates: tuple[float, ...] | None = None,
) -> ModelSpec:
    """Assemble a ModelSpec, taking initial rates from the curve unless given"""
    if initial_rates is None:
        initial_rates = initial_rates_from_curve(curve, grid)
    return ModelSpec(
        grid=grid,
        curve=curve,
        volatility=volatility,
        characteristics=characteristics or LevyCharacteristics(),
        measure=measure or MeasureLabel.spot(),
        initial_rates=tuple(initial_rates),
    )


def extend_tenor(
    model: ModelSpec, lambda_new: PiecewiseConstant | float, initial_rate: float | None = None
) -> ModelSpec:
    """
    Append T_{n+2} = T_{n+1} + delta and a new rate L(., T_{n+1}).

    Existing rates keep their coefficient functions. The new rate's initial
    value defaults to the curve-implied forward rate.
    """
    if not isinstance(lambda_new, PiecewiseConstant):
        lambda_new = PiecewiseConstant.constant(lambda_new)
    if lambda_new.min() < 0 or not math.isfinite(lambda_new.sup()):
        raise InputValidationError("a new volatility must be nonnegative and bounded")

    new_maturity = model.grid.last
    grid = extend_grid(model.grid, 1)
    try:
        volatility = model.volatility.with_entry(new_maturity, lambda_new)
        volatility = VolatilitySpec.model_validate(volatility.model_dump())
    except ValidationError as e:
        raise InputValidationError(f"invalid volatility for maturity {new_maturity}: {e}") from e

    total = model.lambda_sum() + lambda_new.sup()
    declared = volatility.sum_bound
    if declared is not None and total > declared:
        raise ConditionViolationError(
            f"volatility sum {total:.6g} would exceed the declared bound M={declared:g}"
        )
    report = check_conditions(
        model.characteristics, volatility, grid.last, maturities=list(grid.rate_maturities)
    )
    if not report.cond2_pass:
        raise ConditionViolationError(f"extension breaks cond2: {report.diagnostics['cond2']}")

    if initial_rate is None:
        initial_rate = initial_forward_libor(model.curve, grid.last, grid.spacing)

    extended = ModelSpec(
        grid=grid,
        curve=model.curve,
        volatility=volatility,
        characteristics=model.characteristics,
        measure=model.measure,
        initial_rates=(*model.initial_rates, initial_rate),
    )
    logger.info(
        "Extended tenor to %g with L0=%.6g and sup lambda=%.4g",
        grid.last,
        initial_rate,
        lambda_new.sup(),
    )
    return extended


def extend_tenor_many(
    model: ModelSpec, extensions: list[tuple[PiecewiseConstant | float, float | None]]
) -> ModelSpec:
    """Apply extend_tenor once per (lambda, initial rate) pair"""
    for lambda_new, initial_rate in extensions:
        model = extend_tenor(model, lambda_new, initial_rate)
    return model
