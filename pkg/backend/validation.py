import logging
import math
import time
from abc import ABC, abstractmethod
from functools import cached_property
from typing import Any

import numpy as np
from scipy.stats import norm

from config import config
from errors import ExtrapolationError, InputValidationError, MeasureMismatchError
from interpolation import (
    build_gamma_interpolation,
    forward_process_paths,
    spot_numeraire_path,
)
from lmm_dynamics import extend_tenor, interpolated_sde_coefficients, spot_sde_coefficients
from measure_engine import DensityPath, density_path, stochastic_exponential_density
from models import (
    CheckResult,
    LevyCharacteristics,
    MeasureLabel,
    MeasurePair,
    ModelSpec,
    RatePathSet,
    SimConfig,
    ValidationReport,
    maturity_key,
)
from simulator import caplet_price_mc, simulate, total_volatility
from stochastic_driver import check_conditions
from term_structure import discount, initial_forward_libor

logger = logging.getLogger(__name__)


def _z_score(values: np.ndarray, target: float) -> float:
    """(mean - target) / standard error; exactly 0 when every value equals the target"""
    deviation = np.asarray(values, dtype=float) - target
    if np.all(deviation == 0.0):
        return 0.0
    if len(deviation) < 2:
        return math.inf
    error = deviation.std(ddof=1) / math.sqrt(len(deviation))
    if error == 0.0:
        return math.copysign(math.inf, deviation.mean())
    return float(deviation.mean() / error)


def martingale_test(
    paths: RatePathSet,
    measure: MeasureLabel,
    maturity: float,
    density: DensityPath | None = None,
) -> float:
    """
    z-score of E[L(T, T)] - L(0, T) under the proper forward measure of L(., T).

    Args:
        paths: Simulated rates, labelled with the measure they were simulated under
        measure: Measure the paths are taken to be under
        maturity: Fixing date T of the tested rate
        density: Density from `measure` to Forward(T + delta), needed unless
            `measure` already is that forward measure

    Returns:
        z-score; the rate is driftless at the 3-sigma level iff |z| <= 3
    """
    if paths.measure != measure:
        raise MeasureMismatchError(f"paths were simulated under {paths.measure}, not {measure}")

    proper = MeasureLabel.forward(maturity + paths.delta)
    fixings = paths.fixing(maturity)
    initial = float(paths.rate(maturity)[0, 0])
    if not measure.is_spot and maturity_key(measure.maturity) == maturity_key(proper.maturity):
        return _z_score(fixings, initial)

    if density is None:
        raise MeasureMismatchError(f"testing a rate under {measure} needs a density to {proper}")
    if density.pair != MeasurePair(source=measure, target=proper):
        raise MeasureMismatchError(
            f"density goes {density.pair.source} -> {density.pair.target}, "
            f"need {measure} -> {proper}"
        )
    weights = density.values[paths.time_index(maturity)]
    return _z_score(weights * fixings, initial)


def black_caplet_reference(
    initial_rate: float, strike: float, total_vol: float, discount_factor: float, delta: float
) -> float:
    """Black price of a caplet on a lognormal forward rate"""
    if total_vol < 0:
        raise InputValidationError(f"total volatility must be nonnegative, got {total_vol}")
    scale = discount_factor * delta
    if total_vol == 0.0:
        return scale * max(initial_rate - strike, 0.0)
    if strike <= 0.0:
        return scale * (initial_rate - strike)
    d1 = (math.log(initial_rate / strike) + 0.5 * total_vol**2) / total_vol
    d2 = d1 - total_vol
    return scale * (initial_rate * norm.cdf(d1) - strike * norm.cdf(d2))


class SuiteContext:
    """Model, settings and the simulation runs shared by the checks"""

    def __init__(self, model: ModelSpec, sim_config: SimConfig):
        self.model = model
        self.sim_config = sim_config

    @cached_property
    def paths(self) -> RatePathSet:
        """Run under the model's own measure"""
        return simulate(self.model, self.sim_config)

    @cached_property
    def spot_model(self) -> ModelSpec:
        if self.model.measure.is_spot:
            return self.model
        return ModelSpec.model_validate({**self.model.model_dump(), "measure": "spot"})

    @cached_property
    def spot_paths(self) -> RatePathSet:
        if self.model.measure.is_spot:
            return self.paths
        return simulate(self.spot_model, self.sim_config)

    def forward_measures(self) -> list[MeasureLabel]:
        return [MeasureLabel.forward(m) for m in self.model.grid.maturities[1:]]


class ValidationCheck(ABC):
    """Abstract base class for all consistency checks"""

    @abstractmethod
    def get_check_definition(self) -> dict[str, Any]:
        """Return name, description and tolerance of this check"""
        pass

    @abstractmethod
    def execute(self, context: SuiteContext) -> CheckResult:
        """Run the check against a suite context"""
        pass

    def _result(self, statistic: float, passed: bool, detail: str = "") -> CheckResult:
        definition = self.get_check_definition()
        return CheckResult(
            name=definition["name"],
            statistic=statistic,
            tolerance=definition["tolerance"],
            passed=bool(passed),
            detail=detail,
        )


class ConditionCheck(ValidationCheck):
    """Integrability conditions as a gate before any simulation"""

    def get_check_definition(self) -> dict[str, Any]:
        return {
            "name": "conditions",
            "description": "cond1-cond3 on the driving process over the tenor horizon",
            "tolerance": 0.0,
        }

    def execute(self, context: SuiteContext) -> CheckResult:
        model = context.model
        report = check_conditions(
            model.characteristics,
            model.volatility,
            model.grid.last,
            maturities=list(model.grid.rate_maturities),
        )
        failed = sum(not ok for ok in (report.cond1_pass, report.cond2_pass, report.cond3_pass))
        return self._result(float(failed), report.passed, "; ".join(report.diagnostics.values()))


class GridReductionCheck(ValidationCheck):
    """Interpolated coefficients at grid dates against the discrete spot coefficients"""

    def __init__(self, n_samples: int = 100):
        self.n_samples = n_samples

    def get_check_definition(self) -> dict[str, Any]:
        return {
            "name": "grid_reduction",
            "description": "interpolated SDE at T = T_s equals the spot-LIBOR SDE of rate s",
            "tolerance": config.COEFFICIENT_TOLERANCE,
        }

    def execute(self, context: SuiteContext) -> CheckResult:
        model = context.model
        grid = model.grid
        rng = np.random.default_rng(context.sim_config.seed)
        worst = 0.0
        for _ in range(self.n_samples):
            s = int(rng.integers(1, grid.n_rates + 1))
            maturity = grid.maturities[s - 1]
            t = float(rng.uniform(0.0, maturity))
            state = {maturity_key(m): float(rng.uniform(0.001, 0.1)) for m in grid.rate_maturities}
            spot = spot_sde_coefficients(model, s, t, state)
            interpolated = interpolated_sde_coefficients(model, maturity, t, state)
            for field in (
                "drift",
                "diffusion_loading",
                "jump_loading",
                "compensator_correction",
                "jump_compensator",
            ):
                worst = max(worst, abs(getattr(spot, field) - getattr(interpolated, field)))
        tolerance = config.COEFFICIENT_TOLERANCE
        detail = f"{self.n_samples} random (t, state) samples"
        return self._result(worst, worst <= tolerance, detail)


class GammaEquationCheck(ValidationCheck):
    """Residual of E[1 / B*(T)] = B(0, T) on the solver's own sample set"""

    def __init__(self, dates_per_interval: int = 5):
        self.dates_per_interval = dates_per_interval

    def get_check_definition(self) -> dict[str, Any]:
        return {
            "name": "gamma_equation",
            "description": "gamma-blended spot numeraire reproduces the initial curve",
            "tolerance": config.GAMMA_TOLERANCE,
        }

    def execute(self, context: SuiteContext) -> CheckResult:
        model = context.model
        numeraire = spot_numeraire_path(context.spot_paths, model.grid, model.curve)
        edges = numeraire.dates
        dates = [
            float(a + (b - a) * i / (self.dates_per_interval + 1))
            for a, b in zip(edges, edges[1:], strict=False)
            for i in range(1, self.dates_per_interval + 1)
        ]
        gammas = build_gamma_interpolation(numeraire, model.curve, dates)
        numeraire = numeraire.with_gammas(gammas)

        worst = max(
            abs(float(np.mean(1.0 / numeraire.at(d))) - discount(model.curve, d)) for d in dates
        )
        endpoints_exact = all(
            g(g.start) == 0.0 and g(g.end) == 1.0 for g in gammas.values()
        )
        detail = f"{len(dates)} off-grid dates; endpoints exact: {endpoints_exact}"
        passed = worst <= config.GAMMA_TOLERANCE and endpoints_exact
        return self._result(worst, passed, detail)


class DensityAlgebraCheck(ValidationCheck):
    """Composition, mean-one and telescoping properties of the measure densities"""

    def get_check_definition(self) -> dict[str, Any]:
        return {
            "name": "density_algebra",
            "description": "density composition, mean 1 at tenor dates, 1 + delta L telescoping",
            "tolerance": config.Z_TOLERANCE,
        }

    def execute(self, context: SuiteContext) -> CheckResult:
        model, paths = context.model, context.spot_paths
        grid = model.grid
        spot = MeasureLabel.spot()
        forwards = context.forward_measures()

        # A -> C against A -> B -> C
        middle, terminal = forwards[0], forwards[-1]
        direct = density_path(paths, grid, MeasurePair(source=spot, target=terminal)).values
        first = density_path(paths, grid, MeasurePair(source=spot, target=middle)).values
        second = density_path(paths, grid, MeasurePair(source=middle, target=terminal)).values
        composition = float(np.max(np.abs(direct - first * second)))

        worst_z = 0.0
        tenor_nodes = [paths.time_index(m) for m in grid.rate_maturities]
        for target in forwards:
            density = density_path(paths, grid, MeasurePair(source=spot, target=target))
            for k in tenor_nodes:
                worst_z = max(worst_z, abs(_z_score(density.values[k], 1.0)))

        forwards_paths = forward_process_paths(paths, model.curve)
        expected = 1.0 + paths.delta * paths.rates
        telescoping = float(np.max(np.abs(forwards_paths.values - expected)))

        passed = (
            composition <= config.IDENTITY_TOLERANCE
            and telescoping <= config.COEFFICIENT_TOLERANCE
            and worst_z <= config.Z_TOLERANCE
        )
        detail = f"composition error {composition:.3g}; telescoping error {telescoping:.3g}"
        return self._result(worst_z, passed, detail)


class BlackReductionCheck(ValidationCheck):
    """Jump-free caplet on the last rate against the Black formula"""

    def get_check_definition(self) -> dict[str, Any]:
        return {
            "name": "black_reduction",
            "description": "zero-jump ATM caplet under its forward measure matches Black",
            "tolerance": config.Z_TOLERANCE,
        }

    def execute(self, context: SuiteContext) -> CheckResult:
        model = context.model
        grid = model.grid
        chars = LevyCharacteristics(
            drift=model.characteristics.drift, diffusion=model.characteristics.diffusion
        )
        jump_free = ModelSpec.model_validate(
            {
                **model.model_dump(),
                "characteristics": chars.model_dump(),
                "measure": {"forward": grid.last},
            }
        )
        fixing = grid.rate_maturities[-1]
        strike = jump_free.initial_rates[-1]
        paths = simulate(jump_free, context.sim_config)
        price, error = caplet_price_mc(paths, strike, fixing, grid.spacing, model.curve)
        reference = black_caplet_reference(
            strike,
            strike,
            total_volatility(jump_free, fixing),
            discount(model.curve, grid.last),
            grid.spacing,
        )
        if price == reference:
            z = 0.0
        elif error == 0.0:
            z = math.inf
        else:
            z = (price - reference) / error
        detail = f"MC {price:.8f} +- {error:.2e}, Black {reference:.8f}"
        return self._result(abs(z), abs(z) <= config.Z_TOLERANCE, detail)


class ExtensionCheck(ValidationCheck):
    """Appending a zero-volatility tenor leaves every existing path untouched"""

    def get_check_definition(self) -> dict[str, Any]:
        return {
            "name": "extension_no_feedback",
            "description": "extension keeps prior paths bit-identical, zero-vol new rate stays put",
            "tolerance": 0.0,
        }

    def execute(self, context: SuiteContext) -> CheckResult:
        model, base = context.model, context.paths
        grid = model.grid
        try:
            new_rate = initial_forward_libor(model.curve, grid.last + grid.spacing, grid.spacing)
        except ExtrapolationError:
            new_rate = model.initial_rates[-1]
        extended_model = extend_tenor(model, 0.0, new_rate)
        extended = simulate(extended_model, context.sim_config)

        steps = len(base.times)
        old = extended.rates[: len(base.maturities), :steps]
        identical = np.array_equal(old, base.rates)
        new_path = extended.rate(grid.last)
        constant = bool(np.all(new_path == new_rate))
        difference = 0.0 if identical else float(np.max(np.abs(old - base.rates)))
        detail = f"prior paths identical: {identical}; new rate constant: {constant}"
        return self._result(difference, identical and constant, detail)


class SeedDeterminismCheck(ValidationCheck):
    """Two runs with one seed agree bit for bit"""

    def __init__(self, max_paths: int = 2048):
        self.max_paths = max_paths

    def get_check_definition(self) -> dict[str, Any]:
        return {
            "name": "seed_determinism",
            "description": "repeated simulation with the same seed is bit-identical",
            "tolerance": 0.0,
        }

    def execute(self, context: SuiteContext) -> CheckResult:
        settings = context.sim_config.model_copy(
            update={"n_paths": min(self.max_paths, context.sim_config.n_paths)}
        )
        first = simulate(context.model, settings)
        second = simulate(context.model, settings)
        identical = np.array_equal(first.rates, second.rates) and np.array_equal(
            first.jump_counts, second.jump_counts
        )
        return self._result(0.0 if identical else 1.0, identical, f"{settings.n_paths} paths")


class ForwardMartingaleCheck(ValidationCheck):
    """Every grid rate is driftless under its forward measure after density reweighting"""

    def get_check_definition(self) -> dict[str, Any]:
        return {
            "name": "forward_martingale",
            "description": "reweighted spot-LIBOR run: |z| of E[L(T, T)] - L(0, T) per grid rate",
            "tolerance": config.Z_TOLERANCE,
        }

    def execute(self, context: SuiteContext) -> CheckResult:
        paths, grid = context.spot_paths, context.model.grid
        spot = MeasureLabel.spot()
        scores = []
        for maturity in grid.rate_maturities:
            proper = MeasureLabel.forward(maturity + grid.spacing)
            density = density_path(paths, grid, MeasurePair(source=spot, target=proper))
            scores.append(martingale_test(paths, spot, maturity, density))
        worst = max(abs(z) for z in scores)
        pairs = zip(grid.rate_maturities, scores, strict=True)
        detail = ", ".join(f"{m:g}: {z:+.2f}" for m, z in pairs)
        return self._result(worst, worst <= config.Z_TOLERANCE, detail)


class StochasticExponentialCheck(ValidationCheck):
    """
    Densities rebuilt from the driving noise agree with the bond-ratio densities.

    The two constructions differ by the discretisation error of the scheme, so
    the statistic is the largest mean absolute gap over targets and nodes.
    """

    def get_check_definition(self) -> dict[str, Any]:
        return {
            "name": "stochastic_exponential",
            "description": "mean |bond-ratio density - stochastic exponential of the kernel|",
            "tolerance": config.STOCHASTIC_EXPONENTIAL_TOLERANCE,
        }

    def execute(self, context: SuiteContext) -> CheckResult:
        paths, model = context.spot_paths, context.spot_model
        worst, where = 0.0, ""
        for target in context.forward_measures():
            pair = MeasurePair(source=MeasureLabel.spot(), target=target)
            ratio = density_path(paths, model.grid, pair).values
            exponential = stochastic_exponential_density(paths, model, pair).values
            gap = float(np.max(np.mean(np.abs(ratio - exponential), axis=1)))
            if gap >= worst:
                worst, where = gap, str(target)
        passed = worst <= config.STOCHASTIC_EXPONENTIAL_TOLERANCE
        return self._result(worst, passed, f"largest gap under {where}")


class CheckManager:
    """Manages the registered consistency checks"""

    def __init__(self):
        self.checks: dict[str, ValidationCheck] = {}

    def register_check(self, check: ValidationCheck):
        """Register any check that implements the ValidationCheck interface"""
        name = check.get_check_definition().get("name")
        if not name:
            raise ValueError("Check must have a 'name' in its definition")
        self.checks[name] = check

    def get_check_definitions(self) -> list[dict[str, Any]]:
        return [check.get_check_definition() for check in self.checks.values()]

    def execute_check(self, name: str, context: SuiteContext) -> CheckResult:
        """Run one check; a failure inside the check becomes a failed result"""
        if name not in self.checks:
            raise InputValidationError(f"Check '{name}' not found")
        check = self.checks[name]
        started = time.perf_counter()
        try:
            result = check.execute(context)
        except Exception as e:
            definition = check.get_check_definition()
            result = CheckResult(
                name=name,
                statistic=math.nan,
                tolerance=definition["tolerance"],
                passed=False,
                detail=f"{type(e).__name__}: {e}",
            )
        result = result.model_copy(update={"runtime": time.perf_counter() - started})

        if result.passed:
            logger.info("Check %s passed (statistic %.3g)", name, result.statistic)
        else:
            logger.warning(
                "Check %s FAILED: statistic %.3g, %s", name, result.statistic, result.detail
            )
        return result

    def run_all(self, context: SuiteContext, names: list[str] | None = None) -> ValidationReport:
        selected = names if names is not None else list(self.checks)
        checks = {name: self.execute_check(name, context) for name in selected}
        return ValidationReport(checks=checks)


def default_check_manager() -> CheckManager:
    manager = CheckManager()
    for check in (
        ConditionCheck(),
        GridReductionCheck(),
        GammaEquationCheck(),
        DensityAlgebraCheck(),
        BlackReductionCheck(),
        ExtensionCheck(),
        SeedDeterminismCheck(),
        ForwardMartingaleCheck(),
        StochasticExponentialCheck(),
    ):
        manager.register_check(check)
    return manager


def consistency_suite(
    model: ModelSpec, sim_config: SimConfig, checks: list[str] | None = None
) -> ValidationReport:
    """Run the consistency checks (all by default) and collect them in one report"""
    manager = default_check_manager()
    report = manager.run_all(SuiteContext(model, sim_config), checks)
    logger.info(
        "Validation %s: %d/%d checks passed",
        "passed" if report.passed else "failed",
        sum(c.passed for c in report.checks.values()),
        len(report.checks),
    )
    return report
