import logging
from pathlib import Path
from typing import Any

import numpy as np

from artifact_store import ArtifactStore
from errors import DependencyError
from interpolation import (
    build_gamma_interpolation,
    interpolated_forward_density,
    spot_numeraire_path,
)
from lmm_dynamics import extend_tenor_many
from models import ModelSpec, RatePathSet, maturity_key
from scenario import Scenario, load_scenario
from simulator import caplet_price_mc, simulate, total_volatility
from stochastic_driver import check_conditions
from term_structure import discount
from validation import black_caplet_reference, consistency_suite

logger = logging.getLogger(__name__)


def _as_spot(model: ModelSpec) -> ModelSpec:
    if model.measure.is_spot:
        return model
    return ModelSpec.model_validate({**model.model_dump(), "measure": "spot"})


def _fixing_summary(paths: RatePathSet) -> list[dict[str, Any]]:
    summary = []
    for maturity in paths.maturities:
        fixings = paths.fixing(maturity)
        summary.append(
            {
                "maturity": maturity,
                "initial": float(paths.rate(maturity)[0, 0]),
                "mean_fixing": float(fixings.mean()),
                "std_fixing": float(fixings.std(ddof=1)) if len(fixings) > 1 else 0.0,
            }
        )
    return summary


class LiborTermStructureSystem:
    """Main orchestrator running scenario commands and persisting their artifacts"""

    def __init__(self, config, out_dir: str | Path):
        self.config = config
        self.store = ArtifactStore(out_dir)

    def load(
        self,
        scenario_path: str | Path,
        seed: int | None = None,
        paths: int | None = None,
        step: float | None = None,
    ) -> Scenario:
        """Read a scenario file and apply command-line overrides"""
        scenario = load_scenario(scenario_path).with_overrides(seed=seed, paths=paths, step=step)
        logger.info(
            "Loaded scenario '%s' (%d paths, step %g, seed %d)",
            scenario.name,
            scenario.sim_config.n_paths,
            scenario.sim_config.step,
            scenario.sim_config.seed,
        )
        return scenario

    def _finish(self, command: str, scenario: Scenario, model: ModelSpec, body: dict) -> dict:
        report = {"command": command, "scenario": scenario.name, **body}
        self.store.write_model(model)
        self.store.write_report(report)
        return report

    def build(self, scenario: Scenario) -> dict[str, Any]:
        """Resolve the model and evaluate the integrability conditions"""
        model = scenario.model
        conditions = check_conditions(
            model.characteristics,
            model.volatility,
            model.grid.last,
            maturities=list(model.grid.rate_maturities),
        )
        logger.info(
            "Built model with %d rates up to %g; conditions %s",
            model.grid.n_rates,
            model.grid.last,
            "hold" if conditions.passed else "fail",
        )
        return self._finish(
            "build",
            scenario,
            model,
            {
                "maturities": list(model.grid.maturities),
                "initial_rates": list(model.initial_rates),
                "conditions": conditions.model_dump(mode="json"),
            },
        )

    def extend(self, scenario: Scenario) -> dict[str, Any]:
        """Append the scenario's extra tenor dates one at a time"""
        model = extend_tenor_many(scenario.model, scenario.extensions)
        added = model.grid.maturities[scenario.model.grid.count :]
        logger.info("Extended the tenor by %d dates to %g", len(added), model.grid.last)
        return self._finish(
            "extend",
            scenario,
            model,
            {
                "added_maturities": list(added),
                "initial_rates": list(model.initial_rates),
                "lambda_sum": model.lambda_sum(),
            },
        )

    def simulate(self, scenario: Scenario) -> dict[str, Any]:
        """Simulate the grid rates (and any off-grid dates) and write the path CSV"""
        model = scenario.model
        paths = simulate(model, scenario.sim_config, list(scenario.interpolate) or None)
        max_paths = scenario.max_csv_paths or self.config.CSV_MAX_PATHS
        self.store.write_paths(paths, max_paths)
        return self._finish(
            "simulate",
            scenario,
            model,
            {
                "measure": str(paths.measure),
                "n_paths": paths.n_paths,
                "seed": paths.seed,
                "n_steps": len(paths.times) - 1,
                "mean_jumps_per_path": float(paths.jump_counts.mean()),
                "rates": _fixing_summary(paths),
            },
        )

    def interpolate(self, scenario: Scenario) -> dict[str, Any]:
        """
        Spot-LIBOR run with the requested off-grid dates, followed by the gamma
        interpolation of the rolled-over numeraire at those dates.
        """
        if not scenario.interpolate:
            raise DependencyError("the scenario requests no off-grid dates to interpolate")
        model = _as_spot(scenario.model)
        grid, curve = model.grid, model.curve
        paths = simulate(model, scenario.sim_config, list(scenario.interpolate))
        numeraire = spot_numeraire_path(paths, grid, curve)
        gammas = build_gamma_interpolation(numeraire, curve, list(scenario.interpolate))
        numeraire = numeraire.with_gammas(gammas)

        dates = []
        for maturity in scenario.interpolate:
            n = numeraire.interval_of(maturity)
            interval = (maturity_key(numeraire.dates[n]), maturity_key(numeraire.dates[n + 1]))
            target = discount(curve, maturity)
            density = interpolated_forward_density(numeraire, curve, maturity)
            dates.append(
                {
                    "maturity": maturity,
                    "interval": list(interval),
                    "gamma": gammas[interval](maturity) if interval in gammas else None,
                    "discount": target,
                    "residual": float(np.mean(1.0 / numeraire.at(maturity)) - target),
                    "density_mean": float(density.mean()),
                }
            )
        logger.info("Interpolated %d off-grid dates", len(dates))
        return self._finish(
            "interpolate",
            scenario,
            model,
            {"n_paths": paths.n_paths, "dates": dates, "rates": _fixing_summary(paths)},
        )

    def validate(self, scenario: Scenario, checks: list[str] | None = None) -> dict[str, Any]:
        """Run the consistency suite; the report's `passed` flag drives the exit status"""
        report = consistency_suite(scenario.model, scenario.sim_config, checks)
        return self._finish(
            "validate", scenario, scenario.model, report.model_dump(mode="json")
        )

    def _pricing_paths(self, scenario: Scenario) -> RatePathSet:
        model = scenario.model
        delta = model.grid.spacing
        proper = {maturity_key(fixing + delta) for fixing, _ in scenario.caplets}
        own = model.measure
        if own.is_spot or proper == {maturity_key(own.maturity)}:
            return simulate(model, scenario.sim_config)
        logger.info("Caplets need several forward measures, pricing from a spot-LIBOR run")
        return simulate(_as_spot(model), scenario.sim_config)

    def price(self, scenario: Scenario) -> dict[str, Any]:
        """Monte Carlo caplet prices, with the Black price alongside for jump-free models"""
        model = scenario.model
        grid, curve = model.grid, model.curve
        paths = self._pricing_paths(scenario)
        jump_free = not model.characteristics.has_jumps

        caplets = []
        for fixing, strike in scenario.caplets:
            index = grid.index_of(fixing)
            if index is None or index > grid.n_rates:
                raise DependencyError(f"caplet fixing {fixing} is not a grid rate maturity")
            initial = model.initial_rates[index - 1]
            strike = initial if strike is None else strike
            price, error = caplet_price_mc(paths, strike, fixing, grid.spacing, curve)
            entry: dict[str, Any] = {
                "fixing": fixing,
                "payment": fixing + grid.spacing,
                "strike": strike,
                "price": price,
                "standard_error": error,
                "measure": str(paths.measure),
            }
            if jump_free:
                reference = black_caplet_reference(
                    initial,
                    strike,
                    total_volatility(model, fixing),
                    discount(curve, fixing + grid.spacing),
                    grid.spacing,
                )
                entry["black"] = reference
                entry["z"] = (price - reference) / error if error > 0 else None
            caplets.append(entry)
            logger.info("Caplet %g/%g: %.8f +- %.2e", fixing, strike, price, error)

        return self._finish(
            "price",
            scenario,
            model,
            {"n_paths": paths.n_paths, "seed": paths.seed, "caplets": caplets},
        )

    def run(self, command: str, scenario: Scenario) -> dict[str, Any]:
        handlers = {
            "build": self.build,
            "extend": self.extend,
            "interpolate": self.interpolate,
            "simulate": self.simulate,
            "validate": self.validate,
            "price": self.price,
        }
        if command not in handlers:
            raise ValueError(f"unknown command '{command}'")
        return handlers[command](scenario)

