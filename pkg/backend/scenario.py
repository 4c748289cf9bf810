import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from errors import ConfigurationError, ScenarioError, TermStructureError
from lmm_dynamics import build_model, resolve_volatility
from models import (
    DiscountCurve,
    LevyCharacteristics,
    MeasureLabel,
    ModelSpec,
    PiecewiseConstant,
    SimConfig,
    TenorGrid,
    VolatilitySpec,
)
from term_structure import build_equidistant_grid, load_curve_csv

logger = logging.getLogger(__name__)


class CurveSection(BaseModel):
    """Inline pillars or a CSV file relative to the scenario"""

    model_config = ConfigDict(extra="forbid")

    pillars: tuple[tuple[float, float], ...] | None = None
    csv: str | None = None

    @model_validator(mode="after")
    def _one_source(self) -> "CurveSection":
        if (self.pillars is None) == (self.csv is None):
            raise ValueError("give exactly one of 'pillars' or 'csv'")
        return self


class GridSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    spacing: float = Field(gt=0)
    count: int = Field(ge=2)
    first_maturity: float | None = None  # defaults to the spacing


class SimulationSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    step: float | None = Field(default=None, gt=0)  # defaults to spacing / STEPS_PER_PERIOD
    paths: int | None = Field(default=None, ge=1)
    seed: int | None = None
    scheme: str = "log-euler"


class ExtensionSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    count: int = Field(default=0, ge=0)
    volatilities: tuple[PiecewiseConstant, ...] = ()
    initial_rates: tuple[float | None, ...] = ()

    @model_validator(mode="after")
    def _lengths(self) -> "ExtensionSection":
        if self.count and len(self.volatilities) not in (1, self.count):
            raise ValueError("give one volatility or one per extension")
        if self.initial_rates and len(self.initial_rates) != self.count:
            raise ValueError("give one initial rate per extension")
        return self


class CapletSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    fixing: float = Field(gt=0)
    strike: float | None = None  # at the money when omitted


class OutputSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    max_csv_paths: int | None = Field(default=None, ge=1)  # configured default when omitted


class ScenarioDocument(BaseModel):
    """Raw scenario document as written by the user"""

    model_config = ConfigDict(extra="forbid")

    name: str = "scenario"
    curve: CurveSection
    grid: GridSection | None = None
    initial_rates: tuple[float, ...] | None = None
    volatility: VolatilitySpec
    characteristics: LevyCharacteristics = LevyCharacteristics()
    simulation: SimulationSection = SimulationSection()
    measure: MeasureLabel = MeasureLabel.spot()
    interpolate: tuple[float, ...] = ()
    extensions: ExtensionSection = ExtensionSection()
    caplets: tuple[CapletSection, ...] = ()
    output: OutputSection = OutputSection()


@dataclass
class Scenario:
    """Validated scenario with every default applied"""

    name: str
    model: ModelSpec
    sim_config: SimConfig
    interpolate: tuple[float, ...]
    extensions: list[tuple[PiecewiseConstant, float | None]]
    caplets: list[tuple[float, float | None]]
    max_csv_paths: int | None

    def with_overrides(
        self, seed: int | None = None, paths: int | None = None, step: float | None = None
    ) -> "Scenario":
        """Command-line values take precedence over the document"""
        update = {
            key: value
            for key, value in (("seed", seed), ("n_paths", paths), ("step", step))
            if value is not None
        }
        if not update:
            return self
        try:
            sim_config = SimConfig.model_validate({**self.sim_config.model_dump(), **update})
        except ValidationError as e:
            raise ScenarioError(f"invalid simulation override: {e}") from e
        return replace(self, sim_config=sim_config)


def _grid_from_curve(curve: DiscountCurve) -> TenorGrid:
    maturities = [m for m, _ in curve.pillars if m > 0]
    if len(maturities) < 2:
        raise ScenarioError("grid: section required, the curve has fewer than two pillars")
    spacing = maturities[1] - maturities[0]
    try:
        return TenorGrid(maturities=tuple(maturities), spacing=spacing)
    except ValidationError as e:
        raise ScenarioError(
            "grid: section required, the curve pillars are not equidistant"
        ) from e


def _format_errors(error: ValidationError) -> str:
    return "; ".join(
        f"{'.'.join(str(part) for part in item['loc']) or 'scenario'}: {item['msg']}"
        for item in error.errors()
    )


def parse_scenario(text: str, base_dir: str | Path | None = None) -> Scenario:
    """
    Parse and validate a JSON scenario document.

    Args:
        text: Scenario document
        base_dir: Directory curve CSV paths are relative to

    Returns:
        Scenario with defaults applied (h = delta / 8, 1e5 paths, seed 42)
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"scenario is not valid JSON: {e}") from e

    try:
        document = ScenarioDocument.model_validate(raw)
    except ValidationError as e:
        raise ScenarioError(f"invalid scenario: {_format_errors(e)}") from e

    try:
        if document.curve.csv is not None:
            csv_path = Path(document.curve.csv)
            if not csv_path.is_absolute() and base_dir is not None:
                csv_path = Path(base_dir) / csv_path
            curve = load_curve_csv(csv_path)
        else:
            curve = DiscountCurve(pillars=document.curve.pillars)

        if document.grid is None:
            grid = _grid_from_curve(curve)
        else:
            section = document.grid
            first = section.first_maturity
            if first is None:
                first = section.spacing
            grid = build_equidistant_grid(first, section.spacing, section.count)

        model = build_model(
            grid,
            curve,
            document.volatility,
            document.characteristics,
            document.measure,
            document.initial_rates,
        )
    except ValidationError as e:
        raise ScenarioError(f"invalid scenario: {_format_errors(e)}") from e
    except (ScenarioError, OSError):
        raise
    except TermStructureError as e:
        raise ScenarioError(f"invalid scenario: {e}") from e

    for maturity in document.interpolate:
        try:
            resolve_volatility(model, maturity)
        except ConfigurationError as e:
            raise ScenarioError(f"interpolate: {e}") from e

    sim = document.simulation
    sim_config = SimConfig.for_grid(grid, n_paths=sim.paths, seed=sim.seed)
    if sim.step is not None:
        sim_config = sim_config.model_copy(update={"step": sim.step})

    ext = document.extensions
    volatilities = ext.volatilities * ext.count if len(ext.volatilities) == 1 else ext.volatilities
    initial_rates = ext.initial_rates or (None,) * ext.count
    extensions = list(zip(volatilities[: ext.count], initial_rates, strict=True))

    caplets = [(c.fixing, c.strike) for c in document.caplets]
    if not caplets:
        caplets = [(grid.rate_maturities[-1], None)]

    scenario = Scenario(
        name=document.name,
        model=model,
        sim_config=sim_config,
        interpolate=tuple(sorted(document.interpolate)),
        extensions=extensions,
        caplets=caplets,
        max_csv_paths=document.output.max_csv_paths,
    )
    logger.info(
        "Parsed scenario '%s': %d rates, spacing %g, measure %s",
        scenario.name,
        grid.n_rates,
        grid.spacing,
        model.measure,
    )
    return scenario


def read_file(file_path: str | Path) -> str:
    """Read a scenario file with UTF-8 encoding"""
    with open(file_path, encoding="utf-8") as file:
        return file.read()


def load_scenario(file_path: str | Path) -> Scenario:
    """Read and parse a scenario file; relative CSV paths resolve next to it"""
    path = Path(file_path)
    return parse_scenario(read_file(path), base_dir=path.parent)
