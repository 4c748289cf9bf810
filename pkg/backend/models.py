import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Annotated, Any, Literal

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator
from scipy.stats import norm

from config import config
from errors import DependencyError

if TYPE_CHECKING:
    from stochastic_driver import DriverIncrements


def maturity_key(maturity: float) -> float:
    """Normalise a year-fraction so it can be used as a dictionary key"""
    return round(float(maturity), 10)


class PiecewiseConstant(BaseModel):
    """Right-continuous piecewise-constant function of time"""

    model_config = ConfigDict(frozen=True)

    breakpoints: tuple[float, ...] = (0.0,)  # start of each piece, first one is 0
    values: tuple[float, ...]  # value on [breakpoints[k], breakpoints[k+1])

    @model_validator(mode="before")
    @classmethod
    def _from_number(cls, data: Any) -> Any:
        # A bare number in a document means a constant function
        if isinstance(data, int | float) and not isinstance(data, bool):
            return {"breakpoints": (0.0,), "values": (float(data),)}
        return data

    @model_validator(mode="after")
    def _check_pieces(self) -> "PiecewiseConstant":
        if not self.values:
            raise ValueError("a piecewise-constant function needs at least one value")
        if len(self.breakpoints) != len(self.values):
            raise ValueError("breakpoints and values must have the same length")
        if self.breakpoints[0] != 0.0:
            raise ValueError("the first breakpoint must be 0")
        if any(b <= a for a, b in zip(self.breakpoints, self.breakpoints[1:], strict=False)):
            raise ValueError("breakpoints must be strictly increasing")
        return self

    @classmethod
    def constant(cls, value: float) -> "PiecewiseConstant":
        return cls(breakpoints=(0.0,), values=(float(value),))

    def __call__(self, t: float) -> float:
        index = max(bisect_right(self.breakpoints, t) - 1, 0)
        return self.values[index]

    def integral(self, start: float, end: float) -> float:
        """Integral over [start, end]"""
        total = 0.0
        edges = (*self.breakpoints[1:], math.inf)
        for left, right, value in zip(self.breakpoints, edges, self.values, strict=True):
            lo, hi = max(left, start), min(right, end)
            if hi > lo:
                total += value * (hi - lo)
        return total

    def sup(self) -> float:
        return max(abs(v) for v in self.values)

    def is_zero(self) -> bool:
        return all(v == 0.0 for v in self.values)

    def min(self) -> float:
        return min(self.values)


class TenorGrid(BaseModel):
    """Equidistant maturity grid T_1 < ... < T_{n+1}"""

    model_config = ConfigDict(frozen=True)

    maturities: tuple[float, ...]
    spacing: float = Field(gt=0)

    @model_validator(mode="after")
    def _check_equidistant(self) -> "TenorGrid":
        if len(self.maturities) < 2:
            raise ValueError("a tenor grid needs at least two maturities")
        if self.maturities[0] <= 0:
            raise ValueError("the first maturity must be positive")
        for i, (a, b) in enumerate(zip(self.maturities, self.maturities[1:], strict=False)):
            if abs(b - a - self.spacing) > config.GRID_TOLERANCE:
                raise ValueError(f"maturity {i + 1} breaks the spacing {self.spacing}")
        return self

    @property
    def count(self) -> int:
        return len(self.maturities)

    @property
    def n_rates(self) -> int:
        """Number of modelled LIBOR rates L(., T_1) .. L(., T_n)"""
        return len(self.maturities) - 1

    @property
    def rate_maturities(self) -> tuple[float, ...]:
        return self.maturities[:-1]

    @property
    def last(self) -> float:
        return self.maturities[-1]

    def index_of(self, maturity: float) -> int | None:
        """1-based index of a grid date, None when the date is off-grid"""
        for i, t in enumerate(self.maturities, start=1):
            if abs(t - maturity) <= config.GRID_TOLERANCE:
                return i
        return None


class DiscountCurve(BaseModel):
    """Initial discount curve B(0, T) given by pillars"""

    model_config = ConfigDict(frozen=True)

    pillars: tuple[tuple[float, float], ...]
    interpolation: Literal["log-linear"] = "log-linear"

    @field_validator("pillars")
    @classmethod
    def _check_pillars(cls, pillars: tuple[tuple[float, float], ...]):
        if not pillars:
            raise ValueError("a discount curve needs at least one pillar")

        previous_maturity, previous_price = 0.0, 1.0
        for i, (maturity, price) in enumerate(pillars):
            if maturity < 0:
                raise ValueError(f"pillar {i}: negative maturity {maturity}")
            if price <= 0:
                raise ValueError(f"pillar {i}: price {price} is not strictly positive")
            if maturity == 0.0:
                if i != 0 or price != 1.0:
                    raise ValueError(f"pillar {i}: the price at maturity 0 must be 1")
                continue
            if maturity <= previous_maturity and i > 0:
                raise ValueError(f"pillar {i}: maturities must be strictly increasing")
            if price >= previous_price:
                raise ValueError(
                    f"pillar {i}: price {price} at maturity {maturity} is not strictly below "
                    f"{previous_price}; the curve must be strictly decreasing"
                )
            previous_maturity, previous_price = maturity, price

        # Maturity 0 is pinned to 1
        if pillars[0][0] != 0.0:
            pillars = ((0.0, 1.0), *pillars)
        return tuple((float(m), float(p)) for m, p in pillars)

    @property
    def maturities(self) -> np.ndarray:
        return np.array([m for m, _ in self.pillars])

    @property
    def prices(self) -> np.ndarray:
        return np.array([p for _, p in self.pillars])

    @property
    def last_maturity(self) -> float:
        return self.pillars[-1][0]


class GaussianJumps(BaseModel):
    """Normally distributed jump sizes"""

    model_config = ConfigDict(frozen=True)

    kind: Literal["gaussian"] = "gaussian"
    mean: float = 0.0
    sd: float = Field(gt=0)

    def _log_moment(self, u: float) -> float:
        drift = u * self.mean if self.mean != 0.0 else 0.0
        return drift + 0.5 * u * u * self.sd * self.sd

    def exponential_moment(self, u: float) -> float:
        try:
            return math.exp(self._log_moment(u))
        except OverflowError:
            return math.inf

    def cumulant_transform(self, u: float) -> float:
        """E[exp(uX)] - 1"""
        try:
            return math.expm1(self._log_moment(u))
        except OverflowError:
            return math.inf

    def truncated_second_moment(self) -> float:
        """E[min(X^2, 1)] in closed form"""
        a, b = (-1.0 - self.mean) / self.sd, (1.0 - self.mean) / self.sd
        inside = norm.cdf(b) - norm.cdf(a)
        first = norm.pdf(a) - norm.pdf(b)
        second = inside + a * norm.pdf(a) - b * norm.pdf(b)
        m, s = self.mean, self.sd
        return float(m * m * inside + 2 * m * s * first + s * s * second + (1.0 - inside))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.normal(self.mean, self.sd, size)

    def quadrature(self, n_nodes: int, mass_tolerance: float) -> tuple[np.ndarray, np.ndarray]:
        z = norm.isf(0.5 * mass_tolerance)
        nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
        half = z * self.sd
        x = self.mean + half * nodes
        return x, weights * half * norm.pdf(x, self.mean, self.sd)


class TwoSidedExponentialJumps(BaseModel):
    """Symmetric two-sided exponential jump sizes with density (a/2) exp(-a|x|)"""

    model_config = ConfigDict(frozen=True)

    kind: Literal["two-sided-exponential"] = "two-sided-exponential"
    rate: float = Field(gt=0)

    def exponential_moment(self, u: float) -> float:
        if abs(u) >= self.rate:
            return math.inf
        return self.rate**2 / (self.rate**2 - u * u)

    def cumulant_transform(self, u: float) -> float:
        if abs(u) >= self.rate:
            return math.inf
        return u * u / (self.rate**2 - u * u)

    def truncated_second_moment(self) -> float:
        a = self.rate
        tail = math.exp(-a)
        return (2.0 - tail * (a * a + 2 * a + 2)) / (a * a) + tail

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.laplace(0.0, 1.0 / self.rate, size)

    def quadrature(self, n_nodes: int, mass_tolerance: float) -> tuple[np.ndarray, np.ndarray]:
        # Two panels so the kink at 0 sits on a panel edge
        bound = math.log(1.0 / mass_tolerance) / self.rate
        nodes, weights = np.polynomial.legendre.leggauss(n_nodes // 2)
        half = 0.5 * bound
        right = half + half * nodes
        x = np.concatenate([-right[::-1], right])
        w = np.concatenate([weights[::-1], weights]) * half
        return x, w * 0.5 * self.rate * np.exp(-self.rate * np.abs(x))


class DiscreteJumps(BaseModel):
    """Jump sizes drawn from a finite list of atoms"""

    model_config = ConfigDict(frozen=True)

    kind: Literal["discrete"] = "discrete"
    atoms: tuple[tuple[float, float], ...]  # (size, probability)

    @field_validator("atoms")
    @classmethod
    def _check_probabilities(cls, atoms: tuple[tuple[float, float], ...]):
        if not atoms:
            raise ValueError("a discrete jump law needs at least one atom")
        if any(p < 0 for _, p in atoms):
            raise ValueError("atom probabilities must be nonnegative")
        if abs(sum(p for _, p in atoms) - 1.0) > 1e-12:
            raise ValueError("atom probabilities must sum to 1")
        return atoms

    @property
    def sizes(self) -> np.ndarray:
        return np.array([x for x, _ in self.atoms])

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([p for _, p in self.atoms])

    def exponential_moment(self, u: float) -> float:
        return float(np.sum(self.probabilities * np.exp(u * self.sizes)))

    def cumulant_transform(self, u: float) -> float:
        return float(np.sum(self.probabilities * np.expm1(u * self.sizes)))

    def truncated_second_moment(self) -> float:
        return float(np.sum(self.probabilities * np.minimum(self.sizes**2, 1.0)))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.choice(self.sizes, size=size, p=self.probabilities)

    def quadrature(self, n_nodes: int, mass_tolerance: float) -> tuple[np.ndarray, np.ndarray]:
        # Exact: the atoms are the nodes
        return self.sizes, self.probabilities


JumpDensity = Annotated[
    GaussianJumps | TwoSidedExponentialJumps | DiscreteJumps, Field(discriminator="kind")
]


class LevyCharacteristics(BaseModel):
    """Characteristics (b, c, eta * density) of the driving process"""

    model_config = ConfigDict(frozen=True)

    drift: PiecewiseConstant = PiecewiseConstant.constant(0.0)  # b(s, T_1), per year
    diffusion: PiecewiseConstant = PiecewiseConstant.constant(1.0)  # c_s, variance per year
    intensity: PiecewiseConstant = PiecewiseConstant.constant(0.0)  # eta_s, jumps per year
    jumps: JumpDensity | None = None

    @model_validator(mode="after")
    def _check_signs(self) -> "LevyCharacteristics":
        if self.diffusion.min() < 0:
            raise ValueError("diffusion c must be nonnegative")
        if self.intensity.min() < 0:
            raise ValueError("jump intensity must be nonnegative")
        if self.jumps is None and not self.intensity.is_zero():
            raise ValueError("a positive jump intensity needs a jump-size density")
        return self

    @property
    def has_jumps(self) -> bool:
        return self.jumps is not None and not self.intensity.is_zero()

    def jump_compensator(self, t: float, u: float) -> float:
        """Integral of (exp(ux) - 1) against the compensator at time t, per year"""
        if self.jumps is None:
            return 0.0
        eta = self.intensity(t)
        if eta == 0.0:
            return 0.0
        return eta * self.jumps.cumulant_transform(u)


class ConditionReport(BaseModel):
    """Outcome of the integrability conditions on the driving process"""

    cond1_pass: bool
    cond2_pass: bool
    cond3_pass: bool
    bound_m: float
    m_capped: bool = False  # the lambda sum was unbounded, a caller cap was used instead
    cond1_integral: float = 0.0
    cond3_integral: float = 0.0
    diagnostics: dict[str, str] = {}

    @computed_field
    @property
    def passed(self) -> bool:
        return self.cond1_pass and self.cond2_pass and self.cond3_pass


class MeasureLabel(BaseModel):
    """Forward measure P_T or the spot-LIBOR measure"""

    model_config = ConfigDict(frozen=True)

    kind: Literal["spot", "forward"]
    maturity: float | None = None

    @model_validator(mode="before")
    @classmethod
    def _from_document(cls, data: Any) -> Any:
        if isinstance(data, str):
            if data.lower() in ("spot", "spotlibor", "spot-libor"):
                return {"kind": "spot"}
            raise ValueError(f"unknown measure '{data}'")
        if isinstance(data, dict) and "forward" in data:
            return {"kind": "forward", "maturity": data["forward"]}
        return data

    @model_validator(mode="after")
    def _check_maturity(self) -> "MeasureLabel":
        if self.kind == "forward" and (self.maturity is None or self.maturity <= 0):
            raise ValueError("a forward measure needs a positive maturity")
        if self.kind == "spot" and self.maturity is not None:
            raise ValueError("the spot-LIBOR measure takes no maturity")
        return self

    @classmethod
    def spot(cls) -> "MeasureLabel":
        return cls(kind="spot")

    @classmethod
    def forward(cls, maturity: float) -> "MeasureLabel":
        return cls(kind="forward", maturity=maturity)

    @property
    def is_spot(self) -> bool:
        return self.kind == "spot"

    def __str__(self) -> str:
        return "SpotLibor" if self.is_spot else f"Forward({self.maturity:g})"


class MeasurePair(BaseModel):
    """Change of measure from `source` to `target`"""

    model_config = ConfigDict(frozen=True)

    source: MeasureLabel
    target: MeasureLabel

    def reversed(self) -> "MeasurePair":
        return MeasurePair(source=self.target, target=self.source)


class VolatilityEntry(BaseModel):
    """Volatility function lambda(., T) of one maturity"""

    model_config = ConfigDict(frozen=True)

    maturity: float = Field(gt=0)
    curve: PiecewiseConstant


class VolatilitySpec(BaseModel):
    """Deterministic volatility loadings lambda(t, T)"""

    model_config = ConfigDict(frozen=True)

    default: PiecewiseConstant | None = None  # used for grid rates without an entry
    entries: tuple[VolatilityEntry, ...] = ()
    cap: float = Field(default=1.0, gt=0)  # sup-norm cap
    sum_bound: float | None = None  # declared bound M on the lambda sum

    @model_validator(mode="before")
    @classmethod
    def _from_number(cls, data: Any) -> Any:
        if isinstance(data, int | float) and not isinstance(data, bool):
            return {"default": data}
        return data

    @model_validator(mode="after")
    def _check_bounds(self) -> "VolatilitySpec":
        curves = [e.curve for e in self.entries]
        if self.default is not None:
            curves.append(self.default)
        for curve in curves:
            if curve.min() < 0:
                raise ValueError("volatility loadings must be nonnegative")
            if curve.sup() > self.cap:
                raise ValueError(f"volatility {curve.sup()} exceeds the cap {self.cap}")
        keys = [maturity_key(e.maturity) for e in self.entries]
        if len(set(keys)) != len(keys):
            raise ValueError("volatility entries must have distinct maturities")
        return self

    def curve_for(self, maturity: float) -> PiecewiseConstant | None:
        """Explicitly configured curve for a maturity, if any"""
        key = maturity_key(maturity)
        for entry in self.entries:
            if maturity_key(entry.maturity) == key:
                return entry.curve
        return None

    def with_entry(self, maturity: float, curve: PiecewiseConstant) -> "VolatilitySpec":
        key = maturity_key(maturity)
        entries = tuple(e for e in self.entries if maturity_key(e.maturity) != key)
        return self.model_copy(
            update={"entries": (*entries, VolatilityEntry(maturity=maturity, curve=curve))}
        )


class ModelSpec(BaseModel):
    """Complete LIBOR market model: grid, curve, loadings, driver and simulation measure"""

    model_config = ConfigDict(frozen=True)

    grid: TenorGrid
    curve: DiscountCurve
    volatility: VolatilitySpec
    characteristics: LevyCharacteristics = LevyCharacteristics()
    measure: MeasureLabel = MeasureLabel.spot()
    initial_rates: tuple[float, ...]  # L(0, T_1) .. L(0, T_n)

    @model_validator(mode="after")
    def _check_consistency(self) -> "ModelSpec":
        if len(self.initial_rates) != self.grid.n_rates:
            raise ValueError(
                f"expected {self.grid.n_rates} initial rates, got {len(self.initial_rates)}"
            )
        if any(not (rate > 0) for rate in self.initial_rates):
            raise ValueError("initial rates must be strictly positive")
        for maturity in self.grid.rate_maturities:
            if self.volatility.curve_for(maturity) is None and self.volatility.default is None:
                raise ValueError(f"no volatility configured for maturity {maturity}")
        if self.volatility.sum_bound is not None and self.lambda_sum() > self.volatility.sum_bound:
            raise ValueError(
                f"sum of volatility sup-norms {self.lambda_sum()} exceeds the declared bound "
                f"{self.volatility.sum_bound}"
            )
        if not self.measure.is_spot and self.grid.index_of(self.measure.maturity) is None:
            raise ValueError(f"measure {self.measure} is not on the tenor grid")
        return self

    def lambda_curve(self, index: int) -> PiecewiseConstant:
        """Volatility function of the grid rate L(., T_index), 1-based"""
        maturity = self.grid.maturities[index - 1]
        curve = self.volatility.curve_for(maturity)
        return curve if curve is not None else self.volatility.default

    def lambda_sum(self) -> float:
        """Sum over grid rates of sup_t lambda(t, T_i)"""
        return sum(self.lambda_curve(i).sup() for i in range(1, self.grid.n_rates + 1))


class SimConfig(BaseModel):
    """Monte Carlo settings"""

    model_config = ConfigDict(frozen=True)

    step: float = Field(gt=0)  # h, year-fraction
    n_paths: int = Field(default=config.DEFAULT_PATHS, ge=1)
    seed: int = config.DEFAULT_SEED
    scheme: Literal["log-euler"] = "log-euler"

    @classmethod
    def for_grid(
        cls, grid: TenorGrid, n_paths: int | None = None, seed: int | None = None
    ) -> "SimConfig":
        return cls(
            step=grid.spacing / config.STEPS_PER_PERIOD,
            n_paths=n_paths if n_paths is not None else config.DEFAULT_PATHS,
            seed=seed if seed is not None else config.DEFAULT_SEED,
        )


class CheckResult(BaseModel):
    """Outcome of one validation check"""

    name: str
    statistic: float
    tolerance: float
    passed: bool
    runtime: float = 0.0  # seconds
    detail: str = ""


class ValidationReport(BaseModel):
    """Named checks and the overall verdict"""

    checks: dict[str, CheckResult] = {}

    @computed_field
    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks.values())


@dataclass
class RatePathSet:
    """Simulated joint paths of the modelled rates

    `rates` is indexed (maturity, time node, path). A rate is frozen at its
    fixing value once its maturity has passed.
    """

    times: np.ndarray
    maturities: tuple[float, ...]
    rates: np.ndarray
    grid: TenorGrid
    measure: MeasureLabel
    seed: int
    jump_counts: np.ndarray  # jumps per path over the whole horizon
    noise: "DriverIncrements | None" = field(default=None, repr=False)  # increments actually used

    @property
    def n_paths(self) -> int:
        return self.rates.shape[2]

    @property
    def delta(self) -> float:
        return self.grid.spacing

    def has_maturity(self, maturity: float) -> bool:
        key = maturity_key(maturity)
        return any(maturity_key(m) == key for m in self.maturities)

    def row_of(self, maturity: float) -> int:
        key = maturity_key(maturity)
        for row, m in enumerate(self.maturities):
            if maturity_key(m) == key:
                return row
        raise DependencyError(f"no simulated rate for maturity {maturity}")

    def rate(self, maturity: float) -> np.ndarray:
        """Paths of L(., maturity), shape (time node, path)"""
        return self.rates[self.row_of(maturity)]

    def grid_rate(self, index: int) -> np.ndarray:
        """Paths of the grid rate L(., T_index), 1-based"""
        return self.rate(self.grid.maturities[index - 1])

    def time_index(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > config.GRID_TOLERANCE:
            raise DependencyError(f"time {t} is not a simulation node")
        return k

    def fixing(self, maturity: float) -> np.ndarray:
        """L(T, T) per path"""
        return self.rate(maturity)[self.time_index(maturity)]

    def to_frame(self, max_paths: int | None = None) -> pd.DataFrame:
        """Long format with columns path, time, maturity, rate"""
        n_paths = self.n_paths if max_paths is None else min(max_paths, self.n_paths)
        values = np.transpose(self.rates[:, :, :n_paths], (2, 1, 0))  # path, time, maturity
        n_times, n_maturities = len(self.times), len(self.maturities)
        return pd.DataFrame(
            {
                "path": np.repeat(np.arange(n_paths), n_times * n_maturities),
                "time": np.tile(np.repeat(self.times, n_maturities), n_paths),
                "maturity": np.tile(np.asarray(self.maturities), n_paths * n_times),
                "rate": values.reshape(-1),
            }
        )
