import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from config import config
from errors import InputValidationError, InvalidStateError
from models import ConditionReport, LevyCharacteristics, PiecewiseConstant, VolatilitySpec

logger = logging.getLogger(__name__)

# Child of each block's seed sequence reserved for thinned jumps; 0..3 feed sample_increments
THINNING_STREAM = 4


@dataclass
class DriverIncrements:
    """Sampled noise of the driving process on a step grid

    Arrays are indexed (step, path). `brownian` already carries the diffusion
    weight, so its variance over step k equals the integral of c over that step.
    """

    times: np.ndarray  # step nodes, starting at 0
    brownian: np.ndarray
    jump_counts: np.ndarray
    jump_sums: np.ndarray  # sum of jump sizes inside each step
    event_path: np.ndarray
    event_step: np.ndarray
    event_time: np.ndarray
    event_size: np.ndarray
    seed: int

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def n_paths(self) -> int:
        return self.brownian.shape[1]

    def total_jumps(self) -> np.ndarray:
        """Number of jumps per path over the whole grid"""
        return self.jump_counts.sum(axis=0)

    def coarsen(self, factor: int) -> "DriverIncrements":
        """The same noise seen on every `factor`-th node, merged steps add up"""
        if factor < 1 or self.n_steps % factor:
            raise InputValidationError(f"cannot merge {self.n_steps} steps in groups of {factor}")

        def merge(values: np.ndarray) -> np.ndarray:
            return values.reshape(self.n_steps // factor, factor, -1).sum(axis=1)

        return replace(
            self,
            times=self.times[::factor],
            brownian=merge(self.brownian),
            jump_counts=merge(self.jump_counts),
            jump_sums=merge(self.jump_sums),
            event_step=self.event_step // factor,
        )


def _absolute(curve: PiecewiseConstant) -> PiecewiseConstant:
    values = tuple(abs(v) for v in curve.values)
    return PiecewiseConstant(breakpoints=curve.breakpoints, values=values)


def _lambda_sum(vols: VolatilitySpec, maturities: list[float] | None) -> float:
    if maturities is not None:
        total = 0.0
        for maturity in maturities:
            curve = vols.curve_for(maturity)
            if curve is None:
                curve = vols.default
            total += curve.sup() if curve is not None else 0.0
        return total
    curves = [entry.curve for entry in vols.entries]
    if not curves and vols.default is not None:
        curves = [vols.default]
    return sum(curve.sup() for curve in curves)


def check_conditions(
    chars: LevyCharacteristics,
    vols: VolatilitySpec,
    horizon: float,
    maturities: list[float] | None = None,
    cap_m: float | None = None,
) -> ConditionReport:
    """
    Evaluate the integrability conditions on the driving process.

    Args:
        chars: Characteristics of the driving process
        vols: Volatility loadings; the declared sum bound is used as M when present
        horizon: Right end of the time interval the conditions are checked on
        maturities: Grid maturities whose loadings enter M (defaults to the configured entries)
        cap_m: Value of M used when the loading sum is unbounded

    Returns:
        ConditionReport with the three verdicts, M and per-condition diagnostics
    """
    if horizon <= 0:
        raise InputValidationError(f"horizon must be positive, got {horizon}")

    diagnostics: dict[str, str] = {}

    # (cond1) drift and diffusion integrable
    cond1_integral = _absolute(chars.drift).integral(0.0, horizon) + chars.diffusion.integral(
        0.0, horizon
    )
    cond1_pass = math.isfinite(cond1_integral)
    diagnostics["cond1"] = f"integral of |b| + c over [0, {horizon:g}] = {cond1_integral:.6g}"

    # (cond2) exponential moments up to M
    m_capped = False
    bound_m = vols.sum_bound if vols.sum_bound is not None else _lambda_sum(vols, maturities)
    if not math.isfinite(bound_m):
        m_capped = True
        logger.warning("Volatility sum is unbounded, evaluating cond2 against cap %s", cap_m)
        bound_m = cap_m if cap_m is not None else math.inf

    if not chars.has_jumps:
        cond2_pass = True
        diagnostics["cond2"] = "no jumps; every exponential moment is finite"
    else:
        eta_integral = chars.intensity.integral(0.0, horizon)
        moments = (
            chars.jumps.exponential_moment(bound_m),
            chars.jumps.exponential_moment(-bound_m),
        )
        cond2_pass = math.isfinite(eta_integral) and all(math.isfinite(m) for m in moments)
        diagnostics["cond2"] = (
            f"{chars.jumps.kind} jumps, E[exp(+-{bound_m:g} X)] = "
            f"({moments[0]:.6g}, {moments[1]:.6g}), intensity integral {eta_integral:.6g}"
        )
    if m_capped:
        diagnostics["cond2"] += "; M taken from the caller cap"

    # (cond3) truncated second moment of the jump measure
    if chars.jumps is None:
        cond3_integral = 0.0
    else:
        mass = chars.intensity.integral(0.0, horizon)
        cond3_integral = mass * chars.jumps.truncated_second_moment()
    cond3_pass = math.isfinite(cond3_integral)
    diagnostics["cond3"] = f"integral of eta * E[min(X^2, 1)] = {cond3_integral:.6g}"

    return ConditionReport(
        cond1_pass=cond1_pass,
        cond2_pass=cond2_pass,
        cond3_pass=cond3_pass,
        bound_m=bound_m,
        m_capped=m_capped,
        cond1_integral=cond1_integral,
        cond3_integral=cond3_integral,
        diagnostics=diagnostics,
    )


def _block_sizes(n_paths: int, block_size: int) -> list[int]:
    n_blocks = math.ceil(n_paths / block_size)
    return [min(block_size, n_paths - b * block_size) for b in range(n_blocks)]


def _sample_block(
    chars: LevyCharacteristics,
    times: np.ndarray,
    variances: np.ndarray,
    intensities: np.ndarray,
    n_paths: int,
    seed_seq: np.random.SeedSequence,
) -> tuple[np.ndarray, ...]:
    """Sample one block of paths from its own substream"""
    brownian_seq, counts_seq, sizes_seq, times_seq = seed_seq.spawn(4)
    steps = len(times) - 1

    # Draws are generated step-major so a longer grid keeps the earlier draws unchanged
    normals = np.random.default_rng(brownian_seq).standard_normal((steps, n_paths))
    brownian = normals * np.sqrt(variances)[:, None]

    if not chars.has_jumps:
        counts = np.zeros((steps, n_paths), dtype=np.int64)
        no_events = np.zeros(0, dtype=np.int64)
        return (
            brownian,
            counts,
            np.zeros((steps, n_paths)),
            no_events,
            no_events,
            np.zeros(0),
            np.zeros(0),
        )

    counts = np.random.default_rng(counts_seq).poisson(
        np.broadcast_to(intensities[:, None], (steps, n_paths))
    )
    step_index, path_index = np.nonzero(counts)
    repeats = counts[step_index, path_index]
    event_step = np.repeat(step_index, repeats)
    event_path = np.repeat(path_index, repeats)

    sizes = chars.jumps.sample(np.random.default_rng(sizes_seq), len(event_step))
    uniforms = np.random.default_rng(times_seq).random(len(event_step))
    widths = np.diff(times)
    event_time = times[event_step] + uniforms * widths[event_step]

    jump_sums = np.zeros((steps, n_paths))
    np.add.at(jump_sums, (event_step, event_path), sizes)
    return brownian, counts, jump_sums, event_path, event_step, event_time, sizes


def sample_increments(
    chars: LevyCharacteristics,
    step_grid: list[float] | np.ndarray,
    n_paths: int,
    seed: int,
    block_size: int | None = None,
    max_workers: int | None = None,
) -> DriverIncrements:
    """
    Sample Brownian increments and compound-Poisson jumps on a step grid.

    Paths are split into fixed-size blocks, each with its own substream spawned
    from the master seed, so the result does not depend on the worker count.
    """
    times = np.asarray(step_grid, dtype=float)
    if times.ndim != 1 or len(times) < 2 or times[0] != 0.0 or np.any(np.diff(times) <= 0):
        raise InputValidationError("step grid must start at 0 and be strictly increasing")
    if n_paths < 1:
        raise InputValidationError(f"need at least one path, got {n_paths}")

    block_size = block_size or config.PATH_BLOCK_SIZE
    max_workers = max_workers or config.MAX_WORKERS

    steps = list(zip(times, times[1:], strict=False))
    variances = np.array([chars.diffusion.integral(a, b) for a, b in steps])
    intensities = np.array([chars.intensity.integral(a, b) for a, b in steps])

    sizes = _block_sizes(n_paths, block_size)
    n_blocks = len(sizes)
    streams = np.random.SeedSequence(seed).spawn(n_blocks)

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        blocks = list(
            pool.map(
                lambda args: _sample_block(chars, times, variances, intensities, *args),
                zip(sizes, streams, strict=True),
            )
        )

    offsets = np.cumsum([0, *sizes[:-1]])
    brownian, counts, jump_sums, event_path, event_step, event_time, event_size = zip(
        *blocks, strict=True
    )
    result = DriverIncrements(
        times=times,
        brownian=np.concatenate(brownian, axis=1),
        jump_counts=np.concatenate(counts, axis=1),
        jump_sums=np.concatenate(jump_sums, axis=1),
        event_path=np.concatenate([p + o for p, o in zip(event_path, offsets, strict=True)]),
        event_step=np.concatenate(event_step),
        event_time=np.concatenate(event_time),
        event_size=np.concatenate(event_size),
        seed=seed,
    )
    logger.debug(
        "Sampled %d steps x %d paths in %d blocks, %d jumps",
        result.n_steps,
        n_paths,
        n_blocks,
        len(result.event_size),
    )
    return result


class JumpThinning:
    """
    Step-by-step jump sampler for a compensator equal to the driver's one
    times a path-dependent factor.

    Candidates arrive with intensity eta * bound and are kept with probability
    factor(x) / bound, which leaves jumps with intensity eta * E[factor(X)] and
    sizes tilted by the factor. Each block of paths has its own substream, so
    draws depend on the seed and the block size only.
    """

    def __init__(
        self,
        chars: LevyCharacteristics,
        step_grid: list[float] | np.ndarray,
        n_paths: int,
        seed: int,
        block_size: int | None = None,
    ):
        if not chars.has_jumps:
            raise InputValidationError("thinning needs a jump component")
        self.chars = chars
        self.times = np.asarray(step_grid, dtype=float)
        self.n_paths = n_paths
        steps = zip(self.times, self.times[1:], strict=False)
        self.intensities = np.array([chars.intensity.integral(a, b) for a, b in steps])

        sizes = _block_sizes(n_paths, block_size or config.PATH_BLOCK_SIZE)
        offsets = np.cumsum([0, *sizes[:-1]])
        streams = np.random.SeedSequence(seed).spawn(len(sizes))
        self._blocks = [
            (int(offset), size, np.random.default_rng(stream.spawn(THINNING_STREAM + 1)[-1]))
            for offset, size, stream in zip(offsets, sizes, streams, strict=True)
        ]

    def step(self, k: int, bound, acceptance) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Jumps kept in step k.

        Args:
            k: Step index, steps must be requested in increasing order
            bound: Dominating factor per path (or one for all paths)
            acceptance: Callable (paths, sizes) -> factor / bound for the candidates

        Returns:
            (path, time, size) arrays of the kept jumps
        """
        bound = np.broadcast_to(np.asarray(bound, dtype=float), (self.n_paths,))
        if np.any(bound <= 0):
            raise InvalidStateError("thinning bound must be positive")
        start, end = self.times[k], self.times[k + 1]

        kept_paths, kept_times, kept_sizes = [], [], []
        for offset, size, rng in self._blocks:
            counts = rng.poisson(self.intensities[k] * bound[offset : offset + size])
            candidates = np.repeat(np.arange(size), counts) + offset
            sizes = self.chars.jumps.sample(rng, len(candidates))
            when = start + rng.random(len(candidates)) * (end - start)
            probability = np.asarray(acceptance(candidates, sizes), dtype=float)
            if np.any(probability > 1.0 + config.IDENTITY_TOLERANCE):
                raise InvalidStateError("rescaling factor exceeds its thinning bound")
            keep = rng.random(len(candidates)) < probability
            kept_paths.append(candidates[keep])
            kept_times.append(when[keep])
            kept_sizes.append(sizes[keep])

        return np.concatenate(kept_paths), np.concatenate(kept_times), np.concatenate(kept_sizes)
