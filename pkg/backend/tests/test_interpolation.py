"""
Tests for the spot-LIBOR numeraire, gamma interpolation between tenor dates,
forward processes and bond reconstruction.
"""

import numpy as np
import pytest
from pydantic import ValidationError

from errors import (
    DependencyError,
    InfeasibleCurveError,
    InputValidationError,
    MaturedBondError,
    MeasureCoverageError,
    OutOfRangeError,
)
from interpolation import (
    GammaInterpolation,
    bond_price,
    build_gamma_interpolation,
    forward_process_coefficients,
    forward_process_paths,
    interpolated_forward_density,
    solve_gamma,
    spot_numeraire_path,
)
from measure_engine import accrual_weight, jump_beta
from models import MeasureLabel, RatePathSet, maturity_key
from simulator import simulate
from term_structure import discount


@pytest.fixture
def zero_vol_paths(zero_vol_model, small_sim):
    return simulate(zero_vol_model, small_sim)


@pytest.fixture
def jump_paths(jump_model, small_sim):
    return simulate(jump_model, small_sim)


def _interior_dates(edges, per_interval=5):
    return [
        float(a + (b - a) * i / (per_interval + 1))
        for a, b in zip(edges, edges[1:], strict=False)
        for i in range(1, per_interval + 1)
    ]


@pytest.mark.unit
def test_gamma_interpolation_endpoints_are_exact():
    gamma = GammaInterpolation(start=0.5, end=1.0, points=((0.75, 0.4),))
    assert gamma(0.5) == 0.0
    assert gamma(1.0) == 1.0
    assert gamma(0.75) == 0.4
    with pytest.raises(DependencyError):
        gamma(0.6)


@pytest.mark.unit
def test_gamma_interpolation_must_be_monotone():
    with pytest.raises(ValidationError):
        GammaInterpolation(start=0.5, end=1.0, points=((0.6, 0.5), (0.8, 0.3)))
    with pytest.raises(ValidationError):
        GammaInterpolation(start=0.5, end=1.0, points=((0.6, 1.2),))


@pytest.mark.unit
def test_numeraire_without_accrual(short_grid, short_curve):
    times = np.array([0.0, 0.5, 1.0])
    paths = RatePathSet(
        times=times,
        maturities=(0.5, 1.0),
        rates=np.zeros((2, 3, 1)),
        grid=short_grid,
        measure=MeasureLabel.spot(),
        seed=0,
        jump_counts=np.zeros(1, dtype=np.int64),
    )
    numeraire = spot_numeraire_path(paths, short_grid, short_curve)
    assert numeraire.values[0, 0] == 1.0
    assert np.all(numeraire.values[1:, 0] == 1.0 / 0.98)


@pytest.mark.unit
def test_numeraire_needs_every_fixing(short_grid, short_curve):
    paths = RatePathSet(
        times=np.array([0.0, 0.5]),
        maturities=(0.5,),
        rates=np.full((1, 2, 1), 0.05),
        grid=short_grid,
        measure=MeasureLabel.spot(),
        seed=0,
        jump_counts=np.zeros(1, dtype=np.int64),
    )
    with pytest.raises(DependencyError):
        spot_numeraire_path(paths, short_grid, short_curve)


@pytest.mark.integration
def test_deterministic_numeraire_matches_the_curve(zero_vol_paths, reference_grid, reference_curve):
    numeraire = spot_numeraire_path(zero_vol_paths, reference_grid, reference_curve)
    for row, date in enumerate(numeraire.dates):
        expected = 1.0 / discount(reference_curve, date)
        assert numeraire.values[row] == pytest.approx(expected, rel=1e-12)
    # before T_1 the numeraire is deterministic
    assert np.all(numeraire.at(0.25) == 1.0 / discount(reference_curve, 0.25))


@pytest.mark.unit
def test_solve_gamma_endpoints(short_curve):
    samples_n, samples_n1 = np.full(10, 1 / 0.98), np.full(10, 1 / 0.955)
    assert solve_gamma(samples_n, samples_n1, short_curve, 0.5, interval=(0.5, 1.0)) == 0.0
    assert solve_gamma(samples_n, samples_n1, short_curve, 1.0, interval=(0.5, 1.0)) == 1.0
    with pytest.raises(InputValidationError):
        solve_gamma(samples_n, samples_n1, short_curve, 1.25, interval=(0.5, 1.0))


@pytest.mark.unit
@pytest.mark.critical
def test_deterministic_gamma_at_the_midpoint(short_curve):
    samples_n, samples_n1 = np.full(10, 1 / 0.98), np.full(10, 1 / 0.955)
    gamma = solve_gamma(samples_n, samples_n1, short_curve, 0.75, tol=1e-10)
    assert abs(gamma - 0.5) <= 1e-10


@pytest.mark.unit
def test_solve_gamma_residual_on_random_samples(short_curve):
    rng = np.random.default_rng(4)
    samples_n = 1 / 0.98 * np.exp(rng.normal(0.0, 0.01, 5000))
    samples_n1 = samples_n * (1.0 + 0.5 * rng.uniform(0.04, 0.06, 5000))
    gamma = solve_gamma(samples_n, samples_n1, short_curve, 0.75, tol=1e-10)
    blended = np.exp(-(1 - gamma) * np.log(samples_n) - gamma * np.log(samples_n1))
    assert 0.0 < gamma < 1.0
    assert abs(blended.mean() - discount(short_curve, 0.75)) <= 1e-10


@pytest.mark.unit
def test_unattainable_target_is_infeasible(short_curve):
    samples = np.full(10, 2.0)
    with pytest.raises(InfeasibleCurveError):
        solve_gamma(samples, samples, short_curve, 0.75)


@pytest.mark.integration
@pytest.mark.critical
def test_gamma_interpolation_reproduces_the_curve(jump_paths, reference_grid, reference_curve):
    numeraire = spot_numeraire_path(jump_paths, reference_grid, reference_curve)
    dates = _interior_dates(numeraire.dates)
    gammas = build_gamma_interpolation(numeraire, reference_curve, dates)
    numeraire = numeraire.with_gammas(gammas)

    assert (0.0, 0.5) in gammas
    assert len(gammas) == len(numeraire.dates) - 1
    for date in dates:
        assert abs(np.mean(1.0 / numeraire.at(date)) - discount(reference_curve, date)) <= 1e-10
    for gamma in gammas.values():
        values = [g for _, g in gamma.points]
        assert values == sorted(values)
        assert gamma(gamma.start) == 0.0 and gamma(gamma.end) == 1.0


@pytest.mark.integration
def test_gamma_increases_over_a_fine_sample(jump_paths, reference_grid, reference_curve):
    numeraire = spot_numeraire_path(jump_paths, reference_grid, reference_curve)
    dates = _interior_dates(numeraire.dates, per_interval=15)
    gammas = build_gamma_interpolation(numeraire, reference_curve, dates)
    for interval in gammas.values():
        values = [0.0, *(g for _, g in interval.points), 1.0]
        assert len(values) == 17
        assert np.all(np.diff(values) > 0.0)


@pytest.mark.integration
def test_interpolated_forward_density_has_mean_one(jump_paths, reference_grid, reference_curve):
    numeraire = spot_numeraire_path(jump_paths, reference_grid, reference_curve)
    gammas = build_gamma_interpolation(numeraire, reference_curve, [1.25])
    density = interpolated_forward_density(numeraire.with_gammas(gammas), reference_curve, 1.25)
    assert np.all(density > 0)
    assert abs(density.mean() - 1.0) <= 1e-9


@pytest.mark.integration
def test_numeraire_needs_gamma_between_tenor_dates(jump_paths, reference_grid, reference_curve):
    numeraire = spot_numeraire_path(jump_paths, reference_grid, reference_curve)
    with pytest.raises(DependencyError):
        numeraire.at(1.25)


@pytest.mark.unit
def test_forward_process_coefficients_zero_volatility(zero_vol_model):
    state = {0.5: 0.04, 1.0: 0.04}
    coeffs = forward_process_coefficients(zero_vol_model, 0.5, 1.5, 0.2, state)
    assert coeffs.alpha == 0.0
    assert coeffs.beta(0.3) == 1.0


@pytest.mark.unit
def test_forward_process_coefficients_compose(diffusion_model):
    single = forward_process_coefficients(diffusion_model, 0.5, 1.0, 0.2, {0.5: 0.04})
    assert single.alpha == pytest.approx(0.003921569, abs=1e-9)
    double = forward_process_coefficients(diffusion_model, 0.5, 1.5, 0.2, {0.5: 0.04, 1.0: 0.04})
    assert double.alpha == pytest.approx(2 * single.alpha, rel=1e-15)
    assert double.beta(1.0) == pytest.approx(single.beta(1.0) ** 2, rel=1e-15)
    assert double.beta(1.0) == pytest.approx(1.008701310, abs=5e-9)


@pytest.mark.unit
def test_forward_process_coefficients_errors(diffusion_model):
    with pytest.raises(MeasureCoverageError):
        forward_process_coefficients(diffusion_model, 2.0, 3.0, 0.2, {2.0: 0.04, 2.5: 0.04})
    with pytest.raises(MeasureCoverageError):
        forward_process_coefficients(diffusion_model, 0.5, 1.5, 0.2, {0.5: 0.04})
    with pytest.raises(DependencyError):
        forward_process_coefficients(diffusion_model, 0.5, 1.25, 0.2, {0.5: 0.04, 1.0: 0.04})
    with pytest.raises(InputValidationError):
        forward_process_coefficients(diffusion_model, 1.0, 1.0, 0.2, {0.5: 0.04})
    with pytest.raises(OutOfRangeError):
        forward_process_coefficients(diffusion_model, 0.5, 1.0, 0.7, {0.5: 0.04})


@pytest.mark.unit
@pytest.mark.critical
def test_fractional_links_compose(jump_model, rate_state):
    gammas = {
        (0.5, 1.0): GammaInterpolation(start=0.5, end=1.0, points=((0.75, 0.4),)),
        (1.0, 1.5): GammaInterpolation(start=1.0, end=1.5, points=((1.25, 0.55),)),
    }
    first = forward_process_coefficients(jump_model, 0.5, 0.75, 0.1, rate_state, gammas)
    second = forward_process_coefficients(jump_model, 0.75, 1.0, 0.1, rate_state, gammas)
    whole = forward_process_coefficients(jump_model, 0.5, 1.0, 0.1, rate_state, gammas)
    weight = accrual_weight(0.5, rate_state[0.5])

    assert first.alpha == pytest.approx(0.4 * weight * 0.2, rel=1e-14)
    assert second.alpha == pytest.approx(0.6 * weight * 0.2, rel=1e-14)
    assert first.alpha + second.alpha == pytest.approx(whole.alpha, rel=1e-14)
    assert first.beta(0.3) * second.beta(0.3) == pytest.approx(whole.beta(0.3), rel=1e-14)
    assert second.beta(0.3) == pytest.approx(jump_beta(weight, 0.2, 0.3) ** 0.6, rel=1e-14)

    across = forward_process_coefficients(jump_model, 0.75, 1.25, 0.1, rate_state, gammas)
    expected = 0.6 * weight * 0.2 + 0.55 * accrual_weight(0.5, rate_state[1.0]) * 0.2
    assert across.alpha == pytest.approx(expected, rel=1e-14)


@pytest.mark.unit
def test_fractional_link_needs_its_gamma(jump_model, rate_state):
    with pytest.raises(DependencyError):
        forward_process_coefficients(jump_model, 0.75, 1.0, 0.1, rate_state)


@pytest.mark.integration
def test_forward_process_telescopes(jump_paths, reference_curve):
    forwards = forward_process_paths(jump_paths, reference_curve)
    assert np.array_equal(forwards.values, 1.0 + 0.5 * jump_paths.rates)
    assert np.array_equal(forwards.link(1.0), 1.0 + 0.5 * jump_paths.rate(1.0))


@pytest.mark.integration
def test_bond_price(zero_vol_paths, reference_curve):
    forwards = forward_process_paths(zero_vol_paths, reference_curve)
    assert np.all(bond_price(forwards, 1.5, 0.0) == discount(reference_curve, 1.5))
    assert np.all(bond_price(forwards, 1.5, 1.5) == 1.0)
    expected = discount(reference_curve, 1.5) / discount(reference_curve, 0.5)
    assert bond_price(forwards, 1.5, 0.5) == pytest.approx(expected, rel=1e-12)
    with pytest.raises(MaturedBondError):
        bond_price(forwards, 1.0, 1.5)
    with pytest.raises(DependencyError):
        bond_price(forwards, 1.5, 0.51)


@pytest.mark.integration
@pytest.mark.critical
def test_bond_price_between_tenor_dates(zero_vol_paths, reference_grid, reference_curve):
    numeraire = spot_numeraire_path(zero_vol_paths, reference_grid, reference_curve)
    gammas = build_gamma_interpolation(numeraire, reference_curve, [0.75, 1.25])
    forwards = forward_process_paths(zero_vol_paths, reference_curve, gammas)
    cases = [(0.25, 1.0), (0.25, 0.75), (0.75, 1.25), (0.5, 1.25), (0.125, 0.375)]
    for t, maturity in cases:
        expected = discount(reference_curve, maturity) / discount(reference_curve, t)
        price = bond_price(forwards, maturity, t)
        assert np.max(np.abs(price / expected - 1.0)) <= 1e-9

    without_gammas = forward_process_paths(zero_vol_paths, reference_curve)
    with pytest.raises(DependencyError):
        bond_price(without_gammas, 1.25, 0.5)


@pytest.mark.integration
@pytest.mark.critical
def test_bond_prices_are_positive_and_decrease_in_maturity(
    jump_paths, reference_grid, reference_curve
):
    numeraire = spot_numeraire_path(jump_paths, reference_grid, reference_curve)
    dates = _interior_dates(numeraire.dates, per_interval=3)
    gammas = build_gamma_interpolation(numeraire, reference_curve, dates)
    forwards = forward_process_paths(jump_paths, reference_curve, gammas)
    maturities = sorted([*dates, *reference_grid.maturities])

    for t in (0.0, 0.25, 0.5, 0.875, 1.5):
        prices = np.array([bond_price(forwards, m, t) for m in maturities if m >= t])
        assert np.all(prices > 0.0)
        assert np.all(prices <= 1.0)
        assert np.all(np.diff(prices, axis=0) <= 0.0)


@pytest.mark.integration
def test_interval_keys_use_maturity_keys(jump_paths, reference_grid, reference_curve):
    numeraire = spot_numeraire_path(jump_paths, reference_grid, reference_curve)
    gammas = build_gamma_interpolation(numeraire, reference_curve, [0.75])
    assert (maturity_key(0.5), maturity_key(1.0)) in gammas
    assert gammas[(0.5, 1.0)].points[0][0] == 0.75
