"""
Unit tests for the tenor grid, index function and initial discount curve.
"""

import math

import pytest
from pydantic import ValidationError

from errors import (
    ExtrapolationError,
    InputValidationError,
    OutOfRangeError,
    ScenarioError,
    TermStructureError,
)
from models import DiscountCurve, TenorGrid, maturity_key
from term_structure import (
    build_equidistant_grid,
    discount,
    extend_grid,
    forward_libor_from_prices,
    initial_forward_libor,
    initial_rates_from_curve,
    load_curve_csv,
    locate_index,
)


@pytest.mark.unit
@pytest.mark.parametrize(
    "first, delta, count, expected",
    [
        (0.5, 0.5, 4, (0.5, 1.0, 1.5, 2.0)),
        (0.5, 0.5, 2, (0.5, 1.0)),
        (1.0, 0.25, 3, (1.0, 1.25, 1.5)),
    ],
)
def test_build_equidistant_grid(first, delta, count, expected):
    grid = build_equidistant_grid(first, delta, count)
    assert grid.maturities == expected
    assert grid.spacing == delta
    assert grid.n_rates == count - 1


@pytest.mark.unit
@pytest.mark.parametrize("first, delta, count", [(0.0, 0.5, 4), (0.5, -0.5, 4), (0.5, 0.5, 1)])
def test_build_equidistant_grid_rejects_bad_input(first, delta, count):
    with pytest.raises(InputValidationError):
        build_equidistant_grid(first, delta, count)


@pytest.mark.unit
def test_tenor_grid_must_be_equidistant():
    with pytest.raises(ValidationError, match="spacing"):
        TenorGrid(maturities=(0.5, 1.0, 1.75), spacing=0.5)


@pytest.mark.unit
def test_extend_grid_appends_dates():
    grid = build_equidistant_grid(0.5, 0.5, 3)
    extended = extend_grid(grid, 2)
    assert extended.maturities == (0.5, 1.0, 1.5, 2.0, 2.5)
    assert extend_grid(grid, 0) == grid


@pytest.mark.unit
@pytest.mark.parametrize("t, expected", [(0.0, 1), (0.2, 1), (0.5, 1), (0.51, 2), (2.0, 4)])
def test_locate_index(t, expected):
    grid = build_equidistant_grid(0.5, 0.5, 4)
    assert locate_index(grid, t) == expected


@pytest.mark.unit
def test_locate_index_out_of_range():
    grid = build_equidistant_grid(0.5, 0.5, 4)
    with pytest.raises(OutOfRangeError):
        locate_index(grid, 2.01)
    with pytest.raises(InputValidationError):
        locate_index(grid, -0.1)
    # After an extension the same time is covered
    assert locate_index(extend_grid(grid, 1), 2.01) == 5


@pytest.mark.unit
def test_discount_pillars_and_normalisation():
    curve = DiscountCurve(pillars=((0.5, 0.98), (1.0, 0.955)))
    assert discount(curve, 0.5) == 0.98
    assert discount(curve, 1.0) == 0.955
    assert discount(curve, 0.0) == 1.0


@pytest.mark.unit
def test_discount_is_log_linear_between_pillars():
    curve = DiscountCurve(pillars=((0.5, 0.98), (1.0, 0.955)))
    assert discount(curve, 0.75) == pytest.approx(math.sqrt(0.98 * 0.955), abs=1e-14)
    assert discount(curve, 0.75) == pytest.approx(0.967419, abs=5e-7)


@pytest.mark.unit
def test_discount_refuses_extrapolation():
    curve = DiscountCurve(pillars=((0.5, 0.98), (1.0, 0.955)))
    with pytest.raises(ExtrapolationError):
        discount(curve, 1.25)


@pytest.mark.unit
def test_curve_must_be_strictly_decreasing():
    with pytest.raises(ValidationError, match="pillar 1"):
        DiscountCurve(pillars=((0.5, 0.98), (1.0, 0.99)))


@pytest.mark.unit
def test_curve_pins_maturity_zero():
    curve = DiscountCurve(pillars=((0.5, 0.98),))
    assert curve.pillars[0] == (0.0, 1.0)
    with pytest.raises(ValidationError):
        DiscountCurve(pillars=((0.0, 0.99), (0.5, 0.98)))


@pytest.mark.unit
def test_initial_forward_libor_examples(short_curve):
    assert initial_forward_libor(short_curve, 1.0, 0.5) == pytest.approx(0.05235602, abs=1e-8)
    assert initial_forward_libor(short_curve, 1.5, 0.5) == pytest.approx(0.05376344, abs=1e-8)


@pytest.mark.unit
def test_flat_prices_give_zero_rate():
    assert forward_libor_from_prices(0.97, 0.97, 0.5) == 0.0


@pytest.mark.unit
def test_initial_forward_libor_needs_curve_coverage(short_curve):
    with pytest.raises(ExtrapolationError):
        initial_forward_libor(short_curve, 2.0, 0.5)


@pytest.mark.unit
def test_initial_rates_from_curve(short_curve, short_grid):
    rates = initial_rates_from_curve(short_curve, short_grid)
    assert len(rates) == short_grid.n_rates
    assert rates[0] == pytest.approx(2.0 * (0.98 / 0.955 - 1.0), abs=1e-15)


@pytest.mark.unit
def test_errors_are_value_errors():
    assert issubclass(ExtrapolationError, TermStructureError)
    assert issubclass(TermStructureError, ValueError)


@pytest.mark.unit
def test_maturity_key_normalises_float_noise():
    assert maturity_key(0.1 + 0.2) == maturity_key(0.3)


@pytest.mark.unit
def test_load_curve_csv(tmp_path):
    path = tmp_path / "curve.csv"
    path.write_text("maturity,discount\n0.5,0.98\n1.0,0.955\n")
    curve = load_curve_csv(path)
    assert curve.pillars == ((0.0, 1.0), (0.5, 0.98), (1.0, 0.955))


@pytest.mark.unit
def test_load_curve_csv_names_missing_column(tmp_path):
    path = tmp_path / "curve.csv"
    path.write_text("maturity,price\n0.5,0.98\n")
    with pytest.raises(ScenarioError, match="discount"):
        load_curve_csv(path)
