"""
Command-line tests: exit codes, printed output and reproducible artifacts.
"""

import json

import pytest

from cli import EXIT_CHECK_FAILED, EXIT_INVALID_INPUT, EXIT_IO_ERROR, EXIT_OK, build_parser, run
from models import CheckResult, ValidationReport


def _argv(command, scenario, out, *extra):
    return [command, "--scenario", str(scenario), "--out", str(out), *extra]


@pytest.mark.cli
def test_parser_defaults():
    args = build_parser().parse_args(["build", "--scenario", "s.json"])
    assert args.out == "out"
    assert args.seed is None and args.paths is None and args.step is None


@pytest.mark.cli
def test_validate_zero_volatility_scenario(scenario_dir, tmp_path, capsys):
    code = run(_argv("validate", scenario_dir / "zero_vol.json", tmp_path))
    assert code == EXIT_OK
    output = capsys.readouterr().out
    assert "FAIL" not in output
    assert output.count("PASS") == 9
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["passed"] is True


@pytest.mark.cli
def test_failed_check_exits_with_one(mocker, scenario_dir, tmp_path, capsys):
    check = CheckResult(name="conditions", statistic=1.0, tolerance=0.0, passed=False)
    failed = ValidationReport(checks={"conditions": check})
    mocker.patch("lmm_system.consistency_suite", return_value=failed)
    code = run(_argv("validate", scenario_dir / "zero_vol.json", tmp_path))
    assert code == EXIT_CHECK_FAILED
    assert "conditions" in capsys.readouterr().out


@pytest.mark.cli
def test_simulate_is_reproducible(scenario_dir, tmp_path):
    scenario = scenario_dir / "jump_diffusion.json"
    first, second = tmp_path / "first", tmp_path / "second"
    assert run(_argv("simulate", scenario, first, "--paths", "300", "--seed", "5")) == EXIT_OK
    assert run(_argv("simulate", scenario, second, "--paths", "300", "--seed", "5")) == EXIT_OK
    assert (first / "paths.csv").read_bytes() == (second / "paths.csv").read_bytes()


@pytest.mark.cli
def test_price_prints_caplets(scenario_dir, tmp_path, capsys):
    code = run(_argv("price", scenario_dir / "black_caplet.json", tmp_path, "--paths", "2000"))
    assert code == EXIT_OK
    caplets = json.loads(capsys.readouterr().out)
    assert caplets[0]["fixing"] == 1.0
    assert "black" in caplets[0]


@pytest.mark.cli
def test_invalid_scenario_exits_with_two(tmp_path):
    scenario = tmp_path / "bad.json"
    scenario.write_text('{"curve": {"pillars": [[1.0, 0.98], [0.5, 0.955]]}, "volatility": 0.2}')
    assert run(_argv("build", scenario, tmp_path / "out")) == EXIT_INVALID_INPUT


@pytest.mark.cli
def test_missing_dependency_exits_with_two(scenario_dir, tmp_path):
    # black_caplet.json requests no off-grid dates
    code = run(_argv("interpolate", scenario_dir / "black_caplet.json", tmp_path, "--paths", "10"))
    assert code == EXIT_INVALID_INPUT


@pytest.mark.cli
def test_bad_override_exits_with_two(scenario_dir, tmp_path):
    code = run(_argv("build", scenario_dir / "black_caplet.json", tmp_path, "--paths", "0"))
    assert code == EXIT_INVALID_INPUT


@pytest.mark.cli
def test_missing_scenario_exits_with_three(tmp_path):
    assert run(_argv("build", tmp_path / "missing.json", tmp_path)) == EXIT_IO_ERROR


@pytest.mark.cli
@pytest.mark.parametrize(
    "argv, expected",
    [
        (["calibrate", "--scenario", "s.json"], EXIT_INVALID_INPUT),
        (["build"], EXIT_INVALID_INPUT),
        (["--help"], EXIT_OK),
    ],
)
def test_argument_errors(argv, expected):
    assert run(argv) == expected


@pytest.mark.slow
@pytest.mark.cli
def test_atm_caplet_matches_black(scenario_dir, tmp_path, capsys):
    assert run(_argv("price", scenario_dir / "black_caplet.json", tmp_path)) == EXIT_OK
    (caplet,) = json.loads(capsys.readouterr().out)
    assert abs(caplet["z"]) <= 3.0
    assert abs(caplet["price"] - 0.00185203) <= 3 * caplet["standard_error"]
