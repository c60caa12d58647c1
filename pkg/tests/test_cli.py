import json

import pytest

from weightedchaos.cli import main
from weightedchaos.reports import validate_report

from conftest import CONFIGS

ZERO = str(CONFIGS / "zero-kernels.json")
SMALL = ["--set", "grids.G_m=40", "--set", "grids.G_x=8", "-q"]


def reports(out, sub):
    return [json.loads(p.read_text()) for p in out.glob(f"{sub}-*.json")]


def test_ok_run_writes_valid_report(tmp_path):
    assert main(["solve-meanfield", ZERO, "--out", str(tmp_path)] + SMALL) == 0
    (rep,) = reports(tmp_path, "solve-meanfield")
    validate_report(rep)
    assert rep["passed"]
    (man,) = [json.loads(p.read_text()) for p in tmp_path.glob("manifest-*.json")]
    validate_report(man, "manifest")


def test_run_prefix_and_config_option(tmp_path):
    assert main(["run", "verify-bounds", "--config", ZERO, "--out", str(tmp_path)] + SMALL) == 0


def test_verify_bounds_zero_kernels(tmp_path):
    assert main(["verify-bounds", ZERO, "--out", str(tmp_path)] + SMALL) == 0
    (rep,) = reports(tmp_path, "verify-bounds")
    led = rep["results"]["ledger"]
    assert led["K_dm"] == led["inputs"]["C"]
    assert led["K_logm"] == pytest.approx(led["inputs"]["C"] ** 2, rel=1e-15)


def test_failed_check_exit_one(tmp_path):
    argv = ["solve-meanfield", ZERO, "--out", str(tmp_path), "--set", "initial.x_amplitude=0.5",
            "--set", "initial.envelope.C_max=1.0"] + SMALL
    assert main(argv) == 1
    (rep,) = reports(tmp_path, "solve-meanfield")
    assert not rep["passed"]


@pytest.mark.parametrize("extra", [["--set", "grids.G_x=-3"], ["--set", "bogus=1"],
                                   ["--threads", "0"], ["--seed", "-1"]])
def test_config_errors_exit_two(tmp_path, extra):
    assert main(["solve-meanfield", ZERO, "--out", str(tmp_path), "-q"] + extra) == 2


def test_missing_config_exit_two(tmp_path):
    assert main(["solve-meanfield", "-q"]) == 2
    assert main(["solve-meanfield", str(tmp_path / "nope.json"), "-q"]) == 2
    assert main(["no-such-command", ZERO]) == 2


def test_numerical_abort_exit_three(tmp_path):
    argv = ["solve-meanfield", ZERO, "--out", str(tmp_path), "--set", 'initial.m_profile="bump"'] + SMALL
    assert main(argv) == 3
