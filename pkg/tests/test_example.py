import csv
import json
import math

import numpy as np
import pytest

from slyap.analysis.example import (
    TRAJ_DT,
    TRAJ_EPS,
    TRAJ_HORIZON,
    TRAJ_X0,
    example_lambda_closed_form,
    example_signal,
    example_system,
    gamma_sp5,
    period_rho,
    run_example,
    trajectory_signal,
)
from slyap.analysis.exporter import ReportExporter
from slyap.analysis.flows import simulate
from slyap.config import ChainConfig, CheckSampleConfig, KSetConfig, SearchConfig
from slyap.errors import DimensionError, PreconditionError

M1 = [[-1.0, 1.0], [0.0, -0.1]]
M2 = [[-3.0, 0.0], [2.0, -0.1]]


def test_gamma_sp5():
    check = gamma_sp5(M1, M2)
    assert abs(check.gamma - (-0.8)) <= 1e-12
    assert abs(check.det_product - 0.03) <= 1e-12
    assert check.threshold == pytest.approx(-math.sqrt(0.03))
    assert check.holds


def test_gamma_rejects_negative_determinant_product():
    with pytest.raises(PreconditionError):
        gamma_sp5([[1.0, 0.0], [0.0, -1.0]], M2)


def test_gamma_needs_planar_modes():
    with pytest.raises(DimensionError):
        gamma_sp5(np.eye(3), np.eye(3))


def test_closed_form_value():
    assert example_lambda_closed_form() == pytest.approx(2.99582, abs=1e-4)


@pytest.mark.parametrize("eps, expected", [(0.1, 1.167)])
def test_period_rho(eps, expected):
    assert period_rho(example_system(), example_signal(), eps) == pytest.approx(expected, abs=1e-3)


def test_period_rho_exceeds_one_for_small_eps():
    for eps in (0.1, 0.05, 0.01):
        assert period_rho(example_system(), example_signal(), eps) > 1.0


def _small_config(threads=1):
    return ChainConfig(
        search=SearchConfig(restarts=16, iterations=40, threads=threads),
        check=CheckSampleConfig(count=16, threads=threads),
        kset=KSetConfig(signals=16, horizon=1000.0),
        check_signals=(example_signal(),),
    )


@pytest.fixture(scope="module")
def example_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("example")
    return out, run_example(out, _small_config())


def test_example_report(example_run):
    _, report = example_run
    assert report.gamma == pytest.approx(-0.8)
    assert report.sp5_holds
    assert report.bar_modes == [-1.0, -3.0]
    assert report.lambda_check_value == pytest.approx(example_lambda_closed_form(), abs=1e-9)
    eps, rho = report.rho_at_eps[0]
    assert eps == 0.1
    assert rho == pytest.approx(1.167, abs=1e-3)


def test_example_files(example_run):
    out, report = example_run
    assert sorted(p.name for p in out.iterdir()) == [
        "chain.json", "figure1.csv", "gamma.json", "lambda.json", "sweep.csv"]
    with open(out / "figure1.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["t", "x1", "y1"]
    assert float(rows[-1]["t"]) == pytest.approx(TRAJ_HORIZON)
    assert abs(float(rows[-1]["x1"])) > 1e5
    chain = json.loads((out / "chain.json").read_text(encoding="utf-8"))
    assert "trend" in chain
    gamma = json.loads((out / "gamma.json").read_text(encoding="utf-8"))
    assert gamma["M1"] == M1


def test_trajectory_csv_is_reproducible(example_run):
    out, _ = example_run
    traj = simulate(example_system(), trajectory_signal(), TRAJ_EPS, TRAJ_X0, TRAJ_DT)
    text = ReportExporter().export_trajectory_csv(traj, 1, 1)
    assert text == (out / "figure1.csv").read_text(encoding="utf-8")


def test_example_files_are_byte_identical_across_runs_and_threads(example_run, tmp_path):
    out, report = example_run
    again = run_example(tmp_path, _small_config(threads=3))
    assert again.sp5_holds == report.sp5_holds
    for name in ("figure1.csv", "lambda.json", "gamma.json", "sweep.csv", "chain.json"):
        assert (tmp_path / name).read_bytes() == (out / name).read_bytes(), name
