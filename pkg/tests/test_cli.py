"""Tests for the command-line interface"""
import json
from pathlib import Path

import numpy as np
import pytest

from hauslev.cli import main
from hauslev.formats import read_samples, write_gridset
from hauslev.services.grid import DyadicGrid, GridSet

DATA = Path(__file__).resolve().parents[1] / "data"


def test_sample(tmp_path, capsys):
    code = main(["sample", "--model", "interval", "--alpha", "1", "--n", "1000", "--seed", "7", "--out", str(tmp_path)])
    assert code == 0
    samples = read_samples(tmp_path / "samples.csv")
    assert samples.n == 1000
    assert samples.seed == 7
    assert "n=1000" in capsys.readouterr().out
    assert (tmp_path / "resolved_config.txt").exists()


def test_sample_is_reproducible(tmp_path):
    args = ["sample", "--model", "interval", "--alpha", "1", "--n", "300", "--seed", "7", "--out", str(tmp_path)]
    assert main(args) == 0
    first = {name: (tmp_path / name).read_bytes() for name in ("samples.csv", "resolved_config.txt")}
    assert main(args) == 0
    assert first == {name: (tmp_path / name).read_bytes() for name in first}


def test_sample_size_zero_is_usage_error(tmp_path, capsys):
    assert main(["sample", "--n", "0", "--out", str(tmp_path)]) == 1
    assert "error" in capsys.readouterr().err


def test_no_command():
    assert main([]) == 1


def test_unknown_option():
    assert main(["sample", "--colour", "red"]) == 1


def test_estimate_bundled_data(tmp_path, capsys):
    code = main(["estimate", "--samples", str(DATA / "example_samples.csv"), "--out", str(tmp_path)])
    assert code == 0
    diagnostics = json.loads((tmp_path / "diagnostics.json").read_text())
    assert "chosen_j" in diagnostics[-1]
    assert diagnostics[-1]["mode"] == "adaptive"
    estimate = json.loads((tmp_path / "estimate.json").read_text())
    assert estimate["d"] == 1
    assert "delta = 0.020833333333333332" in (tmp_path / "resolved_config.txt").read_text()
    assert "chosen_j=" in capsys.readouterr().out


def test_estimate_oracle_and_support(tmp_path):
    samples = str(DATA / "example_samples.csv")
    assert main(["estimate", "--samples", samples, "--alpha", "1", "--out", str(tmp_path / "oracle")]) == 0
    assert json.loads((tmp_path / "oracle" / "diagnostics.json").read_text())[-1]["mode"] == "oracle"
    assert main(["estimate", "--samples", samples, "--gamma", "0", "--out", str(tmp_path / "support")]) == 0
    assert json.loads((tmp_path / "support" / "diagnostics.json").read_text())[-1]["mode"] == "support"


def test_estimate_malformed_samples(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("# d=1 n=2 seed=0\n0.5\nnope\n")
    assert main(["estimate", "--samples", str(bad), "--out", str(tmp_path)]) == 2
    assert ":3:" in capsys.readouterr().err


def test_estimate_over_cell_budget(tmp_path, monkeypatch):
    monkeypatch.setenv("HAUSLEV_CELL_BUDGET", "8")
    code = main(["estimate", "--samples", str(DATA / "example_samples.csv"), "--j", "6", "--out", str(tmp_path)])
    assert code == 3


def test_estimate_without_samples(tmp_path):
    assert main(["estimate", "--out", str(tmp_path)]) == 1


def test_hausdorff(tmp_path, capsys):
    a = write_gridset(tmp_path / "a.json", GridSet(DyadicGrid(1, 2), np.array([[0]])))
    b = write_gridset(tmp_path / "b.json", GridSet(DyadicGrid(1, 2), np.array([[3]])))
    assert main(["hausdorff", str(a), str(b)]) == 0
    assert capsys.readouterr().out.strip() == "0.75"


def test_hausdorff_dimension_mismatch(tmp_path, capsys):
    a = write_gridset(tmp_path / "a.json", GridSet(DyadicGrid(1, 2), np.array([[0]])))
    b = write_gridset(tmp_path / "b.json", GridSet(DyadicGrid(2, 2), np.array([[0, 0]])))
    assert main(["hausdorff", str(a), str(b)]) != 0
    assert "dimension" in capsys.readouterr().err


def test_smoke_sweep(tmp_path):
    assert main(["sweep", str(DATA / "smoke_plan.conf"), "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert len(lines) == 1 + 2 * 2
    rate = json.loads((tmp_path / "rate_hausdorff.json").read_text())
    assert rate["slope"] is None
    assert "error" in rate
    assert (tmp_path / "rate_symdiff.tsv").exists()
    assert (tmp_path / "resolution.tsv").exists()
    assert "j_ref = " in (tmp_path / "resolved_config.txt").read_text()


def test_sweep_is_reproducible(tmp_path):
    args = ["sweep", str(DATA / "smoke_plan.conf"), "--replications", "1", "--out", str(tmp_path)]
    assert main(args) == 0
    first = (tmp_path / "sweep.csv").read_bytes()
    assert main(args) == 0
    assert (tmp_path / "sweep.csv").read_bytes() == first


def test_validate(tmp_path, capsys):
    assert main(["validate", "--config", str(DATA / "interval_alpha1.conf"), "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "PASS normalization" in out
    report = json.loads((tmp_path / "validation.json").read_text())
    assert report["passed"] is True


def test_validate_failure_exit_code(tmp_path, capsys):
    assert main(["validate", "--model", "ribbon", "--d", "2", "--out", str(tmp_path)]) == 4
    assert "B-inner-cover" in capsys.readouterr().err


def test_validate_inadmissible_model(tmp_path):
    assert main(["validate", "--model", "interval", "--d", "2", "--out", str(tmp_path)]) == 1


def test_unknown_config_key(tmp_path):
    conf = tmp_path / "x.conf"
    conf.write_text("colour = red\n")
    assert main(["validate", "--config", str(conf), "--out", str(tmp_path)]) == 1


@pytest.mark.slow
def test_rate_sweep(tmp_path):
    assert main(["sweep", str(DATA / "rate_interval.conf"), "--out", str(tmp_path), "--losses", "hausdorff"]) == 0
    rate = json.loads((tmp_path / "rate_hausdorff.json").read_text())
    assert abs(rate["slope"] - rate["target"]) <= 0.15
