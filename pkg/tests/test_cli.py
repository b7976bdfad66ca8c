import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from weldlab.cli import main, read_config
from weldlab.errors import ConfigError
from weldlab.field import covariance_exact

IDENTITY_ARGS = [
    "--beta", "0", "--seed", "1",
    "--modes", "256", "--field-grid", "512",
    "--grid", "256", "--curve-samples", "512",
]


def read_rows(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def test_selftest_exit_zero(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert out.count("ok   -") == 5


def test_no_subcommand_is_usage_error(capsys):
    assert main([]) == 1
    assert "subcommand" in capsys.readouterr().err


def test_identity_weld_run(tmp_path):
    assert main(["weld", *IDENTITY_ARGS, "--out", str(tmp_path)]) == 0
    header, rows = read_rows(tmp_path / "weld_curve.csv")
    assert header == ["index", "param", "re", "im"]
    pts = np.array([complex(float(r[2]), float(r[3])) for r in rows])
    assert np.abs(np.abs(pts) - 1.0).max() < 1e-6
    svg = (tmp_path / "weld_curve.svg").read_text()
    assert svg.startswith("<svg") and "polyline" in svg
    manifest = json.loads((tmp_path / "weld_manifest.json").read_text())
    assert manifest["schema"] == 1
    assert manifest["results"]["flags"] == []
    assert manifest["results"]["diagnostics"]["solver_residual"] < 1e-10
    assert set(manifest["outputs"]) == {"weld_curve.csv", "weld_curve.svg"}


def test_supercritical_beta_needs_exploratory(capsys):
    assert main(["weld", "--beta", "1.6"]) == 1
    assert "exploratory" in capsys.readouterr().err


def test_flagged_weld_exits_two(tmp_path):
    code = main(
        [
            "weld", "--beta", "1.0", "--seed", "2",
            "--modes", "512", "--field-grid", "1024",
            "--grid", "128", "--eps", "0.02", "--curve-samples", "512",
            "--out", str(tmp_path),
        ]
    )
    assert code == 2
    manifest = json.loads((tmp_path / "weld_manifest.json").read_text())
    assert "jacobian" in manifest["results"]["flags"]


def test_manifest_rerun_is_byte_identical(tmp_path):
    first = tmp_path / "a"
    second = tmp_path / "b"
    assert main(["weld", *IDENTITY_ARGS, "--out", str(first)]) == 0
    assert main(["weld", "--config", str(first / "weld_manifest.json"), "--out", str(second)]) == 0
    assert (first / "weld_curve.csv").read_bytes() == (second / "weld_curve.csv").read_bytes()
    assert (first / "weld_curve.svg").read_bytes() == (second / "weld_curve.svg").read_bytes()


def test_config_file_overlay_and_flag_priority(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "# identity run\nbeta=0\nseed=1\nmodes=256\nfield_grid=512\ngrid=256\ncurve_samples=512\n"
    )
    out = tmp_path / "out"
    assert main(["weld", "--config", str(cfg), "--seed", "3", "--out", str(out)]) == 0
    manifest = json.loads((out / "weld_manifest.json").read_text())
    assert manifest["config"]["beta"] == 0.0
    assert manifest["config"]["seed"] == 3


def test_unknown_config_key_rejected(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("no_such_option=1\n")
    assert main(["weld", "--config", str(cfg)]) == 1
    assert "no-such-option" in capsys.readouterr().err


def test_malformed_config_line(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("just some words\n")
    with pytest.raises(ConfigError):
        read_config(cfg)


def test_env_seed_override_recorded(tmp_path, monkeypatch):
    monkeypatch.setenv("WELDLAB_SEED", "7")
    assert main(["gmc", "--beta", "0.4", "--modes", "256", "--field-grid", "512", "--out", str(tmp_path)]) == 0
    manifest = json.loads((tmp_path / "gmc_manifest.json").read_text())
    assert manifest["config"]["seed"] == 7
    assert manifest["seed_from_env"] is True


def test_gmc_masses_accumulate(tmp_path):
    assert main(["gmc", "--beta", "0.5", "--seed", "4", "--modes", "256", "--field-grid", "512", "--out", str(tmp_path)]) == 0
    header, rows = read_rows(tmp_path / "gmc_mass.csv")
    assert header == ["cell", "t", "mass", "cumulative"]
    assert len(rows) == 512
    manifest = json.loads((tmp_path / "gmc_manifest.json").read_text())
    total = manifest["results"]["total_mass"]
    assert float(rows[-1][3]) == pytest.approx(total, rel=1e-12)
    assert sum(float(r[2]) for r in rows) == pytest.approx(total, rel=1e-9)


def test_stats_study_outputs(tmp_path):
    code = main(
        [
            "stats", "--beta", "0.7", "--seed", "0",
            "--modes", "512", "--field-grid", "1024",
            "--samples", "200", "--moment-samples", "40",
            "--out", str(tmp_path),
        ]
    )
    assert code == 0
    header, rows = read_rows(tmp_path / "stats_covariance.csv")
    assert header == ["lag", "exact", "mean", "ci_lo", "ci_hi"]
    assert float(rows[0][1]) == pytest.approx(covariance_exact(0.5), rel=1e-12)
    # the interval is honest: at this sample count it covers the target
    assert float(rows[0][2]) == pytest.approx(-0.693, abs=0.2)
    manifest = json.loads((tmp_path / "stats_manifest.json").read_text())
    assert manifest["results"]["moment_slope"] == pytest.approx(1.51, abs=0.3)
    assert manifest["results"]["lognormal_prediction"] == pytest.approx(1.51, abs=1e-12)


def test_stats_rejects_unfittable_moment(capsys):
    assert main(["stats", "--beta", "0.7", "--q", "4.5"]) == 1
    assert "2/beta^2" in capsys.readouterr().err


def test_tail_requires_delta(capsys):
    assert main(["tail", "--beta", "0.5"]) == 1
    assert "--delta" in capsys.readouterr().err


TINY_TAIL = [
    "--samples", "1000", "--modes", "64", "--field-grid", "128",
    "--n-rho", "3", "--n-theta", "8", "--workers", "1",
]


def test_tail_beta_zero_all_zero_probabilities(tmp_path):
    code = main(
        [
            "tail", "--beta", "0", "--delta", "0.02",
            "--depths", "1,2", "--k-range", "1,2", "--p", "3",
            *TINY_TAIL, "--out", str(tmp_path),
        ]
    )
    assert code == 0
    header, rows = read_rows(tmp_path / "tail_probabilities.csv")
    assert header == ["depth", "hits", "samples", "p_hat", "wilson_lo", "wilson_hi"]
    assert all(float(r[3]) == 0.0 for r in rows)
    manifest = json.loads((tmp_path / "tail_manifest.json").read_text())
    assert manifest["results"]["from_bound"] is True
    assert "decay_exponent" in manifest["results"]


def test_lehto_single_sample(tmp_path):
    code = main(
        [
            "lehto", "--beta", "0.5", "--seed", "2",
            "--modes", "1024", "--field-grid", "2048",
            "--inner", "0.00390625", "--n-rho", "9", "--n-theta", "32",
            "--p", "2", "--depth", "4", "--out", str(tmp_path),
        ]
    )
    assert code == 0
    header, rows = read_rows(tmp_path / "lehto_pieces.csv")
    assert header == ["k", "inner", "outer", "value"]
    assert len(rows) == 4
    assert [float(r[1]) for r in rows] == [0.25, 0.0625, 0.015625, 0.00390625]
    manifest = json.loads((tmp_path / "lehto_manifest.json").read_text())
    assert manifest["results"]["valid"] is True
    assert manifest["results"]["value"] > sum(float(r[3]) for r in rows)


def test_module_invocation_matches_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "weldlab.cli", "weld", *IDENTITY_ARGS, "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert (tmp_path / "weld_manifest.json").exists()
