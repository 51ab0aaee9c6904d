import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

from crais.harness import ConfigError, ExperimentConfig, cli_benchmark, cli_run, cli_tune_then_test, config_hash
from crais.harness.cli import main
from crais.harness.runner import TRACE_COLUMNS, summarize
from crais.numerics import RngStream
from crais.sampler import run_cr_ais
from crais.schedules import interpolate_schedule


def write_cfg(tmp_path, **d):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(d))
    return p


def read_csv(path):
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


# --- config -----------------------------------------------------------------


def test_config_round_trip_and_hash():
    cfg = ExperimentConfig.from_dict({"target": {"name": "normal", "dim": 4}, "delta": 0.1, "seeds": [1, 2]})
    back = ExperimentConfig.from_dict(json.loads(cfg.to_json()))
    assert back == cfg
    assert config_hash(back) == config_hash(cfg)
    other = ExperimentConfig.from_dict({"target": {"name": "normal", "dim": 4}, "delta": 0.2, "seeds": [1, 2]})
    assert config_hash(other) != config_hash(cfg)
    moved = ExperimentConfig.from_dict(dict(cfg.to_dict(), output_dir="elsewhere"))
    assert config_hash(moved) == config_hash(cfg)


@pytest.mark.parametrize(
    "bad",
    [
        {},
        {"target": {"name": "nope"}},
        {"target": {"name": "ring"}, "sampler": "magic"},
        {"target": {"name": "ring"}, "delta": 0},
        {"target": {"name": "ring"}, "n_particles": 1.5},
        {"target": {"name": "ring"}, "typo_key": 1},
        {"target": {"name": "ring"}, "kernel": {"step": 0.1}},
        {"target": {"name": "ring"}, "adaptive": {"target_ratio": 1.0}},
        {"target": {"name": "normal", "dim": 0}},
        {"target": {"name": "ring", "dim": 3}},
        {"target": {"name": "ring"}, "grid": {"kernel": [1]}},
        {"target": {"name": "ring"}, "seeds": []},
        {"target": {"name": "logistic", "dataset": "/no/such/file.csv"}},
        {"target": {"name": "ring"}, "sampler": "fixed", "schedule": {"kind": "file", "file": "/no/such.csv"}},
    ],
)
def test_invalid_configs_rejected(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(bad)


def test_invalid_config_cli_exit_and_no_output(tmp_path, capsys):
    cfg = write_cfg(tmp_path, target={"name": "ring"}, delta=-1)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--out-dir", str(out)]) == 2
    assert not out.exists()
    assert "delta" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.json"), "--out-dir", str(out)]) == 2
    assert main(["run", str(cfg), "--threads", "0"]) == 2
    assert not out.exists()


# --- runs -------------------------------------------------------------------


def test_identity_smoke(tmp_path):
    cfg = write_cfg(tmp_path, target={"name": "identity", "dim": 2}, sampler="cr_smc", n_particles=64)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--out-dir", str(out)]) == 0
    rows = read_csv(out / "summary.csv")
    assert float(rows[0]["est_err_mean"]) == 0.0
    rep = json.loads((out / "run" / "seed_0" / "report.json").read_text())
    assert rep["M"] == 1 and rep["abs_error"] == 0.0


@pytest.mark.parametrize("sampler", ["fixed", "cr_ais", "adaptive", "cr_smc"])
def test_rerun_is_byte_identical(tmp_path, sampler):
    cfg = ExperimentConfig.from_dict({"target": {"name": "bananas"}, "sampler": sampler, "n_particles": 64,
                                      "seeds": [0, 3], "delta": 0.25, "schedule": {"M": 8},
                                      "adaptive": {"max_step": 0.25}})
    cli_run(cfg, tmp_path / "a")
    cli_run(cfg, tmp_path / "b", workers=2)
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert len(files) == 6
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f


def test_outputs_carry_hash_and_seed(tmp_path):
    cfg = ExperimentConfig.from_dict({"target": {"name": "ring"}, "n_particles": 64, "seeds": [5], "delta": 0.25})
    cli_run(cfg, tmp_path)
    h = config_hash(cfg)
    rep = json.loads((tmp_path / "run" / "seed_5" / "report.json").read_text())
    assert rep["config_hash"] == h and rep["seed"] == 5
    trace = read_csv(tmp_path / "run" / "seed_5" / "trace.csv")
    assert list(trace[0])[:2 + len(TRACE_COLUMNS)] == ["config_hash", "seed"] + TRACE_COLUMNS
    assert {r["config_hash"] for r in trace} == {h} and {r["seed"] for r in trace} == {"5"}
    assert read_csv(tmp_path / "summary.csv")[0]["config_hash"] == h


def test_summary_recomputed_from_reports(tmp_path):
    cfg = ExperimentConfig.from_dict({"target": {"name": "narrow_gaussian"}, "n_particles": 128,
                                      "seeds": [0, 1, 2], "delta": 0.25})
    (row,) = cli_run(cfg, tmp_path)
    payloads = [json.loads((tmp_path / "run" / f"seed_{s}" / "report.json").read_text()) for s in (0, 1, 2)]
    again = summarize(row["target"], row["sampler"], row["config_hash"], payloads)
    csv_row = read_csv(tmp_path / "summary.csv")[0]
    for key in ("est_err_mean", "est_err_std", "log_z_is_mean", "comput", "M_mean", "target_evals_mean"):
        assert again[key] == pytest.approx(row[key], abs=1e-12)
        assert float(csv_row[key]) == pytest.approx(again[key], abs=1e-12)
    errs = [abs(p["log_z_is"] - p["true_log_z"]) for p in payloads]
    assert again["est_err_mean"] == pytest.approx(np.mean(errs), abs=1e-12)


def test_grid_writes_selection(tmp_path):
    cfg = write_cfg(tmp_path, target={"name": "narrow_gaussian"}, n_particles=64,
                    grid={"delta": [0.25, 1.0], "alpha": [0.0, 0.5]})
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--out-dir", str(out)]) == 0
    assert len(read_csv(out / "summary.csv")) == 4
    sel = read_csv(out / "selection.csv")
    assert [r["criterion"] for r in sel] == ["highest_estimate", "lowest_error"]
    assert (out / "alpha=0.5_delta=0.25" / "seed_0" / "report.json").exists()


def test_seed_override(tmp_path):
    cfg = write_cfg(tmp_path, target={"name": "ring"}, n_particles=32, seeds=[0, 1], delta=1.0)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--seed", "7", "--out-dir", str(out)]) == 0
    assert sorted(p.name for p in (out / "run").iterdir()) == ["seed_7"]


def test_abort_writes_partial_trace(tmp_path):
    # the target's log-density overflows to -inf at every proposal draw
    cfg = write_cfg(tmp_path, target={"name": "gaussian", "mean": [0.0], "var": [1e-310]}, sampler="cr_ais",
                    n_particles=8)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--out-dir", str(out)]) == 3
    trace = read_csv(out / "run" / "seed_0" / "trace.csv")
    assert len(trace) >= 1


# --- tune then test -----------------------------------------------------------


def test_tune_then_test(tmp_path):
    cfg = ExperimentConfig.from_dict({"target": {"name": "narrow_gaussian"}, "n_particles": 128,
                                      "seeds": [0, 1], "delta": 0.25})
    row = cli_tune_then_test(cfg, 40, tmp_path)
    for s in (0, 1):
        tune = json.loads((tmp_path / f"seed_{s}" / "tune_report.json").read_text())
        test = json.loads((tmp_path / f"seed_{s}" / "report.json").read_text())
        assert test["M"] == 40 and len(test["schedule"]) == 40
        assert test["schedule"] == interpolate_schedule(tune["schedule"], 40)
        assert test["total_evals"] == test["test_evals"] + tune["target_evals"]
        assert test["tune_evals"] == tune["target_evals"]
        # same streams as the two-phase driver
        _, direct, _ = run_cr_ais(cfg.build_path(), delta=0.25, n_particles=128, rng=RngStream(s),
                                  two_phase=True, test_steps=40)
        assert direct.log_z_is == test["log_z_is"]
    assert row["total_evals_mean"] == pytest.approx(row["test_evals_mean"] + row["tune_evals_mean"])
    assert read_csv(tmp_path / "summary.csv")[0]["total_evals_mean"]


def test_tune_then_test_same_length_keeps_schedule(tmp_path):
    cfg = ExperimentConfig.from_dict({"target": {"name": "ring"}, "n_particles": 64, "delta": 0.5})
    _, tuned, _ = run_cr_ais(cfg.build_path(), delta=0.5, n_particles=64, rng=RngStream(0).split(10))
    cli_tune_then_test(cfg, tuned.M, tmp_path)
    test = json.loads((tmp_path / "seed_0" / "report.json").read_text())
    assert test["schedule"] == tuned.schedule


def test_tune_then_test_rejects_fixed(tmp_path):
    cfg = write_cfg(tmp_path, target={"name": "ring"}, sampler="fixed")
    assert main(["tune-then-test", str(cfg), "--m-test", "8", "--out-dir", str(tmp_path / "o")]) == 2


# --- benchmarks ---------------------------------------------------------------


def test_demo2d_quick(tmp_path):
    rows = cli_benchmark("demo2d", tmp_path, quick=True)
    labels = {(r["target"], r["sampler"]) for r in rows}
    for t in ("narrow_gaussian", "ring", "bananas", "mixture4"):
        for s in ("linear", "exponential", "sigmoidal", "adaptive", "cr_ais", "cr_ais-interpolated"):
            assert (t, s) in labels
    occ = read_csv(tmp_path / "demo2d" / "mixture4" / "mode_occupancy.csv")
    assert len(occ) == 1 and sum(int(occ[0][f"mode_{i}"]) for i in range(4)) == 256
    parts = read_csv(tmp_path / "demo2d" / "mixture4" / "resampled_particles_seed_0.csv")
    assert len(parts) == 256
    assert len(read_csv(tmp_path / "demo2d" / "summary.csv")) == 24


def test_highdim_quick(tmp_path):
    rows = cli_benchmark("highdim", tmp_path, quick=True)
    assert {r["target"] for r in rows} == {"normal_d8", "mixture_d8", "laplace_d8", "student_t_d8"}
    assert all(r["est_err_mean"] is not None and math.isfinite(r["est_err_mean"]) for r in rows)


@pytest.mark.parametrize("sampler", ["linear", "exponential", "sigmoidal", "adaptive", "cr_ais", "cr_ais_interp"])
def test_laplace_d8_every_sampler_accurate(tmp_path, sampler):
    base = {"target": {"name": "laplace", "dim": 8}, "n_particles": 4096, "max_step": 1 / 16}
    if sampler in ("linear", "exponential", "sigmoidal"):
        cfg = ExperimentConfig.from_dict(dict(base, sampler="fixed", schedule={"kind": sampler, "M": 64}))
        (row,) = cli_run(cfg, tmp_path)
    elif sampler == "adaptive":
        cfg = ExperimentConfig.from_dict(dict(base, sampler="adaptive",
                                              adaptive={"target_ratio": 0.9, "max_step": 1 / 16}))
        (row,) = cli_run(cfg, tmp_path)
    elif sampler == "cr_ais":
        (row,) = cli_run(ExperimentConfig.from_dict(dict(base, delta=0.25)), tmp_path)
    else:
        row = cli_tune_then_test(ExperimentConfig.from_dict(dict(base, delta=2.0)), 64, tmp_path)
    assert row["est_err_mean"] < 2.0


def test_logistic_quick_budget(tmp_path):
    cli_benchmark("logistic", tmp_path, quick=True)
    budget = read_csv(tmp_path / "logistic" / "logistic_synthetic" / "budget.csv")
    errs = [float(r["est_err_mean"]) for r in budget]
    assert [int(r["M"]) for r in budget] == [16, 64, 256]
    assert errs[0] >= errs[-1]


def test_logistic_missing_data_dir(tmp_path, capsys):
    code = main(["benchmark", "logistic", "--quick", "--data-dir", str(tmp_path), "--out-dir", str(tmp_path / "o")])
    assert code == 2
    assert "pima.csv" in capsys.readouterr().err
