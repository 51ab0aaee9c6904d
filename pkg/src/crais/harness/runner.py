"""Execute experiment configs and write their reports.

Layout written by :func:`cli_run`::

    out_dir/
      config.json           canonical config + hash
      summary.csv           one row per grid point
      selection.csv         only for grids: best point by estimate and by error
      <point>/seed_<s>/report.json
      <point>/seed_<s>/trace.csv

``<point>`` is ``run`` for a config without a grid. Every file carries the
config hash, and per-seed files also carry the seed. No timestamps are
written, so re-running a config reproduces the files byte for byte.
"""

from __future__ import annotations

import csv
import itertools
import json
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from ..annealing import divergence_table
from ..numerics import DegenerateWeightsError, RngStream
from ..sampler import (
    RunReport,
    _json_safe,
    resample_multinomial,
    run_adaptive_ais,
    run_cr_ais,
    run_cr_smc,
    run_fixed_schedule_ais,
)
from ..schedules import interpolate_schedule
from ..targets import MIXTURE4_MEANS
from .config import ConfigError, ExperimentConfig, config_hash

__all__ = [
    "RunAborted",
    "run_single",
    "cli_run",
    "cli_tune_then_test",
    "cli_benchmark",
    "summarize",
    "TRACE_COLUMNS",
    "SUMMARY_COLUMNS",
    "SUITES",
]

TRACE_COLUMNS = ["iter", "tau", "beta", "r", "log_r", "v", "ess", "f_div_estimate"]
SUMMARY_COLUMNS = [
    "target",
    "sampler",
    "config_hash",
    "n_seeds",
    "seeds",
    "est_err_mean",
    "est_err_std",
    "log_z_is_mean",
    "log_z_is_std",
    "log_z_lower_mean",
    "comput",
    "M_mean",
    "target_evals_mean",
    "tune_evals_mean",
]
SUITES = ("demo2d", "highdim", "logistic")

# child streams of a seed's root stream used by the harness
TUNE_STREAM, TEST_STREAM, EXTRA_STREAM = 10, 11, 20


class RunAborted(RuntimeError):
    """A run hit a numerical abort; whatever trace existed has been written."""


def run_single(cfg: ExperimentConfig, rng: RngStream, workers: int = 1):
    """Run the sampler described by ``cfg`` once. Returns ``(ensemble, report)``."""
    path = cfg.build_path()
    div = divergence_table(cfg.alpha)
    common = dict(kernel=cfg.build_kernel(), n_particles=cfg.n_particles, rng=rng, workers=workers)
    if cfg.sampler == "fixed":
        return run_fixed_schedule_ais(path, cfg.build_schedule(), divergence=div,
                                      resample_trigger=cfg.resample_trigger, **common)
    if cfg.sampler == "cr_ais":
        ens, rep, _ = run_cr_ais(path, div, cfg.delta, cfg.max_step, cfg.min_step,
                                 cfg.variance_threshold, cfg.max_steps, **common)
        return ens, rep
    if cfg.sampler == "cr_smc":
        trigger = 0.9 if cfg.resample_trigger is None else cfg.resample_trigger
        return run_cr_smc(path, div, cfg.delta, trigger, cfg.max_step, cfg.min_step,
                          cfg.variance_threshold, cfg.max_steps, resampling=cfg.resampling, **common)
    a = cfg.adaptive
    return run_adaptive_ais(path, a["mode"], a["target_ratio"], a["max_step"], cfg.min_step, a["tol"],
                            cfg.max_steps, divergence=div, resample_trigger=cfg.resample_trigger, **common)


# --- file writers -----------------------------------------------------------

def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_json_safe(obj), sort_keys=True, indent=2) + "\n")


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_trace(path: Path, rows: list, chash: str, seed: int) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    extra = sorted({k for r in rows for k in r} - set(TRACE_COLUMNS))
    cols = ["config_hash", "seed"] + TRACE_COLUMNS + extra
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, restval="")
        w.writeheader()
        for r in rows:
            w.writerow({"config_hash": chash, "seed": seed, **{k: _cell(v) for k, v in r.items()}})


def write_rows(path: Path, rows: list, columns: list) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, restval="", extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: _cell(v) for k, v in r.items()})


def _payload(cfg: ExperimentConfig, chash: str, seed: int, report: RunReport, truth: Optional[float]) -> dict:
    d = report.to_dict()
    d.pop("trace")
    d.update(
        config_hash=chash,
        seed=seed,
        target=cfg.target["name"],
        true_log_z=truth,
        abs_error=None if truth is None else abs(report.log_z_is - truth),
        config=cfg.to_dict(),
    )
    return d


def summarize(target: str, sampler: str, chash: str, payloads: list) -> dict:
    """Table row computed only from per-seed report payloads (as stored in JSON)."""
    def mean(key):
        vals = [p[key] for p in payloads]
        return None if any(v is None for v in vals) else float(np.mean(vals))

    errs = [p["abs_error"] for p in payloads]
    known = all(e is not None for e in errs)
    lz = [p["log_z_is"] for p in payloads]
    return {
        "target": target,
        "sampler": sampler,
        "config_hash": chash,
        "n_seeds": len(payloads),
        "seeds": ";".join(str(p["seed"]) for p in payloads),
        "est_err_mean": float(np.mean(errs)) if known else None,
        "est_err_std": float(np.std(errs)) if known else None,
        "log_z_is_mean": float(np.mean(lz)),
        "log_z_is_std": float(np.std(lz)),
        "log_z_lower_mean": mean("log_z_lower"),
        "comput": mean("comput"),
        "M_mean": mean("M"),
        "target_evals_mean": mean("target_evals"),
        "tune_evals_mean": mean("tune_evals"),
    }


def _run_seed(cfg, chash, seed, seed_dir: Path, workers, truth, rng=None, trace_name="trace.csv"):
    rng = RngStream(seed) if rng is None else rng
    try:
        ens, report = run_single(cfg, rng, workers)
    except (DegenerateWeightsError, FloatingPointError) as exc:
        write_trace(seed_dir / trace_name, getattr(exc, "partial_trace", []), chash, seed)
        raise RunAborted(f"seed {seed}: {exc}") from exc
    write_trace(seed_dir / trace_name, report.trace, chash, seed)
    return ens, report


def _truth(cfg: ExperimentConfig) -> Optional[float]:
    return cfg.build_target().true_log_z


def _run_config(cfg: ExperimentConfig, out: Path, workers: int, truth=None, label=None) -> dict:
    chash = config_hash(cfg)
    truth = _truth(cfg) if truth is None else truth
    payloads = []
    for seed in cfg.seeds:
        seed_dir = out / f"seed_{seed}"
        _, report = _run_seed(cfg, chash, seed, seed_dir, workers, truth)
        p = _payload(cfg, chash, seed, report, truth)
        _write_json(seed_dir / "report.json", p)
        payloads.append(p)
    return summarize(cfg.target["name"], label or cfg.sampler, chash, payloads)


# --- grids ------------------------------------------------------------------

def expand_grid(cfg: ExperimentConfig) -> list:
    """Cartesian product of the config's grid; each point is a grid-free config."""
    if not cfg.grid:
        return [("run", cfg)]
    keys = sorted(cfg.grid)
    points = []
    for values in itertools.product(*(cfg.grid[k] for k in keys)):
        label = "_".join(f"{k}={v}" for k, v in zip(keys, values))
        d = cfg.to_dict()
        d.update(zip(keys, values))
        d["grid"] = {}
        points.append((label, ExperimentConfig.from_dict(d)))
    return points


def _selection(rows: list) -> list:
    """Best grid point by highest mean estimate and, when truth is known, by lowest error."""
    out = []
    best_est = max(rows, key=lambda r: r["log_z_is_mean"])
    out.append({"criterion": "highest_estimate", **best_est})
    if all(r["est_err_mean"] is not None for r in rows):
        best_err = min(rows, key=lambda r: r["est_err_mean"])
        out.append({"criterion": "lowest_error", **best_err})
    return out


# --- entry points -----------------------------------------------------------

def _apply_overrides(cfg: ExperimentConfig, seeds: Optional[Iterable[int]]) -> ExperimentConfig:
    if seeds is None:
        return cfg
    d = cfg.to_dict()
    d["seeds"] = list(seeds)
    return ExperimentConfig.from_dict(d)


def cli_run(cfg: ExperimentConfig, out_dir=None, seeds=None, workers: int = 1) -> list:
    """Run every seed (and every grid point) of ``cfg``; returns the summary rows."""
    cfg = _apply_overrides(cfg, seeds)
    points = expand_grid(cfg)
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", {"config_hash": config_hash(cfg), "config": cfg.to_dict()})
    rows = []
    for label, point in points:
        row = _run_config(point, out / label, workers)
        row["point"] = label
        rows.append(row)
    write_rows(out / "summary.csv", rows, ["point"] + SUMMARY_COLUMNS)
    if cfg.grid:
        write_rows(out / "selection.csv", _selection(rows), ["criterion", "point"] + SUMMARY_COLUMNS)
    return rows


def _tune_then_test_seed(cfg, chash, seed, seed_dir, m_test, workers, truth):
    root = RngStream(seed)
    _, tune = _run_seed(cfg, chash, seed, seed_dir, workers, truth, root.split(TUNE_STREAM), "tune_trace.csv")
    _write_json(seed_dir / "tune_report.json", _payload(cfg, chash, seed, tune, truth))
    schedule = interpolate_schedule(tune.schedule, m_test)
    try:
        _, test = run_fixed_schedule_ais(cfg.build_path(), schedule, cfg.build_kernel(), cfg.n_particles,
                                         root.split(TEST_STREAM), workers, divergence_table(cfg.alpha))
    except (DegenerateWeightsError, FloatingPointError) as exc:
        write_trace(seed_dir / "trace.csv", getattr(exc, "partial_trace", []), chash, seed)
        raise RunAborted(f"seed {seed}: {exc}") from exc
    test.sampler = f"{cfg.sampler}_interpolated"
    test.seed = seed
    test.tune_evals = tune.target_evals
    write_trace(seed_dir / "trace.csv", test.trace, chash, seed)
    p = _payload(cfg, chash, seed, test, truth)
    p.update(m_test=m_test, tuned_M=tune.M, test_evals=test.target_evals,
             total_evals=test.target_evals + tune.target_evals)
    _write_json(seed_dir / "report.json", p)
    return p


def cli_tune_then_test(cfg: ExperimentConfig, m_test: int, out_dir=None, seeds=None, workers: int = 1,
                       truth=None, label=None) -> dict:
    """Tune a schedule with ``cfg`` (cr_ais or adaptive), stretch it to
    ``m_test`` steps and run fixed-schedule AIS on it with fresh randomness."""
    if cfg.sampler not in ("cr_ais", "adaptive"):
        raise ConfigError(f"tune-then-test needs sampler cr_ais or adaptive, got {cfg.sampler!r}")
    if isinstance(m_test, bool) or not isinstance(m_test, int) or m_test < 1:
        raise ConfigError(f"m_test must be a positive integer, got {m_test!r}")
    cfg = _apply_overrides(cfg, seeds)
    chash = config_hash(cfg)
    truth = _truth(cfg) if truth is None else truth
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", {"config_hash": chash, "config": cfg.to_dict(), "m_test": m_test})
    payloads = [
        _tune_then_test_seed(cfg, chash, s, out / f"seed_{s}", m_test, workers, truth) for s in cfg.seeds
    ]
    row = summarize(cfg.target["name"], label or f"{cfg.sampler}_interpolated", chash, payloads)
    row["test_evals_mean"] = float(np.mean([p["test_evals"] for p in payloads]))
    row["total_evals_mean"] = float(np.mean([p["total_evals"] for p in payloads]))
    write_rows(out / "summary.csv", [row], SUMMARY_COLUMNS + ["test_evals_mean", "total_evals_mean"])
    return row


# --- benchmark suites -------------------------------------------------------

def _suite_settings(suite: str, quick: bool) -> dict:
    seeds = [0] if quick else [0, 1, 2]
    if suite == "demo2d":
        return dict(
            targets=[{"name": n} for n in ("narrow_gaussian", "ring", "bananas", "mixture4")],
            n=256 if quick else 1024, seeds=seeds, kernel={"step_size": 0.5, "n_leapfrog": 1},
            cr_delta=1 / 32, tune_delta=1 / 4, max_step=1 / 16, m_test=None,
            adaptive={"mode": "cess_ratio", "target_ratio": 0.7, "max_step": 1 / 128},
        )
    if suite == "highdim":
        dims = (8,) if quick else (8, 32)
        return dict(
            targets=[{"name": n, "dim": d} for d in dims for n in ("normal", "mixture", "laplace", "student_t")],
            n=512 if quick else 4096, seeds=seeds, kernel={"step_size": 0.5, "n_leapfrog": 1},
            cr_delta=1 / 4, tune_delta=2.0, max_step=1 / 16, m_test=64,
            adaptive={"mode": "cess_ratio", "target_ratio": 0.9, "max_step": 1 / 16},
        )
    if suite == "logistic":
        return dict(
            targets=[], n=256 if quick else 1024, seeds=seeds, kernel={"step_size": 0.5, "n_leapfrog": 1},
            cr_delta=1 / 32, tune_delta=1 / 4, max_step=1 / 16, m_test=64,
            adaptive={"mode": "cess_ratio", "target_ratio": 0.7, "max_step": 1 / 128},
            budgets=(16, 64, 256), reference_M=1024 if quick else 4096,
        )
    raise ConfigError(f"unknown suite {suite!r}; choose from {SUITES}")


LOGISTIC_FILES = ("pima.csv", "sonar.csv")


def _logistic_targets(data_dir) -> list:
    targets = [{"name": "logistic", "dataset": "synthetic"}]
    if data_dir is None:
        return targets
    data_dir = Path(data_dir)
    for fname in LOGISTIC_FILES:
        p = data_dir / fname
        if not p.exists():
            raise FileNotFoundError(
                f"logistic suite expected {p}: CSV with numeric feature columns and a final 0/1 label "
                "column (optional header row)"
            )
        targets.append({"name": "logistic", "dataset": str(p)})
    return targets


def _mode_occupancy(cfg, seed, ens, out: Path, chash) -> dict:
    resampled = resample_multinomial(ens, RngStream(seed).split(EXTRA_STREAM))
    z = resampled.positions
    label = np.argmin(((z[:, None, :] - MIXTURE4_MEANS[None]) ** 2).sum(-1), axis=1)
    counts = np.bincount(label, minlength=len(MIXTURE4_MEANS))
    write_rows(out / f"resampled_particles_seed_{seed}.csv",
               [{"config_hash": chash, "seed": seed, "z1": a, "z2": b, "mode": int(m)} for (a, b), m in zip(z, label)],
               ["config_hash", "seed", "z1", "z2", "mode"])
    return {"config_hash": chash, "seed": seed, **{f"mode_{i}": int(c) for i, c in enumerate(counts)},
            "min_fraction": float(counts.min() / counts.sum())}


def _target_label(t: dict) -> str:
    if t["name"] == "logistic":
        ds = t.get("dataset", "synthetic")
        return "logistic_" + (ds if ds == "synthetic" else Path(ds).stem)
    return t["name"] + (f"_d{t['dim']}" if "dim" in t else "")


def cli_benchmark(suite: str, out_dir="results", seeds=None, workers: int = 1, quick: bool = False,
                  data_dir=None) -> list:
    """Run one suite across {linear, exponential, sigmoidal, adaptive, cr_ais,
    cr_ais-interpolated} and write ``<out_dir>/<suite>/summary.csv``."""
    st = _suite_settings(suite, quick)
    if seeds is not None:
        st["seeds"] = list(seeds)
    targets = _logistic_targets(data_dir) if suite == "logistic" else st["targets"]
    root = Path(out_dir) / suite
    rows = []
    for t in targets:
        tl = _target_label(t)
        base = dict(target=t, n_particles=st["n"], seeds=st["seeds"], kernel=st["kernel"],
                    max_step=st["max_step"], adaptive=st["adaptive"])
        tdir = root / tl
        truth = ExperimentConfig.from_dict(dict(base, sampler="fixed")).build_target().true_log_z

        if suite == "logistic":
            # long linear run as the reference value, then a budget sweep
            ref_cfg = ExperimentConfig.from_dict(dict(base, sampler="fixed",
                                                      schedule={"kind": "linear", "M": st["reference_M"]}))
            ref = _run_config(ref_cfg, tdir / "reference", workers, label="reference")
            truth = ref["log_z_is_mean"]
            budget_rows = []
            for m in st["budgets"]:
                bc = ExperimentConfig.from_dict(dict(base, sampler="fixed", schedule={"kind": "linear", "M": m}))
                br = _run_config(bc, tdir / f"budget_M{m}", workers, truth=truth, label=f"linear_M{m}")
                budget_rows.append({"M": m, **br})
            write_rows(tdir / "budget.csv", budget_rows, ["M"] + SUMMARY_COLUMNS)

        cr_cfg = ExperimentConfig.from_dict(dict(base, sampler="cr_ais", delta=st["cr_delta"]))
        cr_row = _run_config(cr_cfg, tdir / "cr_ais", workers, truth=truth, label="cr_ais")
        m_test = st["m_test"] or max(1, int(round(cr_row["M_mean"])))

        for kind in ("linear", "exponential", "sigmoidal"):
            fc = ExperimentConfig.from_dict(dict(base, sampler="fixed", schedule={"kind": kind, "M": m_test}))
            rows.append(dict(_run_config(fc, tdir / kind, workers, truth=truth, label=kind), target=tl))
        ac = ExperimentConfig.from_dict(dict(base, sampler="adaptive"))
        rows.append(dict(_run_config(ac, tdir / "adaptive", workers, truth=truth, label="adaptive"), target=tl))
        rows.append(dict(cr_row, target=tl))
        tc = ExperimentConfig.from_dict(dict(base, sampler="cr_ais", delta=st["tune_delta"]))
        tt = cli_tune_then_test(tc, m_test, tdir / "cr_ais-interpolated", workers=workers, truth=truth,
                                label="cr_ais-interpolated")
        rows.append(dict(tt, target=tl))

        if suite == "demo2d" and t["name"] == "mixture4":
            chash = config_hash(cr_cfg)
            occ = []
            for seed in cr_cfg.seeds:
                ens, _ = run_single(cr_cfg, RngStream(seed), workers)
                occ.append(_mode_occupancy(cr_cfg, seed, ens, tdir, chash))
            write_rows(tdir / "mode_occupancy.csv", occ,
                       ["config_hash", "seed"] + [f"mode_{i}" for i in range(4)] + ["min_fraction"])

    write_rows(root / "summary.csv", rows, SUMMARY_COLUMNS + ["test_evals_mean", "total_evals_mean"])
    return rows
