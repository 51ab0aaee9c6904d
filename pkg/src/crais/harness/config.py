"""Serializable experiment configuration.

A config is a JSON object. Unknown keys are rejected so typos fail loudly.
Nested blocks (``schedule``, ``kernel``, ``adaptive``) are merged over their
defaults, so a config only needs to spell out what it changes::

    {
      "target": {"name": "normal", "dim": 8},
      "sampler": "cr_ais",
      "delta": 0.03125,
      "n_particles": 1024,
      "seeds": [0, 1, 2]
    }
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..annealing import AnnealingPath
from ..kernels import HmcConfig, RwmConfig
from ..schedules import check_schedule, heuristic_schedule, load_schedule_csv
from ..targets import (
    BENCHMARKS_2D,
    DensityModel,
    load_logistic_dataset,
    make_2d_benchmark,
    make_gaussian,
    make_highdim_benchmark,
    make_logistic_posterior,
    make_standard_normal,
    synthetic_logistic_path,
)

__all__ = ["ConfigError", "ExperimentConfig", "config_hash", "load_config", "SAMPLERS", "GRID_KEYS"]

SAMPLERS = ("fixed", "cr_ais", "adaptive", "cr_smc")
GRID_KEYS = ("alpha", "delta", "max_step", "min_step", "n_particles")
HIGHDIM = ("normal", "mixture", "laplace", "student_t")

TARGET_PARAMS = {
    "identity": {"dim"},
    **{name: set() for name in BENCHMARKS_2D},
    **{name: {"dim", "seed"} for name in HIGHDIM},
    "gaussian": {"mean", "var"},
    "logistic": {"dataset", "standardize", "add_bias", "prior_var"},
}

SCHEDULE_DEFAULTS = {"kind": "linear", "M": 64, "eps": None, "c": 10.0, "file": None}
KERNEL_DEFAULTS = {"kind": "hmc", "step_size": 0.5, "n_leapfrog": 1, "proposal_sd": 0.5}
ADAPTIVE_DEFAULTS = {"mode": "cess_ratio", "target_ratio": 0.7, "max_step": 1.0 / 128, "tol": 1e-6}


class ConfigError(ValueError):
    pass


def _merge(name: str, given, defaults: dict) -> dict:
    if given is None:
        return dict(defaults)
    if not isinstance(given, dict):
        raise ConfigError(f"{name} must be an object")
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown {name} key(s): {unknown}")
    out = dict(defaults)
    out.update(given)
    return out


def _num(name: str, v, lo=None, hi=None, lo_open=False, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{name} must be a number, got {v!r}")
    if integer and (not float(v).is_integer()):
        raise ConfigError(f"{name} must be an integer, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(f"{name} must be finite")
    if lo is not None and (v <= lo if lo_open else v < lo):
        raise ConfigError(f"{name} must be {'>' if lo_open else '>='} {lo}, got {v}")
    if hi is not None and v > hi:
        raise ConfigError(f"{name} must be <= {hi}, got {v}")
    return int(v) if integer else float(v)


@dataclass
class ExperimentConfig:
    target: dict
    sampler: str = "cr_ais"
    alpha: float = 0.0
    delta: float = 1.0 / 32
    schedule: dict = field(default_factory=dict)
    n_particles: int = 1024
    seeds: list = field(default_factory=lambda: [0])
    kernel: dict = field(default_factory=dict)
    max_step: float = 1.0 / 16
    min_step: float = 1e-6
    variance_threshold: float = 1e-3
    max_steps: int = 10_000
    adaptive: dict = field(default_factory=dict)
    resample_trigger: Optional[float] = None
    resampling: str = "multinomial"
    output_dir: str = "results"
    # optional sweep: {"delta": [...], "alpha": [...]} expands into one run per combination
    grid: dict = field(default_factory=dict)

    def __post_init__(self):
        self.schedule = _merge("schedule", self.schedule, SCHEDULE_DEFAULTS)
        self.kernel = _merge("kernel", self.kernel, KERNEL_DEFAULTS)
        self.adaptive = _merge("adaptive", self.adaptive, ADAPTIVE_DEFAULTS)
        self._validate()

    def _validate(self):
        if not isinstance(self.target, dict) or "name" not in self.target:
            raise ConfigError("target must be an object with a 'name'")
        if self.sampler not in SAMPLERS:
            raise ConfigError(f"sampler must be one of {SAMPLERS}, got {self.sampler!r}")
        self.alpha = _num("alpha", self.alpha)
        self.delta = _num("delta", self.delta, lo=0, lo_open=True)
        self.n_particles = _num("n_particles", self.n_particles, lo=1, integer=True)
        if not isinstance(self.seeds, (list, tuple)) or not self.seeds:
            raise ConfigError("seeds must be a non-empty list of integers")
        self.seeds = [_num("seed", s, lo=0, integer=True) for s in self.seeds]
        self.max_step = _num("max_step", self.max_step, lo=0, lo_open=True, hi=1)
        self.min_step = _num("min_step", self.min_step, lo=0, lo_open=True, hi=self.max_step)
        self.variance_threshold = _num("variance_threshold", self.variance_threshold, lo=0)
        self.max_steps = _num("max_steps", self.max_steps, lo=1, integer=True)
        if self.resample_trigger is not None:
            self.resample_trigger = _num("resample_trigger", self.resample_trigger, lo=0, lo_open=True, hi=1)
        if self.resampling not in ("multinomial", "systematic"):
            raise ConfigError(f"resampling must be multinomial or systematic, got {self.resampling!r}")
        if not isinstance(self.output_dir, str):
            raise ConfigError("output_dir must be a string")
        if not isinstance(self.grid, dict):
            raise ConfigError("grid must be an object mapping keys to lists")
        bad = sorted(set(self.grid) - set(GRID_KEYS))
        if bad:
            raise ConfigError(f"grid keys must be among {GRID_KEYS}, got {bad}")
        for k, vals in self.grid.items():
            if not isinstance(vals, list) or not vals:
                raise ConfigError(f"grid.{k} must be a non-empty list")

        s = self.schedule
        if s["kind"] not in ("linear", "exponential", "sigmoidal", "file"):
            raise ConfigError(f"unknown schedule kind {s['kind']!r}")
        s["M"] = _num("schedule.M", s["M"], lo=1, integer=True)
        if s["eps"] is not None:
            s["eps"] = _num("schedule.eps", s["eps"], lo=0, lo_open=True, hi=1)
        s["c"] = _num("schedule.c", s["c"], lo=0, lo_open=True)
        if s["kind"] == "file" and not s["file"]:
            raise ConfigError("schedule kind 'file' needs a 'file' path")

        k = self.kernel
        if k["kind"] not in ("hmc", "rwm"):
            raise ConfigError(f"kernel kind must be hmc or rwm, got {k['kind']!r}")
        k["step_size"] = _num("kernel.step_size", k["step_size"], lo=0)
        k["n_leapfrog"] = _num("kernel.n_leapfrog", k["n_leapfrog"], lo=1, integer=True)
        k["proposal_sd"] = _num("kernel.proposal_sd", k["proposal_sd"], lo=0)

        a = self.adaptive
        if a["mode"] not in ("cess_ratio", "ess_ratio"):
            raise ConfigError(f"adaptive mode must be cess_ratio or ess_ratio, got {a['mode']!r}")
        a["target_ratio"] = _num("adaptive.target_ratio", a["target_ratio"], lo=0, lo_open=True)
        if a["target_ratio"] >= 1:
            raise ConfigError("adaptive.target_ratio must be < 1")
        a["max_step"] = _num("adaptive.max_step", a["max_step"], lo=0, lo_open=True)
        a["tol"] = _num("adaptive.tol", a["tol"], lo=0, lo_open=True)

        # building the target catches bad parameters and missing datasets up front
        self.build_target()
        if s["kind"] == "file" and self.sampler == "fixed":
            try:
                load_schedule_csv(s["file"])
            except (OSError, ValueError) as exc:
                raise ConfigError(f"bad schedule file: {exc}") from None

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f for f in cls.__dataclass_fields__}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {unknown}")
        if "target" not in d:
            raise ConfigError("config needs a 'target'")
        try:
            return cls(**d)
        except ConfigError:
            raise
        except (TypeError, ValueError, OSError) as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def build_target(self) -> DensityModel:
        t = dict(self.target)
        name = t.pop("name")
        if name not in TARGET_PARAMS:
            raise ConfigError(f"unknown target {name!r}")
        extra = sorted(set(t) - TARGET_PARAMS[name])
        if extra:
            raise ConfigError(f"unknown parameter(s) for target {name!r}: {extra}")
        try:
            if name == "identity":
                return make_standard_normal(_num("target.dim", t.get("dim", 2), lo=1, integer=True))
            if name in BENCHMARKS_2D:
                return make_2d_benchmark(name)
            if name in HIGHDIM:
                dim = _num("target.dim", t.get("dim", 8), lo=1, integer=True)
                return make_highdim_benchmark(name, dim, _num("target.seed", t.get("seed", 0), lo=0, integer=True))
            if name == "gaussian":
                return make_gaussian(np.asarray(t["mean"], float), np.asarray(t["var"], float))
            ds = t.get("dataset", "synthetic")
            path = synthetic_logistic_path() if ds == "synthetic" else Path(ds)
            data = load_logistic_dataset(path, standardize=bool(t.get("standardize", True)),
                                         add_bias=bool(t.get("add_bias", False)))
            return make_logistic_posterior(data, float(t.get("prior_var", 5.0)))
        except ConfigError:
            raise
        except KeyError as exc:
            raise ConfigError(f"target {name!r} is missing parameter {exc}") from None
        except (TypeError, ValueError, OSError) as exc:
            raise ConfigError(f"target {name!r}: {exc}") from None

    def build_path(self) -> AnnealingPath:
        target = self.build_target()
        return AnnealingPath(make_standard_normal(target.dim), target, self.alpha)

    def build_kernel(self):
        k = self.kernel
        if k["kind"] == "hmc":
            return HmcConfig(k["step_size"], k["n_leapfrog"])
        return RwmConfig(k["proposal_sd"])

    def build_schedule(self) -> list[float]:
        s = self.schedule
        if s["kind"] == "file":
            return load_schedule_csv(s["file"])
        return check_schedule(heuristic_schedule(s["kind"], s["M"], s["eps"], s["c"])).tolist()


def config_hash(cfg: ExperimentConfig) -> str:
    """sha256 of the canonical JSON form; the output directory is left out so
    the same experiment hashes the same wherever it is written."""
    d = cfg.to_dict()
    d.pop("output_dir")
    blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None
    return ExperimentConfig.from_dict(d)
