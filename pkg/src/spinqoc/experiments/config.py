"""Experiment configuration files (YAML).

A config is a flat mapping of scenario parameters plus a ``system`` block::

    scenario: opt-state
    seed: 0
    system: {spin: 3.5, g: 2.0, D_MHz: 1281, E_MHz: 294, B_T: [0.15, 0, 0], b_dir: [0, 1, 0]}
    target: state:7
    initial: 0
    t_f_ns: [2, 5, 10]

Missing keys take the defaults below; unknown keys are rejected.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from ..pulse import cutoff_modes
from ..spin_model import SpinSystem, gdw30
from ..targets import GateTarget, StateTarget, parse_target

SCENARIOS = ("pi-scan", "opt-state", "opt-gate", "frontier")


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


_COMMON = {
    "scenario": None,
    "seed": 0,
    "out_dir": None,
    "system": None,
    "steps_per_period": 40,
    "halving_tol": 1e-3,
}

_OPT = {
    "cutoff_GHz": 8.0,
    "threshold": None,
    "max_iter": 1000,
    "restarts": 5,
    "init": "random",
}

DEFAULTS = {
    "pi-scan": {
        "transitions": "adjacent",
        "lambda_T": [],
    },
    "opt-state": {
        **_OPT,
        "target": None,
        "initial": 0,
        "transitions": None,
        "t_f_ns": [],
        "b_max_T": "baseline",
        "export_pulses": True,
    },
    "opt-gate": {
        **_OPT,
        "target": "deutsch:pi/4",
        "t_f_ns": None,
        "periods": 20.0,
        "b_max_T": 0.02,
    },
    "frontier": {
        **_OPT,
        "target": "deutsch:pi/2",
        "t_f_ns": [],
        "threshold": 0.99,
        "b_high_T": 0.05,
        "rel_tol": 0.05,
        "verify": True,
        "verify_restarts": 5,
    },
}


def _lambda_list(value) -> list[float]:
    """A list of amplitudes, or a mapping {start, stop, num} for a log-spaced sweep."""
    if isinstance(value, dict):
        extra = set(value) - {"start", "stop", "num"}
        if extra or len(value) != 3:
            raise ConfigError("lambda_T sweep needs exactly start, stop, num")
        return [float(x) for x in np.geomspace(value["start"], value["stop"], int(value["num"]))]
    return [float(x) for x in (value or [])]


def _pairs(value, d: int) -> list[tuple[int, int]]:
    if value == "adjacent":
        return [(m, m + 1) for m in range(d - 1)]
    pairs = []
    for item in value:
        j, k = (int(x) for x in item)
        if not (0 <= j < d and 0 <= k < d) or j == k:
            raise ConfigError(f"bad transition {item!r} for dimension {d}")
        pairs.append((j, k))
    return pairs


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated configuration of one scenario run.

    ``params`` holds the scenario keys with defaults filled in; the raw
    mapping is kept so the run can be written back out and repeated.
    """

    scenario: str
    system: SpinSystem
    seed: int
    params: dict = field(repr=False)
    out_dir: Path | None = None

    def __getitem__(self, key):
        return self.params[key]

    @classmethod
    def from_dict(cls, raw: dict, scenario: str | None = None) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a mapping")
        raw = copy.deepcopy(raw)
        name = raw.get("scenario") or scenario
        if scenario is not None and name != scenario:
            raise ConfigError(f"config is for scenario {name!r}, not {scenario!r}")
        if name not in SCENARIOS:
            raise ConfigError(f"unknown scenario {name!r}; expected one of {SCENARIOS}")
        allowed = {**_COMMON, **DEFAULTS[name]}
        unknown = set(raw) - set(allowed)
        if unknown:
            raise ConfigError(f"unknown keys for {name}: {sorted(unknown)}")
        params = {**allowed, **raw}
        params["scenario"] = name
        try:
            system = SpinSystem.from_config(params["system"]) if params["system"] is not None else gdw30()
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad system block: {exc}") from exc
        params["system"] = system.to_config()
        out = params.pop("out_dir")
        cfg = cls(name, system, int(params["seed"]), params, Path(out) if out else None)
        cfg._validate()
        return cfg

    def with_overrides(self, seed: int | None = None, out_dir=None) -> "ExperimentConfig":
        params = dict(self.params)
        if seed is not None:
            params["seed"] = int(seed)
        return ExperimentConfig(self.scenario, self.system, int(params["seed"]), params,
                                Path(out_dir) if out_dir is not None else self.out_dir)

    def _validate(self):
        p = self.params
        d = self.system.dim
        try:
            if int(p["steps_per_period"]) < 4:
                raise ConfigError("steps_per_period must be at least 4")
            if self.scenario == "pi-scan":
                p["lambda_T"] = _lambda_list(p["lambda_T"])
                if any(lam <= 0 for lam in p["lambda_T"]):
                    raise ConfigError("lambda_T values must be positive")
                p["transitions"] = [list(t) for t in _pairs(p["transitions"], d)]
                return
            if p["init"] not in ("random", "resonant"):
                raise ConfigError(f"init must be 'random' or 'resonant', got {p['init']!r}")
            if float(p["cutoff_GHz"]) <= 0:
                raise ConfigError("cutoff_GHz must be positive")
            if self.scenario == "opt-state":
                if (p["target"] is None) == (p["transitions"] is None):
                    raise ConfigError("opt-state needs exactly one of 'target' or 'transitions'")
                if p["transitions"] is not None:
                    p["transitions"] = [list(t) for t in _pairs(p["transitions"], d)]
                else:
                    if not isinstance(self.target(), StateTarget):
                        raise ConfigError(f"{p['target']!r} is not a state target")
                    if not 0 <= int(p["initial"]) < d:
                        raise ConfigError(f"initial level {p['initial']} outside 0..{d - 1}")
                p["t_f_ns"] = [float(t) for t in p["t_f_ns"]]
                b = p["b_max_T"]
                if b != "baseline" and not float(b) > 0:
                    raise ConfigError("b_max_T must be positive or 'baseline'")
                times = p["t_f_ns"]
            elif self.scenario == "opt-gate":
                if not isinstance(self.target(), GateTarget):
                    raise ConfigError(f"{p['target']!r} is not a gate target")
                if not float(p["b_max_T"]) > 0:
                    raise ConfigError("b_max_T must be positive")
                times = [] if p["t_f_ns"] is None else [float(p["t_f_ns"])]
            else:
                if not isinstance(self.target(), GateTarget):
                    raise ConfigError(f"{p['target']!r} is not a gate target")
                p["t_f_ns"] = [float(t) for t in p["t_f_ns"]]
                if not p["t_f_ns"]:
                    raise ConfigError("frontier needs at least one time point")
                if not float(p["b_high_T"]) > 0 or not 0 < float(p["rel_tol"]) < 1:
                    raise ConfigError("need b_high_T > 0 and 0 < rel_tol < 1")
                if int(p["verify_restarts"]) < 0:
                    raise ConfigError("verify_restarts must be non-negative")
                times = p["t_f_ns"]
            for t in times:
                if t <= 0:
                    raise ConfigError("times must be positive")
                if cutoff_modes(t, float(p["cutoff_GHz"])) < 1:
                    raise ConfigError(f"cutoff {p['cutoff_GHz']} GHz leaves no Fourier mode at t_f = {t} ns")
        except (TypeError, ValueError, KeyError, IndexError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    def target(self, name: str | None = None):
        return parse_target(name or self.params["target"], self.system.dim)

    def to_dict(self) -> dict:
        out = dict(self.params)
        if self.out_dir is not None:
            out["out_dir"] = str(self.out_dir)
        return out

    def config_hash(self) -> str:
        """Hash of everything that affects results (the output directory does not)."""
        blob = json.dumps(self.params, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def load_config(path, scenario: str | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return ExperimentConfig.from_dict(raw, scenario)


def dump_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))


def default_config_path(name: str) -> Path:
    """Path of a config shipped with the package, e.g. ``gdw30_pi_scan``."""
    ref = resources.files("spinqoc.experiments").joinpath("configs", f"{name}.yaml")
    return Path(str(ref))


def default_config(name: str) -> ExperimentConfig:
    return load_config(default_config_path(name))
