"""Run configuration: YAML file, dotted-key overrides and ``ALLOTRL_*`` environment variables.

Keys are nested by section (``ppo.lr``, ``env.tc_max``). A file may use
nested mappings or flat dotted keys; both are merged into the defaults below.
Environment variables of the form ``ALLOTRL_<SECTION>__<KEY>`` override the
file, e.g. ``ALLOTRL_PPO__LR=0.0005``; values are parsed as YAML scalars.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from .errors import ConfigError, ValidationError
from .marketdata import DEFAULT_PHASE_PLAN, DEFAULT_STRATEGY_WEIGHTS, FeatureSpec, Phase, PhasePlan
from .oracle import OracleConfig
from .pipeline import ExperimentSettings
from .ppo.algo import PpoConfig
from .rewards import REWARD_KINDS
from .synth import BootstrapConfig

ENV_PREFIX = "ALLOTRL_"

# sliding phases that fit the default synthetic market (4000 business days from 2000-01-03)
SYNTHETIC_PHASE_PLAN = PhasePlan(
    {
        1: Phase("2000-06-01", "2009-01-01", "2009-01-01", "2010-01-01", "2010-01-01", "2011-01-01"),
        2: Phase("2002-01-01", "2011-01-01", "2011-01-01", "2012-01-01", "2012-01-01", "2013-01-01"),
        3: Phase("2004-01-01", "2013-01-01", "2013-01-01", "2014-01-01", "2014-01-01", "2015-01-01"),
    }
)

DEFAULTS: dict[str, Any] = {
    "data": {
        # price CSVs; when ``prices`` is null the synthetic regime market is used
        "prices": None,
        "indexes": None,
        "index_columns": None,
        "strategies": None,
        "rebalance": "daily",
        "store": "store",
    },
    "synthetic_market": {"n_steps": 4000, "seed": 0, "persistence": 0.997, "start_date": "2000-01-03"},
    "features": {"mean_window": 40, "std_window": 60},
    # null selects the built-in plan for the configured data source
    "phases": None,
    "run_phases": [1, 2, 3],
    "env": {
        "tc_max": 0.0025,
        "ramp_episodes": 100,
        "tc_convexity": [1.0, 0.45],
        "tc_schedule": True,
        "stride": 2,
        "initial_weights": [0.0, 1.0, 0.0],
    },
    "oracle": {"horizon_n": 14, "grid_resolution": 0.01, "risk_free": 0.0, "ridge": 1e-10},
    "reward": {"kind": "regret", "params": {}},
    "ppo": {f.name: f.default for f in dataclasses.fields(PpoConfig)},
    "bootstrap": {
        "enabled": True,
        "block_fraction": 0.8,
        "swap_probability": 0.7,
        "swap_interval_episodes": 10,
        "deterministic_alternation": False,
    },
    "ablation": {
        "tc_schedule": [True, False],
        "bootstrap": [True, False],
        "rewards": list(REWARD_KINDS),
        "runs": 20,
        "phase": 1,
    },
    "seeds": [0],
    "out": "runs",
}
DEFAULTS["ppo"]["hidden"] = [64, 64]


def _set_dotted(tree: dict, dotted: str, value: Any) -> None:
    parts = dotted.split(".")
    node = tree
    for p in parts[:-1]:
        nxt = node.get(p)
        if not isinstance(nxt, dict):
            nxt = {}
            node[p] = nxt
        node = nxt
    node[parts[-1]] = value


def merge(base: dict, overrides: Mapping) -> dict:
    """Deep-merge ``overrides`` into a copy of ``base``; dotted keys are expanded."""
    out = copy.deepcopy(base)
    for key, value in overrides.items():
        key = str(key)
        if "." in key:
            _set_dotted(out, key, copy.deepcopy(value))
        elif isinstance(value, Mapping) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def env_overrides(environ: Mapping[str, str] | None = None) -> dict:
    environ = os.environ if environ is None else environ
    found = {}
    for name, raw in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        dotted = name[len(ENV_PREFIX) :].lower().replace("__", ".")
        try:
            found[dotted] = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{name}: cannot parse value {raw!r}: {exc}") from exc
    return found


def _check_keys(tree: Mapping, reference: Mapping, where: str = "") -> None:
    for key, value in tree.items():
        path = f"{where}{key}"
        if key not in reference:
            raise ConfigError(f"unknown config key '{path}'")
        ref = reference[key]
        if isinstance(ref, dict) and isinstance(value, Mapping) and key not in ("params",):
            _check_keys(value, ref, path + ".")


@dataclass
class RunConfig:
    raw: dict
    base_dir: Path = field(default_factory=Path.cwd)

    # -- sections -----------------------------------------------------------

    def section(self, name: str) -> dict:
        return self.raw[name]

    @property
    def seeds(self) -> list[int]:
        return [int(s) for s in self.raw["seeds"]]

    @property
    def run_phases(self) -> list[int]:
        return [int(p) for p in self.raw["run_phases"]]

    @property
    def out(self) -> Path:
        return self.resolve(self.raw["out"])

    @property
    def store(self) -> Path:
        return self.resolve(self.raw["data"]["store"])

    def resolve(self, path: str | os.PathLike | None) -> Path | None:
        if path is None:
            return None
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def phase_plan(self) -> PhasePlan:
        phases = self.raw["phases"]
        if phases is None:
            return SYNTHETIC_PHASE_PLAN if self.raw["data"]["prices"] is None else DEFAULT_PHASE_PLAN
        return PhasePlan.from_mapping(phases)

    def feature_settings(self) -> dict:
        return {**self.raw["features"], "stride": int(self.raw["env"]["stride"])}

    def feature_spec(self) -> FeatureSpec:
        return FeatureSpec(**self.feature_settings())

    def strategy_weights(self) -> dict:
        return self.raw["data"]["strategies"] or DEFAULT_STRATEGY_WEIGHTS

    def settings(self) -> ExperimentSettings:
        env = self.raw["env"]
        conv = env["tc_convexity"]
        if isinstance(conv, (int, float)):
            conv = [conv, conv]
        if len(conv) != 2:
            raise ConfigError("env.tc_convexity must be a number or [first_phase, later_phases]")
        ppo = dict(self.raw["ppo"])
        ppo["hidden"] = tuple(ppo["hidden"])
        bb = dict(self.raw["bootstrap"])
        reward = self.raw["reward"]
        if reward["kind"] not in REWARD_KINDS:
            raise ConfigError(f"reward.kind must be one of {REWARD_KINDS}, got {reward['kind']!r}")
        return ExperimentSettings(
            ppo=PpoConfig(**ppo),
            oracle=OracleConfig(**self.raw["oracle"]),
            bootstrap=BootstrapConfig(**bb),
            features=self.feature_spec(),
            reward_kind=reward["kind"],
            reward_params=dict(reward.get("params") or {}),
            tc_max=float(env["tc_max"]),
            ramp_episodes=int(env["ramp_episodes"]),
            convexity_first=float(conv[0]),
            convexity_later=float(conv[1]),
            tc_schedule=bool(env["tc_schedule"]),
            initial_weights=tuple(float(w) for w in env["initial_weights"]),
        )

    def validate(self) -> None:
        if not self.seeds:
            raise ConfigError("seeds must be a non-empty list")
        plan = self.phase_plan()
        for p in self.run_phases:
            plan[p]
        if not self.run_phases:
            raise ConfigError("run_phases must be non-empty")
        env = self.raw["env"]
        if env["tc_max"] < 0 or env["ramp_episodes"] < 0:
            raise ConfigError("env.tc_max and env.ramp_episodes must be nonnegative")
        w = np.asarray(env["initial_weights"], dtype=float)
        if w.shape != (3,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ConfigError("env.initial_weights must be 3 nonnegative fractions summing to 1")
        abl = self.raw["ablation"]
        if int(abl["runs"]) < 1:
            raise ConfigError("ablation.runs must be >= 1")
        if not (abl["tc_schedule"] and abl["bootstrap"] and abl["rewards"]):
            raise ConfigError("ablation grid must be non-empty")
        for kind in abl["rewards"]:
            if kind not in REWARD_KINDS:
                raise ConfigError(f"ablation.rewards: unknown reward kind {kind!r}")
        self.settings()

    def model_signature(self) -> dict:
        """What a checkpoint must agree on to be evaluated under this config."""
        ppo = self.raw["ppo"]
        return {
            "obs_dim": 19,
            "n_assets": 3,
            "hidden": [int(h) for h in ppo["hidden"]],
            "features": self.feature_settings(),
            "normalize_observations": bool(ppo["normalize_observations"]),
        }

    def signature_hash(self) -> str:
        return signature_hash(self.model_signature())

    def with_overrides(self, overrides: Mapping) -> RunConfig:
        return build_config(merge(self.raw, overrides), self.base_dir)

    def dump(self) -> str:
        return yaml.safe_dump(self.raw, sort_keys=True, default_flow_style=False)


def signature_hash(signature: Mapping) -> str:
    blob = json.dumps(signature, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def build_config(raw: Mapping, base_dir: Path | None = None) -> RunConfig:
    tree = merge(DEFAULTS, raw)
    _check_keys(tree, DEFAULTS)
    if tree["phases"] is not None:
        plan = {}
        for k, v in tree["phases"].items():
            if not isinstance(v, Mapping):
                raise ConfigError(f"phases.{k} must be a mapping of split boundaries")
            plan[int(k)] = {f.name: str(v[f.name]) for f in dataclasses.fields(Phase) if f.name in v}
        tree["phases"] = plan
    cfg = RunConfig(tree, base_dir or Path.cwd())
    try:
        cfg.validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(
    path: str | os.PathLike | None = None,
    overrides: Mapping | None = None,
    environ: Mapping[str, str] | None = None,
) -> RunConfig:
    """Defaults, then the YAML file, then environment variables, then ``overrides``."""
    raw: dict = {}
    base = Path.cwd()
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc}") from exc
        try:
            raw = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{p}: invalid YAML: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{p}: top level must be a mapping")
        base = p.resolve().parent
    raw = merge(raw, env_overrides(environ))
    if overrides:
        raw = merge(raw, overrides)
    return build_config(raw, base)


__all__ = [
    "DEFAULTS",
    "ENV_PREFIX",
    "RunConfig",
    "SYNTHETIC_PHASE_PLAN",
    "ValidationError",
    "build_config",
    "env_overrides",
    "load_config",
    "merge",
    "signature_hash",
]
