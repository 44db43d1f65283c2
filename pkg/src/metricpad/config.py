"""Run configuration: one JSON file per run, command-line flags on top.

Layout of a config file (every section optional)::

    {
      "seed": 0,
      "out": "runs/toy",
      "data": {"spec": {...BenchmarkSpec fields...}} | {"path": "bench.jsonl", "format": "jsonl"},
      "encoder": {"hidden": [64, 64], "output_dim": 32},
      "loss": {"name": "anomaly", "margin": 0.2, "sigma": 0.3, "lam": 1.0, "softmax_sign": "corrected"},
      "miner": {"mode": "anomaly", "pool_size": 128, "triplets_per_batch": 12, ...},
      "optimizer": {"learning_rate": 0.01, "momentum": 0.9, "epochs": 100, ...},
      "protocol": {"kind": "intra", "holdout_tag": null, "holdout_pai": null},
      "evaluation": {"M": 3, "score_sign": null, "granularity": "type"},
      "ablation": {"seeds": [1, 2, 3, 4, 5]}
    }

Unknown keys anywhere are rejected so typos fail before any work starts.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

from .databench import BenchmarkSpec, grandtest_toy_spec
from .losses import LossConfig
from .mining import MinerConfig
from .protocols import PipelineConfig, ProtocolSpec
from .training import TrainConfig


class ConfigError(ValueError):
    pass


_OPTIMIZER_KEYS = ("learning_rate", "momentum", "epochs", "steps_per_epoch", "grad_clip", "center_rate", "early_stop_patience")

DEFAULTS: dict = {
    "seed": 0,
    "out": "runs/default",
    "data": {"spec": grandtest_toy_spec().to_dict()},
    "encoder": {"hidden": [64, 64], "output_dim": 32},
    "loss": {"name": "anomaly", "margin": 0.2, "sigma": 0.3, "lam": 1.0, "softmax_sign": "corrected"},
    "miner": {
        "mode": "anomaly",
        "pool_size": 128,
        "triplets_per_batch": 12,
        "fallback": "hardest",
        "min_genuine_fraction": 0.25,
    },
    "optimizer": {
        "learning_rate": 0.01,
        "momentum": 0.9,
        "epochs": 100,
        "steps_per_epoch": None,
        "grad_clip": 1.0,
        "center_rate": 0.5,
        "early_stop_patience": None,
    },
    "protocol": {"kind": "intra", "holdout_tag": None, "holdout_pai": None},
    "evaluation": {"M": 3, "score_sign": None, "granularity": "type"},
    "ablation": {"seeds": [1, 2, 3, 4, 5]},
}


def _merge(base: dict, update: dict, where: str) -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        if key not in base:
            raise ConfigError(f"unknown config key {where}{key!r}; allowed: {sorted(base)}")
        if isinstance(base[key], dict) and key != "data":
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where}{key!r} must be an object")
            out[key] = _merge(base[key], value, f"{where}{key}.")
        else:
            out[key] = copy.deepcopy(value)
    return out


def _check_data(data: Any) -> dict:
    if not isinstance(data, dict):
        raise ConfigError("config key 'data' must be an object")
    keys = set(data)
    if keys == {"spec"}:
        try:
            spec = BenchmarkSpec.from_dict({**grandtest_toy_spec().to_dict(), **data["spec"]})
            spec.validate()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid benchmark spec: {exc}") from None
        return {"spec": spec.to_dict()}
    if "path" in keys and keys <= {"path", "format"}:
        return {"path": str(data["path"]), "format": data.get("format")}
    raise ConfigError("'data' needs either {'spec': {...}} or {'path': ..., 'format': ...}")


@dataclass
class RunConfig:
    """Fully resolved configuration; ``raw`` is the canonical dict echoed into manifests."""

    raw: dict

    @classmethod
    def resolve(cls, file_values: Optional[dict] = None, overrides: Optional[dict] = None) -> "RunConfig":
        """Defaults, then file values, then flag overrides (dotted keys, e.g. ``loss.name``)."""
        merged = _merge(DEFAULTS, file_values or {}, "")
        for dotted, value in (overrides or {}).items():
            if value is None:
                continue
            *parents, leaf = dotted.split(".")
            node = merged
            for p in parents:
                node = node[p]
            node[leaf] = value
        merged["data"] = _check_data(merged["data"])
        cfg = cls(merged)
        cfg.pipeline()  # surface invalid combinations now
        cfg.protocol()
        return cfg

    @classmethod
    def load(cls, path, overrides: Optional[dict] = None) -> "RunConfig":
        path = Path(path)
        try:
            values = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(values, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        return cls.resolve(values, overrides)

    # -- views onto library types ---------------------------------------------

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def out(self) -> Path:
        return Path(self.raw["out"])

    def benchmark_spec(self) -> Optional[BenchmarkSpec]:
        spec = self.raw["data"].get("spec")
        return BenchmarkSpec.from_dict(spec) if spec is not None else None

    def train_config(self, seed: Optional[int] = None, loss: Optional[str] = None, mode: Optional[str] = None) -> TrainConfig:
        r = self.raw
        loss_kw = {k: v for k, v in r["loss"].items() if k != "name"}
        miner_kw = {k: v for k, v in r["miner"].items() if k != "mode"}
        opt = {k: r["optimizer"][k] for k in _OPTIMIZER_KEYS}
        try:
            return TrainConfig(
                loss=loss or r["loss"]["name"],
                mode=mode or r["miner"]["mode"],
                loss_cfg=LossConfig(**loss_kw),
                miner=MinerConfig(**miner_kw),
                hidden=tuple(r["encoder"]["hidden"]),
                output_dim=int(r["encoder"]["output_dim"]),
                seed=self.seed if seed is None else seed,
                **opt,
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def pipeline(self, **kw) -> PipelineConfig:
        ev = self.raw["evaluation"]
        if int(ev["M"]) < 1:
            raise ConfigError("evaluation.M must be at least 1")
        if ev["granularity"] not in ("type", "subtype"):
            raise ConfigError("evaluation.granularity must be 'type' or 'subtype'")
        if ev["score_sign"] not in (None, "paper", "corrected"):
            raise ConfigError("evaluation.score_sign must be null, 'paper' or 'corrected'")
        return PipelineConfig(self.train_config(**kw), int(ev["M"]), ev["score_sign"], ev["granularity"])

    def protocol(self) -> ProtocolSpec:
        try:
            return ProtocolSpec(**self.raw["protocol"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def ablation_seeds(self) -> list:
        return [int(s) for s in self.raw["ablation"]["seeds"]]

    def dumps(self) -> str:
        return canonical_json(self.raw)

    def sha256(self) -> str:
        return sha256_text(self.dumps())


def canonical_json(value) -> str:
    return json.dumps(value, sort_keys=True, indent=2, allow_nan=False) + "\n"


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
