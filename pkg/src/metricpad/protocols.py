"""Intra and hold-out evaluation protocols: split -> train -> reference sets -> scores -> report."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .core import Sample
from .databench import Benchmark
from .encoder import embed
from .fewshot import build_reference_sets, score_split
from .losses import SoftmaxSign
from .metrics import EvalReport, ScoreSet, confusion_matrix, pad_report
from .training import TrainConfig, TrainResult, train


@dataclass(frozen=True)
class ProtocolSpec:
    """``kind`` is ``intra`` or ``holdout``; a hold-out names a domain tag or a PAI.

    ``holdout_pai`` is either a type (``"replay"``) or ``"type/subtype"``.
    """

    kind: str = "intra"
    holdout_tag: Optional[str] = None
    holdout_pai: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("intra", "holdout"):
            raise ValueError(f"protocol kind must be intra or holdout, got {self.kind!r}")
        if self.kind == "holdout" and (self.holdout_tag is None) == (self.holdout_pai is None):
            raise ValueError("a holdout protocol names exactly one of holdout_tag or holdout_pai")
        if self.kind == "intra" and (self.holdout_tag or self.holdout_pai):
            raise ValueError("an intra protocol takes no holdout")

    def matches(self, s: Sample) -> bool:
        if self.holdout_tag is not None:
            return s.domain_tag == self.holdout_tag
        if self.holdout_pai is not None:
            if s.label.is_genuine:
                return False
            ptype, _, sub = self.holdout_pai.partition("/")
            return s.label.pai_type == ptype and (not sub or s.label.pai_subtype == sub)
        return False

    def to_dict(self) -> dict:
        return {"kind": self.kind, "holdout_tag": self.holdout_tag, "holdout_pai": self.holdout_pai}


@dataclass(frozen=True)
class PipelineConfig:
    train: TrainConfig = TrainConfig()
    M: int = 3
    score_sign: Optional[SoftmaxSign] = None  # defaults to the training sign
    granularity: str = "type"

    @property
    def sign(self) -> SoftmaxSign:
        return SoftmaxSign(self.score_sign or self.train.loss_cfg.softmax_sign)


@dataclass
class ProtocolRun:
    report: EvalReport
    train_result: TrainResult
    dev_scores: list
    test_scores: list
    refs: object
    splits: dict = field(default_factory=dict)


def partition(benchmark: Benchmark, protocol: ProtocolSpec) -> dict:
    """Train/dev/test sample lists for a protocol."""
    if protocol.kind == "intra":
        parts = {name: benchmark.split(name) for name in ("train", "dev", "test")}
    else:
        held = [s for s in benchmark.samples if protocol.matches(s)]
        if not held:
            raise ValueError(f"holdout {protocol.to_dict()} matches no samples")
        rest = [s for s in benchmark.samples if not protocol.matches(s)]
        parts = {
            "train": [s for s in rest if s.split == "train"],
            "dev": [s for s in rest if s.split == "dev"],
        }
        if protocol.holdout_tag is not None:
            parts["test"] = held
        else:
            parts["test"] = [s for s in rest if s.split == "test" and s.label.is_genuine] + held
    for name in ("train", "dev"):
        kinds = {s.label.is_genuine for s in parts[name]}
        if kinds != {True, False}:
            raise ValueError(f"{name} split must keep both genuine and attack samples after the holdout")
    if not any(s.label.is_genuine for s in parts["test"]) or all(s.label.is_genuine for s in parts["test"]):
        raise ValueError("test split must contain genuine and attack samples")
    return parts


def evaluate_encoder(params, train_samples, dev, test, cfg: PipelineConfig, ref_seed: int):
    """Reference sets from ``train_samples``, then scores and report for dev/test."""
    refs = build_reference_sets(params, train_samples, cfg.M, np.random.default_rng(ref_seed))
    dev_scores = score_split(params, refs, dev, cfg.sign)
    test_scores = score_split(params, refs, test, cfg.sign)
    classes = ["genuine" if s.label.is_genuine else s.label.pai_type for s in test]
    confusion = confusion_matrix(embed(params, np.stack([s.features for s in test])), classes, refs.prototypes())
    report = pad_report(ScoreSet.from_scored(dev_scores), ScoreSet.from_scored(test_scores), cfg.granularity, confusion)
    report.meta.update(
        {
            "M": cfg.M,
            "score_sign": cfg.sign.value,
            "reference_seed": ref_seed,
            "genuine_refs": list(refs.genuine_ids),
            "attack_refs": list(refs.attack_ids),
        }
    )
    return report, refs, dev_scores, test_scores


def run_protocol(benchmark: Benchmark, protocol: ProtocolSpec, cfg: PipelineConfig = PipelineConfig()) -> ProtocolRun:
    parts = partition(benchmark, protocol)
    result = train(parts["train"], cfg.train, parts["dev"])
    report, refs, dev_scores, test_scores = evaluate_encoder(
        result.params, parts["train"], parts["dev"], parts["test"], cfg, cfg.train.seed
    )
    report.meta.update(
        {
            "protocol": protocol.to_dict(),
            "loss": cfg.train.loss,
            "mode": cfg.train.mode,
            "seed": cfg.train.seed,
            "epochs_run": len(result.history),
        }
    )
    return ProtocolRun(report, result, dev_scores, test_scores, refs, parts)


def with_seed(cfg: PipelineConfig, seed: int) -> PipelineConfig:
    return replace(cfg, train=replace(cfg.train, seed=seed))
