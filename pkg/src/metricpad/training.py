"""Seeded training loop: draw pool -> mine -> loss -> backprop -> momentum step."""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import UNIT_NORM_ATOL, Sample
from .encoder import (
    EncoderParameters,
    NonFiniteGradientError,
    OptimizerState,
    backward,
    embed,
    forward_batch,
    init_encoder,
    sgd_momentum_step,
)
from .losses import LOSS_NAMES, ClassCenters, LossConfig, center_objective, triplet_objective, update_centers
from .mining import MinerConfig, draw_pool, mine_batch, mine_batch_classwise

log = logging.getLogger(__name__)

MODES = ("anomaly", "classwise")


class NonFiniteLossError(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "anomaly"
    mode: str = "anomaly"
    loss_cfg: LossConfig = LossConfig()
    miner: MinerConfig = MinerConfig()
    hidden: tuple = (64, 64)
    output_dim: int = 32
    learning_rate: float = 0.01
    momentum: float = 0.9
    epochs: int = 100
    steps_per_epoch: Optional[int] = None
    center_rate: float = 0.5
    grad_clip: Optional[float] = 1.0
    early_stop_patience: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.loss not in LOSS_NAMES:
            raise ValueError(f"unknown loss {self.loss!r}; choose from {LOSS_NAMES}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mining mode {self.mode!r}; choose from {MODES}")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["loss_cfg"]["softmax_sign"] = self.loss_cfg.softmax_sign.value
        d["miner"]["fallback"] = self.miner.fallback.value
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class TrainResult:
    params: EncoderParameters
    initial_params: EncoderParameters
    history: list
    batch_class_counts: Counter = field(default_factory=Counter)
    stopped_epoch: Optional[int] = None


def _rng_streams(seed: int):
    init_ss, pool_ss, mine_ss = np.random.SeedSequence(seed).spawn(3)
    return (np.random.default_rng(s) for s in (init_ss, pool_ss, mine_ss))


def steps_for(n_train: int, cfg: TrainConfig) -> int:
    """Default steps per epoch: enough batches of ``3b`` images to cover the train split once."""
    if cfg.steps_per_epoch is not None:
        return int(cfg.steps_per_epoch)
    return max(1, math.ceil(n_train / (3 * cfg.miner.triplets_per_batch)))


def _center_key(sample: Sample, mode: str) -> str:
    if mode == "classwise":
        return sample.label.class_key
    return "genuine" if sample.label.is_genuine else "attack"


def train(train_samples: Sequence[Sample], cfg: TrainConfig, dev_samples: Sequence[Sample] = ()) -> TrainResult:
    """Train an encoder on ``train_samples``.

    The run is a pure function of ``(train_samples, cfg)``: the seed drives
    three independent streams for initialization, pool draws and mining, so
    variants sharing a seed see identical pools at every step.
    """
    train_samples = list(train_samples)
    n_gen = sum(s.label.is_genuine for s in train_samples)
    if n_gen < 2:
        raise ValueError(f"train split needs >= 2 genuine samples, has {n_gen}")
    if n_gen == len(train_samples):
        raise ValueError("train split has no attack samples; anomaly training needs at least one")

    init_rng, pool_rng, mine_rng = _rng_streams(cfg.seed)
    params = init_encoder(train_samples[0].features.shape[0], cfg.hidden, cfg.output_dim, init_rng)
    initial = params.copy()
    state = OptimizerState.for_params(params, cfg.learning_rate, cfg.momentum)
    objective = None if cfg.loss == "center" else triplet_objective(cfg.loss, cfg.loss_cfg)
    centers = ClassCenters({}, cfg.center_rate)
    miner = mine_batch_classwise if cfg.mode == "classwise" else mine_batch
    n_steps = steps_for(len(train_samples), cfg)
    probe = np.stack([s.features for s in train_samples[:32]])

    history = []
    seen = Counter()
    best, best_epoch, stopped = math.inf, 0, None
    for epoch in range(cfg.epochs):
        losses, fallbacks, n_trip, d_ap, d_an = [], 0, 0, [], []
        candidates = Counter()
        for _ in range(n_steps):
            pool = draw_pool(train_samples, cfg.miner, pool_rng)
            triplets, stats = miner(params, pool, cfg.miner, mine_rng)
            fallbacks += stats.fallback_count
            candidates.update(stats.candidate_counts)
            if not triplets:
                continue
            n_trip += len(triplets)
            d_ap.append(stats.mean_d_ap)
            d_an.append(stats.mean_d_an)
            members = [[pool[getattr(t, r)] for t in triplets] for r in ("anchor", "positive", "negative")]
            for group in members:
                seen.update(s.label.class_key for s in group)
            x = np.stack([s.features for group in members for s in group])
            emb, cache = forward_batch(params, x)
            b = len(triplets)
            a, p, n = emb[:b], emb[b : 2 * b], emb[2 * b :]
            if cfg.loss == "center":
                ids = {r: [_center_key(s, cfg.mode) for s in g] for r, g in zip(("anchor", "positive", "negative"), members)}
                all_ids = ids["anchor"] + ids["positive"] + ids["negative"]
                for cid in dict.fromkeys(all_ids):
                    if cid not in centers.centers:
                        sel = [k for k, c in enumerate(all_ids) if c == cid]
                        centers.centers[cid] = emb[sel].mean(axis=0)
                out = center_objective(centers)(a, p, n, ids)
                centers = update_centers(centers, emb, all_ids)
            else:
                out = objective(a, p, n)
            if not math.isfinite(out.value):
                raise NonFiniteLossError(f"non-finite {cfg.loss} loss at epoch {epoch}, step {state.step}")
            grads = backward(params, cache, np.concatenate(out.gradients))
            if cfg.grad_clip is not None:
                grads = clip_by_global_norm(grads, cfg.grad_clip)
            try:
                params, state = sgd_momentum_step(params, grads, state)
            except NonFiniteGradientError as exc:
                raise NonFiniteLossError(str(exc)) from None
            losses.append(out.value)

        norms = np.linalg.norm(embed(params, probe), axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_NORM_ATOL):
            raise NonFiniteLossError(f"probe embeddings left the unit sphere at epoch {epoch}")
        state.epoch = epoch + 1
        entry = {
            "epoch": epoch + 1,
            "loss_name": cfg.loss,
            "mode": cfg.mode,
            "mean_loss": float(np.mean(losses)) if losses else float("nan"),
            "steps": len(losses),
            "triplets": n_trip,
            "fallback_count": fallbacks,
            "mean_d_ap": float(np.mean(d_ap)) if d_ap else float("nan"),
            "mean_d_an": float(np.mean(d_an)) if d_an else float("nan"),
            "candidate_histogram": {str(k): v for k, v in sorted(candidates.items())},
        }
        if cfg.early_stop_patience is not None and dev_samples:
            entry["dev_aer"] = _dev_aer(params, train_samples, dev_samples, cfg.seed)
            if entry["dev_aer"] < best:
                best, best_epoch = entry["dev_aer"], epoch
        history.append(entry)
        log.debug("epoch %d: %s", epoch + 1, entry)
        if cfg.early_stop_patience is not None and dev_samples and epoch - best_epoch >= cfg.early_stop_patience:
            stopped = epoch + 1
            break
    return TrainResult(params, initial, history, seen, stopped)


def clip_by_global_norm(grads: EncoderParameters, max_norm: float) -> EncoderParameters:
    """Rescale all gradients together so their joint L2 norm is at most ``max_norm``."""
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.arrays()))
    if not math.isfinite(norm) or norm <= max_norm:
        return grads
    scale = max_norm / norm
    return EncoderParameters([w * scale for w in grads.weights], [b * scale for b in grads.biases], check_finite=False)


def _dev_aer(params, train_samples, dev_samples, seed) -> float:
    from .fewshot import build_reference_sets, score_split
    from .metrics import ScoreSet, eer_threshold

    refs = build_reference_sets(params, train_samples, 3, np.random.default_rng(seed))
    scores = ScoreSet.from_scored(score_split(params, refs, dev_samples))
    return eer_threshold(scores)[1]
