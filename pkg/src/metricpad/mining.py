"""Semi-hard batch negative mining.

Each training step embeds a candidate pool with the current encoder, forms
anchor-positive pairs, and for every pair picks a negative uniformly among
those with ``D_ap - D_an < m``. In anomaly mode anchors and positives are
always genuine and negatives always attacks; the class-wise variant draws
pairs from any single class.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence, Union

import numpy as np

from .core import Sample, Triplet, pairwise_distances
from .encoder import EncoderParameters, embed


class Fallback(str, Enum):
    SKIP_PAIR = "skip"
    HARDEST_NEGATIVE = "hardest"


@dataclass(frozen=True)
class MinerConfig:
    pool_size: int = 128
    triplets_per_batch: int = 12
    margin: float = 0.2
    fallback: Fallback = Fallback.HARDEST_NEGATIVE
    min_genuine_fraction: float = 0.25

    def __post_init__(self):
        if self.pool_size < 3:
            raise ValueError("pool_size must be at least 3")
        if self.triplets_per_batch < 1:
            raise ValueError("triplets_per_batch must be at least 1")
        object.__setattr__(self, "fallback", Fallback(self.fallback))


@dataclass
class MiningStats:
    candidate_counts: list = field(default_factory=list)
    fallback_count: int = 0
    mean_d_ap: float = float("nan")
    mean_d_an: float = float("nan")
    size: int = 0

    @property
    def histogram(self) -> dict:
        return dict(sorted(Counter(self.candidate_counts).items()))

    def to_dict(self) -> dict:
        return {
            "size": self.size,
            "fallback_count": self.fallback_count,
            "mean_d_ap": self.mean_d_ap,
            "mean_d_an": self.mean_d_an,
            "candidate_histogram": {str(k): v for k, v in self.histogram.items()},
        }


Encoder = Union[EncoderParameters, Callable[[np.ndarray], np.ndarray]]


def _embed_pool(encoder: Encoder, pool: Sequence[Sample]) -> np.ndarray:
    x = np.stack([s.features for s in pool])
    if isinstance(encoder, EncoderParameters):
        return embed(encoder, x)
    return np.asarray(encoder(x), dtype=np.float64)


def _pick_negative(dist_row, d_ap, negatives, cfg, rng):
    """Return (negative index or None, candidate count, used_fallback)."""
    d_an = dist_row[negatives]
    ok = negatives[d_ap - d_an < cfg.margin]
    if len(ok):
        return int(ok[rng.integers(len(ok))]), len(ok), False
    if cfg.fallback is Fallback.HARDEST_NEGATIVE:
        return int(negatives[np.argmin(d_an)]), 0, True
    return None, 0, False


def _finish(triplets, dist, stats):
    stats.size = len(triplets)
    if triplets:
        stats.mean_d_ap = float(np.mean([dist[t.anchor, t.positive] for t in triplets]))
        stats.mean_d_an = float(np.mean([dist[t.anchor, t.negative] for t in triplets]))
    return triplets, stats


def mine_from_embeddings(emb: np.ndarray, is_genuine: Sequence[bool], cfg: MinerConfig, rng):
    """Anomaly-mode mining on precomputed pool embeddings."""
    is_genuine = np.asarray(is_genuine, dtype=bool)
    genuine = np.flatnonzero(is_genuine)
    attacks = np.flatnonzero(~is_genuine)
    if len(genuine) < 2 or len(attacks) < 1:
        raise ValueError(
            f"pool needs >= 2 genuine and >= 1 attack samples, got {len(genuine)} and {len(attacks)}"
        )
    dist = pairwise_distances(emb)
    g = len(genuine)
    n_pairs = g * (g - 1)
    b = cfg.triplets_per_batch
    picks = rng.choice(n_pairs, size=b, replace=n_pairs < b)
    stats = MiningStats()
    triplets = []
    for k in picks:
        i, j = divmod(int(k), g - 1)
        j += j >= i
        a, p = int(genuine[i]), int(genuine[j])
        neg, count, fell_back = _pick_negative(dist[a], dist[a, p], attacks, cfg, rng)
        stats.candidate_counts.append(count)
        stats.fallback_count += fell_back
        if neg is not None:
            triplets.append(Triplet(a, p, neg))
    return _finish(triplets, dist, stats)


def mine_batch(encoder: Encoder, pool: Sequence[Sample], cfg: MinerConfig, rng):
    """Mine ``cfg.triplets_per_batch`` triplets with genuine anchors and positives.

    Returns:
      (triplets, stats) with triplet indices into ``pool``.
    """
    labels = [s.label.is_genuine for s in pool]
    if sum(labels) < 2 or sum(labels) == len(labels):
        raise ValueError("pool needs >= 2 genuine and >= 1 attack samples")
    return mine_from_embeddings(_embed_pool(encoder, pool), labels, cfg, rng)


def mine_classwise_from_embeddings(emb: np.ndarray, class_keys: Sequence, cfg: MinerConfig, rng):
    """Class-wise mining: pick a class uniformly, then an ordered pair inside it."""
    keys = np.asarray([str(k) for k in class_keys])
    classes = sorted(set(keys))
    if len(classes) < 2:
        raise ValueError("class-wise mining needs at least two classes in the pool")
    members = {c: np.flatnonzero(keys == c) for c in classes}
    eligible = [c for c in classes if len(members[c]) >= 2]
    if not eligible:
        raise ValueError("no class has two samples to form an anchor-positive pair")
    dist = pairwise_distances(emb)
    stats = MiningStats()
    triplets = []
    for _ in range(cfg.triplets_per_batch):
        c = eligible[rng.integers(len(eligible))]
        idx = members[c]
        i, j = rng.choice(len(idx), size=2, replace=False)
        a, p = int(idx[i]), int(idx[j])
        negatives = np.flatnonzero(keys != c)
        neg, count, fell_back = _pick_negative(dist[a], dist[a, p], negatives, cfg, rng)
        stats.candidate_counts.append(count)
        stats.fallback_count += fell_back
        if neg is not None:
            triplets.append(Triplet(a, p, neg))
    return _finish(triplets, dist, stats)


def mine_batch_classwise(encoder: Encoder, pool: Sequence[Sample], cfg: MinerConfig, rng):
    """Baseline mining where every class, genuine or attack, can anchor a triplet."""
    return mine_classwise_from_embeddings(
        _embed_pool(encoder, pool), [s.label.class_key for s in pool], cfg, rng
    )


def draw_pool(samples: Sequence[Sample], cfg: MinerConfig, rng) -> list:
    """Candidate pool for one step, without replacement.

    Genuine samples take their natural share of the pool but never less than
    ``cfg.min_genuine_fraction``; attack slots are spread round-robin over
    attack classes so rare classes still appear.
    """
    genuine = [s for s in samples if s.label.is_genuine]
    by_class: dict = {}
    for s in samples:
        if not s.label.is_genuine:
            by_class.setdefault(s.label.class_key, []).append(s)
    if len(genuine) < 2 or not by_class:
        raise ValueError("training data needs >= 2 genuine samples and >= 1 attack sample")
    size = min(cfg.pool_size, len(samples))
    share = max(cfg.min_genuine_fraction, len(genuine) / len(samples))
    n_gen = min(len(genuine), max(2, int(np.ceil(share * size))))
    n_att = min(size - n_gen, sum(len(v) for v in by_class.values()))
    n_att = max(n_att, 1)

    classes = sorted(by_class)
    quota = dict.fromkeys(classes, 0)
    remaining = n_att
    while remaining:
        progressed = False
        for c in classes:
            if remaining and quota[c] < len(by_class[c]):
                quota[c] += 1
                remaining -= 1
                progressed = True
        if not progressed:
            break
    pool = [genuine[i] for i in rng.choice(len(genuine), size=n_gen, replace=False)]
    for c in classes:
        members = by_class[c]
        pool += [members[i] for i in rng.choice(len(members), size=quota[c], replace=False)]
    return pool
