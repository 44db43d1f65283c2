"""Classifier-free genuineness scores from a handful of labelled references.

A probe is compared against ``M`` (genuine, attack) reference pairs; each
pair contributes a two-way softmax over the probe's squared distances, and
the terms are accumulated. With the corrected sign a probe close to the
genuine references scores near 1.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import Label, Sample
from .losses import SoftmaxSign, _sigmoid
from .mining import Encoder, _embed_pool

SCORE_HEADER = ["id", "score", "raw_score", "label", "pai_type"]


@dataclass
class ReferenceSets:
    genuine: np.ndarray  # (M, D), row i pairs with attack[i]
    attack: np.ndarray
    genuine_ids: tuple = ()
    attack_ids: tuple = ()
    attack_types: tuple = ()

    def __post_init__(self):
        self.genuine = np.atleast_2d(np.asarray(self.genuine, dtype=np.float64))
        self.attack = np.atleast_2d(np.asarray(self.attack, dtype=np.float64))
        if len(self.genuine) < 1 or self.genuine.shape != self.attack.shape:
            raise ValueError(
                f"reference sets must hold M >= 1 positionally paired rows, got {self.genuine.shape} and {self.attack.shape}"
            )

    @property
    def M(self) -> int:
        return len(self.genuine)

    def prototypes(self) -> dict:
        """Mean reference embedding for genuine and for each attack type present."""
        protos = {"genuine": self.genuine.mean(axis=0)}
        types = self.attack_types or ("attack",) * self.M
        for t in dict.fromkeys(types):
            rows = [i for i, x in enumerate(types) if x == t]
            protos[t] = self.attack[rows].mean(axis=0)
        return protos


def _interleave(groups: list) -> list:
    out, k = [], 0
    while any(k < len(g) for g in groups):
        out += [g[k] for g in groups if k < len(g)]
        k += 1
    return out


def build_reference_sets(encoder: Encoder, samples: Sequence[Sample], M: int = 3, rng=None) -> ReferenceSets:
    """Draw ``M`` genuine and ``M`` attack references and pair them by position.

    Attack references are spread round-robin over instrument types (and over
    domain tags within a type), so ``M`` equal to the number of types yields
    one reference per type.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    genuine = [s for s in samples if s.label.is_genuine]
    attacks = [s for s in samples if not s.label.is_genuine]
    if len(genuine) < M or len(attacks) < M:
        raise ValueError(
            f"need {M} genuine and {M} attack samples, have {len(genuine)} genuine and {len(attacks)} attack"
        )
    g_sel = [genuine[i] for i in rng.choice(len(genuine), size=M, replace=False)]

    strata = []
    for t in sorted({s.label.pai_type for s in attacks}):
        members = [s for s in attacks if s.label.pai_type == t]
        by_domain = []
        for d in sorted({s.domain_tag for s in members}):
            dm = [s for s in members if s.domain_tag == d]
            by_domain.append([dm[i] for i in rng.permutation(len(dm))])
        strata.append(_interleave(by_domain))
    h_sel = _interleave(strata)[:M]

    both = _embed_pool(encoder, g_sel + h_sel)
    return ReferenceSets(
        both[:M],
        both[M:],
        tuple(s.id for s in g_sel),
        tuple(s.id for s in h_sel),
        tuple(s.label.pai_type for s in h_sel),
    )


def posterior_raw(probes, refs: ReferenceSets, softmax_sign=SoftmaxSign.CORRECTED) -> np.ndarray:
    """Accumulated pair posteriors in ``[0, M]`` for one probe or a batch of probes."""
    sign = SoftmaxSign(softmax_sign)
    t = np.asarray(probes, dtype=np.float64)
    single = t.ndim == 1
    t = np.atleast_2d(t)
    d_g = np.sum((t[:, None, :] - refs.genuine[None, :, :]) ** 2, axis=2)
    d_h = np.sum((t[:, None, :] - refs.attack[None, :, :]) ** 2, axis=2)
    # e^{a}/(e^{a}+e^{b}) == sigmoid(a - b)
    x = d_h - d_g if sign is SoftmaxSign.CORRECTED else d_g - d_h
    raw = np.zeros(len(t))
    terms = _sigmoid(x)
    for i in range(refs.M):
        raw += terms[:, i]
    return raw[0] if single else raw


def posterior_score(probe, refs: ReferenceSets, softmax_sign=SoftmaxSign.CORRECTED) -> float:
    """Normalized score ``raw / M`` in ``[0, 1]``."""
    return float(posterior_raw(probe, refs, softmax_sign)) / refs.M


@dataclass(frozen=True)
class ScoredSample:
    id: str
    score: float
    raw_score: float
    label: Label


def score_split(encoder: Encoder, refs: ReferenceSets, samples: Sequence[Sample], softmax_sign=SoftmaxSign.CORRECTED) -> list:
    """Score every sample, preserving order."""
    if not samples:
        return []
    raw = posterior_raw(_embed_pool(encoder, samples), refs, softmax_sign)
    return [ScoredSample(s.id, float(r) / refs.M, float(r), s.label) for s, r in zip(samples, raw)]


def dumps_scores(scored: Sequence[ScoredSample]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCORE_HEADER)
    for s in scored:
        w.writerow([s.id, repr(s.score), repr(s.raw_score), s.label.kind, s.label.pai_type or ""])
    return buf.getvalue()


def write_scores(path, scored: Sequence[ScoredSample]) -> Path:
    path = Path(path)
    path.write_text(dumps_scores(scored))
    return path


def read_scores(path) -> list:
    """Read a score CSV. Attack subtypes are not stored, so labels keep only the type."""
    rows = list(csv.reader(io.StringIO(Path(path).read_text())))
    if not rows or rows[0] != SCORE_HEADER:
        raise ValueError(f"score file must start with header {','.join(SCORE_HEADER)}")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(SCORE_HEADER):
            raise ValueError(f"line {lineno}: expected {len(SCORE_HEADER)} columns")
        sid, score, raw, kind, pai = row
        label = _ScoreLabel(kind, pai or None)
        out.append(ScoredSample(sid, float(score), float(raw), label))
    return out


@dataclass(frozen=True)
class _ScoreLabel:
    """Label as recorded in score files (type-level only)."""

    kind: str
    pai_type: str = None

    def __post_init__(self):
        if self.kind not in ("genuine", "attack"):
            raise ValueError(f"label must be genuine or attack, got {self.kind!r}")
        if (self.kind == "attack") != (self.pai_type is not None):
            raise ValueError("attack rows need a pai_type; genuine rows must not have one")

    @property
    def is_genuine(self) -> bool:
        return self.kind == "genuine"

    @property
    def pai_subtype(self):
        return None
