"""ISO/IEC 30107-3 style PAD metrics over genuineness scores.

Convention: a presentation is accepted as genuine when ``score >= tau``;
attacks and genuine samples tied with the threshold are both accepted.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np


@dataclass
class ScoreSet:
    scores: np.ndarray
    is_genuine: np.ndarray
    pai_types: list
    ids: list = field(default_factory=list)
    pai_subtypes: list = field(default_factory=list)
    higher_is_genuine: bool = True

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        self.is_genuine = np.asarray(self.is_genuine, dtype=bool).reshape(-1)
        if len(self.scores) != len(self.is_genuine) or len(self.pai_types) != len(self.scores):
            raise ValueError("scores, labels and pai_types must have equal length")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("scores must be finite")
        if not self.ids:
            self.ids = [str(i) for i in range(len(self.scores))]
        if not self.pai_subtypes:
            self.pai_subtypes = [None] * len(self.scores)

    @classmethod
    def from_scored(cls, scored, higher_is_genuine: bool = True) -> "ScoreSet":
        """Build from :class:`~metricpad.fewshot.ScoredSample` records."""
        return cls(
            [s.score for s in scored],
            [s.label.is_genuine for s in scored],
            [s.label.pai_type for s in scored],
            [s.id for s in scored],
            [s.label.pai_subtype for s in scored],
            higher_is_genuine,
        )

    @property
    def oriented(self) -> np.ndarray:
        """Scores flipped if needed so that higher always means genuine."""
        return self.scores if self.higher_is_genuine else -self.scores

    def transformed(self, fn) -> "ScoreSet":
        return ScoreSet(fn(self.scores), self.is_genuine, self.pai_types, self.ids, self.pai_subtypes, self.higher_is_genuine)

    def _check(self):
        if not self.is_genuine.any() or self.is_genuine.all():
            raise ValueError("score set needs both genuine and attack entries")


def error_counts(scores: ScoreSet, tau: float) -> tuple[int, int, int, int]:
    """(accepted attacks, #attacks, rejected genuine, #genuine) at ``tau``."""
    scores._check()
    s = scores.oriented
    att = s[~scores.is_genuine]
    gen = s[scores.is_genuine]
    return int(np.sum(att >= tau)), len(att), int(np.sum(gen < tau)), len(gen)


def rates_at_threshold(scores: ScoreSet, tau: float) -> tuple[float, float]:
    """(FAR, FRR) at threshold ``tau``."""
    fa, na, fr, ng = error_counts(scores, tau)
    return fa / na, fr / ng


def eer_threshold(scores: ScoreSet) -> tuple[float, float]:
    """Threshold where FAR and FRR are closest, and the EER ``(FAR + FRR) / 2`` there.

    Candidates are the midpoints between consecutive distinct scores plus
    ``-inf`` and ``+inf``. Ties prefer the smaller FAR + FRR, then the
    smaller threshold. Comparisons use exact integer arithmetic on counts.
    """
    scores._check()
    s = scores.oriented
    att = np.sort(s[~scores.is_genuine])
    gen = np.sort(s[scores.is_genuine])
    na, ng = len(att), len(gen)
    u = np.unique(s)
    cands = np.concatenate([[-np.inf], (u[:-1] + u[1:]) / 2.0, [np.inf]])
    fa = na - np.searchsorted(att, cands, side="left")
    fr = np.searchsorted(gen, cands, side="left")
    gap = np.abs(fa.astype(np.int64) * ng - fr.astype(np.int64) * na)
    total = fa.astype(np.int64) * ng + fr.astype(np.int64) * na
    # lexsort: last key is primary; candidates are already ascending in tau
    best = np.lexsort((np.arange(len(cands)), total, gap))[0]
    tau = float(cands[best])
    return tau, float((Fraction(int(fa[best]), na) + Fraction(int(fr[best]), ng)) / 2)


def _group_key(types, subtypes, i, granularity):
    if granularity == "subtype":
        return f"{types[i]}/{subtypes[i]}"
    return types[i]


def apcer_by_pai(scores: ScoreSet, tau: float, granularity: str = "type") -> dict:
    """Fraction of each instrument's attacks accepted at ``tau``, as exact rationals."""
    s = scores.oriented
    out: dict = {}
    for i in np.flatnonzero(~scores.is_genuine):
        if scores.pai_types[i] is None:
            raise ValueError(f"attack entry {scores.ids[i]!r} lacks a pai_type")
        if granularity == "subtype" and scores.pai_subtypes[i] is None:
            raise ValueError(f"attack entry {scores.ids[i]!r} lacks a pai_subtype")
        key = _group_key(scores.pai_types, scores.pai_subtypes, i, granularity)
        acc, tot = out.get(key, (0, 0))
        out[key] = (acc + int(s[i] >= tau), tot + 1)
    return {k: Fraction(a, n) for k, (a, n) in sorted(out.items())}


@dataclass
class EvalReport:
    threshold: float
    far: float
    frr: float
    hter: float
    eer: float
    test_eer: float
    apcer: dict
    apcer_max: float
    bpcer: float
    acer: float
    dev_far: float
    dev_frr: float
    aer: float
    tpr_by_class: dict
    confusion: Optional[dict] = None
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        keys = [
            "threshold", "far", "frr", "hter", "eer", "test_eer", "apcer", "apcer_max", "bpcer",
            "acer", "dev_far", "dev_frr", "aer", "tpr_by_class", "confusion", "meta",
        ]
        d = {k: getattr(self, k) for k in keys}
        if not np.isfinite(self.threshold):
            d["threshold"] = "inf" if self.threshold > 0 else "-inf"
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False, default=_jsonable) + "\n"

    def confusion_csv(self) -> str:
        if not self.confusion:
            return ""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true_class"] + list(self.confusion["predicted"]))
        for cls, row in zip(self.confusion["classes"], self.confusion["matrix"]):
            w.writerow([cls] + [repr(float(x)) for x in row])
        return buf.getvalue()


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def pad_report(dev: ScoreSet, test: ScoreSet, granularity: str = "type", confusion: Optional[dict] = None) -> EvalReport:
    """Fix the threshold at the dev EER, then measure the test split at it.

    Averages are taken on exact count ratios and rounded once, so HTER and
    ACER equal the rational means of their parts.
    """
    tau, eer = eer_threshold(dev)
    dev_far, dev_frr = exact_rates(dev, tau)
    far, frr = exact_rates(test, tau)
    apcer = apcer_by_pai(test, tau, granularity)
    apcer_max = max(apcer.values())
    tpr = {"genuine": float(1 - frr)}
    tpr.update({k: float(1 - v) for k, v in apcer.items()})
    return EvalReport(
        threshold=tau,
        far=float(far),
        frr=float(frr),
        hter=float((far + frr) / 2),
        eer=eer,
        test_eer=eer_threshold(test)[1],
        apcer={k: float(v) for k, v in apcer.items()},
        apcer_max=float(apcer_max),
        bpcer=float(frr),
        acer=float((apcer_max + frr) / 2),
        dev_far=float(dev_far),
        dev_frr=float(dev_frr),
        aer=float((dev_far + dev_frr) / 2),
        tpr_by_class=tpr,
        confusion=confusion,
    )


def exact_rates(scores: ScoreSet, tau: float) -> tuple[Fraction, Fraction]:
    fa, na, fr, ng = error_counts(scores, tau)
    return Fraction(fa, na), Fraction(fr, ng)


def confusion_matrix(embeddings: np.ndarray, true_classes: Sequence[str], prototypes: dict) -> dict:
    """Row-normalized assignment of each embedding to its nearest prototype.

    Rows are true classes (in order of first appearance after ``genuine``),
    columns are prototype classes; entry ``[i, j]`` is the fraction of class
    ``i`` assigned to prototype ``j``, so the diagonal holds per-class TPRs.
    """
    names = list(prototypes)
    protos = np.stack([prototypes[k] for k in names])
    emb = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    d = np.sum((emb[:, None, :] - protos[None, :, :]) ** 2, axis=2)
    pred = np.argmin(d, axis=1)
    classes = sorted(set(true_classes), key=lambda c: (c != "genuine", c))
    matrix = []
    true_classes = np.asarray(true_classes)
    for c in classes:
        rows = pred[true_classes == c]
        matrix.append([float(np.mean(rows == j)) for j in range(len(names))])
    return {"classes": classes, "predicted": names, "matrix": matrix}
