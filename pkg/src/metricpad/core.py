"""Shared data types and squared-distance geometry for embeddings."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

# Two-tier presentation attack instrument taxonomy.
PAI_TAXONOMY: dict[str, tuple[str, ...]] = {
    "print": ("low", "medium", "high"),
    "replay": ("low", "medium", "high"),
    "mask": ("paper", "rigid", "silicone"),
}

SPLITS = ("train", "dev", "test")

UNIT_NORM_ATOL = 1e-6
_ZERO_NORM = 1e-12


@dataclass(frozen=True, order=True)
class Label:
    """Genuine, or attack with its instrument type and subtype."""

    kind: str
    pai_type: Optional[str] = None
    pai_subtype: Optional[str] = None

    def __post_init__(self):
        if self.kind == "genuine":
            if self.pai_type is not None or self.pai_subtype is not None:
                raise ValueError("genuine labels carry no PAI fields")
        elif self.kind == "attack":
            if self.pai_type not in PAI_TAXONOMY:
                raise ValueError(
                    f"unknown pai_type {self.pai_type!r}; allowed: {sorted(PAI_TAXONOMY)}"
                )
            allowed = PAI_TAXONOMY[self.pai_type]
            if self.pai_subtype not in allowed:
                raise ValueError(
                    f"pai_subtype {self.pai_subtype!r} not valid for {self.pai_type!r}; "
                    f"allowed: {list(allowed)}"
                )
        else:
            raise ValueError(f"label kind must be 'genuine' or 'attack', got {self.kind!r}")

    @classmethod
    def genuine(cls) -> "Label":
        return cls("genuine")

    @classmethod
    def attack(cls, pai_type: str, pai_subtype: str) -> "Label":
        return cls("attack", pai_type, pai_subtype)

    @property
    def is_genuine(self) -> bool:
        return self.kind == "genuine"

    @property
    def class_key(self) -> str:
        """Fine-grained class name, e.g. ``genuine`` or ``print/high``."""
        if self.is_genuine:
            return "genuine"
        return f"{self.pai_type}/{self.pai_subtype}"


@dataclass(frozen=True)
class Sample:
    id: str
    features: np.ndarray
    label: Label
    domain_tag: str
    split: str

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 1:
            raise ValueError("features must be a 1-D vector")
        if not np.all(np.isfinite(feats)):
            raise ValueError(f"sample {self.id!r} has non-finite features")
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented
        return (
            self.id == other.id
            and self.label == other.label
            and self.domain_tag == other.domain_tag
            and self.split == other.split
            and np.array_equal(self.features, other.features)
        )

    __hash__ = None


@dataclass(frozen=True)
class Triplet:
    """Indices of anchor, positive and negative samples within a pool."""

    anchor: int
    positive: int
    negative: int

    def __post_init__(self):
        if len({self.anchor, self.positive, self.negative}) != 3:
            raise ValueError(f"triplet indices must be distinct: {self}")


def squared_distance(a, b) -> float:
    """Squared Euclidean distance between two vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    diff = a - b
    return float(np.dot(diff, diff))


def normalize(v) -> np.ndarray:
    """Scale ``v`` to unit Euclidean norm.

    Raises:
      ValueError: if the norm is below 1e-12 (no direction to keep).
    """
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v)
    if not norm > _ZERO_NORM:
        raise ValueError("cannot normalize a zero vector")
    return v / norm


def normalize_rows(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise :func:`normalize`; also returns the pre-normalization norms."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1)
    if np.any(~(norms > _ZERO_NORM)):
        bad = int(np.flatnonzero(~(norms > _ZERO_NORM))[0])
        raise ValueError(f"cannot normalize a zero vector (row {bad})")
    return x / norms[:, None], norms


def pairwise_distances(batch: Sequence) -> np.ndarray:
    """Matrix of squared distances between every pair of rows in ``batch``."""
    x = np.asarray(batch, dtype=np.float64)
    if x.size == 0 or len(x) == 0:
        raise ValueError("pairwise_distances needs a non-empty batch")
    if x.ndim != 2:
        raise ValueError("batch must be a list of equal-length vectors")
    diff = x[:, None, :] - x[None, :, :]
    dist = np.einsum("ijk,ijk->ij", diff, diff)
    # exact symmetry and zero diagonal, independent of summation order
    dist = np.triu(dist, 1)
    return dist + dist.T


def cross_distances(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Squared distances between every row of ``x`` and every row of ``y``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[1] != y.shape[1]:
        raise ValueError(f"dimension mismatch: {x.shape[1]} vs {y.shape[1]}")
    diff = x[:, None, :] - y[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)
