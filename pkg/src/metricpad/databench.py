"""Synthetic open-set benchmarks and feature-vector dataset I/O.

Genuine samples come from a compact Gaussian mixture near the origin; each
attack class is a broader Gaussian displaced along its own direction, with
subtypes of one instrument type sharing a common direction. Domain tags add
a per-domain mean shift to every sample of that domain.
"""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import PAI_TAXONOMY, SPLITS, Label, Sample

GENERATOR_VERSION = "1"
FORMATS = ("jsonl", "csv")


class DataError(ValueError):
    """Malformed or inconsistent benchmark data."""


@dataclass(frozen=True)
class AttackClassSpec:
    pai_type: str
    pai_subtype: str
    mean_scale: float
    cov_scale: float
    count: int


@dataclass(frozen=True)
class DomainSpec:
    tag: str
    offset_scale: float


@dataclass(frozen=True)
class BenchmarkSpec:
    seed: int = 7
    input_dim: int = 8
    genuine_components: int = 2
    genuine_spread: float = 0.3
    genuine_count: int = 2000
    genuine_center_scale: float = 0.6
    attack_classes: tuple = ()
    domains: tuple = (DomainSpec("domain-a", 0.0),)
    split_fractions: tuple = (0.5, 0.2, 0.3)
    subtype_jitter: float = 0.35

    def __post_init__(self):
        object.__setattr__(
            self,
            "attack_classes",
            tuple(a if isinstance(a, AttackClassSpec) else AttackClassSpec(**a) for a in self.attack_classes),
        )
        object.__setattr__(
            self, "domains", tuple(d if isinstance(d, DomainSpec) else DomainSpec(**d) for d in self.domains)
        )
        object.__setattr__(self, "split_fractions", tuple(float(f) for f in self.split_fractions))
        self.validate()

    def validate(self) -> None:
        fr = self.split_fractions
        if len(fr) != 3 or any(f <= 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise DataError(f"split fractions must be three positive numbers summing to 1, got {fr}")
        if self.input_dim < 1:
            raise DataError("input_dim must be positive")
        if self.genuine_components < 1 or self.genuine_count < 1:
            raise DataError("need at least one genuine component and one genuine sample")
        if not self.attack_classes:
            raise DataError("need at least one attack class")
        if not self.domains:
            raise DataError("need at least one domain")
        for a in self.attack_classes:
            Label.attack(a.pai_type, a.pai_subtype)
            if a.count < 1:
                raise DataError(f"attack class {a.pai_type}/{a.pai_subtype} has zero samples")
        keys = [(a.pai_type, a.pai_subtype) for a in self.attack_classes]
        if len(set(keys)) != len(keys):
            raise DataError("attack classes must be distinct")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "BenchmarkSpec":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise DataError(f"unknown benchmark keys: {sorted(unknown)}")
        for k in ("attack_classes", "domains", "split_fractions"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


def grandtest_toy_spec(seed: int = 7) -> BenchmarkSpec:
    """Default desk-scale benchmark: nine attack leaves, three domains, 50/20/30 splits."""
    scales = {"print": 2.2, "replay": 2.4, "mask": 2.0}
    covs = {"low": 0.8, "medium": 0.7, "high": 0.6, "paper": 0.8, "rigid": 0.7, "silicone": 0.6}
    attacks = tuple(
        AttackClassSpec(t, s, scales[t], covs[s], 300) for t, subs in PAI_TAXONOMY.items() for s in subs
    )
    domains = (DomainSpec("domain-a", 0.3), DomainSpec("domain-b", 0.3), DomainSpec("domain-c", 0.3))
    return BenchmarkSpec(seed=seed, attack_classes=attacks, domains=domains)


@dataclass
class Benchmark:
    samples: list
    spec: Optional[BenchmarkSpec] = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = Counter(s.id for s in self.samples)
        dup = [k for k, c in ids.items() if c > 1]
        if dup:
            raise DataError(f"duplicated sample ids: {dup[:5]}")
        dims = {s.features.shape[0] for s in self.samples}
        if len(dims) > 1:
            raise DataError(f"inconsistent feature lengths: {sorted(dims)}")

    @property
    def input_dim(self) -> int:
        return self.samples[0].features.shape[0]

    def split(self, name: str) -> list:
        return [s for s in self.samples if s.split == name]

    def class_counts(self, split: Optional[str] = None) -> Counter:
        return Counter(s.label.class_key for s in self.samples if split is None or s.split == split)

    def __len__(self):
        return len(self.samples)


def features_of(samples: Sequence[Sample]) -> np.ndarray:
    if not samples:
        return np.zeros((0, 0))
    return np.stack([s.features for s in samples])


def _unit(rng, dim):
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def _split_counts(n: int, fractions) -> list[int]:
    # largest remainder so the counts sum to n
    raw = [f * n for f in fractions]
    counts = [int(np.floor(r)) for r in raw]
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    return counts


def class_means(spec: BenchmarkSpec) -> dict:
    """Cluster centers the generator uses (before domain offsets), keyed by class."""
    return _layout(spec, np.random.default_rng(spec.seed))[0]


def _layout(spec: BenchmarkSpec, rng):
    dim = spec.input_dim
    genuine_means = [spec.genuine_center_scale * _unit(rng, dim) for _ in range(spec.genuine_components)]
    type_dirs = {}
    means = {"genuine": genuine_means}
    for a in spec.attack_classes:
        if a.pai_type not in type_dirs:
            type_dirs[a.pai_type] = _unit(rng, dim)
        d = type_dirs[a.pai_type] + spec.subtype_jitter * _unit(rng, dim)
        means[f"{a.pai_type}/{a.pai_subtype}"] = a.mean_scale * d / np.linalg.norm(d)
    offsets = {d.tag: d.offset_scale * _unit(rng, dim) for d in spec.domains}
    return means, offsets


def generate(spec: BenchmarkSpec) -> Benchmark:
    """Draw a benchmark; identical specs give bitwise-identical samples."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    means, offsets = _layout(spec, rng)
    tags = [d.tag for d in spec.domains]
    dim = spec.input_dim

    groups = []
    comp = np.arange(spec.genuine_count) % spec.genuine_components
    g_means = np.stack(means["genuine"])[comp]
    g_feats = g_means + spec.genuine_spread * rng.standard_normal((spec.genuine_count, dim))
    groups.append(("genuine", Label.genuine(), g_feats))
    for a in spec.attack_classes:
        key = f"{a.pai_type}/{a.pai_subtype}"
        feats = means[key] + a.cov_scale * rng.standard_normal((a.count, dim))
        groups.append((key, Label.attack(a.pai_type, a.pai_subtype), feats))

    samples = []
    for key, label, feats in groups:
        n = len(feats)
        order = rng.permutation(n)
        n_train, n_dev, _ = _split_counts(n, spec.split_fractions)
        for rank, idx in enumerate(order):
            tag = tags[rank % len(tags)]
            split = "train" if rank < n_train else "dev" if rank < n_train + n_dev else "test"
            samples.append(
                Sample(
                    id=f"{key.replace('/', '-')}-{idx:05d}",
                    features=feats[idx] + offsets[tag],
                    label=label,
                    domain_tag=tag,
                    split=split,
                )
            )
    provenance = {"generator": "metricpad.databench", "version": GENERATOR_VERSION, "seed": spec.seed}
    return Benchmark(samples, spec, provenance)


# -- serialization ----------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def _row_dict(s: Sample) -> dict:
    row = {"id": s.id, "split": s.split, "label": s.label.kind}
    if not s.label.is_genuine:
        row["pai_type"] = s.label.pai_type
        row["pai_subtype"] = s.label.pai_subtype
    row["domain_tag"] = s.domain_tag
    row["features"] = [float(x) for x in s.features]
    return row


def dumps(benchmark: Benchmark, fmt: str) -> str:
    if fmt == "jsonl":
        return "".join(json.dumps(_row_dict(s)) + "\n" for s in benchmark.samples)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        n = benchmark.input_dim if benchmark.samples else 0
        writer.writerow(
            ["id", "split", "label", "pai_type", "pai_subtype", "domain_tag"] + [f"features_{i}" for i in range(n)]
        )
        for s in benchmark.samples:
            lab = s.label
            writer.writerow(
                [s.id, s.split, lab.kind, lab.pai_type or "", lab.pai_subtype or "", s.domain_tag]
                + [_fmt(x) for x in s.features]
            )
        return buf.getvalue()
    raise DataError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def export(benchmark: Benchmark, path, fmt: Optional[str] = None) -> Path:
    """Write ``benchmark`` in canonical form (sample order preserved)."""
    path = Path(path)
    fmt = fmt or _guess_format(path)
    path.write_text(dumps(benchmark, fmt))
    return path


def _guess_format(path: Path) -> str:
    suffix = path.suffix.lstrip(".").lower()
    if suffix not in FORMATS:
        raise DataError(f"cannot infer format from {path.name!r}; pass one of {FORMATS}")
    return suffix


def _label_from(kind, pai_type, pai_subtype, lineno) -> Label:
    pai_type = pai_type or None
    pai_subtype = pai_subtype or None
    if kind == "attack" and pai_type not in PAI_TAXONOMY:
        raise DataError(f"line {lineno}: unknown pai_type {pai_type!r}; allowed values: {sorted(PAI_TAXONOMY)}")
    try:
        return Label(kind, pai_type, pai_subtype)
    except ValueError as exc:
        raise DataError(f"line {lineno}: {exc}") from None


def _make_sample(row: dict, lineno: int, feats) -> Sample:
    for key in ("id", "split", "label", "domain_tag"):
        if key not in row or row[key] in (None, ""):
            raise DataError(f"line {lineno}: missing field {key!r}")
    if row["split"] not in SPLITS:
        raise DataError(f"line {lineno}: split must be one of {SPLITS}, got {row['split']!r}")
    label = _label_from(row["label"], row.get("pai_type"), row.get("pai_subtype"), lineno)
    try:
        arr = np.array(feats, dtype=np.float64)
    except (TypeError, ValueError):
        raise DataError(f"line {lineno}: features are not numeric") from None
    if arr.ndim != 1 or arr.size == 0:
        raise DataError(f"line {lineno}: features must be a non-empty list of numbers")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"line {lineno}: non-finite feature value")
    return Sample(str(row["id"]), arr, label, str(row["domain_tag"]), row["split"])


def _parse_jsonl(lines: Iterable[str]) -> list:
    samples = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"line {lineno}: malformed JSON ({exc.msg})") from None
        if not isinstance(row, dict) or "features" not in row:
            raise DataError(f"line {lineno}: expected an object with a 'features' list")
        samples.append(_make_sample(row, lineno, row["features"]))
    return samples


def _parse_csv(text: str) -> list:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        return []
    fixed = ["id", "split", "label", "pai_type", "pai_subtype", "domain_tag"]
    if header[:6] != fixed:
        raise DataError(f"line 1: header must start with {fixed}")
    n = len(header) - 6
    if header[6:] != [f"features_{i}" for i in range(n)]:
        raise DataError("line 1: feature columns must be features_0..features_{N-1}")
    samples = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DataError(f"line {lineno}: expected {len(header)} columns, got {len(row)}")
        samples.append(_make_sample(dict(zip(fixed, row[:6])), lineno, row[6:]))
    return samples


def loads(text: str, fmt: str) -> Benchmark:
    if fmt == "jsonl":
        samples = _parse_jsonl(text.splitlines())
    elif fmt == "csv":
        samples = _parse_csv(text)
    else:
        raise DataError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    if not samples:
        raise DataError("no samples found")
    dims = {s.features.shape[0] for s in samples}
    if len(dims) > 1:
        first = samples[0].features.shape[0]
        for lineno, s in enumerate(samples, start=1):
            if s.features.shape[0] != first:
                raise DataError(
                    f"sample {s.id!r}: feature length {s.features.shape[0]} differs from {first}"
                )
    return Benchmark(samples, None, {"source": fmt})


def ingest(path, fmt: Optional[str] = None) -> Benchmark:
    """Read a JSONL or CSV feature file into a :class:`Benchmark`."""
    path = Path(path)
    fmt = fmt or _guess_format(path)
    bench = loads(path.read_text(), fmt)
    bench.provenance = {"source": str(path), "format": fmt}
    return bench
