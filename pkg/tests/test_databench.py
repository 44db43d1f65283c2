import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metricpad.core import Label, Sample
from metricpad.databench import (
    AttackClassSpec,
    Benchmark,
    BenchmarkSpec,
    DataError,
    DomainSpec,
    class_means,
    dumps,
    export,
    features_of,
    generate,
    grandtest_toy_spec,
    ingest,
    loads,
)


def small_spec(seed=0, **kw):
    attacks = (
        AttackClassSpec("print", "low", 2.0, 0.5, 40),
        AttackClassSpec("replay", "high", 2.0, 0.5, 37),
        AttackClassSpec("mask", "silicone", 2.0, 0.5, 23),
    )
    base = dict(seed=seed, input_dim=5, genuine_count=60, attack_classes=attacks, domains=(DomainSpec("x", 0.1), DomainSpec("y", 0.1)))
    base.update(kw)
    return BenchmarkSpec(**base)


def assert_same(a: Benchmark, b: Benchmark, atol=0.0):
    assert [s.id for s in a.samples] == [s.id for s in b.samples]
    for x, y in zip(a.samples, b.samples):
        assert (x.label, x.split, x.domain_tag) == (y.label, y.split, y.domain_tag)
        if atol:
            np.testing.assert_allclose(x.features, y.features, rtol=0, atol=atol)
        else:
            assert x.features.tobytes() == y.features.tobytes()


def test_generate_deterministic():
    assert_same(generate(small_spec(3)), generate(small_spec(3)))
    a, b = generate(small_spec(3)), generate(small_spec(4))
    assert a.samples[0].features.tobytes() != b.samples[0].features.tobytes()


def test_label_bookkeeping():
    bench = generate(small_spec())
    keys = set(bench.class_counts())
    assert keys == {"genuine", "print/low", "replay/high", "mask/silicone"}
    assert bench.class_counts()["replay/high"] == 37
    assert bench.input_dim == 5
    assert bench.provenance["seed"] == 0


def test_nearest_centroid_separates_well_spread_classes():
    attacks = tuple(AttackClassSpec("print", s, 4.0, 0.1, 200) for s in ("low", "medium", "high"))
    spec = BenchmarkSpec(
        seed=1, input_dim=8, genuine_count=600, genuine_spread=0.05, genuine_center_scale=0.0,
        genuine_components=1, attack_classes=attacks, domains=(DomainSpec("d", 0.0),), subtype_jitter=1.0,
    )
    bench = generate(spec)
    means = class_means(spec)
    centroids = {"genuine": np.mean(means["genuine"], axis=0)}
    centroids.update({k: v for k, v in means.items() if k != "genuine"})
    names = list(centroids)
    c = np.stack([centroids[k] for k in names])
    x = features_of(bench.samples)
    pred = np.argmin(((x[:, None] - c[None]) ** 2).sum(2), axis=1)
    truth = [s.label.class_key for s in bench.samples]
    acc = np.mean([names[p] == t for p, t in zip(pred, truth)])
    assert acc >= 0.99


def test_stratified_splits():
    spec = small_spec(5)
    bench = generate(spec)
    for key, total in bench.class_counts().items():
        for frac, split in zip(spec.split_fractions, ("train", "dev", "test")):
            got = bench.class_counts(split)[key]
            assert abs(got - frac * total) <= 1
        # domains are balanced inside each split as well
        for split in ("train", "dev", "test"):
            tags = [s.domain_tag for s in bench.split(split) if s.label.class_key == key]
            assert abs(tags.count("x") - tags.count("y")) <= 1


def test_degenerate_specs():
    with pytest.raises(ValueError):
        small_spec(genuine_count=0).validate()
    with pytest.raises(ValueError):
        small_spec(split_fractions=(0.5, 0.5, 0.1)).validate()
    with pytest.raises(ValueError):
        small_spec(attack_classes=()).validate()
    with pytest.raises(ValueError):
        BenchmarkSpec.from_dict({**small_spec().to_dict(), "bogus": 1})


def test_spec_dict_round_trip():
    spec = grandtest_toy_spec()
    assert BenchmarkSpec.from_dict(json.loads(json.dumps(spec.to_dict()))) == spec


@pytest.mark.parametrize("fmt", ["jsonl", "csv"])
def test_export_ingest_round_trip(tmp_path, fmt):
    bench = generate(small_spec(2))
    p1 = export(bench, tmp_path / f"a.{fmt}")
    back = ingest(p1)
    assert_same(bench, back)  # shortest round-trip floats reproduce the bits
    assert_same(bench, back, atol=1e-9)
    p2 = export(back, tmp_path / f"b.{fmt}")
    assert p1.read_bytes() == p2.read_bytes()


def test_single_sample_export(tmp_path):
    s = Sample("only", np.array([0.25, -1.5]), Label.attack("mask", "paper"), "d", "dev")
    text = dumps(Benchmark([s]), "csv")
    lines = text.splitlines()
    assert lines[0] == "id,split,label,pai_type,pai_subtype,domain_tag,features_0,features_1"
    assert lines[1] == "only,dev,attack,mask,paper,d,0.25,-1.5"
    assert len(lines) == 2


def test_three_row_jsonl(tmp_path):
    rows = [
        {"id": "a", "split": "train", "label": "genuine", "domain_tag": "d", "features": [1.0, 2.0]},
        {"id": "b", "split": "dev", "label": "attack", "pai_type": "print", "pai_subtype": "low", "domain_tag": "d", "features": [0.0, 1.0]},
        {"id": "c", "split": "test", "label": "attack", "pai_type": "replay", "pai_subtype": "high", "domain_tag": "e", "features": [3.0, -1.0]},
    ]
    path = tmp_path / "x.jsonl"
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    bench = ingest(path)
    assert [s.id for s in bench.samples] == ["a", "b", "c"]
    assert bench.samples[1].label == Label.attack("print", "low")
    assert bench.samples[2].split == "test" and bench.samples[2].domain_tag == "e"
    np.testing.assert_array_equal(bench.samples[2].features, [3.0, -1.0])


def test_500_sample_counts(tmp_path):
    attacks = (AttackClassSpec("print", "medium", 2.0, 0.5, 150), AttackClassSpec("mask", "rigid", 2.0, 0.5, 150))
    bench = generate(small_spec(9, genuine_count=200, attack_classes=attacks))
    assert len(bench) == 500
    for fmt in ("jsonl", "csv"):
        text = dumps(bench, fmt)
        n_rows = len(text.splitlines()) - (fmt == "csv")
        assert n_rows == 500
        back = ingest(export(bench, tmp_path / f"c.{fmt}"))
        assert back.class_counts() == bench.class_counts()
        for split in ("train", "dev", "test"):
            assert back.class_counts(split) == bench.class_counts(split)


def test_ingest_errors(tmp_path):
    empty = tmp_path / "e.jsonl"
    empty.write_text("")
    with pytest.raises(DataError, match="no samples"):
        ingest(empty)

    good = {"id": "a", "split": "train", "label": "genuine", "domain_tag": "d", "features": [1.0, 2.0]}
    bad = tmp_path / "b.jsonl"
    bad.write_text(json.dumps(good) + "\n{not json\n")
    with pytest.raises(DataError, match="line 2"):
        ingest(bad)

    short = tmp_path / "s.jsonl"
    short.write_text(json.dumps(good) + "\n" + json.dumps({**good, "id": "b", "features": [1.0]}) + "\n")
    with pytest.raises(DataError, match="length"):
        ingest(short)

    unknown = tmp_path / "u.jsonl"
    row = {**good, "label": "attack", "pai_type": "hologram", "pai_subtype": "x"}
    unknown.write_text(json.dumps(row) + "\n")
    with pytest.raises(DataError, match="mask.*print.*replay|print.*replay.*mask"):
        ingest(unknown)

    dup = tmp_path / "d.jsonl"
    dup.write_text(json.dumps(good) + "\n" + json.dumps(good) + "\n")
    with pytest.raises(DataError, match="duplicated"):
        ingest(dup)

    csv_bad = tmp_path / "c.csv"
    csv_bad.write_text("id,split,label,pai_type,pai_subtype,domain_tag,features_0\na,train,genuine,,,d,nan-ish\n")
    with pytest.raises(DataError, match="line 2"):
        ingest(csv_bad)


@settings(max_examples=15, deadline=None)
@given(
    st.integers(0, 2**31 - 1),
    st.integers(1, 6),
    st.lists(st.integers(1, 30), min_size=1, max_size=4),
    st.sampled_from(["jsonl", "csv"]),
)
def test_ingest_export_identity(seed, dim, counts, fmt):
    subs = ["low", "medium", "high", "low"]
    types = ["print", "print", "replay", "replay"]
    attacks = tuple(AttackClassSpec(types[i], subs[i], 1.5, 0.4, c) for i, c in enumerate(counts))
    spec = BenchmarkSpec(seed=seed, input_dim=dim, genuine_count=12, attack_classes=attacks, domains=(DomainSpec("d", 0.2),))
    bench = generate(spec)
    assert_same(bench, loads(dumps(bench, fmt), fmt))
