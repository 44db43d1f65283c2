import pytest

from metricpad.databench import AttackClassSpec, BenchmarkSpec, DomainSpec, generate
from metricpad.mining import MinerConfig
from metricpad.protocols import PipelineConfig, ProtocolSpec, partition, run_protocol, with_seed
from metricpad.training import TrainConfig


@pytest.fixture(scope="module")
def bench():
    attacks = (
        AttackClassSpec("print", "low", 2.2, 0.7, 60),
        AttackClassSpec("replay", "high", 2.4, 0.6, 60),
        AttackClassSpec("mask", "rigid", 2.0, 0.7, 60),
    )
    domains = (DomainSpec("a", 0.2), DomainSpec("b", 0.2))
    return generate(BenchmarkSpec(seed=3, genuine_count=300, attack_classes=attacks, domains=domains))


def pipe(seed=0, **kw):
    base = dict(hidden=(32,), output_dim=16, epochs=8, miner=MinerConfig(triplets_per_batch=12), seed=seed)
    return PipelineConfig(TrainConfig(**{**base, **kw}))


def test_spec_validation():
    with pytest.raises(ValueError):
        ProtocolSpec("holdout")
    with pytest.raises(ValueError):
        ProtocolSpec("holdout", holdout_tag="a", holdout_pai="print")
    with pytest.raises(ValueError):
        ProtocolSpec("intra", holdout_tag="a")
    with pytest.raises(ValueError):
        ProtocolSpec("cross")


def test_intra_partition_is_the_stored_split(bench):
    parts = partition(bench, ProtocolSpec())
    for name in ("train", "dev", "test"):
        assert [s.id for s in parts[name]] == [s.id for s in bench.split(name)]


def test_holdout_pai_partition(bench):
    parts = partition(bench, ProtocolSpec("holdout", holdout_pai="replay"))
    for name in ("train", "dev"):
        assert all(s.label.pai_type != "replay" for s in parts[name])
    test = parts["test"]
    held = [s for s in bench.samples if s.label.pai_type == "replay"]
    assert {s.id for s in test if not s.label.is_genuine} == {s.id for s in held}
    assert {s.id for s in test if s.label.is_genuine} == {s.id for s in bench.split("test") if s.label.is_genuine}


def test_holdout_tag_partition(bench):
    parts = partition(bench, ProtocolSpec("holdout", holdout_tag="b"))
    assert all(s.domain_tag == "a" for n in ("train", "dev") for s in parts[n])
    assert {s.id for s in parts["test"]} == {s.id for s in bench.samples if s.domain_tag == "b"}


def test_holdout_errors(bench):
    with pytest.raises(ValueError, match="matches no samples"):
        partition(bench, ProtocolSpec("holdout", holdout_tag="zzz"))
    with pytest.raises(ValueError, match="matches no samples"):
        partition(bench, ProtocolSpec("holdout", holdout_pai="print/high"))


def test_run_is_deterministic(bench):
    a = run_protocol(bench, ProtocolSpec(), pipe(seed=2))
    b = run_protocol(bench, ProtocolSpec(), pipe(seed=2))
    assert a.report.to_json() == b.report.to_json()
    assert a.report.meta["seed"] == 2 and a.report.meta["epochs_run"] == 8


def test_intra_test_error_tracks_dev(bench):
    run = run_protocol(bench, ProtocolSpec(), pipe(seed=1))
    assert run.report.hter <= run.report.aer + 0.05


def test_held_out_pai_never_reaches_a_batch(bench):
    run = run_protocol(bench, ProtocolSpec("holdout", holdout_pai="replay"), pipe(seed=1, epochs=2))
    counts = run.train_result.batch_class_counts
    assert counts["genuine"] > 0
    assert not [k for k in counts if k.startswith("replay")]
    assert run.report.meta["protocol"]["holdout_pai"] == "replay"


def test_with_seed_only_changes_seed():
    cfg = pipe(seed=0)
    assert with_seed(cfg, 9).train.seed == 9
    assert with_seed(cfg, 9).train.epochs == cfg.train.epochs
