import math

import numpy as np
import pytest

from metricpad.core import Label, Sample, normalize_rows
from metricpad.encoder import init_encoder
from metricpad.fewshot import (
    ReferenceSets,
    build_reference_sets,
    posterior_raw,
    posterior_score,
    read_scores,
    score_split,
    write_scores,
)


def identity(x):
    return np.asarray(x, dtype=np.float64)


def per_pair_oracle(t, g, h, corrected=True):
    """Plain-Python evaluation of the accumulated pair posteriors."""
    total = 0.0
    for gi, hi in zip(g, h):
        d_g = sum((a - b) ** 2 for a, b in zip(t, gi))
        d_h = sum((a - b) ** 2 for a, b in zip(t, hi))
        num = d_h if corrected else d_g
        total += math.exp(num) / (math.exp(d_g) + math.exp(d_h))
    return total


def samples(rng, n_gen, attacks, dim=4):
    out = [Sample(f"g{i}", rng.standard_normal(dim), Label.genuine(), "d", "train") for i in range(n_gen)]
    for t, sub, n, dom in attacks:
        out += [Sample(f"{t}-{sub}-{dom}-{i}", rng.standard_normal(dim), Label.attack(t, sub), dom, "train") for i in range(n)]
    return out


def test_symmetric_pair_scores_half():
    refs = ReferenceSets([[1.0, 0.0]], [[-1.0, 0.0]])
    assert posterior_score([0.0, 1.0], refs) == 0.5
    refs3 = ReferenceSets([[1.0, 0.0]] * 3, [[-1.0, 0.0]] * 3)
    assert posterior_score([0.0, 1.0], refs3) == 0.5
    assert posterior_raw([0.0, 1.0], refs3) == 1.5


def test_corrected_value():
    # D_tg = 0.1, D_th = 2.0 -> 1 / (1 + e^-1.9)
    refs = ReferenceSets([[math.sqrt(0.1), 0.0]], [[0.0, math.sqrt(2.0)]])
    assert posterior_score([0.0, 0.0], refs, "corrected") == pytest.approx(0.869892, abs=5e-7)
    assert posterior_score([0.0, 0.0], refs, "paper") == pytest.approx(1 - 0.869892, abs=5e-7)


def test_matches_oracle_both_signs():
    rng = np.random.default_rng(0)
    g, h = normalize_rows(rng.standard_normal((3, 5)))[0], normalize_rows(rng.standard_normal((3, 5)))[0]
    refs = ReferenceSets(g, h)
    for t in normalize_rows(rng.standard_normal((100, 5)))[0]:
        for sign, corrected in (("corrected", True), ("paper", False)):
            raw = posterior_raw(t, refs, sign)
            assert abs(raw - per_pair_oracle(t, g, h, corrected)) <= 1e-12
            score = posterior_score(t, refs, sign)
            assert 0 <= score <= 1
            assert abs(raw - 3 * score) <= 1e-12


def test_corrected_monotone_and_permutation_invariant():
    rng = np.random.default_rng(1)
    for _ in range(100):
        t = rng.standard_normal(3)
        g, h = rng.standard_normal((3, 3)), rng.standard_normal((3, 3))
        base = posterior_score(t, ReferenceSets(g, h))
        i = rng.integers(3)
        g_far, h_far = g.copy(), h.copy()
        # moving a reference away from the probe along the probe->ref direction raises its distance
        g_far[i] = t + 1.5 * (g[i] - t)
        h_far[i] = t + 1.5 * (h[i] - t)
        assert posterior_score(t, ReferenceSets(g_far, h)) <= base
        assert posterior_score(t, ReferenceSets(g, h_far)) >= base
        perm = rng.permutation(3)
        assert posterior_score(t, ReferenceSets(g[perm], h[perm])) == pytest.approx(base, abs=1e-15)


def test_build_forced_selection():
    rng = np.random.default_rng(2)
    data = samples(rng, 3, [("print", "low", 3, "d")])
    refs = build_reference_sets(identity, data, 3, rng)
    assert set(refs.genuine_ids) == {"g0", "g1", "g2"}
    assert len(set(refs.attack_ids)) == 3


def test_build_round_robin_types():
    rng = np.random.default_rng(3)
    data = samples(rng, 10, [("print", "low", 5, "d"), ("replay", "high", 5, "d"), ("mask", "rigid", 5, "d")])
    refs = build_reference_sets(identity, data, 3, rng)
    assert sorted(refs.attack_types) == ["mask", "print", "replay"]
    protos = refs.prototypes()
    assert set(protos) == {"genuine", "mask", "print", "replay"}


def test_build_deterministic_and_errors():
    data = samples(np.random.default_rng(4), 10, [("print", "low", 6, "a"), ("print", "low", 6, "b")])
    r1 = build_reference_sets(identity, data, 3, np.random.default_rng(5))
    r2 = build_reference_sets(identity, data, 3, np.random.default_rng(5))
    assert r1.genuine_ids == r2.genuine_ids and r1.attack_ids == r2.attack_ids
    assert np.array_equal(r1.genuine, r2.genuine)
    with pytest.raises(ValueError, match="need 20 genuine"):
        build_reference_sets(identity, data, 20, np.random.default_rng(0))


def test_score_split_composition(tmp_path):
    from metricpad.encoder import forward

    rng = np.random.default_rng(6)
    enc = init_encoder(4, (8,), 3, seed=1)
    data = samples(rng, 25, [("mask", "paper", 25, "d")])
    refs = build_reference_sets(enc, data, 3, rng)
    assert score_split(enc, refs, []) == []
    scored = score_split(enc, refs, data)
    # batched matmuls may differ from single-row ones in the last ulp
    for s, sc in zip(data, scored):
        assert sc.id == s.id and sc.label == s.label
        assert abs(sc.score - posterior_score(forward(enc, s.features), refs)) <= 1e-12
    single = score_split(enc, refs, data[:1])[0]
    assert single.score == posterior_score(forward(enc, data[0].features), refs)

    path = write_scores(tmp_path / "scores.csv", scored)
    assert path.read_text().splitlines()[0] == "id,score,raw_score,label,pai_type"
    back = read_scores(path)
    assert [b.score for b in back] == [s.score for s in scored]
    assert [b.label.pai_type for b in back] == [s.label.pai_type for s in scored]
