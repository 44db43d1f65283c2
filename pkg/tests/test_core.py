import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from metricpad.core import Label, Sample, Triplet, normalize, pairwise_distances, squared_distance


def test_squared_distance_examples():
    assert squared_distance([1, 0], [1, 0]) == 0
    assert squared_distance([1, 0], [0, 1]) == 2
    # 0.4**2 + 0.8**2
    assert squared_distance([0.6, 0.8], [1, 0]) == pytest.approx(0.8, abs=1e-15)


def test_squared_distance_dimension_mismatch():
    with pytest.raises(ValueError, match="2 vs 3"):
        squared_distance([1, 0], [1, 0, 0])


def test_normalize_examples():
    np.testing.assert_allclose(normalize([3, 4]), [0.6, 0.8], atol=1e-15)
    np.testing.assert_array_equal(normalize([2, 0, 0]), [1, 0, 0])
    with pytest.raises(ValueError):
        normalize([0, 0])
    with pytest.raises(ValueError):
        normalize([1e-13, 0])


def test_pairwise_distances_examples():
    assert pairwise_distances([[1.0, 0.0]]).tolist() == [[0.0]]
    assert pairwise_distances([[1, 0], [0, 1]]).tolist() == [[0, 2], [2, 0]]
    with pytest.raises(ValueError):
        pairwise_distances([])


def test_pairwise_matches_elementwise():
    rng = np.random.default_rng(3)
    e = np.stack([normalize(v) for v in rng.standard_normal((4, 5))])
    d = pairwise_distances(e)
    for i in range(4):
        for j in range(4):
            assert d[i, j] == pytest.approx(squared_distance(e[i], e[j]), abs=1e-14)
    assert np.array_equal(d, d.T)
    assert np.all(np.diag(d) == 0)


finite = st.floats(-1e3, 1e3, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, 6, elements=finite), arrays(np.float64, 6, elements=finite))
def test_distance_symmetric_and_bounded_on_sphere(a, b):
    if np.linalg.norm(a) < 1e-6 or np.linalg.norm(b) < 1e-6:
        return
    u, v = normalize(a), normalize(b)
    assert squared_distance(u, v) == squared_distance(v, u)
    assert 0 <= squared_distance(u, v) <= 4 + 1e-9


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, 5, elements=finite))
def test_normalize_idempotent(v):
    if np.linalg.norm(v) < 1e-6:
        return
    u = normalize(v)
    assert abs(np.linalg.norm(u) - 1) < 1e-6
    np.testing.assert_allclose(normalize(u), u, atol=1e-12)


def test_label_invariants():
    Label.genuine()
    Label.attack("mask", "silicone")
    with pytest.raises(ValueError):
        Label("genuine", "print", "low")
    with pytest.raises(ValueError):
        Label.attack("print", "silicone")
    with pytest.raises(ValueError):
        Label.attack("hologram", "low")
    assert Label.attack("print", "low").class_key == "print/low"


def test_sample_validation():
    s = Sample("a", [1.0, 2.0], Label.genuine(), "d", "train")
    assert s.features.dtype == np.float64
    with pytest.raises(ValueError):
        Sample("a", [1.0, np.nan], Label.genuine(), "d", "train")
    with pytest.raises(ValueError):
        Sample("a", [1.0], Label.genuine(), "d", "validation")


def test_triplet_indices_distinct():
    Triplet(0, 1, 2)
    with pytest.raises(ValueError):
        Triplet(0, 0, 2)
