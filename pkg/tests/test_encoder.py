import numpy as np
import pytest

from metricpad.encoder import (
    EncoderParameters,
    NonFiniteGradientError,
    OptimizerState,
    backward,
    forward,
    forward_batch,
    init_encoder,
    load_checkpoint,
    save_checkpoint,
    sgd_momentum_step,
)
from metricpad.losses import LossConfig, LossOutput, finite_difference_check, triplet_objective


def end_to_end(params, x, objective):
    """Loss as a function of the flat list of parameter arrays."""
    n_layers = len(params.weights)

    def fn(*arrays):
        p = EncoderParameters(list(arrays[0::2]), list(arrays[1::2]))
        emb, cache = forward_batch(p, x)
        b = len(x) // 3
        out = objective(emb[:b], emb[b : 2 * b], emb[2 * b :])
        grads = backward(p, cache, np.concatenate(out.gradients))
        return LossOutput(out.value, tuple(grads.arrays()))

    assert len(params.arrays()) == 2 * n_layers
    return fn


def test_identity_network():
    params = EncoderParameters([np.eye(3)], [np.zeros(3)])
    v = np.array([0.6, 0.0, 0.8])
    np.testing.assert_array_equal(forward(params, v), v)


def test_forward_unit_norm_and_deterministic():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((50, 6))
    a = init_encoder(6, (16, 16), 8, seed=11)
    b = init_encoder(6, (16, 16), 8, seed=11)
    emb_a, _ = forward_batch(a, x)
    emb_b, _ = forward_batch(b, x)
    assert emb_a.tobytes() == emb_b.tobytes()
    assert np.all(np.abs(np.linalg.norm(emb_a, axis=1) - 1) <= 1e-6)


def test_forward_errors():
    params = init_encoder(4, (8,), 3, seed=0)
    with pytest.raises(ValueError, match="dimension mismatch"):
        forward(params, np.ones(5))
    zero = EncoderParameters([np.zeros((2, 2))], [np.zeros(2)])
    with pytest.raises(ValueError, match="degenerate"):
        forward(zero, np.ones(2))


def test_layer_chaining_validated():
    with pytest.raises(ValueError):
        EncoderParameters([np.ones((3, 4)), np.ones((5, 2))], [np.zeros(4), np.zeros(2)])


def test_backward_zero_upstream():
    params = init_encoder(5, (7,), 4, seed=1)
    emb, cache = forward_batch(params, np.random.default_rng(1).standard_normal((6, 5)))
    grads = backward(params, cache, np.zeros_like(emb))
    assert all(np.all(g == 0) for g in grads.arrays())
    with pytest.raises(ValueError):
        backward(params, cache, np.zeros((5, 4)))


@pytest.mark.parametrize("hidden", [(), (8, 8)], ids=["single-layer", "three-layer"])
def test_backward_finite_difference(hidden):
    rng = np.random.default_rng(2)
    params = init_encoder(5, hidden, 4, seed=3)
    x = rng.standard_normal((9, 5))
    fn = end_to_end(params, x, triplet_objective("metric-softmax", LossConfig()))
    assert finite_difference_check(fn, params.arrays()) < 1e-5


def test_sgd_plain_when_no_momentum():
    params = EncoderParameters([np.ones((2, 2))], [np.ones(2)])
    grads = EncoderParameters([np.full((2, 2), 2.0)], [np.full(2, -1.0)])
    state = OptimizerState.for_params(params, learning_rate=0.1, momentum=0.0)
    new, state = sgd_momentum_step(params, grads, state)
    np.testing.assert_allclose(new.weights[0], 1 - 0.1 * 2)
    np.testing.assert_allclose(new.biases[0], 1 + 0.1)
    assert state.step == 1


def test_sgd_fixed_point():
    params = init_encoder(3, (4,), 2, seed=0)
    zero = EncoderParameters([np.zeros_like(w) for w in params.weights], [np.zeros_like(b) for b in params.biases])
    new, _ = sgd_momentum_step(params, zero, OptimizerState.for_params(params))
    assert new.equals(params)


def test_sgd_two_step_recursion():
    params = EncoderParameters([np.zeros((1, 1))], [np.zeros(1)])
    g = EncoderParameters([np.full((1, 1), 3.0)], [np.full(1, 3.0)])
    state = OptimizerState.for_params(params, learning_rate=0.01, momentum=0.9)
    p1, state = sgd_momentum_step(params, g, state)
    p2, state = sgd_momentum_step(p1, g, state)
    # first step -0.01 g, second step -(0.9 * 0.01 + 0.01) g = -0.019 g
    assert p1.weights[0][0, 0] == pytest.approx(-0.01 * 3.0, abs=1e-15)
    assert p2.weights[0][0, 0] - p1.weights[0][0, 0] == pytest.approx(-0.019 * 3.0, abs=1e-15)


def test_sgd_rejects_non_finite():
    params = init_encoder(3, (4,), 2, seed=0)
    bad = [np.zeros_like(a) for a in params.arrays()]
    bad[3][0] = np.inf
    grads = EncoderParameters(bad[0::2], bad[1::2], check_finite=False)
    with pytest.raises(NonFiniteGradientError, match="bias gradient in layer 1"):
        sgd_momentum_step(params, grads, OptimizerState.for_params(params))


def test_checkpoint_round_trip(tmp_path):
    params = init_encoder(8, (64, 64), 32, seed=5)
    save_checkpoint(tmp_path / "c.json", params, {"loss": "anomaly"}, seed=5)
    loaded, meta = load_checkpoint(tmp_path / "c.json")
    assert loaded.equals(params)
    assert all(a.tobytes() == b.tobytes() for a, b in zip(loaded.arrays(), params.arrays()))
    assert meta == {"config": {"loss": "anomaly"}, "seed": 5}
    save_checkpoint(tmp_path / "d.json", loaded, {"loss": "anomaly"}, seed=5)
    assert (tmp_path / "c.json").read_bytes() == (tmp_path / "d.json").read_bytes()
