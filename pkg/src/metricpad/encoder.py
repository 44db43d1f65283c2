"""MLP encoder with unit-norm output, manual backprop and SGD with momentum."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import normalize_rows

CHECKPOINT_VERSION = 1


@dataclass
class EncoderParameters:
    """Weights ``W`` of shape (fan_in, fan_out) and biases per affine layer.

    Hidden layers use a ReLU; the last affine output is normalized to unit length.
    """

    weights: list
    biases: list
    check_finite: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need matching, non-empty weight and bias lists")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i}: weight {w.shape} and bias {b.shape} do not match")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ValueError(
                    f"layer {i}: expects input of size {w.shape[0]}, "
                    f"previous layer yields {self.weights[i - 1].shape[1]}"
                )
            if self.check_finite and not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i}: non-finite parameters")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def layer_sizes(self) -> list[int]:
        return [self.input_dim] + [w.shape[1] for w in self.weights]

    def copy(self) -> "EncoderParameters":
        return EncoderParameters([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def equals(self, other: "EncoderParameters") -> bool:
        a, b = self.arrays(), other.arrays()
        return len(a) == len(b) and all(x.shape == y.shape and np.array_equal(x, y) for x, y in zip(a, b))


def init_encoder(input_dim: int, hidden: Sequence[int] = (64, 64), output_dim: int = 32, seed=0) -> EncoderParameters:
    """Glorot-uniform weights and zero biases, drawn from ``seed``."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    sizes = [int(input_dim), *map(int, hidden), int(output_dim)]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return EncoderParameters(weights, biases)


@dataclass
class ForwardCache:
    activations: list  # inputs to each affine layer
    pre_acts: list  # affine outputs
    norms: np.ndarray  # norm of the final affine output per row
    outputs: np.ndarray  # unit-norm embeddings


def forward_batch(params: EncoderParameters, x) -> tuple[np.ndarray, ForwardCache]:
    """Embed every row of ``x``; returns the embeddings and the backprop cache."""
    h = np.asarray(x, dtype=np.float64)
    if h.ndim == 1:
        h = h[None, :]
    if h.shape[1] != params.input_dim:
        raise ValueError(f"dimension mismatch: features have {h.shape[1]} entries, encoder expects {params.input_dim}")
    acts, pres = [], []
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        acts.append(h)
        z = h @ w + b
        pres.append(z)
        h = np.maximum(z, 0.0) if i < last else z
    try:
        out, norms = normalize_rows(h)
    except ValueError as exc:
        raise ValueError(f"degenerate embedding: {exc}") from None
    return out, ForwardCache(acts, pres, norms, out)


def forward(params: EncoderParameters, features) -> np.ndarray:
    """Unit-norm embedding of a single feature vector."""
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 1:
        raise ValueError("forward expects a single feature vector")
    out, _ = forward_batch(params, f)
    return out[0]


def embed(params: EncoderParameters, x) -> np.ndarray:
    return forward_batch(params, x)[0]


def backward(params: EncoderParameters, cache: ForwardCache, upstream) -> EncoderParameters:
    """Parameter gradients of a scalar loss given dL/d(embedding) per row.

    Returns an :class:`EncoderParameters` holding the gradients.
    """
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape != cache.outputs.shape:
        raise ValueError(f"upstream gradient shape {g.shape} does not match batch {cache.outputs.shape}")
    u = cache.outputs
    # Jacobian of v -> v/|v|
    delta = (g - np.sum(g * u, axis=1, keepdims=True) * u) / cache.norms[:, None]
    n_layers = len(params.weights)
    dws, dbs = [None] * n_layers, [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        dws[i] = cache.activations[i].T @ delta
        dbs[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ params.weights[i].T) * (cache.pre_acts[i - 1] > 0)
    return EncoderParameters(dws, dbs, check_finite=False)


@dataclass
class OptimizerState:
    velocity: list
    learning_rate: float = 0.01
    momentum: float = 0.9
    step: int = 0
    epoch: int = 0

    @classmethod
    def for_params(cls, params: EncoderParameters, learning_rate=0.01, momentum=0.9) -> "OptimizerState":
        return cls([np.zeros_like(a) for a in params.arrays()], learning_rate, momentum)


class NonFiniteGradientError(FloatingPointError):
    pass


def sgd_momentum_step(
    params: EncoderParameters, grads: EncoderParameters, state: OptimizerState
) -> tuple[EncoderParameters, OptimizerState]:
    """Classical momentum: ``v <- mu*v - lr*g``, ``p <- p + v``."""
    p_arrays, g_arrays = params.arrays(), grads.arrays()
    if len(p_arrays) != len(g_arrays) or len(state.velocity) != len(p_arrays):
        raise ValueError("parameter, gradient and velocity structures differ")
    for k, (p, g, v) in enumerate(zip(p_arrays, g_arrays, state.velocity)):
        if p.shape != g.shape or p.shape != v.shape:
            raise ValueError(f"shape mismatch in layer {k // 2}: {p.shape}, {g.shape}, {v.shape}")
        if not np.all(np.isfinite(g)):
            kind = "weight" if k % 2 == 0 else "bias"
            raise NonFiniteGradientError(f"non-finite {kind} gradient in layer {k // 2}")
    new_v = [state.momentum * v - state.learning_rate * g for v, g in zip(state.velocity, g_arrays)]
    new_p = [p + v for p, v in zip(p_arrays, new_v)]
    new_params = EncoderParameters(new_p[0::2], new_p[1::2])
    new_state = OptimizerState(new_v, state.learning_rate, state.momentum, state.step + 1, state.epoch)
    return new_params, new_state


def save_checkpoint(path, params: EncoderParameters, config: Optional[dict] = None, seed=None) -> Path:
    """Write a JSON checkpoint; floats use shortest round-trip repr, so loading is bitwise exact."""
    doc = {
        "version": CHECKPOINT_VERSION,
        "layer_sizes": params.layer_sizes,
        "seed": seed,
        "config": config or {},
        "weights": [w.tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
    }
    path = Path(path)
    path.write_text(json.dumps(doc, sort_keys=True) + "\n")
    return path


def load_checkpoint(path) -> tuple[EncoderParameters, dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')!r}")
    params = EncoderParameters(
        [np.array(w, dtype=np.float64) for w in doc["weights"]],
        [np.array(b, dtype=np.float64) for b in doc["biases"]],
    )
    if params.layer_sizes != doc["layer_sizes"]:
        raise ValueError("checkpoint layer sizes disagree with stored arrays")
    return params, {"config": doc["config"], "seed": doc["seed"]}
