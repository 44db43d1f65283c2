"""Metric-learning losses with hand-derived gradients w.r.t. the embeddings.

Every loss returns a :class:`LossOutput` whose ``gradients`` tuple lines up
with the embedding arrays passed in. Triplet-style losses take three
``(b, D)`` arrays of anchors, positives and negatives; distances are squared
Euclidean throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Hashable, Mapping, Sequence

import numpy as np


class SoftmaxSign(str, Enum):
    """Which distance sits in the numerator of the metric-softmax term.

    ``PAPER_LITERAL`` puts the anchor-positive distance in the numerator, as
    the formula is usually printed; minimizing it pushes genuine pairs apart.
    ``CORRECTED`` swaps the roles so that compact genuine pairs lower the loss.
    """

    PAPER_LITERAL = "paper"
    CORRECTED = "corrected"


@dataclass(frozen=True)
class LossConfig:
    margin: float = 0.2
    sigma: float = 0.3
    lam: float = 1.0
    softmax_sign: SoftmaxSign = SoftmaxSign.CORRECTED

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.margin >= 0:
            raise ValueError(f"margin must be nonnegative, got {self.margin}")
        if not self.lam >= 0:
            raise ValueError(f"lambda must be nonnegative, got {self.lam}")
        object.__setattr__(self, "softmax_sign", SoftmaxSign(self.softmax_sign))


@dataclass
class LossOutput:
    value: float
    gradients: tuple


@dataclass
class ClassCenters:
    centers: dict
    update_rate: float = 0.5

    def __post_init__(self):
        if not 0 < self.update_rate <= 1:
            raise ValueError("update_rate must lie in (0, 1]")
        dims = {np.asarray(c).shape for c in self.centers.values()}
        if len(dims) > 1:
            raise ValueError(f"centers have inconsistent dimensions: {sorted(dims)}")
        self.centers = {k: np.asarray(v, dtype=np.float64).copy() for k, v in self.centers.items()}


def _as_batch(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    return arr


def _triplet_distances(anchors, positives, negatives):
    a, p, n = (_as_batch(x) for x in (anchors, positives, negatives))
    if not (a.shape == p.shape == n.shape):
        raise ValueError(f"triplet arrays disagree in shape: {a.shape}, {p.shape}, {n.shape}")
    d_ap = np.sum((a - p) ** 2, axis=1)
    d_an = np.sum((a - n) ** 2, axis=1)
    return a, p, n, d_ap, d_an


def _chain_triplet(a, p, n, w_ap, w_an):
    """Propagate dL/dD_ap and dL/dD_an (per triplet) to a, p and n."""
    g_ap = 2.0 * w_ap[:, None] * (a - p)
    g_an = 2.0 * w_an[:, None] * (a - n)
    return g_ap + g_an, -g_ap, -g_an


def _softplus(x):
    # log(1 + e^x) without overflow
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def center_loss(embeddings, class_ids: Sequence[Hashable], centers: ClassCenters) -> LossOutput:
    """Half the summed squared distance of each embedding to its class center."""
    f = _as_batch(embeddings)
    if len(class_ids) != len(f):
        raise ValueError(f"{len(f)} embeddings but {len(class_ids)} class ids")
    for cid in class_ids:
        if cid not in centers.centers:
            raise KeyError(f"unknown class id {cid!r}")
    c = np.stack([centers.centers[cid] for cid in class_ids]) if len(f) else f
    diff = f - c
    return LossOutput(0.5 * float(np.sum(diff * diff)), (diff,))


def update_centers(centers: ClassCenters, embeddings, class_ids) -> ClassCenters:
    """Move each observed center toward its batch members by ``update_rate``.

    ``c <- c - alpha * mean(c - f_i)`` over the members of the class; centers
    of classes absent from the batch are left untouched.
    """
    f = _as_batch(embeddings)
    if len(f) == 0:
        raise ValueError("update_centers needs a non-empty batch")
    new = {k: v.copy() for k, v in centers.centers.items()}
    ids = list(class_ids)
    for cid in dict.fromkeys(ids):
        members = f[[i for i, c in enumerate(ids) if c == cid]]
        c = centers.centers[cid]
        new[cid] = c - centers.update_rate * np.mean(c - members, axis=0)
    return ClassCenters(new, centers.update_rate)


def contrastive_loss(first, second, is_positive, margin: float) -> LossOutput:
    """Pair loss: ``D`` for positive pairs, ``max(0, m - D)^2`` for negative ones.

    The margin is applied to the squared distance ``D`` itself.
    """
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    x, y = _as_batch(first), _as_batch(second)
    if x.shape != y.shape:
        raise ValueError(f"pair arrays disagree in shape: {x.shape} vs {y.shape}")
    pos = np.asarray(is_positive, dtype=bool).reshape(-1)
    d = np.sum((x - y) ** 2, axis=1)
    hinge = np.maximum(0.0, margin - d)
    value = float(np.sum(np.where(pos, d, hinge**2)))
    w = np.where(pos, 1.0, -2.0 * hinge)
    g = 2.0 * w[:, None] * (x - y)
    return LossOutput(value, (g, -g))


def triplet_loss(anchors, positives, negatives, margin: float = 0.2) -> LossOutput:
    """Sum over triplets of ``max(0, D_ap - D_an + m)``."""
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    a, p, n, d_ap, d_an = _triplet_distances(anchors, positives, negatives)
    z = d_ap - d_an + margin
    active = (z > 0).astype(np.float64)
    value = float(np.sum(np.maximum(0.0, z)))
    return LossOutput(value, _chain_triplet(a, p, n, active, -active))


def triplet_focal_loss(anchors, positives, negatives, margin: float = 0.2, sigma: float = 0.3) -> LossOutput:
    """Triplet hinge on exponential-kernel distances ``exp(D / sigma)``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    a, p, n, d_ap, d_an = _triplet_distances(anchors, positives, negatives)
    # expm1 difference keeps precision when sigma is large; overflow shows up
    # as a non-finite value which callers check, so numpy stays quiet here
    with np.errstate(over="ignore", invalid="ignore"):
        z = np.expm1(d_ap / sigma) - np.expm1(d_an / sigma) + margin
        active = z > 0
        value = float(np.sum(np.where(active, z, 0.0)))
        w_ap = np.where(active, np.exp(d_ap / sigma) / sigma, 0.0)
        w_an = np.where(active, -np.exp(d_an / sigma) / sigma, 0.0)
    return LossOutput(value, _chain_triplet(a, p, n, w_ap, w_an))


def metric_softmax_loss(anchors, positives, negatives, softmax_sign=SoftmaxSign.CORRECTED) -> LossOutput:
    """Negative log softmax over the two distances of each triplet.

    Corrected sign: ``sum log(1 + exp(D_ap - D_an))``.
    Literal (reversed) sign: ``sum log(1 + exp(D_an - D_ap))``.
    """
    sign = SoftmaxSign(softmax_sign)
    a, p, n, d_ap, d_an = _triplet_distances(anchors, positives, negatives)
    x = d_ap - d_an if sign is SoftmaxSign.CORRECTED else d_an - d_ap
    value = float(np.sum(_softplus(x)))
    s = _sigmoid(x)
    if sign is SoftmaxSign.CORRECTED:
        w_ap, w_an = s, -s
    else:
        w_ap, w_an = -s, s
    return LossOutput(value, _chain_triplet(a, p, n, w_ap, w_an))


def anomaly_loss(anchors, positives, negatives, cfg: LossConfig = LossConfig()) -> LossOutput:
    """Metric-softmax plus ``lam`` times the triplet focal loss."""
    soft = metric_softmax_loss(anchors, positives, negatives, cfg.softmax_sign)
    focal = triplet_focal_loss(anchors, positives, negatives, cfg.margin, cfg.sigma)
    grads = tuple(gs + cfg.lam * gf for gs, gf in zip(soft.gradients, focal.gradients))
    return LossOutput(soft.value + cfg.lam * focal.value, grads)


def finite_difference_check(
    loss_fn: Callable[..., LossOutput],
    inputs: Sequence[np.ndarray],
    eps: float = 1e-5,
) -> float:
    """Largest relative gap between analytic and central-difference gradients.

    ``loss_fn(*inputs)`` must return a :class:`LossOutput` with one gradient
    per input array. The relative error of each coordinate is
    ``|analytic - numeric| / max(1e-8, |numeric|)``.
    """
    inputs = [np.array(x, dtype=np.float64) for x in inputs]
    analytic = loss_fn(*inputs).gradients
    if len(analytic) != len(inputs):
        raise ValueError(f"loss returned {len(analytic)} gradients for {len(inputs)} inputs")
    worst = 0.0
    for k, x in enumerate(inputs):
        g = np.asarray(analytic[k], dtype=np.float64).reshape(x.shape)
        flat = x.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            up = loss_fn(*inputs).value
            flat[j] = orig - eps
            down = loss_fn(*inputs).value
            flat[j] = orig
            numeric = (up - down) / (2.0 * eps)
            err = abs(g.reshape(-1)[j] - numeric) / max(1e-8, abs(numeric))
            worst = max(worst, err)
    return worst


def hinge_slack(name: str, anchors, positives, negatives, cfg: LossConfig) -> np.ndarray:
    """Distance of each triplet from the kink of the named hinge loss.

    Measured along ``D_an`` in distance units for both hinges, so one
    threshold means the same thing for the plain and the exponential kernel.
    Used to sample gradient-check points away from non-differentiable
    boundaries; returns ``inf`` for smooth losses.
    """
    _, _, _, d_ap, d_an = _triplet_distances(anchors, positives, negatives)
    if name == "triplet":
        return np.abs(d_ap - d_an + cfg.margin)
    if name == "triplet-focal" or name == "anomaly":
        # exp(D_an / s) = exp(D_ap / s) + m at the kink
        log_m = np.log(cfg.margin) if cfg.margin > 0 else -np.inf
        kink = cfg.sigma * np.logaddexp(d_ap / cfg.sigma, log_m)
        return np.abs(d_an - kink)
    return np.full(len(d_ap), np.inf)


TRIPLET_LOSSES = ("triplet", "triplet-focal", "metric-softmax", "anomaly")
LOSS_NAMES = ("center", "contrastive") + TRIPLET_LOSSES


def triplet_objective(name: str, cfg: LossConfig) -> Callable[..., LossOutput]:
    """Return ``f(anchors, positives, negatives) -> LossOutput`` for a named loss."""
    if name == "triplet":
        return lambda a, p, n: triplet_loss(a, p, n, cfg.margin)
    if name == "triplet-focal":
        return lambda a, p, n: triplet_focal_loss(a, p, n, cfg.margin, cfg.sigma)
    if name == "metric-softmax":
        return lambda a, p, n: metric_softmax_loss(a, p, n, cfg.softmax_sign)
    if name == "anomaly":
        return lambda a, p, n: anomaly_loss(a, p, n, cfg)
    if name == "contrastive":
        return lambda a, p, n: _contrastive_from_triplets(a, p, n, cfg.margin)
    raise ValueError(f"{name!r} is not a triplet-form loss; choose from {LOSS_NAMES}")


def _contrastive_from_triplets(a, p, n, margin):
    # each triplet contributes one positive pair (a, p) and one negative pair (a, n)
    a, p, n = _as_batch(a), _as_batch(p), _as_batch(n)
    b = len(a)
    out = contrastive_loss(
        np.concatenate([a, a]), np.concatenate([p, n]), np.r_[np.ones(b, bool), np.zeros(b, bool)], margin
    )
    g_first, g_second = out.gradients
    return LossOutput(out.value, (g_first[:b] + g_first[b:], g_second[:b], g_second[b:]))


def center_objective(centers: ClassCenters) -> Callable:
    """Center loss over the three members of each triplet given their class ids."""

    def objective(a, p, n, ids: Mapping[str, Sequence]):
        f = np.concatenate([_as_batch(a), _as_batch(p), _as_batch(n)])
        out = center_loss(f, list(ids["anchor"]) + list(ids["positive"]) + list(ids["negative"]), centers)
        (g,) = out.gradients
        b = len(_as_batch(a))
        return LossOutput(out.value, (g[:b], g[b : 2 * b], g[2 * b :]))

    return objective
