"""Random configurations for gradient checks, kept away from hinge kinks."""

import numpy as np

from metricpad.core import normalize_rows
from metricpad.losses import LossConfig, hinge_slack

EPS = 1e-5


def unit_rows(rng, n, dim):
    return normalize_rows(rng.standard_normal((n, dim)))[0]


def triplet_points(rng, name, cfg=LossConfig(), count=100, b=3, dim=4):
    """``count`` triplet batches whose hinge arguments sit at least 10*eps from zero."""
    out = []
    while len(out) < count:
        a, p, n = (unit_rows(rng, b, dim) for _ in range(3))
        if name == "contrastive":
            d = np.concatenate([np.sum((a - p) ** 2, 1), np.sum((a - n) ** 2, 1)])
            if np.min(np.abs(cfg.margin - d)) <= 10 * EPS:
                continue
        elif np.min(hinge_slack(name, a, p, n, cfg)) <= 10 * EPS:
            continue
        out.append((a, p, n))
    return out
