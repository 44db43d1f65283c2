# %% [markdown]
# # Losses on the unit sphere
#
# Every loss here acts on unit-norm embeddings and returns its value together
# with the gradient for each input array. We start from hand-made triplets
# where the answer is obvious, then check the analytic gradients against
# central differences.

# %%
import math

import numpy as np

from metricpad import LossConfig, finite_difference_check, normalize
from metricpad.losses import metric_softmax_loss, triplet_focal_loss, triplet_loss, triplet_objective

np.set_printoptions(precision=4, suppress=True)

# %% [markdown]
# Three points on the circle: the positive sits next to the anchor, the
# negative on the opposite side.

# %%
a = normalize(np.array([1.0, 0.0]))
p = normalize(np.array([0.9, 0.2]))
n = normalize(np.array([-1.0, 0.1]))
A, P, N = a[None], p[None], n[None]

print("D_ap =", np.sum((a - p) ** 2), " D_an =", np.sum((a - n) ** 2))
print("triplet       ", triplet_loss(A, P, N).value)
print("triplet-focal ", triplet_focal_loss(A, P, N).value)
print("metric-softmax", metric_softmax_loss(A, P, N).value)

# %% [markdown]
# Swapping the positive and the negative turns an easy triplet into a hard
# one. The hinge losses wake up and the softmax term grows toward ``D_an - D_ap``.

# %%
print("triplet       ", triplet_loss(A, N, P).value)
print("triplet-focal ", triplet_focal_loss(A, N, P).value)
print("metric-softmax", metric_softmax_loss(A, N, P).value)

# %% [markdown]
# When the two distances coincide the softmax term is exactly ``ln 2``, and
# the focal hinge at zero distance leaves only the margin.

# %%
print(metric_softmax_loss(A, P, 2 * A - P).value, math.log(2))
print(triplet_focal_loss(A, A, A, margin=0.2).value)

# %% [markdown]
# ## The focal kernel and the margin
#
# The focal hinge compares ``exp(D / sigma)`` rather than ``D``. With
# ``sigma = 0.3`` and distances up to 4, the exponentials span six orders of
# magnitude, so a margin of 0.2 in kernel space is a very thin margin in
# distance space once the anchor-positive pair is not tight.

# %%
sigma, m = 0.3, 0.2
for d_ap in (0.05, 0.5, 1.0, 2.0):
    kink = sigma * math.log(math.exp(d_ap / sigma) + m)
    print(f"D_ap={d_ap:4.2f}: hinge inactive once D_an > {kink:.4f}  (gap {kink - d_ap:.4f})")

# %% [markdown]
# ## Gradient check
#
# ``finite_difference_check`` perturbs every coordinate by ``1e-5`` in both
# directions and reports the worst relative gap. On unfiltered random points
# the focal term can reach values near 1e5, and the difference quotient then
# carries roundoff around ``|L| * 2e-16 / 1e-5``, which small coordinates
# feel. The test suite screens for that; here we just look.

# %%
rng = np.random.default_rng(0)
cfg = LossConfig()
for name in ("triplet", "triplet-focal", "metric-softmax", "anomaly", "contrastive"):
    batch = [x / np.linalg.norm(x, axis=1, keepdims=True) for x in rng.standard_normal((3, 4, 6))]
    err = finite_difference_check(triplet_objective(name, cfg), batch)
    print(f"{name:15s} max relative error {err:.2e}")
