# %% [markdown]
# # Scoring without a classifier
#
# After training, a probe is compared with M genuine and M attack reference
# embeddings drawn from the train split. Each (genuine, attack) reference
# pair contributes ``sigmoid(D_attack - D_genuine)``; the score is their mean,
# so it lies in [0, 1] and higher means more genuine.

# %%
import dataclasses

import numpy as np

from metricpad.databench import generate, grandtest_toy_spec
from metricpad.fewshot import ReferenceSets, build_reference_sets, posterior_score, score_split
from metricpad.metrics import ScoreSet, eer_threshold, pad_report, rates_at_threshold
from metricpad.training import TrainConfig, train

spec = grandtest_toy_spec(seed=7)
bench = generate(
    dataclasses.replace(
        spec, genuine_count=400, attack_classes=tuple(dataclasses.replace(a, count=60) for a in spec.attack_classes)
    )
)
train_set, dev, test = (bench.split(s) for s in ("train", "dev", "test"))
params = train(train_set, TrainConfig(epochs=20, seed=1)).params

# %% [markdown]
# A two-dimensional picture first: one genuine and one attack reference, and
# probes sliding from one to the other.

# %%
refs = ReferenceSets(np.array([[1.0, 0.0]]), np.array([[-1.0, 0.0]]))
for angle in np.linspace(0, np.pi, 5):
    probe = np.array([np.cos(angle), np.sin(angle)])
    print(f"angle {np.degrees(angle):5.1f}  score {posterior_score(probe, refs):.4f}")

# %% [markdown]
# ## Scores on the toy splits

# %%
refs = build_reference_sets(params, train_set, M=3, rng=np.random.default_rng(1))
print("genuine refs:", refs.genuine_ids)
print("attack refs: ", refs.attack_ids)
dev_scores = score_split(params, refs, dev)
test_scores = score_split(params, refs, test)
dev_set, test_set = ScoreSet.from_scored(dev_scores), ScoreSet.from_scored(test_scores)
print("median genuine score %.3f, median attack score %.3f" % (
    np.median(dev_set.scores[dev_set.is_genuine]), np.median(dev_set.scores[~dev_set.is_genuine])))

# %% [markdown]
# ## Fixing the threshold on dev
#
# The threshold sweeps every midpoint between distinct dev scores plus both
# infinities and keeps the one where false accepts and false rejects are
# closest. Scores equal to the threshold are accepted.

# %%
tau, eer = eer_threshold(dev_set)
far, frr = rates_at_threshold(dev_set, tau)
print(f"tau={tau:.4f}  dev EER={eer:.4f}  (FAR {far:.4f}, FRR {frr:.4f})")

# %% [markdown]
# The report applies that threshold to test. HTER averages the two test error
# rates; ACER pairs the rejected genuine rate with the worst attack type.

# %%
report = pad_report(dev_set, test_set)
print(f"HTER {report.hter:.4f}  ACER {report.acer:.4f}  dev AER {report.aer:.4f}")
for pai, rate in report.apcer.items():
    print(f"  APCER[{pai}] = {rate:.4f}")

# %% [markdown]
# More references smooth the score but rarely move the operating point much.

# %%
for M in (1, 3, 9):
    r = build_reference_sets(params, train_set, M=M, rng=np.random.default_rng(1))
    rep = pad_report(ScoreSet.from_scored(score_split(params, r, dev)), ScoreSet.from_scored(score_split(params, r, test)))
    print(f"M={M}: test HTER {rep.hter:.4f}")
