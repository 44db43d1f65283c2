# %% [markdown]
# # Protocols, hold-outs and the ablation table
#
# An intra run trains and tests on the stored splits. A hold-out run removes
# one attack type (or one domain) from train and dev altogether, and then
# meets it for the first time at test. The same steps are available from the
# command line; the last cell drives the CLI from a config file.

# %%
import dataclasses
import json
import tempfile
from pathlib import Path

from metricpad.cli import main
from metricpad.databench import generate, grandtest_toy_spec
from metricpad.protocols import PipelineConfig, ProtocolSpec, run_protocol
from metricpad.training import TrainConfig

spec = grandtest_toy_spec(seed=7)
spec = dataclasses.replace(
    spec, genuine_count=400, attack_classes=tuple(dataclasses.replace(a, count=60) for a in spec.attack_classes)
)
bench = generate(spec)
pipe = PipelineConfig(TrainConfig(epochs=15, seed=2))

# %%
intra = run_protocol(bench, ProtocolSpec(), pipe)
print(f"intra          test HTER {intra.report.hter:.4f}  ACER {intra.report.acer:.4f}")
for pai in ("print", "replay", "mask"):
    run = run_protocol(bench, ProtocolSpec("holdout", holdout_pai=pai), pipe)
    leaked = [k for k in run.train_result.batch_class_counts if k.startswith(pai)]
    print(f"unseen {pai:7s} test HTER {run.report.hter:.4f}  (held class in batches: {leaked or 'none'})")

# %% [markdown]
# Leaving out a domain works the same way: every sample tagged with it, genuine
# or not, becomes the test set.

# %%
run = run_protocol(bench, ProtocolSpec("holdout", holdout_tag="domain-c"), pipe)
print(f"unseen domain-c test HTER {run.report.hter:.4f}")

# %% [markdown]
# ## Ablation from the command line
#
# ``metricpad ablation`` trains four variants per seed: classwise triplets,
# anomaly triplets, anomaly focal triplets and the combined loss. It writes
# per-run rows, medians and a text table. Two seeds and a few epochs keep this
# cell quick; the defaults use five seeds and a hundred epochs.

# %%
out = Path(tempfile.mkdtemp())
config = {
    "out": str(out),
    "data": {"spec": spec.to_dict()},
    "optimizer": {"epochs": 5},
    "ablation": {"seeds": [1, 2]},
}
(out / "config.json").write_text(json.dumps(config))
main(["ablation", "--config", str(out / "config.json")])  # prints the table
print(sorted(p.name for p in out.iterdir()))
