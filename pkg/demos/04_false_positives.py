"""
Random identities against a clean model
=======================================

A model that never saw any trigger should not confirm anyone.  Twenty fresh
keypairs each derive their own filter and are verified against a clean
baseline.
"""

from eegmark import SyntheticSpec, baseline_train, generate_synthetic, split
from eegmark.attacks import false_positive_probe
from eegmark.nn import TrainConfig, mini_eeg
from eegmark.pipeline import default_threshold

ds = generate_synthetic(SyntheticSpec(n_samples=1000, seed=3))
splits = split(ds, (0.7, 0.15, 0.15), seed=0)
base, _ = baseline_train(mini_eeg(), splits, TrainConfig(epochs=40, min_epochs=20, clip_norm=1.0), seed=3)

summary = false_positive_probe(base, 20, splits[2], default_threshold(base, splits[2]), seed=11)
print(summary.to_text())

# each probe's acc is min(true-embed, null consistency) for its own filter
for r in summary.reports[:3]:
    print(r.filter_digest[:16], r.true_embed_accuracy, r.null_consistency)
