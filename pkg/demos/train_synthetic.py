"""
Training on synthetic clips
===========================

A small version of the desk-scale benchmark. The clips contain a blob that
moves away from a per-clip resting position and back, following a known
intensity curve g; every frame is also shaken a little. We train the
frame-wise baseline and the recurrent model on the same split and compare
held-out rank agreement with the pseudo-labels and with g itself.

Takes well under a minute on one CPU core. Raise N_CLIPS and EPOCHS to get
closer to the full benchmark (200 clips, 30 epochs).
"""

import tempfile

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from meintensity.metrics import results_table
from meintensity.pipeline import (
    AblationSpec,
    SyntheticSpec,
    TrainConfig,
    generate_synthetic,
    make_dataset,
    predict_all,
    run_ablation_suite,
    split,
    train,
    truth_on_grid,
)

N_CLIPS = 60
EPOCHS = 10

work = tempfile.mkdtemp(prefix="meintensity_demo_")
synth = generate_synthetic(SyntheticSpec(n_clips=N_CLIPS), work, seed=0)
print("generated %d clips in %.1f s under %s" % (N_CLIPS, synth.seconds, work))

train_m, val_m = split(synth.manifest, "by_clip", 0.8, seed=0)
train_data = make_dataset(train_m, T=16, root=work)
val_data = make_dataset(val_m, T=16, root=work)
truth = truth_on_grid(val_data, synth.ground_truth)

cfg = TrainConfig(epochs=EPOCHS)
rows = run_ablation_suite(
    cfg, ["framewise_baseline", "full_model"], {"triangular": (train_data, val_data)}, truth=truth
)
print(results_table({r.label: r.val for r in rows}), end="")
print()
print("against the true g:")
print(results_table({r.label: r.truth for r in rows}), end="")

# Predicted curves for a few held-out clips (retrain the full model to keep it)
model = train(cfg, AblationSpec("full_model"), train_data, val_data).model
preds = predict_all(model, val_data)
fig, axes = plt.subplots(1, 4, figsize=(12, 2.6))
for ax, s in zip(axes, val_data):
    ax.plot(s.target.values, color="0.6", lw=2, label="pseudo-label")
    ax.plot(truth[s.clip_id], color="k", lw=0.8, ls=":", label="true g")
    ax.plot(preds[s.clip_id], color="tab:blue", label="predicted")
    ax.set_title(s.clip_id)
axes[0].legend(fontsize=7)
fig.tight_layout()
fig.savefig("synthetic_predictions.png", dpi=100)
print("saved synthetic_predictions.png")
