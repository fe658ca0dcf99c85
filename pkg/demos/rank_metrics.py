"""
Rank agreement between two trajectories
=======================================

Predictions are unbounded, so we only ask whether they order the frames like
the target does. Spearman's rho and Kendall's tau-b both ignore scale.
"""

import numpy as np

from meintensity.metrics import evaluate_trajectories, kendall_tau, pair_counts, results_table, spearman_rho
from meintensity.trajectory import triangular

target = triangular(16, 0.4).values
rng = np.random.default_rng(0)

# A monotone distortion of the target scores perfectly
pred = 3.0 * target**3 - 7.0
print("monotone transform: rho=%.4f tau=%.4f" % (spearman_rho(pred, target), kendall_tau(pred, target)))

# noise breaks a few orderings
noisy = target + rng.normal(0, 0.1, target.size)
print("noisy:              rho=%.4f tau=%.4f" % (spearman_rho(noisy, target), kendall_tau(noisy, target)))

# the triangle's two zero endpoints are a tie; tau-b accounts for it
print("pair counts (conc, disc, ties in pred, ties in target):", pair_counts(noisy, target))

# a flat prediction has no ordering at all
print("constant prediction:", spearman_rho(np.zeros(16), target))

report = evaluate_trajectories({"clean": pred, "noisy": noisy}, {"clean": target, "noisy": target})
print()
print(results_table({"demo predictions": report}), end="")
