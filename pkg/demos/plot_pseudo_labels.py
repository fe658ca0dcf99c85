"""
Pseudo-intensity targets from three landmarks
=============================================

A clip only tells us where the expression starts, peaks and ends. Here we
turn those frames into dense targets on a fixed grid of T slots and look at
the two available shapes.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from meintensity.trajectory import clip_target

T = 16

# apex 70% of the way from onset to offset
onset, apex, offset = 5, 26, 35
plan, tri = clip_target(onset, apex, offset, T)
_, gau = clip_target(onset, apex, offset, T, shape="gaussian")

print("source frames:", plan.source_indices)
print("apex fraction: %.3f   apex slot: %d" % (tri.alpha, plan.apex_slot))
print("triangular:", np.round(tri.values, 3))

tau = np.arange(T) / (T - 1)
plt.plot(tau, tri.values, "o-", color="0.5", label="triangular")
plt.plot(tau, gau.values, "s--", color="tab:orange", label="gaussian (sigma 0.15)")
plt.axvline(tri.alpha, color="k", lw=0.8, ls=":")
plt.xlabel("normalized time")
plt.ylabel("pseudo-intensity")
plt.legend()
plt.savefig("pseudo_labels.png", dpi=100)
print("saved pseudo_labels.png")

# Early and late apexes just shift the peak
for a in (0.2, 0.5, 0.8):
    _, traj = clip_target(0, int(a * 100), 100, T)
    print("alpha %.1f -> peak at slot %d" % (a, traj.peak_slot))
