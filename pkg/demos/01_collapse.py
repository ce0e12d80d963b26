"""
Collapse of a two-branch superposition
======================================

One particle sits in a superposition of two lattice sites with weights
0.3 and 0.7.  Noise is drawn from the probability rule, the amplitudes are
evolved, and the fraction of trajectories ending in each branch is compared
with the initial weights.  The script writes ``collapse.svg`` into the
current directory.
"""

import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from csl_lab.csl import collapse_statistics, point_clumps, run_ensemble, martingale_check
from csl_lab.noise import SpacetimeGrid, SpatialGrid, SpectralDensity
from csl_lab.params import toy_params

# two sites far apart compared with the localization length a = 1
params = toy_params(10)
space = SpatialGrid(2, 100.0)
state = point_clumps(space, [0.3, 0.7], [0, 1])
spectrum = SpectralDensity("gaussian_spatial")
grid = SpacetimeGrid(space, 0.0, 12.0, 60)

# one ensemble feeds both the branch counts and the martingale check
ens = run_ensemble(state, params, spectrum, grid, 10_000, seed=1)
stats = collapse_statistics(state, params, spectrum, grid, 10_000, seed=1, ensemble=ens)
for i, f in enumerate(stats.frequencies):
    print(f"branch {i + 1}: {f:.4f}  3-sigma interval [{stats.ci_low[i]:.4f}, {stats.ci_high[i]:.4f}]")
print(f"undecided: {stats.undecided_fraction:.4f}")

mart = martingale_check(state, params, spectrum, grid, 10_000, seed=1, ensemble=ens)
print(f"largest deviation of the mean weight: {mart.max_z:.2f} standard errors")

# a few individual trajectories drift to 0 or 1, while the mean stays at 0.3
fig, ax = plt.subplots(figsize=(6, 4))
for j in range(12):
    ax.plot(ens.times, ens.normalized[j, :, 0], lw=0.8, color="0.6")
ax.plot(ens.times, mart.mean[:, 0], lw=2, color="C0", label="ensemble mean")
ax.axhline(0.3, ls="--", color="C1", label="|c1|^2")
ax.set_xlabel("t")
ax.set_ylabel("normalized |a1|^2")
ax.legend()
fig.tight_layout()
fig.savefig("collapse.svg")
