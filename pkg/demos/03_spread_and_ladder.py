"""
Kicks from tachyon emission and the lightcone
=============================================

A particle that emits a tachyon at a random time is displaced by an amount
bounded by an ellipsoid whose size shrinks with the particle's energy.
Repeating forward and backward evolutions gives a ladder walk: with honest
relativistic velocities the walk stays inside the lightcone, while an
adversarial sequence of kicks steps outside after 2M/mu evolutions.  The
script writes ``spread.svg``.
"""

import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from csl_lab.params import toy_params
from csl_lab.spread import classical_impulse_ensemble, ladder_walk

params = toy_params(5)

# at rest the radius is uniform on [0, (mu/M) T], so the density falls as r^-2
fig, axes = plt.subplots(1, 2, figsize=(10, 4))
for geometry, v0 in (("rest", 0.0), ("parallel", 0.6), ("perpendicular", 0.6)):
    h = classical_impulse_ensemble(params, 1.0, v0, 200_000, seed=3, geometry=geometry)
    print(f"{geometry:13s} radius {h.radius:.5f}  largest sample {h.max_radius:.5f}  "
          f"violations {h.support_violations}  KS p {h.ks_test().pvalue:.3f}")
    axes[0].step(h.centers, h.counts / (h.total * np.diff(h.edges)), where="mid", label=geometry)
axes[0].set_xlabel("|z - v0 T|")
axes[0].set_ylabel("radial density")
axes[0].legend()

# ladder walks at M/mu = 5
forward = ladder_walk(params, 1.0, 100, 2000, seed=4, scenario="forward_accelerating")
adversarial = ladder_walk(params, 1.0, 12, 1, seed=4, scenario="adversarial_backforth")
isotropic = ladder_walk(params, 1.0, 100, 2000, seed=4)
print(f"forward: largest displacement {forward.max_disp.max():.4f} cT after 100 evolutions")
print(f"adversarial: leaves the lightcone at evolution {adversarial.exit_order}")
axes[1].plot(forward.orders, forward.max_disp, label="forward, max")
axes[1].plot(isotropic.orders, isotropic.mean_disp, label="isotropic, mean")
axes[1].plot(adversarial.orders, adversarial.mean_disp, marker="o", label="adversarial")
axes[1].axhline(1.0, ls="--", color="k", label="cT")
axes[1].set_xlabel("evolution")
axes[1].set_ylabel("|x| / cT")
axes[1].legend()
fig.tight_layout()
fig.savefig("spread.svg")
