"""
Tachyonic noise correlator
==========================

The closed form of the correlator is a Bessel function of the invariant
interval: Y1 on spacelike separations and K1 on timelike ones.  Here it is
compared with a direct Fourier integral over the tachyonic shell, first in
the rest frame and then after a boost.  The script writes ``correlator.svg``.
"""

import math

import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from csl_lab.correlator import g_fourier_oracle_extrapolated, g_nonrel_limit, g_tachyon

# closed form against the oracle on both sides of the lightcone; the oracle
# integrates over angles and needs a nonzero spatial separation, so the pairs
# are taken in a frame boosted by rapidity 0.3
eta = 0.3
for s in (0.5, 2.0, 5.0):
    for label, (dt, dr) in (("spacelike", (s * math.sinh(eta), s * math.cosh(eta))),
                            ("timelike", (s * math.cosh(eta), s * math.sinh(eta)))):
        closed = g_tachyon(dt, dr).value
        orc = g_fourier_oracle_extrapolated(dt, dr).value
        print(f"{label:9s} s={s:4.1f}  closed {closed:+.8e}  oracle {orc:+.8e}")

# the value depends only on the interval: boost a spacelike pair by rapidity 1
s, eta = 2.0, 1.0
print("boosted:", g_tachyon(s * math.sinh(eta), s * math.cosh(eta)).value, "rest:", g_tachyon(0, s).value)

# spacelike tail oscillates and decays as s^-3/2, timelike side decays exponentially
s = np.linspace(0.2, 25, 800)
space = [g_tachyon(0.0, x).value for x in s]
time_ = [g_tachyon(x, 0.0).value for x in s]
fig, ax = plt.subplots(figsize=(6, 4))
ax.plot(s, space, label="spacelike")
ax.plot(s, time_, label="timelike")
ax.plot(s, [g_nonrel_limit(x) for x in s], ls="--", label="equal-time, slow-particle limit")
ax.set_xlabel("s / a")
ax.set_ylabel("G")
ax.set_ylim(-0.03, 0.05)
ax.legend()
fig.tight_layout()
fig.savefig("correlator.svg")
