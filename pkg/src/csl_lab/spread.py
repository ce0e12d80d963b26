"""Classical-impulse picture of wavepacket spreading under tachyon emission.

Each particle starts at the origin with velocity v0, receives one impulse
at a uniformly random time t in [0, T] and drifts with the changed velocity
afterwards, so it ends at z = v0 T + w (T - t).  The intrinsic quantum
spreading of the packet is not modelled; results assume a packet wider
than the localization length.

The ladder walk iterates this picture.  One evolution is a forward drift
with the impulse at t followed by a free backward drift of duration T,
which leaves the particle displaced by (v_before - v_after) t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .csl import wilson_interval
from .noise import derive_seeds
from .params import ModelParams
from .relkin import energy, tachyon_momentum, velocity_gain

__all__ = [
    "SpreadHistogram",
    "LadderResult",
    "GEOMETRIES",
    "SCENARIOS",
    "REGIME_NOTE",
    "spread_radius",
    "support_axes",
    "classical_impulse_ensemble",
    "ladder_walk",
]

GEOMETRIES = ("rest", "parallel", "perpendicular", "isotropic")
SCENARIOS = ("isotropic", "forward_accelerating", "adversarial_backforth")
REGIME_NOTE = "classical impulse surrogate; intrinsic packet spreading excluded (packet width > a)"

_SUPPORT_RTOL = 1e-12
_BLOCK = 100_000
# seed-path ids for derive_seeds
_IMPULSE_ID = 1
_LADDER_ID = 2


def _momentum_from_velocity(v0, M):
    v0 = np.asarray(v0, dtype=float)
    if v0.ndim == 0:
        v0 = np.array([0.0, 0.0, float(v0)])
    if v0.shape != (3,):
        raise ValueError("v0 must be a speed or a 3-vector")
    speed = float(np.linalg.norm(v0))
    if speed >= 1.0:
        raise ValueError(f"superluminal or luminal v0 (|v0| = {speed})")
    return v0, M * v0 / math.sqrt(1.0 - speed * speed)


def support_axes(params: ModelParams, k, T: float = 1.0) -> tuple[float, float]:
    """Semi-axes (along k, across k) of the region reached by the impulse ensemble."""
    M, mu = params.M, params.mu
    E = float(energy(k, M))
    return mu * M / E**2 * T, mu / E * T


def spread_radius(params: ModelParams, k, geometry: str, T: float = 1.0) -> float:
    """Support radius: (mu/M)T at rest, (mu M/E^2)T along k, (mu/E)T across k."""
    if geometry not in GEOMETRIES:
        raise ValueError(f"unknown geometry {geometry!r}")
    if geometry == "rest":
        return params.mu / params.M * T
    par, perp = support_axes(params, k, T)
    return par if geometry == "parallel" else perp


@dataclass(frozen=True, eq=False)
class SpreadHistogram:
    """Radial histogram of |z - v0 T| with its analytic envelope.

    Inside the support the displacement density goes as r**power_law, so
    the radial density 4 pi r^2 rho(r) is flat on [0, radius].
    """

    geometry: str
    edges: np.ndarray
    counts: np.ndarray
    total: int
    radius: float
    support_violations: int
    max_radius: float
    power_law: float = -2.0
    radii: np.ndarray | None = field(default=None, repr=False)
    regime: str = REGIME_NOTE

    def __post_init__(self):
        if int(self.counts.sum()) != self.total:
            raise ValueError("counts must sum to total")
        if np.any(np.diff(self.edges) <= 0):
            raise ValueError("bin edges must be strictly increasing")

    @property
    def centers(self):
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def bin_width(self) -> float:
        return float(self.edges[1] - self.edges[0])

    def theory_density(self, r):
        """Radial probability density of |z - v0 T|."""
        r = np.asarray(r, dtype=float)
        return np.where((r >= 0) & (r <= self.radius), 1.0 / self.radius, 0.0)

    def volume_density(self, r):
        """Density per unit volume, proportional to r^-2 inside the support."""
        r = np.asarray(r, dtype=float)
        return self.theory_density(r) / (4 * math.pi * r * r)

    def theory_counts(self):
        lo = np.clip(self.edges[:-1], 0, self.radius)
        hi = np.clip(self.edges[1:], 0, self.radius)
        return self.total * (hi - lo) / self.radius

    def ks_test(self):
        """Kolmogorov-Smirnov test of the stored radii against the envelope law."""
        if self.radii is None:
            raise ValueError("histogram was built without keeping samples")
        return stats.kstest(self.radii, "uniform", args=(0.0, self.radius))

    def chisquare(self, min_expected: float = 5.0):
        exp = self.theory_counts()
        keep = exp >= min_expected
        obs = self.counts[keep]
        exp = exp[keep] * obs.sum() / exp[keep].sum()
        return stats.chisquare(obs, exp)


def _isotropic(rng, n):
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _directions(rng, n, geometry, k_hat):
    if geometry in ("rest", "isotropic"):
        return _isotropic(rng, n)
    if geometry == "parallel":
        sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        return sign[:, None] * k_hat
    # uniform on the great circle perpendicular to k_hat
    e1 = np.cross(k_hat, [1.0, 0.0, 0.0])
    if np.linalg.norm(e1) < 0.5:
        e1 = np.cross(k_hat, [0.0, 1.0, 0.0])
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(k_hat, e1)
    phi = rng.uniform(0.0, 2 * math.pi, n)
    return np.cos(phi)[:, None] * e1 + np.sin(phi)[:, None] * e2


def classical_impulse_ensemble(params: ModelParams, T: float, v0, n_samples: int, seed: int,
                               geometry: str = "rest", n_bins: int = 50,
                               keep_samples: bool = True) -> SpreadHistogram:
    """Sample the impulse ensemble and histogram |z - v0 T|.

    The kick magnitude comes from :func:`tachyon_momentum` and the velocity
    change from :func:`velocity_gain`.  Geometries ``parallel`` and
    ``perpendicular`` restrict kick directions relative to the initial
    momentum; ``isotropic`` keeps all directions, and the support is then an
    ellipsoid whose semi-axes are the parallel and perpendicular radii.
    """
    if geometry not in GEOMETRIES:
        raise ValueError(f"unknown geometry {geometry!r}")
    if n_samples < 1000:
        raise ValueError("n_samples must be at least 1000")
    if not T > 0:
        raise ValueError("T must be positive")
    M, mu = params.M, params.mu
    v0, k = _momentum_from_velocity(v0, M)
    speed = float(np.linalg.norm(v0))
    if geometry == "rest" and speed != 0.0:
        raise ValueError("rest geometry needs v0 = 0")
    k_hat = v0 / speed if speed > 0 else np.array([0.0, 0.0, 1.0])
    par, perp = support_axes(params, k, T)
    radius = spread_radius(params, k, geometry, T) if geometry != "isotropic" else max(par, perp)

    n_blocks = -(-n_samples // _BLOCK)
    seeds = derive_seeds(seed, n_blocks, _IMPULSE_ID, GEOMETRIES.index(geometry))
    radii = np.empty(n_samples)
    violations = 0
    for b, s in enumerate(seeds):
        lo = b * _BLOCK
        n = min(_BLOCK, n_samples - lo)
        rng = np.random.default_rng(int(s))
        t = rng.uniform(0.0, T, n)
        p_hat = _directions(rng, n, geometry, k_hat)
        kk = np.broadcast_to(k, p_hat.shape)
        p = tachyon_momentum(kk, p_hat, M, mu)[:, None] * p_hat
        disp = velocity_gain(kk, p, M) * (T - t)[:, None]
        radii[lo:lo + n] = np.linalg.norm(disp, axis=1)
        along = disp @ k_hat
        across = np.linalg.norm(disp - along[:, None] * k_hat, axis=1)
        scale = (along / par) ** 2 + (across / perp) ** 2
        violations += int(np.count_nonzero(scale > (1 + _SUPPORT_RTOL) ** 2))

    edges = np.linspace(0.0, radius, n_bins + 1)
    r_max = float(radii.max())
    if r_max > edges[-1]:
        edges = np.append(edges, r_max * (1 + 1e-12))
    counts, _ = np.histogram(radii, bins=edges)
    return SpreadHistogram(geometry=geometry, edges=edges, counts=counts, total=n_samples,
                           radius=radius, support_violations=violations, max_radius=r_max,
                           radii=radii if keep_samples else None)


@dataclass(frozen=True, eq=False)
class LadderResult:
    """Per-order statistics of a ladder walk; index 0 is the first evolution."""

    scenario: str
    T: float
    n_samples: int
    mean_disp: np.ndarray
    max_disp: np.ndarray
    exceed: np.ndarray
    bound: np.ndarray | None
    exit_order: int | None
    positions: np.ndarray = field(repr=False)
    z: float = 3.0
    regime: str = REGIME_NOTE

    @property
    def orders(self):
        return np.arange(1, len(self.mean_disp) + 1)

    @property
    def p_exceed(self):
        return self.exceed / self.n_samples

    def intervals(self):
        return [wilson_interval(int(k), self.n_samples, z=self.z) for k in self.exceed]

    def rows(self):
        for n, m, p, (lo, hi) in zip(self.orders, self.mean_disp, self.p_exceed, self.intervals()):
            yield int(n), float(m), float(p), lo, hi


def _speed_deficit(k, M):
    """1 - k/E for a scalar momentum k >= 0."""
    E = math.hypot(k, M)
    return M * M / (E * (E + k))


def _velocity(k, M):
    return k / energy(k, M)[..., None]


def ladder_walk(params: ModelParams, T: float, n_orders: int, n_samples: int, seed: int,
                scenario: str = "isotropic", z: float = 3.0) -> LadderResult:
    """Iterate forward-plus-backward evolutions and track the displacement.

    ``isotropic``: random kick direction and time at every evolution.
    ``forward_accelerating``: every kick along +z, random times.
    ``adversarial_backforth``: pairs of a late kick +p (t = T) followed by
    an early kick -p (t = 0), which shifts the particle by the first-order
    velocity gain times T per pair; requires an even number of evolutions.

    Kick magnitudes come from :func:`tachyon_momentum`.  In the first two
    scenarios velocities are the exact k/E, so summed velocity changes
    telescope and stay below c.  A sample counts as beyond the lightcone when
    its distance from the origin reaches cT (relative tolerance 1e-12).
    """
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}")
    if n_orders < 1 or n_samples < 1:
        raise ValueError("n_orders and n_samples must be positive")
    if scenario == "adversarial_backforth" and n_orders % 2:
        raise ValueError("adversarial_backforth needs an even number of evolutions")
    if not T > 0:
        raise ValueError("T must be positive")
    M, mu = params.M, params.mu
    limit = T * (1 - _SUPPORT_RTOL)
    mean_disp = np.empty(n_orders)
    max_disp = np.empty(n_orders)
    exceed = np.empty(n_orders, dtype=np.int64)
    bound = None
    exit_order = None

    if scenario == "adversarial_backforth":
        p_hat = np.array([0.0, 0.0, 1.0])
        x = np.zeros(3)
        for n in range(n_orders):
            if n % 2 == 0:
                p = tachyon_momentum(np.zeros(3), p_hat, M, mu) * p_hat
                x = x - velocity_gain(np.zeros(3), p, M) * T
            # second of the pair: kick -p at t = 0, particle at rest, no shift
            d = float(np.linalg.norm(x))
            mean_disp[n] = max_disp[n] = d
            exceed[n] = n_samples if d >= limit else 0
            if exit_order is None and n % 2 == 1 and d >= limit:
                exit_order = n + 1
        positions = np.broadcast_to(x, (n_samples, 3)).copy()
    else:
        rng = np.random.default_rng(derive_seeds(seed, 1, _LADDER_ID, SCENARIOS.index(scenario))[0])
        x = np.zeros((n_samples, 3))
        if scenario == "isotropic":
            k = np.zeros((n_samples, 3))
        else:
            bound = np.empty(n_orders)
            kz = 0.0
            z_hat = np.array([0.0, 0.0, 1.0])
        for n in range(n_orders):
            t = rng.uniform(0.0, T, n_samples)
            if scenario == "isotropic":
                p_hat = _isotropic(rng, n_samples)
                k_new = k + tachyon_momentum(k, p_hat, M, mu)[:, None] * p_hat
                x = x + (_velocity(k, M) - _velocity(k_new, M)) * t[:, None]
                k = k_new
            else:
                kz_new = kz + float(tachyon_momentum(kz * z_hat, z_hat, M, mu))
                # velocity change along z from 1 - v = M^2 / (E (E + k)), free of cancellation
                dv = _speed_deficit(kz, M) - _speed_deficit(kz_new, M)
                x[:, 2] -= dv * t
                kz = kz_new
                bound[n] = (1.0 - _speed_deficit(kz, M)) * T
            d = np.linalg.norm(x, axis=1)
            mean_disp[n] = d.mean()
            max_disp[n] = d.max()
            exceed[n] = np.count_nonzero(d >= limit)
            if exit_order is None and exceed[n]:
                exit_order = n + 1
        positions = x
    return LadderResult(scenario=scenario, T=T, n_samples=n_samples, mean_disp=mean_disp,
                        max_disp=max_disp, exceed=exceed, bound=bound, exit_order=exit_order,
                        positions=positions, z=z)
