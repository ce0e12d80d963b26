"""Relativistic kinematics and first-order observables.

Metric signature (+, -, -, -); a tachyon has k^2 = -mu^2.  The phase-space
oracles remove their delta functions by solving the shell conditions for
the radial momentum, then integrate over the remaining polar angle with
adaptive quadrature.  In the rest frame of p1 that angular integrand is
constant, while a boosted frame exercises the full machinery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import integrate, interpolate, optimize, special

from .noise import SpectralDensity
from .params import ModelParams

__all__ = [
    "ObservableReport",
    "WavePacket",
    "Recoil",
    "VacuumRate",
    "energy",
    "tachyon_momentum",
    "velocity_gain",
    "recoil_energy",
    "emission_energy_integral",
    "emission_energy_closed",
    "emission_phase_space_integral",
    "emission_phase_space_closed",
    "energy_rate_rel",
    "collapse_rate_rel",
    "vacuum_rate_density",
    "pair_production_support",
    "support_gap",
    "lightcone_bound_integral",
]

REL_ERR_FLOOR = 1e-300


@dataclass(frozen=True)
class ObservableReport:
    """A named quantity with its closed form and, optionally, an oracle value."""

    name: str
    closed_form: float
    oracle: float | None = None
    params: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def rel_err(self) -> float | None:
        if self.oracle is None:
            return None
        return abs(self.closed_form - self.oracle) / max(abs(self.closed_form), REL_ERR_FLOOR)


def energy(k, M: float):
    k = np.asarray(k, dtype=float)
    return np.sqrt(np.sum(k * k, axis=-1) + M * M)


def _unit(p_hat):
    p_hat = np.asarray(p_hat, dtype=float)
    if np.any(np.abs(np.linalg.norm(p_hat, axis=-1) - 1.0) > 1e-12):
        raise ValueError("direction must be a unit vector")
    return p_hat


def tachyon_momentum(k, p_hat, M: float, mu: float):
    """Magnitude of the tachyon momentum emitted along ``p_hat``.

    |p| = E_k mu / sqrt(|k x p_hat|^2 + M^2), accurate to first order in mu/M.
    """
    if not M > 0:
        raise ValueError("M must be positive")
    p_hat = _unit(p_hat)
    k = np.asarray(k, dtype=float)
    cross = np.cross(k, p_hat)
    return energy(k, M) * mu / np.sqrt(np.sum(cross * cross, axis=-1) + M * M)


def velocity_gain(k, p, M: float):
    """Change of velocity p/E - (p.k) k / E^3 for momentum kick ``p`` at momentum ``k``."""
    k = np.asarray(k, dtype=float)
    p = np.asarray(p, dtype=float)
    E = energy(k, M)[..., None]
    pk = np.sum(p * k, axis=-1)[..., None]
    return p / E - pk * k / E**3


class Recoil(NamedTuple):
    particle: float   # kinetic energy gained by the particle
    tachyon: float    # energy carried by the emitted tachyon


def recoil_energy(M: float, mu: float) -> Recoil:
    """Energies after a particle at rest emits a tachyon; they sum to zero."""
    if not M > 0:
        raise ValueError("M must be positive")
    e = mu * mu / (2.0 * M)
    return Recoil(particle=e, tachyon=-e)


# --- phase-space integrals ----------------------------------------------------

def _root_radial(c, q, M, mu, E1):
    """Radial |k| on both shells at polar cosine c; returns (kappa, k0, E_p, |dg/dkappa|)."""
    def g(kappa):
        Ep = math.sqrt(kappa * kappa + 2 * kappa * q * c + q * q + M * M)
        return (Ep - E1) ** 2 - kappa * kappa + mu * mu

    hi = max(mu, 1.0)
    while g(hi) > 0:
        hi *= 2.0
        if hi > 1e12 * max(mu, M):
            raise ArithmeticError("no shell crossing found")
    kappa = optimize.brentq(g, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    Ep = math.sqrt(kappa * kappa + 2 * kappa * q * c + q * q + M * M)
    k0 = Ep - E1
    dg = 2 * k0 * (kappa + q * c) / Ep - 2 * kappa
    return kappa, k0, Ep, abs(dg)


def _shell_integral(M, mu, q, weight_k0, measure="particle"):
    E1 = math.hypot(q, M)

    def integrand(c):
        kappa, k0, Ep, dg = _root_radial(c, q, M, mu, E1)
        if measure == "particle":
            norm = 2.0 * Ep
        elif measure == "printed":
            norm = 2.0 * math.sqrt(kappa * kappa + mu * mu)
        else:
            raise ValueError(f"unknown measure {measure!r}")
        return 2.0 * math.pi * kappa * kappa * weight_k0(k0) / norm / dg

    # k0 changes sign in boosted frames, so the tolerance is set against |integrand|
    scale = integrate.quad(lambda c: abs(integrand(c)), -1.0, 1.0, epsabs=0.0, epsrel=1e-6, limit=200)[0]
    val, err = integrate.quad(integrand, -1.0, 1.0, epsabs=1e-13 * scale, epsrel=1e-12, limit=200)
    return val, err, E1


def emission_energy_closed(M: float, mu: float) -> float:
    """M C = M (pi/2) (mu/M)^3 sqrt(1 + (mu/2M)^2)."""
    return M * 0.5 * math.pi * (mu / M) ** 3 * math.sqrt(1.0 + (mu / (2.0 * M)) ** 2)


def emission_energy_integral(M: float, mu: float, frame_momentum: float = 0.0,
                             measure: str = "particle") -> ObservableReport:
    """Energy-weighted tachyon emission integral M*C, closed form vs oracle.

    The oracle integrates k0 delta(k^2 + mu^2) d^3p/(2E) delta^4(k - p + p1)
    in a frame where p1 carries 3-momentum ``frame_momentum``.  The result
    is the time component E1*C of a four-vector, so M*C = M*(result)/E1.
    ``measure="printed"`` swaps the final-particle factor 1/(2E) for
    1/(2 sqrt(k^2 + mu^2)) to show what that variant of the integrand gives.
    """
    if not (M > 0 and mu > 0):
        raise ValueError("M and mu must be positive")
    val, err, E1 = _shell_integral(M, mu, frame_momentum, lambda k0: k0, measure)
    return ObservableReport(
        name="emission_energy_integral",
        closed_form=emission_energy_closed(M, mu),
        oracle=M * val / E1,
        params={"M": M, "mu": mu, "frame_momentum": frame_momentum, "measure": measure},
        extra={"quad_abserr": M * err / E1},
    )


def emission_phase_space_closed(M: float, mu: float) -> float:
    return math.pi * (mu / M) * math.sqrt(1.0 + (mu / (2.0 * M)) ** 2)


def emission_phase_space_integral(M: float, mu: float, frame_momentum: float = 0.0) -> ObservableReport:
    """Lorentz-scalar emission integral delta(k^2 + mu^2) d^3p/(2E) delta^4(k - p + p1)."""
    if not (M > 0 and mu > 0):
        raise ValueError("M and mu must be positive")
    val, err, _ = _shell_integral(M, mu, frame_momentum, lambda k0: 1.0)
    return ObservableReport(
        name="emission_phase_space_integral",
        closed_form=emission_phase_space_closed(M, mu),
        oracle=val,
        params={"M": M, "mu": mu, "frame_momentum": frame_momentum},
        extra={"quad_abserr": err},
    )


def _kinematic_root(M, mu):
    return math.sqrt(1.0 + (mu / (2.0 * M)) ** 2)


def energy_rate_rel(n: int, params: ModelParams, T: float,
                    mass_coupling: bool = False) -> ObservableReport:
    """Energy gained by n free particles in time T at first order in gamma.

    Closed form (1/2pi^2) n gamma T mu^3/M sqrt(1 + (mu/2M)^2); with mass
    coupling it is multiplied by (M_i/M_N)^2.  The oracle assembles the same
    quantity as (1/pi^3) n gamma T M^2 C with C from the quadrature route.
    """
    M, mu = params.M, params.mu
    coupling = params.mass_ratio**2 if mass_coupling else 1.0
    base = n * params.gamma * T * coupling
    closed = base * mu**3 / (2 * math.pi**2 * M) * _kinematic_root(M, mu)
    mc = emission_energy_integral(M, mu)
    oracle = base * M**2 * (mc.oracle / M) / math.pi**3
    assembled = base * M**2 * (mc.closed_form / M) / math.pi**3
    extra = {
        "assembly_from_closed_C": assembled,
        "assembly_rel_err": abs(assembled - closed) / max(abs(closed), REL_ERR_FLOOR),
    }
    if mass_coupling and params.mass_ratio > 0:
        M_N = M / params.mass_ratio
        extra["massless_limit"] = n * params.gamma * T * mu**4 / ((2 * math.pi) ** 2 * M_N**2)
    return ObservableReport(name="energy_rate_rel", closed_form=closed, oracle=oracle,
                            params=params.as_dict() | {"n": n, "T": T, "mass_coupling": mass_coupling},
                            extra=extra)


# --- wave packets -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class WavePacket:
    """|Psi(p)|^2 as a 3-D Gaussian or a tabulated isotropic profile."""

    kind: str
    p0: np.ndarray | None = None
    sigma: float | None = None
    p_grid: np.ndarray | None = None
    density: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == "gaussian":
            if not (self.sigma is not None and self.sigma > 0):
                raise ValueError("sigma must be positive")
            object.__setattr__(self, "p0", np.asarray(self.p0, dtype=float).reshape(3))
        elif self.kind == "radial":
            p = np.asarray(self.p_grid, dtype=float)
            f = np.asarray(self.density, dtype=float)
            if p.ndim != 1 or p.shape != f.shape or p[0] != 0 or np.any(np.diff(p) <= 0):
                raise ValueError("radial profile needs increasing p_grid from 0 and matching density")
            if np.any(f < 0):
                raise ValueError("density must be non-negative")
            object.__setattr__(self, "p_grid", p)
            object.__setattr__(self, "density", f)
            norm = self.normalization()
            if abs(norm - 1.0) > 1e-8:
                raise ValueError(f"packet not normalized: integral = {norm!r}")
        else:
            raise ValueError(f"unknown packet kind {self.kind!r}")

    @classmethod
    def gaussian(cls, p0, sigma: float) -> "WavePacket":
        return cls(kind="gaussian", p0=p0, sigma=sigma)

    @classmethod
    def radial(cls, p_grid, density) -> "WavePacket":
        return cls(kind="radial", p_grid=p_grid, density=density)

    @property
    def width(self) -> float:
        if self.kind == "gaussian":
            return self.sigma
        r2 = self._radial_moment(lambda p: p**2)
        return math.sqrt(r2 / 3.0)

    def density_at(self, p):
        p = np.asarray(p, dtype=float)
        if self.kind == "gaussian":
            d2 = np.sum((p - self.p0) ** 2, axis=-1)
            return np.exp(-0.5 * d2 / self.sigma**2) / (2 * math.pi * self.sigma**2) ** 1.5
        r = np.linalg.norm(p, axis=-1)
        return np.where(r <= self.p_grid[-1], self._spline(np.minimum(r, self.p_grid[-1])), 0.0)

    @property
    def _spline(self):
        return interpolate.CubicSpline(self.p_grid, self.density)

    def _radial_moment(self, h):
        spl = self._spline
        f = lambda p: 4 * math.pi * p * p * float(spl(p)) * h(p)
        return integrate.quad(f, 0.0, self.p_grid[-1], points=self.p_grid[1:-1][:200],
                              epsabs=0.0, epsrel=1e-12, limit=max(400, 2 * len(self.p_grid)))[0]

    def normalization(self) -> float:
        if self.kind == "gaussian":
            return 1.0
        return self._radial_moment(lambda p: 1.0)

    def packet_integral(self, M: float, n_nodes: int = 24) -> float:
        """int d^3p |Psi(p)|^2 / (2E) by quadrature."""
        if self.kind == "radial":
            return self._radial_moment(lambda p: 0.5 / math.hypot(p, M))
        x, w = special.roots_hermitenorm(n_nodes)
        w = w / math.sqrt(2 * math.pi)
        P = self.p0 + self.sigma * np.stack(np.meshgrid(x, x, x, indexing="ij"), axis=-1)
        W = w[:, None, None] * w[None, :, None] * w[None, None, :]
        return float(np.sum(W * 0.5 / energy(P, M)))

    def narrow_estimate(self, M: float) -> tuple[float, float]:
        """1/(2E0) with its second-order correction, and the size of that correction.

        For a Gaussian, <1/E> = 1/E0 - (3/2) sigma^2 M^2 / E0^5 + O(sigma^4).
        """
        if self.kind != "gaussian":
            raise ValueError("narrow-packet expansion needs a Gaussian packet")
        E0 = float(energy(self.p0, M))
        corr = -1.5 * self.sigma**2 * M * M / E0**5
        return 0.5 * (1.0 / E0 + corr), abs(corr * E0)


def collapse_rate_rel(packet: WavePacket, params: ModelParams, T: float) -> ObservableReport:
    """First-order survival factor of a far-separated superposition.

    1 - (2/pi^2) gamma T mu M_i (M_i/M_N)^2 sqrt(1 + (mu/2M_i)^2) int d^3p |Psi|^2 / 2E.
    """
    if abs(packet.normalization() - 1.0) > 1e-8:
        raise ValueError("packet not normalized")
    M, mu = params.M, params.mu
    I = packet.packet_integral(M)
    decay = 2.0 / math.pi**2 * params.gamma * T * mu * M * params.mass_ratio**2 * _kinematic_root(M, mu) * I
    extra = {"packet_integral": I, "decay_term": decay, "first_order_valid": decay < 1.0}
    if packet.kind == "gaussian":
        E0 = float(energy(packet.p0, M))
        est, rel = packet.narrow_estimate(M)
        extra |= {"time_dilation": M / E0, "narrow_packet_integral": est,
                  "narrow_expansion_rel_size": rel}
    return ObservableReport(name="collapse_rate_rel", closed_form=1.0 - decay,
                            params=params.as_dict() | {"T": T}, extra=extra)


# --- vacuum checks ------------------------------------------------------------

@dataclass(frozen=True)
class VacuumRate:
    """Energy per unit time and volume: prefactor times int d^3k / (2 pi)^3.

    The mode integral diverges; ``with_cutoff`` evaluates it up to |k| = cutoff.
    """

    prefactor: float
    spectrum_tag: str

    @property
    def divergent(self) -> bool:
        return self.prefactor != 0.0

    def with_cutoff(self, cutoff: float) -> float:
        return self.prefactor * (4.0 * math.pi / 3.0) * cutoff**3 / (2 * math.pi) ** 3

    def __str__(self):
        if not self.divergent:
            return "0"
        return f"{self.prefactor!r} * int d^3k/(2pi)^3 (divergent)"


def vacuum_rate_density(spectrum: SpectralDensity, params: ModelParams) -> VacuumRate:
    """Vacuum excitation rate density; the prefactor is gamma * G~(mu^2)."""
    return VacuumRate(prefactor=params.gamma * spectrum.spectral_value(params.mu**2),
                      spectrum_tag=spectrum.tag)


def _minkowski_sq(p):
    return p[0] ** 2 - p[1] ** 2 - p[2] ** 2 - p[3] ** 2


def pair_production_support(spectrum: SpectralDensity, p1, p2, M: float, mu: float) -> float:
    """Spectral factor G~(s) / (s - mu^2)^2 with s = (p1 + p2)^2."""
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    for p in (p1, p2):
        if p.shape != (4,) or p[0] <= 0:
            raise ValueError("four-momenta need shape (4,) and positive energy")
        if abs(_minkowski_sq(p) - M * M) > 1e-8 * p[0] ** 2:
            raise ValueError("four-momentum is off the mass shell")
    s = _minkowski_sq(p1 + p2)
    return spectrum.spectral_value(s) / (s - mu * mu) ** 2


def support_gap(M: float, mu: float) -> float:
    """Smallest (p1 + p2)^2 - (-mu^2) over two mass shells: 4M^2 + mu^2."""
    return 4.0 * M * M + mu * mu


def lightcone_bound_integral(M: float, upper: float = math.inf) -> float:
    """int_0^upper M^2 / E^3 dk, with the tail beyond 50 M added analytically."""
    if not M > 0:
        raise ValueError("M must be positive")
    f = lambda k: M * M / (k * k + M * M) ** 1.5
    cut = min(upper, 50.0 * M)
    val = integrate.quad(f, 0.0, cut, epsabs=0.0, epsrel=1e-13, limit=200)[0]
    if upper > cut:
        # int_cut^upper from the antiderivative k/E, written to avoid cancellation
        def rest(k):
            if math.isinf(k):
                return 0.0
            E = math.hypot(k, M)
            return M * M / (E * (E + k))
        val += rest(cut) - rest(upper)
    return val
