"""Nonrelativistic collapse dynamics with H = 0.

For a superposition of density eigenstates the evolved amplitudes are

    a_i(t) = c_i exp(-Q_i(t) / 4 lam),  Q_i(t) = (w - 2 lam n_i) . K . (w - 2 lam n_i)

with the quadratic form restricted to [t0, t].  Everything is carried in
log space because the exponents easily exceed the float range.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, linalg, special, stats

from .noise import (
    NoiseRealization,
    SpacetimeGrid,
    SpatialGrid,
    SpectralDensity,
    derive_seeds,
    lattice_kernel,
    sample_posterior_batch,
)
from .params import ModelParams

__all__ = [
    "SuperpositionState",
    "TrajectoryRecord",
    "EnsembleResult",
    "CollapseStatistics",
    "MartingaleReport",
    "ShortRunWarning",
    "point_clumps",
    "evolve_trajectory",
    "run_ensemble",
    "collapse_statistics",
    "martingale_check",
    "ensemble_coherence",
    "spatial_overlap",
    "colored_time_factor",
    "offdiag_decay_exponent",
    "trajectory_exponent",
    "csl_energy_rate",
    "csl_offdiag_massratio",
    "time_ordering_identity_residual",
    "wilson_interval",
]


class ShortRunWarning(UserWarning):
    """Too many trajectories were still undecided at the final time."""


@dataclass(frozen=True, eq=False)
class SuperpositionState:
    """Amplitudes c_i over density configurations n_i on a spatial grid."""

    amplitudes: np.ndarray
    densities: np.ndarray
    grid: SpatialGrid

    def __post_init__(self):
        c = np.asarray(self.amplitudes, dtype=complex).ravel()
        n = np.atleast_2d(np.asarray(self.densities, dtype=float))
        if n.shape != (len(c), self.grid.n_sites):
            raise ValueError(f"densities must have shape {(len(c), self.grid.n_sites)}, got {n.shape}")
        if np.any(n < 0):
            raise ValueError("densities must be non-negative")
        c.setflags(write=False)
        n.setflags(write=False)
        object.__setattr__(self, "amplitudes", c)
        object.__setattr__(self, "densities", n)
        self.check_normalized()

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @property
    def n_branches(self) -> int:
        return len(self.amplitudes)

    def check_normalized(self, tol: float = 1e-10) -> None:
        total = self.probabilities.sum()
        if abs(total - 1.0) > tol:
            raise ValueError(f"state not normalized: sum |c|^2 = {total!r}")

    def has_distinct_pair(self) -> bool:
        n = self.densities
        return any(not np.array_equal(n[i], n[j])
                   for i in range(len(n)) for j in range(i + 1, len(n)))


def point_clumps(grid: SpatialGrid, probabilities, sites, n_particles: float = 1.0,
                 phases=None) -> SuperpositionState:
    """Branch i holds ``n_particles`` on lattice site ``sites[i]``."""
    p = np.asarray(probabilities, dtype=float)
    c = np.sqrt(p).astype(complex)
    if phases is not None:
        c = c * np.exp(1j * np.asarray(phases))
    dens = np.zeros((len(p), grid.n_sites))
    for i, s in enumerate(sites):
        dens[i, s] = n_particles / grid.cell_volume
    return SuperpositionState(amplitudes=c, densities=dens, grid=grid)


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    """Squared amplitudes at the cell edges t0, t0+dt, ..., t1."""

    times: np.ndarray
    log_norms: np.ndarray      # log |a_i(t)|^2, unnormalized
    normalized: np.ndarray     # |a_i(t)|^2 / sum_j |a_j(t)|^2
    final_branch: int | None
    seed: int | None

    @property
    def norms(self) -> np.ndarray:
        with np.errstate(under="ignore"):
            return np.exp(self.log_norms)

    def to_csv(self, path) -> None:
        k = self.normalized.shape[1]
        cols = ["t"] + [f"abs_a{i + 1}_sq" for i in range(k)] + [f"norm_a{i + 1}_sq" for i in range(k)]
        table = np.column_stack([self.times, self.norms, self.normalized])
        np.savetxt(path, table, delimiter=",", header=",".join(cols), comments="", fmt="%.17g")


def _cumulative_quad_forms(D, kernel):
    """Q(t) at every cell edge for fields D of shape (n_traj, n_t, n_s)."""
    n_traj, n_t, _ = D.shape
    DS = D @ kernel.K_s
    out = np.zeros((n_traj, n_t + 1))
    if kernel.time_diagonal:
        out[:, 1:] = np.cumsum(kernel.K_t[0, 0] * np.einsum("nts,nts->nt", DS, D), axis=1)
        return out
    M = np.einsum("nas,nbs->nab", DS, D) * kernel.K_t
    C = np.cumsum(np.cumsum(M, axis=1), axis=2)
    out[:, 1:] = np.diagonal(C, axis1=1, axis2=2)
    return out


def _log_norms(W, state, params, kernel, chunk=2000):
    """log |a_i(t)|^2 for a stack of fields; shape (n_traj, n_t + 1, k)."""
    means = 2.0 * params.lam * state.densities
    with np.errstate(divide="ignore"):
        logc = np.log(state.probabilities)
    out = np.empty((W.shape[0], W.shape[1] + 1, state.n_branches))
    for lo in range(0, W.shape[0], chunk):
        Wc = W[lo:lo + chunk]
        for i in range(state.n_branches):
            Q = _cumulative_quad_forms(Wc - means[i], kernel)
            out[lo:lo + chunk, :, i] = logc[i] - Q / (2.0 * params.lam)
    return out


def _normalize(log_norms):
    return np.exp(log_norms - special.logsumexp(log_norms, axis=-1, keepdims=True))


def evolve_trajectory(state: SuperpositionState, w: NoiseRealization, params: ModelParams,
                      spectrum: SpectralDensity, decision_threshold: float = 0.999) -> TrajectoryRecord:
    """Evolve the amplitudes under one noise realization."""
    if w.grid.space != state.grid:
        raise ValueError("noise grid and state grid differ")
    kernel = lattice_kernel(spectrum, w.grid)
    logn = _log_norms(w.values[None], state, params, kernel)[0]
    norm = _normalize(logn)
    final = int(np.argmax(norm[-1]))
    if norm[-1, final] <= decision_threshold:
        final = None
    return TrajectoryRecord(times=w.grid.edges, log_norms=logn, normalized=norm,
                            final_branch=final, seed=w.seed)


def wilson_interval(k: int, n: int, z: float = 3.0) -> tuple[float, float]:
    """Wilson score interval at ``z`` standard deviations."""
    confidence = 1.0 - 2.0 * stats.norm.sf(z)
    ci = stats.binomtest(int(k), int(n)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass(frozen=True, eq=False)
class EnsembleResult:
    times: np.ndarray
    normalized: np.ndarray        # (n_traj, n_times, k)
    branches_drawn: np.ndarray    # diagnostics only
    seeds: list = field(repr=False)


def run_ensemble(state, params, spectrum, grid: SpacetimeGrid, n_trajectories: int,
                 seed: int) -> EnsembleResult:
    """Posterior-sampled trajectories; trajectory j uses child seed j of ``seed``."""
    seeds = derive_seeds(seed, n_trajectories)
    branches, W = sample_posterior_batch(state, params, spectrum, grid, seeds)
    kernel = lattice_kernel(spectrum, grid)
    norm = _normalize(_log_norms(W, state, params, kernel))
    return EnsembleResult(times=grid.edges, normalized=norm, branches_drawn=branches, seeds=seeds)


@dataclass(frozen=True)
class CollapseStatistics:
    counts: np.ndarray
    n_trajectories: int
    frequencies: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    undecided_fraction: float
    z: float

    def to_csv(self, path) -> None:
        rows = ["branch,frequency,ci_low,ci_high"]
        for i, f in enumerate(self.frequencies):
            rows.append(f"{i + 1},{f!r},{self.ci_low[i]!r},{self.ci_high[i]!r}")
        rows.append(f"undecided,{self.undecided_fraction!r},,")
        with open(path, "w") as fh:
            fh.write("\n".join(rows) + "\n")


def _collapse_stats_from(ens, decision_threshold, z):
    final = ens.normalized[:, -1, :]
    winner = final.argmax(axis=1)
    decided = final.max(axis=1) > decision_threshold
    k = final.shape[1]
    n = final.shape[0]
    counts = np.array([np.sum(decided & (winner == i)) for i in range(k)])
    cis = [wilson_interval(c, n, z) for c in counts]
    undecided = 1.0 - decided.mean()
    if undecided > 0.1:
        warnings.warn(f"{undecided:.1%} of trajectories undecided; T is too short", ShortRunWarning,
                      stacklevel=3)
    return CollapseStatistics(counts=counts, n_trajectories=n, frequencies=counts / n,
                              ci_low=np.array([c[0] for c in cis]),
                              ci_high=np.array([c[1] for c in cis]),
                              undecided_fraction=float(undecided), z=z)


def collapse_statistics(state, params, spectrum, grid, n_trajectories: int, seed: int,
                        decision_threshold: float = 0.999, z: float = 3.0,
                        ensemble: EnsembleResult | None = None) -> CollapseStatistics:
    """Fraction of trajectories ending in each branch, with Wilson intervals."""
    if n_trajectories < 100:
        raise ValueError("need at least 100 trajectories")
    if not 0.5 < decision_threshold < 1.0:
        raise ValueError("decision threshold must lie in (0.5, 1)")
    if ensemble is None:
        ensemble = run_ensemble(state, params, spectrum, grid, n_trajectories, seed)
    return _collapse_stats_from(ensemble, decision_threshold, z)


@dataclass(frozen=True)
class MartingaleReport:
    max_abs_deviation: float
    max_z: float                  # deviation in standard errors
    mean: np.ndarray              # (n_times, k)
    sem: np.ndarray


def martingale_check(state, params, spectrum, grid, n_trajectories: int, seed: int,
                     ensemble: EnsembleResult | None = None) -> MartingaleReport:
    """Compare ensemble means of normalized |a_i(t)|^2 with |c_i|^2 at every time."""
    if ensemble is None:
        ensemble = run_ensemble(state, params, spectrum, grid, n_trajectories, seed)
    x = ensemble.normalized
    mean = x.mean(axis=0)
    sem = x.std(axis=0, ddof=1) / math.sqrt(x.shape[0])
    dev = np.abs(mean - state.probabilities)
    # identical trajectories (e.g. at t0) leave only round-off in sem and dev
    spread = sem > 1e-12
    zs = np.where(spread, dev / np.where(spread, sem, 1.0), np.where(dev > 1e-12, np.inf, 0.0))
    return MartingaleReport(max_abs_deviation=float(dev.max()), max_z=float(zs.max()),
                            mean=mean, sem=sem)


def ensemble_coherence(state, params, spectrum, grid, n_trajectories: int, seed: int,
                       i: int = 0, j: int = 1) -> tuple[float, float]:
    """Monte Carlo estimate of rho_ij(T) / (c_i c_j*) and its standard error.

    Averages a_i a_j* / <psi|psi> over posterior noise, which is the
    density-matrix element.
    """
    seeds = derive_seeds(seed, n_trajectories)
    _, W = sample_posterior_batch(state, params, spectrum, grid, seeds)
    logn = _log_norms(W, state, params, lattice_kernel(spectrum, grid))[:, -1, :]
    with np.errstate(divide="ignore"):
        logc = np.log(state.probabilities)
    # |a_i||a_j| / sum |a_k|^2, divided by |c_i||c_j|
    ratio = np.exp(0.5 * (logn[:, i] - logc[i] + logn[:, j] - logc[j])
                   - special.logsumexp(logn, axis=1))
    return float(ratio.mean()), float(ratio.std(ddof=1) / math.sqrt(len(ratio)))


def spatial_overlap(n_i, n_j, spectrum: SpectralDensity, grid: SpatialGrid) -> float:
    """Lattice double integral of (n_i - n_j) G_s (n_i - n_j) over space."""
    d = np.asarray(n_i, dtype=float) - np.asarray(n_j, dtype=float)
    if d.shape != (grid.n_sites,):
        raise ValueError("densities must live on the given grid")
    if spectrum.delta_in_space:
        return float(spectrum.scale * grid.cell_volume * d @ d)
    K = grid.cell_volume**2 * spectrum.spatial_profile(grid.distances())
    return float(d @ K @ d)


def colored_time_factor(T: float, spectrum: SpectralDensity, method: str = "closed") -> float:
    """Double time integral of the time kernel over [0, T]^2.

    Equals 2T int_0^T g - 2 int_0^T tau g; ``method="quadrature"``
    evaluates exactly that expression with adaptive quadrature, while
    ``"closed"`` uses the error-function form for the Gaussian kernel.
    """
    if T < 0:
        raise ValueError("T must be non-negative")
    if spectrum.delta_in_time:
        return float(T)
    tc = spectrum.tau_c
    if method == "closed":
        return (T * math.erf(T / (math.sqrt(2) * tc))
                - 2 * tc / math.sqrt(2 * math.pi) * -math.expm1(-0.5 * (T / tc) ** 2))
    if method == "quadrature":
        g = spectrum.temporal_profile
        opts = dict(epsabs=0.0, epsrel=1e-13, limit=200)
        first = integrate.quad(lambda s: float(g(s)), 0.0, T, **opts)[0]
        second = integrate.quad(lambda s: s * float(g(s)), 0.0, T, **opts)[0]
        return 2 * T * first - 2 * second
    raise ValueError(f"unknown method {method!r}")


def offdiag_decay_exponent(n_i, n_j, params: ModelParams, spectrum: SpectralDensity,
                           T: float, grid: SpatialGrid) -> float:
    """Exponent of |rho_ij(T) / (c_i c_j*)| after duration T."""
    return -0.5 * params.lam * colored_time_factor(T, spectrum) * spatial_overlap(n_i, n_j, spectrum, grid)


def trajectory_exponent(n_i, n_j, params, spectrum, T, grid) -> float:
    """Exponent of the j-th amplitude when the noise sits exactly on branch i."""
    return 2.0 * offdiag_decay_exponent(n_i, n_j, params, spectrum, T, grid)


def csl_energy_rate(n_particles: int, params: ModelParams, T: float) -> float:
    """Mean energy gained by n free particles in time T under CSL."""
    return 0.75 * n_particles * params.lam * T * params.mu**2 / params.M


def csl_offdiag_massratio(params: ModelParams, T: float) -> float:
    """First-order survival factor 1 - lam T (M_i/M_N)^2 of a superposition."""
    decay = params.lam * T * params.mass_ratio**2
    if decay >= 1.0:
        warnings.warn(f"first-order factor invalid: lam T (M_i/M_N)^2 = {decay:.3g} >= 1",
                      RuntimeWarning, stacklevel=2)
    return 1.0 - decay


# --- time-ordering identity -------------------------------------------------

class MagnusStepWarning(RuntimeWarning):
    """Step too large for the Magnus series to converge."""


def _random_antihermitian(rng, dim):
    X = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    A = 0.5 * (X - X.conj().T)
    return A / np.linalg.norm(A, 2)


def _generator_path(kind, dim, seed, T):
    """Return (A(t), dA/dt(t)) for the chosen family of paths with A(0) = 0."""
    rng = np.random.default_rng(seed)
    if kind == "random":
        Bs = [_random_antihermitian(rng, dim) for _ in range(3)]
        om = rng.uniform(1.0, 3.0, size=3) / T
        amp = rng.uniform(0.5, 1.5, size=3)

        def A(t):
            return sum(a * math.sin(o * t) * B for a, o, B in zip(amp, om, Bs))

        def dA(t):
            return sum(a * o * math.cos(o * t) * B for a, o, B in zip(amp, om, Bs))
    elif kind == "commuting":
        B = _random_antihermitian(rng, dim)
        c = rng.uniform(-1.0, 1.0, size=4)
        # quartic f: the two-point Gauss rule integrates f' exactly
        f = np.polynomial.Polynomial([0.0, *c])
        fp = f.deriv()

        def A(t):
            return f(t / T) * B

        def dA(t):
            return fp(t / T) / T * B
    elif kind == "closed":
        B1 = _random_antihermitian(rng, dim)
        B2 = _random_antihermitian(rng, dim)

        def A(t):
            return math.sin(math.pi * t / T) * B1 + math.sin(2 * math.pi * t / T) * B2

        def dA(t):
            return (math.pi / T * math.cos(math.pi * t / T) * B1
                    + 2 * math.pi / T * math.cos(2 * math.pi * t / T) * B2)
    elif kind == "zero":
        def A(t):
            return np.zeros((dim, dim), dtype=complex)

        def dA(t):
            return np.zeros((dim, dim), dtype=complex)
    else:
        raise ValueError(f"unknown path kind {kind!r}")
    return A, dA


_ALPHA_X, _ALPHA_W = np.polynomial.legendre.leggauss(16)
_ALPHA_X = 0.5 * (_ALPHA_X + 1.0)
_ALPHA_W = 0.5 * _ALPHA_W


def _alpha_averaged_generator(A, dA):
    """int_0^1 e^{alpha A} dA e^{-alpha A} d alpha by Gauss-Legendre quadrature."""
    H = -1j * A                       # Hermitian
    h, V = np.linalg.eigh(0.5 * (H + H.conj().T))
    Dp = V.conj().T @ dA @ V
    gap = h[:, None] - h[None, :]
    weights = np.sum(_ALPHA_W[:, None, None] * np.exp(1j * _ALPHA_X[:, None, None] * gap), axis=0)
    return V @ (Dp * weights) @ V.conj().T


def time_ordering_identity_residual(dim: int, n_steps: int, seed: int, path: str = "random",
                                    T: float = 1.0, return_matrices: bool = False):
    """Compare exp(A(T)) with the time-ordered exponential of the alpha-averaged generator.

    The time-ordered product is built with the fourth-order Magnus
    integrator (two Gauss points per step).  Returns the largest elementwise
    difference divided by the largest element of exp(A(T)).
    """
    if not 1 <= dim <= 6:
        raise ValueError("dim must be between 1 and 6")
    if n_steps < 1:
        raise ValueError("n_steps must be positive")
    A, dA = _generator_path(path, dim, seed, T)
    h = T / n_steps
    c1, c2 = 0.5 - math.sqrt(3) / 6, 0.5 + math.sqrt(3) / 6
    U = np.eye(dim, dtype=complex)
    worst = 0.0
    for n in range(n_steps):
        t = n * h
        O1 = _alpha_averaged_generator(A(t + c1 * h), dA(t + c1 * h))
        O2 = _alpha_averaged_generator(A(t + c2 * h), dA(t + c2 * h))
        worst = max(worst, h * max(np.linalg.norm(O1, 2), np.linalg.norm(O2, 2)))
        theta = 0.5 * h * (O1 + O2) + (math.sqrt(3) / 12) * h * h * (O2 @ O1 - O1 @ O2)
        U = linalg.expm(theta) @ U
    if worst >= math.pi:
        warnings.warn(f"h*|Omega| = {worst:.3g} exceeds pi; increase n_steps",
                      MagnusStepWarning, stacklevel=2)
    exact = linalg.expm(A(T))
    residual = float(np.abs(U - exact).max() / np.abs(exact).max())
    if return_matrices:
        return residual, U, exact
    return residual
