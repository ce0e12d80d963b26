"""Classical noise fields on a spacetime lattice.

A kernel G(x - x') is discretized so that the lattice quadratic form
``f.T @ K @ f`` reproduces the continuum double integral of f G f.  Every
supported kernel factorizes into time and space, ``K = K_t (x) K_s``, and
fields are stored as arrays of shape ``(n_steps, n_sites)``.

With H = 0 the probability functional of the noise is a Gaussian mixture:
branch i with weight |c_i|^2, mean 2 lam n_i(x) and covariance lam K^-1.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, linalg, special

from .correlator import g_nonrel_limit

__all__ = [
    "SpatialGrid",
    "SpacetimeGrid",
    "SpectralDensity",
    "NoiseRealization",
    "SingularKernelError",
    "LatticeKernel",
    "lattice_kernel",
    "lattice_spectral_weights",
    "spectrum_from_tag",
    "sample_posterior_noise",
    "sample_posterior_batch",
    "sample_free_field",
    "log_probability",
    "gaussian_ft_identity_residual",
    "derive_seeds",
]

KINDS = ("white", "gaussian_spatial", "tachyonic")
_COND_LIMIT = 1e12


@dataclass(frozen=True)
class SpatialGrid:
    """Regular grid with ``n`` points per axis in ``dim`` dimensions."""

    n: int
    spacing: float
    dim: int = 1
    origin: float = 0.0

    def __post_init__(self):
        if self.dim not in (1, 3):
            raise ValueError(f"dim must be 1 or 3, got {self.dim}")
        if self.n < 1:
            raise ValueError("need at least one point per axis")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")

    @property
    def n_sites(self) -> int:
        return self.n**self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def axis(self) -> np.ndarray:
        return self.origin + self.spacing * np.arange(self.n)

    @property
    def coords(self) -> np.ndarray:
        """Site coordinates, shape ``(n_sites, dim)``, last axis fastest."""
        mesh = np.meshgrid(*([self.axis] * self.dim), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def distances(self) -> np.ndarray:
        c = self.coords
        return np.sqrt(((c[:, None, :] - c[None, :, :]) ** 2).sum(-1))


@dataclass(frozen=True)
class SpacetimeGrid:
    """Spatial grid times ``n_steps`` equal time cells covering [t0, t1]."""

    space: SpatialGrid
    t0: float
    t1: float
    n_steps: int

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise ValueError("need t1 > t0")
        if self.n_steps < 1:
            raise ValueError("need at least one time step")

    @property
    def dt(self) -> float:
        return (self.t1 - self.t0) / self.n_steps

    @property
    def times(self) -> np.ndarray:
        """Cell midpoints, where field values live."""
        return self.t0 + self.dt * (np.arange(self.n_steps) + 0.5)

    @property
    def edges(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_steps, self.space.n_sites)

    @property
    def n_sites(self) -> int:
        return self.n_steps * self.space.n_sites

    @property
    def cell_volume(self) -> float:
        return self.space.cell_volume * self.dt


@dataclass(frozen=True)
class SpectralDensity:
    """Noise spectrum.

    ``white`` has G~ = scale.  ``gaussian_spatial`` is the GRW profile
    exp(-r^2/4a^2).  ``tachyonic`` is a top-hat of height 1/epsilon in k^2
    around -mu^2; on a lattice it is realized by its equal-time limit
    sin(r/a)/(4 pi^2 r), because the full kernel diverges on the light cone.
    ``tau_c > 0`` replaces delta(t - t') by a normalized Gaussian of that
    width, giving coloured time correlations.
    """

    kind: str
    a: float = 1.0
    mu: float = 1.0
    epsilon: float | None = None
    scale: float = 1.0
    tau_c: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown spectrum kind {self.kind!r}; choose from {KINDS}")
        if self.epsilon is None:
            object.__setattr__(self, "epsilon", 1e-3 * self.mu**2)
        if not (self.a > 0 and self.mu > 0 and self.epsilon > 0):
            raise ValueError("a, mu and epsilon must be positive")
        if self.scale < 0 or self.tau_c < 0:
            raise ValueError("scale and tau_c must be non-negative")

    @property
    def tag(self) -> str:
        return (f"{self.kind};a={self.a!r};mu={self.mu!r};epsilon={self.epsilon!r};"
                f"scale={self.scale!r};tau_c={self.tau_c!r}")

    @property
    def delta_in_space(self) -> bool:
        return self.kind == "white"

    @property
    def delta_in_time(self) -> bool:
        return self.tau_c == 0.0

    def spectral_value(self, k2: float) -> float:
        """G~ at invariant k^2 (metric +---), evaluated in the rest frame of k."""
        if self.kind == "white":
            g = 1.0
        elif self.kind == "tachyonic":
            g = 1.0 / self.epsilon if abs(k2 + self.mu**2) <= 0.5 * self.epsilon else 0.0
        else:
            k0_sq, kvec_sq = (k2, 0.0) if k2 >= 0 else (0.0, -k2)
            g = (4 * math.pi * self.a**2) ** 1.5 * math.exp(-self.a**2 * kvec_sq)
            g *= math.exp(-0.5 * self.tau_c**2 * k0_sq)
            return self.scale * g
        if self.tau_c > 0 and k2 >= 0:
            g *= math.exp(-0.5 * self.tau_c**2 * k2)
        return self.scale * g

    def spatial_profile(self, r):
        """Continuum spatial kernel G_s(r); not defined for the white kind."""
        r = np.asarray(r, dtype=float)
        if self.kind == "gaussian_spatial":
            return self.scale * np.exp(-r**2 / (4 * self.a**2))
        if self.kind == "tachyonic":
            return self.scale * g_nonrel_limit(r, self.mu)
        raise ValueError("white noise has a delta-function spatial kernel")

    def temporal_profile(self, tau):
        """Normalized Gaussian time kernel; not defined when tau_c = 0."""
        if self.tau_c == 0:
            raise ValueError("tau_c = 0 means a delta-function time kernel")
        tau = np.asarray(tau, dtype=float)
        return np.exp(-0.5 * (tau / self.tau_c) ** 2) / (math.sqrt(2 * math.pi) * self.tau_c)


def spectrum_from_tag(tag: str) -> SpectralDensity:
    kind, *items = tag.split(";")
    kw = {}
    for item in items:
        k, v = item.split("=", 1)
        kw[k] = float(v)
    return SpectralDensity(kind=kind, **kw)


class SingularKernelError(np.linalg.LinAlgError):
    """The discretized kernel cannot be inverted on this lattice."""

    def __init__(self, message, condition):
        super().__init__(f"{message} (condition estimate {condition:.3e})")
        self.condition = condition


def _factor(K, what):
    evals = np.linalg.eigvalsh(K)
    top = evals.max()
    cond = top / evals.min() if evals.min() > 0 else math.inf
    if not top > 0 or cond > _COND_LIMIT:
        raise SingularKernelError(f"{what} kernel matrix is singular on this lattice", cond)
    try:
        L = linalg.cholesky(K, lower=True)
    except linalg.LinAlgError as exc:
        raise SingularKernelError(f"{what} kernel matrix is not positive definite", cond) from exc
    return L, cond


@dataclass(frozen=True, eq=False)
class LatticeKernel:
    """Discretized kernel ``K = K_t (x) K_s`` with cached factorizations."""

    spectrum: SpectralDensity
    grid: SpacetimeGrid
    K_t: np.ndarray = field(repr=False)
    K_s: np.ndarray = field(repr=False)

    @property
    def time_diagonal(self) -> bool:
        return self.spectrum.delta_in_time

    @functools.cached_property
    def _chol(self):
        L_t, c_t = _factor(self.K_t, "time")
        L_s, c_s = _factor(self.K_s, "space")
        return L_t, L_s, c_t * c_s

    @property
    def condition(self) -> float:
        return self._chol[2]

    @functools.cached_property
    def logdet(self) -> float:
        L_t, L_s, _ = self._chol
        n_t, n_s = self.grid.shape
        return 2.0 * (n_s * np.log(np.diag(L_t)).sum() + n_t * np.log(np.diag(L_s)).sum())

    def quad_form(self, F: np.ndarray) -> np.ndarray:
        """``f.T K f`` for fields of shape (..., n_steps, n_sites)."""
        FS = F @ self.K_s
        if self.time_diagonal:
            return self.K_t[0, 0] * np.einsum("...ts,...ts->...", FS, F)
        return np.einsum("ab,...as,...bs->...", self.K_t, FS, F)

    def whiten_inverse(self, Z: np.ndarray) -> np.ndarray:
        """Map a (n_steps, n_sites) array of standard normals to covariance K^-1."""
        L_t, L_s, _ = self._chol
        # vec(L_t^-T Z L_s^-1) has covariance (L_t L_t^T)^-1 (x) (L_s L_s^T)^-1
        X = linalg.solve_triangular(L_t, Z, lower=True, trans="T")
        return linalg.solve_triangular(L_s, X.T, lower=True, trans="T").T

    def spectral_weights(self) -> np.ndarray:
        """Eigenvalues of the lattice covariance kernel K / v^2."""
        v = self.grid.cell_volume
        e_t = np.linalg.eigvalsh(self.K_t)
        e_s = np.linalg.eigvalsh(self.K_s)
        return np.outer(e_t, e_s).ravel() / v**2


@functools.lru_cache(maxsize=64)
def lattice_kernel(spectrum: SpectralDensity, grid: SpacetimeGrid) -> LatticeKernel:
    """Discretize ``spectrum`` on ``grid`` (cached; results are read-only)."""
    sp = grid.space
    if spectrum.delta_in_space:
        K_s = spectrum.scale * sp.cell_volume * np.eye(sp.n_sites)
    else:
        K_s = sp.cell_volume**2 * spectrum.spatial_profile(sp.distances())
    dt = grid.dt
    if spectrum.delta_in_time:
        K_t = dt * np.eye(grid.n_steps)
    else:
        tt = grid.times
        K_t = dt * dt * spectrum.temporal_profile(tt[:, None] - tt[None, :])
    K_s.setflags(write=False)
    K_t.setflags(write=False)
    return LatticeKernel(spectrum=spectrum, grid=grid, K_t=K_t, K_s=K_s)


def lattice_spectral_weights(spectrum: SpectralDensity, grid: SpacetimeGrid) -> np.ndarray:
    return lattice_kernel(spectrum, grid).spectral_weights()


@dataclass(frozen=True, eq=False)
class NoiseRealization:
    """A sampled field on a lattice with what is needed to regenerate it."""

    grid: SpacetimeGrid
    values: np.ndarray
    seed: int
    spectrum_tag: str

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("noise values must be finite")

    def to_csv(self, path) -> None:
        sp = self.grid.space
        coords = sp.coords
        names = ["t"] + ["x", "y", "z"][: sp.dim] + ["w"]
        t = np.repeat(self.grid.times, sp.n_sites)
        xyz = np.tile(coords, (self.grid.n_steps, 1))
        table = np.column_stack([t, xyz, self.values.ravel()])
        np.savetxt(path, table, delimiter=",", header=",".join(names), comments="",
                   fmt="%.17g")

    def save(self, path) -> None:
        """Binary round-trip format (numpy ``.npz``)."""
        g = self.grid
        np.savez(path, values=self.values, seed=np.uint64(self.seed),
                 spectrum_tag=np.array(self.spectrum_tag),
                 grid=np.array([g.space.n, g.space.spacing, g.space.dim, g.space.origin,
                                g.t0, g.t1, g.n_steps], dtype=float))

    @classmethod
    def load(cls, path) -> "NoiseRealization":
        with np.load(path) as f:
            n, spacing, dim, origin, t0, t1, n_steps = f["grid"]
            grid = SpacetimeGrid(SpatialGrid(int(n), float(spacing), int(dim), float(origin)),
                                 float(t0), float(t1), int(n_steps))
            return cls(grid=grid, values=f["values"].copy(), seed=int(f["seed"]),
                       spectrum_tag=str(f["spectrum_tag"]))


def derive_seeds(master: int, n: int, *path: int) -> list[int]:
    """Child seeds: master -> path (experiment ids) -> n leaves, as 64-bit ints."""
    ss = np.random.SeedSequence(master, spawn_key=tuple(path))
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in ss.spawn(n)]


def _check_state(state, grid):
    if state.grid != grid.space:
        raise ValueError("state grid does not match the noise grid")


def _branch_means(state, params):
    return 2.0 * params.lam * state.densities  # (n_branches, n_sites)


def _draw_one(rng, probs, kernel, means, lam):
    i = int(rng.choice(len(probs), p=probs))
    Z = rng.standard_normal(kernel.grid.shape)
    return i, means[i] + math.sqrt(lam) * kernel.whiten_inverse(Z)


def sample_posterior_noise(state, params, spectrum: SpectralDensity, grid: SpacetimeGrid,
                           seed: int, hamiltonian=None):
    """Exact draw from the H = 0 probability functional.

    Returns ``(branch_index, NoiseRealization)``; the index is for
    diagnostics and plays no part in trajectory evolution.
    """
    if hamiltonian is not None:
        raise NotImplementedError("exact posterior sampling requires H = 0")
    state.check_normalized()
    _check_state(state, grid)
    kernel = lattice_kernel(spectrum, grid)
    rng = np.random.default_rng(seed)
    i, W = _draw_one(rng, state.probabilities, kernel, _branch_means(state, params), params.lam)
    return i, NoiseRealization(grid=grid, values=W, seed=seed, spectrum_tag=spectrum.tag)


def sample_posterior_batch(state, params, spectrum, grid, seeds):
    """Stack of posterior draws, one generator per seed.

    Row j equals ``sample_posterior_noise(..., seed=seeds[j])`` exactly.
    """
    state.check_normalized()
    _check_state(state, grid)
    kernel = lattice_kernel(spectrum, grid)
    means = _branch_means(state, params)
    probs = state.probabilities
    branches = np.empty(len(seeds), dtype=int)
    W = np.empty((len(seeds),) + grid.shape)
    for j, s in enumerate(seeds):
        branches[j], W[j] = _draw_one(np.random.default_rng(s), probs, kernel, means, params.lam)
    return branches, W


def sample_free_field(spectrum: SpectralDensity, grid: SpacetimeGrid, seed: int,
                     gamma: float = 1.0) -> NoiseRealization:
    """Zero-mean field with two-point function (gamma/2) G on the lattice.

    Uses the eigen-factorization of the lattice kernel; a spectrum with a
    negative lattice weight is rejected.
    """
    kernel = lattice_kernel(spectrum, grid)
    v = grid.cell_volume
    factors = []
    for K in (kernel.K_t, kernel.K_s):
        e, U = np.linalg.eigh(K)
        if e.min() < -1e-12 * max(e.max(), 0.0) or e.max() <= 0:
            raise ValueError(f"spectrum has negative lattice weight {e.min():.3e}")
        factors.append(U * np.sqrt(np.clip(e, 0.0, None)))
    A_t, A_s = factors
    Z = np.random.default_rng(seed).standard_normal(grid.shape)
    W = math.sqrt(0.5 * gamma) / v * (A_t @ Z @ A_s.T)
    return NoiseRealization(grid=grid, values=W, seed=seed, spectrum_tag=spectrum.tag)


def log_probability(w: NoiseRealization, state, params, spectrum: SpectralDensity) -> float:
    """log P_T(w), normalized as a density over the lattice values of w."""
    _check_state(state, w.grid)
    kernel = lattice_kernel(spectrum, w.grid)
    D = w.values[None] - _branch_means(state, params)[:, None, :]
    Q = kernel.quad_form(D)
    n = w.grid.n_sites
    const = -0.5 * n * math.log(2 * math.pi * params.lam) + 0.5 * kernel.logdet
    with np.errstate(divide="ignore"):
        logc = np.log(state.probabilities)
    return float(special.logsumexp(logc - Q / (2 * params.lam)) + const)


def _ft_rhs_adaptive(u, G, Ginv, alpha):
    n = len(u)
    pref = (alpha / (2 * math.pi)) ** (n / 2) / math.sqrt(np.linalg.det(G))
    # Gaussian factor width along each axis sets the box
    half = 12.0 * np.sqrt(np.diag(G) / alpha)
    opts = {"epsabs": 1e-13, "epsrel": 1e-12, "limit": 400}

    def integrand(*eta):
        eta = np.array(eta)
        return math.exp(-0.5 * alpha * eta @ Ginv @ eta) * math.cos(eta @ u)

    ranges = [(-h, h) for h in half]
    val, _ = integrate.nquad(integrand, ranges, opts=[opts] * n)
    return pref * val


def _ft_rhs_hermite(u, G, Ginv, alpha, n_nodes=40):
    n = len(u)
    x, wts = special.roots_hermitenorm(n_nodes)
    wts = wts / math.sqrt(2 * math.pi)
    L = np.linalg.cholesky(G)
    # eta = L z / sqrt(alpha) turns the Gaussian factor into exp(-|z|^2/2)
    b = L.T @ u / math.sqrt(alpha)
    total = 0.0
    for idx in itertools.product(range(n_nodes), repeat=n):
        z = x[list(idx)]
        total += np.prod(wts[list(idx)]) * math.cos(z @ b)
    return total


def gaussian_ft_identity_residual(dimension: int, G_matrix, alpha: float, seed: int,
                                  n_points: int = 3, method: str | None = None,
                                  offsets=None) -> float:
    """Max relative residual between a Gaussian and its Fourier representation.

    The left side is exp(-(w-a).G.(w-a) / 2 alpha); the right side integrates
    exp(-alpha eta.G^-1.eta / 2) exp(i eta.(w-a)) numerically with the
    normalization 1/sqrt(det G) prod sqrt(alpha/2pi).  ``method`` is
    ``"adaptive"`` (nested adaptive quadrature, default for dimension <= 2)
    or ``"hermite"`` (tensor Gauss-Hermite after whitening).
    """
    if not 1 <= dimension <= 4:
        raise ValueError("dimension must be between 1 and 4")
    G = np.atleast_2d(np.asarray(G_matrix, dtype=float))
    if G.shape != (dimension, dimension):
        raise ValueError(f"G_matrix must be {dimension}x{dimension}")
    if not np.allclose(G, G.T):
        raise ValueError("G_matrix must be symmetric")
    if np.linalg.eigvalsh(G).min() <= 0:
        raise ValueError("G_matrix must be positive definite")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if method is None:
        method = "adaptive" if dimension <= 2 else "hermite"
    Ginv = np.linalg.inv(G)
    if offsets is None:
        rng = np.random.default_rng(seed)
        # keep the exponent of order one so relative residuals are meaningful
        offsets = rng.standard_normal((n_points, dimension))
        offsets *= math.sqrt(alpha) / np.sqrt(np.einsum("pi,ij,pj->p", offsets, G, offsets))[:, None]
        offsets *= rng.uniform(0.0, 2.0, size=(n_points, 1))
    worst = 0.0
    for u in np.atleast_2d(offsets):
        lhs = math.exp(-0.5 * u @ G @ u / alpha)
        if method == "adaptive":
            rhs = _ft_rhs_adaptive(u, G, Ginv, alpha)
        elif method == "hermite":
            rhs = _ft_rhs_hermite(u, G, Ginv, alpha)
        else:
            raise ValueError(f"unknown method {method!r}")
        worst = max(worst, abs(rhs - lhs) / lhs)
    return worst
