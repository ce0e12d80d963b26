import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats
from scipy.special import logsumexp

from csl_lab.csl import point_clumps
from csl_lab.noise import (NoiseRealization, SingularKernelError, SpacetimeGrid, SpatialGrid,
                           SpectralDensity, derive_seeds, gaussian_ft_identity_residual,
                           lattice_kernel, lattice_spectral_weights, log_probability,
                           sample_free_field, sample_posterior_batch, sample_posterior_noise,
                           spectrum_from_tag)
from csl_lab.params import toy_params


def small_setup(spectrum=None, n_steps=3, probs=(0.4, 0.6)):
    space = SpatialGrid(2, 1.5)
    grid = SpacetimeGrid(space, 0.0, 0.9, n_steps)
    state = point_clumps(space, list(probs), [0, 1])
    return toy_params(10, lam=0.7), state, spectrum or SpectralDensity("gaussian_spatial"), grid


def dense_covariance(kernel, lam):
    K = np.kron(kernel.K_t, kernel.K_s)
    return lam * np.linalg.inv(K)


def test_grids():
    g = SpatialGrid(3, 0.5, dim=3)
    assert g.n_sites == 27 and g.cell_volume == 0.125
    assert g.coords.shape == (27, 3)
    assert g.distances()[0, -1] == pytest.approx(math.sqrt(3))
    st_ = SpacetimeGrid(g, 1.0, 2.0, 4)
    assert st_.shape == (4, 27)
    assert np.allclose(st_.times, [1.125, 1.375, 1.625, 1.875])
    with pytest.raises(ValueError):
        SpatialGrid(3, 0.5, dim=2)
    with pytest.raises(ValueError):
        SpacetimeGrid(g, 1.0, 1.0, 4)


def test_log_probability_matches_scipy_mixture():
    for spectrum in (SpectralDensity("gaussian_spatial"), SpectralDensity("white", scale=2.0),
                     SpectralDensity("gaussian_spatial", tau_c=0.4)):
        params, state, _, grid = small_setup()
        kernel = lattice_kernel(spectrum, grid)
        cov = dense_covariance(kernel, params.lam)
        means = 2 * params.lam * state.densities
        rng = np.random.default_rng(5)
        for _ in range(4):
            w = rng.normal(size=grid.shape) + means[rng.integers(2)]
            real = NoiseRealization(grid, w, 0, spectrum.tag)
            ref = logsumexp([math.log(p) + stats.multivariate_normal(np.tile(m, grid.n_steps), cov).logpdf(w.ravel())
                             for p, m in zip(state.probabilities, means)])
            assert abs(log_probability(real, state, params, spectrum) - ref) < 1e-9 * abs(ref) + 1e-9


def test_log_probability_normalized():
    space = SpatialGrid(1, 1.0)
    grid = SpacetimeGrid(space, 0.0, 1.0, 1)
    state = point_clumps(space, [1.0], [0])
    params = toy_params(10, lam=0.5)
    spectrum = SpectralDensity("white")

    def density(x):
        return math.exp(log_probability(NoiseRealization(grid, np.array([[x]]), 0, spectrum.tag),
                                        state, params, spectrum))

    total = integrate.quad(density, -np.inf, np.inf, epsabs=0, epsrel=1e-11)[0]
    assert abs(total - 1) < 1e-9


def test_posterior_moments():
    params, state, spectrum, grid = small_setup()
    seeds = derive_seeds(11, 40_000)
    branches, W = sample_posterior_batch(state, params, spectrum, grid, seeds)
    freq = np.mean(branches == 1)
    assert abs(freq - 0.6) < 4 * math.sqrt(0.24 / len(seeds))
    kernel = lattice_kernel(spectrum, grid)
    cov = dense_covariance(kernel, params.lam)
    for i in (0, 1):
        X = W[branches == i].reshape(-1, grid.n_sites)
        mean = np.tile(2 * params.lam * state.densities[i], grid.n_steps)
        se = np.sqrt(np.diag(cov) / len(X))
        assert np.all(np.abs(X.mean(0) - mean) < 5 * se)
        emp = np.cov(X.T)
        assert np.max(np.abs(emp - cov)) < 0.05 * np.max(np.abs(cov))


def test_batch_rows_equal_single_draws():
    params, state, spectrum, grid = small_setup()
    seeds = derive_seeds(3, 5)
    branches, W = sample_posterior_batch(state, params, spectrum, grid, seeds)
    for j, s in enumerate(seeds):
        i, w = sample_posterior_noise(state, params, spectrum, grid, s)
        assert i == branches[j]
        assert np.array_equal(w.values, W[j])
        assert w.seed == s


def test_posterior_contract_errors():
    params, state, spectrum, grid = small_setup()
    with pytest.raises(NotImplementedError):
        sample_posterior_noise(state, params, spectrum, grid, 1, hamiltonian=np.eye(2))
    other = SpacetimeGrid(SpatialGrid(2, 3.0), 0.0, 1.0, 2)
    with pytest.raises(ValueError):
        sample_posterior_noise(state, params, spectrum, other, 1)


def test_npz_and_csv_round_trip(tmp_path):
    params, state, spectrum, grid = small_setup()
    _, w = sample_posterior_noise(state, params, spectrum, grid, 2**63 + 5)
    w.save(tmp_path / "w.npz")
    back = NoiseRealization.load(tmp_path / "w.npz")
    assert np.array_equal(back.values, w.values)
    assert back.seed == w.seed and back.grid == w.grid and back.spectrum_tag == w.spectrum_tag
    assert spectrum_from_tag(back.spectrum_tag) == spectrum
    w.to_csv(tmp_path / "w.csv")
    lines = (tmp_path / "w.csv").read_text().splitlines()
    assert lines[0] == "t,x,w"
    assert len(lines) == 1 + grid.n_sites
    table = np.loadtxt(tmp_path / "w.csv", delimiter=",", skiprows=1)
    assert np.array_equal(table[:, 2], w.values.ravel())


def test_realization_validation():
    _, _, _, grid = small_setup()
    with pytest.raises(ValueError):
        NoiseRealization(grid, np.zeros((2, 2)), 0, "white")
    bad = np.zeros(grid.shape)
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        NoiseRealization(grid, bad, 0, "white")


def test_free_field_covariance():
    space = SpatialGrid(3, 0.8)
    grid = SpacetimeGrid(space, 0.0, 1.0, 2)
    spectrum = SpectralDensity("gaussian_spatial")
    kernel = lattice_kernel(spectrum, grid)
    target = 0.5 * 2.0 * np.kron(kernel.K_t, kernel.K_s) / grid.cell_volume**2
    X = np.array([sample_free_field(spectrum, grid, s, gamma=2.0).values.ravel()
                  for s in derive_seeds(8, 20_000)])
    assert np.max(np.abs(np.cov(X.T) - target)) < 0.05 * np.max(target)


def test_free_field_white_variance():
    space = SpatialGrid(4, 0.5)
    grid = SpacetimeGrid(space, 0.0, 1.0, 5)
    w = sample_free_field(SpectralDensity("white"), grid, 1, gamma=1.0)
    assert w.values.shape == grid.shape
    X = np.concatenate([sample_free_field(SpectralDensity("white"), grid, s).values.ravel()
                        for s in derive_seeds(2, 2000)])
    assert abs(X.var() / (0.5 / grid.cell_volume) - 1) < 0.03


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.floats(0.3, 3.0), st.sampled_from(["white", "gaussian_spatial"]))
def test_spectral_weights_non_negative(n, spacing, kind):
    grid = SpacetimeGrid(SpatialGrid(n, spacing), 0.0, 1.0, 2)
    try:
        weights = lattice_spectral_weights(SpectralDensity(kind), grid)
    except SingularKernelError:
        return
    assert weights.min() >= -1e-12 * weights.max()


def test_singular_kernel_reported():
    grid = SpacetimeGrid(SpatialGrid(40, 0.01), 0.0, 1.0, 1)
    kernel = lattice_kernel(SpectralDensity("gaussian_spatial"), grid)
    with pytest.raises(SingularKernelError) as info:
        kernel.condition
    assert info.value.condition > 1e12


def test_spectral_values():
    t = SpectralDensity("tachyonic", epsilon=1e-3)
    assert t.spectral_value(1.0) == 0.0
    assert t.spectral_value(-1.0) == 1e3
    assert t.spectral_value(-1.0 - 0.4e-3) == 1e3
    assert t.spectral_value(-1.0 - 0.6e-3) == 0.0
    assert SpectralDensity("white", scale=3.0).spectral_value(0.7) == 3.0
    g = SpectralDensity("gaussian_spatial", a=2.0)
    assert g.spectral_value(0.0) == pytest.approx((4 * math.pi * 4.0) ** 1.5)
    with pytest.raises(ValueError):
        SpectralDensity("pink")
    with pytest.raises(ValueError):
        SpectralDensity("white", scale=-1.0)
    with pytest.raises(ValueError):
        SpectralDensity("white").spatial_profile(1.0)


@given(st.sampled_from(["white", "gaussian_spatial", "tachyonic"]), st.floats(0.01, 100),
       st.floats(0, 10), st.floats(0, 5))
def test_tag_round_trip(kind, a, scale, tau_c):
    s = SpectralDensity(kind, a=a, mu=1 / a, scale=scale, tau_c=tau_c)
    assert spectrum_from_tag(s.tag) == s


def test_derive_seeds():
    a = derive_seeds(42, 100)
    assert a == derive_seeds(42, 100)
    assert len(set(a)) == 100
    assert derive_seeds(42, 3, 1) != derive_seeds(42, 3, 2)
    assert derive_seeds(42, 3) != derive_seeds(43, 3)
    assert all(0 <= s < 2**64 for s in a)


def test_gaussian_fourier_identity():
    rng = np.random.default_rng(0)
    for N in (1, 2):
        B = rng.normal(size=(N, N))
        G = B @ B.T + 0.5 * np.eye(N)
        assert gaussian_ft_identity_residual(N, G, 0.6, 1) < 1e-6
    G = np.array([[2.0, 0.3, 0.1], [0.3, 1.0, 0.2], [0.1, 0.2, 1.5]])
    assert gaussian_ft_identity_residual(3, G, 1.3, 1) < 1e-6
    with pytest.raises(ValueError):
        gaussian_ft_identity_residual(2, np.array([[1.0, 2.0], [2.0, 1.0]]), 1.0, 0)
    with pytest.raises(ValueError):
        gaussian_ft_identity_residual(2, np.array([[1.0, 0.1], [0.0, 1.0]]), 1.0, 0)
    with pytest.raises(ValueError):
        gaussian_ft_identity_residual(1, [[1.0]], -1.0, 0)
