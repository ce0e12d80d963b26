import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csl_lab.params import toy_params
from csl_lab.relkin import energy
from csl_lab.spread import (GEOMETRIES, SpreadHistogram, classical_impulse_ensemble, ladder_walk,
                            spread_radius, support_axes)


def momentum(v, M):
    return np.array([0.0, 0.0, M * v / math.sqrt(1 - v * v)])


def test_radii():
    params = toy_params(5)
    k = momentum(0.6, 5.0)
    E = float(energy(k, 5.0))
    assert E == pytest.approx(5.0 / 0.8)
    assert spread_radius(params, k, "rest", T=2.0) == pytest.approx(0.4)
    assert spread_radius(params, k, "parallel", T=2.0) == pytest.approx(2 * 5 / E**2)
    assert spread_radius(params, k, "perpendicular", T=2.0) == pytest.approx(2 / E)
    par, perp = support_axes(params, k)
    assert par / perp == pytest.approx(5.0 / E)
    # at rest every radius coincides
    assert support_axes(params, np.zeros(3)) == pytest.approx((0.2, 0.2))
    with pytest.raises(ValueError):
        spread_radius(params, k, "sideways")


def test_rest_ensemble_uniform_radius():
    params = toy_params(5)
    h = classical_impulse_ensemble(params, 3.0, 0.0, 100_000, 1, geometry="rest")
    assert h.radius == pytest.approx(0.6)
    assert h.support_violations == 0
    assert h.max_radius <= h.radius * (1 + 1e-12)
    assert len(h.edges) == 51
    assert h.ks_test().pvalue > 0.01
    assert h.chisquare().pvalue > 0.01
    # uniform on [0, R]: mean R/2 and variance R^2/12
    assert abs(h.radii.mean() - 0.3) < 4 * 0.6 / math.sqrt(12 * 100_000)
    assert h.radius - h.max_radius < h.bin_width
    # flat radial law means volume density falls as r^-2
    r = np.array([0.1, 0.2])
    assert h.volume_density(r)[0] / h.volume_density(r)[1] == pytest.approx(4.0)


@pytest.mark.parametrize("geometry", ["parallel", "perpendicular", "isotropic"])
def test_moving_ensembles_stay_in_support(geometry):
    params = toy_params(5)
    h = classical_impulse_ensemble(params, 2.0, 0.6, 200_000, 7, geometry=geometry)
    assert h.support_violations == 0
    assert h.max_radius <= h.radius * (1 + 1e-12)
    assert h.radius - h.max_radius < h.bin_width
    k = momentum(0.6, 5.0)
    if geometry != "isotropic":
        assert h.radius == pytest.approx(spread_radius(params, k, geometry, 2.0), rel=1e-14)
        assert h.ks_test().pvalue > 0.01
    else:
        assert h.radius == pytest.approx(max(support_axes(params, k, 2.0)), rel=1e-14)


def test_ensemble_determinism_and_vector_v0():
    params = toy_params(4)
    a = classical_impulse_ensemble(params, 1.0, 0.3, 5000, 11, geometry="parallel")
    b = classical_impulse_ensemble(params, 1.0, [0.0, 0.0, 0.3], 5000, 11, geometry="parallel")
    c = classical_impulse_ensemble(params, 1.0, 0.3, 5000, 12, geometry="parallel")
    assert np.array_equal(a.radii, b.radii)
    assert not np.array_equal(a.radii, c.radii)
    # tilted velocity: same speed gives the same radial statistics
    tilted = classical_impulse_ensemble(params, 1.0, [0.3 / math.sqrt(2), 0.3 / math.sqrt(2), 0.0],
                                        5000, 11, geometry="parallel")
    assert tilted.radius == pytest.approx(a.radius, rel=1e-14)
    assert tilted.support_violations == 0


def test_ensemble_rejections():
    params = toy_params(4)
    with pytest.raises(ValueError):
        classical_impulse_ensemble(params, 1.0, 1.0, 5000, 1, geometry="parallel")
    with pytest.raises(ValueError):
        classical_impulse_ensemble(params, 1.0, [0.8, 0.8, 0.0], 5000, 1, geometry="parallel")
    with pytest.raises(ValueError):
        classical_impulse_ensemble(params, 1.0, 0.2, 5000, 1, geometry="rest")
    with pytest.raises(ValueError):
        classical_impulse_ensemble(params, 1.0, 0.0, 999, 1)
    with pytest.raises(ValueError):
        classical_impulse_ensemble(params, 0.0, 0.0, 5000, 1)
    h = classical_impulse_ensemble(params, 1.0, 0.0, 5000, 1, keep_samples=False)
    with pytest.raises(ValueError):
        h.ks_test()


def test_histogram_validation():
    with pytest.raises(ValueError):
        SpreadHistogram("rest", np.array([0.0, 1.0]), np.array([3]), 4, 1.0, 0, 1.0)
    with pytest.raises(ValueError):
        SpreadHistogram("rest", np.array([0.0, 0.0, 1.0]), np.array([1, 3]), 4, 1.0, 0, 1.0)


def test_ladder_adversarial_drift():
    params = toy_params(5)
    res = ladder_walk(params, 1.0, 12, 10, 0, scenario="adversarial_backforth")
    for m in range(1, 7):
        assert res.mean_disp[2 * m - 1] == pytest.approx(m * 0.2, rel=1e-12)
    assert res.exit_order == 10
    assert res.exceed[9] == 10 and res.exceed[7] == 0
    with pytest.raises(ValueError):
        ladder_walk(params, 1.0, 7, 10, 0, scenario="adversarial_backforth")


@settings(max_examples=40, deadline=None)
@given(st.floats(1.5, 50.0), st.floats(0.1, 10.0))
def test_adversarial_pair_shift(ratio, T):
    res = ladder_walk(toy_params(ratio), T, 2, 1, 0, scenario="adversarial_backforth")
    assert res.mean_disp[1] == pytest.approx(T / ratio, rel=1e-12)


def test_ladder_forward_stays_inside():
    params = toy_params(5)
    res = ladder_walk(params, 1.0, 200, 4000, 3, scenario="forward_accelerating")
    assert np.all(res.max_disp < 1.0)
    assert np.all(res.max_disp <= res.bound * (1 + 1e-12))
    assert np.all(np.diff(res.bound) >= 0)
    assert res.exit_order is None and not res.exceed.any()
    # each increment has mean dv T/2, so the mean displacement is half the bound
    N = res.n_samples
    for n in (0, 9, 199):
        sd = res.bound[n] / math.sqrt(12 * N) * 1.01
        assert abs(res.mean_disp[n] - res.bound[n] / 2) < 5 * sd


def test_ladder_isotropic_statistics():
    params = toy_params(5)
    a = ladder_walk(params, 1.0, 30, 5000, 9)
    b = ladder_walk(params, 1.0, 30, 5000, 9)
    assert np.array_equal(a.positions, b.positions)
    assert a.positions.shape == (5000, 3)
    assert np.all(a.max_disp < 1.0)
    # random-walk growth: later orders move further on average
    assert a.mean_disp[-1] > 2 * a.mean_disp[0]
    # no preferred direction
    assert np.all(np.abs(a.positions.mean(0)) < 5 * a.positions.std(0) / math.sqrt(5000))
    rows = list(a.rows())
    assert len(rows) == 30 and rows[0][0] == 1
    assert all(lo <= p <= hi for _, _, p, lo, hi in rows)


def test_ladder_rejections():
    params = toy_params(5)
    with pytest.raises(ValueError):
        ladder_walk(params, 1.0, 0, 10, 0)
    with pytest.raises(ValueError):
        ladder_walk(params, 1.0, 2, 10, 0, scenario="spiral")
    with pytest.raises(ValueError):
        ladder_walk(params, -1.0, 2, 10, 0)


def test_geometry_list():
    assert GEOMETRIES == ("rest", "parallel", "perpendicular", "isotropic")
