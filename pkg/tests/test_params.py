import math
import warnings

import pytest
from hypothesis import given, strategies as st
from scipy import constants as sc

from csl_lab.params import (GRW_A_CM, HBAR_C_EV_CM, NUCLEON_MASS_EV, ModelParams, UnitSystem,
                            from_physical, gamma_from_kappa, load_config, params_from_config,
                            preset_grw, to_physical, toy_params)


def test_grw_preset_orders_of_magnitude():
    p = preset_grw()
    assert p.mu == 1.0 and p.a == 1.0
    # lam in units of a/c: 1e-16 /s * 1e-5 cm / c
    assert math.isclose(p.lam, 1e-16 * 1e-5 / (sc.c * 100), rel_tol=1e-12)
    assert 1e-33 < p.gamma < 1e-31
    # M/mu = m_N c^2 a / (hbar c)
    assert math.isclose(p.M, NUCLEON_MASS_EV * GRW_A_CM / HBAR_C_EV_CM, rel_tol=1e-12)
    assert 4e8 < p.M < 5e8
    assert p.gamma_tied


def test_hbar_c_value():
    # hbar c = 197.327 MeV fm
    assert math.isclose(HBAR_C_EV_CM, 197.3269804e6 * 1e-13, rel_tol=1e-9)


def test_gamma_from_kappa_gravitational_scale():
    g = gamma_from_kappa(1.0)
    assert math.isclose(g, sc.G * sc.m_p**2 / (sc.hbar * sc.c), rel_tol=1e-12)
    assert 5.8e-39 < g < 6.0e-39
    assert gamma_from_kappa(0.0) == 0.0
    with pytest.raises(ValueError):
        gamma_from_kappa(-1.0)


def test_mu_a_mismatch_rejected():
    with pytest.raises(ValueError):
        ModelParams(lam=1.0, a=1.0, mu=2.0, gamma=1.0, M=10.0)
    with pytest.raises(ValueError):
        ModelParams(lam=-1.0, a=1.0, mu=1.0, gamma=1.0, M=10.0)
    with pytest.raises(ValueError):
        ModelParams(lam=1.0, a=1.0, mu=1.0, gamma=1.0, M=0.0)


def test_toy_params():
    p = toy_params(10)
    assert (p.mu, p.a, p.M, p.lam, p.gamma) == (1.0, 1.0, 10.0, 1.0, 1.0)
    assert p.M_over_mu == 10.0
    with pytest.raises(ValueError):
        toy_params(0)


def test_replace_keeps_mu_a_tied():
    p = toy_params(10).replace(mu=2.0)
    assert p.a == 0.5
    p = toy_params(10).replace(a=4.0)
    assert p.mu == 0.25


@given(st.floats(1e-20, 1e3), st.floats(1e-8, 1.0), st.floats(1e3, 1e12))
def test_physical_round_trip(lam, a_cm, M_eV):
    p = from_physical(lam, a_cm, M_eV)
    back = to_physical(p)
    assert math.isclose(back["lambda_per_sec"], lam, rel_tol=1e-12)
    assert math.isclose(back["a_cm"], a_cm, rel_tol=1e-12)
    assert math.isclose(back["M_eV"], M_eV, rel_tol=1e-12)


def test_unit_system_rejects_bad_length():
    with pytest.raises(ValueError):
        UnitSystem(0.0)
    u = UnitSystem(1.0)
    assert math.isclose(u.time_s * u.energy_ev, sc.hbar / sc.e, rel_tol=1e-12)


def test_to_physical_needs_units():
    with pytest.raises(ValueError):
        to_physical(toy_params(3))


def test_config_file(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("# toy run\nM_over_mu = 5   # ratio\n\nmass_ratio=0.5\n")
    cfg = load_config(f)
    assert cfg == {"M_over_mu": 5.0, "mass_ratio": 0.5}
    p = params_from_config(cfg)
    assert p.M == 5.0 and p.mass_ratio == 0.5


def test_config_errors(tmp_path):
    f = tmp_path / "bad.cfg"
    f.write_text("speed = 3\n")
    with pytest.raises(ValueError):
        load_config(f)
    f.write_text("M_over_mu 3\n")
    with pytest.raises(ValueError):
        load_config(f)
    with pytest.raises(ValueError):
        params_from_config({"gamma": 1.0, "kappa": 1.0})


def test_config_gamma_override_warns():
    with pytest.warns(UserWarning):
        p = params_from_config({"gamma": 0.5})
    assert p.gamma == 0.5
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        params_from_config({"M_over_mu": 3.0})


def test_config_physical_keys_select_units():
    with pytest.warns(UserWarning):
        p = params_from_config({"lambda_per_sec": 1e-16, "a_cm": 1e-5, "kappa": 1.0})
    assert p.units is not None
    assert math.isclose(p.gamma, gamma_from_kappa(1.0))
