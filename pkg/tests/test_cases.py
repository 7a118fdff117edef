import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mrom.cases import (
    LogisticForcing, lid_profile, ldc_spec, open_cavity_spec, tgv_analytic, tgv_energy_ratio, tgv_init, tgv_spec,
)
from mrom.domain import GHOST
from mrom.errors import ConfigError
from mrom.sph import eos_pressure


def test_tgv_velocity_at_quarter():
    ux, uy, _ = tgv_analytic(0.25, 0.0, 0.0, 0.01)
    assert ux == pytest.approx(1.0, abs=1e-15)
    assert uy == pytest.approx(0.0, abs=1e-15)


def test_tgv_pressure_at_origin():
    *_, p = tgv_analytic(0.0, 0.0, 0.0, 0.01, rho0=1000.0)
    assert p == pytest.approx(-500.0, abs=1e-12)


def test_tgv_balanced_pressure_flips_sign():
    *_, p = tgv_analytic(0.0, 0.0, 0.0, 0.01, pressure="balanced")
    assert p == pytest.approx(500.0)


def test_tgv_balanced_pressure_satisfies_euler_balance():
    # (u . grad) u + grad p / rho = 0 for the steady part of the field
    x, y, e = 0.13, 0.71, 1e-6
    f = lambda a, b: tgv_analytic(a, b, 0.0, 0.0, 1.0, "balanced")
    ux, uy, _ = f(x, y)
    d = lambda k, comp: (f(x + e * (k == 0), y + e * (k == 1))[comp] - f(x - e * (k == 0), y - e * (k == 1))[comp]) / (2 * e)
    for comp in (0, 1):
        conv = ux * d(0, comp) + uy * d(1, comp)
        assert conv + d(comp, 2) == pytest.approx(0.0, abs=1e-6)


def test_unknown_pressure_variant():
    with pytest.raises(ConfigError):
        tgv_analytic(0, 0, 0, 0.01, pressure="other")
    with pytest.raises(ConfigError):
        tgv_spec(n=10, pressure="other")


@given(st.floats(0.0, 5.0), st.floats(1e-3, 0.1))
def test_tgv_energy_ratio_matches_field_integral(t, nu):
    n = 32
    s = (np.arange(n) + 0.5) / n
    X, Y = np.meshgrid(s, s)
    e = lambda tt: np.sum(np.square(tgv_analytic(X, Y, tt, nu)[:2]))
    assert e(t) / e(0.0) == pytest.approx(tgv_energy_ratio(t, nu), rel=1e-10)


def test_tgv_decays_to_rest():
    ux, uy, p = tgv_analytic(0.3, 0.4, 1e4, 0.01)
    assert abs(ux) + abs(uy) + abs(p) < 1e-300


def test_tgv_init_density_from_inverse_eos():
    spec = tgv_spec(n=10)
    ps = tgv_init(spec.dx, 100.0)
    _, _, p = tgv_analytic(ps.x[:, 0], ps.x[:, 1], 0.0, spec.nu)
    assert np.allclose(eos_pressure(ps.rho, spec.model()), p, rtol=0, atol=1e-8)
    assert ps.n == 100


def test_tgv_spec_viscosity():
    spec = tgv_spec(n=50, Re=100.0)
    assert spec.mu == pytest.approx(10.0)
    assert spec.nu == pytest.approx(0.01)
    assert spec.h == pytest.approx(4 / 50)


def test_lid_profile_values():
    assert lid_profile(0.5) == 1.0
    assert lid_profile(0.0) == 0.0
    assert lid_profile(1.0) == 0.0
    assert np.all(lid_profile(np.array([-0.1, 1.1])) == 0.0)


@given(st.floats(0.0, 0.5))
def test_lid_profile_symmetric_and_bounded(x):
    assert lid_profile(x) == pytest.approx(lid_profile(1.0 - x), abs=1e-14)
    assert 0.0 <= lid_profile(x) <= 1.0


def test_ldc_viscosity():
    spec = ldc_spec(Re=100.0, n=20)
    assert spec.mu == pytest.approx(0.01)
    assert spec.rho0 == 1.0
    assert spec.h == pytest.approx(2 * spec.dx)


@pytest.mark.parametrize("Re", [49.0, 200.5])
def test_ldc_reynolds_range(Re):
    with pytest.raises(ConfigError):
        ldc_spec(Re=Re, n=10)


def test_ldc_lid_ghosts_carry_profile():
    ps = ldc_spec(Re=100.0, n=20).initial_particles()
    ghost = ps.kind == GHOST
    lid = ghost & (ps.x[:, 1] > 1.0)
    assert lid.any()
    assert np.array_equal(ps.wall_u[lid, 0], lid_profile(ps.x[lid, 0]))
    assert np.all(ps.wall_u[ghost & ~lid] == 0.0)
    corner = lid & ((ps.x[:, 0] < 0.0) | (ps.x[:, 0] > 1.0))
    assert corner.any()
    assert np.all(ps.wall_u[corner] == 0.0)


def test_logistic_initial_value():
    b = LogisticForcing().magnitude(0.0)
    assert b == pytest.approx(100.0 * (1 / (1 + math.exp(-4.0)) + 0.001), rel=1e-12)
    assert b == pytest.approx(98.30, abs=0.01)


def test_logistic_saturation():
    assert LogisticForcing().magnitude(1.0) == pytest.approx(0.1, rel=1e-12)


def test_logistic_ramp_up_variant():
    f = LogisticForcing(ramp="up")
    assert f.magnitude(0.0) == pytest.approx(100.0 * (1 / (1 + math.exp(4.0)) + 0.001))
    assert f.magnitude(1.0) == pytest.approx(100.1)
    with pytest.raises(ConfigError):
        LogisticForcing(ramp="sideways")


@given(st.floats(0.0, 0.1), st.floats(0.0, 0.1))
def test_logistic_decay_is_monotone(a, b):
    f = LogisticForcing()
    lo, hi = sorted((a, b))
    assert f.magnitude(hi) <= f.magnitude(lo)


def test_forcing_region():
    f = LogisticForcing()
    pts = np.array([[0.2, 0.05], [0.2, 0.15], [0.05, 0.15], [0.35, 0.15]])
    b = f(pts, 0.0)
    assert b[0, 0] == 0.0
    assert b[1, 0] == pytest.approx(f.magnitude(0.0))
    assert np.all(b[2:] == 0.0)
    assert np.all(b[:, 1] == 0.0)


def test_open_cavity_geometry_and_viscosity():
    spec = open_cavity_spec(dx=0.01)
    assert spec.geometry.periodic == (True, False)
    assert spec.nu == pytest.approx(2.0 * 0.2 / 2400.0)
    ps = spec.initial_particles()
    cav = ps.x[ps.kind != GHOST]
    assert spec.geometry.inside(cav).all()
    assert not spec.geometry.inside(ps.x[ps.kind == GHOST]).any()
    low = cav[:, 1] < 0.1
    assert np.all((cav[low, 0] > 0.1) & (cav[low, 0] < 0.3))
