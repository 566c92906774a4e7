import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from llmaxwell.domain import GridSpec, build_ball_mask, build_torus_mask, make_boundary_data
from llmaxwell.errors import ChartError, ConfigurationError, DataError
from llmaxwell.field import (AngleField, SolverParams, assemble_u, check_chart, energy, energy_terms,
                             frame_derivatives_from, load_snapshot, residuals, save_snapshot, unit_vector)
from llmaxwell.maxwell import solve_demag

angles = st.floats(-10, 10, allow_nan=False)
lats = st.floats(-1.4, 1.4, allow_nan=False)


@pytest.mark.parametrize("theta,xi,u", [
    (0.0, 0.0, (1, 0, 0)),
    (math.pi / 2, 0.0, (0, 1, 0)),
    (0.7, math.pi / 2, (0, 0, 1)),
    (-2.1, math.pi / 2, (0, 0, 1)),
])
def test_unit_vector_examples(theta, xi, u):
    assert np.allclose(unit_vector(theta, xi), u, atol=1e-15)


@given(angles, lats)
def test_unit_length(theta, xi):
    assert np.linalg.norm(unit_vector(theta, xi)) == pytest.approx(1.0, abs=1e-15)


@given(angles)
def test_mixed_derivative_vanishes_on_equator(theta):
    d = frame_derivatives_from(np.array([theta]), np.array([0.0]))
    assert np.allclose(d["u_tx"], 0) and np.allclose(d["u_xt"], 0)


@given(angles, lats)
def test_frame_derivatives_match_closed_forms(theta, xi):
    d = frame_derivatives_from(np.array([theta]), np.array([xi]))
    st_, ct, sx, cx = math.sin(theta), math.cos(theta), math.sin(xi), math.cos(xi)
    assert np.allclose(d["u_t"][0], (-cx * st_, cx * ct, 0))
    assert np.allclose(d["u_x"][0], (-sx * ct, -sx * st_, cx))
    assert np.allclose(d["u_tx"][0], (sx * st_, -sx * ct, 0))
    assert np.allclose(d["u_xt"][0], d["u_tx"][0])
    assert np.allclose(d["u_xx"][0], -unit_vector(theta, xi))


@given(angles, lats)
def test_frame_derivatives_finite_differences(theta, xi):
    d = frame_derivatives_from(np.array([theta]), np.array([xi]))
    errs = []
    for e in (1e-3, 5e-4):
        fd_t = (unit_vector(theta + e, xi) - unit_vector(theta - e, xi)) / (2 * e)
        fd_x = (unit_vector(theta, xi + e) - unit_vector(theta, xi - e)) / (2 * e)
        errs.append(max(np.max(np.abs(fd_t - d["u_t"][0])), np.max(np.abs(fd_x - d["u_x"][0]))))
    assert errs[0] < 1e-6
    # second order: halving the step quarters the error
    assert errs[1] <= 0.3 * errs[0] + 1e-12


def test_constant_angle_has_zero_energy(torus):
    bd = make_boundary_data(torus, winding=0, amplitude=0.0)
    a = AngleField.zeros(bd)
    assert energy(a, None, SolverParams(lam=10.0)) == 0.0


def test_reference_angle_exchange_energy():
    m = build_torus_mask(0.3, 0.1, GridSpec(1.0, 48))
    bd = make_boundary_data(m, winding=1, amplitude=0.0)
    a = AngleField.zeros(bd)
    x, y, _ = m.centers.T
    exact = 0.5 * np.sum(1 / (x**2 + y**2)) * m.cell_volume
    assert energy(a, None, SolverParams(lam=10.0)) == pytest.approx(exact, rel=0.05)


def test_uniform_ball_energy():
    # first-order surface error: about 4% low at N=64
    ball = build_ball_mask(0.3, GridSpec(1.0, 64))
    bd = make_boundary_data(ball, winding=0, amplitude=0.0)
    a = AngleField.zeros(bd)
    H = solve_demag(assemble_u(a), ball)
    terms = energy_terms(a, H, SolverParams(lam=10.0))
    assert terms["exchange_theta"] == 0 and terms["anisotropy"] == 0
    assert energy(a, H, SolverParams(lam=10.0)) == pytest.approx(ball.volume / 6, rel=0.05)


def _random_state(bdata, rng, scale=0.3):
    n = bdata.mask.n
    return AngleField(bdata, scale * rng.standard_normal(n), 0.2 * scale * rng.standard_normal(n))


@pytest.mark.parametrize("demag", [False, True])
def test_residuals_are_energy_gradients(bdata, params, rng, demag):
    p = params.with_(demag=demag)
    a = _random_state(bdata, rng)
    mask = a.mask

    def E(b):
        return energy(b, solve_demag(assemble_u(b), mask) if demag else None, p)

    rt, rx = residuals(a, solve_demag(assemble_u(a), mask) if demag else None, p)
    for _ in range(3):
        dphi, dxi = rng.standard_normal(mask.n), rng.standard_normal(mask.n)
        e = 1e-5
        fd = (E(a.with_(phi=a.phi + e * dphi, xi=a.xi + e * dxi))
              - E(a.with_(phi=a.phi - e * dphi, xi=a.xi - e * dxi))) / (2 * e)
        an = -(np.dot(rt, dphi) + np.dot(rx, dxi)) * mask.cell_volume
        assert fd == pytest.approx(an, rel=1e-6)


def test_energy_invariant_under_full_turn(bdata, params, rng):
    a = _random_state(bdata, rng)
    b = a.with_(phi=a.phi + 2 * np.pi)
    Ha, Hb = solve_demag(assemble_u(a), a.mask), solve_demag(assemble_u(b), a.mask)
    assert energy(b, Hb, params) == pytest.approx(energy(a, Ha, params), rel=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_energy_without_field_is_nonnegative(bdata, seed):
    a = _random_state(bdata, np.random.default_rng(seed), scale=1.0)
    assert energy(a, None, SolverParams(lam=50.0, demag=False)) >= 0


def test_chart_guard():
    check_chart(np.array([0.0, 1.4]))
    with pytest.raises(ChartError):
        check_chart(np.array([0.0, 0.5 * np.pi - 0.05]))


def test_latitude_outside_range_rejected(bdata):
    with pytest.raises(ChartError):
        AngleField(bdata, np.zeros(bdata.mask.n), np.full(bdata.mask.n, 2.0))


@pytest.mark.parametrize("kw", [dict(lam=0.0), dict(lam=1.0, gamma=-0.1), dict(lam=1.0, relaxation=0.0),
                                dict(lam=1.0, linear_tol=0.0), dict(lam=1.0, max_iters=0)])
def test_params_validation(kw):
    with pytest.raises(ConfigurationError):
        SolverParams(**kw)


def test_grid_units():
    p = SolverParams.from_grid_units(50.0, 0.02, lam_min_grid=25.0)
    assert p.lam == pytest.approx(50.0 / 0.02**2)
    assert p.lam_min == pytest.approx(25.0 / 0.02**2)


def test_snapshot_roundtrip(bdata, rng, tmp_path):
    a = _random_state(bdata, rng)
    path = save_snapshot(a, tmp_path / "s.csv", extra={"t": 0.5})
    b = load_snapshot(path, bdata)
    assert np.array_equal(a.phi, b.phi) and np.array_equal(a.xi, b.xi)


def test_snapshot_winding_mismatch(bdata, rng, tmp_path):
    path = save_snapshot(_random_state(bdata, rng), tmp_path / "s.csv")
    other = make_boundary_data(bdata.mask, winding=2)
    with pytest.raises(DataError):
        load_snapshot(path, other)
