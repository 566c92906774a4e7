import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq

from llmaxwell.domain import GridSpec, build_ball_mask, make_boundary_data
from llmaxwell.errors import ConfigurationError
from llmaxwell.field import AngleField, SolverParams, energy
from llmaxwell.maxwell import zero_field
from llmaxwell.steady import (bracket_constant, contraction_probe, fixed_point, lambda_sweep, loglog_slope,
                              measured_winding, solve_limit, solve_theta_v, solve_xi, theta_distance)


@pytest.fixture(scope="module")
def limit(bdata, params):
    return solve_limit(bdata.mask, bdata, params)


@pytest.fixture(scope="module")
def state(bdata, params, limit):
    return fixed_point(bdata.mask, bdata, params, limit=limit)


def test_harmonic_extension_maximum_principle(torus, params):
    bd = make_boundary_data(torus, winding=0, amplitude=0.5)
    a, _ = solve_limit(torus, bd, params.with_(demag=False))
    lo, hi = bd.theta_g.min(), bd.theta_g.max()
    assert lo - 1e-10 <= a.phi.min() and a.phi.max() <= hi + 1e-10


def test_limit_keeps_winding(limit):
    assert measured_winding(limit[0]) == 1


@pytest.mark.parametrize("w", [0, 2])
def test_limit_other_classes(torus, params, w):
    bd = make_boundary_data(torus, winding=w)
    a, _ = solve_limit(torus, bd, params)
    assert measured_winding(a) == w


def test_limit_unique_from_two_starts(bdata, params, limit, rng):
    a2, _ = solve_limit(bdata.mask, bdata, params, phi0=0.05 * rng.standard_normal(bdata.mask.n))
    assert theta_distance(limit[0], a2) < 10 * params.fixed_point_tol


def test_theta_map_at_zero_latitude_is_limit(bdata, params, limit):
    a, _ = solve_theta_v(np.zeros(bdata.mask.n), bdata, params)
    assert theta_distance(a, limit[0]) < 10 * params.fixed_point_tol


def test_zero_forcing_gives_zero_latitude(torus):
    bd = make_boundary_data(torus, winding=0, amplitude=0.0)
    xi = solve_xi(AngleField.zeros(bd), zero_field(torus), SolverParams(lam=1e4))
    assert np.all(xi == 0)


def test_latitude_bound(limit, params):
    a, H = limit
    for lam in (params.lam, 4 * params.lam):
        p = params.with_(lam=lam)
        xi = solve_xi(a, H, p)
        assert np.max(np.abs(xi)) <= bracket_constant(a, H) / lam


def test_lambda_floor(limit, params):
    with pytest.raises(ConfigurationError):
        solve_xi(*limit, params.with_(lam=10.0, lam_min=100.0))


@pytest.mark.parametrize("hz,hx", [(0.7, 0.2), (-0.3, 0.5), (1.5, -1.0)])
def test_single_cell_against_bisection(hz, hx):
    g = GridSpec(1.0, 8)
    h = g.h
    cell = build_ball_mask(0.6 * h, g, center=(0.5 * h, 0.5 * h, 0.5 * h))
    assert cell.n == 1
    bd = make_boundary_data(cell, winding=0, amplitude=0.0)
    H = np.array([[hx, 0.0, hz]])
    p = SolverParams(lam=30.0, linear_tol=1e-13, fixed_point_tol=1e-13)
    K = cell.face_weight.sum()

    def f(x):
        return -K * x / h**2 - p.lam * np.sin(2 * x) - np.sin(x) * hx + np.cos(x) * hz

    oracle = brentq(f, -1.4, 1.4, xtol=1e-15)
    got = solve_xi(AngleField.zeros(bd), H, p, check_bracket=False)
    assert got[0] == pytest.approx(oracle, abs=1e-10)


def test_contraction_probe(bdata, params):
    out = contraction_probe(bdata, params, samples=2)
    assert out["constant"] < out["bound"]


def test_fixed_point_postconditions(state, limit, params):
    assert max(state.residuals) <= params.fixed_point_tol
    assert measured_winding(state.angles) == 1
    a0, H0 = limit
    assert state.energy_value <= energy(a0, H0, params) + 1e-12


def test_fixed_point_idempotent(state, bdata, params):
    again = fixed_point(bdata.mask, bdata, params, init=state.angles, demag=state.demag)
    assert again.iterations == 0
    assert np.array_equal(again.angles.phi, state.angles.phi)


def test_fixed_point_rejects_small_lambda(bdata, params):
    with pytest.raises(ConfigurationError):
        fixed_point(bdata.mask, bdata, params.with_(lam=1.0, lam_min=10.0))


@pytest.fixture(scope="module")
def sweep(bdata, params, limit):
    lams = [params.lam * 2**j for j in range(4)]
    return lambda_sweep(bdata.mask, bdata, lams, params, limit=limit)


def test_sweep_scaling(sweep):
    assert sweep.sup_slope == pytest.approx(-1.0, abs=0.15)
    for q in sweep.points:
        assert q.xi_sup <= 2 * q.bracket_C / q.lam
        assert measured_winding(q.state.angles) == 1


def test_sweep_approaches_limit(sweep):
    sup = [np.max(np.abs(q.state.theta - sweep.limit[0].theta)) for q in sweep.points]
    assert all(b < a for a, b in zip(sup, sup[1:]))
    th = [q.theta_dist_l2 for q in sweep.points]
    assert all(b < a for a, b in zip(th, th[1:]))


def test_sweep_csv(sweep, tmp_path):
    text = sweep.write_csv(tmp_path / "sweep.csv").read_text().splitlines()
    assert text[0].startswith("lambda,xi_sup")
    assert len(text) == 1 + len(sweep.points)


@given(st.floats(-3, 3), st.floats(0.1, 10))
def test_loglog_slope_of_power_law(k, c):
    x = np.array([1.0, 2.0, 4.0, 8.0])
    assert loglog_slope(x, c * x**k) == pytest.approx(k, abs=1e-9)
