import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from llmaxwell.domain import make_boundary_data
from llmaxwell.dynamics import flow_rhs, smooth_field
from llmaxwell.field import AngleField, SolverParams, assemble_u, face_square_sum, theta_increments
from llmaxwell.maxwell import solve_demag
from llmaxwell.pde_core import laplacian_matrix
from llmaxwell.spectrum import (SPECTRUM_COLUMNS, assemble_linearization, limit_eigenvalues, make_state,
                                perturbation_part, spectral_gap, spectrum_row, tbound_check, write_spectrum_csv)
from llmaxwell.steady import fixed_point, loglog_slope, solve_limit

seeds = st.integers(0, 2**32 - 1)


@pytest.fixture(scope="module")
def limit(bdata, params):
    return solve_limit(bdata.mask, bdata, params)


@pytest.fixture(scope="module")
def states(bdata, params, limit):
    return [fixed_point(bdata.mask, bdata, params.with_(lam=params.lam * 4**j), limit=limit) for j in range(3)]


def test_decoupled_blocks(bdata, params, rng):
    a = AngleField(bdata, 0.1 * rng.standard_normal(bdata.mask.n), np.zeros(bdata.mask.n))
    p = params.with_(demag=False)
    blocks = assemble_linearization(make_state(a, p), 0.0, coupling=False)
    n = bdata.mask.n
    L = laplacian_matrix(bdata.mask)
    G = face_square_sum(bdata.mask, *theta_increments(a))
    x = rng.standard_normal(n)
    assert np.allclose(blocks.a12(x), 0) and np.allclose(blocks.a21(x), 0)
    # -A blocks: phi -> -Lap, psi -> -Lap + 2 lambda - |grad theta|^2
    assert np.allclose(-blocks.a11(x), -(L @ x), rtol=1e-12, atol=1e-9)
    assert np.allclose(-blocks.a22(x), -(L @ x) + (2 * p.lam - G) * x, rtol=1e-12, atol=1e-6)


@given(seeds)
def test_perturbation_vanishes_on_equator(bdata, params, seed):
    rng = np.random.default_rng(seed)
    a = AngleField(bdata, 0.1 * rng.standard_normal(bdata.mask.n), np.zeros(bdata.mask.n))
    blocks = assemble_linearization(make_state(a, params), 0.0, xi_zero=True)
    x = rng.standard_normal(2 * bdata.mask.n)
    assert np.max(np.abs(perturbation_part(blocks, x))) == 0.0


@pytest.mark.parametrize("gamma", [0.0, 0.3])
def test_finite_difference_jacobian(states, gamma, rng):
    s = states[-1]
    p = s.params.with_(gamma=gamma)
    mask = s.mask
    n = mask.n
    blocks = assemble_linearization(s, gamma)

    def F(b):
        return np.concatenate(flow_rhs(b, solve_demag(assemble_u(b), mask), p))

    F0 = F(s.angles)
    x = np.concatenate([smooth_field(mask, rng), 1e-3 * smooth_field(mask, rng)])
    Ax = blocks.apply(x)
    errs = []
    for e in (1e-3, 5e-4, 2.5e-4):
        b = s.angles.with_(phi=s.angles.phi + e * x[:n], xi=s.angles.xi + e * x[n:])
        errs.append(np.linalg.norm((F(b) - F0) / e - Ax) / np.linalg.norm(Ax))
    assert errs[-1] < 1e-3
    for r in (errs[0] / errs[1], errs[1] / errs[2]):
        assert r == pytest.approx(2.0, abs=0.4)


def test_box_diagnostic(cube):
    bd = make_boundary_data(cube, winding=0, amplitude=0.0)
    lam = 50.0
    blocks = assemble_linearization(make_state(AngleField.zeros(bd), SolverParams(lam=lam, demag=False)),
                                    0.0, coupling=False)
    rep = spectral_gap(blocks, k=3)
    psi = rep.branch("psi")
    assert psi[0].real == pytest.approx(2 * lam + 3 * math.pi**2 / 0.25, rel=0.02)
    assert rep.branch("phi")[0].real == pytest.approx(3 * math.pi**2 / 0.25, rel=0.02)


def test_gap_positive_and_real(states):
    for s in states:
        rep = spectral_gap(assemble_linearization(s, 0.0), k=3)
        assert rep.gap > 0
        assert all(abs(mu.imag) < 1e-8 * abs(mu) for mu in rep.eigenvalues)


def test_phi_branch_matches_limit_problem(states, limit):
    rep = spectral_gap(assemble_linearization(states[-1], 0.0), k=3)
    ref = limit_eigenvalues(*limit, k=3)
    for a, b in zip(rep.branch("phi"), ref):
        assert a.real == pytest.approx(b.real, rel=0.05)


@pytest.mark.parametrize("gamma", [0.0, 0.2])
def test_psi_mass_decays(states, gamma):
    lams = [s.params.lam for s in states]
    mass = [spectral_gap(assemble_linearization(s, gamma), k=1).psi_mass[0] for s in states]
    assert loglog_slope(lams, mass) <= -0.8
    scaled = [m * lam for m, lam in zip(mass, lams)]
    assert all(b <= a for a, b in zip(scaled, scaled[1:]))


def test_tbound_zero_on_equator(states):
    blocks = assemble_linearization(states[0], 0.0, xi_zero=True)
    out = tbound_check(blocks, samples=10)
    assert out["max"] == 0.0


def test_tbound_decreases_with_lambda(states):
    ratios = [tbound_check(assemble_linearization(s, 0.0), samples=10)["max"] for s in states]
    assert all(b < a for a, b in zip(ratios, ratios[1:]))


def test_tbound_decreases_at_fixed_gamma_lambda(states):
    c = 1e-3 * states[0].params.lam
    ratios = [tbound_check(assemble_linearization(s, c / s.params.lam), samples=10)["max"] for s in states]
    assert all(b < a for a, b in zip(ratios, ratios[1:]))


def test_tbound_rejects_no_samples(states):
    with pytest.raises(ValueError):
        tbound_check(assemble_linearization(states[0], 0.0), samples=0)


def test_spectrum_csv(states, tmp_path):
    rep = spectral_gap(assemble_linearization(states[0], 0.0), k=1)
    path = write_spectrum_csv([spectrum_row(rep, 0.1)], tmp_path / "spectrum.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(SPECTRUM_COLUMNS)
    assert float(lines[1].split(",")[2]) == rep.gap
