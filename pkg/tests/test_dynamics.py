import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from llmaxwell.dynamics import (Stepper, dt_max, evolve_to_steady, fit_decay_rate, flow_rhs, initial_state,
                                integrate, perturb, perturbation_battery, w22_distance)
from llmaxwell.errors import DataError
from llmaxwell.field import AngleField, assemble_u, residuals
from llmaxwell.maxwell import solve_demag
from llmaxwell.spectrum import assemble_linearization, spectral_gap
from llmaxwell.steady import fixed_point

seeds = st.integers(0, 2**32 - 1)


@pytest.fixture(scope="module")
def target(bdata, params):
    return fixed_point(bdata.mask, bdata, params)


def test_steady_state_does_not_move(target):
    p = target.params
    dt = dt_max(target.mask.h, p.lam, p.gamma)
    s = Stepper(p, dt, target.angles).step(initial_state(target.angles, p))
    moved = np.hypot(target.mask.norm(s.angles.phi - target.angles.phi),
                     target.mask.norm(s.angles.xi - target.angles.xi))
    assert moved <= 10 * p.fixed_point_tol * dt


@given(seeds, st.floats(0.0, 2.0))
def test_gyro_terms_do_no_work(bdata, params, seed, gamma):
    rng = np.random.default_rng(seed)
    n = bdata.mask.n
    a = AngleField(bdata, 0.1 * rng.standard_normal(n), 0.02 * rng.standard_normal(n))
    H = solve_demag(assemble_u(a), a.mask)
    rt, rx = residuals(a, H, params)
    rate0 = np.dot(rt, rt / np.cos(a.xi) ** 2) + np.dot(rx, rx)
    ft, fx = flow_rhs(a, H, params.with_(gamma=gamma))
    assert np.dot(rt, ft) + np.dot(rx, fx) == pytest.approx(rate0, rel=1e-9)


def test_energy_monotone_at_zero_gamma(target, rng):
    a = perturb(target.angles, 1e-2, rng)
    p = target.params
    s = integrate(a, p, dt_max(a.mask.h, p.lam, 0.0), 15)
    E = np.array([e for _, e in s.energy_trace])
    assert np.all(np.diff(E) <= 1e-10 * np.abs(E[:-1]))
    assert np.allclose(np.linalg.norm(assemble_u(s.angles), axis=1), 1.0, atol=1e-15)


def test_first_order_in_time(target, rng):
    a = perturb(target.angles, 5e-2, rng)
    p = target.params
    dt = 8 * dt_max(a.mask.h, p.lam, 0.0)

    def run(k):
        s = integrate(a, p, dt / k, k)
        return np.concatenate([s.angles.phi, s.angles.xi])

    x1, x2, x4 = run(1), run(2), run(4)
    ratio = np.linalg.norm(x1 - x4) / np.linalg.norm(x2 - x4)
    # first order with a dt/4 reference: (1 - 1/4) / (1/2 - 1/4) = 3
    assert ratio == pytest.approx(3.0, rel=0.15)


def test_evolve_from_target_is_immediate(target):
    rec = evolve_to_steady(target.angles, target, target.params, T_max=1.0)
    assert rec.converged and len(rec.times) == 1


def test_perturbation_size(target, rng):
    a = perturb(target.angles, 1e-3, rng)
    assert w22_distance(a, target.angles) == pytest.approx(1e-3, rel=1e-3)
    assert w22_distance(target.angles, target.angles) == 0


@pytest.fixture(scope="module")
def battery(target):
    return perturbation_battery(target, target.params, seeds=range(2), eps=1e-3, T_max=0.2)


def test_perturbations_decay_at_spectral_rate(battery, target):
    assert battery.all_decay
    gap = spectral_gap(assemble_linearization(target, 0.0), k=1).gap
    for rate, r2 in zip(battery.rates, battery.qualities):
        assert rate > 0 and r2 > 0.99
        assert rate == pytest.approx(gap, rel=0.25)


def test_decay_record_csv(battery, tmp_path):
    rec = battery.records[0]
    lines = rec.write_csv(tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "t,distance,energy" and len(lines) == len(rec.times) + 1


def test_gyrotropic_battery_decays(target):
    res = perturbation_battery(target, target.params.with_(gamma=0.2), seeds=[5], eps=1e-3, T_max=0.2)
    assert res.all_decay


def test_fit_exact_exponential():
    t = np.linspace(0, 2, 200)
    rate, r2 = fit_decay_rate(t, np.exp(-3 * t))
    assert rate == pytest.approx(3.0, abs=1e-6) and r2 == pytest.approx(1.0)


def test_fit_wobbly_exponential():
    t = np.linspace(0, 2, 200)
    rate, _ = fit_decay_rate(t, np.exp(-3 * t) * (1 + 0.01 * np.sin(t)))
    assert rate == pytest.approx(3.0, rel=0.01)


def test_fit_constant():
    rate, r2 = fit_decay_rate(np.linspace(0, 1, 50), np.full(50, 0.7))
    assert rate == 0.0 and r2 == 1.0


@given(st.floats(0.01, 100), st.floats(1e-8, 1e3))
def test_fit_recovers_rate(mu, c):
    t = np.linspace(0, 5 / mu, 60)
    rate, _ = fit_decay_rate(t, c * np.exp(-mu * t))
    assert rate == pytest.approx(mu, rel=1e-6)


@pytest.mark.parametrize("d", [np.zeros(50), np.r_[np.ones(49), -1.0]])
def test_fit_rejects_nonpositive(d):
    with pytest.raises(DataError):
        fit_decay_rate(np.arange(50.0), d)


def test_fit_needs_samples():
    with pytest.raises(DataError):
        fit_decay_rate(np.arange(10.0), np.exp(-np.arange(10.0)))


def test_stepper_rejects_bad_dt(params):
    with pytest.raises(ValueError):
        Stepper(params, 0.0)
