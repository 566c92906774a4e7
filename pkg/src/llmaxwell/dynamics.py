"""Time-dependent Landau-Lifshitz flow in angle variables.

    theta_t = R_theta / cos^2 xi - gamma R_xi / cos xi
    xi_t    = R_xi + gamma R_theta / cos xi

with the steady residuals R of :mod:`llmaxwell.field` and the field
re-solved from the current angles at every step.  At gamma = 0 this is a
(preconditioned) gradient flow of the energy; the gamma terms conserve it.

Stepping is linearly implicit: with M_n the stiff linear part (diffusion,
anisotropy and their gamma cross terms, coefficients frozen at t_n)

    (I - dt M_n) (x_{n+1} - x_n) = dt F(x_n).

Everything else (field, |grad theta|^2 forcing, nonlinear remainders) is
explicit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ChartError, DataError, LLMError, NonConvergenceError, StepRejected
from .field import (AngleField, SolverParams, assemble_u, cell_increments, check_chart,
                    coefficient_faces, energy, residuals)
from .maxwell import DemagField, solve_demag, zero_field
from .pde_core import DiscreteOperator, divform_matrix, laplacian_matrix, solve_linear
from .steady import SteadyState

ENERGY_SLACK = 1e-10


def _field(a: AngleField, p: SolverParams) -> DemagField:
    return solve_demag(assemble_u(a), a.mask) if p.demag else zero_field(a.mask)


def flow_rhs(a: AngleField, H, p: SolverParams):
    """(F_theta, F_xi) of the angle flow for a given field."""
    rt, rx = residuals(a, H, p)
    c = np.cos(a.xi)
    ft = rt / c**2 - p.gamma * rx / c
    fx = rx + p.gamma * rt / c
    return ft, fx


def dt_max(h: float, lam: float, gamma: float) -> float:
    """Largest step for the explicit remainder.

    Diffusion, anisotropy and the gamma cross terms are implicit, so only the
    O(1) field and gradient forcing is explicit; h^2/6 is kept as a
    conservative cap that also holds the first-order time error of the
    slowest mode near 2%.
    """
    return h**2 / 6.0


@dataclass(frozen=True, eq=False)
class FlowState:
    angles: AngleField
    time: float
    demag: DemagField
    energy_trace: tuple = ()

    @property
    def energy(self) -> float:
        return self.energy_trace[-1][1] if self.energy_trace else float("nan")


def initial_state(a: AngleField, p: SolverParams, t0: float = 0.0) -> FlowState:
    check_chart(a.xi)
    H = _field(a, p)
    return FlowState(a, t0, H, ((t0, energy(a, H, p)),))


def stiff_matrix(a: AngleField, p: SolverParams) -> sp.csr_matrix:
    """M_n as a 2n x 2n sparse matrix acting on (phi, xi)."""
    mask = a.mask
    n = mask.n
    c = np.cos(a.xi)
    Dc = divform_matrix(mask, *coefficient_faces(mask, a.xi))
    K = (laplacian_matrix(mask) - 2 * p.lam * sp.identity(n)).tocsr()
    g = sp.diags(p.gamma / c)
    top = sp.hstack([sp.diags(1 / c**2) @ Dc, -(g @ K)])
    bot = sp.hstack([g @ Dc, K])
    return sp.vstack([top, bot]).tocsr()


class Stepper:
    """Linearly implicit Euler with a frozen LU preconditioner.

    The LU factors of I - dt M at a reference state are reused across steps;
    each step solves the current system by GMRES to ``linear_tol``.
    """

    def __init__(self, p: SolverParams, dt: float, reference: AngleField | None = None):
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.p = p
        self.dt = dt
        self._lu = None
        if reference is not None:
            self.refactor(reference)

    def refactor(self, a: AngleField):
        n2 = 2 * a.mask.n
        S = (sp.identity(n2) - self.dt * stiff_matrix(a, self.p)).tocsc()
        lu = spla.splu(S)
        self._lu = spla.LinearOperator((n2, n2), matvec=lu.solve, dtype=float)

    def increment(self, a: AngleField, H) -> np.ndarray:
        p, dt = self.p, self.dt
        if self._lu is None:
            self.refactor(a)
        n = a.mask.n
        ft, fx = flow_rhs(a, H, p)
        rhs = dt * np.concatenate([ft, fx])
        S = (sp.identity(2 * n) - dt * stiff_matrix(a, p)).tocsr()
        op = DiscreteOperator.from_matrix(S, mask=a.mask)
        return solve_linear(op, rhs, tol=p.linear_tol, precond=self._lu, maxiter=200)

    def step(self, s: FlowState) -> FlowState:
        p = self.p
        a = s.angles
        n = a.mask.n
        try:
            d = self.increment(a, s.demag)
        except NonConvergenceError as exc:
            raise StepRejected(f"implicit solve failed at t={s.time:.6g}: {exc}",
                               dict(time=s.time, residual=exc.residual)) from None
        xi_new = a.xi + d[n:]
        try:
            check_chart(xi_new)
        except ChartError as exc:
            raise StepRejected(str(exc), dict(time=s.time, sup_xi=float(np.max(np.abs(xi_new))))) from None
        b = a.with_(phi=a.phi + d[:n], xi=xi_new)
        H = _field(b, p)
        E_new = energy(b, H, p)
        E_old = s.energy
        if p.gamma == 0 and E_new > E_old + ENERGY_SLACK * abs(E_old):
            raise StepRejected(f"energy increased by {E_new - E_old:.3e} at t={s.time:.6g}",
                               dict(time=s.time, energy_old=E_old, energy_new=E_new, dt=self.dt))
        t = s.time + self.dt
        return FlowState(b, t, H, s.energy_trace + ((t, E_new),))


def step(s: FlowState, dt: float, p: SolverParams, stepper: Stepper | None = None) -> FlowState:
    """Advance one step; StepRejected on chart breach, solve failure or energy growth (gamma = 0)."""
    if stepper is None or stepper.dt != dt or stepper.p != p:
        stepper = Stepper(p, dt, s.angles)
    return stepper.step(s)


def integrate(a: AngleField, p: SolverParams, dt: float, steps: int, stepper: Stepper | None = None) -> FlowState:
    s = initial_state(a, p)
    stepper = stepper or Stepper(p, dt, a)
    for _ in range(steps):
        s = stepper.step(s)
    return s


# ---------------------------------------------------------------------------
# distances and decay


def w22_distance(a: AngleField, b: AngleField) -> float:
    """Discrete W^{2,2} distance of the magnetizations u(a), u(b).

    Squared norm = ||du||^2 + ||grad du||^2 + ||Lap_h du||^2; the difference
    vanishes on the boundary, so the Laplacian controls all second
    derivatives by elliptic regularity.
    """
    mask = a.mask
    du = assemble_u(a) - assemble_u(b)
    L = laplacian_matrix(mask)
    tot = 0.0
    for k in range(3):
        w = du[:, k]
        i, o = cell_increments(mask, w)
        tot += np.sum(w**2) * mask.cell_volume
        tot += (np.sum(i**2) + np.sum(mask.face_weight * o**2)) * mask.h
        tot += np.sum((L @ w) ** 2) * mask.cell_volume
    return float(np.sqrt(tot))


@dataclass
class DecayRecord:
    times: list
    distances: list
    energies: list
    converged: bool
    unstable: bool
    gamma: float
    lam: float
    dt: float
    seed: int | None = None
    final: AngleField | None = field(default=None, repr=False)

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "distance", "energy"])
            for row in zip(self.times, self.distances, self.energies):
                w.writerow([repr(float(x)) for x in row])
        return path


def evolve_to_steady(initial: AngleField, target: SteadyState, p: SolverParams, T_max: float,
                     dt: float | None = None, tol: float = 1e-8, growth_window: int = 50,
                     growth_factor: float = 10.0, seed=None, callback=None) -> DecayRecord:
    """Integrate until the W^{2,2} distance to ``target`` drops below ``tol``.

    Sustained growth (distance up by ``growth_factor`` over ``growth_window``
    steps) ends the run with ``unstable=True`` instead of raising.
    ``callback(state, step_index)`` is called after every accepted step.
    """
    dt = dt or dt_max(initial.mask.h, p.lam, p.gamma)
    s = initial_state(initial, p)
    d0 = w22_distance(initial, target.angles)
    rec = DecayRecord([0.0], [d0], [s.energy], d0 <= tol, False, p.gamma, p.lam, dt, seed, initial)
    if rec.converged:
        return rec
    stepper = Stepper(p, dt, target.angles)
    while s.time < T_max - 0.5 * dt:
        s = stepper.step(s)
        if callback is not None:
            callback(s, len(rec.times))
        d = w22_distance(s.angles, target.angles)
        rec.times.append(s.time)
        rec.distances.append(d)
        rec.energies.append(s.energy)
        if d <= tol:
            rec.converged = True
            break
        if not np.isfinite(d):
            rec.unstable = True
            break
        k = len(rec.distances)
        if k > growth_window and d > growth_factor * min(rec.distances[k - 1 - growth_window:k - 1]):
            rec.unstable = True
            break
    rec.final = s.angles
    return rec


def fit_decay_rate(times, distances=None, drop: float = 0.1, min_samples: int = 20):
    """Least-squares rate mu in d(t) ~ C exp(-mu t) after dropping the first ``drop`` fraction.

    Accepts a DecayRecord or (times, distances).  Returns (rate, r_squared).
    """
    if distances is None:
        times, distances = times.times, times.distances
    t = np.asarray(times, float)
    d = np.asarray(distances, float)
    if np.any(~(d > 0)):
        raise DataError("distances must be positive to take logarithms")
    start = int(np.floor(drop * len(t)))
    t, d = t[start:], d[start:]
    if len(t) < min_samples:
        raise DataError(f"need at least {min_samples} samples after the transient, got {len(t)}")
    y = np.log(d)
    ss_tot = np.sum((y - y.mean()) ** 2)
    if ss_tot <= 1e-30 * max(1.0, np.sum(y**2)):
        return 0.0, 1.0
    slope, icpt = np.polyfit(t, y, 1)
    ss_res = np.sum((y - (slope * t + icpt)) ** 2)
    return float(-slope), float(1 - ss_res / ss_tot)


# ---------------------------------------------------------------------------
# perturbations


def smooth_field(mask, rng, passes: int = 2) -> np.ndarray:
    """Random field with zero trace, smoothed by inverse Dirichlet Laplacians."""
    w = rng.standard_normal(mask.n)
    A = DiscreteOperator.from_matrix(-laplacian_matrix(mask), symmetric_hint=True, mask=mask)
    for _ in range(passes):
        w = solve_linear(A, w, tol=1e-10)
    return w / np.max(np.abs(w))


def perturb(target: AngleField, eps: float, rng, xi_weight: float = 1.0) -> AngleField:
    """target plus a smooth zero-trace perturbation of W^{2,2} size eps."""
    mask = target.mask
    dphi = smooth_field(mask, rng)
    dxi = xi_weight * smooth_field(mask, rng)
    unit = target.with_(phi=target.phi + 1e-6 * dphi, xi=target.xi + 1e-6 * dxi)
    scale = 1e-6 * eps / w22_distance(unit, target)
    return target.with_(phi=target.phi + scale * dphi, xi=target.xi + scale * dxi)


@dataclass
class BatteryResult:
    records: list
    rates: list
    qualities: list

    @property
    def all_decay(self) -> bool:
        return all(r.converged and not r.unstable for r in self.records)


def perturbation_battery(target: SteadyState, p: SolverParams, seeds=range(10), eps: float = 1e-3,
                         T_max: float = 0.2, dt: float | None = None, tol: float = 1e-8,
                         callback=None) -> BatteryResult:
    """Trajectories from smooth random perturbations, one per seed.

    ``callback(seed, state, step_index)`` observes every accepted step.
    """
    records, rates, quals = [], [], []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        init = perturb(target.angles, eps, rng)
        cb = None if callback is None else (lambda st, k, _s=seed: callback(_s, st, k))
        rec = evolve_to_steady(init, target, p, T_max, dt=dt, tol=tol, seed=seed, callback=cb)
        records.append(rec)
        try:
            rate, q = fit_decay_rate(rec)
        except LLMError:
            rate, q = float("nan"), float("nan")
        rates.append(rate)
        quals.append(q)
    return BatteryResult(records, rates, quals)


def empirical_gamma0(target: SteadyState, p: SolverParams, gammas, seeds=range(3), **kw):
    """Largest gamma of an increasing schedule before the battery first fails.

    Returns (gamma0, {gamma: BatteryResult}); gamma0 is None if even the
    first value fails.
    """
    out, g0 = {}, None
    for g in sorted(gammas):
        res = perturbation_battery(target, p.with_(gamma=g), seeds=seeds, **kw)
        out[g] = res
        if not res.all_decay:
            break
        g0 = g
    return g0, out
