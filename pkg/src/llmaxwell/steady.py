"""Steady states: limit problem, latitude map, longitude map, outer fixed point.

The construction follows the large-anisotropy argument.  First the limit
state theta_* (xi = 0) is found.  Then, for a given lambda, the map

    (theta, H)  ->  xi = Xi(theta, H)  ->  (theta', H') = Theta(xi)

is iterated to its fixed point.  Every inner solve is a Newton iteration on
the exact discrete residuals of :mod:`llmaxwell.field`; the demagnetizing
field is lagged between Newton solves and refreshed by ``L(u)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .domain import BoundaryData, DomainMask, winding_number
from .errors import BracketError, ConfigurationError, DivergedError, NonConvergenceError
from .field import (AngleField, SolverParams, assemble_u, cell_increments, check_chart,
                    coefficient_faces, energy, face_square_sum, frame_derivatives, residuals,
                    theta_increments)
from .maxwell import DemagField, solve_demag, zero_field
from .pde_core import DiscreteOperator, divform_matrix, laplacian_matrix, solve_linear

# outer sweeps compared by the contraction monitor
CONTRACTION_WINDOW = 5


@dataclass(frozen=True, eq=False)
class SteadyState:
    angles: AngleField
    demag: DemagField
    residuals: tuple
    energy_value: float
    iterations: int
    params: SolverParams
    history: list = field(default_factory=list)

    @property
    def mask(self) -> DomainMask:
        return self.angles.mask

    @property
    def theta(self):
        return self.angles.theta

    @property
    def xi(self):
        return self.angles.xi


def _field(a: AngleField, p: SolverParams) -> DemagField:
    if not p.demag:
        return zero_field(a.mask)
    return solve_demag(assemble_u(a), a.mask)


def measured_winding(a: AngleField):
    """Winding of theta along the core loop; None for domains without one."""
    if "major_radius" not in a.mask.params:
        return None
    return winding_number(a)


def _dot(a, b):
    return np.einsum("ij,ij->i", a, b)


def state_residuals(a: AngleField, H: DemagField, p: SolverParams):
    """(r_xi, r_theta, r_maxwell) as L2(Omega) norms."""
    mask = a.mask
    rt, rx = residuals(a, H, p)
    if p.demag:
        fresh = solve_demag(assemble_u(a), mask).H
        rm = mask.norm(np.linalg.norm(H.H - fresh, axis=1))
    else:
        rm = 0.0
    return mask.norm(rx), mask.norm(rt), rm


# ---------------------------------------------------------------------------
# longitude: div(cos^2 xi grad theta) + u_theta . H = 0


def theta_jacobian(a: AngleField, H, p: SolverParams) -> sp.csr_matrix:
    """d R_theta / d phi with H held fixed."""
    ci, co = coefficient_faces(a.mask, a.xi)
    J = divform_matrix(a.mask, ci, co)
    if H is not None and p.demag:
        J = J + sp.diags(_dot(frame_derivatives(a)["u_tt"], H.H))
    return J.tocsr()


def theta_for_field(a: AngleField, H, p: SolverParams, tol=None, max_newton: int = 30):
    """Newton solve of the longitude equation for phi with xi and H frozen."""
    tol = p.fixed_point_tol * 0.1 if tol is None else tol
    mask = a.mask
    rt, _ = residuals(a, H, p)
    r0 = mask.norm(rt)
    trace = [r0]
    damp = []
    for _ in range(max_newton):
        if trace[-1] <= tol:
            return a, trace
        J = theta_jacobian(a, H, p)
        A = DiscreteOperator.from_matrix(-J, symmetric_hint=True, mask=mask)
        step = solve_linear(A, rt, tol=p.linear_tol)
        t = 1.0
        while True:
            b = a.with_(phi=a.phi + t * step)
            rb, _ = residuals(b, H, p)
            nb = mask.norm(rb)
            if nb < trace[-1] or nb <= tol:
                break
            t *= 0.5
            if t < 1e-4:
                if trace[-1] <= 10 * tol:
                    return a, trace
                raise NonConvergenceError("longitude Newton line search failed",
                                          residual=trace[-1], trace=trace + damp)
        damp.append(t)
        a, rt = b, rb
        trace.append(nb)
    if trace[-1] <= tol:
        return a, trace
    raise NonConvergenceError("longitude Newton did not converge", residual=trace[-1], trace=trace)


def solve_theta_v(xi, bdata: BoundaryData, p: SolverParams, phi0=None, return_info=False):
    """The map Theta: solve the longitude equation coupled to the field, xi fixed.

    Alternates a Newton solve for phi (field frozen) with a field update.
    A residual that fails to shrink over CONTRACTION_WINDOW sweeps raises
    DivergedError carrying |Omega|.
    """
    mask = bdata.mask
    xi = np.zeros(mask.n) if xi is None else np.asarray(xi, float)
    check_chart(xi)
    phi = np.zeros(mask.n) if phi0 is None else np.asarray(phi0, float)
    a = AngleField(bdata, phi, xi)
    tol = p.fixed_point_tol
    trace = []
    for sweep in range(p.max_iters):
        H = _field(a, p)
        rt, _ = residuals(a, H, p)
        r = mask.norm(rt)
        trace.append(r)
        if r <= tol:
            break
        if len(trace) > CONTRACTION_WINDOW and trace[-1] >= trace[-1 - CONTRACTION_WINDOW]:
            raise DivergedError(f"field/longitude iteration stopped contracting (|Omega| = {mask.volume:.4g})",
                                residual=r, trace=trace, volume=mask.volume)
        a, _ = theta_for_field(a, H, p, tol=0.1 * tol)
    else:
        raise NonConvergenceError("field/longitude iteration hit max_iters", residual=trace[-1], trace=trace)
    if measured_winding(a) not in (None, bdata.winding):
        raise NonConvergenceError("longitude solve changed the winding number", residual=r, trace=trace)
    if return_info:
        return a, H, dict(sweeps=len(trace), trace=trace)
    return a, H


def solve_limit(mask: DomainMask, bdata: BoundaryData, p: SolverParams, phi0=None, return_info=False):
    """Limit state (theta_*, v_*): xi = 0 and the harmonic-map/field system."""
    if bdata.mask is not mask:
        raise ConfigurationError("boundary data belongs to a different mask")
    return solve_theta_v(None, bdata, p, phi0=phi0, return_info=return_info)


# ---------------------------------------------------------------------------
# latitude: Lap xi + (G/2 - lambda) sin 2 xi + u_xi . H = 0


def bracket_constant(theta_field: AngleField, H) -> float:
    """C = sup(|grad theta|^2 / 2 + |H|) from the inputs of the latitude map."""
    G = face_square_sum(theta_field.mask, *theta_increments(theta_field))
    Hn = np.zeros(theta_field.mask.n) if H is None else np.linalg.norm(np.asarray(getattr(H, "H", H)), axis=1)
    return float(np.max(0.5 * G + Hn))


def solve_xi(theta_field: AngleField, H, p: SolverParams, xi0=None, check_bracket=True,
             max_newton: int = 50, return_info=False):
    """The map Xi_lambda: latitude for fixed theta and field.

    Newton from xi = 0 with Jacobian Lap + diag((G - 2 lambda) cos 2xi - u.H).
    The result must satisfy |xi| <= 2C/lambda (BracketError otherwise).
    """
    if p.lam < p.lam_min:
        raise ConfigurationError(f"lambda = {p.lam:g} is below lambda_min = {p.lam_min:g}")
    mask = theta_field.mask
    Hv = None if H is None or not p.demag else np.asarray(getattr(H, "H", H), float)
    G = face_square_sum(mask, *theta_increments(theta_field))
    L = laplacian_matrix(mask)
    theta = theta_field.theta
    ct, st = np.cos(theta), np.sin(theta)
    tol = 0.1 * p.fixed_point_tol

    def resid(x):
        r = L @ x + (0.5 * G - p.lam) * np.sin(2 * x)
        if Hv is not None:
            r += -np.sin(x) * (ct * Hv[:, 0] + st * Hv[:, 1]) + np.cos(x) * Hv[:, 2]
        return r

    x = np.zeros(mask.n) if xi0 is None else np.array(xi0, float)
    r = resid(x)
    trace = [mask.norm(r)]
    for _ in range(max_newton):
        if trace[-1] <= tol:
            break
        diag = (G - 2 * p.lam) * np.cos(2 * x)
        if Hv is not None:
            diag -= np.cos(x) * (ct * Hv[:, 0] + st * Hv[:, 1]) + np.sin(x) * Hv[:, 2]
        J = (L + sp.diags(diag)).tocsr()
        A = DiscreteOperator.from_matrix(-J, symmetric_hint=True, mask=mask)
        step = solve_linear(A, r, tol=p.linear_tol)
        t = 1.0
        while True:
            xn = x + t * step
            rn = resid(xn)
            nn = mask.norm(rn)
            if nn < trace[-1] or nn <= tol:
                break
            t *= 0.5
            if t < 1e-4:
                raise NonConvergenceError("latitude Newton line search failed", residual=trace[-1], trace=trace)
        x, r = xn, rn
        trace.append(nn)
    else:
        if trace[-1] > tol:
            raise NonConvergenceError("latitude Newton did not converge", residual=trace[-1], trace=trace)
    check_chart(x)
    C = bracket_constant(theta_field, Hv)
    sup = float(np.max(np.abs(x))) if x.size else 0.0
    if check_bracket and sup > 2 * C / p.lam:
        raise BracketError(f"sup|xi| = {sup:.3e} exceeds 2C/lambda = {2 * C / p.lam:.3e}",
                           sup_xi=sup, bound=2 * C / p.lam)
    if return_info:
        return x, dict(trace=trace, C=C, sup=sup)
    return x


# ---------------------------------------------------------------------------
# outer fixed point


def fixed_point(mask: DomainMask, bdata: BoundaryData, p: SolverParams, init: AngleField | None = None,
                limit=None, demag: DemagField | None = None) -> SteadyState:
    """Damped iteration (theta, H) <- (1-w)(theta, H) + w Theta(Xi(theta, H)).

    Starts from ``init`` (field recomputed unless ``demag`` is given) or from
    the limit state.  Stops when r_xi, r_theta and r_maxwell are all below
    ``fixed_point_tol``; the relaxation is halved whenever the largest
    residual grows.
    """
    if p.lam < p.lam_min:
        raise ConfigurationError(f"lambda = {p.lam:g} is below lambda_min = {p.lam_min:g}")
    if init is None:
        if limit is None:
            limit = solve_limit(mask, bdata, p)
        a, H = limit
    else:
        a = init
        H = demag if demag is not None else _field(a, p)
    check_chart(a.xi)
    tol = p.fixed_point_tol
    omega = p.relaxation
    history = []
    res = state_residuals(a, H, p)
    history.append(dict(iteration=0, omega=omega, r_xi=res[0], r_theta=res[1], r_maxwell=res[2]))
    it = 0
    while max(res) > tol:
        if it >= p.max_iters:
            raise NonConvergenceError("outer fixed point hit max_iters", residual=max(res),
                                      trace=[max(h["r_xi"], h["r_theta"], h["r_maxwell"]) for h in history])
        it += 1
        xi = solve_xi(a, H, p, xi0=a.xi)
        b, Hb = solve_theta_v(xi, bdata, p, phi0=a.phi)
        while True:
            if omega >= 1.0:
                cand, Hc = b, Hb
            else:
                cand = b.with_(phi=(1 - omega) * a.phi + omega * b.phi)
                Hc = _blend(H, Hb, omega)
            new = state_residuals(cand, Hc, p)
            if max(new) <= max(res) or omega < 1.0 / 64:
                break
            omega *= 0.5
        a, H, res = cand, Hc, new
        history.append(dict(iteration=it, omega=omega, r_xi=res[0], r_theta=res[1], r_maxwell=res[2]))
    if measured_winding(a) not in (None, bdata.winding):
        raise NonConvergenceError("fixed point changed the winding number", residual=max(res))
    return SteadyState(a, H, tuple(res), energy(a, H, p), it, p, history)


def _blend(H1: DemagField, H2: DemagField, w: float) -> DemagField:
    mix = lambda x, y: (1 - w) * x + w * y  # noqa: E731
    return DemagField(H1.mask, mix(H1.v, H2.v), mix(H1.H, H2.H), mix(H1.rho, H2.rho), H1.window,
                      float("nan"))


# ---------------------------------------------------------------------------
# probes and sweeps


def theta_distance(a: AngleField, b: AngleField) -> float:
    """L2 distance of the lifted longitudes (same boundary data)."""
    return a.mask.norm(a.theta - b.theta)


def gradv_distance(H1: DemagField, H2: DemagField) -> float:
    """||grad(v1 - v2)||_{L2(R^3)}, exact through the energy identity."""
    d = DemagField(H1.mask, H1.v - H2.v, H1.H - H2.H, H1.rho - H2.rho, H1.window, float("nan"))
    return math.sqrt(max(float(np.sum(d.rho * d.v)) * H1.mask.cell_volume, 0.0))


def dirichlet_seminorm_sq(mask: DomainMask, x) -> float:
    """Face-sum integral of |grad x|^2 for x with zero trace."""
    i, o = cell_increments(mask, x)
    return float((np.sum(i**2) + np.sum(mask.face_weight * o**2)) * mask.h)


def contraction_probe(bdata: BoundaryData, p: SolverParams, samples: int = 3, seed: int = 0,
                      xi=None) -> dict:
    """Empirical constant in int|grad(theta1 - theta2)|^2 <= C ||grad(v1 - v2)||^2.

    Each sample draws two random unit magnetizations, freezes their fields
    and solves the longitude equation against each.
    """
    mask = bdata.mask
    rng = np.random.default_rng(seed)
    xi = np.zeros(mask.n) if xi is None else xi
    base = AngleField(bdata, np.zeros(mask.n), xi)
    ratios = []
    for _ in range(samples):
        fields = []
        for _ in range(2):
            m = rng.standard_normal((mask.n, 3))
            m /= np.linalg.norm(m, axis=1, keepdims=True)
            fields.append(solve_demag(m, mask))
        sol = [theta_for_field(base, H, p)[0] for H in fields]
        num = dirichlet_seminorm_sq(mask, sol[0].phi - sol[1].phi)
        den = gradv_distance(*fields) ** 2
        ratios.append(num / den)
    C1 = math.sqrt(1 / (3 * math.pi)) * (3 / math.gamma(2.5)) ** (1 / 3)
    bound = 1.0 / (2 * C1 * mask.volume ** (1 / 3)) ** 2
    return dict(ratios=ratios, constant=max(ratios), bound=bound, C1=C1, volume=mask.volume)


def holder_quotient(mask: DomainMask, x, alpha: float = 0.5) -> float:
    """Largest |x_a - x_b| / dist^alpha over faces (trace 0 at interface points)."""
    i, o = cell_increments(mask, x)
    h = mask.h
    q_in = np.max(np.abs(i)) / h**alpha if i.size else 0.0
    frac = mask.boundary_faces["frac"]
    q_out = np.max(np.abs(o) / (frac * h) ** alpha) if o.size else 0.0
    return float(max(q_in, q_out))


def second_difference_max(mask: DomainMask, x) -> float:
    """max |Lap_h x| as a C^2 surrogate."""
    return float(np.max(np.abs(laplacian_matrix(mask) @ x)))


def loglog_slope(xs, ys) -> float:
    lx, ly = np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float))
    return float(np.polyfit(lx, ly, 1)[0])


SWEEP_COLUMNS = ["lambda", "xi_sup", "xi_l2", "theta_dist_l2", "gradv_dist_l2", "energy",
                 "outer_iters", "r_xi", "r_theta", "r_maxwell"]


@dataclass
class SweepPoint:
    lam: float
    state: SteadyState
    xi_sup: float
    xi_l2: float
    theta_dist_l2: float
    gradv_dist_l2: float
    holder: float
    bracket_C: float
    d2_max: float

    def row(self) -> dict:
        s = self.state
        return {"lambda": self.lam, "xi_sup": self.xi_sup, "xi_l2": self.xi_l2,
                "theta_dist_l2": self.theta_dist_l2, "gradv_dist_l2": self.gradv_dist_l2,
                "energy": s.energy_value, "outer_iters": s.iterations, "r_xi": s.residuals[0],
                "r_theta": s.residuals[1], "r_maxwell": s.residuals[2]}


@dataclass
class SweepResult:
    limit: tuple
    points: list
    alpha: float = 0.5

    @property
    def lambdas(self):
        return [q.lam for q in self.points]

    @property
    def sup_slope(self) -> float:
        return loglog_slope(self.lambdas, [q.xi_sup for q in self.points])

    @property
    def holder_slope(self) -> float:
        return loglog_slope(self.lambdas, [q.holder for q in self.points])

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
            w.writeheader()
            for q in self.points:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in q.row().items()})
        return path


def lambda_sweep(mask: DomainMask, bdata: BoundaryData, lambdas, p: SolverParams,
                 limit=None, alpha: float = 0.5) -> SweepResult:
    """Fixed points along a lambda schedule, measured against the limit state."""
    lambdas = sorted(float(x) for x in lambdas)
    if not lambdas:
        raise ConfigurationError("empty lambda schedule")
    if limit is None:
        limit = solve_limit(mask, bdata, p)
    a_star, H_star = limit
    points = []
    for lam in lambdas:
        q = p.with_(lam=lam)
        s = fixed_point(mask, bdata, q, limit=limit)
        points.append(SweepPoint(
            lam=lam, state=s,
            xi_sup=float(np.max(np.abs(s.xi))), xi_l2=mask.norm(s.xi),
            theta_dist_l2=theta_distance(s.angles, a_star),
            gradv_dist_l2=gradv_distance(s.demag, H_star) if p.demag else 0.0,
            holder=holder_quotient(mask, s.xi, alpha),
            bracket_C=bracket_constant(s.angles, s.demag.H),
            d2_max=second_difference_max(mask, s.xi)))
    return SweepResult(limit, points, alpha)
