"""Linearization of the angle flow about a steady state and its spectrum.

The Jacobian A of (F_theta, F_xi) = P(xi) (R_theta, R_xi) is assembled
exactly:  A = P J_R + (dP/dxi R) psi, where J_R is the (symmetric) Hessian
of minus the energy density.  J_R splits into a sparse local part and the
field coupling  (u_theta, u_xi) . L(u_theta phi + u_xi psi).

Eigenvalues are reported for -A, so a stable state has Re mu_1 > 0.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .field import (AngleField, SolverParams, assemble_u, coefficient_faces, frame_derivatives,
                    face_square_sum, residuals, theta_increments)
from .maxwell import DemagField, solve_demag, zero_field
from .pde_core import DiscreteOperator, divform_matrix, laplacian_matrix, smallest_eigenpairs
from .steady import SteadyState, state_residuals


def _dot(a, b):
    return np.einsum("ij,ij->i", a, b)


def make_state(angles: AngleField, p: SolverParams, demag: DemagField | None = None) -> SteadyState:
    """Wrap arbitrary angles as a base state (residuals measured, not enforced)."""
    if demag is None:
        demag = solve_demag(assemble_u(angles), angles.mask) if p.demag else zero_field(angles.mask)
    from .field import energy

    return SteadyState(angles, demag, state_residuals(angles, demag, p), energy(angles, demag, p), 0, p)


def residual_hessian_local(a: AngleField, H, p: SolverParams):
    """(J_tt, J_tx, J_xx): sparse local parts of d(R_theta, R_xi)/d(phi, xi); J_xt = J_tx^T."""
    mask = a.mask
    h2 = mask.h**2
    fa, fb, _ = mask.interior_faces
    cell = mask.boundary_faces["cell"]
    kap = mask.face_weight
    n = mask.n
    ti, to = theta_increments(a)
    Jtt = divform_matrix(mask, *coefficient_faces(mask, a.xi))
    s2 = np.sin(2 * a.xi)
    rows = np.concatenate([fa, fa, fb, fb, cell])
    cols = np.concatenate([fa, fb, fa, fb, cell])
    vals = -0.5 * np.concatenate([s2[fa] * ti, s2[fb] * ti, -s2[fa] * ti, -s2[fb] * ti,
                                  kap * s2[cell] * to]) / h2
    Jtx = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    G = face_square_sum(mask, ti, to)
    Jxx = laplacian_matrix(mask) + sp.diags((G - 2 * p.lam) * np.cos(2 * a.xi))
    if H is not None and p.demag:
        d = frame_derivatives(a)
        Hv = H.H
        Jtt = Jtt + sp.diags(_dot(d["u_tt"], Hv))
        Jtx = Jtx + sp.diags(_dot(d["u_tx"], Hv))
        Jxx = Jxx + sp.diags(_dot(d["u_xx"], Hv))
    return Jtt.tocsr(), Jtx.tocsr(), Jxx.tocsr()


@dataclass(eq=False)
class LinearizationBlocks:
    """Jacobian A of the flow at ``base`` (paper sign: stability <=> -A positive)."""

    base: SteadyState
    gamma: float
    coupling: bool
    local: sp.csr_matrix
    angles: AngleField
    _dirs: tuple = field(repr=False, default=None)

    @property
    def n(self) -> int:
        return self.angles.mask.n

    @property
    def mask(self):
        return self.angles.mask

    def nonlocal_part(self, x):
        """P (u_t . L(w), u_x . L(w)) with w = u_t phi + u_x psi."""
        n = self.n
        if not self.coupling:
            return np.zeros(2 * n)
        ut, ux, pinv = self._dirs
        w = ut * x[:n, None] + ux * x[n:, None]
        Lw = solve_demag(w, self.mask).H
        gt, gx = _dot(ut, Lw), _dot(ux, Lw)
        c2inv, gc = pinv
        return np.concatenate([c2inv * gt - gc * gx, gc * gt + gx])

    def apply(self, x):
        x = np.asarray(x, float)
        return self.local @ x + self.nonlocal_part(x)

    def block(self, i: int, j: int) -> DiscreteOperator:
        """a_ij as a DiscreteOperator on n-vectors (i, j in {1, 2})."""
        n = self.n

        def act(v):
            x = np.zeros(2 * n)
            x[(j - 1) * n:j * n] = v
            return self.apply(x)[(i - 1) * n:i * n]

        loc = self.local[(i - 1) * n:i * n, (j - 1) * n:j * n]
        return DiscreteOperator(act, n, False, loc, not self.coupling, self.mask)

    @property
    def a11(self):
        return self.block(1, 1)

    @property
    def a12(self):
        return self.block(1, 2)

    @property
    def a21(self):
        return self.block(2, 1)

    @property
    def a22(self):
        return self.block(2, 2)

    def operator(self) -> DiscreteOperator:
        """-A on pair vectors, with the sparse local part for preconditioning."""
        return DiscreteOperator(lambda x: -self.apply(x), 2 * self.n, False, (-self.local).tocsr(),
                                not self.coupling, self.mask)


def assemble_linearization(base: SteadyState, gamma: float, coupling: bool = True,
                           xi_zero: bool = False) -> LinearizationBlocks:
    """Exact Jacobian of the flow right-hand side at ``base``.

    ``coupling=False`` drops the nonlocal field terms; ``xi_zero`` evaluates
    every coefficient with xi replaced by 0 (field kept).
    """
    p = base.params.with_(gamma=gamma)
    a = base.angles
    if xi_zero:
        a = a.with_(xi=np.zeros(a.mask.n))
    H = base.demag if p.demag else None
    coupling = bool(coupling and p.demag)
    Jtt, Jtx, Jxx = residual_hessian_local(a, H, p)
    Jxt = Jtx.T.tocsr()
    rt, rx = residuals(a, H, p)
    c, s = np.cos(a.xi), np.sin(a.xi)
    c2inv = 1 / c**2
    gc = gamma / c
    D1, Dg = sp.diags(c2inv), sp.diags(gc)
    dtheta = 2 * s / c**3 * rt - gamma * s / c**2 * rx
    dxi = gamma * s / c**2 * rt
    top = sp.hstack([D1 @ Jtt - Dg @ Jxt, D1 @ Jtx - Dg @ Jxx + sp.diags(dtheta)])
    bot = sp.hstack([Dg @ Jtt + Jxt, Dg @ Jtx + Jxx + sp.diags(dxi)])
    local = sp.vstack([top, bot]).tocsr()
    dirs = None
    if coupling:
        d = frame_derivatives(a)
        dirs = (d["u_t"], d["u_x"], (c2inv, gc))
    return LinearizationBlocks(base, gamma, coupling, local, a, dirs)


# ---------------------------------------------------------------------------
# eigenvalues


@dataclass
class SpectrumReport:
    eigenvalues: list
    psi_mass: list
    residuals: list
    vectors: list = field(repr=False, default_factory=list)
    lam: float = float("nan")
    gamma: float = 0.0

    @property
    def gap(self) -> float:
        return float(np.real(self.eigenvalues[0]))

    def branch(self, which: str = "phi", threshold: float = 0.5):
        """Eigenvalues whose psi_mass is below (phi) or above (psi) ``threshold``."""
        keep = [m < threshold if which == "phi" else m >= threshold for m in self.psi_mass]
        return [mu for mu, k in zip(self.eigenvalues, keep) if k]


def spectral_gap(blocks: LinearizationBlocks, k: int = 4, tol: float = 1e-6, sigma: float = 0.0) -> SpectrumReport:
    """k eigenvalues of -A of smallest real part, normalized ||phi||^2 + ||psi||^2 = 1."""
    mask = blocks.mask
    n = blocks.n
    pairs = smallest_eigenpairs(blocks.operator(), k=k, tol=tol, sigma=sigma)
    vals, mass, res, vecs = [], [], [], []
    for pr in pairs:
        v = pr.vector
        nrm = np.sqrt(np.sum(np.abs(v) ** 2) * mask.cell_volume)
        v = v / nrm
        vals.append(pr.value)
        mass.append(float(np.sum(np.abs(v[n:]) ** 2) * mask.cell_volume))
        res.append(pr.residual)
        vecs.append(v)
    return SpectrumReport(vals, mass, res, vecs, blocks.base.params.lam, blocks.gamma)


def limit_operator(limit_angles: AngleField, limit_field: DemagField, mask=None) -> DiscreteOperator:
    """-(Lap phi + (u_tt . H_*) phi + u_t . L(u_t phi)) at the limit state (xi = 0)."""
    mask = limit_angles.mask
    th = limit_angles.theta
    ut = np.stack([-np.sin(th), np.cos(th), np.zeros_like(th)], axis=1)
    utt = np.stack([-np.cos(th), -np.sin(th), np.zeros_like(th)], axis=1)
    K = (laplacian_matrix(mask) + sp.diags(_dot(utt, limit_field.H))).tocsr()

    def act(phi):
        h = solve_demag(ut * phi[:, None], mask).H
        return -(K @ phi + _dot(ut, h))

    return DiscreteOperator(act, mask.n, True, (-K).tocsr(), False, mask)


def limit_eigenvalues(limit_angles, limit_field, k: int = 3, tol: float = 1e-6):
    pairs = smallest_eigenpairs(limit_operator(limit_angles, limit_field), k=k, tol=tol)
    return [p.value for p in pairs]


# ---------------------------------------------------------------------------
# T-bound witness


def cell_gradient(mask, x, trace=0.0) -> np.ndarray:
    """Centered cell gradient (n, 3) from face differences; trace values at interface points."""
    fa, fb, ax = mask.interior_faces
    bf = mask.boundary_faces
    n = mask.n
    g = np.zeros((n, 3))
    cnt = np.zeros((n, 3))
    d = (x[fb] - x[fa]) / mask.h
    for k in range(3):
        sel = ax == k
        np.add.at(g[:, k], fa[sel], d[sel])
        np.add.at(g[:, k], fb[sel], d[sel])
        np.add.at(cnt[:, k], fa[sel], 1)
        np.add.at(cnt[:, k], fb[sel], 1)
    tr = np.broadcast_to(np.asarray(trace, float), bf["cell"].shape)
    db = bf["side"] * (tr - x[bf["cell"]]) / (bf["frac"] * mask.h)
    for k in range(3):
        sel = bf["axis"] == k
        np.add.at(g[:, k], bf["cell"][sel], db[sel])
        np.add.at(cnt[:, k], bf["cell"][sel], 1)
    return g / np.maximum(cnt, 1)


def theta_gradient(a: AngleField) -> np.ndarray:
    """Cell gradient of the lifted longitude."""
    mask = a.mask
    fa, fb, ax = mask.interior_faces
    bf = mask.boundary_faces
    ti, to = theta_increments(a)
    n = mask.n
    g = np.zeros((n, 3))
    cnt = np.zeros((n, 3))
    for k in range(3):
        sel = ax == k
        np.add.at(g[:, k], fa[sel], ti[sel] / mask.h)
        np.add.at(g[:, k], fb[sel], ti[sel] / mask.h)
        np.add.at(cnt[:, k], fa[sel], 1)
        np.add.at(cnt[:, k], fb[sel], 1)
        sb = bf["axis"] == k
        np.add.at(g[:, k], bf["cell"][sb], (bf["side"] * to / (bf["frac"] * mask.h))[sb])
        np.add.at(cnt[:, k], bf["cell"][sb], 1)
    return g / np.maximum(cnt, 1)


def perturbation_part(blocks: LinearizationBlocks, x) -> np.ndarray:
    """G Phi: the entries of A that carry sin xi, grad cos^2 xi or gamma (paper sign)."""
    a = blocks.angles
    mask = a.mask
    n = mask.n
    p = blocks.base.params
    g = blocks.gamma
    phi, psi = x[:n], x[n:]
    xi = a.xi
    c, s2 = np.cos(xi), np.sin(2 * xi)
    L = laplacian_matrix(mask)
    gth = theta_gradient(a)
    gphi, gpsi = cell_gradient(mask, phi), cell_gradient(mask, psi)
    gc2 = cell_gradient(mask, c**2, trace=1.0)
    dot_t_phi, dot_t_psi = _dot(gth, gphi), _dot(gth, gpsi)
    G11 = _dot(gc2, gphi) / c**2 - g * s2 * dot_t_phi / c
    G12 = -s2 * dot_t_psi / c**2 - g * (L @ psi) / c + 2 * g * p.lam / c * (np.cos(2 * xi) + np.sin(xi) ** 2) * psi
    G21 = s2 * dot_t_phi + g / c * (c**2 * (L @ phi) + _dot(gc2, gphi))
    if p.demag:
        d = frame_derivatives(a)
        Hv = blocks.base.demag.H
        G21 = G21 + _dot(d["u_xt"], Hv) * phi
        if g:
            Lt = solve_demag(d["u_t"] * phi[:, None], mask).H
            G21 = G21 + g / c * (_dot(d["u_tt"], Hv) * phi + _dot(d["u_t"], Lt))
    G22 = -g * s2 * dot_t_psi / c
    return np.concatenate([G11 + G12, G21 + G22])


def tbound_check(blocks: LinearizationBlocks, beta: float = 1.0, samples: int = 10, seed: int = 0) -> dict:
    """Ratios ||G Phi|| / ((beta + 1)||Phi|| + ||T Phi||), T = beta I - (A - G), on smooth samples."""
    from .dynamics import smooth_field

    if samples < 1:
        raise ValueError("samples must be >= 1")
    mask = blocks.mask
    rng = np.random.default_rng(seed)
    nrm = mask.norm
    ratios = []
    for _ in range(samples):
        x = np.concatenate([smooth_field(mask, rng), smooth_field(mask, rng)])
        Gx = perturbation_part(blocks, x)
        Abar = blocks.apply(x) - Gx
        Tx = beta * x - Abar
        ratios.append(nrm(Gx) / ((beta + 1) * nrm(x) + nrm(Tx)))
    r = np.array(ratios)
    return dict(ratios=ratios, max=float(r.max()), mean=float(r.mean()), median=float(np.median(r)))


SPECTRUM_COLUMNS = ["lambda", "gamma", "re_mu1", "im_mu1", "psi_mass1", "gap_residual", "tbound_max"]


def write_spectrum_csv(rows, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SPECTRUM_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(float(r[k])) for k in SPECTRUM_COLUMNS})
    return path


def spectrum_row(rep: SpectrumReport, tbound_max: float = float("nan")) -> dict:
    mu = rep.eigenvalues[0]
    return {"lambda": rep.lam, "gamma": rep.gamma, "re_mu1": float(np.real(mu)), "im_mu1": float(np.imag(mu)),
            "psi_mass1": rep.psi_mass[0], "gap_residual": rep.residuals[0], "tbound_max": tbound_max}
