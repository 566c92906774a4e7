"""Magnetization in spherical angles and the discrete Landau-Lifshitz energy.

u = (cos xi cos theta, cos xi sin theta, sin xi), with theta stored as
``w * theta_ref + phi``: ``theta_ref = atan2(y, x)`` carries the winding and
``phi`` is single valued.

The energy is a sum over cell faces.  Interior faces carry the difference of
neighbouring cell values; boundary faces carry the difference between the
Dirichlet value at the interface and the cell value, weighted by
``1/frac``.  The residuals returned by :func:`residuals` are the exact
negative gradients of :func:`energy` divided by the cell volume, so the
steady equations are the discrete Euler-Lagrange equations.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .domain import BoundaryData, DomainMask, wrap_angle
from .errors import ChartError, ConfigurationError, DataError

CHART_BAND = 0.1


@dataclass(frozen=True)
class SolverParams:
    """Model parameters and solver controls.

    ``lam`` is the anisotropy strength in physical units (1/length^2).
    """

    lam: float = 1.0
    gamma: float = 0.0
    linear_tol: float = 1e-8
    fixed_point_tol: float = 1e-8
    max_iters: int = 200
    relaxation: float = 1.0
    demag: bool = True
    lam_min: float = 0.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ConfigurationError(f"lambda must be positive, got {self.lam}")
        if not self.gamma >= 0:
            raise ConfigurationError(f"gamma must be non-negative, got {self.gamma}")
        if not (self.linear_tol > 0 and self.fixed_point_tol > 0):
            raise ConfigurationError("tolerances must be positive")
        if not 0 < self.relaxation <= 1:
            raise ConfigurationError(f"relaxation must lie in (0, 1], got {self.relaxation}")
        if int(self.max_iters) < 1:
            raise ConfigurationError("max_iters must be >= 1")

    @classmethod
    def from_grid_units(cls, lam_grid: float, h: float, **kw) -> "SolverParams":
        """lambda given as the dimensionless product lambda * h^2."""
        kw.setdefault("lam_min", kw.pop("lam_min_grid", 0.0) / h**2)
        return cls(lam=lam_grid / h**2, **kw)

    def with_(self, **kw) -> "SolverParams":
        return replace(self, **kw)


def check_chart(xi, band: float = CHART_BAND) -> None:
    m = float(np.max(np.abs(xi))) if np.size(xi) else 0.0
    if not m <= 0.5 * np.pi - band:
        raise ChartError(f"|xi| reached {m:.4f} > pi/2 - {band}; spherical chart degenerates")


@dataclass(frozen=True, eq=False)
class AngleField:
    """(phi, xi) on the inside cells; theta = winding * theta_ref + phi."""

    bdata: BoundaryData
    phi: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        n = self.bdata.mask.n
        phi = np.asarray(self.phi, dtype=float)
        xi = np.asarray(self.xi, dtype=float)
        if phi.shape != (n,) or xi.shape != (n,):
            raise ConfigurationError(f"angle arrays must have shape ({n},)")
        if np.any(np.abs(xi) > 0.5 * np.pi + 1e-12):
            raise ChartError("latitude outside [-pi/2, pi/2]")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "xi", xi)

    @property
    def mask(self) -> DomainMask:
        return self.bdata.mask

    @property
    def winding(self) -> int:
        return self.bdata.winding

    @property
    def theta(self) -> np.ndarray:
        if self.winding == 0:
            return self.phi
        return self.winding * self.mask.theta_ref + self.phi

    @classmethod
    def zeros(cls, bdata: BoundaryData) -> "AngleField":
        n = bdata.mask.n
        return cls(bdata, np.zeros(n), np.zeros(n))

    def with_(self, phi=None, xi=None) -> "AngleField":
        return AngleField(self.bdata, self.phi if phi is None else phi, self.xi if xi is None else xi)

    def loop_increments(self, loop):
        """Lifted theta increments along a closed cell loop."""
        loop = np.asarray(loop)
        nxt = np.roll(loop, -1)
        d = np.roll(self.phi[loop], -1) - self.phi[loop]
        if self.winding:
            ref = self.mask.theta_ref
            d = d + self.winding * wrap_angle(ref[nxt] - ref[loop])
        return d

    def default_loop(self):
        return self.mask.core_loop


def unit_vector(theta, xi) -> np.ndarray:
    theta, xi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(xi, float))
    c = np.cos(xi)
    return np.stack([c * np.cos(theta), c * np.sin(theta), np.sin(xi)], axis=-1)


def assemble_u(a: AngleField) -> np.ndarray:
    """Unit magnetization on the inside cells, shape (n, 3)."""
    return unit_vector(a.theta, a.xi)


def frame_derivatives(a: AngleField) -> dict:
    """Analytic first and second angle derivatives of u."""
    return frame_derivatives_from(a.theta, a.xi)


def frame_derivatives_from(theta, xi) -> dict:
    ct, st = np.cos(theta), np.sin(theta)
    cx, sx = np.cos(xi), np.sin(xi)
    z = np.zeros_like(ct)
    u_t = np.stack([-cx * st, cx * ct, z], axis=-1)
    u_x = np.stack([-sx * ct, -sx * st, cx], axis=-1)
    u_tt = np.stack([-cx * ct, -cx * st, z], axis=-1)
    u_tx = np.stack([sx * st, -sx * ct, z], axis=-1)
    u_xx = np.stack([-cx * ct, -cx * st, -sx], axis=-1)
    return dict(u_t=u_t, u_x=u_x, u_tt=u_tt, u_tx=u_tx, u_xt=u_tx.copy(), u_xx=u_xx)


# ---------------------------------------------------------------------------
# face differences


def theta_increments(a: AngleField):
    """theta differences across interior faces (b - a) and boundary faces (trace - cell).

    Boundary increments are wrapped, so theta_g only matters mod 2 pi.
    """
    mask, bd = a.mask, a.bdata
    fa, fb, _ = mask.interior_faces
    cell = mask.boundary_faces["cell"]
    inner = a.phi[fb] - a.phi[fa]
    outer = bd.correction - a.phi[cell]
    if a.winding:
        ri, ro = mask.ref_increments
        inner = inner + a.winding * ri
        outer = outer + a.winding * ro
    return inner, wrap_angle(outer)


def cell_increments(mask: DomainMask, x, trace=0.0):
    fa, fb, _ = mask.interior_faces
    cell = mask.boundary_faces["cell"]
    return x[fb] - x[fa], trace - x[cell]


def face_divergence(mask: DomainMask, inner_flux, outer_flux) -> np.ndarray:
    """(1/h^2) sum of face fluxes into each cell (fluxes measured b - a, trace - cell)."""
    fa, fb, _ = mask.interior_faces
    cell = mask.boundary_faces["cell"]
    n = mask.n
    out = np.zeros(n) + np.bincount(fa, inner_flux, minlength=n) - np.bincount(fb, inner_flux, minlength=n)
    out += np.bincount(cell, outer_flux * mask.face_weight, minlength=n)
    return out / mask.h**2


def face_square_sum(mask: DomainMask, inner, outer) -> np.ndarray:
    """G_a = (1/2) sum over the faces of cell a of kappa_f (d_f / h)^2 ~ |grad|^2."""
    fa, fb, _ = mask.interior_faces
    cell = mask.boundary_faces["cell"]
    n = mask.n
    s = inner**2
    g = np.zeros(n) + np.bincount(fa, s, minlength=n) + np.bincount(fb, s, minlength=n)
    g += np.bincount(cell, mask.face_weight * outer**2, minlength=n)
    return 0.5 * g / mask.h**2


def coefficient_faces(mask: DomainMask, xi):
    """Arithmetic face means of cos^2 xi; the trace value on boundary faces is 1."""
    c = np.cos(xi) ** 2
    fa, fb, _ = mask.interior_faces
    cell = mask.boundary_faces["cell"]
    return 0.5 * (c[fa] + c[fb]), 0.5 * (c[cell] + 1.0)


def grad_theta_squared(a: AngleField) -> np.ndarray:
    return face_square_sum(a.mask, *theta_increments(a))


def _H(H, mask: DomainMask) -> np.ndarray:
    if H is None:
        return np.zeros((mask.n, 3))
    return np.asarray(getattr(H, "H", H), dtype=float)


# ---------------------------------------------------------------------------
# energy and residuals


def energy_terms(a: AngleField, H, p: SolverParams) -> dict:
    mask = a.mask
    h3, h2 = mask.cell_volume, mask.h**2
    kap = mask.face_weight
    ti, to = theta_increments(a)
    xi_i, xi_o = cell_increments(mask, a.xi)
    ci, co = coefficient_faces(mask, a.xi)
    ex_xi = 0.5 * (np.sum(xi_i**2) + np.sum(kap * xi_o**2)) / h2
    ex_th = 0.5 * (np.sum(ci * ti**2) + np.sum(kap * co * to**2)) / h2
    demag = 0.0
    if H is not None and p.demag:
        demag = -0.5 * float(np.sum(assemble_u(a) * _H(H, mask)))
    aniso = p.lam * float(np.sum(np.sin(a.xi) ** 2))
    return dict(exchange_xi=ex_xi * h3, exchange_theta=ex_th * h3, demag=demag * h3,
                anisotropy=aniso * h3)


def energy(a: AngleField, H, p: SolverParams) -> float:
    """Discrete E_lambda; pass ``H=None`` (or ``p.demag=False``) to drop the field term."""
    return float(sum(energy_terms(a, H, p).values()))


def residuals(a: AngleField, H, p: SolverParams):
    """(R_theta, R_xi), the steady-state equation residuals at every cell.

    R_theta = div(cos^2 xi grad theta) + u_theta . H
    R_xi    = Lap xi + (|grad theta|^2 / 2 - lambda) sin 2 xi + u_xi . H
    """
    mask = a.mask
    ti, to = theta_increments(a)
    ci, co = coefficient_faces(mask, a.xi)
    xi_i, xi_o = cell_increments(mask, a.xi)
    r_t = face_divergence(mask, ci * ti, co * to)
    s2 = np.sin(2 * a.xi)
    r_x = face_divergence(mask, xi_i, xi_o) + (0.5 * face_square_sum(mask, ti, to) - p.lam) * s2
    if H is not None and p.demag:
        Hv = _H(H, mask)
        d = frame_derivatives(a)
        r_t = r_t + np.einsum("ij,ij->i", d["u_t"], Hv)
        r_x = r_x + np.einsum("ij,ij->i", d["u_x"], Hv)
    return r_t, r_x


def l2(mask: DomainMask, x) -> float:
    return mask.norm(x)


# ---------------------------------------------------------------------------
# snapshots


def save_snapshot(a: AngleField, path, extra: dict | None = None) -> Path:
    """CSV snapshot: ``#`` header lines (grid, winding) then i, j, k, phi, xi per cell."""
    path = Path(path)
    g = a.mask.grid
    with path.open("w", newline="") as fh:
        fh.write(f"# N = {g.cells}\n# box_side = {g.box_side!r}\n# winding = {a.winding}\n")
        for k, v in (extra or {}).items():
            fh.write(f"# {k} = {v}\n")
        w = csv.writer(fh)
        w.writerow(["i", "j", "k", "phi", "xi"])
        for (i, j, k), ph, x in zip(a.mask.cells, a.phi, a.xi):
            w.writerow([i, j, k, repr(float(ph)), repr(float(x))])
    return path


def load_snapshot(path, bdata: BoundaryData) -> AngleField:
    mask = bdata.mask
    header, rows = {}, []
    with Path(path).open() as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].partition("=")
                header[key.strip()] = val.strip()
            else:
                rows.append(line)
    reader = csv.DictReader(rows)
    data = [(int(r["i"]), int(r["j"]), int(r["k"]), float(r["phi"]), float(r["xi"])) for r in reader]
    if int(header.get("N", -1)) != mask.grid.cells or int(header.get("winding", 0)) != bdata.winding:
        raise DataError("snapshot header does not match the grid or winding")
    if len(data) != mask.n:
        raise DataError(f"snapshot has {len(data)} cells, mask has {mask.n}")
    arr = np.array(data)
    idx = mask.index[arr[:, 0].astype(int), arr[:, 1].astype(int), arr[:, 2].astype(int)]
    if np.any(idx < 0):
        raise DataError("snapshot references cells outside the domain")
    phi = np.zeros(mask.n)
    xi = np.zeros(mask.n)
    phi[idx] = arr[:, 3]
    xi[idx] = arr[:, 4]
    return AngleField(bdata, phi, xi)
