"""Free-space magnetostatics: u on Omega -> demagnetizing field H = grad v.

The potential solves -Lap v = div(u chi) on all of R^3.  Discretely

    rho = div_c(u),   v = G * rho,   H = grad_c v,

with centered differences ``div_c = -grad_c^T`` and G the Newtonian kernel
1/(4 pi |x|) sampled at cell offsets (cell-averaged at the origin).  The
convolution is evaluated exactly (aperiodically) by the zero-padding FFT
method on a window that holds the charge support, so the discrete operator
u -> H is symmetric and negative semidefinite and the energy identity
sum |grad v|^2 = -sum u.H holds to rounding.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .domain import DomainMask
from .errors import ConfigurationError

# integral of 1/|x| over the unit cube centered at the origin
UNIT_CUBE_INV_R = 2.380077363979553


def newton_kernel(shape, h):
    """Real-space kernel h^3 G(offset) on a circular layout covering +-(s-1)."""
    fft_shape = tuple(sfft.next_fast_len(2 * s - 1, real=True) for s in shape)
    axes = []
    for s, m in zip(shape, fft_shape):
        off = np.zeros(m)
        off[:s] = np.arange(s)
        off[m - s + 1:] = np.arange(-s + 1, 0)
        valid = np.zeros(m, bool)
        valid[:s] = True
        valid[m - s + 1:] = True
        axes.append((off, valid))
    (ox, vx), (oy, vy), (oz, vz) = axes
    dist = np.sqrt(ox[:, None, None] ** 2 + oy[None, :, None] ** 2 + oz[None, None, :] ** 2)
    valid = vx[:, None, None] & vy[None, :, None] & vz[None, None, :]
    k = np.zeros(fft_shape)
    k[valid] = h**2 / (4 * np.pi * np.maximum(dist[valid], 0.5))
    k[0, 0, 0] = h**2 * UNIT_CUBE_INV_R / (4 * np.pi)
    return k, fft_shape


def _div_c(u, h):
    """Centered divergence of a (3, ...) field, zero-extended beyond the array."""
    rho = np.zeros(u.shape[1:])
    for d in range(3):
        p = np.pad(u[d], [(1, 1) if a == d else (0, 0) for a in range(3)])
        sl_p = [slice(None)] * 3
        sl_m = [slice(None)] * 3
        sl_p[d] = slice(2, None)
        sl_m[d] = slice(0, -2)
        rho += (p[tuple(sl_p)] - p[tuple(sl_m)]) / (2 * h)
    return rho


def _grad_c(v, h):
    g = np.zeros((3,) + v.shape)
    for d in range(3):
        p = np.pad(v, [(1, 1) if a == d else (0, 0) for a in range(3)])
        sl_p = [slice(None)] * 3
        sl_m = [slice(None)] * 3
        sl_p[d] = slice(2, None)
        sl_m[d] = slice(0, -2)
        g[d] = (p[tuple(sl_p)] - p[tuple(sl_m)]) / (2 * h)
    return g


@dataclass(frozen=True, eq=False)
class DemagField:
    """Potential v on the solver window and H = grad v on the domain cells.

    ``field_energy`` is the free-space integral of |grad v|^2, evaluated by
    Green's identity as sum(rho * v) h^3.
    """

    mask: DomainMask
    v: np.ndarray
    H: np.ndarray
    rho: np.ndarray
    window: tuple
    field_energy: float

    @cached_property
    def box_field_energy(self) -> float:
        """sum |grad_c v|^2 h^3 over the window only (truncated estimate)."""
        g = _grad_c(self.v, self.mask.h)[:, 1:-1, 1:-1, 1:-1]
        return float(np.sum(g**2) * self.mask.cell_volume)

    def H_grid(self) -> np.ndarray:
        """grad v on every window cell, shape (3, *window_shape)."""
        return _grad_c(self.v, self.mask.h)


def zero_field(mask: DomainMask) -> DemagField:
    op = demag_operator(mask)
    v = np.zeros(op.shape)
    return DemagField(mask, v, np.zeros((mask.n, 3)), v.copy(), op.window, 0.0)


class DemagOperator:
    """Precomputed FFT convolution for one mask.

    ``pad`` multiplies the FFT size (1 = minimal exact aperiodic layout);
    ``window='tight'`` uses the domain bounding box plus one cell,
    ``window='box'`` the whole grid.
    """

    def __init__(self, mask: DomainMask, window="tight", pad=1):
        self.mask = mask
        N = mask.grid.cells
        if window == "box":
            lo, hi = np.zeros(3, int), np.full(3, N)
        elif window == "tight":
            c = mask.cells
            lo = c.min(axis=0) - 1
            hi = c.max(axis=0) + 2
        else:
            raise ConfigurationError(f"unknown window {window!r}")
        if np.any(lo < 0) or np.any(hi > N):
            raise ConfigurationError("grid too small: domain needs one exterior cell for the charge layer")
        self.window = tuple(slice(int(a), int(b)) for a, b in zip(lo, hi))
        self.shape = tuple(int(b - a) for a, b in zip(lo, hi))
        k, fft_shape = newton_kernel(self.shape, mask.h)
        if pad > 1:
            big = tuple(sfft.next_fast_len(int(pad * m), real=True) for m in fft_shape)
            k = _reembed(k, self.shape, big)
            fft_shape = big
        self.fft_shape = fft_shape
        self.kernel_hat = sfft.rfftn(k, fft_shape)
        self.local = mask.cells - lo

    def scatter(self, u):
        out = np.zeros((3,) + self.shape)
        i, j, k = self.local.T
        out[:, i, j, k] = np.asarray(u).T
        return out

    def __call__(self, u) -> DemagField:
        mask = self.mask
        u = np.asarray(u, dtype=float)
        if u.shape != (mask.n, 3):
            raise ConfigurationError(f"magnetization must have shape {(mask.n, 3)}, got {u.shape}")
        rho = _div_c(self.scatter(u), mask.h)
        vf = sfft.irfftn(sfft.rfftn(rho, self.fft_shape) * self.kernel_hat, self.fft_shape)
        v = vf[: self.shape[0], : self.shape[1], : self.shape[2]]
        i, j, k = self.local.T
        v = v - v[i, j, k].mean()
        H = _grad_c(v, mask.h)[:, i, j, k].T
        energy = float(np.sum(rho * v) * mask.cell_volume)
        return DemagField(mask, v, np.ascontiguousarray(H), rho, self.window, energy)


def _reembed(k, shape, big):
    out = np.zeros(big)
    for ax_idx in np.ndindex(2, 2, 2):
        src, dst = [], []
        for a, s in enumerate(shape):
            m_old, m_new = k.shape[a], big[a]
            if ax_idx[a] == 0:
                src.append(slice(0, s))
                dst.append(slice(0, s))
            else:
                src.append(slice(m_old - s + 1, m_old))
                dst.append(slice(m_new - s + 1, m_new))
        out[tuple(dst)] = k[tuple(src)]
    return out


_OPERATORS: "weakref.WeakKeyDictionary[DomainMask, DemagOperator]" = weakref.WeakKeyDictionary()


def demag_operator(mask: DomainMask) -> DemagOperator:
    op = _OPERATORS.get(mask)
    if op is None:
        op = DemagOperator(mask)
        _OPERATORS[mask] = op
    return op


def solve_demag(u, mask: DomainMask) -> DemagField:
    """H = L(u) for a magnetization given on the domain cells (shape (n, 3))."""
    return demag_operator(mask)(u)


def apply_L_scalar(w, e, mask: DomainMask) -> DemagField:
    """L(w e) for a scalar field w and a direction field e on the domain."""
    return solve_demag(np.asarray(w)[:, None] * np.asarray(e), mask)


def direct_demag(u, mask: DomainMask) -> np.ndarray:
    """O(n^2) kernel summation of H on the domain; reference for small grids."""
    op = DemagOperator(mask)
    h = mask.h
    rho = _div_c(op.scatter(u), h)
    src = np.argwhere(rho != 0)
    q = rho[tuple(src.T)]
    grid_idx = np.indices(op.shape).reshape(3, -1).T
    v = np.empty(len(grid_idx))
    for t0 in range(0, len(grid_idx), 2048):
        t = grid_idx[t0:t0 + 2048]
        d = np.linalg.norm(t[:, None, :] - src[None, :, :], axis=2)
        with np.errstate(divide="ignore"):
            kern = h**2 / (4 * np.pi * d)
        kern[d == 0] = h**2 * UNIT_CUBE_INV_R / (4 * np.pi)
        v[t0:t0 + 2048] = kern @ q
    v = v.reshape(op.shape)
    i, j, k = op.local.T
    return _grad_c(v, h)[:, i, j, k].T
