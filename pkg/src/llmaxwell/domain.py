"""Voxelized domains, boundary traces and winding numbers.

A domain lives on a uniform cubic grid of ``N**3`` cells.  A cell belongs to
the domain when its center has a negative level-set value.  Every face
between an inside cell and an outside neighbour is a *boundary face*; the
interface crossing along that face is located by bisection on the level set
and stored as a fraction of the cell spacing.  All discrete operators in the
package are assembled from the interior-face and boundary-face lists built
here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, GeometryError, ResolutionError

# smallest admissible interface fraction; keeps boundary rows well scaled
FRAC_MIN = 0.05

LevelSet = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def wrap_angle(a):
    """Map angles to [-pi, pi)."""
    return (np.asarray(a) + np.pi) % (2.0 * np.pi) - np.pi


@dataclass(frozen=True)
class GridSpec:
    box_side: float
    cells: int

    def __post_init__(self):
        if int(self.cells) != self.cells or self.cells < 8:
            raise ConfigurationError(f"cells_per_side must be an integer >= 8, got {self.cells}")
        if not self.box_side > 0:
            raise ConfigurationError(f"box_side must be positive, got {self.box_side}")

    @property
    def h(self) -> float:
        return self.box_side / self.cells

    @property
    def coords(self) -> np.ndarray:
        """1-D cell-center coordinates along each axis."""
        return -0.5 * self.box_side + (np.arange(self.cells) + 0.5) * self.h

    def mesh(self):
        c = self.coords
        return np.meshgrid(c, c, c, indexing="ij")


@dataclass(frozen=True, eq=False)
class DomainMask:
    """Voxel domain with cut-cell metadata.

    Cell data is stored for inside cells only, in C order of the grid; ``index``
    maps grid positions to that ordering (``-1`` outside).
    """

    grid: GridSpec
    inside: np.ndarray
    level_set: LevelSet = field(repr=False)
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inside.setflags(write=False)

    # ---- basic geometry -------------------------------------------------
    @property
    def h(self) -> float:
        return self.grid.h

    @cached_property
    def cells(self) -> np.ndarray:
        return np.argwhere(self.inside)

    @property
    def n(self) -> int:
        return len(self.cells)

    @cached_property
    def index(self) -> np.ndarray:
        idx = np.full(self.inside.shape, -1, dtype=np.int64)
        idx[self.inside] = np.arange(self.n)
        return idx

    @cached_property
    def centers(self) -> np.ndarray:
        return self.grid.coords[self.cells]

    @property
    def cell_volume(self) -> float:
        return self.h**3

    @property
    def volume(self) -> float:
        return self.cell_volume * self.n

    def to_grid(self, values, fill=0.0) -> np.ndarray:
        """Scatter per-cell values (shape ``(n, ...)``) onto the full grid."""
        values = np.asarray(values)
        out = np.full(self.inside.shape + values.shape[1:], fill, dtype=values.dtype)
        out[self.inside] = values
        return out

    def from_grid(self, arr) -> np.ndarray:
        return np.asarray(arr)[self.inside]

    def inner(self, a, b) -> float:
        """Discrete L2(Omega) inner product (cell volume weight)."""
        return float(np.sum(np.asarray(a) * np.asarray(b)) * self.cell_volume)

    def norm(self, a) -> float:
        return float(np.sqrt(max(self.inner(a, a), 0.0)))

    # ---- faces ----------------------------------------------------------
    @cached_property
    def interior_faces(self):
        """(a, b, axis) arrays for faces with both cells inside; b = a + e_axis."""
        a_all, b_all, ax_all = [], [], []
        for d in range(3):
            sl_a = [slice(None)] * 3
            sl_b = [slice(None)] * 3
            sl_a[d] = slice(0, -1)
            sl_b[d] = slice(1, None)
            both = self.inside[tuple(sl_a)] & self.inside[tuple(sl_b)]
            a_all.append(self.index[tuple(sl_a)][both])
            b_all.append(self.index[tuple(sl_b)][both])
            ax_all.append(np.full(both.sum(), d))
        return np.concatenate(a_all), np.concatenate(b_all), np.concatenate(ax_all)

    @cached_property
    def boundary_faces(self):
        """Faces between an inside cell and an outside neighbour.

        Returns a dict with ``cell``, ``axis``, ``side`` (+1/-1), ``frac``
        (distance to the interface in units of h, clipped at FRAC_MIN),
        ``point`` (interface location) and ``normal`` (outward unit normal).
        """
        h = self.h
        cells, axes, sides = [], [], []
        for d in range(3):
            for s in (1, -1):
                nb = np.roll(self.inside, -s, axis=d)
                hit = self.inside & ~nb
                ids = self.index[hit]
                cells.append(ids)
                axes.append(np.full(len(ids), d))
                sides.append(np.full(len(ids), s))
        cell = np.concatenate(cells)
        axis = np.concatenate(axes)
        side = np.concatenate(sides)
        start = self.centers[cell]
        step = np.zeros_like(start)
        step[np.arange(len(cell)), axis] = side * h
        lo = np.zeros(len(cell))
        hi = np.ones(len(cell))
        ls = self.level_set
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            p = start + mid[:, None] * step
            neg = ls(p[:, 0], p[:, 1], p[:, 2]) < 0
            lo = np.where(neg, mid, lo)
            hi = np.where(neg, hi, mid)
        t = 0.5 * (lo + hi)
        point = start + t[:, None] * step
        normal = self.normal_at(point)
        return dict(cell=cell, axis=axis, side=side, frac=np.maximum(t, FRAC_MIN),
                    point=point, normal=normal)

    def normal_at(self, points) -> np.ndarray:
        """Outward unit normal from the level-set gradient."""
        eps = 1e-6 * self.grid.box_side
        g = np.zeros_like(points)
        for d in range(3):
            e = np.zeros(3)
            e[d] = eps
            p1, p0 = points + e, points - e
            g[:, d] = (self.level_set(*p1.T) - self.level_set(*p0.T)) / (2 * eps)
        nrm = np.linalg.norm(g, axis=1, keepdims=True)
        return g / np.where(nrm > 0, nrm, 1.0)

    @cached_property
    def boundary_cells(self) -> np.ndarray:
        return np.unique(self.boundary_faces["cell"])

    @property
    def boundary_distance(self) -> np.ndarray:
        """Signed level-set value at the centers of boundary cells."""
        c = self.centers[self.boundary_cells]
        return self.level_set(c[:, 0], c[:, 1], c[:, 2])

    @property
    def boundary_normal(self) -> np.ndarray:
        return self.normal_at(self.centers[self.boundary_cells])

    @cached_property
    def face_weight(self) -> np.ndarray:
        """Boundary-face coupling 1/frac."""
        return 1.0 / self.boundary_faces["frac"]

    # ---- reference angle ------------------------------------------------
    @cached_property
    def axis_clear(self) -> bool:
        """True when the z-axis does not meet the closed domain."""
        z = np.linspace(-0.5, 0.5, 8 * self.grid.cells + 1) * self.grid.box_side
        zero = np.zeros_like(z)
        axis_hit = np.any(self.level_set(zero, zero, z) <= 0)
        c = self.centers
        close = np.any(np.hypot(c[:, 0], c[:, 1]) < 0.5 * self.h)
        return not (axis_hit or close)

    @cached_property
    def theta_ref(self) -> np.ndarray:
        return reference_angle(self)

    @cached_property
    def ref_increments(self):
        """Single-valued increments of atan2(y, x) across interior and boundary faces."""
        if not self.axis_clear:
            raise GeometryError("z-axis intersects the domain; reference angle undefined")
        a, b, _ = self.interior_faces
        th = self.theta_ref
        inner = wrap_angle(th[b] - th[a])
        bf = self.boundary_faces
        pt = bf["point"]
        outer = wrap_angle(np.arctan2(pt[:, 1], pt[:, 0]) - th[bf["cell"]])
        return inner, outer

    # ---- loops ----------------------------------------------------------
    @cached_property
    def core_loop(self) -> np.ndarray:
        """Closed face-adjacent cell path around the hole (torus masks only)."""
        if "major_radius" not in self.params:
            raise GeometryError("core loop is only defined for torus masks")
        return circle_loop(self, self.params["major_radius"], 0.0)


def circle_loop(mask: DomainMask, radius: float, z: float) -> np.ndarray:
    """Cell path following the horizontal circle of given radius at height z.

    Consecutive cells share a face and the path closes on itself.  Raises
    GeometryError if the path leaves the domain.
    """
    g = mask.grid
    N, h, L = g.cells, g.h, g.box_side
    k = int(np.clip(np.floor((z + 0.5 * L) / h), 0, N - 1))
    m = int(16 * np.ceil(2 * np.pi * radius / h)) + 16
    ang = np.linspace(0, 2 * np.pi, m, endpoint=False)
    ii = np.floor((radius * np.cos(ang) + 0.5 * L) / h).astype(int)
    jj = np.floor((radius * np.sin(ang) + 0.5 * L) / h).astype(int)
    path = []
    for i, j in zip(ii, jj):
        if path and path[-1] == (i, j):
            continue
        path.append((i, j))
    if path[0] == path[-1]:
        path.pop()
    full = []
    n = len(path)
    for t in range(n):
        i0, j0 = path[t]
        i1, j1 = path[(t + 1) % n]
        full.append((i0, j0))
        if i0 != i1 and j0 != j1:
            # corner step: insert a face-adjacent bridge cell inside the domain
            cand = (i1, j0) if mask.inside[i1, j0, k] else (i0, j1)
            full.append(cand)
    idx = []
    for i, j in full:
        if not (0 <= i < N and 0 <= j < N) or not mask.inside[i, j, k]:
            raise GeometryError(f"loop of radius {radius:g} at z={z:g} leaves the domain")
        idx.append(mask.index[i, j, k])
    cells = mask.cells[np.array(idx)]
    step = np.abs(np.diff(np.vstack([cells, cells[:1]]), axis=0)).sum(axis=1)
    if not np.all(step == 1):
        raise GeometryError("loop is not face-connected")
    return np.array(idx)


# ---------------------------------------------------------------------------
# construction


def mask_from_level_set(grid: GridSpec, level_set: LevelSet, kind="custom", params=None) -> DomainMask:
    X, Y, Z = grid.mesh()
    inside = np.asarray(level_set(X, Y, Z) < 0)
    if not inside.any():
        raise GeometryError("domain contains no cells")
    margin = 2
    core = np.zeros_like(inside)
    core[margin:-margin, margin:-margin, margin:-margin] = True
    if np.any(inside & ~core):
        raise ConfigurationError("domain needs at least 2 cells of exterior margin inside the box")
    return DomainMask(grid=grid, inside=inside, level_set=level_set, kind=kind, params=dict(params or {}))


def torus_level_set(R: float, r: float) -> LevelSet:
    def phi(x, y, z):
        return np.sqrt((np.hypot(x, y) - R) ** 2 + z**2) - r

    return phi


def build_torus_mask(major_radius: float, minor_radius: float, grid: GridSpec) -> DomainMask:
    """Solid torus around the z-axis, cell-center sampled."""
    R, r = float(major_radius), float(minor_radius)
    if not (0 < r < R):
        raise ConfigurationError(f"need 0 < r < R, got R={R}, r={r}")
    if R + r >= 0.5 * grid.box_side - 2 * grid.h:
        raise ConfigurationError("torus does not fit: need R + r < box_side/2 - 2h")
    mask = mask_from_level_set(grid, torus_level_set(R, r), "torus",
                               dict(major_radius=R, minor_radius=r))
    check_handle(mask)
    return mask


def check_handle(mask: DomainMask) -> None:
    """Verify the mask is a connected solid with one hole around the z-axis."""
    _, n_in = ndimage.label(mask.inside)
    if n_in != 1:
        raise GeometryError(f"domain has {n_in} connected components")
    _, n_out = ndimage.label(~mask.inside)
    if n_out != 1:
        raise GeometryError("complement of the domain is not connected")
    if not mask.axis_clear:
        raise GeometryError("hole is not resolved: the z-axis meets the domain (simply connected mask)")
    try:
        loop = mask.core_loop
    except GeometryError as exc:
        raise GeometryError(f"no core loop through the solid: {exc}") from None
    if winding_number(mask.theta_ref, loop) != 1:
        raise GeometryError("core loop does not encircle the hole")


def build_ball_mask(radius: float, grid: GridSpec, center=(0.0, 0.0, 0.0)) -> DomainMask:
    c = np.asarray(center, dtype=float)

    def phi(x, y, z):
        return np.sqrt((x - c[0]) ** 2 + (y - c[1]) ** 2 + (z - c[2]) ** 2) - radius

    return mask_from_level_set(grid, phi, "ball", dict(radius=float(radius)))


def build_cube_mask(side: float, grid: GridSpec) -> DomainMask:
    half = 0.5 * side

    def phi(x, y, z):
        return np.maximum(np.maximum(np.abs(x), np.abs(y)), np.abs(z)) - half

    return mask_from_level_set(grid, phi, "cube", dict(side=float(side)))


def reference_angle(mask: DomainMask) -> np.ndarray:
    """atan2(y, x) at cell centers; winding one around the z-axis."""
    if not mask.axis_clear:
        raise GeometryError("z-axis intersects the domain")
    c = mask.centers
    return np.arctan2(c[:, 1], c[:, 0])


# ---------------------------------------------------------------------------
# winding


def loop_increments(theta, loop) -> np.ndarray:
    """Angle increments along a closed loop.

    ``theta`` is either an object with ``loop_increments(loop)`` (lifted
    fields, exact) or an array of angles on cells (wrapped differences).
    """
    if hasattr(theta, "loop_increments"):
        return np.asarray(theta.loop_increments(loop))
    vals = np.asarray(theta)[np.asarray(loop)]
    return wrap_angle(np.roll(vals, -1) - vals)


def winding_number(theta, loop=None, max_step: float = np.pi) -> int:
    """Integer winding of an angle field along a closed loop.

    Raises ResolutionError when a consecutive increment reaches ``max_step``.
    """
    if loop is None:
        loop = theta.default_loop()
    d = loop_increments(theta, loop)
    if d.size and np.max(np.abs(d)) >= max_step:
        raise ResolutionError(f"angle jump {np.max(np.abs(d)):.3f} >= {max_step:.3f} along loop")
    total = d.sum() / (2 * np.pi)
    w = int(np.rint(total))
    if abs(total - w) > 1e-6:
        raise ResolutionError(f"loop sum {total:.6f} is not an integer multiple of 2*pi")
    return w


@dataclass(frozen=True, eq=False)
class BoundaryData:
    """Dirichlet angle on the boundary faces.

    ``theta_g`` holds the angle at each interface point (mod 2 pi);
    ``correction`` is the single-valued part theta_g - w * atan2(y, x).
    """

    mask: DomainMask
    theta_g: np.ndarray
    winding: int
    correction: np.ndarray
    loop: np.ndarray

    def loop_increments(self, loop):
        vals = self.theta_g[np.asarray(loop)]
        return wrap_angle(np.roll(vals, -1) - vals)

    def default_loop(self):
        return self.loop


def boundary_loop(mask: DomainMask) -> np.ndarray:
    """Boundary faces on the outer equator, ordered by azimuth."""
    bf = mask.boundary_faces
    if "major_radius" not in mask.params:
        return np.zeros(0, dtype=int)
    k_mid = mask.grid.cells // 2
    pt = bf["point"]
    rho = np.hypot(pt[:, 0], pt[:, 1])
    sel = np.flatnonzero((mask.cells[bf["cell"], 2] == k_mid) & (bf["axis"] < 2)
                         & (rho > mask.params["major_radius"]))
    order = np.argsort(np.arctan2(pt[sel, 1], pt[sel, 0]))
    return sel[order]


def default_perturbation(mask: DomainMask, amplitude: float):
    """Smooth single-valued boundary perturbation used when none is given."""
    scale = mask.params.get("major_radius", 0.25 * mask.grid.box_side)

    def beta(p):
        return amplitude * (p[:, 0] + p[:, 2]) / scale

    return beta


def make_boundary_data(mask: DomainMask, winding: int = 1, amplitude: float = 0.3,
                       perturbation=None) -> BoundaryData:
    """theta_g = winding * atan2(y, x) + perturbation(point) on the boundary."""
    winding = int(winding)
    pts = mask.boundary_faces["point"]
    beta = perturbation if perturbation is not None else default_perturbation(mask, amplitude)
    corr = np.asarray(beta(pts), dtype=float)
    if winding != 0:
        if not mask.axis_clear:
            raise GeometryError("nonzero winding needs a domain that avoids the z-axis")
        base = winding * np.arctan2(pts[:, 1], pts[:, 0])
    else:
        base = np.zeros(len(pts))
    theta_g = wrap_angle(base + corr)
    loop = boundary_loop(mask)
    bd = BoundaryData(mask, theta_g, winding, corr, loop)
    if len(loop):
        measured = winding_number(bd, loop)
        if measured != winding:
            raise ResolutionError(f"boundary data winds {measured} times, expected {winding}")
    elif winding != 0:
        raise GeometryError("nonzero winding requested on a domain without a hole")
    return bd


def boundary_data_from_angles(mask: DomainMask, theta_g) -> BoundaryData:
    """Wrap raw boundary angles; winding measured on the equatorial loop."""
    theta_g = wrap_angle(np.asarray(theta_g, dtype=float))
    loop = boundary_loop(mask)
    probe = BoundaryData(mask, theta_g, 0, theta_g, loop)
    w = winding_number(probe, loop) if len(loop) else 0
    pts = mask.boundary_faces["point"]
    base = w * np.arctan2(pts[:, 1], pts[:, 0]) if w else 0.0
    corr = wrap_angle(theta_g - base)
    return BoundaryData(mask, theta_g, w, corr, loop)


# ---------------------------------------------------------------------------
# mask export


def export_mask(mask: DomainMask, path) -> Path:
    path = Path(path)
    g = mask.grid
    lines = ["# llmaxwell mask v1",
             f"N = {g.cells}",
             f"box_side = {g.box_side!r}",
             f"major_radius = {mask.params.get('major_radius', float('nan'))!r}",
             f"minor_radius = {mask.params.get('minor_radius', float('nan'))!r}"]
    flat = mask.inside.reshape(g.cells * g.cells, g.cells).astype(np.uint8)
    lines += ["".join("1" if v else "0" for v in row) for row in flat]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_mask(path):
    """Return (header dict, inside array) from an exported mask file."""
    header, rows = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#") or not line.strip():
            continue
        if "=" in line:
            key, val = (s.strip() for s in line.split("=", 1))
            header[key] = float(val) if key != "N" else int(val)
        else:
            rows.append([c == "1" for c in line.strip()])
    N = header["N"]
    inside = np.array(rows, dtype=bool)
    if inside.shape != (N * N, N):
        from .errors import DataError
        raise DataError(f"mask stream has shape {inside.shape}, expected {(N * N, N)}")
    return header, inside.reshape(N, N, N)
