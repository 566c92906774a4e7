"""Masked Dirichlet operators, Krylov solves and shifted-inverse eigenpairs.

Unknowns live on the inside cells of a :class:`~llmaxwell.domain.DomainMask`.
Dirichlet data enters through the boundary faces: a face at fractional
distance ``frac * h`` from the cell center contributes the flux
``(g - w_a) / (frac * h)``.  The resulting matrices are symmetric M-matrices,
and each is the exact Hessian of a face-sum quadratic energy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .domain import DomainMask
from .errors import ChartError, NonConvergenceError


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Linear map on inside-cell vectors.

    ``matrix`` is either the full operator (``exact_matrix``) or a sparse
    local approximation used only for preconditioning.
    """

    action: Callable[[np.ndarray], np.ndarray]
    size: int
    symmetric_hint: bool = False
    matrix: sp.spmatrix | None = None
    exact_matrix: bool = False
    mask: DomainMask | None = None

    def __call__(self, x):
        return self.action(np.asarray(x))

    @classmethod
    def from_matrix(cls, matrix, symmetric_hint=False, mask=None):
        matrix = sp.csr_matrix(matrix)
        return cls(matrix.dot, matrix.shape[0], symmetric_hint, matrix, True, mask)

    def aslinearoperator(self):
        return spla.LinearOperator((self.size, self.size), matvec=self.action, dtype=float)

    def shifted(self, s: float) -> "DiscreteOperator":
        """A + s I."""
        mat = None if self.matrix is None else (self.matrix + s * sp.identity(self.size, format="csr")).tocsr()
        return DiscreteOperator(lambda x: self.action(x) + s * x, self.size, self.symmetric_hint,
                                mat, self.exact_matrix, self.mask)

    def scaled(self, s: float) -> "DiscreteOperator":
        mat = None if self.matrix is None else (s * self.matrix).tocsr()
        return DiscreteOperator(lambda x: s * self.action(x), self.size, self.symmetric_hint,
                                mat, self.exact_matrix, self.mask)


def face_coefficients(mask: DomainMask, c, c_boundary=None):
    """Arithmetic face means of a cell coefficient.

    Boundary faces average the cell value with ``c_boundary`` (the value on
    the interface; defaults to the cell value itself).
    """
    c = np.asarray(c, dtype=float)
    a, b, _ = mask.interior_faces
    cf = 0.5 * (c[a] + c[b])
    bc = mask.boundary_faces["cell"]
    cb = c[bc] if c_boundary is None else np.broadcast_to(c_boundary, bc.shape)
    return cf, 0.5 * (c[bc] + cb)


def divform_matrix(mask: DomainMask, c_inner, c_outer) -> sp.csr_matrix:
    """Sparse div(c grad .) with zero Dirichlet trace from face coefficients."""
    n, h2 = mask.n, mask.h**2
    a, b, _ = mask.interior_faces
    bc = mask.boundary_faces["cell"]
    kb = np.asarray(c_outer) * mask.face_weight
    rows = np.concatenate([a, b, a, b])
    cols = np.concatenate([b, a, a, b])
    vals = np.concatenate([c_inner, c_inner, -c_inner, -c_inner])
    off = sp.coo_matrix((vals, (rows, cols)), shape=(n, n))
    diag = sp.coo_matrix((-np.bincount(bc, kb, minlength=n), (np.arange(n), np.arange(n))), shape=(n, n))
    return ((off + diag) / h2).tocsr()


def boundary_lift(mask: DomainMask, face_values, c_outer=1.0) -> np.ndarray:
    """Contribution of Dirichlet face values to div(c grad .) at cut cells."""
    bc = mask.boundary_faces["cell"]
    w = np.asarray(c_outer) * mask.face_weight * np.asarray(face_values, dtype=float)
    return np.bincount(bc, w, minlength=mask.n) / mask.h**2


_LAPLACIANS: dict = {}


def laplacian_matrix(mask: DomainMask) -> sp.csr_matrix:
    key = id(mask)
    hit = _LAPLACIANS.get(key)
    if hit is not None and hit[0]() is mask:
        return hit[1]
    import weakref

    ones_i = np.ones(len(mask.interior_faces[0]))
    ones_b = np.ones(len(mask.boundary_faces["cell"]))
    L = divform_matrix(mask, ones_i, ones_b)
    _LAPLACIANS[key] = (weakref.ref(mask), L)
    return L


def laplacian_dirichlet(mask: DomainMask) -> DiscreteOperator:
    """7-point Laplacian with cut-cell Dirichlet faces (zero trace)."""
    return DiscreteOperator.from_matrix(laplacian_matrix(mask), symmetric_hint=True, mask=mask)


def apply_laplacian(mask: DomainMask, w, face_values=None) -> np.ndarray:
    """Lap_h w with Dirichlet values on the boundary faces (zero if omitted)."""
    out = laplacian_matrix(mask) @ np.asarray(w, dtype=float)
    if face_values is not None:
        out = out + boundary_lift(mask, face_values)
    return out


def divform_operator(c, mask: DomainMask, c_boundary=None) -> DiscreteOperator:
    """div(c grad .) with arithmetic face means; requires c > 0."""
    c = np.asarray(c, dtype=float)
    if np.any(c <= 0) or (c_boundary is not None and np.any(np.asarray(c_boundary) <= 0)):
        raise ChartError("divergence-form coefficient must be positive")
    ci, co = face_coefficients(mask, c, c_boundary)
    return DiscreteOperator.from_matrix(divform_matrix(mask, ci, co), symmetric_hint=True, mask=mask)


# ---------------------------------------------------------------------------
# linear solves


@dataclass
class SolveInfo:
    iterations: int
    residual: float
    method: str


def _preconditioner(A: DiscreteOperator, precond):
    if precond is None or A.matrix is None:
        return None
    if precond == "jacobi":
        d = A.matrix.diagonal()
        d = np.where(d != 0, d, 1.0)
        return spla.LinearOperator((A.size, A.size), matvec=lambda x: x / d, dtype=float)
    if precond == "lu":
        lu = spla.splu(sp.csc_matrix(A.matrix))
        return spla.LinearOperator((A.size, A.size), matvec=lu.solve, dtype=float)
    if isinstance(precond, spla.LinearOperator):
        return precond
    raise ValueError(f"unknown preconditioner {precond!r}")


def solve_linear(A: DiscreteOperator, rhs, tol: float = 1e-8, x0=None, maxiter: int = 5000,
                 precond="jacobi", return_info: bool = False):
    """Solve A x = rhs to relative residual ``tol``.

    Conjugate gradients when ``A.symmetric_hint``, restarted GMRES otherwise.
    """
    rhs = np.asarray(rhs, dtype=float)
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0:
        x = np.zeros(A.size)
        return (x, SolveInfo(0, 0.0, "trivial")) if return_info else x
    M = _preconditioner(A, precond)
    count = [0]

    def cb(*_):
        count[0] += 1

    op = A.aslinearoperator()
    if A.symmetric_hint:
        method = "cg"
        x, _ = spla.cg(op, rhs, x0=x0, rtol=tol, atol=0.0, maxiter=maxiter, M=M, callback=cb)
    else:
        method = "gmres"
        x, _ = spla.gmres(op, rhs, x0=x0, rtol=tol, atol=0.0, restart=60, maxiter=maxiter, M=M,
                          callback=cb, callback_type="pr_norm")
    res = np.linalg.norm(A(x) - rhs) / bnorm
    if not res <= tol * 1.01:
        # one polishing pass from the current iterate
        if A.symmetric_hint:
            x, _ = spla.cg(op, rhs, x0=x, rtol=tol, atol=0.0, maxiter=maxiter, M=M, callback=cb)
        else:
            x, _ = spla.gmres(op, rhs, x0=x, rtol=tol, atol=0.0, restart=60, maxiter=maxiter, M=M,
                              callback=cb, callback_type="pr_norm")
        res = np.linalg.norm(A(x) - rhs) / bnorm
        if not res <= tol * 1.01:
            raise NonConvergenceError(f"{method} did not reach rtol {tol:g} (residual {res:.3e})",
                                      residual=res)
    return (x, SolveInfo(count[0], res, method)) if return_info else x


# ---------------------------------------------------------------------------
# eigenpairs


@dataclass
class Eigenpair:
    value: complex
    vector: np.ndarray
    residual: float


def smallest_eigenpairs(A: DiscreteOperator, k: int = 1, tol: float = 1e-6, sigma: float = 0.0,
                        solve_tol: float = 1e-11, ncv: int | None = None) -> list[Eigenpair]:
    """k eigenpairs of A closest to ``sigma``, sorted by real part.

    Shift-and-invert Arnoldi: every application of (A - sigma)^-1 is a Krylov
    solve preconditioned by the LU factors of the sparse local part of A.
    For spectra lying to the right of ``sigma`` these are the eigenvalues of
    smallest real part.  Vectors are normalized to unit Euclidean length.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    n = A.size
    shifted = A.shifted(-sigma)
    inner = DiscreteOperator(shifted.action, n, False, shifted.matrix, shifted.exact_matrix, A.mask)
    if shifted.matrix is not None and shifted.exact_matrix:
        lu = spla.splu(sp.csc_matrix(shifted.matrix))
        opinv = spla.LinearOperator((n, n), matvec=lu.solve, dtype=float)
    else:
        pre = _preconditioner(inner, "lu")

        def apply_inv(x):
            return solve_linear(inner, x, tol=solve_tol, precond=pre)

        opinv = spla.LinearOperator((n, n), matvec=apply_inv, dtype=float)
    if k >= n - 1:
        raise ValueError("k too large for the operator size")
    ncv = ncv or min(n - 1, max(2 * k + 8, 20))
    try:
        vals, vecs = spla.eigs(A.aslinearoperator(), k=k, sigma=sigma, OPinv=opinv, which="LM",
                               ncv=ncv, tol=min(tol, 1e-10) * 1e-2, maxiter=2000)
    except spla.ArpackNoConvergence as exc:
        raise NonConvergenceError(f"eigensolver failed; Ritz values {exc.eigenvalues}",
                                  trace=list(np.atleast_1d(exc.eigenvalues))) from None
    pairs = []
    for lam, v in zip(vals, vecs.T):
        if np.max(np.abs(v.imag)) < 1e-12 * np.max(np.abs(v.real)) + 1e-300:
            v = v.real
        v = v / np.linalg.norm(v)
        if np.iscomplexobj(v):
            r = A(v.real) + 1j * A(v.imag) - lam * v
        else:
            r = A(v) - lam.real * v
            if abs(lam.imag) > 0:
                r = r - 1j * lam.imag * v
        res = float(np.linalg.norm(r) / max(abs(lam), 1.0))
        pairs.append(Eigenpair(complex(lam), v, res))
    pairs.sort(key=lambda p: (p.value.real, p.value.imag))
    worst = max(p.residual for p in pairs)
    if worst > tol:
        raise NonConvergenceError(f"eigen residual {worst:.3e} exceeds {tol:g}",
                                  residual=worst, trace=[p.value for p in pairs])
    return pairs
