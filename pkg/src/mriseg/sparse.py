"""Conjugate gradient solvers for sparse SPD systems, with subdomain deflation.

Matrices are ``scipy.sparse`` CSR matrices. The Krylov loops are written
out here so that iteration counts and residual histories are exposed and
the three variants share one code path.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Breakdown of a linear solve (non-finite values, singular coarse matrix)."""


@dataclass
class SolveReport:
    iterations: int
    final_relative_residual: float
    converged: bool
    residuals: list[float] = field(default_factory=list, repr=False)


def as_spd(m) -> sp.csr_matrix:
    """CSR view of ``m`` after checking the cheap SPD preconditions."""
    m = sp.csr_matrix(m, dtype=float)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"matrix must be square, got {m.shape}")
    if np.any(m.diagonal() <= 0):
        raise ValueError("matrix has non-positive diagonal entries")
    return m


def is_symmetric(m, tol: float = 0.0) -> bool:
    d = abs(m - m.T)
    return (d.max() if d.nnz else 0.0) <= tol


def spmv(m, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (m.shape[1],):
        raise ValueError(f"dimension mismatch: matrix {m.shape}, vector {x.shape}")
    return m @ x


@dataclass(frozen=True)
class DeflationSpace:
    """Piecewise-constant deflation vectors, one per subdomain."""

    assignment: np.ndarray
    k: int

    def __post_init__(self):
        a = np.asarray(self.assignment)
        if a.ndim != 1 or a.min() < 0 or a.max() >= self.k:
            raise ValueError("subdomain ids must lie in [0, k)")
        if np.bincount(a, minlength=self.k).min() == 0:
            raise ValueError("every subdomain must be nonempty")
        if self.k > len(a) / 4:
            raise ValueError("too many subdomains: need k <= n/4")

    @property
    def n(self) -> int:
        return len(self.assignment)

    def matrix(self) -> sp.csr_matrix:
        """Z, the n-by-k subdomain indicator matrix."""
        n = self.n
        return sp.csr_matrix((np.ones(n), (np.arange(n), self.assignment)), shape=(n, self.k))

    @classmethod
    def tiles(cls, height: int, width: int, tiles=(4, 4)) -> "DeflationSpace":
        """Rectangular tiles of a row-major ``height x width`` pixel grid."""
        ty, tx = tiles
        rows = np.minimum(np.arange(height) * ty // height, ty - 1)
        cols = np.minimum(np.arange(width) * tx // width, tx - 1)
        assignment = (rows[:, None] * tx + cols[None, :]).ravel()
        return cls(assignment=assignment, k=ty * tx)


def _jacobi(m):
    d = m.diagonal()
    inv = 1.0 / d
    return lambda r: inv * r


def _preconditioner(m, precond):
    if precond in (None, "none"):
        return lambda r: r
    if precond == "jacobi":
        return _jacobi(m)
    raise ValueError(f"unknown preconditioner {precond!r}")


def _krylov(apply_a, b, x, apply_m, tol, max_iter, bnorm, project=None):
    """Preconditioned CG on ``apply_a``; residuals are measured against ``bnorm``.

    ``project`` maps a residual onto the deflated subspace; when given,
    both the residual and the search directions live in range(P).
    """
    r = b - apply_a(x)
    if project is not None:
        r = project(r)
    rel = np.linalg.norm(r) / bnorm
    history = [rel]
    if rel <= tol:
        return x, SolveReport(0, rel, True, history)
    z = apply_m(r)
    p = z.copy()
    rz = r @ z
    for it in range(1, max_iter + 1):
        q = apply_a(p)
        if project is not None:
            q = project(q)
        pq = p @ q
        if not np.isfinite(pq) or pq <= 0:
            raise SolverError(f"breakdown at iteration {it}: p'Ap = {pq!r} (matrix not SPD?)")
        alpha = rz / pq
        x = x + alpha * p
        r = r - alpha * q
        rel = np.linalg.norm(r) / bnorm
        history.append(rel)
        if not np.isfinite(rel):
            raise SolverError(f"non-finite residual at iteration {it}")
        if rel <= tol:
            return x, SolveReport(it, rel, True, history)
        z = apply_m(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, SolveReport(max_iter, rel, False, history)


def _check(m, b):
    b = np.asarray(b, dtype=float)
    if b.shape != (m.shape[0],):
        raise ValueError(f"dimension mismatch: matrix {m.shape}, rhs {b.shape}")
    if not np.all(np.isfinite(b)):
        raise SolverError("right-hand side contains non-finite values")
    return b


def pcg_solve(m, b, precond="jacobi", tol=1e-8, max_iter=1000, x0=None):
    """Preconditioned CG for ``m x = b``. Returns ``(x, SolveReport)``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    b = _check(m, b)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros_like(b), SolveReport(0, 0.0, True, [0.0])
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    return _krylov(m.__matmul__, b, x, _preconditioner(m, precond), tol, max_iter, bnorm)


def cg_solve(m, b, tol=1e-8, max_iter=1000, x0=None):
    return pcg_solve(m, b, precond="none", tol=tol, max_iter=max_iter, x0=x0)


class Deflation:
    """Projector ``P = I - M Z E^-1 Z'`` and coarse solve for one matrix."""

    def __init__(self, m, space: DeflationSpace):
        if space.n != m.shape[0]:
            raise ValueError(f"deflation space has n={space.n}, matrix has {m.shape[0]}")
        self.z = space.matrix()
        self.mz = (m @ self.z).tocsc()
        e = (self.z.T @ self.mz).toarray()
        try:
            self._chol = scipy.linalg.cho_factor(0.5 * (e + e.T))
        except np.linalg.LinAlgError as exc:
            raise SolverError("coarse matrix Z'MZ is singular or indefinite") from exc

    def coarse(self, v):
        """Z E^-1 Z' v"""
        return self.z @ scipy.linalg.cho_solve(self._chol, self.z.T @ v)

    def project(self, v):
        """P v"""
        return v - self.mz @ scipy.linalg.cho_solve(self._chol, self.z.T @ v)

    def project_t(self, v):
        """P' v = v - Z E^-1 (MZ)' v"""
        return v - self.z @ scipy.linalg.cho_solve(self._chol, self.mz.T @ v)


def dpcg_solve(m, b, defl: DeflationSpace, precond="jacobi", tol=1e-8, max_iter=1000, x0=None):
    """Deflated PCG: CG on ``P M x = P b`` plus the coarse correction.

    The returned solution is ``Z E^-1 Z' b + P' x_hat``. The convergence
    test is on the true residual relative to ``||b||``, which for this
    variant equals the projected residual. With ``x0`` the correction
    ``M d = b - M x0`` is solved instead.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    b = _check(m, b)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros_like(b), SolveReport(0, 0.0, True, [0.0])
    d = Deflation(m, defl)
    rhs = b if x0 is None else b - m @ x0
    xhat, report = _krylov(m.__matmul__, rhs, np.zeros_like(b), _preconditioner(m, precond),
                           tol, max_iter, bnorm, project=d.project)
    x = d.coarse(rhs) + d.project_t(xhat)
    if x0 is not None:
        x = x + x0
    return x, report


def solve(m, b, method="dpcg", precond="jacobi", tol=1e-8, max_iter=1000, defl=None, x0=None):
    """Dispatch to one of the solvers by name."""
    if method == "cg":
        return cg_solve(m, b, tol=tol, max_iter=max_iter, x0=x0)
    if method == "pcg":
        return pcg_solve(m, b, precond=precond, tol=tol, max_iter=max_iter, x0=x0)
    if method == "dpcg":
        if defl is None:
            raise ValueError("dpcg needs a deflation space")
        return dpcg_solve(m, b, defl, precond=precond, tol=tol, max_iter=max_iter, x0=x0)
    raise ValueError(f"unknown solver {method!r}")


def write_matrix_market(path, m, comment: str = "") -> None:
    import scipy.io

    scipy.io.mmwrite(str(path), sp.coo_matrix(m), comment=comment)
