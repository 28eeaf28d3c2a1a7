"""Nonlinear diffusion denoising with a fidelity term.

The stationary equation ``div(c(|grad u|) grad u) + eta (f - u) = 0`` is
discretized with a 5-point flux stencil and homogeneous Neumann boundary,
giving ``(I - C(u)/eta) u = f``, and solved by lagged-diffusivity Picard
iteration: ``A(u^n) u^{n+1} = f``.

Face coefficients are evaluated from the one-sided difference across each
face, ``c_pq = c(((u_q - u_p) / h)^2)``, which keeps ``A`` symmetric by
construction.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import sparse
from .core import as_image

log = logging.getLogger(__name__)

KINDS = ("exponential", "rational", "total_variation", "elastic_net", "constant")


@dataclass(frozen=True)
class DiffusionCoefficient:
    """Diffusivity as a function of the squared gradient magnitude ``s``.

    ``exponential``      exp(-s / K^2)
    ``rational``         1 / (1 + s / K^2)
    ``total_variation``  1 / sqrt(s + eps)
    ``elastic_net``      (d_p / 2) (s + eps)^(d_p/2 - 1) + K
    ``constant``         K everywhere (linear diffusion; used for checks)
    """

    kind: str = "elastic_net"
    K: float = 0.1
    d_p: float = 1.2
    eps: float = 1e-4

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown diffusion coefficient {self.kind!r}")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.K <= 0:
            raise ValueError("K must be positive")
        if self.kind == "elastic_net" and not 0 < self.d_p <= 2:
            raise ValueError("elastic net needs 0 < d_p < 2")

    def __call__(self, s):
        return eval_coefficient(self, s)

    @property
    def at_zero(self) -> float:
        """Value at zero gradient (the upper bound of the diffusivity)."""
        return float(eval_coefficient(self, 0.0))


def eval_coefficient(c: DiffusionCoefficient, grad_sq):
    s = np.asarray(grad_sq, dtype=float)
    if np.any(s < 0):
        raise ValueError("squared gradient must be non-negative")
    if c.kind == "exponential":
        out = np.exp(-s / c.K ** 2)
    elif c.kind == "rational":
        out = 1.0 / (1.0 + s / c.K ** 2)
    elif c.kind == "total_variation":
        out = 1.0 / np.sqrt(s + c.eps)
    elif c.kind == "elastic_net":
        out = 0.5 * c.d_p * (1.0 / (s + c.eps)) ** (1.0 - 0.5 * c.d_p) + c.K
    else:
        out = np.full_like(s, c.K)
    return out if out.ndim else float(out)


@dataclass
class Gradients:
    """Squared differences on cell faces plus a per-pixel magnitude.

    ``faces_x[i, j]`` is the face between pixels ``(i, j)`` and ``(i, j+1)``;
    ``faces_y[i, j]`` the face between ``(i, j)`` and ``(i+1, j)``.
    """

    faces_x: np.ndarray
    faces_y: np.ndarray
    pixel: np.ndarray


def gradient_magnitude_sq(img, spacing: float = 1.0) -> Gradients:
    u = as_image(img)
    gx = np.diff(u, axis=1) / spacing
    gy = np.diff(u, axis=0) / spacing
    # central differences with mirrored ghost cells (zero normal derivative)
    p = np.pad(u, 1, mode="symmetric")
    cx = (p[1:-1, 2:] - p[1:-1, :-2]) / (2 * spacing)
    cy = (p[2:, 1:-1] - p[:-2, 1:-1]) / (2 * spacing)
    return Gradients(gx ** 2, gy ** 2, cx ** 2 + cy ** 2)


def face_coefficients(img, c: DiffusionCoefficient, spacing: float = 1.0):
    g = gradient_magnitude_sq(img, spacing)
    return eval_coefficient(c, g.faces_x), eval_coefficient(c, g.faces_y)


def assemble_from_faces(cx, cy, eta: float, spacing: float = 1.0) -> sp.csr_matrix:
    """``I + L / (eta h^2)`` where ``L`` is the face-weighted graph Laplacian."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    cx = np.asarray(cx, dtype=float)
    cy = np.asarray(cy, dtype=float)
    if not (np.all(np.isfinite(cx)) and np.all(np.isfinite(cy))):
        raise ValueError("non-finite diffusion coefficient")
    h, w = cy.shape[0] + 1, cx.shape[1] + 1
    n = h * w
    scale = 1.0 / (eta * spacing ** 2)
    idx = np.arange(n).reshape(h, w)
    wx = scale * cx.ravel()
    wy = scale * cy.ravel()
    px, qx = idx[:, :-1].ravel(), idx[:, 1:].ravel()
    py, qy = idx[:-1, :].ravel(), idx[1:, :].ravel()

    diag = np.ones(n)
    np.add.at(diag, px, wx)
    np.add.at(diag, qx, wx)
    np.add.at(diag, py, wy)
    np.add.at(diag, qy, wy)

    rows = np.concatenate([np.arange(n), px, qx, py, qy])
    cols = np.concatenate([np.arange(n), qx, px, qy, py])
    vals = np.concatenate([diag, -wx, -wx, -wy, -wy])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def assemble_system(img_for_coeff, c: DiffusionCoefficient, eta: float, spacing: float = 1.0):
    cx, cy = face_coefficients(img_for_coeff, c, spacing)
    return assemble_from_faces(cx, cy, eta, spacing)


@dataclass
class PicardSettings:
    eta: float
    max_picard: int = 50
    picard_tol: float = 1e-4
    solver: str = "dpcg"
    precond: str = "jacobi"
    lin_tol: float = 1e-8
    lin_max_iter: int = 5000
    tiles: tuple[int, int] = (4, 4)
    spacing: float = 1.0

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.picard_tol <= 0 or self.lin_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_picard < 1:
            raise ValueError("max_picard must be >= 1")


@dataclass
class PicardRecord:
    iteration: int
    picard_residual: float
    linear_iterations: int
    linear_residual: float


@dataclass
class PicardDiagnostics:
    records: list[PicardRecord] = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.records)

    def lines(self):
        """Tab-separated records, one per Picard iteration."""
        yield "iteration\tpicard_residual\tlinear_iterations\tlinear_residual"
        for r in self.records:
            yield f"{r.iteration}\t{r.picard_residual:.6e}\t{r.linear_iterations}\t{r.linear_residual:.6e}"


class PicardError(RuntimeError):
    pass


def picard_denoise(f, img_for_coeff, c: DiffusionCoefficient, settings: PicardSettings,
                   frozen: bool = False, faces=None):
    """Lagged-diffusivity iteration ``u^{n+1} = A(u^n)^{-1} f`` from ``u^0 = f``.

    The first system is assembled from ``img_for_coeff``; later ones from
    the current iterate, unless ``frozen`` is set, in which case the first
    coefficient field is kept throughout. ``faces`` may supply that field
    directly as ``(cx, cy)``.

    Returns ``(u, PicardDiagnostics)``.
    """
    f = as_image(f, "f")
    if faces is None:
        coeff_img = as_image(img_for_coeff, "img_for_coeff")
        if coeff_img.shape != f.shape:
            raise ValueError("img_for_coeff and f must have the same shape")
        faces = face_coefficients(coeff_img, c, settings.spacing)
    shape = f.shape
    b = f.ravel()
    defl = sparse.DeflationSpace.tiles(*shape, settings.tiles) if settings.solver == "dpcg" else None

    diag = PicardDiagnostics()
    u = b.copy()
    a = None
    for it in range(1, settings.max_picard + 1):
        if a is None or not frozen:
            if it > 1:
                faces = face_coefficients(u.reshape(shape), c, settings.spacing)
            a = assemble_from_faces(*faces, settings.eta, settings.spacing)
        x, rep = sparse.solve(a, b, method=settings.solver, precond=settings.precond,
                              tol=settings.lin_tol, max_iter=settings.lin_max_iter,
                              defl=defl, x0=u)
        if not rep.converged:
            raise PicardError(
                f"linear solve did not converge in Picard iteration {it} "
                f"(residual {rep.final_relative_residual:.3e} after {rep.iterations} iterations)"
            )
        unorm = np.linalg.norm(u)
        res = np.linalg.norm(x - u) / unorm if unorm > 0 else np.linalg.norm(x - u)
        diag.records.append(PicardRecord(it, float(res), rep.iterations, rep.final_relative_residual))
        log.debug("picard %d: residual %.3e, %d linear iterations", it, res, rep.iterations)
        u = x
        if res <= settings.picard_tol or frozen:
            # a frozen operator is linear: one solve is the fixed point
            diag.converged = True
            break
    return u.reshape(shape), diag


def divergence_flux(u, cx, cy, spacing: float = 1.0) -> np.ndarray:
    """``div(c grad u)`` by explicit face fluxes; zero flux through the border."""
    fx = cx * np.diff(u, axis=1) / spacing ** 2
    fy = cy * np.diff(u, axis=0) / spacing ** 2
    out = np.zeros_like(u)
    out[:, :-1] += fx
    out[:, 1:] -= fx
    out[:-1, :] += fy
    out[1:, :] -= fy
    return out


def stable_dt(c_max: float, eta: float, spacing: float = 1.0) -> float:
    return 1.0 / (4.0 * c_max / spacing ** 2 + eta)


def explicit_step_reference(u, c: DiffusionCoefficient, eta: float, f, dt: float,
                            spacing: float = 1.0) -> np.ndarray:
    """One forward-Euler step of ``u_t = div(c grad u) + eta (f - u)``.

    Only meant as an independent check of the stationary solver.
    """
    u = as_image(u)
    f = as_image(f, "f")
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if dt == 0:
        return u.copy()
    cx, cy = face_coefficients(u, c, spacing)
    c_max = max(cx.max(), cy.max())
    if dt > stable_dt(c_max, eta, spacing) * (1 + 1e-12):
        raise ValueError(f"dt={dt} exceeds the explicit stability limit {stable_dt(c_max, eta, spacing):.3e}")
    out = u + dt * (divergence_flux(u, cx, cy, spacing) + eta * (f - u))
    bound = 10 * max(np.abs(u).max(), np.abs(f).max(), 1.0)
    if not np.all(np.isfinite(out)) or np.abs(out).max() > bound:
        raise FloatingPointError("explicit step became unstable")
    return out
