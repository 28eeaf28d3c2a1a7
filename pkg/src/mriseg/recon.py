"""Fourier image formation and the coupled reconstruction/denoising ADMM step."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .core import as_image

log = logging.getLogger(__name__)


class ReconError(ValueError):
    pass


@dataclass(frozen=True)
class FourierOperator:
    """Unitary 2-D DFT on a ``height x width`` grid."""

    height: int
    width: int

    @property
    def shape(self):
        return (self.height, self.width)

    def _check(self, a):
        if a.shape != self.shape:
            raise ReconError(f"dimension mismatch: operator {self.shape}, data {a.shape}")

    def forward(self, img) -> np.ndarray:
        img = as_image(img)
        self._check(img)
        return np.fft.fft2(img, norm="ortho")

    def inverse_complex(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=complex)
        self._check(k)
        if not np.all(np.isfinite(k)):
            raise ReconError("k-space contains non-finite samples")
        return np.fft.ifft2(k, norm="ortho")

    def inverse(self, k, rel_tol: float = 1e-6) -> np.ndarray:
        """Real part of the inverse transform.

        Raises if the discarded imaginary part exceeds ``rel_tol`` times the
        norm of the result, which means the spectrum is not conjugate
        symmetric (corrupted or genuinely complex data).
        """
        z = self.inverse_complex(k)
        out = z.real.copy()
        residue = float(np.abs(z.imag).max())
        log.debug("inverse FFT imaginary residue %.3e", residue)
        if residue > rel_tol * max(np.linalg.norm(out), np.finfo(float).tiny):
            raise ReconError(f"imaginary residue {residue:.3e} too large for a real image")
        return out


def forward(op: FourierOperator, img):
    return op.forward(img)


def inverse(op: FourierOperator, k):
    return op.inverse(k)


def imaginary_residue(op: FourierOperator, k) -> float:
    return float(np.abs(op.inverse_complex(k).imag).max())


@dataclass(frozen=True)
class AdmmState:
    """Scaled-form ADMM iterate for ``min h(v) + g(u)`` subject to ``u = v``."""

    v: np.ndarray
    u: np.ndarray
    w: np.ndarray
    rho: float

    def __post_init__(self):
        if self.rho <= 0:
            raise ReconError("rho must be positive")
        if not (self.v.shape == self.u.shape == self.w.shape):
            raise ReconError("ADMM state fields must share one shape")

    @classmethod
    def initial(cls, u0, rho: float) -> "AdmmState":
        u0 = as_image(u0)
        return cls(v=u0.copy(), u=u0.copy(), w=np.zeros_like(u0), rho=rho)


def v_update(u0, u, w, eta: float, rho: float) -> np.ndarray:
    """Minimizer of ``eta/2 ||A v - f||^2 + rho/2 ||v - u + w||^2`` for unitary ``A``."""
    return (eta * u0 + rho * (u - w)) / (eta + rho)


def admm_step(k, state: AdmmState, denoiser: Callable[[np.ndarray], np.ndarray],
              op: FourierOperator, eta: float, u0=None) -> AdmmState:
    """One ADMM iteration. Returns a new state; ``state`` is left untouched.

    ``denoiser(x)`` realizes the proximal step of the regularizer: the
    stationary diffusion solve with fidelity ``rho`` applied to ``x``.
    ``u0`` may pass a precomputed ``inverse(k)``.
    """
    if u0 is None:
        u0 = op.inverse(k)
    v = v_update(u0, state.u, state.w, eta, state.rho)
    u = np.asarray(denoiser(v + state.w), dtype=float)
    if u.shape != v.shape:
        raise ReconError("denoiser changed the image shape")
    w = state.w + (v - u)
    return replace(state, v=v, u=u, w=w)
