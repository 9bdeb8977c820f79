"""Circular convolution operator and the Fourier-diagonal preconditioner.

Under periodic boundaries the blur ``H``, its adjoint, the preconditioner
``Q = sigma2 * (H^T H + lam I)^-1`` and ``Q^(1/2)`` are all diagonal in the
2-D DFT, so each is one real FFT pair.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import fft as sfft

PSF_MAGIC = "# PPULA-PSF v1"


@dataclass
class Psf:
    """Convolution kernel with the pixel that maps onto the output location."""

    kernel: np.ndarray
    anchor: tuple = None

    def __post_init__(self):
        self.kernel = np.atleast_2d(np.asarray(self.kernel, dtype=float))
        if self.kernel.ndim != 2:
            raise ValueError("PSF kernel must be 2-D")
        if not np.any(self.kernel):
            raise ValueError("PSF kernel is identically zero")
        if not np.all(np.isfinite(self.kernel)):
            raise ValueError("PSF kernel contains non-finite values")
        if self.anchor is None:
            self.anchor = (self.kernel.shape[0] // 2, self.kernel.shape[1] // 2)
        self.anchor = (int(self.anchor[0]), int(self.anchor[1]))
        r, c = self.anchor
        if not (0 <= r < self.kernel.shape[0] and 0 <= c < self.kernel.shape[1]):
            raise ValueError("PSF anchor lies outside the kernel")

    @classmethod
    def delta(cls, size=1):
        k = np.zeros((size, size))
        k[size // 2, size // 2] = 1.0
        return cls(k)


def load_psf(path):
    """Read a PSF from whitespace-separated rows; an optional magic comment is checked."""
    path = Path(path)
    with path.open() as fh:
        first = fh.readline().strip()
    if first.startswith("# PPULA-PSF") and first != PSF_MAGIC:
        raise ValueError(f"{path}: unsupported PSF file version {first!r}")
    kernel = np.loadtxt(path, ndmin=2)
    return Psf(kernel)


def save_psf(path, psf):
    np.savetxt(path, psf.kernel, fmt="%.17g", header=PSF_MAGIC[2:], comments="# ")


class ConvOperator:
    """Circular 2-D convolution ``H`` and the metric ``Q`` it induces.

    Parameters
    ----------
    psf : Psf
        Convolution kernel; must fit inside the image grid.
    shape : tuple of int
        Image shape ``(height, width)``.
    lam : float
        Tikhonov floor of ``Q``; ``|h_f|^2 + lam`` must be positive everywhere.
    sigma2 : float
        Noise variance scaling ``Q``; refreshed with :meth:`refresh_sigma2`.
    """

    def __init__(self, psf, shape, lam=0.1, sigma2=1.0):
        height, width = (int(s) for s in shape)
        kh, kw = psf.kernel.shape
        if kh > height or kw > width:
            raise ValueError(
                f"PSF of shape {psf.kernel.shape} does not fit in a {height}x{width} grid")
        if lam < 0:
            raise ValueError("lam must be non-negative")
        self.shape = (height, width)
        self.psf = psf
        self.lam = float(lam)
        padded = np.zeros(self.shape)
        padded[:kh, :kw] = psf.kernel
        padded = np.roll(padded, (-psf.anchor[0], -psf.anchor[1]), axis=(0, 1))
        self.spectrum = sfft.rfft2(padded)
        self.power = np.abs(self.spectrum) ** 2
        denom = self.power + self.lam
        if np.any(denom <= 0):
            raise ValueError("|h_f|^2 + lam vanishes at some frequency; Q undefined")
        self._inv_denom = 1.0 / denom
        self._norm = float(np.sqrt(self.power.max()))
        if self._norm == 0:
            raise ValueError("operator has zero spectral norm")
        self.sigma2 = None
        self.refresh_sigma2(sigma2)

    @property
    def size(self):
        return self.shape[0] * self.shape[1]

    def refresh_sigma2(self, sigma2):
        if not sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        self.sigma2 = float(sigma2)
        self.q_spectrum = self.sigma2 * self._inv_denom
        self.q_sqrt_spectrum = np.sqrt(self.q_spectrum)

    # spectral plumbing shared with the samplers
    def rfft(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-2:] != self.shape:
            raise ValueError(f"image shape {x.shape} does not match operator shape {self.shape}")
        return sfft.rfft2(x)

    def irfft(self, xf):
        return sfft.irfft2(xf, s=self.shape)

    def apply_spectral(self, x, multiplier):
        return self.irfft(self.rfft(x) * multiplier)

    def forward(self, x):
        return self.apply_spectral(x, self.spectrum)

    def adjoint(self, r):
        return self.apply_spectral(r, np.conj(self.spectrum))

    def normal(self, x):
        """``H^T H x``."""
        return self.apply_spectral(x, self.power)

    def apply_q(self, v):
        return self.apply_spectral(v, self.q_spectrum)

    def apply_q_sqrt(self, v):
        return self.apply_spectral(v, self.q_sqrt_spectrum)

    def apply_q_inv(self, v):
        return self.apply_spectral(v, 1.0 / self.q_spectrum)

    def spectral_norm(self):
        """Exact 2-norm of ``H``, ``max_f |h_f|``."""
        return self._norm

    def q_norm(self):
        """``||Q|| = sigma2 / (min_f |h_f|^2 + lam)``."""
        return float(self.q_spectrum.max())


def build_operator(psf, width, height, lam=0.1, sigma2=1.0):
    return ConvOperator(psf, (height, width), lam=lam, sigma2=sigma2)
