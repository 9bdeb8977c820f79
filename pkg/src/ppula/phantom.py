"""Synthetic ground truth: label maps, GGD-textured TRFs, PSFs and RF data."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import GgdParams, check_labels, ggd_sample
from .operators import ConvOperator, Psf


@dataclass
class Disk:
    row: float
    col: float
    radius: float
    label: int


@dataclass
class Rectangle:
    row0: int
    row1: int
    col0: int
    col1: int
    label: int


def make_label_map(width, height, shapes=(), background=1, n_classes=None):
    """Rasterize shapes onto a constant background; later shapes overwrite earlier ones."""
    z = np.full((height, width), int(background), dtype=np.int64)
    rr, cc = np.mgrid[:height, :width]
    for sh in shapes:
        if n_classes is not None and not 1 <= sh.label <= n_classes:
            raise ValueError(f"shape label {sh.label} outside 1..{n_classes}")
        if isinstance(sh, Disk):
            if not (0 <= sh.row < height and 0 <= sh.col < width):
                raise ValueError("disk center outside the grid")
            mask = (rr - sh.row) ** 2 + (cc - sh.col) ** 2 <= sh.radius ** 2
        elif isinstance(sh, Rectangle):
            if not (0 <= sh.row0 < sh.row1 <= height and 0 <= sh.col0 < sh.col1 <= width):
                raise ValueError("rectangle outside the grid")
            mask = np.zeros_like(z, dtype=bool)
            mask[sh.row0:sh.row1, sh.col0:sh.col1] = True
        else:
            raise TypeError(f"unknown shape {sh!r}")
        z[mask] = sh.label
    if n_classes is not None and not 1 <= background <= n_classes:
        raise ValueError(f"background label {background} outside 1..{n_classes}")
    return z


def synth_trf(z, ggd, rng):
    """Independent GGD pixels with the parameters of their class."""
    z = check_labels(z, ggd.n_classes, min_classes=1)
    return ggd_sample(ggd.alpha[z - 1], ggd.beta[z - 1], rng, size=z.shape)


def gaussian_modulated_psf(fc, sigma_axial, sigma_lateral, size):
    """Gaussian envelope times an axial cosine carrier, peak-normalized.

    Rows are the axial direction; ``fc`` is in cycles per pixel.
    """
    if size % 2 != 1 or size < 1:
        raise ValueError("PSF size must be a positive odd integer")
    if sigma_axial <= 0 or sigma_lateral <= 0:
        raise ValueError("PSF widths must be positive")
    c0 = size // 2
    r = np.arange(size) - c0
    rr, cc = np.meshgrid(r, r, indexing="ij")
    k = np.exp(-rr ** 2 / (2 * sigma_axial ** 2) - cc ** 2 / (2 * sigma_lateral ** 2))
    k *= np.cos(2 * np.pi * fc * rr)
    return Psf(k / np.abs(k).max())


def synth_rf(x, psf, sigma2, rng):
    """``y = H x + noise`` with i.i.d. Gaussian noise of variance ``sigma2``."""
    if sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    op = ConvOperator(psf, x.shape)
    y = op.forward(x)
    if sigma2 > 0:
        y = y + np.sqrt(sigma2) * rng.standard_normal(x.shape)
    return y


@dataclass
class PhantomSpec:
    """Geometry and model parameters of a synthetic experiment.

    The defaults are the 128x128 two-class "simu1-mini" setup: a class-2 disk
    (alpha 0.6) on a class-1 background (alpha 1.5), both with beta 1.
    """

    width: int = 128
    height: int = 128
    shapes: list = field(default_factory=lambda: [Disk(64.0, 64.0, 32.0, 2)])
    background: int = 1
    alpha: tuple = (1.5, 0.6)
    beta: tuple = (1.0, 1.0)
    sigma2: float = 0.013
    psf_fc: float = 0.25
    psf_sigma_axial: float = 1.5
    psf_sigma_lateral: float = 2.5
    psf_size: int = 15

    @property
    def ggd(self):
        return GgdParams(self.alpha, self.beta)

    @property
    def n_classes(self):
        return len(self.alpha)


@dataclass
class Phantom:
    x: np.ndarray
    z: np.ndarray
    y: np.ndarray
    psf: Psf
    spec: PhantomSpec


def make_phantom(spec=None, seed=0):
    """Generate ``(x, z, y, psf)`` for ``spec``; the label map does not depend on ``seed``."""
    spec = spec or PhantomSpec()
    rng = np.random.default_rng(seed)
    z = make_label_map(spec.width, spec.height, spec.shapes, spec.background, spec.n_classes)
    x = synth_trf(z, spec.ggd, rng)
    psf = gaussian_modulated_psf(spec.psf_fc, spec.psf_sigma_axial,
                                 spec.psf_sigma_lateral, spec.psf_size)
    y = synth_rf(x, psf, spec.sigma2, rng)
    return Phantom(x=x, z=z, y=y, psf=psf, spec=spec)
