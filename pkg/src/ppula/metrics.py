"""Restoration, segmentation and mixing metrics."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np
from scipy import ndimage


def psnr(x_true, x_est):
    """``10 log10(n max^2 / ||x_true - x_est||^2)``, max of ``|value|`` over both images.

    Returns ``inf`` for identical images.
    """
    x_true = np.asarray(x_true, dtype=float)
    x_est = np.asarray(x_est, dtype=float)
    if x_true.shape != x_est.shape:
        raise ValueError("images must have the same shape")
    err = float(np.sum((x_true - x_est) ** 2))
    if err == 0:
        return float("inf")
    peak = max(np.abs(x_true).max(), np.abs(x_est).max())
    return float(10.0 * np.log10(x_true.size * peak ** 2 / err))


def ssim(x_true, x_est, sigma=1.5, k1=0.01, k2=0.03):
    """Mean SSIM with an 11x11 Gaussian window (std 1.5).

    The dynamic range is ``max - min`` of ``x_true``; the mean is taken over
    pixels at least 5 pixels from the border.
    """
    a = np.asarray(x_true, dtype=float)
    b = np.asarray(x_est, dtype=float)
    if a.shape != b.shape:
        raise ValueError("images must have the same shape")
    data_range = a.max() - a.min()
    if data_range == 0:
        data_range = 1.0
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2

    def filt(v):
        return ndimage.gaussian_filter(v, sigma, truncate=3.5, mode="reflect")

    mu_a, mu_b = filt(a), filt(b)
    va = filt(a * a) - mu_a ** 2
    vb = filt(b * b) - mu_b ** 2
    cov = filt(a * b) - mu_a * mu_b
    s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)
         / ((mu_a ** 2 + mu_b ** 2 + c1) * (va + vb + c2)))
    pad = int(3.5 * sigma + 0.5)
    return float(s[pad:-pad, pad:-pad].mean())


@dataclass
class CnrWindows:
    """Two ``(row0, row1, col0, col1)`` half-open boxes."""

    first: tuple
    second: tuple

    def validate(self, shape):
        boxes = []
        for box in (self.first, self.second):
            r0, r1, c0, c1 = (int(v) for v in box)
            if not (0 <= r0 < r1 <= shape[0] and 0 <= c0 < c1 <= shape[1]):
                raise ValueError(f"CNR window {box} empty or outside a {shape} image")
            boxes.append((r0, r1, c0, c1))
        (a0, a1, b0, b1), (c0, c1, d0, d1) = boxes
        if a0 < c1 and c0 < a1 and b0 < d1 and d0 < b1:
            raise ValueError("CNR windows overlap")
        return boxes


def cnr(bmode_img, windows):
    """``|mu1 - mu2| / sqrt(var1 + var2)`` between two windows of a B-mode image."""
    img = np.asarray(bmode_img, dtype=float)
    (a0, a1, b0, b1), (c0, c1, d0, d1) = windows.validate(img.shape)
    w1 = img[a0:a1, b0:b1]
    w2 = img[c0:c1, d0:d1]
    den = np.sqrt(w1.var() + w2.var())
    if den == 0:
        raise ValueError("both CNR windows are constant")
    return float(abs(w1.mean() - w2.mean()) / den)


def best_permutation(z_true, z_est, n_classes):
    """Relabeling of ``z_est`` (as a lookup array, index = old label) maximizing agreement."""
    z_true = np.asarray(z_true)
    z_est = np.asarray(z_est)
    if z_true.shape != z_est.shape:
        raise ValueError("label fields must have the same shape")
    if z_true.max() > n_classes or z_est.max() > n_classes:
        raise ValueError("label value exceeds the number of classes")
    conf = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(conf, (z_est.ravel() - 1, z_true.ravel() - 1), 1)
    best, best_perm = -1, None
    for perm in permutations(range(n_classes)):
        hits = conf[np.arange(n_classes), perm].sum()
        if hits > best:
            best, best_perm = hits, perm
    return np.concatenate([[0], np.asarray(best_perm) + 1]), best


def overall_accuracy(z_true, z_est, n_classes=None):
    """Fraction of correctly labeled pixels, maximized over label permutations."""
    z_true = np.asarray(z_true)
    z_est = np.asarray(z_est)
    if n_classes is None:
        n_classes = int(max(z_true.max(), z_est.max()))
    _, hits = best_permutation(z_true, z_est, n_classes)
    return hits / z_true.size


def mean_square_jump(samples):
    """``sqrt(mean_t ||x_t - x_{t+1}||^2)`` over consecutive samples."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape[0] < 2:
        raise ValueError("MSJ needs at least two consecutive samples")
    jumps = np.diff(samples, axis=0).reshape(samples.shape[0] - 1, -1)
    return float(np.sqrt(np.mean(np.sum(jumps ** 2, axis=1))))


def msj_per_second(samples, seconds_per_iter):
    if not seconds_per_iter > 0:
        raise ValueError("seconds_per_iter must be positive")
    return mean_square_jump(samples) / seconds_per_iter


def isolated_point_fraction(z):
    """Fraction of pixels whose label changes under a 3x3 median filter."""
    z = np.asarray(z)
    med = ndimage.median_filter(z, size=3, mode="nearest")
    return float(np.mean(med != z))
