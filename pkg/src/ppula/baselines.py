"""Classical restoration/segmentation used for initialization and comparison."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy import ndimage

from .operators import ConvOperator

MAD_SCALE = 0.6745


@dataclass
class BmodeParams:
    dynamic_range_db: float = 40.0

    def __post_init__(self):
        if not self.dynamic_range_db > 0:
            raise ValueError("dynamic_range_db must be positive")


def haar_noise_std(y):
    """Noise std from the finest diagonal Haar detail band, ``median(|d|) / 0.6745``."""
    y = np.asarray(y, dtype=float)
    h, w = (y.shape[0] // 2) * 2, (y.shape[1] // 2) * 2
    b = y[:h, :w]
    # orthonormal 2-D Haar HH band
    d = 0.5 * (b[0::2, 0::2] - b[0::2, 1::2] - b[1::2, 0::2] + b[1::2, 1::2])
    return float(np.median(np.abs(d)) / MAD_SCALE)


def wiener_deconvolve(y, psf, noise_std=None):
    """Frequency-domain Wiener filter with the periodogram as signal spectrum.

    ``x_f = conj(h_f) y_f / (|h_f|^2 + n sigma^2 / |y_f|^2)``.  ``noise_std``
    defaults to :func:`haar_noise_std` of ``y``.
    """
    y = np.asarray(y, dtype=float)
    op = ConvOperator(psf, y.shape)
    if noise_std is None:
        noise_std = haar_noise_std(y)
    yf = op.rfft(y)
    ypow = np.abs(yf) ** 2
    noise = y.size * noise_std ** 2
    num = np.conj(op.spectrum) * yf
    with np.errstate(divide="ignore", invalid="ignore"):
        den = op.power + np.where(ypow > 0, noise / ypow, np.inf)
        xf = np.where((ypow > 0) & (den > 0), num / den, 0.0)
    return op.irfft(xf)


def median_filter(img, window=3):
    """Median over a ``window x window`` neighborhood with border replication."""
    if window < 3 or window % 2 != 1:
        raise ValueError("median window must be an odd integer >= 3")
    return ndimage.median_filter(np.asarray(img), size=window, mode="nearest")


def bmode(x, params=None):
    """Log-compressed envelope ``|x|`` mapped to ``[0, 1]`` over the dynamic range."""
    params = params or BmodeParams()
    env = np.abs(np.asarray(x, dtype=float))
    peak = env.max()
    if peak == 0:
        return np.zeros_like(env)
    dr = params.dynamic_range_db
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(env / peak)
    return (np.clip(db, -dr, 0.0) + dr) / dr


def _otsu_thresholds(hist, n_classes):
    """Bin edges (exclusive upper index per class) maximizing between-class variance."""
    nbins = hist.size
    p = hist / hist.sum()
    centers = np.arange(nbins, dtype=float)
    w = np.concatenate([[0.0], np.cumsum(p)])
    m = np.concatenate([[0.0], np.cumsum(p * centers)])
    cuts = np.array(list(combinations(range(1, nbins), n_classes - 1)), dtype=np.int64)
    edges = np.concatenate([np.zeros((len(cuts), 1), np.int64), cuts,
                            np.full((len(cuts), 1), nbins, np.int64)], axis=1)
    wk = w[edges[:, 1:]] - w[edges[:, :-1]]
    mk = m[edges[:, 1:]] - m[edges[:, :-1]]
    with np.errstate(divide="ignore", invalid="ignore"):
        # between-class variance up to the constant total mean term
        score = np.where(wk > 0, mk ** 2 / wk, 0.0).sum(axis=1)
    return cuts[int(np.argmax(score))]


def otsu_multilevel(img, n_classes, nbins=256):
    """Otsu thresholding into ``n_classes`` labels ``1..K`` ordered by intensity.

    Exhaustive search over all ``K - 1`` thresholds of an ``nbins`` histogram.
    """
    if n_classes not in (2, 3, 4):
        raise ValueError("Otsu supports 2, 3 or 4 classes")
    img = np.asarray(img, dtype=float)
    lo, hi = img.min(), img.max()
    if hi <= lo:
        raise ValueError("constant image has no Otsu threshold")
    hist, _ = np.histogram(img, bins=nbins, range=(lo, hi))
    cuts = _otsu_thresholds(hist.astype(float), n_classes)
    bins = np.minimum(((img - lo) / (hi - lo) * nbins).astype(np.int64), nbins - 1)
    return 1 + np.searchsorted(cuts, bins, side="right")
