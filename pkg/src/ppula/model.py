"""Hierarchical model types and generalized Gaussian (GGD) utilities.

Images are plain 2-D float arrays of shape ``(height, width)``; label fields
are 2-D integer arrays with values in ``1..K``.  The dataclasses below only
bundle what the samplers pass around together.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

ALPHA_MIN = 0.05
ALPHA_MAX = 3.0

LOG2 = np.log(2.0)


def check_image(x, name="image"):
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.size == 0:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def check_labels(z, n_classes, shape=None, name="labels", min_classes=2):
    z = np.asarray(z)
    if z.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array")
    if not np.issubdtype(z.dtype, np.integer):
        if not np.all(z == np.round(z)):
            raise ValueError(f"{name} must be integer valued")
        z = z.astype(np.int64)
    if n_classes < min_classes:
        raise ValueError(f"number of classes must be >= {min_classes}")
    if z.size and (z.min() < 1 or z.max() > n_classes):
        raise ValueError(f"{name} must take values in 1..{n_classes}")
    if shape is not None and z.shape != tuple(shape):
        raise ValueError(f"{name} shape {z.shape} does not match image shape {shape}")
    return z


@dataclass
class GgdParams:
    """Per-class GGD shape ``alpha`` and scale ``beta`` (class k at index k-1)."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        self.alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float)).copy()
        self.beta = np.atleast_1d(np.asarray(self.beta, dtype=float)).copy()
        if self.alpha.shape != self.beta.shape or self.alpha.ndim != 1:
            raise ValueError("alpha and beta must be 1-D arrays of equal length")
        if np.any(self.alpha < 0) or np.any(self.alpha > ALPHA_MAX):
            raise ValueError("alpha must lie in [0, 3]")
        if np.any(self.beta <= 0):
            raise ValueError("beta must be positive")

    @property
    def n_classes(self):
        return self.alpha.size

    def copy(self):
        return GgdParams(self.alpha.copy(), self.beta.copy())


@dataclass
class ModelState:
    """Current values of every unknown of the hierarchical model."""

    x: np.ndarray
    z: np.ndarray
    ggd: GgdParams
    sigma2: float
    theta: float = 1.0
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = check_image(self.x, "x")
        self.z = check_labels(self.z, self.ggd.n_classes, self.x.shape, "z",
                              min_classes=1)
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")

    @property
    def n_classes(self):
        return self.ggd.n_classes

    def copy(self):
        return ModelState(self.x.copy(), self.z.copy(), self.ggd.copy(),
                          float(self.sigma2), float(self.theta), dict(self.extras))


def _check_ggd_args(alpha, beta):
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if np.any(alpha <= 0):
        raise ValueError("GGD shape alpha must be > 0")
    if np.any(beta <= 0):
        raise ValueError("GGD scale beta must be > 0")
    return alpha, beta


def ggd_log_norm(alpha, beta):
    """Log of the normalizing factor ``1 / (2 beta^(1/alpha) Gamma(1 + 1/alpha))``."""
    alpha, beta = _check_ggd_args(alpha, beta)
    return -LOG2 - np.log(beta) / alpha - gammaln(1.0 + 1.0 / alpha)


def ggd_log_density(v, alpha, beta):
    """Log-density of the GGD ``exp(-|v|^alpha / beta)``, broadcasting over inputs."""
    alpha, beta = _check_ggd_args(alpha, beta)
    v = np.asarray(v, dtype=float)
    out = ggd_log_norm(alpha, beta) - np.abs(v) ** alpha / beta
    return out[()] if out.ndim == 0 else out


def ggd_sample(alpha, beta, rng, size=None):
    """Draw GGD variates as ``sign * (beta * G)^(1/alpha)``, ``G ~ Gamma(1/alpha, 1)``.

    ``alpha`` and ``beta`` may be arrays (broadcast against ``size``).
    """
    alpha, beta = _check_ggd_args(alpha, beta)
    if size is None:
        size = np.broadcast(alpha, beta).shape
    g = rng.gamma(1.0 / alpha, 1.0, size=size)
    sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
    # exp/log keeps (beta*g)^(1/alpha) finite for small alpha
    with np.errstate(divide="ignore"):
        mag = np.exp((np.log(beta) + np.log(g)) / alpha)
    out = sign * mag
    return out[()] if np.ndim(out) == 0 else out
