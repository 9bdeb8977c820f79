"""Conditional draws of the hybrid Gibbs sampler.

Each function draws one block given the others: the noise variance and the
GGD scales from their inverse-gamma conditionals, the GGD shapes by a
random-walk Metropolis-Hastings step, the labels by a Potts/GGD Gibbs sweep,
and the reflectivity by (preconditioned) proximal unadjusted Langevin.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .metrics import isolated_point_fraction
from .model import ALPHA_MAX, ALPHA_MIN, ggd_log_norm
from .prox import DfbConfig, mm_prox_nonconvex


class EmptyRegionError(ValueError):
    """Raised when a class has no pixels, so its parameters have no conditional."""


@dataclass
class SamplerConfig:
    gamma: float = 0.09
    lam: float = 0.1
    mh_step: float = 0.1
    theta: float = 1.0
    theta_target: float | None = None
    theta_every: int = 50
    theta_factor: float = 1.05
    rng_seed: int = 0
    mm_iters: int = 5
    dfb: DfbConfig = field(default_factory=DfbConfig)
    eps_v: float = 1e-10
    literal_zero_rule: bool = False
    sweep: str = "checkerboard"
    # keep sigma2 inside Q at its initial value instead of the current draw
    freeze_q_sigma2: bool = False

    def __post_init__(self):
        for name in ("gamma", "lam", "mh_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.theta < 0:
            raise ValueError("theta must be non-negative")
        if self.theta_target is not None and not 0 <= self.theta_target <= 1:
            raise ValueError("theta_target must lie in [0, 1]")
        if self.sweep not in ("checkerboard", "raster"):
            raise ValueError("sweep must be 'checkerboard' or 'raster'")


def sample_inverse_gamma(shape, scale, rng, size=None):
    """``IG(shape, scale)`` as ``scale / Gamma(shape, 1)``."""
    return scale / rng.gamma(shape, 1.0, size=size)


def sample_sigma2(y, hx, rng):
    """Noise variance from ``IG(n/2, ||y - Hx||^2 / 2)``."""
    y = np.asarray(y, dtype=float)
    hx = np.asarray(hx, dtype=float)
    if y.shape != hx.shape:
        raise ValueError("y and Hx must have the same shape")
    scale = 0.5 * float(np.sum((y - hx) ** 2))
    if scale == 0:
        raise ValueError("zero residual: noise variance conditional is degenerate")
    return float(sample_inverse_gamma(0.5 * y.size, scale, rng))


def _region(x, z, k):
    vals = np.abs(np.asarray(x)[np.asarray(z) == k])
    if vals.size == 0:
        raise EmptyRegionError(f"class {k} has no pixels")
    return vals


def sample_beta_k(x, z, alpha_k, k, rng):
    """Scale of class ``k`` from ``IG(n_k / alpha_k, sum_{z_i = k} |x_i|^alpha_k)``."""
    if not alpha_k > 0:
        raise ValueError("alpha_k must be positive")
    vals = _region(x, z, k)
    return float(sample_inverse_gamma(vals.size / alpha_k, np.sum(vals ** alpha_k), rng))


def alpha_log_target(alpha, abs_x, beta_k):
    """Log conditional of a class shape up to a constant (``abs_x`` = region ``|x|``)."""
    n = abs_x.size
    return (-(n / alpha) * np.log(beta_k) - n * gammaln(1.0 + 1.0 / alpha)
            - np.sum(abs_x ** alpha) / beta_k)


def sample_alpha_k_mh(x, z, beta_k, alpha_k, k, cfg, rng):
    """One Gaussian random-walk MH step on the shape of class ``k``.

    Proposals outside ``[ALPHA_MIN, 3]`` are rejected.  Returns
    ``(alpha, accepted)``.
    """
    vals = _region(x, z, k)
    prop = alpha_k + cfg.mh_step * rng.standard_normal()
    u = rng.random()
    if not ALPHA_MIN <= prop <= ALPHA_MAX:
        return float(alpha_k), False
    log_ratio = alpha_log_target(prop, vals, beta_k) - alpha_log_target(alpha_k, vals, beta_k)
    if np.log(u) < log_ratio:
        return float(prop), True
    return float(alpha_k), False


def label_log_likelihood(x, ggd):
    """``log`` of the GGD factor of each class at each pixel, shape ``(K,) + x.shape``."""
    absx = np.abs(x)
    out = np.empty((ggd.n_classes,) + absx.shape)
    for k in range(ggd.n_classes):
        out[k] = ggd_log_norm(ggd.alpha[k], ggd.beta[k]) - absx ** ggd.alpha[k] / ggd.beta[k]
    return out


def _neighbour_counts(onehot):
    """Same-label 4-neighbour counts; neighbours outside the image are omitted."""
    cnt = np.zeros_like(onehot)
    cnt[..., 1:, :] += onehot[..., :-1, :]
    cnt[..., :-1, :] += onehot[..., 1:, :]
    cnt[..., :, 1:] += onehot[..., :, :-1]
    cnt[..., :, :-1] += onehot[..., :, 1:]
    return cnt


def _draw_categorical(logits, rng):
    """Draw labels ``1..K`` from unnormalized log-probabilities along axis 0."""
    logits = logits - logits.max(axis=0)
    cdf = np.cumsum(np.exp(logits), axis=0)
    u = rng.random(logits.shape[1:]) * cdf[-1]
    return 1 + np.sum(cdf[:-1] < u, axis=0)


def label_probabilities(x, z, ggd, theta):
    """Normalized per-pixel conditional label probabilities given the current neighbours."""
    loglik = label_log_likelihood(x, ggd)
    onehot = np.stack([(z == k + 1) for k in range(ggd.n_classes)]).astype(float)
    logits = theta * _neighbour_counts(onehot) + loglik
    logits -= logits.max(axis=0)
    p = np.exp(logits)
    return p / p.sum(axis=0)


def sample_labels_sweep(x, z, ggd, theta, rng, schedule="checkerboard"):
    """One Gibbs sweep over all labels.

    The checkerboard schedule redraws all pixels of one colour from the
    current labels of the other colour, then the reverse; same-colour pixels
    are conditionally independent under the 4-neighbour Potts model.  Leading
    axes of ``x``/``z`` are treated as independent images.
    """
    x = np.asarray(x, dtype=float)
    z = np.array(z, dtype=np.int64)
    loglik = label_log_likelihood(x, ggd)
    K = ggd.n_classes
    if schedule == "raster":
        return _raster_sweep(loglik, z, theta, rng)
    h, w = z.shape[-2:]
    parity = np.add.outer(np.arange(h), np.arange(w)) % 2
    for colour in (0, 1):
        onehot = np.stack([(z == k + 1) for k in range(K)]).astype(float)
        logits = theta * _neighbour_counts(onehot) + loglik
        new = _draw_categorical(logits, rng)
        z = np.where(parity == colour, new, z)
    return z


def _raster_sweep(loglik, z, theta, rng):
    if z.ndim != 2:
        raise ValueError("raster sweep supports a single 2-D image")
    K, h, w = loglik.shape
    u = rng.random((h, w))
    for i in range(h):
        for j in range(w):
            lg = loglik[:, i, j].copy()
            for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                a, b = i + di, j + dj
                if 0 <= a < h and 0 <= b < w:
                    lg[z[a, b] - 1] += theta
            p = np.exp(lg - lg.max())
            cdf = np.cumsum(p)
            z[i, j] = 1 + int(np.sum(cdf[:-1] < u[i, j] * cdf[-1]))
    return z


def tune_theta(theta, z, target, factor=1.05):
    """Raise ``theta`` when the isolated-point fraction exceeds ``target``, else lower it."""
    frac = isolated_point_fraction(z)
    return theta * factor if frac > target else theta / factor


# ---------------------------------------------------------------------------
# reflectivity

@dataclass
class TrfStepInfo:
    dfb_iterations: int
    converged: bool
    w: np.ndarray


def _pixel_params(state):
    idx = state.z - 1
    return state.ggd.alpha[idx], state.ggd.beta[idx]


def ppula_forward(x, y, op, gamma, sigma2):
    """``x - (gamma / sigma2) Q H^T (H x - y)`` as one spectral multiply."""
    xf = op.rfft(x)
    grad = np.conj(op.spectrum) * (op.spectrum * xf - op.rfft(y))
    return x - op.irfft((gamma / sigma2) * op.q_spectrum * grad)


def sample_trf_ppula(state, y, op, cfg, rng, noise=True, w0=None):
    """Preconditioned proximal ULA step for the reflectivity.

    ``op`` must carry the sigma2 wanted inside ``Q``.  The prox of
    ``gamma * g`` in the metric ``Q^-1`` goes through MM/DFB (a single DFB
    solve when every shape is >= 1); no accept/reject step follows.
    Returns ``(x_new, TrfStepInfo)``.
    """
    x_tilde = ppula_forward(state.x, y, op, cfg.gamma, state.sigma2)
    alpha, beta = _pixel_params(state)
    res = mm_prox_nonconvex(x_tilde, op.apply_q, op.q_norm(), cfg.gamma, alpha, beta,
                            mm_iters=cfg.mm_iters, dfb=cfg.dfb, w0=w0, eps_v=cfg.eps_v,
                            literal_zero_rule=cfg.literal_zero_rule)
    x_new = res.u
    if noise:
        x_new = x_new + np.sqrt(2.0 * cfg.gamma) * op.apply_q_sqrt(
            rng.standard_normal(state.x.shape))
    return x_new, TrfStepInfo(res.dfb_iterations, res.converged, res.w)


def pula_step_size(op, sigma2):
    return 1.99 * sigma2 / op.spectral_norm() ** 2


def sample_trf_pula(state, y, op, cfg, rng, noise=True, gamma=None):
    """Non-preconditioned proximal ULA (``Q = I``, ``gamma = 1.99 sigma2 / ||H||^2``)."""
    if gamma is None:
        gamma = pula_step_size(op, state.sigma2)
    x = state.x
    x_tilde = x - (gamma / state.sigma2) * op.adjoint(op.forward(x) - y)
    alpha, beta = _pixel_params(state)
    res = mm_prox_nonconvex(x_tilde, None, 1.0, gamma, alpha, beta, mm_iters=cfg.mm_iters,
                            eps_v=cfg.eps_v, literal_zero_rule=cfg.literal_zero_rule)
    x_new = res.u
    if noise:
        x_new = x_new + np.sqrt(2.0 * gamma) * rng.standard_normal(x.shape)
    return x_new, TrfStepInfo(0, True, None)
