"""Proximity operators of weighted powers, prox in a metric, and the MM scheme.

The building block is the prox of ``c |t|^a`` (``a >= 1``), i.e. the minimizer
of ``0.5 (t - s)^2 + c |t|^a``.  :func:`dfb_prox_metric` lifts a separable
prox to an arbitrary SPD metric ``Q`` through the dual forward-backward
iteration, and :func:`mm_prox_nonconvex` handles shapes below one by
majorizing the concave part with a weighted l1 term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_CLOSED_FORMS = (1.0, 4.0 / 3.0, 1.5, 2.0, 3.0)
_EPS = np.finfo(float).eps
# below this a - 1 the substitution r = t^(a-1) amplifies rounding in r by
# 1/(a-1) when mapping back to t, so the root finder bisects instead
_NEWTON_MIN_EXCESS = 1e-3


# ---------------------------------------------------------------------------
# scalar prox of c|t|^a

def _prox_closed(s, c, a):
    """Closed-form prox for ``a`` in ``{1, 4/3, 3/2, 2, 3}``; ``s``, ``c`` arrays."""
    m = np.abs(s)
    if a == 1.0:
        t = np.maximum(m - c, 0.0)
    elif a == 2.0:
        t = m / (1.0 + 2.0 * c)
    elif a == 3.0:
        # t + 3c t^2 = m, rationalized root
        t = 2.0 * m / (1.0 + np.sqrt(1.0 + 12.0 * c * m))
    elif a == 1.5:
        # r = sqrt(t) solves r^2 + 1.5c r - m = 0
        with np.errstate(invalid="ignore", divide="ignore"):
            r = np.where(m > 0, 2.0 * m / (1.5 * c + np.sqrt(2.25 * c * c + 4.0 * m)), 0.0)
        t = r * r
    elif a == 4.0 / 3.0:
        # r = t^(1/3) solves r^3 + p r - m = 0 with p = 4c/3 (Cardano, one real root);
        # r = u - v = m / (u^2 + uv + v^2) avoids the cancellation in u - v
        p = 4.0 * c / 3.0
        d = np.sqrt(0.25 * m * m + p ** 3 / 27.0)
        u = np.cbrt(0.5 * m + d)
        v = np.cbrt(d - 0.5 * m)
        with np.errstate(invalid="ignore", divide="ignore"):
            r = np.where(m > 0, m / (u * u + p / 3.0 + v * v), 0.0)
        t = r ** 3
    else:
        raise ValueError(f"no closed form for a={a}")
    # the exact minimizer never exceeds |s|; clip rounding overshoot
    return np.sign(s) * np.minimum(t, m)


def _prox_root(s, c, a, method="newton", tol=4 * _EPS, max_iter=200):
    """Solve ``t + c a t^(a-1) = |s|`` on ``[0, |s|]`` for ``a > 1``.

    ``method="bisect"`` halves the bracket ``[0, min(|s|, (|s|/(c a))^(1/(a-1)))]``
    until it collapses.  ``method="newton"`` runs Newton's method from the
    upper end of that bracket on a convex reformulation (in ``r = t^(a-1)``
    when ``a < 2``, in ``t`` otherwise), so iterates decrease monotonically to
    the root without safeguards.  Exponents within ``1e-3`` of one always
    bisect.
    """
    s, c = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(c, dtype=float))
    shape = s.shape
    m = np.abs(s).ravel()
    k = c.ravel() * a
    t = m.copy()
    idx = np.flatnonzero((m > 0) & (k > 0))
    if idx.size == 0:
        return (np.sign(s).ravel() * t).reshape(shape)
    mi, ki = m[idx], k[idx]
    b = a - 1.0
    with np.errstate(over="ignore"):
        hi = np.minimum(mi, (mi / ki) ** (1.0 / b))
    if method == "bisect" or b < _NEWTON_MIN_EXCESS:
        lo = np.zeros_like(hi)
        for _ in range(max_iter):
            mid = 0.5 * (lo + hi)
            pos = mid + ki * mid ** b - mi >= 0
            hi = np.where(pos, mid, hi)
            lo = np.where(pos, lo, mid)
            if np.all(hi - lo <= tol * hi):
                break
        t[idx] = 0.5 * (lo + hi)
    elif b < 1.0:
        # phi(r) = r^(1/b) + k r - m is convex increasing in r = t^b
        e = 1.0 / b
        r = hi ** b
        for _ in range(max_iter):
            rp = r ** (e - 1.0)
            step = (r * rp + ki * r - mi) / (e * rp + ki)
            r = r - step
            if np.all(step <= tol * r):
                break
        t[idx] = r ** e
    else:
        ti = hi
        for _ in range(max_iter):
            tp = ti ** (b - 1.0)
            step = (ti + ki * tp * ti - mi) / (1.0 + ki * b * tp)
            ti = ti - step
            if np.all(step <= tol * ti):
                break
        t[idx] = ti
    np.minimum(t, m, out=t)
    return (np.sign(s).ravel() * t).reshape(shape)


def prox_power(s, c, a, method="auto"):
    """Elementwise prox of ``c |.|^a`` at ``s`` for a single exponent ``a >= 1``.

    ``method="auto"`` uses a closed form when one exists and the safeguarded
    root finder otherwise; ``"newton"`` and ``"bisect"`` force the root finder.
    """
    a = float(a)
    if a < 1.0:
        raise ValueError("prox_power requires a >= 1")
    s = np.asarray(s, dtype=float)
    c = np.asarray(c, dtype=float)
    if np.any(c < 0):
        raise ValueError("prox weight must be non-negative")
    if a == 1.0 or (method == "auto" and a in _CLOSED_FORMS):
        out = _prox_closed(*np.broadcast_arrays(s, c), a)
    else:
        out = _prox_root(s, c, a, method="bisect" if method == "bisect" else "newton")
    return out[()] if out.ndim == 0 else out


def prox_power_scalar(s, c, a, method="auto"):
    """Unique minimizer of ``0.5 (t - s)^2 + c |t|^a`` for ``c >= 0``, ``a >= 1``."""
    if not (c >= 0 and a >= 1):
        raise ValueError(f"invalid prox parameters c={c}, a={a}")
    return float(prox_power(float(s), float(c), float(a), method=method))


# ---------------------------------------------------------------------------
# separable potentials

class SeparablePotential:
    """``f(u) = sum_i weight_i |u_i|^power_i`` with ``power_i >= 1``.

    Coordinates are grouped by exponent once at construction so repeated
    prox evaluations inside DFB stay vectorized.
    """

    def __init__(self, weight, power, shape=None):
        weight = np.asarray(weight, dtype=float)
        power = np.asarray(power, dtype=float)
        if shape is None:
            shape = np.broadcast_shapes(weight.shape, power.shape)
        self.shape = tuple(shape)
        self.weight = np.broadcast_to(weight, self.shape)
        self.power = np.broadcast_to(power, self.shape)
        if np.any(self.weight < 0):
            raise ValueError("potential weights must be >= 0")
        if np.any(self.power < 1):
            raise ValueError("potential powers must be >= 1 (convex case)")
        flat = self.power.ravel()
        values = np.unique(flat)
        if values.size == 1:
            self._groups = [(float(values[0]), None)]
        else:
            self._groups = [(float(v), np.flatnonzero(flat == v)) for v in values]
        self._wflat = np.ascontiguousarray(self.weight).ravel()

    def value(self, u):
        return float(np.sum(self.weight * np.abs(u) ** self.power))

    def prox(self, s, scale=1.0):
        """Prox of ``scale * f`` at ``s``."""
        s = np.asarray(s, dtype=float)
        if s.shape != self.shape:
            raise ValueError(f"input shape {s.shape} does not match potential {self.shape}")
        out = np.empty(s.size)
        sf = s.ravel()
        for a, idx in self._groups:
            if idx is None:
                out[:] = prox_power(sf, scale * self._wflat, a)
            else:
                out[idx] = prox_power(sf[idx], scale * self._wflat[idx], a)
        return out.reshape(self.shape)

    def subgradient_residual(self, u, g):
        """Distance from ``g`` to the subdifferential of ``f`` at ``u`` (per coordinate)."""
        u = np.asarray(u, dtype=float)
        w, p = self.weight, self.power
        absu = np.abs(u)
        with np.errstate(divide="ignore", invalid="ignore"):
            smooth = w * p * np.sign(u) * np.where(absu > 0, absu ** (p - 1.0), 0.0)
        # at u_i = 0 with power 1 the subdifferential is [-w_i, w_i]
        kink = (absu == 0) & (p == 1.0)
        proj = np.clip(g, -w, w)
        return np.where(kink, g - proj, g - smooth)


def prox_separable(x, pot):
    return pot.prox(x, 1.0)


# ---------------------------------------------------------------------------
# prox in a metric: dual forward-backward

@dataclass
class DfbConfig:
    max_iter: int = 200
    tol: float = 1e-6
    # eta = eta_fraction * 2 * rho, rho = 1 / ||Q||
    eta_fraction: float = 0.95

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0 < self.eta_fraction <= 1:
            raise ValueError("eta_fraction must lie in (0, 1]")

    def step(self, q_norm):
        rho = 1.0 / q_norm
        eps = min(1.0, rho) / 100.0
        return float(np.clip(self.eta_fraction * 2.0 * rho, eps, 2.0 * rho - eps))


@dataclass
class DfbResult:
    u: np.ndarray
    w: np.ndarray
    iterations: int
    converged: bool
    residual: float


def dfb_prox_metric(x, apply_q, q_norm, pot, cfg=None, w0=None):
    """Prox of ``pot`` in the metric induced by ``Q^-1`` via dual forward-backward.

    Approximates ``argmin_u 0.5 ||x - u||^2_{Q^-1} + f(u)`` using only
    products with ``Q`` and the Euclidean prox of ``f``.

    Parameters
    ----------
    x : ndarray
        Point at which the prox is evaluated.
    apply_q : callable
        ``v -> Q v`` for a symmetric positive definite ``Q``.
    q_norm : float
        Spectral norm of ``Q``.
    pot : SeparablePotential
        Convex separable potential ``f``.
    cfg : DfbConfig, optional
    w0 : ndarray, optional
        Dual warm start; zeros by default.

    Returns
    -------
    DfbResult
        ``u`` is the last Euclidean-prox output, which equals the primal
        iterate ``x - Q w`` at the fixed point and keeps the exact zeros of
        thresholding.  ``residual`` is ``||(x - Q w) - u|| / (1 + ||u||)``.
        Non-convergence is reported through ``converged``, not raised.
    """
    cfg = cfg or DfbConfig()
    x = np.asarray(x, dtype=float)
    eta = cfg.step(q_norm)
    w = np.zeros_like(x) if w0 is None else np.array(w0, dtype=float)
    u = x - apply_q(w)
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        p = pot.prox(w / eta + u, 1.0 / eta)
        w = w + eta * (u - p)
        u_new = x - apply_q(w)
        change = np.linalg.norm(u_new - u) / (1.0 + np.linalg.norm(u))
        u = u_new
        if change < cfg.tol:
            converged = True
            break
    residual = float(np.linalg.norm(u - p) / (1.0 + np.linalg.norm(p)))
    return DfbResult(u=p, w=w, iterations=it, converged=converged, residual=residual)


# ---------------------------------------------------------------------------
# majorization-minimization for shapes below one

@dataclass
class MmResult:
    u: np.ndarray
    w: np.ndarray
    dfb_iterations: int
    converged: bool


def penalty(u, alpha, beta):
    """``sum_i |u_i|^alpha_i / beta_i``."""
    return float(np.sum(np.abs(u) ** alpha / beta))


def surrogate_potential(gamma, alpha, beta, v, eps_v=1e-10, literal_zero_rule=False):
    """Convex separable majorant of ``gamma * sum |u_i|^alpha_i / beta_i`` at ``v = |u|``.

    Shapes ``>= 1`` keep their exact power; shapes ``< 1`` are replaced by the
    tangent ``((1 - alpha) v^alpha + alpha v^(alpha-1) |u|) / beta`` (the
    constant part does not affect the prox).  With ``literal_zero_rule``
    coordinates where ``v == 0`` are left unpenalized instead of using
    ``max(v, eps_v)``.
    """
    alpha, beta, v = np.broadcast_arrays(np.asarray(alpha, float), np.asarray(beta, float),
                                         np.abs(np.asarray(v, float)))
    concave = alpha < 1.0
    power = np.where(concave, 1.0, alpha)
    if literal_zero_rule:
        with np.errstate(divide="ignore"):
            lin = np.where(v > 0, alpha * v ** (alpha - 1.0), 0.0)
    else:
        lin = alpha * np.maximum(v, eps_v) ** (alpha - 1.0)
    weight = gamma * np.where(concave, lin, 1.0) / beta
    return SeparablePotential(weight, power, shape=v.shape)


def surrogate_value(u, alpha, beta, v, eps_v=1e-10):
    """``h(u, v)``: majorant of the penalty, touching it where ``|u| = v > 0``."""
    alpha, beta = np.broadcast_arrays(np.asarray(alpha, float), np.asarray(beta, float))
    au = np.abs(u)
    vv = np.maximum(np.abs(v), eps_v)
    tangent = ((1.0 - alpha) * vv ** alpha + alpha * vv ** (alpha - 1.0) * au) / beta
    return float(np.sum(np.where(alpha < 1.0, tangent, au ** alpha / beta)))


def mm_prox_nonconvex(x_tilde, apply_q, q_norm, gamma, alpha, beta, mm_iters=5,
                      dfb=None, u0=None, w0=None, eps_v=1e-10,
                      literal_zero_rule=False, callback=None):
    """Approximate ``prox^Q_{gamma g}`` for ``g(u) = sum |u_i|^alpha_i / beta_i``.

    When every shape is ``>= 1`` this is one DFB solve.  Otherwise each MM
    pass solves the convex surrogate built at the current iterate, so the
    prox objective never increases (up to DFB accuracy).  For shapes below
    one the result is a stationary point of the surrogate sequence, not a
    certified global minimizer.

    ``apply_q=None`` selects the Euclidean metric, where each surrogate prox
    is exact and separable.  ``callback(q, u)`` is called with the starting
    point (``q = 0``) and each MM iterate.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    x_tilde = np.asarray(x_tilde, dtype=float)
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), x_tilde.shape)
    beta = np.broadcast_to(np.asarray(beta, dtype=float), x_tilde.shape)
    if np.any(alpha <= 0) or np.any(alpha > 3):
        raise ValueError("alpha must lie in (0, 3]")
    if np.any(beta <= 0):
        raise ValueError("beta must be positive")
    if mm_iters < 1:
        raise ValueError("mm_iters must be >= 1")
    dfb = dfb or DfbConfig()

    u = x_tilde.copy() if u0 is None else np.array(u0, dtype=float)
    w = w0
    if callback is not None:
        callback(0, u)
    n_passes = mm_iters if np.any(alpha < 1.0) else 1
    total = 0
    converged = True
    for q in range(1, n_passes + 1):
        pot = surrogate_potential(gamma, alpha, beta, u, eps_v, literal_zero_rule)
        if apply_q is None:
            u = pot.prox(x_tilde)
        else:
            res = dfb_prox_metric(x_tilde, apply_q, q_norm, pot, dfb, w0=w)
            u, w = res.u, res.w
            total += res.iterations
            converged &= res.converged
        if callback is not None:
            callback(q, u)
    return MmResult(u=u, w=w, dfb_iterations=total, converged=converged)
