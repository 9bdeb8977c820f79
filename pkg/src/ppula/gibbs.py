"""Hybrid Gibbs driver: initialization, the five-step loop and MMSE estimates."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import samplers
from .baselines import BmodeParams, bmode, haar_noise_std, median_filter, otsu_multilevel, wiener_deconvolve
from .metrics import isolated_point_fraction, psnr
from .model import GgdParams, ModelState, check_image
from .operators import ConvOperator
from .samplers import EmptyRegionError, SamplerConfig

log = logging.getLogger(__name__)

TRF_SAMPLERS = ("ppula", "pula")


@dataclass
class ChainConfig:
    burn_in: int = 1500
    total_iters: int = 3000
    n_classes: int = 2
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    trf_sampler: str = "ppula"
    record_stride: int = 10
    store_samples: bool = False

    def __post_init__(self):
        if not 0 < self.burn_in < self.total_iters:
            raise ValueError("need 0 < burn_in < total_iters")
        if self.trf_sampler not in TRF_SAMPLERS:
            raise ValueError(f"trf_sampler must be one of {TRF_SAMPLERS}")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")
        if self.n_classes < 1:
            raise ValueError("n_classes must be >= 1")


class ChainError(RuntimeError):
    """A sampler step failed; carries the iteration and partial diagnostics."""

    def __init__(self, iteration, step, diagnostics, cause):
        super().__init__(f"{step} step failed at iteration {iteration}: {cause}")
        self.iteration = iteration
        self.step = step
        self.diagnostics = diagnostics


@dataclass
class ChainResult:
    x_mmse: np.ndarray
    z_map: np.ndarray
    sigma2_mmse: float
    alpha_mmse: np.ndarray
    beta_mmse: np.ndarray
    msj: float
    wall_time_per_iter: float
    wall_time: float
    theta: float
    trace: dict
    samples: list
    diagnostics: dict

    @property
    def msj_per_second(self):
        return self.msj / self.wall_time_per_iter


class _CompensatedMean:
    """Streaming mean with Kahan-compensated summation."""

    def __init__(self):
        self.total = None
        self.comp = None
        self.count = 0

    def add(self, v):
        v = np.asarray(v, dtype=float)
        if self.total is None:
            self.total = np.zeros_like(v)
            self.comp = np.zeros_like(v)
        y = v - self.comp
        t = self.total + y
        self.comp = (t - self.total) - y
        self.total = t
        self.count += 1

    @property
    def mean(self):
        return self.total / self.count


def initialize(y, psf, n_classes, rng, bmode_params=None):
    """Starting state from Wiener deconvolution and Otsu labels.

    The reflectivity is the Wiener estimate, labels are Otsu levels of the
    7x7-median-filtered B-mode of that estimate, shapes are uniform in
    ``[0.5, 1.5]``, scales uniform in ``[1, 200]``, and the noise variance is
    the wavelet estimate used by the Wiener filter.
    """
    y = check_image(y, "y")
    noise_std = haar_noise_std(y)
    x0 = wiener_deconvolve(y, psf, noise_std=noise_std)
    if n_classes == 1:
        z0 = np.ones(y.shape, dtype=np.int64)
    else:
        img = median_filter(bmode(x0, bmode_params), 7)
        z0 = otsu_multilevel(img, n_classes)
        if np.unique(z0).size < n_classes:
            raise ValueError(f"Otsu initialization found fewer than {n_classes} levels")
    alpha0 = rng.uniform(0.5, 1.5, n_classes)
    beta0 = rng.uniform(1.0, 200.0, n_classes)
    sigma2 = noise_std ** 2
    if sigma2 <= 0:
        sigma2 = max(1e-12 * float(np.mean(y ** 2)), 1e-300)
    return ModelState(x0, z0, GgdParams(alpha0, beta0), sigma2)


class GibbsSampler:
    """Runs the five conditional steps in order: sigma2, alpha, beta, z, x.

    Parameters
    ----------
    y : ndarray
        Observed RF image.
    psf : Psf
    cfg : ChainConfig
    x_true, z_true : ndarray, optional
        Ground truth, used only for the PSNR trace.
    state : ModelState, optional
        Starting state; :func:`initialize` is used when omitted.
    """

    def __init__(self, y, psf, cfg, x_true=None, z_true=None, state=None):
        self.y = check_image(y, "y")
        self.psf = psf
        self.cfg = cfg
        self.scfg = cfg.sampler
        self.rng = np.random.default_rng(self.scfg.rng_seed)
        self.x_true = x_true
        self.z_true = z_true
        self.state = state if state is not None else initialize(
            self.y, psf, cfg.n_classes, self.rng)
        if self.state.n_classes != cfg.n_classes:
            raise ValueError("state and config disagree on the number of classes")
        self.state.theta = self.scfg.theta
        self.op = ConvOperator(psf, self.y.shape, lam=self.scfg.lam, sigma2=self.state.sigma2)
        self._w = None
        self.counters = {"alpha_accepted": np.zeros(cfg.n_classes, dtype=np.int64),
                         "empty_region_events": 0, "dfb_iterations": 0,
                         "dfb_not_converged": 0}

    # --- the five steps -------------------------------------------------
    def step_sigma2(self):
        st = self.state
        st.sigma2 = samplers.sample_sigma2(self.y, self.op.forward(st.x), self.rng)
        if not self.scfg.freeze_q_sigma2:
            self.op.refresh_sigma2(st.sigma2)

    def step_alpha(self):
        st = self.state
        for k in range(st.n_classes):
            try:
                a, acc = samplers.sample_alpha_k_mh(st.x, st.z, st.ggd.beta[k], st.ggd.alpha[k],
                                                    k + 1, self.scfg, self.rng)
            except EmptyRegionError:
                self.counters["empty_region_events"] += 1
                continue
            st.ggd.alpha[k] = a
            self.counters["alpha_accepted"][k] += acc

    def step_beta(self):
        st = self.state
        for k in range(st.n_classes):
            try:
                st.ggd.beta[k] = samplers.sample_beta_k(st.x, st.z, st.ggd.alpha[k], k + 1,
                                                        self.rng)
            except EmptyRegionError:
                self.counters["empty_region_events"] += 1

    def step_labels(self):
        st = self.state
        if st.n_classes == 1:
            return
        st.z = samplers.sample_labels_sweep(st.x, st.z, st.ggd, st.theta, self.rng,
                                            schedule=self.scfg.sweep)

    def step_trf(self):
        st = self.state
        if self.cfg.trf_sampler == "ppula":
            x, info = samplers.sample_trf_ppula(st, self.y, self.op, self.scfg, self.rng,
                                                w0=self._w)
            self._w = info.w
        else:
            x, info = samplers.sample_trf_pula(st, self.y, self.op, self.scfg, self.rng)
        self.counters["dfb_iterations"] += info.dfb_iterations
        self.counters["dfb_not_converged"] += not info.converged
        st.x = x

    STEPS = ("sigma2", "alpha", "beta", "labels", "trf")

    def iterate(self):
        for name in self.STEPS:
            self._current_step = name
            getattr(self, "step_" + name)()

    # --- driver ---------------------------------------------------------
    def run(self, progress=None):
        cfg = self.cfg
        st = self.state
        K = st.n_classes
        x_acc = _CompensatedMean()
        s2_acc, a_acc, b_acc = _CompensatedMean(), _CompensatedMean(), _CompensatedMean()
        label_counts = np.zeros((K,) + st.z.shape, dtype=np.int64)
        jump_sq, n_jumps = 0.0, 0
        prev_x = None
        samples = []
        trace = {"iteration": [], "sigma2": [], "theta": [], "isolated": [], "seconds": [],
                 "alpha": [], "beta": [], "psnr": []}
        theta_history = [(0, st.theta)]
        elapsed = 0.0
        for t in range(1, cfg.total_iters + 1):
            t0 = time.perf_counter()
            self._current_step = None
            try:
                self.iterate()
            except Exception as exc:
                diag = dict(self.counters, iterations_done=t - 1, elapsed=elapsed)
                raise ChainError(t, self._current_step, diag, exc) from exc
            elapsed += time.perf_counter() - t0

            if self.scfg.theta_target is not None and t <= cfg.burn_in \
                    and t % self.scfg.theta_every == 0:
                st.theta = samplers.tune_theta(st.theta, st.z, self.scfg.theta_target,
                                               self.scfg.theta_factor)
                theta_history.append((t, st.theta))

            if t > cfg.burn_in:
                x_acc.add(st.x)
                s2_acc.add(st.sigma2)
                a_acc.add(st.ggd.alpha)
                b_acc.add(st.ggd.beta)
                for k in range(K):
                    label_counts[k] += st.z == k + 1
                if prev_x is not None:
                    jump_sq += float(np.sum((st.x - prev_x) ** 2))
                    n_jumps += 1
                prev_x = st.x.copy()
                if cfg.store_samples and (t - cfg.burn_in - 1) % cfg.record_stride == 0:
                    samples.append(st.x.copy())

            trace["iteration"].append(t)
            trace["sigma2"].append(st.sigma2)
            trace["theta"].append(st.theta)
            trace["alpha"].append(st.ggd.alpha.copy())
            trace["beta"].append(st.ggd.beta.copy())
            trace["isolated"].append(isolated_point_fraction(st.z) if K > 1 else 0.0)
            trace["seconds"].append(elapsed)
            trace["psnr"].append(psnr(self.x_true, st.x) if self.x_true is not None else np.nan)
            if progress is not None:
                progress(t, self)

        n_post = cfg.total_iters - cfg.burn_in
        msj = float(np.sqrt(jump_sq / n_jumps)) if n_jumps else 0.0
        per_iter = elapsed / cfg.total_iters
        trace = {k: np.asarray(v) for k, v in trace.items()}
        diagnostics = dict(self.counters)
        diagnostics["alpha_acceptance"] = self.counters["alpha_accepted"] / cfg.total_iters
        diagnostics["theta_history"] = theta_history
        diagnostics["post_burn_in"] = n_post
        return ChainResult(
            x_mmse=x_acc.mean,
            z_map=1 + np.argmax(label_counts, axis=0),
            sigma2_mmse=float(s2_acc.mean),
            alpha_mmse=np.asarray(a_acc.mean),
            beta_mmse=np.asarray(b_acc.mean),
            msj=msj,
            wall_time_per_iter=per_iter,
            wall_time=elapsed,
            theta=st.theta,
            trace=trace,
            samples=samples,
            diagnostics=diagnostics,
        )


def run_chain(y, psf, cfg, x_true=None, z_true=None, state=None, progress=None):
    """Run a full chain and return its :class:`ChainResult`."""
    return GibbsSampler(y, psf, cfg, x_true=x_true, z_true=z_true, state=state).run(progress)
