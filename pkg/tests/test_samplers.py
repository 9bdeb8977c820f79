import numpy as np
import pytest
from scipy import stats

from _oracles import affine_chain_check, potts_enumeration
from ppula.model import GgdParams, ModelState, ggd_sample
from ppula.operators import ConvOperator, Psf
from ppula.prox import DfbConfig
from ppula.samplers import (EmptyRegionError, SamplerConfig, alpha_log_target,
                            isolated_point_fraction, label_log_likelihood,
                            label_probabilities, ppula_forward, pula_step_size,
                            sample_alpha_k_mh, sample_beta_k, sample_inverse_gamma,
                            sample_labels_sweep, sample_sigma2, sample_trf_ppula,
                            sample_trf_pula, tune_theta)

TIGHT = DfbConfig(max_iter=20000, tol=1e-12)


def _small_psf():
    return Psf(np.array([[0.05, 0.1, 0.05], [0.1, 0.4, 0.1], [0.05, 0.1, 0.05]]))


# --- inverse-gamma conditionals ------------------------------------------

def test_inverse_gamma_mean(rng):
    draws = sample_inverse_gamma(10.0, 5.0, rng, size=10 ** 6)
    assert draws.mean() == pytest.approx(5 / 9, rel=0.01)


def test_inverse_gamma_ks(rng):
    draws = sample_inverse_gamma(3.5, 2.0, rng, size=20000)
    assert stats.kstest(draws, stats.invgamma(3.5, scale=2.0).cdf).pvalue > 0.001


def test_sigma2_scale_equivariance(rng):
    y = rng.standard_normal((6, 7))
    hx = rng.standard_normal((6, 7))
    a = sample_sigma2(y, hx, np.random.default_rng(3))
    b = sample_sigma2(2.5 * y, 2.5 * hx, np.random.default_rng(3))
    assert b == pytest.approx(6.25 * a, rel=1e-12)


def test_sigma2_errors(rng):
    y = rng.standard_normal((4, 4))
    with pytest.raises(ValueError):
        sample_sigma2(y, y, rng)
    with pytest.raises(ValueError):
        sample_sigma2(y, y[:3], rng)


def test_sigma2_posterior_near_truth():
    rng = np.random.default_rng(0)
    hx = rng.standard_normal((128, 128))
    y = hx + np.sqrt(0.013) * rng.standard_normal(hx.shape)
    draws = [sample_sigma2(y, hx, rng) for _ in range(200)]
    assert np.mean(draws) == pytest.approx(0.013, rel=0.03)


def test_beta_gaussian_region():
    rng = np.random.default_rng(1)
    s = 0.7
    x = rng.normal(0, s, (200, 200))
    z = np.ones(x.shape, dtype=int)
    draws = [sample_beta_k(x, z, 2.0, 1, rng) for _ in range(100)]
    assert np.mean(draws) == pytest.approx(2 * s * s, rel=0.02)


def test_beta_scale_equivariance(rng):
    x = rng.standard_normal((10, 10))
    z = rng.integers(1, 3, x.shape)
    a = sample_beta_k(x, z, 1.3, 2, np.random.default_rng(8))
    b = sample_beta_k(3.0 * x, z, 1.3, 2, np.random.default_rng(8))
    assert b == pytest.approx(3.0 ** 1.3 * a, rel=1e-12)


def test_beta_empty_region(rng):
    with pytest.raises(EmptyRegionError):
        sample_beta_k(np.ones((3, 3)), np.ones((3, 3), dtype=int), 1.0, 2, rng)


# --- MH on the shape -----------------------------------------------------

class _ScriptedRng:
    """Feeds chosen increments to the MH step; uniforms come from a real generator."""

    def __init__(self, seed=0):
        self.inner = np.random.default_rng(seed)
        self.increment = 0.0

    def standard_normal(self, size=None):
        return self.increment

    def random(self, size=None):
        return self.inner.random(size)


def test_mh_rejects_outside_support(rng):
    x = rng.standard_normal((5, 5))
    z = np.ones((5, 5), dtype=int)
    cfg = SamplerConfig(mh_step=0.1)
    scripted = _ScriptedRng()
    scripted.increment = 1.0  # 2.95 -> 3.05
    a, acc = sample_alpha_k_mh(x, z, 1.0, 2.95, 1, cfg, scripted)
    assert (a, acc) == (2.95, False)
    scripted.increment = -10.0  # 0.5 -> -0.5
    assert sample_alpha_k_mh(x, z, 1.0, 0.5, 1, cfg, scripted) == (0.5, False)


def test_mh_three_point_target():
    # symmetric proposal among three lattice points; the chain must visit them
    # in proportion to exp(L(alpha))
    r = np.random.default_rng(2)
    x = ggd_sample(1.2, 1.0, r, size=(4, 5))
    z = np.ones(x.shape, dtype=int)
    points = np.array([1.0, 1.2, 1.5])
    logt = np.array([alpha_log_target(a, np.abs(x).ravel(), 1.0) for a in points])
    target = np.exp(logt - logt.max())
    target /= target.sum()
    cfg = SamplerConfig(mh_step=0.1)
    scripted = _ScriptedRng(5)
    state, counts = 0, np.zeros(3)
    for _ in range(100000):
        j = (state + 1 + r.integers(0, 2)) % 3
        scripted.increment = (points[j] - points[state]) / cfg.mh_step
        a, _ = sample_alpha_k_mh(x, z, 1.0, points[state], 1, cfg, scripted)
        state = int(np.argmin(np.abs(points - a)))
        counts[state] += 1
    np.testing.assert_allclose(counts / counts.sum(), target, atol=0.01)


def test_mh_recovers_shape():
    r = np.random.default_rng(4)
    x = ggd_sample(1.5, 1.0, r, size=(100, 100))
    z = np.ones(x.shape, dtype=int)
    cfg = SamplerConfig(mh_step=0.1)
    a, chain = 1.0, []
    for t in range(1500):
        a, _ = sample_alpha_k_mh(x, z, 1.0, a, 1, cfg, r)
        if t >= 500:
            chain.append(a)
    assert np.mean(chain) == pytest.approx(1.5, abs=0.15)


# --- labels --------------------------------------------------------------

def test_label_probabilities_theta_zero_frequencies():
    r = np.random.default_rng(6)
    x = r.normal(0, 1.5, (2, 3))
    ggd = GgdParams([1.5, 0.6], [1.0, 2.0])
    N = 40000
    z = sample_labels_sweep(np.broadcast_to(x, (N, 2, 3)), np.ones((N, 2, 3), dtype=int),
                            ggd, 0.0, r)
    freq2 = np.mean(z == 2, axis=0)
    p = label_probabilities(x, np.ones((2, 3), dtype=int), ggd, 0.0)
    # direct normalization of the two GGD factors, written out independently
    from scipy.special import gamma as G
    f = [np.exp(-np.abs(x) ** a / b) / (2 * b ** (1 / a) * G(1 + 1 / a))
         for a, b in zip(ggd.alpha, ggd.beta)]
    np.testing.assert_allclose(p[1], f[1] / (f[0] + f[1]), rtol=1e-12)
    np.testing.assert_allclose(freq2, p[1], atol=0.01)


def test_label_energy_dominance():
    x = np.full((3, 3), 30.0)
    ggd = GgdParams([2.0, 2.0], [0.1, 100.0])
    p = label_probabilities(x, np.ones((3, 3), dtype=int), ggd, 1.0)
    np.testing.assert_allclose(p[1], 1.0)


def test_identical_classes_uniform(rng):
    ggd = GgdParams([1.2, 1.2, 1.2], [2.0, 2.0, 2.0])
    p = label_probabilities(rng.standard_normal((4, 4)), rng.integers(1, 4, (4, 4)), ggd, 0.0)
    np.testing.assert_allclose(p, 1 / 3, rtol=1e-14)


def test_neighbour_term_omits_border(rng):
    # with flat likelihood, the corner sees two neighbours and an interior pixel four
    z = np.full((3, 3), 2)
    ggd = GgdParams([1.0, 1.0], [1.0, 1.0])
    p = label_probabilities(np.zeros((3, 3)), z, ggd, 0.7)
    assert p[1, 0, 0] == pytest.approx(np.exp(1.4) / (1 + np.exp(1.4)))
    assert p[1, 1, 1] == pytest.approx(np.exp(2.8) / (1 + np.exp(2.8)))
    assert p[1, 0, 1] == pytest.approx(np.exp(2.1) / (1 + np.exp(2.1)))


@pytest.mark.parametrize("schedule,n_chains,sweeps,tv", [("checkerboard", 2000, 60, 0.04),
                                                         ("raster", 1, 20000, 0.06)])
def test_potts_sweep_invariant_distribution(schedule, n_chains, sweeps, tv):
    r = np.random.default_rng(7)
    x = r.normal(0, 1, (2, 3))
    ggd = GgdParams([1.5, 0.6], [1.0, 1.0])
    theta = 0.8
    configs, probs = potts_enumeration(label_log_likelihood(x, ggd), theta)
    code = lambda z: np.sum((z.reshape(z.shape[0], -1) - 1) * (2 ** np.arange(5, -1, -1)),
                            axis=1)
    counts = np.zeros(probs.size)
    if schedule == "checkerboard":
        z = np.ones((n_chains, 2, 3), dtype=int)
        xb = np.broadcast_to(x, z.shape)
        for t in range(sweeps):
            z = sample_labels_sweep(xb, z, ggd, theta, r)
            if t >= 10:
                np.add.at(counts, code(z), 1)
    else:
        z = np.ones((2, 3), dtype=int)
        for t in range(sweeps):
            z = sample_labels_sweep(x, z, ggd, theta, r, schedule="raster")
            counts[code(z[None])[0]] += 1
    assert np.array_equal(code(configs), np.arange(probs.size))
    assert 0.5 * np.abs(counts / counts.sum() - probs).sum() < tv


def test_tune_theta_rule():
    noisy = np.random.default_rng(0).integers(1, 3, (20, 20))
    assert tune_theta(2.0, noisy, 0.05) == pytest.approx(2.1)
    flat = np.ones((20, 20), dtype=int)
    assert tune_theta(2.0, flat, 0.05) == pytest.approx(2.0 / 1.05)
    frac = isolated_point_fraction(noisy)
    assert tune_theta(2.0, noisy, frac) == pytest.approx(2.0 / 1.05)


def test_isolated_fraction_decreases_with_theta():
    r = np.random.default_rng(11)
    x = r.normal(0, 1, (48, 48))
    ggd = GgdParams([1.0, 1.0], [1.0, 1.0])
    fracs = []
    for theta in (0.0, 1.0, 5.0):
        z = r.integers(1, 3, x.shape)
        vals = []
        for t in range(150):
            z = sample_labels_sweep(x, z, ggd, theta, r)
            if t >= 100:
                vals.append(isolated_point_fraction(z))
        fracs.append(np.mean(vals))
    assert fracs[0] > fracs[1] > fracs[2]
    assert fracs[2] < 0.01


# --- reflectivity --------------------------------------------------------

def _state(x, alpha, beta, sigma2):
    return ModelState(x, np.ones(x.shape, dtype=int), GgdParams([alpha], [beta]), sigma2)


def test_ppula_zero_penalty_is_preconditioned_gradient_step(rng):
    x = rng.standard_normal((12, 10))
    y = rng.standard_normal((12, 10))
    op = ConvOperator(_small_psf(), x.shape, lam=0.1, sigma2=0.3)
    cfg = SamplerConfig(gamma=0.09, dfb=TIGHT)
    out, _ = sample_trf_ppula(_state(x, 2.0, 1e300, 0.3), y, op, cfg, rng, noise=False)
    want = x - (0.09 / 0.3) * op.apply_q(op.adjoint(op.forward(x) - y))
    np.testing.assert_allclose(out, want, atol=1e-10)
    np.testing.assert_allclose(ppula_forward(x, y, op, 0.09, 0.3), want, atol=1e-12)


def test_ppula_identity_operator_fixed_point(rng):
    y = rng.standard_normal((8, 8))
    x = rng.standard_normal((8, 8))
    op = ConvOperator(Psf.delta(1), x.shape, lam=0.0, sigma2=1.0)
    np.testing.assert_allclose(ppula_forward(x, y, op, 0.3, 1.0), x - 0.3 * (x - y), atol=1e-12)
    np.testing.assert_allclose(ppula_forward(y, y, op, 0.3, 1.0), y, atol=1e-12)


def test_ppula_equals_pula_for_flat_spectrum(rng):
    x = rng.standard_normal((10, 10))
    y = rng.standard_normal((10, 10))
    sigma2, lam, gamma = 0.5, 0.25, 0.09
    op = ConvOperator(Psf.delta(1), x.shape, lam=lam, sigma2=sigma2)
    q = sigma2 / (1 + lam)
    cfg = SamplerConfig(gamma=gamma, dfb=TIGHT)
    st = _state(x, 1.5, 0.8, sigma2)
    a, _ = sample_trf_ppula(st, y, op, cfg, np.random.default_rng(9))
    b, _ = sample_trf_pula(st, y, op, cfg, np.random.default_rng(9), gamma=gamma * q)
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_pula_step_size():
    op = ConvOperator(_small_psf(), (16, 16))
    assert pula_step_size(op, 0.2) == pytest.approx(1.99 * 0.2 / op.spectral_norm() ** 2)


def test_pula_gaussian_stationary_law():
    r = np.random.default_rng(12)
    shape = (8, 8)
    sigma2, beta = 1.0, 1.0
    op = ConvOperator(_small_psf(), shape, sigma2=sigma2)
    y = r.standard_normal(shape)
    gamma = pula_step_size(op, sigma2)
    cfg = SamplerConfig()
    st = _state(np.zeros(shape), 2.0, beta, sigma2)
    burn, N = 200, 20000
    samples = np.empty((N,) + shape)
    for t in range(burn + N):
        st.x, _ = sample_trf_pula(st, y, op, cfg, r)
        if t >= burn:
            samples[t - burn] = st.x
    # centred 3x3 kernel, zero-padded and rolled so its centre sits at the origin
    h = np.fft.fft2(np.roll(np.pad(_small_psf().kernel, ((0, 5), (0, 5))), (-1, -1), (0, 1)))
    shrink = 1.0 + 2.0 * gamma / beta
    M = (1.0 - gamma * np.abs(h) ** 2 / sigma2) / shrink
    m = gamma / sigma2 * np.conj(h) * np.fft.fft2(y) / shrink
    c2 = np.full(shape, 2.0 * gamma)
    chi2, dof, rel = affine_chain_check(samples, M, m, c2)
    assert chi2 <= dof + 3 * np.sqrt(2 * dof)
    assert np.max(np.abs(rel)) < 0.1


def test_ppula_small_step_descends(rng):
    shape = (16, 16)
    op = ConvOperator(_small_psf(), shape, lam=0.1, sigma2=0.05)
    xt = rng.standard_normal(shape)
    y = op.forward(xt) + 0.2 * rng.standard_normal(shape)
    alpha = np.where(rng.random(shape) < 0.5, 1.0, 1.7)
    for gamma in (0.01, 0.09):
        st = ModelState(np.zeros(shape), np.where(alpha == 1.0, 1, 2),
                        GgdParams([1.0, 1.7], [0.5, 2.0]), 0.05)
        cfg = SamplerConfig(gamma=gamma, dfb=TIGHT)
        obj = []
        w = None
        for _ in range(60):
            a, b = st.ggd.alpha[st.z - 1], st.ggd.beta[st.z - 1]
            obj.append(np.sum((y - op.forward(st.x)) ** 2) / (2 * 0.05)
                       + np.sum(np.abs(st.x) ** a / b))
            st.x, info = sample_trf_ppula(st, y, op, cfg, rng, noise=False, w0=w)
            w = info.w
        assert np.all(np.diff(obj) <= 1e-8 * np.abs(obj[:-1]))
        assert obj[-1] < obj[0]


def test_ppula_reproducible():
    shape = (12, 12)
    y = np.random.default_rng(0).standard_normal(shape)
    op = ConvOperator(_small_psf(), shape, sigma2=0.1)
    outs = []
    for _ in range(2):
        r = np.random.default_rng(42)
        st = _state(np.zeros(shape), 0.6, 1.0, 0.1)
        for _ in range(5):
            st.x, _ = sample_trf_ppula(st, y, op, SamplerConfig(), r)
        outs.append(st.x)
    np.testing.assert_array_equal(outs[0], outs[1])


def test_sampler_config_validation():
    for kwargs in (dict(gamma=0), dict(lam=-1), dict(mh_step=0), dict(theta=-1),
                   dict(theta_target=1.5), dict(sweep="spiral")):
        with pytest.raises(ValueError):
            SamplerConfig(**kwargs)
