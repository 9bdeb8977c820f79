import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from _oracles import grid_global_min_1d, random_spd, scalar_prox_oracle, \
    weighted_l1_prox_metric_oracle
from ppula.prox import (DfbConfig, SeparablePotential, dfb_prox_metric, mm_prox_nonconvex,
                        penalty, prox_power, prox_power_scalar, prox_separable,
                        surrogate_potential, surrogate_value)

TIGHT = DfbConfig(max_iter=100000, tol=1e-13)


# --- scalar prox ---------------------------------------------------------

def test_scalar_prox_examples():
    assert prox_power_scalar(2.0, 0.5, 1.0) == pytest.approx(1.5, abs=1e-15)
    assert prox_power_scalar(3.0, 1.0, 2.0) == pytest.approx(1.0, abs=1e-15)
    for a in (1.0, 1.2, 4 / 3, 1.5, 2.0, 2.7, 3.0):
        assert prox_power_scalar(0.0, 3.0, a) == 0.0
    assert prox_power_scalar(2.0, 1.0, 1.5) == pytest.approx(
        scalar_prox_oracle(2.0, 1.0, 1.5), abs=1e-8)


@pytest.mark.parametrize("a", [4 / 3, 1.5, 3.0, 2.0, 1.0])
def test_closed_forms_match_bisection(a, rng):
    s = rng.uniform(-20, 20, 2000)
    c = rng.uniform(0, 5, 2000)
    np.testing.assert_allclose(prox_power(s, c, a), prox_power(s, c, a, method="bisect")
                               if a != 1.0 else np.sign(s) * np.maximum(np.abs(s) - c, 0),
                               atol=1e-8)


@pytest.mark.parametrize("a", [1.05, 1.3, 1.7, 2.4, 2.95])
def test_newton_matches_bisection(a, rng):
    s = rng.uniform(-50, 50, 2000)
    c = rng.uniform(0, 10, 2000)
    np.testing.assert_allclose(prox_power(s, c, a, method="newton"),
                               prox_power(s, c, a, method="bisect"), atol=1e-10, rtol=1e-12)


def test_scalar_prox_stationarity(rng):
    for _ in range(200):
        s, c, a = rng.uniform(-10, 10), rng.uniform(0.01, 5), rng.uniform(1.01, 3)
        t = prox_power_scalar(s, c, a)
        assert abs(t - s + c * a * np.sign(t) * abs(t) ** (a - 1)) <= 1e-9 * (1 + abs(s))


def test_scalar_prox_invalid():
    with pytest.raises(ValueError):
        prox_power_scalar(1.0, -0.1, 2.0)
    with pytest.raises(ValueError):
        prox_power_scalar(1.0, 1.0, 0.9)


@given(st.floats(-100, 100), st.floats(-100, 100), st.floats(0, 10), st.floats(1, 3))
def test_scalar_prox_monotone_and_odd(s1, s2, c, a):
    lo, hi = min(s1, s2), max(s1, s2)
    assert prox_power_scalar(lo, c, a) <= prox_power_scalar(hi, c, a) + 1e-12
    assert prox_power_scalar(-s1, c, a) == -prox_power_scalar(s1, c, a)
    t = prox_power_scalar(s1, c, a)
    assert abs(t) <= abs(s1) and (t == 0 or np.sign(t) == np.sign(s1))


# --- separable prox ------------------------------------------------------

def test_separable_zero_weights_identity(rng):
    x = rng.standard_normal(7)
    np.testing.assert_array_equal(prox_separable(x, SeparablePotential(0.0, 1.7, x.shape)), x)


def test_separable_mixed_powers_match_scalar_oracle():
    x = np.array([2.0, -1.5, 0.7, -4.0])
    w = np.array([0.5, 1.0, 0.2, 2.0])
    p = np.array([1.0, 1.5, 2.5, 3.0])
    got = prox_separable(x, SeparablePotential(w, p))
    want = [scalar_prox_oracle(*args) for args in zip(x, w, p)]
    np.testing.assert_allclose(got, want, atol=1e-8)


def test_separable_dimension_mismatch():
    with pytest.raises(ValueError):
        prox_separable(np.zeros(3), SeparablePotential(np.ones(4), 1.0))
    with pytest.raises(ValueError):
        SeparablePotential(-1.0, 1.0, (2,))
    with pytest.raises(ValueError):
        SeparablePotential(1.0, 0.5, (2,))


@given(st.integers(0, 10 ** 6))
def test_separable_nonexpansive(seed):
    r = np.random.default_rng(seed)
    pot = SeparablePotential(r.uniform(0, 3, 10), r.uniform(1, 3, 10))
    x, y = r.normal(0, 5, (2, 10))
    assert np.linalg.norm(pot.prox(x) - pot.prox(y)) <= np.linalg.norm(x - y) + 1e-12


# --- DFB -----------------------------------------------------------------

def _apply(Q):
    return lambda v: Q @ v


def _prox_objective(u, x, Q, pot):
    d = u - x
    return 0.5 * d @ np.linalg.solve(Q, d) + pot.value(u)


def test_dfb_identity_metric_matches_separable(rng):
    x = rng.normal(0, 3, 12)
    pot = SeparablePotential(rng.uniform(0, 2, 12), rng.uniform(1, 3, 12))
    res = dfb_prox_metric(x, lambda v: v, 1.0, pot)
    assert res.converged
    np.testing.assert_allclose(res.u, pot.prox(x), atol=1e-6)


def test_dfb_diagonal_metric_example():
    Q = np.diag([1.0, 4.0])
    res = dfb_prox_metric(np.array([2.0, 2.0]), _apply(Q), 4.0,
                          SeparablePotential(0.5, 1.0, (2,)), TIGHT)
    np.testing.assert_allclose(res.u, [1.5, 0.0], atol=1e-10)


def test_dfb_dense_metric_matches_face_enumeration(rng):
    for _ in range(5):
        Q = random_spd(rng, 8)
        x = rng.normal(0, 2, 8)
        w = rng.uniform(0, 1.5, 8)
        res = dfb_prox_metric(x, _apply(Q), np.linalg.norm(Q, 2),
                              SeparablePotential(w, 1.0), TIGHT)
        np.testing.assert_allclose(res.u, weighted_l1_prox_metric_oracle(x, Q, w), atol=1e-5)


def test_dfb_reports_nonconvergence(rng):
    Q = random_spd(rng, 8, cond=1e4)
    res = dfb_prox_metric(rng.normal(0, 2, 8), _apply(Q), np.linalg.norm(Q, 2),
                          SeparablePotential(1.0, 1.0, (8,)), DfbConfig(max_iter=2, tol=1e-14))
    assert not res.converged and res.iterations == 2 and res.residual >= 0


def test_dfb_step_window():
    for q_norm in (1e-3, 0.5, 1.0, 7.0, 1e4):
        rho = 1.0 / q_norm
        eps = min(1.0, rho) / 100
        for frac in (1e-6, 0.5, 0.95, 1.0):
            eta = DfbConfig(eta_fraction=frac).step(q_norm)
            assert eps <= eta <= 2 * rho - eps
    assert DfbConfig().step(1.0) == pytest.approx(1.9)


@given(st.integers(0, 10 ** 6))
def test_dfb_objective_below_input_and_firm_nonexpansive(seed):
    r = np.random.default_rng(seed)
    Q = random_spd(r, 6)
    pot = SeparablePotential(r.uniform(0, 2, 6), r.choice([1.0, 1.5, 2.0], 6))
    qn = np.linalg.norm(Q, 2)
    x, y = r.normal(0, 3, (2, 6))
    px = dfb_prox_metric(x, _apply(Q), qn, pot, TIGHT).u
    py = dfb_prox_metric(y, _apply(Q), qn, pot, TIGHT).u
    assert _prox_objective(px, x, Q, pot) <= _prox_objective(x, x, Q, pot) + 1e-9
    P = np.linalg.inv(Q)
    d = px - py
    # firm nonexpansiveness in the Q^-1 inner product
    assert d @ P @ d <= d @ P @ (x - y) + 1e-7


# --- MM ------------------------------------------------------------------

def test_mm_all_convex_single_pass_equals_dfb(rng):
    Q = random_spd(rng, 8)
    x = rng.normal(0, 2, 8)
    alpha = rng.choice([1.0, 1.5, 2.0], 8)
    beta = rng.uniform(0.5, 2, 8)
    qn = np.linalg.norm(Q, 2)
    calls = []
    mm = mm_prox_nonconvex(x, _apply(Q), qn, 0.7, alpha, beta, mm_iters=5,
                           callback=lambda q, u: calls.append(q))
    direct = dfb_prox_metric(x, _apply(Q), qn, SeparablePotential(0.7 / beta, alpha))
    np.testing.assert_array_equal(mm.u, direct.u)
    assert calls == [0, 1]


def test_mm_origin_fixed_point():
    out = mm_prox_nonconvex(np.zeros(5), None, 1.0, 1.0, 0.5, 1.0).u
    np.testing.assert_array_equal(out, 0.0)
    Q = np.eye(5) * 2
    out = mm_prox_nonconvex(np.zeros(5), _apply(Q), 2.0, 1.0, [0.5, 0.6, 1.5, 2, 0.5], 1.0).u
    np.testing.assert_allclose(out, 0.0, atol=1e-15)


def test_mm_scalar_example_matches_grid():
    f = lambda u: 0.5 * (u - 3.0) ** 2 + np.abs(u) ** 0.5
    want = grid_global_min_1d(f)
    got = mm_prox_nonconvex(np.array([3.0]), None, 1.0, 1.0, 0.5, 1.0, mm_iters=200).u[0]
    assert got == pytest.approx(want, abs=1e-4)


def test_mm_invalid_parameters():
    x = np.ones(3)
    for kwargs in (dict(gamma=0.0, alpha=1.0, beta=1.0), dict(gamma=1.0, alpha=0.0, beta=1.0),
                   dict(gamma=1.0, alpha=3.5, beta=1.0), dict(gamma=1.0, alpha=1.0, beta=0.0)):
        with pytest.raises(ValueError):
            mm_prox_nonconvex(x, None, 1.0, **kwargs)
    with pytest.raises(ValueError):
        mm_prox_nonconvex(x, None, 1.0, 1.0, 0.5, 1.0, mm_iters=0)


def test_literal_zero_rule_leaves_zeros_unpenalized():
    pot = surrogate_potential(1.0, np.array([0.5, 0.5]), 1.0, np.array([0.0, 2.0]),
                              literal_zero_rule=True)
    assert pot.weight[0] == 0.0 and pot.weight[1] == pytest.approx(0.5 * 2 ** -0.5)
    pot = surrogate_potential(1.0, np.array([0.5]), 1.0, np.array([0.0]))
    assert pot.weight[0] == pytest.approx(0.5 * 1e-10 ** -0.5)


@given(st.integers(0, 10 ** 6))
def test_surrogate_majorizes_penalty(seed):
    r = np.random.default_rng(seed)
    n = 10
    alpha = r.choice([0.3, 0.5, 0.6, 0.9, 1.5, 2.0], n)
    beta = r.uniform(0.2, 3, n)
    v = np.abs(r.normal(0, 2, n)) + 1e-3
    u = r.normal(0, 3, n)
    assert surrogate_value(u, alpha, beta, v) >= penalty(u, alpha, beta) - 1e-10
    assert surrogate_value(v, alpha, beta, v) == pytest.approx(penalty(v, alpha, beta),
                                                               rel=1e-12)
    assume(True)


@given(st.integers(0, 10 ** 6))
def test_mm_descent_euclidean(seed):
    r = np.random.default_rng(seed)
    n = 20
    x = r.normal(0, 3, n)
    alpha = r.choice([0.3, 0.5, 0.6, 1.5, 2.0], n)
    beta = r.uniform(0.2, 3, n)
    gamma = r.uniform(0.05, 2)
    F = []
    mm_prox_nonconvex(x, None, 1.0, gamma, alpha, beta, mm_iters=15,
                      callback=lambda q, u: F.append(0.5 * np.sum((u - x) ** 2)
                                                     + gamma * penalty(u, alpha, beta)))
    assert np.all(np.diff(F) <= 1e-10)
