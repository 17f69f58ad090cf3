import numpy as np
import pytest

from conftest import assert_within_se, desk_model
from dyngordon.measures import (bond_price, forward_adjust, girsanov_kernel, intercept, rate_selector,
                                risk_neutral_intercepts, step_risk_neutral)
from dyngordon.model import ModelSpec, RegimePath, conditional_moments, log_gain, var1_matrices
from dyngordon.montecarlo import SimConfig, simulate


def one_asset(Sigma, Ck=0.05, Cy=(0.0, 0.0), mu=0.0, T=3, rate=0.01):
    return ModelSpec(Ck=[[[Ck]]], Cy=[np.asarray(Cy, float)[:, None]], Sigma=[Sigma], P=[[1.0]], p1=[1.0],
                     psi_k=np.ones((T, 1)), psi_y=np.ones((T, 1)), x0=[np.log(50.0), 0.0, rate],
                     mu=np.full((T, 1), mu))


def test_kernel_vanishes_when_drift_is_risk_neutral():
    S = np.array([[0.04, 0.001, 0.0], [0.001, 0.01, 0.0], [0.0, 0.0, 1e-4]])
    r = 0.01
    m = one_asset(S, Ck=r - 0.5 * 0.04)
    assert np.allclose(girsanov_kernel(m, 1, 0, r), 0.0, atol=1e-16)


def test_kernel_lower_block_zero_without_coupling():
    m = one_asset(np.diag([0.04, 0.01, 1e-4]))
    theta = girsanov_kernel(m, 1, 0, 0.03)
    assert np.array_equal(theta[1:], [0.0, 0.0])


def test_kernel_scalar_value():
    m = one_asset(np.diag([0.04, 0.01, 1e-4]), Ck=0.05, mu=0.0)
    assert girsanov_kernel(m, 1, 0, 0.01)[0] == pytest.approx(2 * (0.01 - 0.05 - 0.02), abs=1e-15)
    assert girsanov_kernel(m, 1, 0, 0.01)[0] == pytest.approx(-0.12, abs=1e-15)


def test_kernel_links_the_two_measures(desk):
    # real-measure shock = risk-neutral shock scaled by Gm plus the kernel
    rng = np.random.default_rng(0)
    x_prev = desk.x0
    xi_q = rng.normal(size=desk.ntil) * 0.05
    x = step_risk_neutral(desk, x_prev, 1, xi_q, 1)
    v = var1_matrices(desk, 1, 1, "real")
    theta = girsanov_kernel(desk, 1, 1, x_prev[-1])
    xi_p = np.linalg.solve(v.Gm, v.Gm @ xi_q + theta)
    from dyngordon.model import step_real
    assert np.allclose(step_real(desk, x_prev, 1, xi_p, 1), x, atol=1e-13)


def test_log_gross_return_identity(desk):
    rng = np.random.default_rng(4)
    x_prev = desk.x0 + rng.normal(size=desk.ntil) * 0.02
    n = desk.n
    for s in range(desk.N):
        shock = rng.normal(size=(50, desk.ntil)) * 0.1
        x = step_risk_neutral(desk, np.broadcast_to(x_prev, shock.shape), s, shock, 2)
        lhs = log_gain(x_prev, x, desk.lin, 2)
        rhs = x_prev[-1] - 0.5 * np.diag(desk.sigma_uu(s)) + shock[:, :n]
        assert np.allclose(lhs, rhs, atol=1e-10)


def test_expected_gross_return_is_the_rate(desk):
    M = 100_000
    ens = simulate(desk, SimConfig(M, seed=3), horizon=2)
    gain = np.exp(log_gain(ens.at(1), ens.at(2), desk.lin, 2))
    expect = np.exp(ens.at(1)[:, -1])[:, None]
    ratio = gain / expect
    assert_within_se(ratio.mean(0), np.ones(desk.n), ratio.std(0, ddof=1) / np.sqrt(M))


def test_dividends_and_rate_frozen_without_drift_or_shocks():
    m = one_asset(np.diag([0.04, 0.01, 1e-4]), Cy=(0.0, 0.0))
    x = m.x0
    for t in range(1, 4):
        x_new = step_risk_neutral(m, x, 0, np.zeros(3), t)
        assert np.array_equal(x_new[1:], x[1:])
        x = x_new
    assert np.array_equal(risk_neutral_intercepts(m, 1, 0).nu_y, [0.0, 0.0])


def test_forward_adjust_next_period_is_identity(desk):
    cm = conditional_moments(desk, 0, desk.x0, RegimePath((0, 1, 1)))
    fm = forward_adjust(cm, 1)
    assert np.array_equal(fm.mu_hat_c, cm.mu_c)
    assert not rate_selector(cm, 1).any()


def test_forward_adjust_keeps_covariance(desk):
    cm = conditional_moments(desk, 0, desk.x0, RegimePath((0, 1, 1)))
    fm = forward_adjust(cm, 3)
    assert fm.Sigma_c is cm.Sigma_c
    assert np.array_equal(fm.cov(2), cm.cov(2))


def _deterministic_rate_model():
    S = np.diag([0.04, 0.01, 1e-30])
    return one_asset(S, Cy=(0.0, 0.0005))


def test_shift_vanishes_with_deterministic_rates():
    m = _deterministic_rate_model()
    cm = conditional_moments(m, 0, m.x0, RegimePath((0, 0, 0)))
    fm = forward_adjust(cm, 3)
    assert np.allclose(fm.mu_hat_c, cm.mu_c, atol=1e-25)


def test_bond_next_period(desk):
    for t, x in ((0, desk.x0), (1, desk.x0 + 0.01)):
        cm = conditional_moments(desk, t, x, RegimePath((0, 1, 1)[t:], start=t + 1))
        assert bond_price(cm, t + 1) == np.exp(-x[-1])


def test_bond_with_deterministic_rates():
    m = _deterministic_rate_model()
    cm = conditional_moments(m, 0, m.x0, RegimePath((0, 0, 0)))
    r0 = m.x0[-1]
    expect = np.exp(-r0 - (r0 + 0.0005) - (r0 + 0.001))
    assert bond_price(cm, 3) == pytest.approx(expect, rel=1e-14)


def test_bond_is_invariant_to_stacking_order(desk):
    cm = conditional_moments(desk, 0, desk.x0, RegimePath((1, 0, 1)))
    # reassemble from per-period blocks in reversed order
    periods = [2, 1]
    mean = sum(cm.mean(b)[-1] for b in periods)
    var = sum(cm.cov(b1, b2)[-1, -1] for b1 in periods for b2 in reversed(periods))
    B = np.exp(-desk.x0[-1] - mean + 0.5 * var)
    assert bond_price(cm, 3) == pytest.approx(B, rel=1e-14)


def test_bond_against_simulation():
    m = desk_model()
    path = RegimePath((0, 1, 1))
    cm = conditional_moments(m, 0, m.x0, path)
    ens = simulate(m, SimConfig(1_000_000, seed=21), regimes=path)
    D = ens.disc(3)
    assert_within_se(D.mean(), bond_price(cm, 3), D.std(ddof=1) / np.sqrt(D.size))


def test_forward_measure_change_of_numeraire():
    m = desk_model()
    path = RegimePath((1, 1, 0))
    cm = conditional_moments(m, 0, m.x0, path)
    fm = forward_adjust(cm, 3)
    n = m.n
    M = 400_000
    ens = simulate(m, SimConfig(M, seed=8), regimes=path)
    payoff = ens.disc(3)[:, None] * np.exp(ens.at(3)[:, :n])
    fwd = np.exp(fm.mean(3)[:n] + 0.5 * np.diag(cm.cov(3))[:n])
    assert_within_se(payoff.mean(0), bond_price(cm, 3) * fwd, payoff.std(0, ddof=1) / np.sqrt(M))


def test_risk_neutral_shocks_have_the_model_covariance(desk):
    M = 200_000
    s = 1
    ens = simulate(desk, SimConfig(M, seed=5), regimes=RegimePath((s, s, s)), horizon=1)
    v = var1_matrices(desk, 1, s)
    x0, x1 = ens.at(0), ens.at(1)
    rhs = x1 @ v.Q0.T - intercept(desk, 1, s) - x0 @ v.Q1.T
    xi = np.linalg.solve(v.Gm, rhs.T).T
    Z = xi[:, :, None] * xi[:, None, :]
    assert_within_se(xi.mean(0), np.zeros(desk.ntil), xi.std(0, ddof=1) / np.sqrt(M))
    assert_within_se(Z.mean(0), desk.Sigma[s], Z.std(0, ddof=1) / np.sqrt(M))


def test_discounted_gain_martingale(desk):
    M = 200_000
    t = 1
    x_t = desk.x0 + np.r_[0.02, -0.01, 0.0, 0.0, 0.003]
    ens = simulate(desk, SimConfig(M, seed=12), t=t, x_t=x_t, start_probs=0)
    n = desk.n
    from dyngordon.hedging import total_payoff
    val = ens.disc(t + 1)[:, None] * total_payoff(desk, ens.at(t), ens.at(t + 1), t + 1)
    assert_within_se(val.mean(0), np.exp(x_t[:n]), val.std(0, ddof=1) / np.sqrt(M))
