"""Locally risk-minimizing hedges: second moments, claim covariances and share/cash plans.

Discounting follows the rate convention of :mod:`dyngordon.model`: the rate
component ``rho_t`` of ``x_t`` is earned over ``(t, t+1]``, so the discount
factor ``D_{t+1} = D_t exp(-rho_t)`` is known at ``t``.  The discounted total
payoff over period ``t+1`` is then

    Pbar_{t+1} + dbar_{t+1} = D_t exp(pi),
    pi = G^{-1} logP_{t+1} + (I - G^{-1}) logd_{t+1} + G^{-1} h_{t+1} - rho_t,

whose random part loads on ``x_{t+1}`` only through its price and dividend
blocks.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import DegenerateError, InputError, NumericalError
from .insurance import MortalityTable, ProductSpec, benefit_weights, premium_from_moments, survival_factors
from .kernels import DEGENERATE_VAR, norm_cdf, psi_minus, psi_plus
from .measures import bond_price, forward_adjust
from .model import ConditionalMoments, ModelSpec, RegimePath, conditional_moments, log_gain
from .pricing import OptionSpec, _anchor, forward_price_law, price_from_moments
from .regimes import MAX_PATHS, mixture_paths

__all__ = [
    "ZeroCouponClaim",
    "HedgePlan",
    "HedgeStep",
    "PiPhiMoments",
    "w_matrix",
    "pi_phi_moments",
    "omega_bar_conditional",
    "omega_mixture",
    "claim_value",
    "claim_horizon",
    "lambda_conditional",
    "lambda_mixture",
    "hedge_step",
    "replay_hedge",
    "discount_factors",
    "total_payoff",
]

COND_WARN = 1e12


@dataclass(frozen=True)
class ZeroCouponClaim:
    """Deterministic amount ``amount`` paid at ``maturity``."""

    maturity: int
    amount: float = 1.0


def claim_horizon(claim) -> int:
    return claim.T if isinstance(claim, ProductSpec) else claim.maturity


# --------------------------------------------------------------------------- #
# Discounting helpers
# --------------------------------------------------------------------------- #

def discount_factors(history) -> np.ndarray:
    """``D_0..D_t`` along an observed path of states ``x_0..x_t``."""
    history = np.atleast_2d(np.asarray(history, dtype=float))
    rates = history[:-1, -1]
    return np.exp(-np.concatenate([[0.0], np.cumsum(rates)]))


def total_payoff(model: ModelSpec, x_prev, x, t: int) -> np.ndarray:
    """Model payoff ``P_t + d_t`` = ``P_{t-1}`` times the linearized gross return."""
    n = model.n
    x_prev = np.asarray(x_prev, dtype=float)
    return np.exp(x_prev[..., :n] + log_gain(x_prev, x, model.lin, t))


# --------------------------------------------------------------------------- #
# Moments of pi and phi
# --------------------------------------------------------------------------- #

def w_matrix(model: ModelSpec, t1: int) -> np.ndarray:
    """``[G^{-1} : I - G^{-1} : -i_n]`` for period ``t1``."""
    n = model.n
    ginv = 1.0 / model.lin.g[t1 - 1]
    return np.hstack([np.diag(ginv), np.diag(1.0 - ginv), -np.ones((n, 1))])


@dataclass(frozen=True, eq=False)
class PiPhiMoments:
    """Forward-measure moments of ``pi`` and of ``phi_i = pi + (e_i' logP_u) i_n``.

    ``W`` is the period-``t+1`` matrix ``[G^{-1} : I - G^{-1} : -i_n]``; its
    rate column acts on the rate already known at ``t``, so only the price and
    dividend columns (``W0``) carry randomness.
    """

    t: int
    u: int
    W: np.ndarray
    W0: np.ndarray
    mu_pi: np.ndarray
    S_pi: np.ndarray
    S_pi_Pk: np.ndarray
    mu_P: np.ndarray
    S_P: np.ndarray
    cm: ConditionalMoments

    def cross(self, k: int) -> np.ndarray:
        """``Cov(pi, logP_k)`` for any ``t < k <= cm.last``."""
        n = self.mu_pi.shape[0]
        return self.W0 @ self.cm.cov(self.t + 1, k)[:, :n]

    def mu_phi(self, i: int) -> np.ndarray:
        return self.mu_pi + self.mu_P[i]

    def S_phi(self, i: int) -> np.ndarray:
        n = self.mu_pi.shape[0]
        c = self.S_pi_Pk[:, i]
        one = np.ones(n)
        return self.S_pi + np.outer(c, one) + np.outer(one, c) + self.S_P[i, i] * np.outer(one, one)


def pi_phi_moments(model: ModelSpec, cm: ConditionalMoments, u: int) -> PiPhiMoments:
    n = model.n
    t1 = cm.t + 1
    W = w_matrix(model, t1)
    W0 = W.copy()
    W0[:, -1] = 0.0
    fm = forward_adjust(cm, u)
    rho_t = float(cm.x_t[-1])
    shift = model.lin.h[t1 - 1] / model.lin.g[t1 - 1] - rho_t
    mu_pi = W0 @ fm.mean(t1) + shift
    S = cm.cov(t1)
    S_pi = W0 @ S @ W0.T
    S_pi = 0.5 * (S_pi + S_pi.T)
    S_pi_Pk = W0 @ cm.cov(t1, u)[:, :n]
    return PiPhiMoments(t=cm.t, u=u, W=W, W0=W0, mu_pi=mu_pi, S_pi=S_pi, S_pi_Pk=S_pi_Pk,
                        mu_P=fm.mean(u)[:n].copy(), S_P=cm.cov(u)[:n, :n].copy(), cm=cm)


# --------------------------------------------------------------------------- #
# Omega bar
# --------------------------------------------------------------------------- #

def omega_bar_conditional(model: ModelSpec, t: int, x_t, regime: int, D_t: float = 1.0) -> np.ndarray:
    """``E[(dPbar + dbar)(dPbar + dbar)' | H_t]`` when period ``t+1`` is in ``regime``."""
    n = model.n
    Pbar = D_t * np.exp(np.asarray(x_t, dtype=float)[:n])
    out = np.expm1(model.sigma_uu(regime)) * np.outer(Pbar, Pbar)
    return 0.5 * (out + out.T)


def omega_mixture(model: ModelSpec, t: int, x_t=None, D_t: float = 1.0, history=None,
                  observed=None, start_probs=None):
    x_t = _anchor(model, t, x_t, history)
    paths = mixture_paths(model, t, t + 1, history, observed, start_probs)
    out = np.zeros((model.n, model.n))
    for p in paths:
        out = out + p.weight * omega_bar_conditional(model, t, x_t, p.regime_at(t + 1), D_t)
    return out


# --------------------------------------------------------------------------- #
# Claim values and Lambda bar
# --------------------------------------------------------------------------- #

def claim_value(model: ModelSpec, claim, cm: ConditionalMoments, table: MortalityTable | None = None):
    """Undiscounted time-``t`` value of ``claim`` under one regime path."""
    if isinstance(claim, OptionSpec):
        return price_from_moments(claim, cm)
    if isinstance(claim, ProductSpec):
        if table is None:
            raise InputError("insurance claims need a mortality table")
        return premium_from_moments(claim, table, cm)
    if isinstance(claim, ZeroCouponClaim):
        return claim.amount * bond_price(cm, claim.maturity)
    raise InputError(f"unsupported claim type {type(claim).__name__}")


def _psi_plus_any(L, m1, m2, S11, S12, S22):
    """Psi-plus that also accepts zero entries in ``L`` (those columns are plain products)."""
    L = np.asarray(L, dtype=float)
    out = np.outer(np.exp(m1 + 0.5 * np.diag(S11)), np.exp(m2 + 0.5 * np.diag(S22))) * np.exp(S12)
    pos = L > 0
    if np.any(pos):
        out[:, pos] = psi_plus(L[pos], m1, m2[pos], S11, S12[:, pos], S22[np.ix_(pos, pos)])
    return out


def _psi_minus_any(L, m1, m2, S11, S12, S22):
    L = np.asarray(L, dtype=float)
    out = np.zeros((m1.shape[0], L.shape[0]))
    pos = L > 0
    if np.any(pos):
        out[:, pos] = psi_minus(L[pos], m1, m2[pos], S11, S12[:, pos], S22[np.ix_(pos, pos)])
    return out


def _exchange_cross(pm: PiPhiMoments, i, j, w_i, w_j) -> np.ndarray:
    """``E^fwd[exp(pi) (w_i P_i - w_j P_j)^+]`` as an ``n``-vector."""
    a = np.zeros(pm.mu_P.shape[0])
    a[i], a[j] = 1.0, -1.0
    v = a @ pm.S_P @ a
    if v < DEGENERATE_VAR:
        raise DegenerateError(f"exchange option: spread of assets {i} and {j} has zero variance")
    sd = np.sqrt(v)
    d1 = (a @ pm.mu_P + a @ pm.S_P[:, i] - np.log(w_j / w_i)) / sd
    dt1 = d1 + (pm.S_pi_Pk @ a) / sd
    dt2 = dt1 - sd
    li = np.exp(pm.mu_phi(i) + 0.5 * np.diag(pm.S_phi(i)))
    lj = np.exp(pm.mu_phi(j) + 0.5 * np.diag(pm.S_phi(j)))
    return w_i * li * norm_cdf(dt1) - w_j * lj * norm_cdf(dt2)


def _epi(pm: PiPhiMoments) -> np.ndarray:
    return np.exp(pm.mu_pi + 0.5 * np.diag(pm.S_pi))


def _cross_moment(model: ModelSpec, claim, cm: ConditionalMoments, table):
    """``sum_k B_{t,k} E^{(t,k)}[exp(pi) f_k']`` over the claim's payment dates."""
    if isinstance(claim, OptionSpec):
        u = claim.maturity
        pm = pi_phi_moments(model, cm, u)
        B = bond_price(cm, u)
        if claim.kind == "exchange":
            return B * _exchange_cross(pm, claim.i, claim.j, claim.w_i, claim.w_j)
        K = claim.strikes(model.n)
        kern = psi_plus if claim.kind == "call" else psi_minus
        return B * kern(K, pm.mu_pi, pm.mu_P, pm.S_pi, pm.S_pi_Pk, pm.S_P)
    if isinstance(claim, ZeroCouponClaim):
        pm = pi_phi_moments(model, cm, claim.maturity)
        return bond_price(cm, claim.maturity) * claim.amount * _epi(pm)
    if isinstance(claim, ProductSpec):
        if table is None:
            raise InputError("insurance claims need a mortality table")
        n = model.n
        sf = survival_factors(table, claim.age, cm.t, claim.T)
        out = np.zeros((n, n))
        for k, w in benefit_weights(claim, sf).items():
            if w == 0.0:
                continue
            pm = pi_phi_moments(model, cm, k)
            F, G = claim.fund(k, n), claim.guarantee(k, n)
            L = G / F
            if claim.variant == "segregated":
                block = _psi_minus_any(L, pm.mu_pi, pm.mu_P, pm.S_pi, pm.S_pi_Pk, pm.S_P) * F[None, :]
            else:
                block = (_psi_plus_any(L, pm.mu_pi, pm.mu_P, pm.S_pi, pm.S_pi_Pk, pm.S_P) * F[None, :]
                         + np.outer(_epi(pm), G))
            out = out + w * bond_price(cm, k) * block
        return out
    raise InputError(f"unsupported claim type {type(claim).__name__}")


def lambda_conditional(model: ModelSpec, claim, t: int, x_t, path: RegimePath, D_t: float = 1.0,
                       table: MortalityTable | None = None):
    """``Cov[dPbar_{t+1} + dbar_{t+1}, Hbar | H_t]`` under one regime path.

    Shape ``(n,)`` for scalar claims (exchange, zero-coupon) and ``(n, n)``
    for per-asset claims, column ``m`` belonging to claim component ``m``.
    """
    horizon = claim_horizon(claim)
    if not t < horizon <= model.T:
        raise InputError(f"claim horizon {horizon} outside ({t}, {model.T}]")
    cm = conditional_moments(model, t, x_t, path, until=horizon)
    return _lambda_from_moments(model, claim, cm, D_t, table)


def _lambda_from_moments(model, claim, cm, D_t, table):
    n = model.n
    Pbar = D_t * np.exp(np.asarray(cm.x_t, dtype=float)[:n])
    Vbar = D_t * np.asarray(claim_value(model, claim, cm, table), dtype=float)
    cross = D_t ** 2 * _cross_moment(model, claim, cm, table)
    if Vbar.ndim == 0:
        return cross - Pbar * Vbar
    return cross - np.outer(Pbar, Vbar)


def lambda_mixture(model: ModelSpec, claim, t: int = 0, x_t=None, D_t: float = 1.0,
                   table: MortalityTable | None = None, history=None, observed=None,
                   start_probs=None, limit: int = MAX_PATHS):
    x_t = _anchor(model, t, x_t, history)
    paths = mixture_paths(model, t, claim_horizon(claim), history, observed, start_probs, limit)
    out = 0.0
    for p in paths:
        out = out + p.weight * lambda_conditional(model, claim, t, x_t, p, D_t, table)
    return out


def value_mixture(model: ModelSpec, claim, t: int, x_t, table=None, history=None, observed=None,
                  start_probs=None, limit: int = MAX_PATHS):
    paths = mixture_paths(model, t, claim_horizon(claim), history, observed, start_probs, limit)
    out = 0.0
    for p in paths:
        cm = conditional_moments(model, t, x_t, p, until=claim_horizon(claim))
        out = out + p.weight * np.asarray(claim_value(model, claim, cm, table), dtype=float)
    return out


# --------------------------------------------------------------------------- #
# Strategy
# --------------------------------------------------------------------------- #

@dataclass(frozen=True, eq=False)
class HedgeStep:
    h: np.ndarray
    h0: np.ndarray | float | None = None


def hedge_step(Omega_bar, Lambda_bar, V_next=None, payoff_next=None) -> HedgeStep:
    """``h = Omega^{-1} Lambda`` and, when time-``t+1`` data are given, ``h0 = V - h'(P + d)``."""
    Omega_bar = np.asarray(Omega_bar, dtype=float)
    Lambda_bar = np.asarray(Lambda_bar, dtype=float)
    if Omega_bar.ndim != 2 or Omega_bar.shape[0] != Omega_bar.shape[1] \
            or Lambda_bar.shape[0] != Omega_bar.shape[0]:
        raise InputError("hedge_step: dimension mismatch")
    try:
        factor = linalg.cho_factor(Omega_bar)
    except linalg.LinAlgError:
        raise NumericalError("second-moment matrix is singular (redundant assets?)") from None
    cond = np.linalg.cond(Omega_bar)
    if cond > COND_WARN:
        warnings.warn(f"second-moment matrix is ill-conditioned (cond = {cond:.3g})", RuntimeWarning,
                      stacklevel=2)
    h = linalg.cho_solve(factor, Lambda_bar)
    h0 = None
    if V_next is not None:
        if payoff_next is None:
            raise InputError("payoff_next is required with V_next")
        h0 = np.asarray(V_next, dtype=float) - np.asarray(payoff_next, dtype=float) @ h
        if h0.ndim == 0:
            h0 = float(h0)
    return HedgeStep(h=h, h0=h0)


@dataclass(frozen=True, eq=False)
class HedgePlan:
    """Hedge along one market path; row ``k`` belongs to period ``t = k + 1``.

    ``h[k]`` and ``h0[k]`` are ``h_t``, ``h0_t``; ``V[k]`` is ``V_t``; ``cost[k]``
    is ``C_t - C_{t-1} = Vbar_t - Vbar_{t-1} - h_t'(dPbar_t + dbar_t)``.
    ``V0`` and ``h0_0 = V0 - h_1' P_0`` describe the initial position.
    """

    h: np.ndarray
    h0: np.ndarray
    V: np.ndarray
    cost: np.ndarray
    V0: np.ndarray
    h0_0: np.ndarray
    discount: np.ndarray


def replay_hedge(model: ModelSpec, claim, market, table: MortalityTable | None = None,
                 observed=None) -> HedgePlan:
    """Run the locally risk-minimizing plan along ``market`` (states ``x_0..x_H``).

    ``observed`` optionally fixes the realized regimes ``s_1..s_H``; otherwise
    the filter supplies the regime distribution at each date.  Insurance
    claims are replayed on the scenario where the insured survives the whole
    horizon, with the endowment benefit (if any) paid at the end.
    """
    market = np.atleast_2d(np.asarray(market, dtype=float))
    H = claim_horizon(claim)
    if market.shape[0] < H + 1 or market.shape[1] != model.ntil:
        raise InputError(f"market path must hold states x_0..x_{H} of length {model.ntil}")
    market = market[:H + 1]
    if observed is not None and len(observed) < H:
        raise InputError(f"observed regimes must cover periods 1..{H}")
    n = model.n
    D = discount_factors(market)

    def info(t):
        if t == 0:
            return dict(history=None, observed=None)
        obs = None if observed is None else list(observed)[:t]
        return dict(history=market[:t + 1] if obs is None else None, observed=obs)

    def value(t):
        if t == H:
            return _terminal_value(model, claim, market[H])
        return np.asarray(value_mixture(model, claim, t, market[t], table, **info(t)), dtype=float)

    V = [value(0)]
    hs, h0s, costs = [], [], []
    for t in range(H):
        x_t = market[t]
        Om = omega_mixture(model, t, x_t, D[t], **info(t))
        La = lambda_mixture(model, claim, t, x_t, D[t], table, **info(t))
        payoff = total_payoff(model, x_t, market[t + 1], t + 1)
        V.append(value(t + 1))
        step = hedge_step(Om, La, V[-1], payoff)
        gain = D[t + 1] * payoff - D[t] * np.exp(x_t[:n])
        costs.append(D[t + 1] * V[-1] - D[t] * V[-2] - gain @ step.h)
        hs.append(step.h)
        h0s.append(step.h0)
    h0_0 = V[0] - np.exp(market[0, :n]) @ hs[0]
    return HedgePlan(h=np.array(hs), h0=np.array(h0s), V=np.array(V[1:]), cost=np.array(costs),
                     V0=V[0], h0_0=h0_0, discount=D)


def _terminal_value(model: ModelSpec, claim, x_T):
    n = model.n
    P = np.exp(np.asarray(x_T, dtype=float)[:n])
    if isinstance(claim, ZeroCouponClaim):
        return np.asarray(claim.amount, dtype=float)
    if isinstance(claim, OptionSpec):
        if claim.kind == "exchange":
            return np.asarray(max(claim.w_i * P[claim.i] - claim.w_j * P[claim.j], 0.0))
        K = claim.strikes(n)
        return np.maximum(P - K, 0.0) if claim.kind == "call" else np.maximum(K - P, 0.0)
    if isinstance(claim, ProductSpec):
        if claim.kind == "term":
            return np.zeros(n)
        F, G = claim.fund(claim.T, n), claim.guarantee(claim.T, n)
        if claim.variant == "segregated":
            return F * np.maximum(G / F - P, 0.0)
        return F * np.maximum(P - G / F, 0.0) + G
    raise InputError(f"unsupported claim type {type(claim).__name__}")
