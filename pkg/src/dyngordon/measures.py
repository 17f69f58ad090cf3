"""Risk-neutral and forward measures, and zero-coupon bond prices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .model import ConditionalMoments, ModelSpec

__all__ = [
    "RiskNeutralIntercepts",
    "ForwardMoments",
    "risk_neutral_intercepts",
    "intercept",
    "girsanov_kernel",
    "step_risk_neutral",
    "rate_selector",
    "forward_adjust",
    "bond_price",
]


@dataclass(frozen=True, eq=False)
class RiskNeutralIntercepts:
    nu_P: np.ndarray
    nu_y: np.ndarray

    @property
    def stacked(self) -> np.ndarray:
        return np.concatenate([self.nu_P, self.nu_y])


def risk_neutral_intercepts(model: ModelSpec, t: int, regime: int) -> RiskNeutralIntercepts:
    n = model.n
    g, h = model.lin.g[t - 1], model.lin.h[t - 1]
    half_var = 0.5 * np.diag(model.sigma_uu(regime))
    nu_P = -g * half_var - h
    nu_y = model.cy_psi(t, regime) - model.coupling[regime] @ (model.ck_psi(t, regime) + half_var)
    return RiskNeutralIntercepts(nu_P=nu_P, nu_y=nu_y)


def intercept(model: ModelSpec, t: int, regime: int, measure: str = "risk-neutral") -> np.ndarray:
    """Stacked intercept of the VAR(1) form under ``measure``."""
    if measure == "risk-neutral":
        return risk_neutral_intercepts(model, t, regime).stacked
    if measure == "real":
        g, h = model.lin.g[t - 1], model.lin.h[t - 1]
        return np.concatenate([g * model.ck_psi(t, regime) - h, model.cy_psi(t, regime)])
    raise InputError(f"unknown measure {measure!r}")


def girsanov_kernel(model: ModelSpec, t: int, regime: int, rate: float) -> np.ndarray:
    """Optimal kernel ``theta_t`` given the log rate ``rate`` earned over period ``t``.

    Adding ``theta_t`` to the scaled risk-neutral shock ``Gm (u~, eta~)`` recovers
    the real-measure shock.
    """
    n = model.n
    g = model.lin.g[t - 1]
    arg = rate * np.ones(n) - model.ck_psi(t, regime) - 0.5 * np.diag(model.sigma_uu(regime))
    return np.concatenate([g * arg, model.coupling[regime] @ arg])


def step_risk_neutral(model: ModelSpec, x_prev, regime: int, shock, t: int) -> np.ndarray:
    """One transition ``x_{t-1} -> x_t`` under the risk-neutral measure.

    The gross return over period ``t`` is tied to the rate held in ``x_{t-1}``.
    Broadcasts over leading axes.
    """
    if not 1 <= t <= model.T:
        raise InputError(f"period {t} outside 1..{model.T}")
    n = model.n
    x_prev = np.asarray(x_prev, dtype=float)
    shock = np.asarray(shock, dtype=float)
    rn = risk_neutral_intercepts(model, t, regime)
    g = model.lin.g[t - 1]
    r_prev = x_prev[..., 2 * n:2 * n + 1]
    b = model.coupling[regime] @ np.ones(n)
    y = rn.nu_y + x_prev[..., n:] + r_prev * b + shock[..., n:]
    d = y[..., :n]
    p = rn.nu_P - (g - 1.0) * d + g * x_prev[..., :n] + g * r_prev + g * shock[..., :n]
    return np.concatenate([p, y], axis=-1)


def rate_selector(cm: ConditionalMoments, u: int) -> np.ndarray:
    """Stacked selector ``gamma_{t,u}`` picking the rates of ``x_{t+1}, ..., x_{u-1}``."""
    if not cm.t < u <= cm.last + 1:
        raise InputError(f"forward horizon u={u} outside ({cm.t}, {cm.last + 1}]")
    gamma = np.zeros(cm.mu_c.shape[0])
    for beta in range(cm.t + 1, u):
        gamma[cm.index(beta, cm.ntil - 1)] = 1.0
    return gamma


@dataclass(frozen=True, eq=False)
class ForwardMoments:
    """Law of the stacked future states under the ``(t, u)``-forward measure."""

    t: int
    u: int
    mu_hat_c: np.ndarray
    Sigma_c: np.ndarray
    gamma: np.ndarray
    base: ConditionalMoments

    def mean(self, i: int) -> np.ndarray:
        return self.mu_hat_c[self.base._blk(i)]

    def cov(self, i1: int, i2: int | None = None) -> np.ndarray:
        return self.base.cov(i1, i2)


def forward_adjust(cm: ConditionalMoments, u: int) -> ForwardMoments:
    if not cm.t < u <= cm.last:
        raise InputError(f"forward horizon u={u} outside ({cm.t}, {cm.last}]")
    gamma = rate_selector(cm, u)
    mu_hat = cm.mu_c - cm.Sigma_c @ gamma
    return ForwardMoments(t=cm.t, u=u, mu_hat_c=mu_hat, Sigma_c=cm.Sigma_c, gamma=gamma, base=cm)


def bond_price(cm: ConditionalMoments, u: int, r_next: float | None = None) -> float:
    """Time-``t`` price of a unit zero-coupon bond maturing at ``u``.

    ``r_next`` is the (known) log rate over ``(t, t+1]``; it defaults to the
    rate component of ``cm.x_t``.
    """
    if not cm.t < u <= cm.last:
        raise InputError(f"bond maturity u={u} outside ({cm.t}, {cm.last}]")
    if r_next is None:
        r_next = float(cm.x_t[-1])
    gamma = rate_selector(cm, u)
    return float(np.exp(-r_next - gamma @ cm.mu_c + 0.5 * gamma @ cm.Sigma_c @ gamma))
