"""Log-normal expectation kernels used by every closed-form price and hedge."""

from __future__ import annotations

import numpy as np
from scipy import special, stats

from .errors import DegenerateError, InputError

__all__ = [
    "DEGENERATE_VAR",
    "norm_cdf",
    "lognormal_call_put",
    "exp_indicator",
    "psi_plus",
    "psi_minus",
]

# variances below this are treated as point masses
DEGENERATE_VAR = 1e-14

_SQRT2 = np.sqrt(2.0)


def norm_cdf(x):
    """Standard normal CDF through ``erfc`` (accurate in both tails)."""
    return 0.5 * special.erfc(-np.asarray(x, dtype=float) / _SQRT2)


def lognormal_call_put(mu, sigma2, K, kind: str = "call", allow_degenerate: bool = False):
    """``E[(e^X - K)^+]`` (call) or ``E[(K - e^X)^+]`` (put) for ``X ~ N(mu, sigma2)``.

    Broadcasts over array arguments.  With ``allow_degenerate`` a variance
    below :data:`DEGENERATE_VAR` yields the deterministic payoff instead of an
    error.
    """
    mu, sigma2, K = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (mu, sigma2, K)))
    if np.any(K <= 0):
        raise InputError("strike must be positive")
    if kind not in ("call", "put"):
        raise InputError(f"unknown option kind {kind!r}")
    degenerate = sigma2 < DEGENERATE_VAR
    if np.any(degenerate) and not allow_degenerate:
        raise DegenerateError("log-normal kernel needs a positive variance")
    s2 = np.where(degenerate, 1.0, sigma2)
    sig = np.sqrt(s2)
    d1 = (mu + s2 - np.log(K)) / sig
    d2 = d1 - sig
    fwd = np.exp(mu + 0.5 * s2)
    if kind == "call":
        out = fwd * norm_cdf(d1) - K * norm_cdf(d2)
        point = np.maximum(np.exp(mu) - K, 0.0)
    else:
        out = K * norm_cdf(-d2) - fwd * norm_cdf(-d1)
        point = np.maximum(K - np.exp(mu), 0.0)
    out = np.where(degenerate, point, out)
    return out if out.ndim else float(out)


def exp_indicator(alpha, beta, A, b, c, mu, Sigma) -> float:
    """``E[exp(alpha X + beta) 1{A X + b > c}]`` for ``X ~ N(mu, Sigma)``.

    Equals ``exp(alpha mu + beta + alpha Sigma alpha' / 2) P[A X + b > c - A Sigma alpha']``.
    The probability is univariate-exact for one constraint and uses scipy's
    Genz integration otherwise.
    """
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    c = np.atleast_1d(np.asarray(c, dtype=float))
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    k = mu.shape[0]
    m = A.shape[0]
    if alpha.shape != (k,) or Sigma.shape != (k, k) or A.shape[1] != k or b.shape != (m,) or c.shape != (m,):
        raise InputError("exp_indicator: dimension mismatch")
    scale = np.exp(alpha @ mu + beta + 0.5 * alpha @ Sigma @ alpha)
    mean = A @ mu + b
    thresh = c - A @ Sigma @ alpha
    cov = A @ Sigma @ A.T
    return float(scale * _prob_above(mean, cov, thresh))


def _prob_above(mean, cov, thresh) -> float:
    """``P[Y > thresh]`` componentwise for ``Y ~ N(mean, cov)``."""
    var = np.diag(cov)
    if np.all(var < DEGENERATE_VAR):
        return float(np.all(mean > thresh))
    if mean.shape[0] == 1:
        return float(norm_cdf((mean[0] - thresh[0]) / np.sqrt(var[0])))
    if np.any(var < DEGENERATE_VAR):
        fixed = var < DEGENERATE_VAR
        if not np.all(mean[fixed] > thresh[fixed]):
            return 0.0
        keep = ~fixed
        return _prob_above(mean[keep], cov[np.ix_(keep, keep)], thresh[keep])
    # P[Y > t] = P[-Y < -t]
    # fixed seed keeps the quasi-random integration reproducible
    dist = stats._multivariate.multivariate_normal_frozen(
        mean=-mean, cov=cov, allow_singular=True, seed=0, maxpts=1_000_000 * mean.shape[0],
        abseps=1e-10, releps=1e-10)
    return float(dist.cdf(-thresh))


def _two_block_parts(L, mu1, mu2, S11, S12, S22):
    L = np.atleast_1d(np.asarray(L, dtype=float))
    mu1 = np.atleast_1d(np.asarray(mu1, dtype=float))
    mu2 = np.atleast_1d(np.asarray(mu2, dtype=float))
    n1, n2 = mu1.shape[0], mu2.shape[0]
    S11 = np.asarray(S11, dtype=float).reshape(n1, n1)
    S12 = np.asarray(S12, dtype=float).reshape(n1, n2)
    S22 = np.asarray(S22, dtype=float).reshape(n2, n2)
    if L.shape != (n2,):
        raise InputError("psi kernel: L must match the second block")
    if np.any(L <= 0):
        raise InputError("psi kernel: L must be positive")
    joint = np.block([[S11, S12], [S12.T, S22]])
    if np.max(np.abs(joint - joint.T)) > 1e-10 * max(1.0, np.abs(joint).max()):
        raise InputError("psi kernel: covariance not symmetric")
    eig = np.linalg.eigvalsh(0.5 * (joint + joint.T))
    if eig.min() < -1e-10 * max(1.0, np.abs(eig).max()):
        raise InputError("psi kernel: covariance not positive semidefinite")
    v2 = np.diag(S22)
    if np.any(v2 < DEGENERATE_VAR):
        raise DegenerateError("psi kernel: second block has a zero variance")
    s2 = np.sqrt(v2)
    e1 = np.exp(mu1 + 0.5 * np.diag(S11))
    e2 = np.exp(mu2 + 0.5 * v2)
    d1 = (mu2 + v2 - np.log(L)) / s2
    d2 = d1 - s2
    adj = S12 / s2[None, :]
    cross = np.outer(e1, e2) * np.exp(S12)
    strike = np.outer(e1, L)
    return cross, strike, d1[None, :] + adj, d2[None, :] + adj


def psi_plus(L, mu1, mu2, S11, S12, S22) -> np.ndarray:
    """``E[e^{X1} ((e^{X2} - L)^+)']`` for jointly Gaussian ``(X1, X2)``; shape ``(n1, n2)``."""
    cross, strike, a1, a2 = _two_block_parts(L, mu1, mu2, S11, S12, S22)
    return cross * norm_cdf(a1) - strike * norm_cdf(a2)


def psi_minus(L, mu1, mu2, S11, S12, S22) -> np.ndarray:
    """``E[e^{X1} ((L - e^{X2})^+)']``; shape ``(n1, n2)``."""
    cross, strike, a1, a2 = _two_block_parts(L, mu1, mu2, S11, S12, S22)
    return strike * norm_cdf(-a2) - cross * norm_cdf(-a1)
