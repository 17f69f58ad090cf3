"""Regime-path weights: continuation probabilities and filtered posteriors.

With deterministic per-regime parameters the parameter densities in the
mixture formulas cancel, so continuation weights reduce to products of
transition probabilities and the posterior over past regimes to a Gaussian
hidden-Markov filter.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import InputError, NumericalError, PathLimitError
from .measures import intercept
from .model import ModelSpec, RegimePath, var1_matrices

__all__ = [
    "MAX_PATHS",
    "FilterResult",
    "regime_path_weights_pricing",
    "continuation_paths",
    "transition_logdensities",
    "filter_regime_posterior",
    "current_regime_probs",
    "mixture_paths",
]

MAX_PATHS = 10**6


def _guard(N: int, length: int, limit: int):
    count = N ** length
    if count > limit:
        raise PathLimitError(count, limit)
    return count


def regime_path_weights_pricing(t: int, start_probs, P, until: int,
                                limit: int = MAX_PATHS) -> list[RegimePath]:
    """All continuation paths ``(s_{t+1}, ..., s_until)`` with their weights.

    ``start_probs`` is the distribution of ``s_t`` (``t >= 1``), or, when
    ``t == 0``, the distribution of ``s_1`` itself.  An integer means the
    regime is observed.
    """
    P = np.asarray(P, dtype=float)
    N = P.shape[0]
    if isinstance(start_probs, (int, np.integer)):
        probs = np.zeros(N)
        probs[int(start_probs)] = 1.0
    else:
        probs = np.asarray(start_probs, dtype=float)
    if until <= t:
        raise InputError(f"continuation needs until > t, got t={t}, until={until}")
    length = until - t
    _guard(N, length, limit)
    # distribution of the first continuation regime
    first = probs if t == 0 else probs @ P
    paths = []
    for regimes in itertools.product(range(N), repeat=length):
        w = first[regimes[0]]
        for a, b in zip(regimes[:-1], regimes[1:]):
            w *= P[a, b]
        paths.append(RegimePath(regimes, weight=float(w), start=t + 1))
    return paths


def continuation_paths(model: ModelSpec, t: int, until: int | None = None, start_probs=None,
                       limit: int = MAX_PATHS) -> list[RegimePath]:
    """Continuation paths for the model; ``start_probs=None`` at ``t = 0`` uses ``p1``."""
    until = model.T if until is None else until
    if start_probs is None:
        if t != 0:
            raise InputError("start_probs required for t > 0")
        start_probs = model.p1
    return regime_path_weights_pricing(t, start_probs, model.P, until, limit)


def transition_logdensities(model: ModelSpec, history, measure: str = "risk-neutral") -> np.ndarray:
    """``log f(x_m | x_{m-1}, s_m = j)`` for ``m = 1..t`` (rows) and regimes ``j`` (columns)."""
    history = np.atleast_2d(np.asarray(history, dtype=float))
    t = history.shape[0] - 1
    if history.shape[1] != model.ntil:
        raise InputError(f"history rows must have length {model.ntil}")
    if t > model.T:
        raise InputError(f"history covers {t} periods, model horizon is {model.T}")
    out = np.empty((t, model.N))
    ntil = model.ntil
    for m in range(1, t + 1):
        for j in range(model.N):
            v = var1_matrices(model, m, j, measure)
            q0inv = v.Q0_inv
            mean = q0inv @ (intercept(model, m, j, measure) + v.Q1 @ history[m - 1])
            # x_m = mean + Q0^{-1} Gm xi, so the Cholesky factor is Q0^{-1} Gm chol
            Lc = q0inv @ v.Gm @ model.chol[j]
            z = np.linalg.solve(Lc, history[m] - mean)
            logdet = np.sum(np.log(np.abs(np.diag(Lc))))
            out[m - 1, j] = -0.5 * z @ z - logdet - 0.5 * ntil * np.log(2 * np.pi)
    return out


@dataclass(frozen=True, eq=False)
class FilterResult:
    """``filtered[m-1, j] = P(s_m = j | F_m)``; ``loglik`` is ``log f(x_1..x_t | x_0)``."""

    filtered: np.ndarray
    loglik: float
    paths: list | None = None

    @property
    def current(self) -> np.ndarray:
        return self.filtered[-1]


def filter_regime_posterior(model: ModelSpec, history, measure: str = "risk-neutral",
                            enumerate_paths: bool = False, limit: int = MAX_PATHS) -> FilterResult:
    """Posterior over past regimes given observed states ``x_0..x_t``.

    The forward recursion gives filtered marginals.  ``enumerate_paths``
    additionally returns every ``(s_1..s_t)`` with its normalized posterior
    weight, computed by direct enumeration.
    """
    logf = transition_logdensities(model, history, measure)
    t, N = logf.shape
    if t == 0:
        raise InputError("filtering needs at least one observed transition")
    with np.errstate(divide="ignore"):
        logP = np.log(model.P)
        log_alpha = np.log(model.p1) + logf[0]
    filtered = np.empty((t, N))
    loglik = 0.0
    for m in range(t):
        if m > 0:
            log_alpha = logsumexp(log_prev[:, None] + logP, axis=0) + logf[m]
        c = logsumexp(log_alpha)
        if not np.isfinite(c):
            raise NumericalError(f"regime filter: zero likelihood at period {m + 1}")
        loglik += c
        log_prev = log_alpha - c
        filtered[m] = np.exp(log_prev)

    paths = None
    if enumerate_paths:
        _guard(N, t, limit)
        combos = list(itertools.product(range(N), repeat=t))
        with np.errstate(divide="ignore"):
            logp1 = np.log(model.p1)
        lw = np.empty(len(combos))
        for k, s in enumerate(combos):
            v = logp1[s[0]] + logf[0, s[0]]
            for m in range(1, t):
                v += logP[s[m - 1], s[m]] + logf[m, s[m]]
            lw[k] = v
        total = logsumexp(lw)
        if not np.isfinite(total):
            raise NumericalError("regime filter: zero total likelihood")
        w = np.exp(lw - total)
        paths = [RegimePath(s, weight=float(wk), start=1) for s, wk in zip(combos, w)]
    return FilterResult(filtered=filtered, loglik=float(loglik), paths=paths)


def current_regime_probs(model: ModelSpec, history=None, observed=None,
                         measure: str = "risk-neutral"):
    """Distribution of ``s_t`` used to weight continuation paths.

    Returns ``None`` at ``t = 0`` (the first regime follows ``p1``), the
    observed regime when ``observed`` (``s_1..s_t``) is given, and the
    filtered marginal otherwise.
    """
    history = None if history is None else np.atleast_2d(np.asarray(history, dtype=float))
    t = 0 if history is None else history.shape[0] - 1
    if t == 0:
        return None
    if observed is not None:
        observed = list(observed)
        if len(observed) != t:
            raise InputError(f"observed regimes must cover periods 1..{t}")
        return int(observed[-1])
    if model.N == 1:
        return 0
    return filter_regime_posterior(model, history, measure).current


def mixture_paths(model: ModelSpec, t: int, until: int, history=None, observed=None,
                  start_probs=None, limit: int = MAX_PATHS) -> list[RegimePath]:
    """Weighted continuation paths for a mixture evaluated at time ``t``.

    The distribution of ``s_t`` comes from ``start_probs`` when given, else
    from ``observed`` regimes or the filter applied to ``history``.
    """
    if start_probs is None and t > 0:
        if history is None and observed is None:
            raise InputError("mixtures at t > 0 need history, observed regimes or start_probs")
        if history is not None:
            history = np.atleast_2d(np.asarray(history, dtype=float))
            if history.shape[0] != t + 1:
                raise InputError(f"history must hold x_0..x_{t}")
            start_probs = current_regime_probs(model, history, observed)
        else:
            observed = list(observed)
            if len(observed) != t:
                raise InputError(f"observed regimes must cover periods 1..{t}")
            start_probs = int(observed[-1])
    return continuation_paths(model, t, until, start_probs, limit)
