"""Model parameterization, Campbell-Shiller linearization and VAR(1) structure.

State vectors are ordered ``x = (log P_1..P_n, log d_1..d_n, log r)`` with
length ``2n + 1``.  Periods run ``t = 1..T``; per-period arrays are stored
with period ``t`` at row ``t - 1``.  Regimes are 0-based.

Rate convention: the rate component of state ``x_t`` is the log rate earned
over ``(t, t+1]``.  It is known at time ``t`` and is the rate the risk-neutral
drift of period ``t + 1`` is tied to.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InputError, InvalidModelError, NumericalError

__all__ = [
    "Linearization",
    "ModelSpec",
    "RegimePath",
    "ConditionalMoments",
    "Var1Matrices",
    "build_linearization",
    "solve_mu_recursion",
    "log_return_approx",
    "log_gain",
    "step_real",
    "var1_matrices",
    "pi_matrix",
    "impact_matrix",
    "conditional_moments",
    "state_dim",
    "split_state",
    "join_state",
    "jp",
    "jy",
    "jd",
    "jr",
    "load_model",
]


# --------------------------------------------------------------------------- #
# State vector helpers
# --------------------------------------------------------------------------- #

def state_dim(n: int) -> int:
    return 2 * n + 1


def split_state(x, n: int):
    """Return views ``(log_prices, log_dividends, log_rate)`` of ``x`` (last axis)."""
    x = np.asarray(x)
    return x[..., :n], x[..., n:2 * n], x[..., 2 * n]


def join_state(log_prices, log_dividends, log_rate) -> np.ndarray:
    log_prices = np.asarray(log_prices, dtype=float)
    log_dividends = np.asarray(log_dividends, dtype=float)
    log_rate = np.asarray(log_rate, dtype=float)
    return np.concatenate([log_prices, log_dividends, log_rate[..., None]], axis=-1)


def jp(n: int) -> np.ndarray:
    """Selector ``[I_n : 0]`` extracting log prices from a state."""
    return np.eye(n, state_dim(n))


def jy(n: int) -> np.ndarray:
    """Selector ``[0 : I_{n+1}]`` extracting ``y = (log d, log r)`` from a state."""
    return np.eye(n + 1, state_dim(n), k=n)


def jd(n: int) -> np.ndarray:
    """Selector ``[I_n : 0]`` extracting log dividends from ``y``."""
    return np.eye(n, n + 1)


def jr(n: int) -> np.ndarray:
    """Last unit vector of length ``n + 1`` (log rate inside ``y``)."""
    e = np.zeros(n + 1)
    e[-1] = 1.0
    return e


# --------------------------------------------------------------------------- #
# Linearization
# --------------------------------------------------------------------------- #

@dataclass(frozen=True, eq=False)
class Linearization:
    """Per-period linearization constants for ``t = 1..T`` (row ``t-1``).

    ``g = 1 + exp(mu)`` and ``h = g * (log g - mu) + mu``.
    """

    mu: np.ndarray
    g: np.ndarray
    h: np.ndarray

    @property
    def T(self) -> int:
        return self.mu.shape[0]

    @property
    def n(self) -> int:
        return self.mu.shape[1]

    def G(self, t: int) -> np.ndarray:
        return np.diag(self.g[t - 1])

    def check(self, atol: float = 1e-14) -> bool:
        g = 1.0 + np.exp(self.mu)
        h = g * (np.log(g) - self.mu) + self.mu
        return bool(np.allclose(g, self.g, rtol=0, atol=atol)
                    and np.allclose(h, self.h, rtol=0, atol=atol * max(1.0, np.abs(h).max())))


def build_linearization(mu_schedule) -> Linearization:
    mu = np.atleast_2d(np.asarray(mu_schedule, dtype=float))
    if not np.all(np.isfinite(mu)):
        raise InputError("linearization mean log dividend-to-price must be finite")
    g = 1.0 + np.exp(mu)
    h = g * (np.log(g) - mu) + mu
    for arr in (mu, g, h):
        arr.setflags(write=False)
    return Linearization(mu=mu, g=g, h=h)


def solve_mu_recursion(mu0, increments) -> np.ndarray:
    """Solve ``mu_t = mu_{t-1} + log(1 + exp(mu_t)) + a_t`` forward in ``t``.

    ``increments[t-1]`` holds ``a_t`` (expected log-dividend growth minus the
    expected log return).  Each step is the scalar fixed point
    ``mu = c + log(1 + e^mu)`` with ``c = mu_{t-1} + a_t``, whose unique root is
    ``-log(expm1(-c))``; it exists only for ``c < 0``.
    """
    mu_prev = np.asarray(mu0, dtype=float).copy()
    increments = np.atleast_2d(np.asarray(increments, dtype=float))
    out = np.empty_like(increments)
    for t, a in enumerate(increments, start=1):
        c = mu_prev + a
        bad = np.flatnonzero(~(c < 0))
        if bad.size:
            raise NumericalError(
                f"no fixed point for mu at t={t}, component {int(bad[0])}: "
                f"mu_prev + increment = {c[bad[0]]:.6g} must be negative")
        mu_prev = -np.log(np.expm1(-c))
        out[t - 1] = mu_prev
    return out


def log_return_approx(P_t, d_t, P_prev, lin: Linearization, t: int) -> np.ndarray:
    """Linearized log gross return ``log((P_t + d_t) / P_prev)`` from price levels."""
    P_t, d_t, P_prev = (np.asarray(a, dtype=float) for a in (P_t, d_t, P_prev))
    if np.any(P_t <= 0) or np.any(d_t <= 0) or np.any(P_prev <= 0):
        raise InputError("price and dividend levels must be strictly positive")
    lp, ld, lpp = np.log(P_t), np.log(d_t), np.log(P_prev)
    g, mu = lin.g[t - 1], lin.mu[t - 1]
    return lp - lpp + np.log(g) + (g - 1.0) / g * (ld - lp - mu)


def log_gain(x_prev, x, lin: Linearization, t: int) -> np.ndarray:
    """Same as :func:`log_return_approx` but on log states (broadcasts over paths)."""
    n = lin.n
    lp, ld, _ = split_state(x, n)
    lpp, _, _ = split_state(x_prev, n)
    g, mu = lin.g[t - 1], lin.mu[t - 1]
    return lp - lpp + np.log(g) + (g - 1.0) / g * (ld - lp - mu)


# --------------------------------------------------------------------------- #
# Regime paths
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class RegimePath:
    """Regimes for consecutive periods ``start, start+1, ...`` with a probability weight."""

    regimes: tuple
    weight: float = 1.0
    start: int = 1

    def __post_init__(self):
        object.__setattr__(self, "regimes", tuple(int(s) for s in self.regimes))

    def regime_at(self, period: int) -> int:
        k = period - self.start
        if not 0 <= k < len(self.regimes):
            raise InputError(f"regime path starting at {self.start} does not cover period {period}")
        return self.regimes[k]

    @property
    def end(self) -> int:
        return self.start + len(self.regimes) - 1


# --------------------------------------------------------------------------- #
# Model specification
# --------------------------------------------------------------------------- #

def _as3d(a, name):
    a = np.asarray(a, dtype=float)
    if a.ndim == 2:
        a = a[None]
    if a.ndim != 3:
        raise InvalidModelError(f"{name} must be a per-regime stack of matrices")
    return a


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Complete regime-switching parameterization.

    Ck : (N, n, l_k)       log required return loadings per regime
    Cy : (N, n+1, l_y)     dividend (rows 0..n-1) and rate (row n) drift loadings
    Sigma : (N, 2n+1, 2n+1) shock covariance per regime, blocks (u, eta)
    P : (N, N)             regime transition matrix, ``P[i, j] = p_ij``
    p1 : (N,)              distribution of the first regime
    psi_k : (T, l_k), psi_y : (T, l_y)   exogenous series for periods 1..T
    x0 : (2n+1,)           initial log state
    mu : (T, n) or None    linearization schedule; ``None`` derives it from
                           the parameters via the expected-dividend recursion
    """

    Ck: np.ndarray
    Cy: np.ndarray
    Sigma: np.ndarray
    P: np.ndarray
    p1: np.ndarray
    psi_k: np.ndarray
    psi_y: np.ndarray
    x0: np.ndarray
    mu: np.ndarray | None = None
    lin: Linearization = field(init=False, repr=False)

    def __post_init__(self):
        Ck = _as3d(self.Ck, "Ck")
        Cy = _as3d(self.Cy, "Cy")
        Sigma = _as3d(self.Sigma, "Sigma")
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        p1 = np.atleast_1d(np.asarray(self.p1, dtype=float))
        psi_k = np.asarray(self.psi_k, dtype=float)
        psi_y = np.asarray(self.psi_y, dtype=float)
        x0 = np.asarray(self.x0, dtype=float)
        if psi_k.ndim == 1:
            psi_k = psi_k[:, None]
        if psi_y.ndim == 1:
            psi_y = psi_y[:, None]

        N, n, lk = Ck.shape
        ntil = 2 * n + 1
        ly = Cy.shape[2]
        T = psi_k.shape[0]
        checks = [
            (Cy.shape == (N, n + 1, ly), f"Cy must have shape ({N}, {n + 1}, l_y), got {Cy.shape}"),
            (Sigma.shape == (N, ntil, ntil), f"Sigma must have shape ({N}, {ntil}, {ntil}), got {Sigma.shape}"),
            (P.shape == (N, N), f"P must be {N}x{N}, got {P.shape}"),
            (p1.shape == (N,), f"p1 must have length {N}"),
            (psi_k.shape == (T, lk), f"psi_k must have shape ({T}, {lk}), got {psi_k.shape}"),
            (psi_y.shape == (T, ly), f"psi_y must have shape ({T}, {ly}), got {psi_y.shape}"),
            (x0.shape == (ntil,), f"x0 must have length {ntil}"),
            (T >= 1, "horizon T must be at least 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise InvalidModelError(msg)
        for name, arr in (("Ck", Ck), ("Cy", Cy), ("Sigma", Sigma), ("P", P), ("p1", p1),
                          ("psi_k", psi_k), ("psi_y", psi_y), ("x0", x0)):
            if not np.all(np.isfinite(arr)):
                raise InvalidModelError(f"{name} contains non-finite values")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-12):
            raise InvalidModelError("rows of P must be non-negative and sum to 1")
        if np.any(p1 < 0) or abs(p1.sum() - 1.0) > 1e-12:
            raise InvalidModelError("p1 must be a probability vector")

        chol = np.empty_like(Sigma)
        for j in range(N):
            S = Sigma[j]
            if np.max(np.abs(S - S.T)) > 1e-12:
                raise InvalidModelError(f"Sigma[{j}] is not symmetric")
            try:
                chol[j] = np.linalg.cholesky(S)
            except np.linalg.LinAlgError:
                raise InvalidModelError(f"Sigma[{j}] is not positive definite") from None
        # Sigma_{eta u} Sigma_{uu}^{-1}; Sigma_uu is PD whenever Sigma is
        coupling = np.stack([np.linalg.solve(S[:n, :n], S[:n, n:]).T for S in Sigma])

        for name, arr in (("Ck", Ck), ("Cy", Cy), ("Sigma", Sigma), ("P", P), ("p1", p1),
                          ("psi_k", psi_k), ("psi_y", psi_y), ("x0", x0), ("chol", chol),
                          ("coupling", coupling)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

        if self.mu is None:
            mu = self.expected_mu()
        else:
            mu = np.asarray(self.mu, dtype=float)
            if mu.ndim == 1:
                mu = np.repeat(mu[None], T, axis=0) if mu.shape == (n,) else mu[:, None]
            if mu.shape != (T, n):
                raise InvalidModelError(f"mu must have shape ({T}, {n}), got {mu.shape}")
        lin = build_linearization(mu)
        object.__setattr__(self, "mu", lin.mu)
        object.__setattr__(self, "lin", lin)

    # dimensions -------------------------------------------------------------
    @property
    def n(self) -> int:
        return self.Ck.shape[1]

    @property
    def N(self) -> int:
        return self.Ck.shape[0]

    @property
    def T(self) -> int:
        return self.psi_k.shape[0]

    @property
    def ntil(self) -> int:
        return 2 * self.n + 1

    @property
    def l_k(self) -> int:
        return self.Ck.shape[2]

    @property
    def l_y(self) -> int:
        return self.Cy.shape[2]

    # per-period pieces --------------------------------------------------------
    def ck_psi(self, t: int, regime: int) -> np.ndarray:
        return self.Ck[regime] @ self.psi_k[t - 1]

    def cy_psi(self, t: int, regime: int) -> np.ndarray:
        return self.Cy[regime] @ self.psi_y[t - 1]

    def sigma_uu(self, regime: int) -> np.ndarray:
        n = self.n
        return self.Sigma[regime][:n, :n]

    def regime_marginals(self) -> np.ndarray:
        """Unconditional regime distribution for periods 1..T, shape (T, N)."""
        out = np.empty((self.T, self.N))
        p = self.p1
        for t in range(self.T):
            out[t] = p
            p = p @ self.P
        return out

    def expected_mu(self) -> np.ndarray:
        """Mean log dividend-to-price schedule implied by the parameters.

        Coefficients enter the recursion linearly, so with several regimes
        they are averaged under the unconditional regime marginals.
        """
        n = self.n
        w = self.regime_marginals()
        ck = np.einsum("tj,jnl,tl->tn", w, self.Ck, self.psi_k)
        dy = np.einsum("tj,jnl,tl->tn", w, self.Cy[:, :n, :], self.psi_y)
        lp0, ld0, _ = split_state(self.x0, n)
        return solve_mu_recursion(ld0 - lp0, dy - ck)

    def with_(self, **changes) -> "ModelSpec":
        params = {k: getattr(self, k) for k in
                  ("Ck", "Cy", "Sigma", "P", "p1", "psi_k", "psi_y", "x0", "mu")}
        params.update(changes)
        return ModelSpec(**params)

    # serialization ------------------------------------------------------------
    @classmethod
    def from_dict(cls, doc: dict) -> "ModelSpec":
        try:
            regimes = doc["regimes"]
            kw = dict(
                Ck=[r["Ck"] for r in regimes],
                Cy=[r["Cy"] for r in regimes],
                Sigma=[r["Sigma"] for r in regimes],
                P=doc.get("P", [[1.0]]),
                p1=doc.get("p1", [1.0]),
                psi_k=doc["psi_k"],
                psi_y=doc["psi_y"],
                x0=doc["x0"],
                mu=doc.get("mu"),
            )
        except (KeyError, TypeError) as exc:
            raise InvalidModelError(f"model document missing field: {exc}") from None
        try:
            return cls(**kw)
        except (ValueError, IndexError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InvalidModelError(str(exc)) from None

    def to_dict(self) -> dict:
        return {
            "regimes": [{"Ck": self.Ck[j].tolist(), "Cy": self.Cy[j].tolist(),
                         "Sigma": self.Sigma[j].tolist()} for j in range(self.N)],
            "P": self.P.tolist(),
            "p1": self.p1.tolist(),
            "psi_k": self.psi_k.tolist(),
            "psi_y": self.psi_y.tolist(),
            "x0": self.x0.tolist(),
            "mu": self.mu.tolist(),
        }


def load_model(path) -> ModelSpec:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read model file {path}: {exc}") from None
    return ModelSpec.from_dict(doc)


# --------------------------------------------------------------------------- #
# Dynamics under the real measure
# --------------------------------------------------------------------------- #

def step_real(model: ModelSpec, x_prev, regime: int, shock, t: int) -> np.ndarray:
    """One transition ``x_{t-1} -> x_t`` under the real measure.

    ``shock = (u_t, eta_t)``; broadcasts over leading axes of ``x_prev``/``shock``.
    """
    if not 1 <= t <= model.T:
        raise InputError(f"period {t} outside 1..{model.T}")
    n = model.n
    x_prev = np.asarray(x_prev, dtype=float)
    shock = np.asarray(shock, dtype=float)
    g, h = model.lin.g[t - 1], model.lin.h[t - 1]
    y = model.cy_psi(t, regime) + x_prev[..., n:] + shock[..., n:]
    d = y[..., :n]
    nu_p = g * model.ck_psi(t, regime) - h
    p = nu_p - (g - 1.0) * d + g * x_prev[..., :n] + g * shock[..., :n]
    return np.concatenate([p, y], axis=-1)


# --------------------------------------------------------------------------- #
# VAR(1) form
# --------------------------------------------------------------------------- #

@dataclass(frozen=True, eq=False)
class Var1Matrices:
    """``Q0 x_t = nu_t + Q1 x_{t-1} + Gm xi_t`` for one period and regime."""

    Q0: np.ndarray
    Q1: np.ndarray
    Gm: np.ndarray
    E: np.ndarray
    H: np.ndarray

    @property
    def Q0_inv(self) -> np.ndarray:
        n = self.H.shape[0]
        inv = np.eye(self.Q0.shape[0])
        inv[:n, n:] = -self.H
        return inv

    @property
    def A(self) -> np.ndarray:
        """One-step propagator ``Q0^{-1} Q1``."""
        return self.Q0_inv @ self.Q1


def var1_matrices(model: ModelSpec, t: int, regime: int, measure: str = "risk-neutral") -> Var1Matrices:
    if not 1 <= t <= model.T:
        raise InputError(f"period {t} outside 1..{model.T}")
    n, ntil = model.n, model.ntil
    g = model.lin.g[t - 1]
    G = np.diag(g)
    H = np.hstack([G - np.eye(n), np.zeros((n, 1))])
    Q0 = np.eye(ntil)
    Q0[:n, n:] = H
    Gm = np.eye(ntil)
    Gm[:n, :n] = G
    Q1 = np.zeros((ntil, ntil))
    Q1[:n, :n] = G
    if measure == "risk-neutral":
        E = np.eye(n + 1) + np.outer(model.coupling[regime] @ np.ones(n), jr(n))
        Q1[:n, n:] = np.outer(g, jr(n))
    elif measure == "real":
        E = np.eye(n + 1)
    else:
        raise InputError(f"unknown measure {measure!r}")
    Q1[n:, n:] = E
    return Var1Matrices(Q0=Q0, Q1=Q1, Gm=Gm, E=E, H=H)


def _path_var1(model, path: RegimePath, first: int, last: int, measure: str):
    return {a: var1_matrices(model, a, path.regime_at(a), measure) for a in range(first, last + 1)}


def pi_matrix(model: ModelSpec, beta: int, i: int, path: RegimePath,
              measure: str = "risk-neutral") -> np.ndarray:
    """Propagator ``Pi_{beta,i}``.

    For ``beta < i`` this is ``prod_{a=beta+1}^{i} Q0_a^{-1} Q1_a`` (later
    periods on the left), assembled from its block form.  For ``beta == i`` it
    is ``Q0_i^{-1}``.
    """
    if not 0 <= beta <= i <= model.T:
        raise InputError(f"need 0 <= beta <= i <= T, got beta={beta}, i={i}")
    n, ntil = model.n, model.ntil
    if beta == i:
        return var1_matrices(model, i, path.regime_at(i), measure).Q0_inv
    mats = _path_var1(model, path, beta + 1, i, measure)
    G = {a: np.diag(model.lin.g[a - 1]) for a in mats}
    E = {a: mats[a].E for a in mats}
    Psi = {a: np.outer(model.lin.g[a - 1], jr(n)) - mats[a].H @ E[a] if measure == "risk-neutral"
           else -mats[a].H @ E[a] for a in mats}

    def prod(ms, lo, hi, k):
        out = np.eye(k)
        for a in range(lo, hi + 1):
            out = ms[a] @ out
        return out

    upper = np.zeros((n, n + 1))
    for a in range(beta + 1, i + 1):
        upper += prod(G, a + 1, i, n) @ Psi[a] @ prod(E, beta + 1, a - 1, n + 1)
    out = np.zeros((ntil, ntil))
    out[:n, :n] = prod(G, beta + 1, i, n)
    out[:n, n:] = upper
    out[n:, n:] = prod(E, beta + 1, i, n + 1)
    return out


def impact_matrix(model: ModelSpec, beta: int, i: int, path: RegimePath,
                  measure: str = "risk-neutral") -> np.ndarray:
    """Loading of the period-``beta`` intercept and shock on ``x_i``: ``Pi_{beta,i} Q0_beta^{-1}`` for ``beta < i``."""
    if not 1 <= beta <= i <= model.T:
        raise InputError(f"need 1 <= beta <= i <= T, got beta={beta}, i={i}")
    q0inv = var1_matrices(model, beta, path.regime_at(beta), measure).Q0_inv
    if beta == i:
        return q0inv
    return pi_matrix(model, beta, i, path, measure) @ q0inv


# --------------------------------------------------------------------------- #
# Conditional moments
# --------------------------------------------------------------------------- #

@dataclass(frozen=True, eq=False)
class ConditionalMoments:
    """Gaussian law of ``(x_{t+1}, ..., x_{t+m})`` given time-``t`` information and a regime path.

    ``mu_c`` is the stacked mean (length ``ntil*m``), ``Sigma_c`` the stacked
    covariance.  ``loading`` and ``offset`` give ``mu_c = loading @ x_t + offset``
    so the same object can be re-anchored at another time-``t`` state.
    """

    t: int
    x_t: np.ndarray
    mu_c: np.ndarray
    Sigma_c: np.ndarray
    loading: np.ndarray
    offset: np.ndarray
    ntil: int
    path: RegimePath
    measure: str = "risk-neutral"

    @property
    def horizon(self) -> int:
        return self.mu_c.shape[0] // self.ntil

    @property
    def last(self) -> int:
        return self.t + self.horizon

    def _blk(self, i: int) -> slice:
        if not self.t < i <= self.last:
            raise InputError(f"period {i} outside ({self.t}, {self.last}]")
        k = i - self.t - 1
        return slice(k * self.ntil, (k + 1) * self.ntil)

    def mean(self, i: int) -> np.ndarray:
        return self.mu_c[self._blk(i)]

    def cov(self, i1: int, i2: int | None = None) -> np.ndarray:
        return self.Sigma_c[self._blk(i1), self._blk(i1 if i2 is None else i2)]

    def index(self, i: int, component: int) -> int:
        """Position of ``component`` of ``x_i`` inside the stacked vector."""
        return self._blk(i).start + component

    def at(self, x_t) -> "ConditionalMoments":
        x_t = np.asarray(x_t, dtype=float)
        return ConditionalMoments(t=self.t, x_t=x_t, mu_c=self.loading @ x_t + self.offset,
                                  Sigma_c=self.Sigma_c, loading=self.loading, offset=self.offset,
                                  ntil=self.ntil, path=self.path, measure=self.measure)


def conditional_moments(model: ModelSpec, t: int, x_t, path: RegimePath,
                        measure: str = "risk-neutral", until: int | None = None) -> ConditionalMoments:
    """Stacked conditional mean and covariance of ``x_{t+1..until}`` (default ``until = T``)."""
    from .measures import intercept

    until = model.T if until is None else until
    if not 0 <= t < until <= model.T:
        raise InputError(f"need 0 <= t < until <= T, got t={t}, until={until}")
    ntil = model.ntil
    m = until - t
    x_t = np.asarray(x_t, dtype=float)
    loading = np.zeros((m * ntil, ntil))
    offset = np.zeros(m * ntil)
    L = np.zeros((m * ntil, m * ntil))   # stacked shock loadings M_{beta,i} Gm_beta
    blocks = []                          # Gm_beta Sigma_beta Gm_beta'
    lin_prev, off_prev = np.eye(ntil), np.zeros(ntil)
    impacts: list[np.ndarray] = []       # M_{beta, i-1} for beta = t+1..i-1
    for k, i in enumerate(range(t + 1, until + 1)):
        s = path.regime_at(i)
        v = var1_matrices(model, i, s, measure)
        A, q0inv = v.A, v.Q0_inv
        lin_prev = A @ lin_prev
        off_prev = A @ off_prev + q0inv @ intercept(model, i, s, measure)
        loading[k * ntil:(k + 1) * ntil] = lin_prev
        offset[k * ntil:(k + 1) * ntil] = off_prev
        impacts = [A @ M for M in impacts] + [q0inv]
        gm = v.Gm
        blocks.append(gm @ model.Sigma[s] @ gm.T)
        for b, M in enumerate(impacts):
            L[k * ntil:(k + 1) * ntil, b * ntil:(b + 1) * ntil] = M
    Sbar = np.zeros((m * ntil, m * ntil))
    for b, B in enumerate(blocks):
        Sbar[b * ntil:(b + 1) * ntil, b * ntil:(b + 1) * ntil] = B
    Sigma_c = L @ Sbar @ L.T
    Sigma_c = 0.5 * (Sigma_c + Sigma_c.T)
    for arr in (loading, offset, Sigma_c):
        arr.setflags(write=False)
    return ConditionalMoments(t=t, x_t=x_t, mu_c=loading @ x_t + offset, Sigma_c=Sigma_c,
                              loading=loading, offset=offset, ntil=ntil, path=path,
                              measure=measure)
