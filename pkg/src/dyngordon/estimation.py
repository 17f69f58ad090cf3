"""Maximum-likelihood estimation of the single-regime model.

Parameters are ``c_k = vec(C_k)``, ``c_y = vec(C_y)`` (column-major, so that
``C psi = (psi' kron I) vec(C)``) and the shock covariance ``Sigma``.  The
linearization schedule ``mu_t`` is itself a function of ``(c_k, c_y)``
through the expected-dividend recursion, and the likelihood carries the
Jacobian term ``-sum_t log|G_t|``.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg

from .errors import InputError, NumericalError
from .model import ModelSpec, solve_mu_recursion, step_real

__all__ = [
    "PanelData",
    "Params",
    "MuSchedule",
    "Residuals",
    "EstimationResult",
    "mu_schedule",
    "residuals",
    "loglik",
    "score",
    "score_vector",
    "zigzag_estimate",
    "initial_params",
    "standard_errors",
    "simulate_panel",
    "load_panel",
    "write_panel",
]


# --------------------------------------------------------------------------- #
# Data and parameters
# --------------------------------------------------------------------------- #

@dataclass(frozen=True, eq=False)
class PanelData:
    """Observed log prices, log dividends and log rates for ``t = 0..T`` and exogenous
    series for ``t = 1..T``."""

    logP: np.ndarray
    logd: np.ndarray
    logr: np.ndarray
    psi_k: np.ndarray
    psi_y: np.ndarray
    dates: tuple = field(default=(), repr=False)

    def __post_init__(self):
        logP = np.asarray(self.logP, dtype=float)
        logd = np.asarray(self.logd, dtype=float)
        logP = logP[:, None] if logP.ndim == 1 else logP
        logd = logd[:, None] if logd.ndim == 1 else logd
        logr = np.asarray(self.logr, dtype=float).reshape(-1)
        psi_k = np.asarray(self.psi_k, dtype=float)
        psi_y = np.asarray(self.psi_y, dtype=float)
        psi_k = psi_k[:, None] if psi_k.ndim == 1 else psi_k
        psi_y = psi_y[:, None] if psi_y.ndim == 1 else psi_y
        T1 = logP.shape[0]
        if T1 < 2:
            raise InputError("panel needs at least two dates")
        if logd.shape != logP.shape or logr.shape != (T1,):
            raise InputError("price, dividend and rate columns must share the same dates")
        if psi_k.shape[0] != T1 - 1 or psi_y.shape[0] != T1 - 1:
            raise InputError("exogenous series must cover periods 1..T")
        for name, a in (("logP", logP), ("logd", logd), ("logr", logr), ("psi_k", psi_k), ("psi_y", psi_y)):
            if not np.all(np.isfinite(a)):
                raise InputError(f"panel column {name} has non-finite values")
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def T(self) -> int:
        return self.logP.shape[0] - 1

    @property
    def n(self) -> int:
        return self.logP.shape[1]

    @property
    def y(self) -> np.ndarray:
        return np.column_stack([self.logd, self.logr])

    @property
    def states(self) -> np.ndarray:
        return np.column_stack([self.logP, self.logd, self.logr])

    @classmethod
    def from_states(cls, states, psi_k, psi_y) -> "PanelData":
        states = np.asarray(states, dtype=float)
        n = (states.shape[1] - 1) // 2
        return cls(states[:, :n], states[:, n:2 * n], states[:, 2 * n], psi_k, psi_y)


@dataclass(frozen=True, eq=False)
class Params:
    """``Ck`` (n, l_k), ``Cy`` (n+1, l_y) and ``Sigma`` (2n+1, 2n+1)."""

    Ck: np.ndarray
    Cy: np.ndarray
    Sigma: np.ndarray

    def __post_init__(self):
        for name in ("Ck", "Cy", "Sigma"):
            a = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            object.__setattr__(self, name, a)

    @property
    def n(self) -> int:
        return self.Ck.shape[0]

    @property
    def c_k(self) -> np.ndarray:
        return self.Ck.reshape(-1, order="F")

    @property
    def c_y(self) -> np.ndarray:
        return self.Cy.reshape(-1, order="F")

    @classmethod
    def from_vectors(cls, c_k, c_y, Sigma, n: int) -> "Params":
        c_k, c_y = np.asarray(c_k, dtype=float), np.asarray(c_y, dtype=float)
        return cls(c_k.reshape(n, -1, order="F"), c_y.reshape(n + 1, -1, order="F"), Sigma)

    def theta(self) -> np.ndarray:
        return np.concatenate([self.c_k, self.c_y, _vech(self.Sigma)])

    @classmethod
    def from_theta(cls, theta, n: int, l_k: int, l_y: int) -> "Params":
        theta = np.asarray(theta, dtype=float)
        a, b = n * l_k, n * l_k + (n + 1) * l_y
        return cls.from_vectors(theta[:a], theta[a:b], _unvech(theta[b:], 2 * n + 1), n)

    def to_model(self, panel: PanelData) -> ModelSpec:
        return ModelSpec(Ck=self.Ck[None], Cy=self.Cy[None], Sigma=self.Sigma[None], P=[[1.0]], p1=[1.0],
                         psi_k=panel.psi_k, psi_y=panel.psi_y, x0=panel.states[0])


def _vech(S):
    idx = np.tril_indices(S.shape[0])
    return S[idx]


def _unvech(v, k):
    S = np.zeros((k, k))
    S[np.tril_indices(k)] = v
    return S + np.tril(S, -1).T


def _check(params: Params, panel: PanelData):
    n = panel.n
    if params.Ck.shape != (n, panel.psi_k.shape[1]):
        raise InputError(f"Ck must have shape ({n}, {panel.psi_k.shape[1]})")
    if params.Cy.shape != (n + 1, panel.psi_y.shape[1]):
        raise InputError(f"Cy must have shape ({n + 1}, {panel.psi_y.shape[1]})")
    if params.Sigma.shape != (2 * n + 1, 2 * n + 1):
        raise InputError(f"Sigma must be {2 * n + 1}x{2 * n + 1}")


# --------------------------------------------------------------------------- #
# Linearization schedule and residuals
# --------------------------------------------------------------------------- #

@dataclass(frozen=True, eq=False)
class MuSchedule:
    """``mu[t-1]``, ``g[t-1]``, ``h[t-1]`` for ``t = 1..T`` and ``mu0 = logd_0 - logP_0``."""

    mu0: np.ndarray
    mu: np.ndarray
    g: np.ndarray
    h: np.ndarray

    def G(self, t: int) -> np.ndarray:
        return np.diag(self.g[t - 1])


def mu_schedule(params: Params, panel: PanelData) -> MuSchedule:
    n = panel.n
    mu0 = panel.logd[0] - panel.logP[0]
    growth = panel.psi_y @ params.Cy[:n].T - panel.psi_k @ params.Ck.T
    mu = solve_mu_recursion(mu0, growth)
    g = 1.0 + np.exp(mu)
    h = g * (np.log(g) - mu) + mu
    return MuSchedule(mu0=mu0, mu=mu, g=g, h=h)


@dataclass(frozen=True, eq=False)
class Residuals:
    """``u[t-1]`` and ``eta[t-1]`` for ``t = 1..T``; ``xi`` stacks them."""

    u: np.ndarray
    eta: np.ndarray
    sched: MuSchedule

    @property
    def xi(self) -> np.ndarray:
        return np.hstack([self.u, self.eta])


def residuals(params: Params, panel: PanelData, sched: MuSchedule | None = None) -> Residuals:
    _check(params, panel)
    sched = mu_schedule(params, panel) if sched is None else sched
    P, d = panel.logP, panel.logd
    g, h = sched.g, sched.h
    u = (P[1:] - d[1:]) / g - P[:-1] + d[1:] - panel.psi_k @ params.Ck.T + h / g
    y = panel.y
    eta = y[1:] - panel.psi_y @ params.Cy.T - y[:-1]
    return Residuals(u=u, eta=eta, sched=sched)


def loglik(params: Params, panel: PanelData, res: Residuals | None = None) -> float:
    _check(params, panel)
    res = residuals(params, panel) if res is None else res
    S = params.Sigma
    try:
        c = linalg.cho_factor(S, lower=True)
    except linalg.LinAlgError:
        raise InputError("Sigma must be positive definite") from None
    xi = res.xi
    T, k = xi.shape
    quad = np.sum(xi * linalg.cho_solve(c, xi.T).T)
    logdet = 2.0 * np.sum(np.log(np.diag(c[0])))
    return float(-0.5 * k * T * np.log(2 * np.pi) - 0.5 * T * logdet - 0.5 * quad
                 - np.sum(np.log(res.sched.g)))


# --------------------------------------------------------------------------- #
# Analytic score
# --------------------------------------------------------------------------- #

@dataclass(frozen=True, eq=False)
class _Derivs:
    """Per-period derivative blocks used by the score and the zig-zag solves."""

    Xk: np.ndarray      # (T, n, n l_k)  kron(psi_k', I_n)
    Y: np.ndarray       # (T, n+1, (n+1) l_y)  kron(psi_y', I_{n+1})
    Mk: np.ndarray      # (T, n, n l_k)  d mu_t / d c_k
    My: np.ndarray      # (T, n, (n+1) l_y)  d mu_t / d c_y
    Du: np.ndarray      # (T, n)  d u_t / d mu_t (diagonal)


def _derivs(panel: PanelData, res: Residuals) -> _Derivs:
    n, T = panel.n, panel.T
    sched = res.sched
    In, In1 = np.eye(n), np.eye(n + 1)
    Xk = np.stack([np.kron(panel.psi_k[t], In) for t in range(T)])
    Y = np.stack([np.kron(panel.psi_y[t], In1) for t in range(T)])
    dak = -Xk
    day = Y[:, :n, :]
    Mk = np.empty_like(dak)
    My = np.empty_like(day)
    prev_k = np.zeros(dak.shape[1:])
    prev_y = np.zeros(day.shape[1:])
    # d mu_t = G_t (d mu_{t-1} + d a_t): the fixed point mu = mu_{t-1} + log g(mu) + a_t
    for t in range(T):
        g = sched.g[t][:, None]
        prev_k = g * (prev_k + dak[t])
        prev_y = g * (prev_y + day[t])
        Mk[t], My[t] = prev_k, prev_y
    e = panel.logd[1:] - panel.logP[1:]
    Du = (e - sched.mu) * (sched.g - 1.0) / sched.g ** 2
    return _Derivs(Xk=Xk, Y=Y, Mk=Mk, My=My, Du=Du)


@dataclass(frozen=True, eq=False)
class Score:
    c_k: np.ndarray
    c_y: np.ndarray
    Sigma: np.ndarray

    def vector(self) -> np.ndarray:
        """Gradient with respect to ``(c_k, c_y, vech(Sigma))``."""
        G = self.Sigma
        v = 2.0 * G - np.diag(np.diag(G))
        return np.concatenate([self.c_k, self.c_y, _vech(v)])


def score(params: Params, panel: PanelData) -> Score:
    _check(params, panel)
    res = residuals(params, panel)
    dv = _derivs(panel, res)
    n = panel.n
    Sinv = np.linalg.inv(params.Sigma)
    Sinv = 0.5 * (Sinv + Sinv.T)
    xi = res.xi
    w = xi @ Sinv
    wu, we = w[:, :n], w[:, n:]
    jac = 1.0 - 1.0 / res.sched.g
    du_k = dv.Du[:, :, None] * dv.Mk - dv.Xk
    du_y = dv.Du[:, :, None] * dv.My
    s_k = -np.einsum("ti,tij->j", wu, du_k) - np.einsum("ti,tij->j", jac, dv.Mk)
    s_y = (-np.einsum("ti,tij->j", wu, du_y) + np.einsum("ti,tij->j", we, dv.Y)
           - np.einsum("ti,tij->j", jac, dv.My))
    T = panel.T
    S = xi.T @ xi
    s_S = -0.5 * T * Sinv + 0.5 * Sinv @ S @ Sinv
    return Score(c_k=s_k, c_y=s_y, Sigma=0.5 * (s_S + s_S.T))


def score_vector(params: Params, panel: PanelData) -> np.ndarray:
    return score(params, panel).vector()


# --------------------------------------------------------------------------- #
# Zig-zag iteration
# --------------------------------------------------------------------------- #

def _solve(A, b, block):
    try:
        with warnings.catch_warnings():
            # an exactly singular pivot is reported below as our own error
            warnings.simplefilter("ignore", linalg.LinAlgWarning)
            lu = linalg.lu_factor(A, check_finite=True)
    except (linalg.LinAlgError, ValueError):
        raise NumericalError(f"singular linear system in the {block} block") from None
    if np.any(np.abs(np.diag(lu[0])) < 1e-14 * max(1.0, np.abs(A).max())):
        raise NumericalError(f"singular linear system in the {block} block")
    return linalg.lu_solve(lu, b)


def _update_ck(params: Params, panel: PanelData) -> Params:
    n = panel.n
    res = residuals(params, panel)
    dv = _derivs(panel, res)
    Om = np.linalg.inv(params.Sigma)
    Ouu, Oue = Om[:n, :n], Om[:n, n:]
    J = dv.Du[:, :, None] * dv.Mk - dv.Xk
    a = res.u + np.einsum("tij,j->ti", dv.Xk, params.c_k)
    jac = 1.0 - 1.0 / res.sched.g
    A = np.einsum("tia,ij,tjb->ab", J, Ouu, dv.Xk)
    rhs = (np.einsum("tia,ti->a", J, a @ Ouu.T + res.eta @ Oue.T)
           + np.einsum("tia,ti->a", dv.Mk, jac))
    c_k = _solve(A, rhs, "c_k")
    return Params.from_vectors(c_k, params.c_y, params.Sigma, n)


def _update_cy(params: Params, panel: PanelData) -> Params:
    n = panel.n
    res = residuals(params, panel)
    dv = _derivs(panel, res)
    Om = np.linalg.inv(params.Sigma)
    Ouu, Oue = Om[:n, :n], Om[:n, n:]
    Oeu, Oee = Om[n:, :n], Om[n:, n:]
    Ju = dv.Du[:, :, None] * dv.My
    y = panel.y
    b = y[1:] - y[:-1]
    jac = 1.0 - 1.0 / res.sched.g
    A = np.einsum("tia,ij,tjb->ab", dv.Y, Oee, dv.Y)
    rhs = (np.einsum("tia,ti->a", dv.Y, res.u @ Oeu.T + b @ Oee.T)
           - np.einsum("tia,ti->a", Ju, res.u @ Ouu.T + res.eta @ Oue.T)
           - np.einsum("tia,ti->a", dv.My, jac))
    c_y = _solve(A, rhs, "c_y")
    return Params.from_vectors(params.c_k, c_y, params.Sigma, n)


def _update_sigma(params: Params, panel: PanelData) -> Params:
    xi = residuals(params, panel).xi
    S = xi.T @ xi / panel.T
    return Params(params.Ck, params.Cy, 0.5 * (S + S.T))


def initial_params(panel: PanelData) -> Params:
    """Least-squares start: ``c_y`` from ``y_t - y_{t-1}`` on ``psi_y``, ``c_k`` from the log
    gross return ``log((P_t + d_t) / P_{t-1})`` on ``psi_k``, ``Sigma`` from the residuals."""
    y = panel.y
    dy = y[1:] - y[:-1]
    Cy = np.linalg.lstsq(panel.psi_y, dy, rcond=None)[0].T
    ret = np.logaddexp(panel.logP[1:], panel.logd[1:]) - panel.logP[:-1]
    Ck = np.linalg.lstsq(panel.psi_k, ret, rcond=None)[0].T
    k = 2 * panel.n + 1
    p = Params(Ck, Cy, np.eye(k))
    xi = residuals(p, panel).xi
    S = xi.T @ xi / panel.T
    return Params(Ck, Cy, 0.5 * (S + S.T) + 1e-12 * np.eye(k))


@dataclass(frozen=True, eq=False)
class EstimationResult:
    c_k_hat: np.ndarray
    c_y_hat: np.ndarray
    Sigma_hat: np.ndarray
    loglik: float
    iterations: int
    converged: bool
    mu_path: np.ndarray
    n: int
    score_norm: float = float("nan")
    se: dict | None = None
    history: tuple = field(default=(), repr=False)

    @property
    def params(self) -> Params:
        return Params.from_vectors(self.c_k_hat, self.c_y_hat, self.Sigma_hat, self.n)

    def to_dict(self) -> dict:
        out = {
            "c_k": self.c_k_hat.tolist(),
            "c_y": self.c_y_hat.tolist(),
            "Sigma": self.Sigma_hat.tolist(),
            "loglik": self.loglik,
            "iterations": self.iterations,
            "converged": self.converged,
            "score_norm": self.score_norm,
            "mu": self.mu_path.tolist(),
        }
        if self.se is not None:
            out["se"] = {k: np.asarray(v).tolist() for k, v in self.se.items()}
        return out


def _safe_loglik(params: Params, panel: PanelData) -> float:
    try:
        return loglik(params, panel)
    except NumericalError:
        return -np.inf


def _damped(old: Params, proposal: Params, ll_old: float, panel: PanelData, halvings: int = 40):
    """Step from ``old`` toward ``proposal``, halving until the likelihood does not drop.

    The block solves are fixed-point updates, not ascent steps, and a full
    step can leave the region where the mu recursion has a solution.
    """
    step = 1.0
    n = panel.n
    for _ in range(halvings):
        c_k = old.c_k + step * (proposal.c_k - old.c_k)
        c_y = old.c_y + step * (proposal.c_y - old.c_y)
        cand = Params.from_vectors(c_k, c_y, old.Sigma, n)
        ll = _safe_loglik(cand, panel)
        if ll >= ll_old - 1e-12 * max(1.0, abs(ll_old)):
            return cand, ll
        step *= 0.5
    return old, ll_old


def zigzag_sweep(params: Params, panel: PanelData) -> Params:
    """One sweep: c_k solve, c_y solve, Sigma update (the mu schedule is refreshed each time)."""
    ll = loglik(params, panel)
    params, ll = _damped(params, _update_ck(params, panel), ll, panel)
    params, ll = _damped(params, _update_cy(params, panel), ll, panel)
    return _update_sigma(params, panel)


def _newton_polish(params: Params, panel: PanelData, ll: float, score_tol: float,
                   max_steps: int = 50, halvings: int = 40):
    """Damped Newton steps on the full parameter vector.

    Used only when the block updates stop moving while the score is still
    large.  A step is accepted when Sigma stays positive definite and either
    the likelihood rises or, within rounding of the likelihood, the score
    norm falls.
    """
    n, lk, ly = panel.n, panel.psi_k.shape[1], panel.psi_y.shape[1]
    g = score_vector(params, panel)
    gnorm = np.linalg.norm(g)
    slack = 1e-12 * max(1.0, abs(ll))
    for _ in range(max_steps):
        if gnorm < score_tol:
            break
        theta = params.theta()
        w, V = np.linalg.eigh(observed_information(params, panel))
        # flip and floor the curvature so the step is an ascent direction
        w = np.maximum(np.abs(w), 1e-8 * max(1.0, np.abs(w).max()))
        step = V @ ((V.T @ g) / w)
        lam, moved = 1.0, False
        for _ in range(halvings):
            cand = Params.from_theta(theta + lam * step, n, lk, ly)
            if np.all(np.linalg.eigvalsh(cand.Sigma) > 0):
                cll = _safe_loglik(cand, panel)
                if cll >= ll - slack:
                    cg = score_vector(cand, panel)
                    cnorm = np.linalg.norm(cg)
                    if cll > ll + slack or cnorm < gnorm:
                        params, ll, g, gnorm, moved = cand, cll, cg, cnorm, True
                        break
            lam *= 0.5
        if not moved:
            break
    return params, ll


def zigzag_estimate(panel: PanelData, init: Params | None = None, tol: float = 1e-8,
                    rel_tol: float = 1e-10, max_iter: int = 500, score_tol: float = 1e-6,
                    compute_se: bool = True) -> EstimationResult:
    """Zig-zag maximum likelihood.

    Stops when the largest parameter change is below ``tol``, the relative
    log-likelihood change below ``rel_tol`` and the score norm below
    ``score_tol``; otherwise returns after ``max_iter`` sweeps with
    ``converged=False``.
    """
    params = initial_params(panel) if init is None else init
    _check(params, panel)
    ll = loglik(params, panel)
    converged = False
    it = 0
    trace = [ll]
    for it in range(1, max_iter + 1):
        new = zigzag_sweep(params, panel)
        new_ll = loglik(new, panel)
        if not np.isfinite(new_ll):
            raise NumericalError("log-likelihood became non-finite during the zig-zag iteration")
        change = np.max(np.abs(new.theta() - params.theta()))
        rel = abs(new_ll - ll) / max(1.0, abs(ll))
        params, ll = new, new_ll
        if rel < rel_tol:
            if change < tol and np.linalg.norm(score_vector(params, panel)) < score_tol:
                trace.append(ll)
                converged = True
                break
            # the likelihood is flat but the block updates creep or stall
            params, ll = _newton_polish(params, panel, ll, score_tol)
            if np.linalg.norm(score_vector(params, panel)) < score_tol:
                trace.append(ll)
                converged = True
                break
        trace.append(ll)
    g = score_vector(params, panel)
    se = standard_errors(params, panel) if compute_se else None
    return EstimationResult(c_k_hat=params.c_k, c_y_hat=params.c_y, Sigma_hat=params.Sigma, loglik=ll,
                            iterations=it, converged=converged, mu_path=mu_schedule(params, panel).mu,
                            n=panel.n, score_norm=float(np.linalg.norm(g)), se=se, history=tuple(trace))


def observed_information(params: Params, panel: PanelData, rel_step: float = 1e-5) -> np.ndarray:
    """Minus the Hessian of the log-likelihood, by central differences of the analytic score."""
    theta = params.theta()
    n, lk, ly = panel.n, panel.psi_k.shape[1], panel.psi_y.shape[1]
    H = np.empty((theta.size, theta.size))
    for a in range(theta.size):
        h = rel_step * max(1e-3, abs(theta[a]))
        tp, tm = theta.copy(), theta.copy()
        tp[a] += h
        tm[a] -= h
        gp = score_vector(Params.from_theta(tp, n, lk, ly), panel)
        gm = score_vector(Params.from_theta(tm, n, lk, ly), panel)
        H[:, a] = (gp - gm) / (2 * h)
    H = 0.5 * (H + H.T)
    return -H


def standard_errors(params: Params, panel: PanelData) -> dict:
    info = observed_information(params, panel)
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        raise NumericalError("observed information is singular") from None
    sd = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    a = params.c_k.size
    b = a + params.c_y.size
    return {"c_k": sd[:a], "c_y": sd[a:b], "Sigma_vech": sd[b:]}


# --------------------------------------------------------------------------- #
# Simulation and panel files
# --------------------------------------------------------------------------- #

def simulate_panel(params: Params, x0, psi_k, psi_y, rng=None, shocks=None) -> tuple[PanelData, np.ndarray]:
    """Simulate a panel under the real measure; returns the panel and the shocks used."""
    psi_k = np.asarray(psi_k, dtype=float)
    psi_y = np.asarray(psi_y, dtype=float)
    psi_k = psi_k[:, None] if psi_k.ndim == 1 else psi_k
    psi_y = psi_y[:, None] if psi_y.ndim == 1 else psi_y
    model = ModelSpec(Ck=params.Ck[None], Cy=params.Cy[None], Sigma=params.Sigma[None], P=[[1.0]], p1=[1.0],
                      psi_k=psi_k, psi_y=psi_y, x0=x0)
    T = model.T
    if shocks is None:
        rng = np.random.default_rng(0) if rng is None else rng
        shocks = rng.standard_normal((T, model.ntil)) @ model.chol[0].T
    shocks = np.asarray(shocks, dtype=float)
    states = np.empty((T + 1, model.ntil))
    states[0] = model.x0
    for t in range(1, T + 1):
        states[t] = step_real(model, states[t - 1], 0, shocks[t - 1], t)
    return PanelData.from_states(states, psi_k, psi_y), shocks


def load_panel(path) -> PanelData:
    """Read a panel CSV with columns date, P_1..P_n, d_1..d_n, r, psi_k_*, psi_y_*.

    Prices and dividends are levels, ``r`` the simple spot rate (``log(1 + r)``
    is the log rate).  The exogenous columns of the first row are ignored.
    """
    try:
        with open(Path(path), newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [r for r in reader if r]
    except (OSError, StopIteration) as exc:
        raise InputError(f"cannot read panel file {path}: {exc}") from None
    cols = {name: i for i, name in enumerate(header)}
    pc = sorted((c for c in header if c.startswith("P_")), key=lambda c: int(c[2:]))
    dc = sorted((c for c in header if c.startswith("d_")), key=lambda c: int(c[2:]))
    kc = [c for c in header if c.startswith("psi_k_")]
    yc = [c for c in header if c.startswith("psi_y_")]
    if not pc or len(pc) != len(dc) or "r" not in cols or "date" not in cols or not kc or not yc:
        raise InputError("panel CSV needs columns date, P_1..P_n, d_1..d_n, r, psi_k_*, psi_y_*")
    try:
        data = {c: np.array([float(r[cols[c]]) for r in rows]) for c in pc + dc + ["r"] + kc + yc}
    except (ValueError, IndexError) as exc:
        raise InputError(f"malformed panel row: {exc}") from None
    P = np.column_stack([data[c] for c in pc])
    d = np.column_stack([data[c] for c in dc])
    if np.any(P <= 0) or np.any(d <= 0) or np.any(data["r"] <= -1):
        raise InputError("panel prices and dividends must be positive and rates above -1")
    return PanelData(np.log(P), np.log(d), np.log1p(data["r"]),
                     np.column_stack([data[c][1:] for c in kc]),
                     np.column_stack([data[c][1:] for c in yc]),
                     dates=tuple(r[cols["date"]] for r in rows))


def write_panel(panel: PanelData, path, dates=None):
    n = panel.n
    lk, ly = panel.psi_k.shape[1], panel.psi_y.shape[1]
    dates = dates or panel.dates or tuple(str(t) for t in range(panel.T + 1))
    header = (["date"] + [f"P_{i + 1}" for i in range(n)] + [f"d_{i + 1}" for i in range(n)] + ["r"]
              + [f"psi_k_{i + 1}" for i in range(lk)] + [f"psi_y_{i + 1}" for i in range(ly)])
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t in range(panel.T + 1):
            pk = panel.psi_k[t - 1] if t else np.zeros(lk)
            py = panel.psi_y[t - 1] if t else np.zeros(ly)
            vals = np.concatenate([np.exp(panel.logP[t]), np.exp(panel.logd[t]), [np.expm1(panel.logr[t])], pk, py])
            w.writerow([dates[t]] + [format(v, ".17g") for v in vals])
