"""Monte Carlo oracle for prices, bond prices and hedge moments.

Paths are generated in fixed-size blocks.  Block ``b`` draws from
``numpy.random.default_rng([seed, b])``, so every path is reproducible no
matter how blocks are scheduled across workers, and reductions run in block
order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .insurance import MortalityTable, ProductSpec, benefit_weights, survival_factors
from .measures import step_risk_neutral
from .model import ModelSpec, RegimePath, log_gain, step_real
from .pricing import OptionSpec

__all__ = [
    "BLOCK",
    "SimConfig",
    "Ensemble",
    "MCEstimate",
    "simulate",
    "run_blocks",
    "estimate",
    "estimate_price",
    "estimate_hedge_moments",
    "claim_payoff",
]

BLOCK = 4096


@dataclass(frozen=True)
class SimConfig:
    paths: int
    seed: int = 0
    measure: str = "risk-neutral"
    antithetic: bool = False
    workers: int = 1

    def __post_init__(self):
        if int(self.paths) != self.paths or self.paths < 1:
            raise InputError("paths must be a positive integer")
        if self.measure not in ("real", "risk-neutral"):
            raise InputError(f"unknown measure {self.measure!r}")
        if self.antithetic and self.paths % 2:
            raise InputError("antithetic sampling needs an even number of paths")
        if self.workers < 1:
            raise InputError("workers must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise InputError("seed must be a 64-bit unsigned integer")

    def blocks(self) -> list[tuple[int, int]]:
        """``(block index, paths in block)`` in order."""
        full, rest = divmod(self.paths, BLOCK)
        sizes = [BLOCK] * full + ([rest] if rest else [])
        return list(enumerate(sizes))


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Simulated states ``x_t..x_{t+m}`` (axis 1) with the regimes of periods ``t+1..t+m``.

    ``discount[:, k]`` is ``D_{t+k} / D_t``.  With antithetic sampling the
    first and second halves of the paths are mirror images.
    """

    t: int
    states: np.ndarray
    regimes: np.ndarray
    discount: np.ndarray
    measure: str
    antithetic: bool = False
    block_seeds: tuple = field(default=(), repr=False)

    @property
    def paths(self) -> int:
        return self.states.shape[0]

    @property
    def horizon(self) -> int:
        return self.states.shape[1] - 1

    def at(self, period: int) -> np.ndarray:
        k = period - self.t
        if not 0 <= k <= self.horizon:
            raise InputError(f"period {period} outside {self.t}..{self.t + self.horizon}")
        return self.states[:, k]

    def disc(self, period: int) -> np.ndarray:
        return self.discount[:, period - self.t]


@dataclass(frozen=True)
class MCEstimate:
    mean: np.ndarray | float
    se: np.ndarray | float
    paths: int


# --------------------------------------------------------------------------- #
# Path generation
# --------------------------------------------------------------------------- #

def _draw_regimes(model: ModelSpec, rng, size: int, t: int, m: int, regimes, start_probs):
    if isinstance(regimes, RegimePath):
        return np.tile([regimes.regime_at(a) for a in range(t + 1, t + m + 1)], (size, 1))
    if regimes is not None:
        raise InputError("regimes must be a RegimePath or None (draw from the chain)")
    if start_probs is None:
        if t != 0:
            raise InputError("start_probs needed to draw regimes after t = 0")
        first = model.p1
    elif isinstance(start_probs, (int, np.integer)):
        first = model.P[int(start_probs)]
    else:
        first = np.asarray(start_probs, dtype=float) @ model.P
    cum_p = np.cumsum(model.P, axis=1)
    out = np.empty((size, m), dtype=np.int64)
    u = rng.random((size, m))
    c1 = np.cumsum(first)
    out[:, 0] = np.minimum(np.searchsorted(c1, u[:, 0], side="right"), model.N - 1)
    for k in range(1, m):
        c = cum_p[out[:, k - 1]]
        out[:, k] = np.minimum((u[:, k:k + 1] >= c).sum(axis=1), model.N - 1)
    return out


def _simulate_block(model, config, t, x_t, m, regimes, start_probs, b, size):
    rng = np.random.default_rng([int(config.seed), b])
    ntil = model.ntil
    half = size // 2 if config.antithetic else size
    regs = _draw_regimes(model, rng, half, t, m, regimes, start_probs)
    z = rng.standard_normal((half, m, ntil))
    if config.antithetic:
        regs = np.concatenate([regs, regs])
        z = np.concatenate([z, -z])
    step = step_risk_neutral if config.measure == "risk-neutral" else step_real
    states = np.empty((size, m + 1, ntil))
    states[:, 0] = x_t
    for k in range(m):
        period = t + k + 1
        x_prev = states[:, k]
        nxt = np.empty_like(x_prev)
        for j in range(model.N):
            mask = regs[:, k] == j
            if np.any(mask):
                shock = z[mask, k] @ model.chol[j].T
                nxt[mask] = step(model, x_prev[mask], j, shock, period)
        states[:, k + 1] = nxt
    rates = states[:, :-1, -1]
    discount = np.exp(-np.concatenate([np.zeros((size, 1)), np.cumsum(rates, axis=1)], axis=1))
    return Ensemble(t=t, states=states, regimes=regs, discount=discount, measure=config.measure,
                    antithetic=config.antithetic, block_seeds=((int(config.seed), b),))


def run_blocks(model: ModelSpec, config: SimConfig, fn, t: int = 0, x_t=None, horizon: int | None = None,
               regimes=None, start_probs=None) -> list:
    """Simulate block by block and return ``[fn(block ensemble) for each block]`` in block order."""
    x_t = model.x0 if x_t is None else np.asarray(x_t, dtype=float)
    horizon = model.T - t if horizon is None else horizon
    if horizon < 1 or t + horizon > model.T:
        raise InputError(f"horizon {horizon} from t={t} exceeds the model horizon {model.T}")
    if x_t.shape != (model.ntil,):
        raise InputError(f"x_t must have length {model.ntil}")
    blocks = config.blocks()
    if config.antithetic and any(size % 2 for _, size in blocks):
        raise InputError("antithetic sampling needs even block sizes")

    def work(item):
        b, size = item
        return fn(_simulate_block(model, config, t, x_t, horizon, regimes, start_probs, b, size))

    if config.workers == 1:
        return [work(item) for item in blocks]
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        return list(pool.map(work, blocks))


def simulate(model: ModelSpec, config: SimConfig, t: int = 0, x_t=None, horizon: int | None = None,
             regimes=None, start_probs=None) -> Ensemble:
    """Full path ensemble.  ``regimes=None`` draws from the chain; a ``RegimePath`` fixes them."""
    parts = run_blocks(model, config, lambda e: e, t, x_t, horizon, regimes, start_probs)
    if config.antithetic:
        # keep the mirror structure of the whole ensemble: originals first
        halves = [(p.states.shape[0] // 2) for p in parts]
        def cat(attr):
            a = [getattr(p, attr)[:h] for p, h in zip(parts, halves)]
            b = [getattr(p, attr)[h:] for p, h in zip(parts, halves)]
            return np.concatenate(a + b)
    else:
        def cat(attr):
            return np.concatenate([getattr(p, attr) for p in parts])
    return Ensemble(t=parts[0].t, states=cat("states"), regimes=cat("regimes"), discount=cat("discount"),
                    measure=config.measure, antithetic=config.antithetic,
                    block_seeds=tuple(s for p in parts for s in p.block_seeds))


# --------------------------------------------------------------------------- #
# Estimators
# --------------------------------------------------------------------------- #

def _pairs(values, antithetic):
    values = np.asarray(values, dtype=float)
    if not antithetic:
        return values
    h = values.shape[0] // 2
    return 0.5 * (values[:h] + values[h:])


def _moments(values):
    """Count, mean and centred sum of squares of per-path values (axis 0)."""
    return values.shape[0], values.mean(axis=0), ((values - values.mean(axis=0)) ** 2).sum(axis=0)


def _combine(parts):
    # pairwise-stable merge of block statistics, in block order
    n, mean, m2 = parts[0]
    for nb, mb, m2b in parts[1:]:
        tot = n + nb
        delta = mb - mean
        mean = mean + delta * (nb / tot)
        m2 = m2 + m2b + delta ** 2 * (n * nb / tot)
        n = tot
    return n, mean, m2


def _finish(n, mean, m2, paths):
    var = m2 / max(n - 1, 1)
    se = np.sqrt(var / n)
    scal = lambda a: float(a) if np.ndim(a) == 0 else a
    return MCEstimate(mean=scal(mean), se=scal(se), paths=paths)


def estimate(model: ModelSpec, config: SimConfig, fn, t: int = 0, x_t=None, horizon=None,
             regimes=None, start_probs=None) -> MCEstimate:
    """Mean and standard error of ``fn(ensemble)`` (per-path values, axis 0), streamed by block.

    Antithetic pairs are averaged before the variance is taken.
    """
    parts = run_blocks(model, config, lambda e: _moments(_pairs(fn(e), e.antithetic)), t, x_t,
                       horizon, regimes, start_probs)
    return _finish(*_combine(parts), paths=config.paths)


def claim_payoff(model: ModelSpec, claim, table: MortalityTable | None = None, mortality: str = "analytic"):
    """Per-path discounted payoff ``Hbar / D_t`` of a claim, as a function of an ensemble.

    ``mortality="simulated"`` draws each insured's curtate lifetime from
    ``table`` with a generator tied to the block, instead of weighting the
    benefit dates analytically.
    """
    from .hedging import ZeroCouponClaim

    n = model.n

    def prices(ens, k):
        return np.exp(ens.at(k)[:, :n])

    if isinstance(claim, OptionSpec):
        def fn(ens):
            P = prices(ens, claim.maturity)
            D = ens.disc(claim.maturity)
            if claim.kind == "exchange":
                return D * np.maximum(claim.w_i * P[:, claim.i] - claim.w_j * P[:, claim.j], 0.0)
            K = claim.strikes(n)
            pay = np.maximum(P - K, 0.0) if claim.kind == "call" else np.maximum(K - P, 0.0)
            return D[:, None] * pay
        return fn
    if isinstance(claim, ZeroCouponClaim):
        return lambda ens: claim.amount * ens.disc(claim.maturity)
    if isinstance(claim, ProductSpec):
        if table is None:
            raise InputError("insurance claims need a mortality table")
        if mortality not in ("analytic", "simulated"):
            raise InputError(f"unknown mortality mode {mortality!r}")

        def benefit(ens, k):
            P = prices(ens, k)
            F, G = claim.fund(k, n), claim.guarantee(k, n)
            if claim.variant == "segregated":
                f = F * np.maximum(G / F - P, 0.0)
            else:
                f = F * np.maximum(P - G / F, 0.0) + G
            return ens.disc(k)[:, None] * f

        def fn(ens):
            sf = survival_factors(table, claim.age, ens.t, claim.T)
            weights = benefit_weights(claim, sf)
            if mortality == "analytic":
                out = np.zeros((ens.paths, n))
                for k, w in weights.items():
                    out += w * benefit(ens, k)
                return out
            # curtate lifetime after t: death in (k, k+1] with prob sf.death[k - t]
            rng = np.random.default_rng([*ens.block_seeds[0], 1])
            probs = np.append(sf.death, sf.survive)
            size = ens.paths // 2 if ens.antithetic else ens.paths
            K = rng.choice(probs.size, size=size, p=probs / probs.sum())
            if ens.antithetic:
                K = np.concatenate([K, K])
            out = np.zeros((ens.paths, n))
            for k in range(ens.t + 1, claim.T + 1):
                died = K == (k - 1 - ens.t)
                pays = died if claim.kind in ("term", "endowment_insurance") else np.zeros_like(died)
                if k == claim.T and claim.kind in ("endowment", "endowment_insurance"):
                    pays = pays | (K == probs.size - 1)
                if np.any(pays):
                    out[pays] += benefit(ens, k)[pays]
            return out
        return fn
    raise InputError(f"unsupported claim type {type(claim).__name__}")


def estimate_price(payoff, ensemble: Ensemble | None = None, *, model: ModelSpec | None = None,
                   config: SimConfig | None = None, table=None, **sim) -> MCEstimate:
    """Discounted-mean price estimate.

    ``payoff`` is a claim (option, zero-coupon, product) or a callable mapping
    an ensemble to per-path discounted payoffs.  Pass either a prebuilt
    ``ensemble`` or ``model`` and ``config`` to stream blocks.
    """
    if not callable(payoff):
        if model is None:
            raise InputError("model is required to build a claim payoff")
        payoff = claim_payoff(model, payoff, table)
    if ensemble is not None:
        vals = _pairs(payoff(ensemble), ensemble.antithetic)
        return _finish(*_moments(vals), paths=ensemble.paths)
    if model is None or config is None:
        raise InputError("estimate_price needs an ensemble or a model and config")
    return estimate(model, config, payoff, **sim)


def estimate_hedge_moments(model: ModelSpec, claim, config: SimConfig, t: int = 0, x_t=None,
                           D_t: float = 1.0, table=None, regimes=None, start_probs=None) -> dict:
    """Monte Carlo ``Omega_hat`` and ``Lambda_hat`` at time ``t`` with standard errors.

    ``Lambda_hat`` averages ``(Pbar_{t+1} + dbar_{t+1} - Pbar_t) Hbar`` whose mean is the
    covariance because the gain has mean zero under the risk-neutral measure.
    """
    if config.measure != "risk-neutral":
        raise InputError("hedge moments are defined under the risk-neutral measure")
    from .hedging import claim_horizon

    n = model.n
    x_t = model.x0 if x_t is None else np.asarray(x_t, dtype=float)
    horizon = claim_horizon(claim) - t
    pay = claim_payoff(model, claim, table)
    Pbar = D_t * np.exp(x_t[:n])

    def fn(ens):
        x1 = ens.at(t + 1)
        total = np.exp(ens.at(t)[:, :n] + log_gain(ens.at(t), x1, model.lin, t + 1))
        gain = D_t * ens.disc(t + 1)[:, None] * total - Pbar
        H = D_t * pay(ens)
        omega = (gain[:, :, None] * gain[:, None, :]).reshape(ens.paths, -1)
        lam = (gain[:, :, None] * H[:, None, :]).reshape(ens.paths, -1) if H.ndim == 2 else gain * H[:, None]
        return np.concatenate([omega, lam, gain], axis=1)

    est = estimate(model, config, fn, t, x_t, horizon, regimes, start_probs)
    mean, se = np.asarray(est.mean), np.asarray(est.se)
    no = n * n
    lam_shape = (n, -1)
    out = {
        "omega": mean[:no].reshape(n, n), "omega_se": se[:no].reshape(n, n),
        "lambda": mean[no:-n].reshape(lam_shape), "lambda_se": se[no:-n].reshape(lam_shape),
        "gain": mean[-n:], "gain_se": se[-n:], "paths": est.paths,
    }
    if out["lambda"].shape[1] == 1:
        out["lambda"], out["lambda_se"] = out["lambda"][:, 0], out["lambda_se"][:, 0]
    return out
