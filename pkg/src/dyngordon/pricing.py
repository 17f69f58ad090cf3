"""Closed-form prices of European calls, puts and exchange options."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, InputError
from .kernels import DEGENERATE_VAR, lognormal_call_put, norm_cdf
from .measures import bond_price, forward_adjust
from .model import ConditionalMoments, ModelSpec, RegimePath, conditional_moments
from .regimes import MAX_PATHS, mixture_paths

__all__ = [
    "OptionSpec",
    "PriceLadder",
    "ForwardPriceLaw",
    "forward_price_law",
    "price_from_moments",
    "price_option_conditional",
    "price_option_mixture",
    "mix",
    "bond_price_mixture",
]


@dataclass(frozen=True)
class OptionSpec:
    """European option on the asset prices at ``maturity``.

    ``call``/``put`` carry a strike per asset (``K`` broadcasts).  ``exchange``
    pays ``(w_i P_i - w_j P_j)^+`` with 0-based asset indices ``i``, ``j``.
    """

    kind: str
    maturity: int
    K: tuple | float | None = None
    i: int | None = None
    j: int | None = None
    w_i: float = 1.0
    w_j: float = 1.0

    def __post_init__(self):
        if self.kind not in ("call", "put", "exchange"):
            raise InputError(f"unknown option kind {self.kind!r}")
        if int(self.maturity) != self.maturity or self.maturity < 1:
            raise InputError("maturity must be a positive period index")
        if self.kind == "exchange":
            if self.i is None or self.j is None or self.i == self.j:
                raise InputError("exchange option needs two distinct assets i, j")
            if not (self.w_i > 0 and self.w_j > 0):
                raise InputError("exchange weights must be positive")
        else:
            if self.K is None:
                raise InputError("call/put needs a strike")
            K = np.atleast_1d(np.asarray(self.K, dtype=float))
            if np.any(~np.isfinite(K)) or np.any(K <= 0):
                raise InputError("strikes must be positive")
            object.__setattr__(self, "K", tuple(K.tolist()))

    def strikes(self, n: int) -> np.ndarray:
        K = np.asarray(self.K, dtype=float)
        if K.shape == (1,):
            return np.full(n, K[0])
        if K.shape != (n,):
            raise InputError(f"strike vector must have length {n}")
        return K

    def validate(self, model: ModelSpec, t: int):
        if not t < self.maturity <= model.T:
            raise InputError(f"maturity {self.maturity} outside ({t}, {model.T}]")
        if self.kind == "exchange":
            if not (0 <= self.i < model.n and 0 <= self.j < model.n):
                raise InputError(f"exchange assets must lie in 0..{model.n - 1}")
        else:
            self.strikes(model.n)

    @classmethod
    def from_dict(cls, doc: dict) -> "OptionSpec":
        try:
            return cls(kind=doc["kind"], maturity=int(doc["maturity"]), K=doc.get("K"),
                       i=doc.get("i"), j=doc.get("j"), w_i=float(doc.get("w_i", 1.0)),
                       w_j=float(doc.get("w_j", 1.0)))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"invalid option document: {exc}") from None

    def to_dict(self) -> dict:
        doc = {"kind": self.kind, "maturity": self.maturity}
        if self.kind == "exchange":
            doc.update(i=self.i, j=self.j, w_i=self.w_i, w_j=self.w_j)
        else:
            doc["K"] = list(self.K)
        return doc


@dataclass(frozen=True, eq=False)
class PriceLadder:
    """Per-regime-path conditional values with their mixture weights."""

    paths: tuple
    weights: np.ndarray
    values: np.ndarray

    @property
    def total(self):
        # fixed-order reduction keeps rounding reproducible
        return np.tensordot(self.weights, self.values, axes=1)


def mix(paths, values) -> PriceLadder:
    weights = np.array([p.weight for p in paths])
    return PriceLadder(paths=tuple(paths), weights=weights, values=np.asarray(values, dtype=float))


@dataclass(frozen=True, eq=False)
class ForwardPriceLaw:
    """Log prices at ``k`` under the ``(t, k)``-forward measure, plus the bond ``B_{t,k}``."""

    k: int
    mean: np.ndarray
    cov: np.ndarray
    bond: float


def forward_price_law(cm: ConditionalMoments, k: int) -> ForwardPriceLaw:
    n = (cm.ntil - 1) // 2
    fm = forward_adjust(cm, k)
    return ForwardPriceLaw(k=k, mean=fm.mean(k)[:n].copy(), cov=cm.cov(k)[:n, :n].copy(),
                           bond=bond_price(cm, k))


def _exchange(law: ForwardPriceLaw, i, j, w_i, w_j) -> float:
    a = np.zeros(law.mean.shape[0])
    a[i], a[j] = 1.0, -1.0
    v = a @ law.cov @ a
    if v < DEGENERATE_VAR:
        raise DegenerateError(f"exchange option: spread of assets {i} and {j} has zero variance")
    sd = np.sqrt(v)
    d1 = (a @ law.mean + a @ law.cov[:, i] - np.log(w_j / w_i)) / sd
    d2 = d1 - sd
    fi = np.exp(law.mean[i] + 0.5 * law.cov[i, i])
    fj = np.exp(law.mean[j] + 0.5 * law.cov[j, j])
    return law.bond * (w_i * fi * norm_cdf(d1) - w_j * fj * norm_cdf(d2))


def price_from_moments(spec: OptionSpec, cm: ConditionalMoments):
    """Price from prebuilt conditional moments covering the maturity."""
    law = forward_price_law(cm, spec.maturity)
    if spec.kind == "exchange":
        return float(_exchange(law, spec.i, spec.j, spec.w_i, spec.w_j))
    K = spec.strikes(law.mean.shape[0])
    block = lognormal_call_put(law.mean, np.diag(law.cov), K, spec.kind, allow_degenerate=True)
    return law.bond * np.asarray(block)


def price_option_conditional(model: ModelSpec, spec: OptionSpec, t: int, x_t, path: RegimePath):
    """Time-``t`` price given ``x_t`` and the regimes after ``t``.

    Returns an ``n``-vector for calls and puts, a scalar for exchange options.
    """
    spec.validate(model, t)
    cm = conditional_moments(model, t, x_t, path, until=spec.maturity)
    return price_from_moments(spec, cm)


def price_option_mixture(model: ModelSpec, spec: OptionSpec, t: int = 0, x_t=None, history=None,
                         observed=None, start_probs=None, limit: int = MAX_PATHS) -> PriceLadder:
    """Regime-mixture price: weighted sum of conditional prices over continuation paths.

    ``x_t`` defaults to the last row of ``history`` (or ``x0`` at ``t = 0``).
    """
    spec.validate(model, t)
    x_t = _anchor(model, t, x_t, history)
    paths = mixture_paths(model, t, spec.maturity, history, observed, start_probs, limit)
    values = [price_option_conditional(model, spec, t, x_t, p) for p in paths]
    return mix(paths, values)


def _anchor(model: ModelSpec, t: int, x_t, history):
    if x_t is not None:
        return np.asarray(x_t, dtype=float)
    if history is not None:
        return np.atleast_2d(np.asarray(history, dtype=float))[-1]
    if t == 0:
        return model.x0
    raise InputError("x_t is required for t > 0")


def bond_price_mixture(model: ModelSpec, t: int, u: int, x_t=None, history=None, observed=None,
                       start_probs=None, limit: int = MAX_PATHS) -> PriceLadder:
    """Regime-mixture price at ``t`` of a unit zero-coupon bond maturing at ``u``."""
    if not 0 <= t < u <= model.T:
        raise InputError(f"need 0 <= t < u <= {model.T}, got t={t}, u={u}")
    x_t = _anchor(model, t, x_t, history)
    paths = mixture_paths(model, t, u, history, observed, start_probs, limit)
    values = [bond_price(conditional_moments(model, t, x_t, p, until=u), u) for p in paths]
    return mix(paths, values)
