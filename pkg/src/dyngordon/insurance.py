"""Net single premiums of equity-linked term and endowment contracts."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError
from .kernels import lognormal_call_put
from .model import ConditionalMoments, ModelSpec, RegimePath, conditional_moments
from .pricing import PriceLadder, _anchor, forward_price_law, mix
from .regimes import MAX_PATHS, mixture_paths

__all__ = [
    "MortalityTable",
    "ProductSpec",
    "SurvivalFactors",
    "load_mortality",
    "survival_factors",
    "premium_from_moments",
    "premium_conditional",
    "premium_mixture",
]

KINDS = ("term", "endowment", "endowment_insurance")
VARIANTS = ("segregated", "unit-linked")


@dataclass(frozen=True, eq=False)
class MortalityTable:
    """One-year death probabilities ``q[x]`` for consecutive integer ages from ``first_age``."""

    first_age: int
    q: np.ndarray

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        if q.ndim != 1 or q.size == 0:
            raise InputError("mortality table needs at least one age")
        if np.any(~np.isfinite(q)) or np.any(q < 0) or np.any(q > 1):
            raise InputError("death probabilities must lie in [0, 1]")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "first_age", int(self.first_age))

    @property
    def last_age(self) -> int:
        return self.first_age + self.q.size - 1

    def qx(self, age: int) -> float:
        if not self.first_age <= age <= self.last_age:
            raise InputError(f"mortality table has no entry for age {age}")
        return float(self.q[age - self.first_age])

    def kpx(self, k: int, age: int) -> float:
        """Probability that a life aged ``age`` survives ``k`` more years."""
        out = 1.0
        for m in range(k):
            out *= 1.0 - self.qx(age + m)
        return out

    @classmethod
    def from_csv(cls, path) -> "MortalityTable":
        return load_mortality(path)


def load_mortality(path) -> MortalityTable:
    try:
        with open(Path(path), newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise InputError(f"cannot read mortality file {path}: {exc}") from None
    if not rows or set(rows[0]) != {"age", "qx"}:
        raise InputError("mortality CSV must have header age,qx")
    try:
        ages = [int(r["age"]) for r in rows]
        q = [float(r["qx"]) for r in rows]
    except (TypeError, ValueError) as exc:
        raise InputError(f"malformed mortality row: {exc}") from None
    order = np.argsort(ages)
    ages = np.asarray(ages)[order]
    if np.any(np.diff(ages) != 1):
        raise InputError("mortality ages must be consecutive integers")
    return MortalityTable(first_age=int(ages[0]), q=np.asarray(q)[order])


@dataclass(frozen=True, eq=False)
class SurvivalFactors:
    """``death[k - t] = _{k-t}p_{x+t} q_{x+k}`` for ``k = t..T-1`` and ``survive = _{T-t}p_{x+t}``."""

    t: int
    T: int
    death: np.ndarray
    survive: float


def survival_factors(table: MortalityTable, x: int, t: int, T: int) -> SurvivalFactors:
    if not 0 <= t < T:
        raise InputError(f"need 0 <= t < T, got t={t}, T={T}")
    # touch every needed age so missing ones fail early
    for age in range(x + t, x + T):
        table.qx(age)
    death = np.empty(T - t)
    p = 1.0
    for k in range(t, T):
        q = table.qx(x + k)
        death[k - t] = p * q
        p *= 1.0 - q
    death.setflags(write=False)
    return SurvivalFactors(t=t, T=T, death=death, survive=p)


@dataclass(frozen=True, eq=False)
class ProductSpec:
    """Equity-linked contract on ``n`` funds.

    ``kind`` is ``term`` (benefit at the end of the year of death),
    ``endowment`` (pure endowment at ``T``) or ``endowment_insurance`` (both).
    ``segregated`` benefits are ``F* (G*/F* - P)^+``; ``unit-linked`` ones are
    ``F* (P - G*/F*)^+ + G*``.  ``F``/``G`` hold rows for periods ``1..T``; a
    single vector or scalar is broadcast to every period.
    """

    kind: str
    variant: str
    age: int
    T: int
    F: np.ndarray
    G: np.ndarray
    n: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown product kind {self.kind!r}")
        if self.variant not in VARIANTS:
            raise InputError(f"unknown product variant {self.variant!r}")
        if int(self.T) != self.T or self.T < 1:
            raise InputError("contract horizon must be a positive integer")
        F = self._schedule(self.F, "F")
        G = self._schedule(self.G, "G")
        if F.shape[1] != G.shape[1]:
            if F.shape[1] == 1:
                F = np.repeat(F, G.shape[1], axis=1)
            elif G.shape[1] == 1:
                G = np.repeat(G, F.shape[1], axis=1)
            else:
                raise InputError("F and G schedules have different widths")
        if self.n is not None and F.shape[1] == 1 and self.n > 1:
            F = np.repeat(F, self.n, axis=1)
            G = np.repeat(G, self.n, axis=1)
        if np.any(~np.isfinite(F)) or np.any(~np.isfinite(G)):
            raise InputError("schedules must be finite")
        if np.any(G < 0):
            raise InputError("guarantees must be non-negative")
        if np.any(F <= 0):
            raise InputError("fund units must be positive")
        for a in (F, G):
            a.setflags(write=False)
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "age", int(self.age))
        object.__setattr__(self, "T", int(self.T))

    def _schedule(self, a, name):
        a = np.asarray(a, dtype=float)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        if a.ndim == 1:
            a = a[None, :]
        if a.shape[0] == 1:
            a = np.repeat(a, self.T, axis=0)
        if a.ndim != 2 or a.shape[0] != self.T:
            raise InputError(f"{name} schedule must have one row per period 1..{self.T}")
        return a

    def fund(self, k: int, n: int) -> np.ndarray:
        return self._row(self.F, k, n)

    def guarantee(self, k: int, n: int) -> np.ndarray:
        return self._row(self.G, k, n)

    @staticmethod
    def _row(a, k, n):
        row = a[k - 1]
        if row.shape == (1,):
            return np.full(n, row[0])
        if row.shape != (n,):
            raise InputError(f"schedule width {row.shape[0]} does not match {n} funds")
        return row

    def maturities(self, t: int) -> list[int]:
        """Benefit dates ``k`` whose payments matter at valuation time ``t``."""
        if self.kind == "endowment":
            return [self.T]
        return list(range(t + 1, self.T + 1))

    def validate(self, model: ModelSpec, t: int):
        if not 0 <= t < self.T:
            raise InputError(f"valuation time {t} must precede the horizon {self.T}")
        if self.T > model.T:
            raise InputError(f"contract horizon {self.T} exceeds model horizon {model.T}")
        self.fund(1, model.n)

    @classmethod
    def from_dict(cls, doc: dict) -> "ProductSpec":
        try:
            return cls(kind=doc["kind"], variant=doc["variant"], age=int(doc["age"]),
                       T=int(doc["T"]), F=doc["F"], G=doc["G"])
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"invalid product document: {exc}") from None

    def to_dict(self) -> dict:
        return {"kind": self.kind, "variant": self.variant, "age": self.age, "T": self.T,
                "F": self.F.tolist(), "G": self.G.tolist()}


def benefit_weights(product: ProductSpec, sf: SurvivalFactors) -> dict:
    """Probability weight attached to the benefit paid at each date ``k``."""
    t = sf.t
    w = {}
    if product.kind in ("term", "endowment_insurance"):
        for k in range(t + 1, product.T + 1):
            w[k] = float(sf.death[k - 1 - t])
    if product.kind in ("endowment", "endowment_insurance"):
        w[product.T] = w.get(product.T, 0.0) + sf.survive
    return w


def benefit_value(product: ProductSpec, cm: ConditionalMoments, k: int, n: int) -> np.ndarray:
    """Time-``t`` value of the date-``k`` benefit, before mortality weighting."""
    law = forward_price_law(cm, k)
    F, G = product.fund(k, n), product.guarantee(k, n)
    # a zero guarantee means a zero strike: the put is worthless, the call is the forward
    pos = G > 0
    var = np.diag(law.cov)
    if product.variant == "segregated":
        put = np.zeros(n)
        if np.any(pos):
            put[pos] = lognormal_call_put(law.mean[pos], var[pos], G[pos] / F[pos], "put",
                                          allow_degenerate=True)
        return F * law.bond * put
    call = np.exp(law.mean + 0.5 * var)
    if np.any(pos):
        call[pos] = lognormal_call_put(law.mean[pos], var[pos], G[pos] / F[pos], "call",
                                       allow_degenerate=True)
    return F * law.bond * call + law.bond * G


def premium_from_moments(product: ProductSpec, table: MortalityTable, cm: ConditionalMoments) -> np.ndarray:
    n = (cm.ntil - 1) // 2
    sf = survival_factors(table, product.age, cm.t, product.T)
    out = np.zeros(n)
    for k, w in benefit_weights(product, sf).items():
        if w != 0.0:
            out = out + w * benefit_value(product, cm, k, n)
    return out


def premium_conditional(model: ModelSpec, product: ProductSpec, table: MortalityTable,
                        t: int, x_t, path: RegimePath) -> np.ndarray:
    """Premium vector (one entry per fund) given ``x_t`` and the regimes after ``t``."""
    product.validate(model, t)
    cm = conditional_moments(model, t, x_t, path, until=product.T)
    return premium_from_moments(product, table, cm)


def premium_mixture(model: ModelSpec, product: ProductSpec, table: MortalityTable, t: int = 0,
                    x_t=None, history=None, observed=None, start_probs=None,
                    limit: int = MAX_PATHS) -> PriceLadder:
    product.validate(model, t)
    x_t = _anchor(model, t, x_t, history)
    paths = mixture_paths(model, t, product.T, history, observed, start_probs, limit)
    values = [premium_conditional(model, product, table, t, x_t, p) for p in paths]
    return mix(paths, values)
