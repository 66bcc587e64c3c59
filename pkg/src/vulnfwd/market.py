"""Market parameters, funding policies and the rates derived from them.

All rates are flat, continuously compounded and quoted per year.  The
objects here are immutable; every function is pure.
"""

from __future__ import annotations

import math
from dataclasses import asdict, astuple, dataclass, field, replace
from functools import lru_cache

from .exceptions import ValidationError

# Tolerance used when deciding whether a policy is the linearizing one.
LINEARIZING_TOL = 1e-12

MARKET_KEYS = (
    "s", "r", "f", "q", "sigma", "h_s", "h1", "h2",
    "r1", "r2", "lambda1", "lambda2", "kappa", "mu",
)


@dataclass(frozen=True)
class MarketParams:
    """Exogenous inputs of the jump-at-default market model.

    ``kappa`` is the relative stock price jump at the first default and must
    lie in (-1, 0].  ``mu`` is the physical drift, only used by the P-measure
    simulator and the stock/default correlation; it defaults to ``r``.
    Recovery rates are carried for completeness but pinned to 1.
    """

    s: float = 1.0
    r: float = 0.04
    f: float = 0.06
    q: float = 0.055
    sigma: float = 0.30
    h_s: float = 0.05
    h1: float = 0.055
    h2: float = 0.055
    r1: float = 0.07
    r2: float = 0.07
    lambda1: float = 0.01
    lambda2: float = 0.01
    kappa: float = 0.0
    mu: float | None = None
    recovery1: float = field(default=1.0, repr=False)
    recovery2: float = field(default=1.0, repr=False)

    def __post_init__(self) -> None:
        if self.mu is None:
            object.__setattr__(self, "mu", self.r)
        if not self.s > 0:
            raise ValidationError(f"spot s must be positive, got {self.s}")
        if not self.sigma > 0:
            raise ValidationError(f"sigma must be positive, got {self.sigma}")
        for name in ("lambda1", "lambda2"):
            lam = getattr(self, name)
            if not (lam >= 0 and math.isfinite(lam)):
                raise ValidationError(f"{name} must be a finite nonnegative intensity, got {lam}")
        if not -1.0 < self.kappa <= 0.0:
            raise ValidationError(f"kappa must lie in (-1, 0], got {self.kappa}")
        if self.recovery1 != 1.0 or self.recovery2 != 1.0:
            raise ValidationError("only full recovery (recovery1 = recovery2 = 1) is supported")
        # instances are immutable and serve as cache keys: build the key once
        key = astuple(self)
        object.__setattr__(self, "_key", key)
        object.__setattr__(self, "_hash", hash(key))

    def __eq__(self, other) -> bool:
        if other.__class__ is not self.__class__:
            return NotImplemented
        return self is other or self._key == other._key

    def __hash__(self) -> int:
        return self._hash

    def with_updates(self, **changes: float) -> "MarketParams":
        return replace(self, **changes)

    def to_dict(self) -> dict[str, float]:
        d = asdict(self)
        return {k: d[k] for k in MARKET_KEYS}

    @classmethod
    def from_dict(cls, data: dict) -> "MarketParams":
        unknown = set(data) - set(MARKET_KEYS)
        if unknown:
            raise ValidationError(f"unknown market keys: {sorted(unknown)}")
        try:
            values = {k: float(v) for k, v in data.items() if v is not None}
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"market values must be numbers: {exc}") from None
        return cls(**values)


@dataclass(frozen=True)
class FundingPolicy:
    """Fraction of each hedge exposure funded through the bank accounts.

    The remainder ``1 - alpha`` of each exposure is financed by repo.
    """

    alpha_s: float
    alpha1: float
    alpha2: float

    def __post_init__(self) -> None:
        for name in ("alpha_s", "alpha1", "alpha2"):
            a = getattr(self, name)
            if not 0.0 <= a <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1], got {a}")
        key = (self.alpha_s, self.alpha1, self.alpha2)
        object.__setattr__(self, "_key", key)
        object.__setattr__(self, "_hash", hash(key))

    def __eq__(self, other) -> bool:
        if other.__class__ is not self.__class__:
            return NotImplemented
        return self is other or self._key == other._key

    def __hash__(self) -> int:
        return self._hash

    @classmethod
    def linearizing(cls, alpha: float, kappa: float) -> "FundingPolicy":
        """Bond split ``(alpha, 1 - alpha)`` with the stock fully repo-funded up to ``-kappa``."""
        return cls(alpha_s=-kappa + 0.0, alpha1=alpha, alpha2=1.0 - alpha)

    @property
    def alpha12(self) -> float:
        return self.alpha1 + self.alpha2

    def is_linearizing(self, kappa: float) -> bool:
        return (
            abs(self.alpha12 - 1.0) <= LINEARIZING_TOL
            and abs(self.alpha_s + kappa * self.alpha12) <= LINEARIZING_TOL
        )

    def relinearized(self, kappa: float) -> "FundingPolicy":
        """Same bond split, stock fraction reset for a new jump size."""
        return FundingPolicy.linearizing(self.alpha1, kappa)

    def to_dict(self) -> dict[str, float]:
        return {"alpha_s": self.alpha_s, "alpha1": self.alpha1, "alpha2": self.alpha2}


@dataclass(frozen=True)
class DerivedRates:
    """Effective rates entering the pre-default valuation.

    ``r_hat_s`` is the stock carry net of repo and dividends, ``b_hat_i`` the
    net carry of bond ``i``, ``b_hat_v`` the aggregate credit-funding spread,
    ``r_hat_v = r + b_hat_v`` the effective discount rate, ``b = f - r`` the
    funding spread and ``mu_hat`` the stock drift under the pricing measure.
    ``c1``/``c2`` are ``2x + y**2`` for the two Gaussian time integrals of the
    at-the-money formula, ``(r_hat_v - mu_hat, nu1)`` and ``(b_hat_v, nu2)``.
    """

    r: float
    sigma: float
    kappa: float
    r_hat_s: float
    b_hat_1: float
    b_hat_2: float
    r_hat_v: float
    b_hat_v: float
    b: float
    mu_hat: float
    nu1: float
    nu2: float
    c1: float
    c2: float


@lru_cache(maxsize=4096)
def derive_rates(params: MarketParams, policy: FundingPolicy) -> DerivedRates:
    """Effective rates for a parameter set and policy (memoized; inputs are immutable)."""
    r = params.r
    r_hat_s = policy.alpha_s * r + (1.0 - policy.alpha_s) * params.h_s - params.q
    b_hat_1 = policy.alpha1 * r + (1.0 - policy.alpha1) * params.h1 - params.r1
    b_hat_2 = policy.alpha2 * r + (1.0 - policy.alpha2) * params.h2 - params.r2
    b_hat_v = -(b_hat_1 + b_hat_2)
    r_hat_v = r + b_hat_v
    b = params.f - r
    mu_hat = r_hat_s - params.kappa * b_hat_v
    sigma = params.sigma
    nu1 = (mu_hat - r + 0.5 * sigma * sigma) / sigma
    nu2 = nu1 - sigma
    return DerivedRates(
        r=r,
        sigma=sigma,
        kappa=params.kappa,
        r_hat_s=r_hat_s,
        b_hat_1=b_hat_1,
        b_hat_2=b_hat_2,
        r_hat_v=r_hat_v,
        b_hat_v=b_hat_v,
        b=b,
        mu_hat=mu_hat,
        nu1=nu1,
        nu2=nu2,
        c1=2.0 * (r_hat_v - mu_hat) + nu1 * nu1,
        c2=2.0 * b_hat_v + nu2 * nu2,
    )


@dataclass(frozen=True)
class Violation:
    """A breached no-arbitrage inequality."""

    constraint: str
    values: dict[str, float]

    def __str__(self) -> str:
        vals = ", ".join(f"{k}={v:g}" for k, v in self.values.items())
        return f"{self.constraint} ({vals})"


def validate_no_arbitrage(params: MarketParams) -> list[Violation]:
    """Return every violated funding/credit no-arbitrage inequality.

    Checks ``r <= h <= f`` for each repo rate and ``h_i < r_i`` for each
    bond.  NaN inputs fail their comparisons and are therefore reported.
    An empty list means the parameter set is arbitrage-free.
    """
    out: list[Violation] = []
    r, f = params.r, params.f
    for name in ("h_s", "h1", "h2"):
        h = getattr(params, name)
        if not r <= h:
            out.append(Violation(f"r <= {name}", {"r": r, name: h}))
        if not h <= f:
            out.append(Violation(f"{name} <= f", {name: h, "f": f}))
    for i in (1, 2):
        h, ri = getattr(params, f"h{i}"), getattr(params, f"r{i}")
        if not h < ri:
            out.append(Violation(f"h{i} < r{i}", {f"h{i}": h, f"r{i}": ri}))
    return out


def first_default_probability(params: MarketParams, t: float) -> float:
    """P(first default <= t) for the superposed Poisson clock."""
    return -math.expm1(-(params.lambda1 + params.lambda2) * t)


def stock_default_correlation(params: MarketParams, t: float) -> float:
    """Correlation between the stock price and the first-to-default indicator at ``t``.

    Zero when the default indicator is degenerate (``t = 0`` or both
    intensities zero).  The physical drift cancels out.
    """
    if t <= 0:
        return 0.0
    p = first_default_probability(params, t)
    if p <= 0.0 or params.kappa == 0.0:
        return 0.0
    k = params.kappa
    # e^{s2 t}(1 + k p (2 + k)) - (1 + k p (2 + k p)), arranged to avoid cancellation
    s2t = params.sigma ** 2 * t
    denom = math.expm1(s2t) * (1.0 + k * p * (2.0 + k)) + k * k * p * (1.0 - p)
    return k * math.sqrt(p * (1.0 - p) / denom)
