"""Run configuration: one JSON document plus command-line overrides.

Example document::

    {
      "market": {"kappa": -0.1, "f": 0.06},
      "policy": {"alpha": 0.5},
      "contract": {"strike": "tatm", "expiry": 5.0},
      "mc": {"n_paths": 1000000, "steps_per_year": 50, "seed": 1},
      "pde": {"n_space": 400, "n_time": 400},
      "quad": {"abs_tol": 1e-10}
    }

Missing sections fall back to the baseline parameter set.  ``policy`` is
either ``{"alpha": a}`` (the linearizing policy for the market's jump size)
or an explicit ``{"alpha_s", "alpha1", "alpha2"}`` triple.  ``strike`` is a
number, ``"tatm"`` (terminal at-the-money) or ``"atmrf"`` (at-the-money
risk-free).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any

from .analytic import ForwardContract, QuadConfig, atmrf_strike
from .exceptions import ValidationError
from .market import FundingPolicy, MarketParams
from .montecarlo import McConfig
from .pde import PdeGrid
from .sensitivity import tatm_strike

STRIKE_KEYWORDS = ("tatm", "atmrf")


@dataclass(frozen=True)
class PolicySpec:
    alpha: float | None = 0.5
    alpha_s: float | None = None
    alpha1: float | None = None
    alpha2: float | None = None

    def __post_init__(self) -> None:
        explicit = (self.alpha_s, self.alpha1, self.alpha2)
        if self.alpha is not None and any(a is not None for a in explicit):
            raise ValidationError("give either 'alpha' or the explicit alpha_s/alpha1/alpha2 triple")
        if self.alpha is None and any(a is None for a in explicit):
            raise ValidationError("explicit policy needs all of alpha_s, alpha1, alpha2")

    def resolve(self, kappa: float) -> FundingPolicy:
        if self.alpha is not None:
            return FundingPolicy.linearizing(self.alpha, kappa)
        return FundingPolicy(self.alpha_s, self.alpha1, self.alpha2)

    def to_dict(self) -> dict[str, float]:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, data: dict) -> "PolicySpec":
        allowed = {"alpha", "alpha_s", "alpha1", "alpha2"}
        _reject_unknown("policy", data, allowed)
        vals = {k: _number(f"policy.{k}", v) for k, v in data.items()}
        if "alpha" not in vals and vals:
            vals.setdefault("alpha", None)
        return cls(**vals)


@dataclass(frozen=True)
class ContractSpec:
    strike: float | str = "tatm"
    expiry: float = 5.0
    valuation_time: float = 0.0
    bond_expiries: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if isinstance(self.strike, str) and self.strike not in STRIKE_KEYWORDS:
            raise ValidationError(f"strike must be a number or one of {STRIKE_KEYWORDS}")
        if not self.expiry > self.valuation_time >= 0:
            raise ValidationError("need 0 <= valuation_time < expiry")

    @property
    def tau(self) -> float:
        return self.expiry - self.valuation_time

    def resolve(self, params: MarketParams, policy: FundingPolicy) -> ForwardContract:
        if self.strike == "tatm":
            k = tatm_strike(params, policy, self.expiry, self.valuation_time)
        elif self.strike == "atmrf":
            k = atmrf_strike(params, self.tau)
        else:
            k = float(self.strike)
        return ForwardContract(k, self.expiry, self.valuation_time)

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"strike": self.strike, "expiry": self.expiry,
                             "valuation_time": self.valuation_time}
        if self.bond_expiries is not None:
            d["bond_expiries"] = list(self.bond_expiries)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ContractSpec":
        _reject_unknown("contract", data, {"strike", "expiry", "valuation_time", "bond_expiries"})
        vals: dict[str, Any] = {}
        if "strike" in data:
            s = data["strike"]
            vals["strike"] = s if isinstance(s, str) else _number("contract.strike", s)
        for k in ("expiry", "valuation_time"):
            if k in data:
                vals[k] = _number(f"contract.{k}", data[k])
        if data.get("bond_expiries") is not None:
            be = data["bond_expiries"]
            if not isinstance(be, (list, tuple)) or len(be) != 2:
                raise ValidationError("contract.bond_expiries must be a pair of numbers")
            vals["bond_expiries"] = tuple(_number("contract.bond_expiries", x) for x in be)
        return cls(**vals)


@dataclass(frozen=True)
class McSettings:
    n_paths: int = 200_000
    steps_per_year: int = 50
    seed: int = 0
    antithetic: bool = True

    def config(self, tau: float) -> McConfig:
        return McConfig.per_year(self.steps_per_year, tau, n_paths=self.n_paths,
                                 seed=self.seed, antithetic=self.antithetic)


@dataclass(frozen=True)
class PdeSettings:
    n_space: int = 400
    n_time: int = 400
    width: float = 6.0
    scheme: str = "crank_nicolson"
    tol: float = 1e-3

    def grid(self, params: MarketParams, tau: float) -> PdeGrid:
        return PdeGrid.around_atm(params, tau, self.n_space, self.n_time, self.width, self.scheme)


def _reject_unknown(section: str, data: Any, allowed: set[str]) -> None:
    if not isinstance(data, dict):
        raise ValidationError(f"{section} must be a JSON object")
    unknown = set(data) - allowed
    if unknown:
        raise ValidationError(f"unknown keys in {section}: {sorted(unknown)}")


def _number(name: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{name} must be a number, got {value!r}")
    if not math.isfinite(value):
        raise ValidationError(f"{name} must be finite")
    return float(value)


def _simple_section(cls, name: str, data: dict):
    names = {f.name: f for f in fields(cls)}
    _reject_unknown(name, data, set(names))
    vals = {}
    for k, v in data.items():
        kind = type(getattr(cls(), k))
        if kind is bool:
            if not isinstance(v, bool):
                raise ValidationError(f"{name}.{k} must be true or false")
            vals[k] = v
        elif kind is int:
            if isinstance(v, bool) or not isinstance(v, int):
                raise ValidationError(f"{name}.{k} must be an integer")
            vals[k] = v
        elif kind is str:
            vals[k] = str(v)
        else:
            vals[k] = _number(f"{name}.{k}", v)
    try:
        return cls(**vals)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"invalid {name} section: {exc}") from None


@dataclass(frozen=True)
class RunConfig:
    market: MarketParams = field(default_factory=MarketParams)
    policy: PolicySpec = field(default_factory=PolicySpec)
    contract: ContractSpec = field(default_factory=ContractSpec)
    mc: McSettings = field(default_factory=McSettings)
    pde: PdeSettings = field(default_factory=PdeSettings)
    quad: QuadConfig = field(default_factory=QuadConfig)

    @property
    def funding_policy(self) -> FundingPolicy:
        return self.policy.resolve(self.market.kappa)

    def forward(self) -> ForwardContract:
        return self.contract.resolve(self.market, self.funding_policy)

    def to_dict(self) -> dict[str, Any]:
        return {
            "market": self.market.to_dict(),
            "policy": self.policy.to_dict(),
            "contract": self.contract.to_dict(),
            "mc": asdict(self.mc),
            "pde": asdict(self.pde),
            "quad": asdict(self.quad),
        }

    @classmethod
    def from_dict(cls, data: Any) -> "RunConfig":
        _reject_unknown("config", data, {"market", "policy", "contract", "mc", "pde", "quad"})
        return cls(
            market=MarketParams.from_dict(data.get("market", {})),
            policy=PolicySpec.from_dict(data.get("policy", {})) if "policy" in data else PolicySpec(),
            contract=ContractSpec.from_dict(data.get("contract", {})),
            mc=_simple_section(McSettings, "mc", data.get("mc", {})),
            pde=_simple_section(PdeSettings, "pde", data.get("pde", {})),
            quad=_simple_section(QuadConfig, "quad", data.get("quad", {})),
        )

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(data)

    def with_override(self, dotted: str, raw: str) -> "RunConfig":
        """Apply ``section.key=value`` where ``value`` is parsed as JSON when possible."""
        return self.with_overrides([(dotted, raw)])

    def with_overrides(self, items) -> "RunConfig":
        """Apply several ``(section.key, value)`` pairs and validate once at the end.

        Validating once lets an explicit policy triple be given key by key.
        """
        data = self.to_dict()
        for dotted, raw in items:
            section, _, key = dotted.partition(".")
            if not key:
                raise ValidationError(f"override must look like section.key=value, got {dotted!r}")
            try:
                value = json.loads(raw)
            except json.JSONDecodeError:
                value = raw
            if section not in data:
                raise ValidationError(f"unknown config section {section!r}")
            if section == "policy" and key in ("alpha_s", "alpha1", "alpha2"):
                data["policy"].pop("alpha", None)
            elif section == "policy" and key == "alpha":
                data["policy"] = {}
            data[section][key] = value
        return RunConfig.from_dict(data)

    def with_updates(self, **sections) -> "RunConfig":
        return replace(self, **sections)
