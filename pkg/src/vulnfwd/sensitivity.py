"""Comparative statics of the forward value.

Two strike conventions are supported.  In constant terminal moneyness (CTM)
the strike is reset to the terminal at-the-money level ``s exp(mu_hat T)`` at
every grid point, so the terminal component vanishes and only recovery and
funding value remain.  In constant terminal strike (CTS) that strike is
computed once at the base parameters and held fixed.

Values are reported in yearly basis points of notional,
``1e4 * value / (s * (T - t))``.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analytic import ForwardContract, QuadConfig, _linear_rates, price_general
from .exceptions import NumericalError, ValidationError, VulnFwdError
from .market import FundingPolicy, MarketParams, validate_no_arbitrage
from .montecarlo import worker_count

MODES = ("ctm", "cts")
METRICS = ("bps_per_year", "raw")

# Single-parameter sensitivity ranges of the baseline study.
DEFAULT_RANGES: dict[str, tuple[float, float]] = {
    "T": (1.0, 30.0),
    "q": (0.0, 0.15),
    "sigma": (0.05, 0.80),
    "r": (-0.03, 0.15),
    "f": (0.0, 0.15),
    "h_s": (0.0, 0.15),
    "h1": (0.0, 0.15),
    "h2": (0.0, 0.15),
    "h12": (0.0, 0.15),
    "r1": (0.0, 0.15),
    "r2": (0.0, 0.15),
    "r12": (0.0, 0.15),
    "kappa": (-0.30, 0.0),
    "alpha": (0.0, 1.0),
}
DEFAULT_POINTS = 61

# Aliases that move both counterparties' legs together.
_PAIRED = {"h12": ("h1", "h2"), "r12": ("r1", "r2")}
SWEEPABLE = frozenset(DEFAULT_RANGES) | {"s", "lambda1", "lambda2", "mu"}


def default_grid(name: str, n: int = DEFAULT_POINTS) -> np.ndarray:
    if name not in DEFAULT_RANGES:
        raise ValidationError(f"no default range for {name!r}; pass an explicit grid")
    lo, hi = DEFAULT_RANGES[name]
    return np.linspace(lo, hi, n)


@dataclass(frozen=True)
class SweepSpec:
    param: str
    values: tuple[float, ...]
    mode: str = "ctm"
    metric: str = "bps_per_year"

    def __post_init__(self) -> None:
        if self.param not in SWEEPABLE:
            raise ValidationError(f"cannot sweep {self.param!r}; choose from {sorted(SWEEPABLE)}")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.metric not in METRICS:
            raise ValidationError(f"metric must be one of {METRICS}, got {self.metric!r}")
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ValidationError("sweep grid is empty")
        steps = np.diff(vals)
        if len(vals) > 1 and not (np.all(steps > 0) or np.all(steps < 0)):
            raise ValidationError("sweep grid must be strictly monotone")
        object.__setattr__(self, "values", vals)

    @classmethod
    def default(cls, param: str, mode: str = "ctm", n: int = DEFAULT_POINTS) -> "SweepSpec":
        return cls(param, tuple(default_grid(param, n)), mode)


@dataclass(frozen=True)
class GridSpec:
    x: SweepSpec
    y: SweepSpec

    def __post_init__(self) -> None:
        if self.x.param == self.y.param:
            raise ValidationError("grid axes must name distinct parameters")
        if self.x.mode != "ctm" or self.y.mode != "ctm":
            raise ValidationError("joint grids are defined in CTM mode only")


@dataclass(frozen=True)
class SweepRow:
    """One priced grid point.  Component fields are in the sweep's metric."""

    point: tuple[float, ...]
    value: float
    terminal: float
    put_recovery: float
    call_recovery: float
    violations: tuple[str, ...] = ()
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass(frozen=True)
class SweepTable:
    params: tuple[str, ...]
    rows: tuple[SweepRow, ...]
    mode: str
    metric: str = "bps_per_year"

    def column(self, attr: str = "value") -> np.ndarray:
        return np.array([getattr(row, attr) for row in self.rows])

    def matrix(self, shape: tuple[int, int]) -> np.ndarray:
        """Values reshaped row-major, first parameter along axis 0."""
        return self.column("value").reshape(shape)

    def to_csv(self, fh=None) -> str:
        """Write the table as CSV; returns the text when ``fh`` is None."""
        buf = io.StringIO() if fh is None else fh
        writer = csv.writer(buf, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
        suffix = "bps_per_year" if self.metric == "bps_per_year" else "raw"
        comp = "bps" if self.metric == "bps_per_year" else "raw"
        writer.writerow([
            *self.params,
            f"value_{suffix}",
            f"terminal_{comp}",
            f"put_recovery_{comp}",
            f"call_recovery_{comp}",
            "no_arb_violations",
        ])
        for row in self.rows:
            coords = [_fmt(v) for v in row.point]
            if row.failed:
                nums = ["", "", "", ""]
                note = "; ".join((f"FAILED: {row.error}", *row.violations))
            else:
                nums = [_fmt(row.value), _fmt(row.terminal), _fmt(row.put_recovery),
                        _fmt(row.call_recovery)]
                note = "; ".join(row.violations)
            writer.writerow([*coords, *nums, note])
        return buf.getvalue() if fh is None else ""


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def tatm_strike(params: MarketParams, policy: FundingPolicy, T: float, t: float = 0.0) -> float:
    """Strike that makes the terminal component vanish: ``s exp(mu_hat (T - t))``."""
    return risky_stock_forward(params, policy, params.s, T - t)


def risky_stock_forward(params: MarketParams, policy: FundingPolicy, s: float, tau: float) -> float:
    """Forward of the stock under the pricing measure, ``s exp(mu_hat tau)``."""
    rates = _linear_rates(params, policy)
    return s * math.exp(rates.mu_hat * tau)


def _apply(params: MarketParams, alpha: float, T: float, name: str, value: float):
    if name == "alpha":
        return params, value, T
    if name == "T":
        return params, alpha, value
    if name in _PAIRED:
        a, b = _PAIRED[name]
        return params.with_updates(**{a: value, b: value}), alpha, T
    return params.with_updates(**{name: value}), alpha, T


@dataclass(frozen=True)
class _Cell:
    point: tuple[float, ...]
    names: tuple[str, ...]
    base: MarketParams
    alpha: float
    T: float
    frozen_strike: float | None
    metric: str
    quad_cfg: QuadConfig = field(default_factory=QuadConfig)


def _price_cell(cell: _Cell) -> SweepRow:
    try:
        params, alpha, T = cell.base, cell.alpha, cell.T
        for name, value in zip(cell.names, cell.point):
            params, alpha, T = _apply(params, alpha, T, name, value)
        policy = FundingPolicy.linearizing(alpha, params.kappa)
    except (VulnFwdError, ValueError) as exc:
        return SweepRow(cell.point, math.nan, math.nan, math.nan, math.nan, (), str(exc))
    violations = tuple(str(v) for v in validate_no_arbitrage(params))
    try:
        strike = cell.frozen_strike or tatm_strike(params, policy, T)
        res = price_general(ForwardContract(strike, T), params, policy, cell.quad_cfg)
    except (NumericalError, ValidationError) as exc:
        return SweepRow(cell.point, math.nan, math.nan, math.nan, math.nan, violations, str(exc))
    scale = 1e4 / (params.s * T) if cell.metric == "bps_per_year" else 1.0
    return SweepRow(
        cell.point,
        res.value * scale,
        res.terminal_component * scale,
        res.put_recovery_component * scale,
        res.call_recovery_component * scale,
        violations,
    )


def _evaluate(cells: list[_Cell]) -> tuple[SweepRow, ...]:
    workers = min(worker_count(), len(cells))
    if workers <= 1 or len(cells) < 64:
        return tuple(_price_cell(c) for c in cells)
    # quadrature is GIL-bound, so use processes; map keeps the input order
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return tuple(pool.map(_price_cell, cells, chunksize=max(1, len(cells) // (4 * workers))))


def _base_alpha(policy: FundingPolicy) -> float:
    return policy.alpha1


def run_sweep(
    spec: SweepSpec,
    base_params: MarketParams,
    policy: FundingPolicy,
    contract_T: float,
    quad_cfg: QuadConfig = QuadConfig(),
) -> SweepTable:
    """Price the forward at every value of ``spec.param``.

    The funding policy is kept linearizing at each point: its bond split is
    taken from ``policy`` and its stock fraction follows ``kappa``.  Points
    that breach a no-arbitrage inequality are priced and annotated; points
    whose pricing fails are kept with ``error`` set.
    """
    alpha = _base_alpha(policy)
    frozen = None
    if spec.mode == "cts":
        base_policy = FundingPolicy.linearizing(alpha, base_params.kappa)
        frozen = tatm_strike(base_params, base_policy, contract_T)
    cells = [
        _Cell((v,), (spec.param,), base_params, alpha, contract_T, frozen, spec.metric, quad_cfg)
        for v in spec.values
    ]
    return SweepTable((spec.param,), _evaluate(cells), spec.mode, spec.metric)


def run_grid(
    spec: GridSpec,
    base_params: MarketParams,
    policy: FundingPolicy,
    contract_T: float,
    quad_cfg: QuadConfig = QuadConfig(),
) -> SweepTable:
    """Joint CTM sweep; rows are ordered with ``spec.x`` varying slowest."""
    alpha = _base_alpha(policy)
    names = (spec.x.param, spec.y.param)
    cells = [
        _Cell((vx, vy), names, base_params, alpha, contract_T, None, spec.x.metric, quad_cfg)
        for vx in spec.x.values
        for vy in spec.y.values
    ]
    return SweepTable(names, _evaluate(cells), "ctm", spec.x.metric)


def parse_grid(text: str) -> tuple[float, ...]:
    """Parse ``"lo:hi:n"`` into ``n`` evenly spaced points."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValidationError(f"grid must look like lo:hi:n, got {text!r}")
    try:
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ValidationError(f"grid must look like lo:hi:n, got {text!r}") from None
    if n < 1:
        raise ValidationError("grid is empty")
    if n > 1 and lo == hi:
        raise ValidationError("grid must be strictly monotone")
    return tuple(np.linspace(lo, hi, n)) if n > 1 else (lo,)
