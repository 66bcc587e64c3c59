"""Monte Carlo oracles.

Two independent simulators live here:

* ``mc_price_qhat`` evaluates the conditional-expectation representation of
  the pre-default value under the pricing measure, where the stock is a
  geometric Brownian motion with drift ``mu_hat`` and the recovery terms are
  time integrals along each path.
* ``simulate_p_measure`` draws the physical jump-diffusion with two
  exponential default clocks, used to check the first-to-default structure
  and the stock/default correlation.

Paths are generated in fixed-size chunks, each with its own child of
``SeedSequence(seed)``, so results are bit-reproducible regardless of how
many worker threads evaluate the chunks.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .analytic import ForwardContract, _linear_rates
from .exceptions import DegenerateVariance, ValidationError
from .market import FundingPolicy, MarketParams

DEFAULT_CHUNK = 1 << 14


def worker_count() -> int:
    """Thread cap from ``VULNFWD_THREADS``, else the number of cores."""
    env = os.environ.get("VULNFWD_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValidationError(f"VULNFWD_THREADS must be an integer, got {env!r}") from None
        return max(n, 1)
    return os.cpu_count() or 1


@dataclass(frozen=True)
class McConfig:
    n_paths: int = 100_000
    n_steps: int = 250
    seed: int = 0
    antithetic: bool = True
    chunk_size: int = DEFAULT_CHUNK

    def __post_init__(self) -> None:
        if self.n_paths < 2:
            raise ValidationError(f"n_paths must be at least 2, got {self.n_paths}")
        if self.n_steps < 1:
            raise ValidationError(f"n_steps must be at least 1, got {self.n_steps}")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        if self.chunk_size < 2:
            raise ValidationError("chunk_size must be at least 2")

    @classmethod
    def per_year(cls, steps_per_year: int, tau: float, **kw) -> "McConfig":
        """Config with ``steps_per_year * tau`` time steps (at least one)."""
        return cls(n_steps=max(1, int(round(steps_per_year * tau))), **kw)


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_paths: int

    def contains(self, value: float, n_sigma: float = 3.0) -> bool:
        return abs(value - self.mean) <= n_sigma * self.std_error

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std_error": self.std_error, "n_paths": self.n_paths}


def _chunks(n_units: int, chunk: int) -> list[int]:
    full, rest = divmod(n_units, chunk)
    return [chunk] * full + ([rest] if rest else [])


def _map_ordered(fn, jobs):
    workers = min(worker_count(), len(jobs))
    if workers <= 1:
        return [fn(*job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


def _rng(seq: np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seq))


class _SampleStats:
    """Streaming mean/variance over per-sample values (Chan's merge)."""

    def __init__(self) -> None:
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0

    def add(self, values: np.ndarray) -> None:
        n_b = values.size
        if n_b == 0:
            return
        mean_b = float(values.mean())
        m2_b = float(((values - mean_b) ** 2).sum())
        n = self.n + n_b
        delta = mean_b - self.mean
        self.mean += delta * n_b / n
        self.m2 += m2_b + delta * delta * self.n * n_b / n
        self.n = n

    def std_error(self) -> float:
        if self.n < 2:
            return 0.0
        return math.sqrt(self.m2 / (self.n - 1) / self.n)


# --------------------------------------------------------------------------
# Pricing measure
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class _QhatProblem:
    s: float
    strike: float
    tau: float
    r: float
    sigma: float
    kappa: float
    mu_hat: float
    r_hat_v: float
    b_hat_v: float
    b: float


def _path_values(prob: _QhatProblem, log_paths: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Discounted payoff plus trapezoid recovery integral for each row of ``log_paths``.

    ``log_paths`` holds ``sigma * W`` on the grid ``times`` (first column 0).
    """
    drift = (prob.mu_hat - 0.5 * prob.sigma ** 2) * times
    spot = prob.s * np.exp(log_paths + drift)
    disc = np.exp(-prob.r_hat_v * times)
    strike_path = prob.strike * np.exp(-prob.r * (prob.tau - times))
    z = (1.0 + prob.kappa) * spot - strike_path
    source = (prob.b_hat_v - prob.b) * np.maximum(z, 0.0) + prob.b_hat_v * np.minimum(z, 0.0)
    source *= disc
    dt = np.diff(times)
    integral = (0.5 * (source[:, 1:] + source[:, :-1]) * dt).sum(axis=1)
    terminal = disc[-1] * (spot[:, -1] - prob.strike)
    return terminal + integral


def _qhat_chunk(
    prob: _QhatProblem,
    seq: np.random.SeedSequence,
    n_units: int,
    n_steps: int,
    antithetic: bool,
    refine: bool,
) -> tuple[np.ndarray, np.ndarray | None]:
    main_seq, bridge_seq = seq.spawn(2)
    dt = prob.tau / n_steps
    coarse_t = np.linspace(0.0, prob.tau, n_steps + 1)
    incr = _rng(main_seq).standard_normal((n_units, n_steps))
    w = np.zeros((n_units, n_steps + 1))
    np.cumsum(incr, axis=1, out=w[:, 1:])
    w *= math.sqrt(dt)

    def sample(sign: float, xi: np.ndarray | None) -> tuple[np.ndarray, np.ndarray | None]:
        coarse = _path_values(prob, sign * prob.sigma * w, coarse_t)
        if xi is None:
            return coarse, None
        fine_w = np.empty((n_units, 2 * n_steps + 1))
        fine_w[:, ::2] = w
        fine_w[:, 1::2] = 0.5 * (w[:, 1:] + w[:, :-1]) + 0.5 * math.sqrt(dt) * xi
        fine_t = np.linspace(0.0, prob.tau, 2 * n_steps + 1)
        return coarse, _path_values(prob, sign * prob.sigma * fine_w, fine_t)

    xi = _rng(bridge_seq).standard_normal((n_units, n_steps)) if refine else None
    coarse, fine = sample(1.0, xi)
    if antithetic:
        coarse_a, fine_a = sample(-1.0, xi)
        coarse = 0.5 * (coarse + coarse_a)
        if fine is not None:
            fine = 0.5 * (fine + fine_a)
    return coarse, fine


def _qhat_problem(contract, params, policy) -> _QhatProblem:
    rates = _linear_rates(params, policy)
    return _QhatProblem(
        s=params.s,
        strike=contract.strike,
        tau=contract.tau,
        r=params.r,
        sigma=params.sigma,
        kappa=params.kappa,
        mu_hat=rates.mu_hat,
        r_hat_v=rates.r_hat_v,
        b_hat_v=rates.b_hat_v,
        b=rates.b,
    )


def _run_qhat(contract, params, policy, cfg: McConfig, refine: bool):
    prob = _qhat_problem(contract, params, policy)
    # antithetic pairs are the sampling unit
    n_units = cfg.n_paths // 2 if cfg.antithetic else cfg.n_paths
    sizes = _chunks(n_units, cfg.chunk_size)
    seqs = np.random.SeedSequence(cfg.seed).spawn(len(sizes))
    jobs = [(prob, seq, n, cfg.n_steps, cfg.antithetic, refine) for seq, n in zip(seqs, sizes)]
    results = _map_ordered(_qhat_chunk, jobs)
    coarse, fine, diff = _SampleStats(), _SampleStats(), _SampleStats()
    for c, f in results:
        coarse.add(c)
        if refine:
            fine.add(f)
            diff.add(f - c)
    n_eff = n_units * 2 if cfg.antithetic else n_units
    est = McEstimate(coarse.mean, coarse.std_error(), n_eff)
    if not refine:
        return est
    return est, McEstimate(fine.mean, fine.std_error(), n_eff), McEstimate(diff.mean, diff.std_error(), n_eff)


def mc_price_qhat(
    contract: ForwardContract,
    params: MarketParams,
    policy: FundingPolicy,
    cfg: McConfig = McConfig(),
) -> McEstimate:
    """Simulated pre-default value under the pricing measure.

    The stock is stepped exactly on ``cfg.n_steps`` equal steps over the
    remaining life, so only the recovery time integrals carry
    discretization error (trapezoid rule).
    """
    return _run_qhat(contract, params, policy, cfg, refine=False)


@dataclass(frozen=True)
class StepRefinement:
    """Coarse and step-doubled estimates on common Brownian paths."""

    coarse: McEstimate
    fine: McEstimate
    difference: McEstimate

    @property
    def shift(self) -> float:
        return self.fine.mean - self.coarse.mean


def mc_step_refinement(
    contract: ForwardContract,
    params: MarketParams,
    policy: FundingPolicy,
    cfg: McConfig = McConfig(),
) -> StepRefinement:
    """Repeat the estimate with doubled time steps on the same paths.

    The fine grid inserts Brownian-bridge midpoints drawn from a separate
    stream, so the coarse estimate equals ``mc_price_qhat`` bit for bit and
    the difference isolates the time-discretization effect.
    """
    coarse, fine, diff = _run_qhat(contract, params, policy, cfg, refine=True)
    return StepRefinement(coarse, fine, diff)


# --------------------------------------------------------------------------
# Physical measure
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PathSample:
    """Simulated state at ``horizon`` for a batch of paths.

    ``first_defaulter`` is 1 or 2 for the counterparty that defaulted first
    by the horizon and 0 when neither has.  ``default_time`` is the first
    default time (``inf`` if both clocks are silent).  ``stock_continuous``
    is the price without the jump factor.
    """

    horizon: float
    stock: np.ndarray
    stock_continuous: np.ndarray
    default_indicator: np.ndarray
    default_time: np.ndarray
    first_defaulter: np.ndarray
    tau1: np.ndarray
    tau2: np.ndarray


def _exp_clock(rng: np.random.Generator, lam: float, n: int) -> np.ndarray:
    if lam == 0.0:
        return np.full(n, np.inf)
    return rng.exponential(1.0 / lam, n)


def _p_chunk(params: MarketParams, horizon: float, seq, n: int) -> PathSample:
    rng = _rng(seq)
    tau1 = _exp_clock(rng, params.lambda1, n)
    tau2 = _exp_clock(rng, params.lambda2, n)
    w = rng.standard_normal(n) * math.sqrt(horizon)
    first = np.minimum(tau1, tau2)
    jumped = first <= horizon
    who = np.where(jumped, np.where(tau1 <= tau2, 1, 2), 0).astype(np.int8)
    drift = (params.mu - params.q - 0.5 * params.sigma ** 2) * horizon
    cont = params.s * np.exp(drift + params.sigma * w)
    stock = cont * (1.0 + params.kappa * jumped)
    return PathSample(horizon, stock, cont, jumped, first, who, tau1, tau2)


def iter_p_measure(params: MarketParams, horizon: float, cfg: McConfig) -> Iterator[PathSample]:
    """Yield the physical-measure sample chunk by chunk in a fixed order."""
    if not horizon > 0:
        raise ValidationError(f"horizon must be positive, got {horizon}")
    sizes = _chunks(cfg.n_paths, cfg.chunk_size)
    seqs = np.random.SeedSequence(cfg.seed).spawn(len(sizes))
    for seq, n in zip(seqs, sizes):
        yield _p_chunk(params, horizon, seq, n)


def simulate_p_measure(params: MarketParams, horizon: float, cfg: McConfig) -> PathSample:
    """Exact simulation of the stock and both default clocks up to ``horizon``."""
    parts = list(iter_p_measure(params, horizon, cfg))
    fields = ("stock", "stock_continuous", "default_indicator", "default_time",
              "first_defaulter", "tau1", "tau2")
    joined = {f: np.concatenate([getattr(p, f) for p in parts]) for f in fields}
    return PathSample(horizon=horizon, **joined)


def _pearson(sums: np.ndarray) -> float:
    n, sx, sy, sxx, syy, sxy = sums
    cov = sxy / n - (sx / n) * (sy / n)
    vx = sxx / n - (sx / n) ** 2
    vy = syy / n - (sy / n) ** 2
    if vx <= 0.0 or vy <= 0.0:
        raise DegenerateVariance("a sample has zero variance; correlation undefined")
    return float(cov / math.sqrt(vx * vy))


def mc_correlation(params: MarketParams, t: float, cfg: McConfig) -> McEstimate:
    """Sample correlation of ``S_t`` and the first-default indicator.

    Sufficient statistics are accumulated per block of paths; the standard
    error is a delete-one-block jackknife.  At most 64 blocks are used.
    """
    if params.lambda1 + params.lambda2 <= 0.0:
        raise DegenerateVariance("both default intensities are zero; the indicator is constant")
    n_blocks = max(2, min(64, cfg.n_paths // 2))
    block = max(1, math.ceil(cfg.n_paths / n_blocks))
    block_cfg = McConfig(
        n_paths=cfg.n_paths, n_steps=cfg.n_steps, seed=cfg.seed,
        antithetic=False, chunk_size=max(2, min(block, cfg.chunk_size * 16)),
    )
    rows = []
    for part in iter_p_measure(params, t, block_cfg):
        # centre the stock on the spot to limit cancellation in the raw moments
        x = part.stock / params.s - 1.0
        y = part.default_indicator.astype(float)
        rows.append([x.size, x.sum(), y.sum(), (x * x).sum(), (y * y).sum(), (x * y).sum()])
    sums = np.asarray(rows)
    total = sums.sum(axis=0)
    rho = _pearson(total)
    g = len(rows)
    if g < 2:
        return McEstimate(rho, 0.0, cfg.n_paths)
    loo = np.array([_pearson(total - row) for row in sums])
    # weighted for unequal block sizes only through the last partial block
    se = math.sqrt((g - 1) / g * ((loo - loo.mean()) ** 2).sum())
    return McEstimate(rho, se, cfg.n_paths)
