"""Finite-difference oracle for the linear pre-default pricing equation.

In time-to-maturity ``tau`` and ``y = ln(s) + r tau`` the value ``u`` solves

    u_tau = 0.5 sigma^2 u_yy + (mu_hat - r - 0.5 sigma^2) u_y - r_hat_v u + g,
    g     = b_hat_v z - b max(z, 0),   z = (1 + kappa) e^{y - r tau} - K e^{-r tau},

with ``u(0, y) = e^y - K``.  The shift by ``r tau`` pins the kink of the
source at ``y = ln(K / (1 + kappa))`` for every time level, so a single grid
node can be placed on it.  Dirichlet data come from the exact solutions of
the problem when ``z`` keeps one sign, which is the behaviour far from the
kink in either direction.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded

from .analytic import ForwardContract, _linear_rates, atmrf_strike
from .exceptions import GridTooCoarse, ValidationError
from .market import FundingPolicy, MarketParams

SCHEMES = ("crank_nicolson", "implicit")


@dataclass(frozen=True)
class PdeGrid:
    """Uniform log-price grid.  ``x_min``/``x_max`` bound ``ln(s)`` today.

    With ``snap_kink`` the grid is shifted by less than one cell so that a
    node sits on the kink of the source term.
    """

    x_min: float
    x_max: float
    n_space: int = 400
    n_time: int = 400
    scheme: str = "crank_nicolson"
    snap_kink: bool = True

    def __post_init__(self) -> None:
        if self.n_space < 3:
            raise ValidationError("n_space must be at least 3")
        if self.n_time < 1:
            raise ValidationError("n_time must be at least 1")
        if not self.x_min < self.x_max:
            raise ValidationError("need x_min < x_max")
        if self.scheme not in SCHEMES:
            raise ValidationError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")

    @classmethod
    def around_atm(
        cls,
        params: MarketParams,
        tau: float,
        n_space: int = 400,
        n_time: int = 400,
        width: float = 6.0,
        scheme: str = "crank_nicolson",
    ) -> "PdeGrid":
        """``ln K_star`` plus or minus ``width`` standard deviations, widened to contain ``ln s``."""
        centre = math.log(atmrf_strike(params, tau))
        half = width * params.sigma * math.sqrt(tau)
        log_s = math.log(params.s)
        lo = min(centre - half, log_s - 0.5 * half)
        hi = max(centre + half, log_s + 0.5 * half)
        return cls(lo, hi, n_space, n_time, scheme)

    def coarsened(self) -> "PdeGrid":
        return PdeGrid(self.x_min, self.x_max, max(3, self.n_space // 2),
                       max(1, self.n_time // 2), self.scheme, self.snap_kink)


@dataclass(frozen=True)
class PdeSolution:
    value: float
    s: float
    t: float
    richardson_error: float | None
    grid: PdeGrid
    times: np.ndarray = field(repr=False)
    spots: np.ndarray = field(repr=False)
    surface: np.ndarray = field(repr=False)

    def to_csv(self, path) -> None:
        """Write the surface as rows of ``t, s, v`` (calendar time, spot, value)."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "s", "v"])
            for i, t in enumerate(self.times):
                for s, v in zip(self.spots[i], self.surface[i]):
                    writer.writerow([f"{t:.12g}", f"{s:.12g}", f"{v:.12g}"])


def _exp_integral(x: float, tau: float) -> float:
    # int_0^tau e^{-x w} dw
    if abs(x * tau) < 1e-12:
        return tau
    return -math.expm1(-x * tau) / x


def _solve_once(contract, params, policy, grid: PdeGrid, keep_surface: bool):
    rates = _linear_rates(params, policy)
    tau_end = contract.tau
    r, sigma, kappa, K = params.r, params.sigma, params.kappa, contract.strike
    bv, b, rv, mu = rates.b_hat_v, rates.b, rates.r_hat_v, rates.mu_hat
    if not grid.x_min < math.log(params.s) < grid.x_max:
        raise ValidationError("grid must contain ln(s)")

    # y-domain: shifted by r * tau_end so that the evaluation point stays inside
    y_kink = math.log(K / (1.0 + kappa))
    y_lo = min(grid.x_min, grid.x_min + r * tau_end)
    y_hi = max(grid.x_max, grid.x_max + r * tau_end)
    h = (y_hi - y_lo) / (grid.n_space - 1)
    if grid.snap_kink and y_lo < y_kink < y_hi:
        # snap a node onto the kink, keeping the spacing
        y_lo = y_kink - h * round((y_kink - y_lo) / h)
    y = y_lo + h * np.arange(grid.n_space)

    d = 0.5 * sigma * sigma
    adv = mu - r - d
    lower = d / h ** 2 - adv / (2.0 * h)
    upper = d / h ** 2 + adv / (2.0 * h)
    diag = -2.0 * d / h ** 2 - rv

    def source(tau: float) -> np.ndarray:
        z = (1.0 + kappa) * np.exp(y - r * tau) - K * math.exp(-r * tau)
        return bv * z - b * np.maximum(z, 0.0)

    def linear_solution(a: float, tau: float, yy: float) -> float:
        s = math.exp(yy - r * tau)
        term = math.exp(-rv * tau) * (s * math.exp(mu * tau) - K)
        rec = (1.0 + kappa) * s * _exp_integral(rv - mu, tau) - K * math.exp(-r * tau) * _exp_integral(bv, tau)
        return term + a * rec

    def boundaries(tau: float) -> tuple[float, float]:
        return linear_solution(bv, tau, y[0]), linear_solution(bv - b, tau, y[-1])

    def step(u: np.ndarray, tau0: float, dt: float, theta: float) -> np.ndarray:
        n = u.size - 2
        ab = np.zeros((3, n))
        ab[0, 1:] = -theta * dt * upper
        ab[1, :] = 1.0 - theta * dt * diag
        ab[2, :-1] = -theta * dt * lower
        lu = lower * u[:-2] + diag * u[1:-1] + upper * u[2:]
        g0, g1 = source(tau0), source(tau0 + dt)
        rhs = u[1:-1] + (1.0 - theta) * dt * lu + dt * (theta * g1[1:-1] + (1.0 - theta) * g0[1:-1])
        left, right = boundaries(tau0 + dt)
        rhs[0] += theta * dt * lower * left
        rhs[-1] += theta * dt * upper * right
        out = np.empty_like(u)
        out[1:-1] = solve_banded((1, 1), ab, rhs)
        out[0], out[-1] = left, right
        return out

    dt = tau_end / grid.n_time
    u = np.exp(y) - K
    taus = [0.0]
    levels = [u.copy()] if keep_surface else []
    tau = 0.0
    for n in range(grid.n_time):
        if grid.scheme == "implicit":
            u = step(u, tau, dt, 1.0)
        elif n == 0:
            # Rannacher start: two backward-Euler half steps
            u = step(u, tau, 0.5 * dt, 1.0)
            u = step(u, tau + 0.5 * dt, 0.5 * dt, 1.0)
        else:
            u = step(u, tau, dt, 0.5)
        tau = (n + 1) * dt
        taus.append(tau)
        if keep_surface:
            levels.append(u.copy())

    y_eval = math.log(params.s) + r * tau_end
    value = float(CubicSpline(y, u)(y_eval))
    if keep_surface:
        tau_arr = np.asarray(taus)
        times = contract.expiry - tau_arr
        spots = np.exp(y[None, :] - r * tau_arr[:, None])
        surface = np.asarray(levels)
    else:
        times = spots = surface = np.empty(0)
    return value, times, spots, surface


def solve_linear_pde(
    contract: ForwardContract,
    params: MarketParams,
    policy: FundingPolicy,
    grid: PdeGrid | None = None,
    tol: float | None = None,
    keep_surface: bool = False,
) -> PdeSolution:
    """Backward solve from the terminal payoff to the valuation time.

    A second solve on the half-resolution grid gives the Richardson estimate
    ``|v_h - v_2h| / 3``; ``GridTooCoarse`` is raised when it exceeds ``tol``.
    """
    grid = grid or PdeGrid.around_atm(params, contract.tau)
    value, times, spots, surface = _solve_once(contract, params, policy, grid, keep_surface)
    estimate = None
    if tol is not None:
        coarse, *_ = _solve_once(contract, params, policy, grid.coarsened(), False)
        estimate = abs(value - coarse) / 3.0
        if estimate > tol:
            raise GridTooCoarse(
                f"Richardson error estimate {estimate:.3e} exceeds tolerance {tol:.1e} "
                f"on a {grid.n_space}x{grid.n_time} grid",
                estimate=estimate,
            )
    return PdeSolution(
        value=value,
        s=params.s,
        t=contract.valuation_time,
        richardson_error=estimate,
        grid=grid,
        times=times,
        spots=spots,
        surface=surface,
    )
