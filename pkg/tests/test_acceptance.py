"""Acceptance criteria, one test (or group of tests) per criterion.

Each check records a ``[PASS]``/``[FAIL]`` line that is printed in the
terminal summary.  Run directly with ``python tests/test_acceptance.py``.
"""

import math
import statistics
import sys
import time
import warnings

import numpy as np
import pytest
from scipy.integrate import quad

from conftest import ACCEPTANCE_LINES
from vulnfwd import (
    ForwardContract,
    FundingPolicy,
    MarketParams,
    McConfig,
    PdeGrid,
    QuadConfig,
    bs_call_qhat,
    bs_put_qhat,
    derive_rates,
    hedge_units,
    mc_correlation,
    price_approx,
    price_atmrf,
    price_client,
    price_general,
    solve_linear_pde,
    stock_default_correlation,
    upsilon0,
    upsilon_tilde,
    validate_no_arbitrage,
)
from vulnfwd.montecarlo import iter_p_measure, mc_step_refinement
from vulnfwd.sensitivity import GridSpec, SweepSpec, run_grid, run_sweep, tatm_strike

# reference values of int_0^5 exp(-0.085 u) Phi(-0.3 sqrt(u) + z / sqrt(u)) du, 30 digits
UPSILON_REF = {
    0.1: 1.51291896837778420880647402594,
    0.05: 1.44187872805271054095739835611,
    0.025: 1.40583786973218816172132260236,
    0.0125: 1.38768657852421707134474214583,
}


def record(key: str, ok: bool, text: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {text}"
    ACCEPTANCE_LINES[key] = line
    print(line)


def random_arbitrage_free(rng: np.random.Generator) -> tuple[MarketParams, FundingPolicy, float]:
    r = rng.uniform(-0.01, 0.08)
    f = r + rng.uniform(0.0, 0.05)
    h_s, h1, h2 = rng.uniform(r, f, size=3)
    kappa = rng.uniform(-0.5, 0.0)
    p = MarketParams(
        s=rng.uniform(0.5, 2.0), r=r, f=f, q=rng.uniform(0.0, 0.1), sigma=rng.uniform(0.05, 0.8),
        h_s=h_s, h1=h1, h2=h2, r1=h1 + rng.uniform(0.001, 0.1), r2=h2 + rng.uniform(0.001, 0.1),
        kappa=kappa,
    )
    return p, FundingPolicy.linearizing(rng.uniform(0.0, 1.0), kappa), rng.uniform(0.5, 20.0)


def test_criterion_1_closed_form_matches_quadrature():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        p, pol, tau = random_arbitrage_free(rng)
        assert not validate_no_arbitrage(p)
        c = ForwardContract((1 + p.kappa) * p.s * math.exp(p.r * tau), tau)
        diff = abs(price_atmrf(c, p, pol).value - price_general(c, p, pol).value) / p.s
        worst = max(worst, diff)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 10.0
    record("1", ok, f"max |atmrf - quadrature| / notional = {worst:.2e} over 100 sets "
                    f"(limit 1e-9), {elapsed:.2f} s (limit 10 s)")
    assert ok


def test_criterion_2_baseline_tatm():
    p = MarketParams()
    pol = FundingPolicy.linearizing(0.5, 0.0)
    res = price_general(ForwardContract(tatm_strike(p, pol, 5.0), 5.0), p, pol)
    ok = abs(res.bps_per_year - 3.55) <= 0.05 and abs(res.bps_total - 17.74) <= 0.25
    record("2", ok, f"baseline TATM {res.bps_per_year:.4f} bps/yr (3.55 +/- 0.05), "
                    f"{res.bps_total:.4f} bps total (17.74 +/- 0.25)")
    assert ok


def test_criterion_3_cts_wrong_way_baseline():
    p = MarketParams(kappa=-0.1)
    pol = FundingPolicy.linearizing(0.5, -0.1)
    row = run_sweep(SweepSpec("kappa", (-0.1,), "cts"), p, pol, 5.0).rows[0]
    res = price_general(ForwardContract(tatm_strike(p, pol, 5.0), 5.0), p, pol)
    ok = (abs(row.value - -24.25) <= 0.25 and abs(res.bps_per_year - -24.25) <= 0.25
          and abs(res.bps_total - -121.27) <= 1.25)
    record("3", ok, f"kappa = -0.1 CTS base {row.value:.4f} bps/yr (-24.25 +/- 0.25), "
                    f"{res.bps_total:.4f} bps total (-121.27 +/- 1.25)")
    assert ok


def _approx_errors_bps(sigma: float, ms: np.ndarray) -> np.ndarray:
    p = MarketParams(sigma=sigma)
    pol = FundingPolicy.linearizing(0.5, 0.0)
    k_star = p.s * math.exp(p.r * 5.0)
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for m in ms:
            c = ForwardContract(m * k_star, 5.0)
            out.append(abs(price_approx(c, p, pol).value - price_general(c, p, pol).value) / p.s * 1e4)
    return np.asarray(out)


def test_criterion_4_approximation_accuracy():
    ms = np.linspace(0.85, 1.15, 61)
    err = _approx_errors_bps(0.3, ms)
    inner = (ms >= 0.90 - 1e-12) & (ms <= 1.10 + 1e-12)
    high_vol = _approx_errors_bps(0.5, ms)
    off_par = np.abs(ms - 1.0) > 1e-9
    ok_inner = err[inner].max() <= 50.0
    ok_outer = err.max() <= 100.0
    ok_sigma = bool(np.all(high_vol[off_par] < err[off_par]))
    ok = ok_inner and ok_outer and ok_sigma
    record("4", ok, f"max error {err[inner].max():.3f} bps on [0.90, 1.10] (limit 50), "
                    f"{err.max():.3f} bps on [0.85, 1.15] (limit 100); sigma 0.5 below sigma 0.3 "
                    f"at every m != 1: {ok_sigma}")
    assert ok


def test_criterion_5_monte_carlo():
    p = MarketParams()
    pol = FundingPolicy.linearizing(0.5, 0.0)
    c = ForwardContract(tatm_strike(p, pol, 5.0), 5.0)
    exact = price_general(c, p, pol).value
    start = time.perf_counter()
    ref = mc_step_refinement(c, p, pol, McConfig.per_year(50, 5.0, n_paths=1_000_000, seed=2024))
    elapsed = time.perf_counter() - start
    est = ref.coarse
    inside = est.contains(exact, 3.0)
    stable = abs(ref.fine.mean - est.mean) < est.std_error
    ok = inside and stable and elapsed < 60.0
    record("5", ok, f"MC {est.mean:.6e} +/- {est.std_error:.2e} vs analytic {exact:.6e} "
                    f"({abs(est.mean - exact) / est.std_error:.2f} std errors); step doubling moves "
                    f"the mean by {abs(ref.fine.mean - est.mean):.2e}; {elapsed:.1f} s (limit 60 s)")
    assert ok


def test_criterion_6_pde():
    p = MarketParams()
    pol = FundingPolicy.linearizing(0.5, 0.0)
    c = ForwardContract(tatm_strike(p, pol, 5.0), 5.0)
    exact = price_general(c, p, pol).value
    errs = {n: abs(solve_linear_pde(c, p, pol, PdeGrid.around_atm(p, 5.0, n, n)).value - exact)
            for n in (100, 200, 400)}
    ratios = (errs[100] / errs[200], errs[200] / errs[400])
    ok = errs[400] <= 1e-3 and min(ratios) >= 3.5
    record("6", ok, f"400x400 error {errs[400]:.2e} (limit 1e-3); refinement ratios "
                    f"{ratios[0]:.2f}, {ratios[1]:.2f} (limit 3.5)")
    assert ok


def test_criterion_7a_put_call_parity():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(200):
        p, pol, tau = random_arbitrage_free(rng)
        rates = derive_rates(p, pol)
        s, k = rng.uniform(0.2, 3.0, size=2)
        lhs = bs_call_qhat(s, k, tau, rates, p.sigma) - bs_put_qhat(s, k, tau, rates, p.sigma)
        worst = max(worst, abs(lhs - (s * math.exp(rates.mu_hat * tau) - k)))
    ok = worst <= 1e-12
    record("7a", ok, f"put-call parity max residual {worst:.2e} (limit 1e-12)")
    assert ok


def test_criterion_7b_upsilon0_closed_form():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(200):
        t = rng.uniform(0.1, 20.0)
        x = rng.uniform(-0.2, 0.5)
        y = rng.uniform(-2.0, 2.0)

        def integrand(u, x=x, y=y):
            return math.exp(-x * u) * 0.5 * math.erfc(-y * math.sqrt(u) / math.sqrt(2.0))

        ref, _ = quad(integrand, 0.0, t, epsabs=1e-14, epsrel=1e-14, limit=500)
        worst = max(worst, abs(upsilon0(t, x, y) - ref))
    ok = worst <= 1e-10
    record("7b", ok, f"upsilon0 closed form vs quadrature max error {worst:.2e} (limit 1e-10)")
    assert ok


def _approx_price_errors(shifts):
    p = MarketParams()
    pol = FundingPolicy.linearizing(0.5, 0.0)
    k_star = p.s * math.exp(p.r * 5.0)
    out = []
    for d in shifts:
        c = ForwardContract(math.exp(d * p.sigma) * k_star, 5.0)
        out.append(abs(price_approx(c, p, pol).value
                       - price_general(c, p, pol, QuadConfig(abs_tol=1e-13)).value))
    return out


def test_criterion_7c_upsilon_tilde_convergence():
    zs = sorted(UPSILON_REF, reverse=True)
    errs = [abs(upsilon_tilde(5.0, 0.085, -0.3, z) - UPSILON_REF[z]) for z in zs]
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    # for reference: inside the priced brackets the z|z| remainders of the two legs cancel
    price_errs = _approx_price_errors((0.04, 0.02, 0.01, 0.005))
    price_ratios = [a / b for a, b in zip(price_errs, price_errs[1:])]
    ok = min(ratios[1:]) >= 8.0
    record("7c", ok, "upsilon_tilde error ratio on halving z: "
                     + ", ".join(f"{q:.2f}" for q in ratios) + " (limit 8, asymptotic); "
                     + "approximate price error ratio on halving mbar: "
                     + ", ".join(f"{q:.2f}" for q in price_ratios))
    assert ok


def test_criterion_7d_component_identity():
    rng = np.random.default_rng(13)
    worst = 0.0
    for _ in range(50):
        p, pol, tau = random_arbitrage_free(rng)
        res = price_general(ForwardContract(rng.uniform(0.5, 2.0), tau), p, pol)
        total = res.terminal_component + res.put_recovery_component + res.call_recovery_component
        worst = max(worst, abs(res.value - total))
    ok = worst <= 1e-15
    record("7d", ok, f"component sum identity max residual {worst:.2e}")
    assert ok


def test_criterion_7e_dealer_client_sum():
    pol = FundingPolicy.linearizing(0.5, 0.0)
    c = ForwardContract(0.975, 5.0)
    spread = MarketParams()
    flat = MarketParams(f=0.04, h_s=0.04, h1=0.04, h2=0.04)
    s_spread = price_general(c, spread, pol).value + price_client(c, spread, pol).value
    s_flat = price_general(c, flat, pol).value + price_client(c, flat, pol).value
    rng = np.random.default_rng(17)
    all_nonpositive = True
    for _ in range(50):
        p, pol_r, tau = random_arbitrage_free(rng)
        ci = ForwardContract(rng.uniform(0.5, 2.0), tau)
        total = price_general(ci, p, pol_r).value + price_client(ci, p, pol_r).value
        all_nonpositive &= total <= 1e-15
    ok = s_spread < 0 and abs(s_flat) <= 1e-14 and all_nonpositive
    record("7e", ok, f"v + nu = {s_spread:.3e} with b = 0.02, {s_flat:.1e} with b = 0, "
                     f"non-positive on 50 random sets: {all_nonpositive}")
    assert ok


def test_criterion_7f_hedge():
    rng = np.random.default_rng(19)
    worst = 0.0
    exclusive = True
    for _ in range(30):
        p, pol, tau = random_arbitrage_free(rng)
        h = hedge_units(ForwardContract(rng.uniform(0.5, 2.0), tau), p, pol)
        exclusive &= h.deposit_units * h.funding_units == 0.0
        worst = max(worst, abs(h.hedging_residual))
    ok = exclusive and worst <= 1e-8
    record("7f", ok, f"deposit x funding units zero on 30 sets: {exclusive}; "
                     f"max hedging residual {worst:.2e} (limit 1e-8)")
    assert ok


def test_criterion_7g_first_default_intensity():
    p = MarketParams(lambda1=0.15, lambda2=0.1)
    horizon = 5.0
    defaults = 0
    exposure = 0.0
    for part in iter_p_measure(p, horizon, McConfig(n_paths=1_000_000, seed=23)):
        tau = np.minimum(part.tau1, part.tau2)
        defaults += int(np.count_nonzero(tau <= horizon))
        exposure += float(np.minimum(tau, horizon).sum())
    rate = defaults / exposure
    se = math.sqrt(defaults) / exposure
    ok = abs(rate - 0.25) <= 3 * se
    record("7g", ok, f"first-default intensity {rate:.5f} +/- {se:.5f} vs 0.25 "
                     f"({abs(rate - 0.25) / se:.2f} std errors)")
    assert ok


def test_criterion_7h_correlation_mc():
    p = MarketParams(kappa=-0.1)
    est = mc_correlation(p, 5.0, McConfig(n_paths=10_000_000, seed=29))
    exact = stock_default_correlation(p, 5.0)
    ok = est.contains(exact, 3.0)
    record("7h", ok, f"correlation closed form {exact:.6f} vs MC {est.mean:.6f} +/- "
                     f"{est.std_error:.6f} ({abs(est.mean - exact) / est.std_error:.2f} std errors)")
    assert ok


def test_criterion_7i_no_jump_no_correlation():
    values = [stock_default_correlation(MarketParams(kappa=0.0, lambda1=lam, lambda2=lam), t)
              for lam in (0.01, 0.3) for t in (0.5, 5.0)]
    ok = all(v == 0.0 for v in values)
    record("7i", ok, f"kappa = 0 correlation values {values}")
    assert ok


def _median_times(fns, n: int) -> list[float]:
    # calls are interleaved so that both functions see the same machine load
    times = [[] for _ in fns]
    for _ in range(n):
        for fn, acc in zip(fns, times):
            start = time.perf_counter()
            fn()
            acc.append(time.perf_counter() - start)
    return [statistics.median(acc) for acc in times]


def test_criterion_8_performance():
    p = MarketParams()
    pol = FundingPolicy.linearizing(0.5, 0.0)
    c = ForwardContract(p.s * math.exp(p.r * 5.0), 5.0)
    cfg = QuadConfig(abs_tol=1e-10)
    price_atmrf(c, p, pol)
    price_general(c, p, pol, cfg)
    t_closed, t_quad = _median_times([lambda: price_atmrf(c, p, pol),
                                      lambda: price_general(c, p, pol, cfg)], 1000)
    ratio = t_quad / t_closed
    ok = ratio >= 10.0
    record("8", ok, f"median closed form {t_closed * 1e6:.1f} us, quadrature {t_quad * 1e6:.1f} us, "
                    f"ratio {ratio:.1f} (limit 10)")
    assert ok


def test_criterion_9_sweep_orderings():
    p = MarketParams()
    pol = FundingPolicy.linearizing(0.5, 0.0)
    f_vals = run_sweep(SweepSpec.default("f"), p, pol, 5.0).column()
    r1_vals = run_sweep(SweepSpec.default("r1"), p, pol, 5.0).column()
    ratio = np.ptp(f_vals) / np.ptp(r1_vals)
    grid = run_grid(GridSpec(SweepSpec("f", (p.r,)), SweepSpec.default("sigma")), p, pol, 5.0)
    flat = np.ptp(grid.column())
    ok = ratio >= 1.5 and flat <= 1.0
    record("9", ok, f"f-sweep range / r1-sweep range = {ratio:.3f} (limit 1.5); "
                    f"variation in sigma at f = r {flat:.2e} bps/yr (limit 1)")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
