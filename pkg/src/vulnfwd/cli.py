"""Command-line entry point.

Subcommands: price, verify, sweep, correlation, bounds, hedge.  Each reads
an optional JSON config (``--config``), applies ``--set section.key=value``
overrides and writes JSON (or CSV for ``sweep``) to stdout or ``--out``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure,
4 verification failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from dataclasses import replace

from . import analytic
from .config import RunConfig
from .exceptions import GridTooCoarse, NotAtmrf, NumericalError, ValidationError, VulnFwdError
from .market import stock_default_correlation, validate_no_arbitrage
from .montecarlo import McConfig, mc_correlation, mc_price_qhat
from .pde import solve_linear_pde
from .sensitivity import GridSpec, SweepSpec, default_grid, parse_grid, run_grid, run_sweep

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_VERIFY = 0, 2, 3, 4
CROSS_CHECK_TOL = 1e-9


def _load_config(args) -> RunConfig:
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = RunConfig.from_json(fh.read())
        except OSError as exc:
            raise ValidationError(f"cannot read config: {exc}") from None
    else:
        cfg = RunConfig()
    pairs = []
    for item in args.set or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ValidationError(f"--set expects section.key=value, got {item!r}")
        pairs.append((key.strip(), value.strip()))
    if pairs:
        cfg = cfg.with_overrides(pairs)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, mc=replace(cfg.mc, seed=args.seed))
    if getattr(args, "paths", None) is not None:
        cfg = replace(cfg, mc=replace(cfg.mc, n_paths=args.paths))
    return cfg


def _quad(cfg: RunConfig, args) -> analytic.QuadConfig:
    tol = getattr(args, "tol", None)
    return cfg.quad if tol is None else replace(cfg.quad, abs_tol=tol)


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=True) + "\n"


def _result_dict(res: analytic.ValuationResult, strike: float) -> dict:
    return {
        "method": res.method,
        "strike": strike,
        "value": res.value,
        "bps_per_year": res.bps_per_year,
        "bps_total": res.bps_total,
        "components": res.components(),
    }


def _violations(cfg: RunConfig) -> list[str]:
    return [str(v) for v in validate_no_arbitrage(cfg.market)]


_METHODS = {
    "quadrature": lambda c, p, pol, q: analytic.price_general(c, p, pol, q),
    "atm": lambda c, p, pol, q: analytic.price_atmrf(c, p, pol),
    "approx": lambda c, p, pol, q: analytic.price_approx(c, p, pol),
}


def cmd_price(args) -> int:
    cfg = _load_config(args)
    contract = cfg.forward()
    policy = cfg.funding_policy
    quad = _quad(cfg, args)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = _METHODS[args.method](contract, cfg.market, policy, quad)
    out = _result_dict(res, contract.strike)
    if res.method == "quadrature":
        out["achieved_abs_error"] = res.abs_error
        out["requested_abs_tol"] = quad.abs_tol
    out["no_arb_violations"] = _violations(cfg)
    out["warnings"] = [str(w.message) for w in caught]
    if args.verify:
        out["cross_check"] = _cross_check(res, contract, cfg, policy, quad)
    out["config"] = cfg.to_dict()
    _emit(_dump(out), args.out)
    return EXIT_OK


def _cross_check(res, contract, cfg, policy, quad) -> dict:
    s = cfg.market.s
    if res.method == "quadrature":
        try:
            other = analytic.price_atmrf(contract, cfg.market, policy)
        except NotAtmrf:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                other = analytic.price_approx(contract, cfg.market, policy)
    else:
        other = analytic.price_general(contract, cfg.market, policy, quad)
    diff = abs(res.value - other.value) / s
    check = {"against": other.method, "other_value": other.value, "relative_difference": diff}
    if {res.method, other.method} == {"quadrature", "atm_closed_form"}:
        check["tolerance"] = CROSS_CHECK_TOL
        check["pass"] = diff <= CROSS_CHECK_TOL
    return check


def cmd_verify(args) -> int:
    cfg = _load_config(args)
    contract = cfg.forward()
    policy = cfg.funding_policy
    params = cfg.market
    quad = cfg.quad
    analytic_res = analytic.price_general(contract, params, policy, quad)
    v = analytic_res.value
    report: dict = {"analytic": {"value": v, "abs_error": analytic_res.abs_error}}

    mc_cfg = cfg.mc.config(contract.tau)
    mc = mc_price_qhat(contract, params, policy, mc_cfg)
    report["mc"] = {
        **mc.to_dict(),
        "n_steps": mc_cfg.n_steps,
        "seed": mc_cfg.seed,
        "difference": mc.mean - v,
        "pass": mc.contains(v, 3.0),
    }

    tol = args.tol if args.tol is not None else cfg.pde.tol
    pde_entry: dict = {"tolerance": tol, "n_space": cfg.pde.n_space, "n_time": cfg.pde.n_time}
    try:
        sol = solve_linear_pde(contract, params, policy, cfg.pde.grid(params, contract.tau), tol=tol)
        pde_entry.update(
            value=sol.value,
            richardson_error=sol.richardson_error,
            difference=sol.value - v,
            **{"pass": abs(sol.value - v) <= tol},
        )
    except GridTooCoarse as exc:
        pde_entry.update(error=f"GridTooCoarse: {exc}", richardson_error=exc.estimate,
                         **{"pass": False})
    report["pde"] = pde_entry
    report["pass"] = bool(report["mc"]["pass"] and pde_entry["pass"])
    report["config"] = cfg.to_dict()
    _emit(_dump(report), args.out)
    return EXIT_OK if report["pass"] else EXIT_VERIFY


def _axis(name: str, grid_text: str | None, mode: str) -> SweepSpec:
    values = parse_grid(grid_text) if grid_text else tuple(default_grid(name))
    return SweepSpec(name, values, mode)


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    policy = cfg.funding_policy
    quad = _quad(cfg, args)
    x = _axis(args.param, args.grid, args.mode)
    if args.param2:
        if args.mode != "ctm":
            raise ValidationError("joint grids are defined in ctm mode only")
        table = run_grid(GridSpec(x, _axis(args.param2, args.grid2, "ctm")),
                         cfg.market, policy, cfg.contract.expiry, quad)
    else:
        table = run_sweep(x, cfg.market, policy, cfg.contract.expiry, quad)
    _emit(table.to_csv(), args.out)
    return EXIT_OK


def cmd_correlation(args) -> int:
    cfg = _load_config(args)
    t = args.horizon if args.horizon is not None else cfg.contract.tau
    if not t > 0:
        raise ValidationError("horizon must be positive")
    out: dict = {"t": t, "closed_form": stock_default_correlation(cfg.market, t)}
    if not args.no_mc:
        est = mc_correlation(cfg.market, t, McConfig(n_paths=cfg.mc.n_paths, seed=cfg.mc.seed))
        out["mc"] = est.to_dict()
        out["within_3_std_error"] = est.contains(out["closed_form"], 3.0)
    out["config"] = cfg.to_dict()
    _emit(_dump(out), args.out)
    return EXIT_OK


def cmd_bounds(args) -> int:
    cfg = _load_config(args)
    contract = cfg.forward()
    band = analytic.no_arbitrage_band(contract, cfg.market, cfg.funding_policy, _quad(cfg, args))
    out = {
        "strike": contract.strike,
        "lower": band.lower,
        "upper": band.upper,
        "width": band.width,
        "no_arb_violations": _violations(cfg),
        "config": cfg.to_dict(),
    }
    _emit(_dump(out), args.out)
    return EXIT_OK


def cmd_hedge(args) -> int:
    cfg = _load_config(args)
    contract = cfg.forward()
    snap = analytic.hedge_units(
        contract,
        cfg.market,
        cfg.funding_policy,
        s_now=args.spot,
        t_now=args.time,
        bond_expiries=cfg.contract.bond_expiries,
        quad_cfg=_quad(cfg, args),
    )
    out = {
        "strike": contract.strike,
        "value": snap.value,
        "delta": snap.delta,
        "stock_units": snap.stock_units,
        "bond1_units": snap.bond1_units,
        "bond2_units": snap.bond2_units,
        "stock_outright": snap.stock_outright,
        "bond1_outright": snap.bond1_outright,
        "bond2_outright": snap.bond2_outright,
        "deposit_units": snap.deposit_units,
        "funding_units": snap.funding_units,
        "hedging_residual": snap.hedging_residual,
        "config": cfg.to_dict(),
    }
    _emit(_dump(out), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vulnfwd",
        description="Vulnerable equity forward pricing with funding, credit and wrong-way risk",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override a config entry, e.g. market.kappa=-0.1 (repeatable)")
    common.add_argument("--out", metavar="PATH", help="write output here instead of stdout")

    p = sub.add_parser("price", parents=[common], help="price the forward")
    p.add_argument("--method", choices=tuple(_METHODS), default="quadrature")
    p.add_argument("--verify", action="store_true", help="add a cross-check against another method")
    p.add_argument("--tol", type=float, help="quadrature absolute tolerance")
    p.set_defaults(func=cmd_price)

    p = sub.add_parser("verify", parents=[common], help="analytic vs Monte Carlo vs PDE")
    p.add_argument("--seed", type=int)
    p.add_argument("--paths", type=int)
    p.add_argument("--tol", type=float, help="PDE tolerance in value units")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", parents=[common], help="single or joint parameter sweep (CSV)")
    p.add_argument("--param", required=True)
    p.add_argument("--param2")
    p.add_argument("--mode", choices=("ctm", "cts"), default="ctm")
    p.add_argument("--grid", metavar="LO:HI:N")
    p.add_argument("--grid2", metavar="LO:HI:N")
    p.add_argument("--tol", type=float, help="quadrature absolute tolerance")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("correlation", parents=[common], help="stock/default correlation")
    p.add_argument("--horizon", type=float, help="time in years (default: contract life)")
    p.add_argument("--seed", type=int)
    p.add_argument("--paths", type=int)
    p.add_argument("--no-mc", action="store_true", help="closed form only")
    p.set_defaults(func=cmd_correlation)

    p = sub.add_parser("bounds", parents=[common], help="no-arbitrage price band")
    p.add_argument("--tol", type=float, help="quadrature absolute tolerance")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("hedge", parents=[common], help="replicating positions")
    p.add_argument("--spot", type=float, help="current stock price (default: market.s)")
    p.add_argument("--time", type=float, help="current time (default: valuation time)")
    p.add_argument("--tol", type=float, help="quadrature absolute tolerance")
    p.set_defaults(func=cmd_hedge)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (VulnFwdError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
