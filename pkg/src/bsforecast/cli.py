"""Command-line entry point: ``bsforecast {forecast,backtest,synth,demo-illposed}``.

Exit codes: 0 ok, 1 usage, 2 data error, 3 solver error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import datetime as dt
import io
import logging
import math
import os
import sys
from dataclasses import dataclass

from .backtest import SyntheticConfig, default_synthetic_inputs, run_backtest, run_synthetic
from .forecast import TAU, make_forecast
from .market_data import DataError, read_history, window_at
from .qr_solver import SolverConfig, SolverError, reversed_heat_norm
from .strategy import StrategyConfig, decide

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 1, 2, 3

REPORT_COLUMNS = ("option_id", "days_evaluated", "num_trades", "total_pnl", "mean_rel_error")
SYNTH_DELTAS = (1e-2, 1e-3, 1e-4)

log = logging.getLogger("bsforecast")


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    solver: SolverConfig
    strategy: StrategyConfig
    tau: float
    noise_delta: float | None
    beta: float
    seed: int
    out: str | None


def _env(name: str, default):
    # argparse runs string defaults through the option's type
    return os.environ.get(f"BSFORECAST_{name.upper()}", default)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--alpha", type=float, default=_env("alpha", 0.01), help="regularization weight (default: %(default)s)")
    g.add_argument("--tau", type=float, default=_env("tau", TAU), help="time step in years (default: 1/255)")
    g.add_argument("--ns", type=int, default=_env("ns", 21), help="stock-price nodes, odd (default: %(default)s)")
    g.add_argument("--nt", type=int, default=_env("nt", 21), help="time nodes, odd (default: %(default)s)")
    g.add_argument("--cutoff", type=float, default=_env("cutoff", 0.03), help="margin over the ask, dollars (default: %(default)s)")
    g.add_argument("--cg-tol", type=float, default=_env("cg_tol", 1e-9), help="relative gradient tolerance (default: %(default)s)")
    g.add_argument("--cg-max-iters", type=int, default=_env("cg_max_iters", None), help="iteration cap (default: 10 x free nodes)")
    g.add_argument("--noise-delta", type=float, default=_env("noise_delta", None), help="synthetic noise level (default: sweep 1e-2, 1e-3, 1e-4)")
    g.add_argument("--beta", type=float, default=_env("beta", 0.5), help="alpha = delta**(2 beta) (default: %(default)s)")
    g.add_argument("--seed", type=int, default=_env("seed", 0), help="noise seed (default: %(default)s)")
    g.add_argument("--out", default=_env("out", None), help="report CSV path")
    g.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bsforecast", description="Forward Black-Scholes option price forecasts.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("forecast", help="forecast one day of one option")
    p.add_argument("history", help="option history CSV")
    p.add_argument("--date", required=True, help="forecast day, YYYY-MM-DD")
    _common(p)

    p = sub.add_parser("backtest", help="replay the strategy over option histories")
    p.add_argument("histories", nargs="*", help="option history CSVs")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes (default: %(default)s)")
    _common(p)

    p = sub.add_parser("synth", help="synthetic round-trip error table")
    _common(p)

    p = sub.add_parser("demo-illposed", help="norm growth of the reversed heat equation")
    p.add_argument("--n-max", type=int, default=5, help="number of Fourier modes (default: %(default)s)")
    p.add_argument("--t", type=float, nargs="+", default=[0.0, 0.1, 0.25, 0.5, 1.0], help="times")
    p.add_argument("--decay", type=float, default=None, help="use f_n = exp(-n^2 * DECAY) instead of f_n = 1/n")
    return parser


def run_config(args) -> RunConfig:
    try:
        solver = SolverConfig(
            alpha=args.alpha,
            n_s=args.ns,
            n_t=args.nt,
            cg_rel_tol=args.cg_tol,
            cg_max_iters=args.cg_max_iters,
        )
        strat = StrategyConfig(args.cutoff)
        if not 0 < args.tau < 0.25:
            raise ValueError(f"tau must lie in (0, 1/4), got {args.tau!r}")
        SyntheticConfig(noise_delta=args.noise_delta or 0.0, beta=args.beta)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return RunConfig(solver, strat, args.tau, args.noise_delta, args.beta, args.seed, args.out)


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.6f}"


def cmd_forecast(args, cfg: RunConfig, out) -> int:
    try:
        history = read_history(args.history)
        date = dt.date.fromisoformat(args.date)
        idx = history.index_of(date)
    except (OSError, DataError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    if idx < 2:
        print(f"error: insufficient history before {date} (need 2 prior days)", file=sys.stderr)
        return EXIT_DATA
    try:
        fc = make_forecast(window_at(history, idx), cfg.solver, cfg.tau)
    except (SolverError, ArithmeticError) as exc:
        print(f"error: solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    decision = decide(fc, cfg.strategy)
    print(f"option          {history.option_id}", file=out)
    print(f"date            {date}", file=out)
    print(f"s_mid           {fc.s_mid:.6f}", file=out)
    print(f"predicted_tau   {fc.predicted_tau:.6f}", file=out)
    print(f"predicted_2tau  {fc.predicted_2tau:.6f}", file=out)
    print(f"bid/ask tau     {fc.extrap_bid_tau:.6f} / {fc.extrap_ask_tau:.6f}", file=out)
    print(f"bid/ask 2tau    {fc.extrap_bid_2tau:.6f} / {fc.extrap_ask_2tau:.6f}", file=out)
    if fc.flags:
        print(f"flags           {','.join(sorted(fc.flags))}", file=out)
    print(f"decision        {decision.name}", file=out)
    return EXIT_OK


def _backtest_one(path, cfg: RunConfig):
    # module-level so it pickles into worker processes
    return run_backtest(read_history(path), cfg.solver, cfg.strategy, tau=cfg.tau)


def report_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    total = 0.0
    for r in reports:
        w.writerow([r.option_id, r.days_evaluated, len(r.trades), _fmt(r.total_pnl), _fmt(r.mean_rel_error)])
        total += r.total_pnl
    days = sum(r.days_evaluated for r in reports)
    n_trades = sum(len(r.trades) for r in reports)
    # average of the per-option averages, options without sales left out
    means = [r.mean_rel_error for r in reports if r.trades]
    mean = sum(means) / len(means) if means else math.nan
    w.writerow(["TOTAL", days, n_trades, _fmt(total), _fmt(mean)])
    return buf.getvalue()


def cmd_backtest(args, cfg: RunConfig, out) -> int:
    if not args.histories:
        raise UsageError("backtest needs at least one history file")
    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(args.jobs) as pool:
            futures = [pool.submit(_backtest_one, p, cfg) for p in args.histories]
            outcomes = []
            for f in futures:
                try:
                    outcomes.append(f.result())
                except Exception as exc:  # reported per file below
                    outcomes.append(exc)
    else:
        outcomes = []
        for p in args.histories:
            try:
                outcomes.append(_backtest_one(p, cfg))
            except Exception as exc:
                outcomes.append(exc)

    reports = []
    solver_failed = False
    for path, res in zip(args.histories, outcomes):
        if isinstance(res, Exception):
            if not isinstance(res, (OSError, DataError, ValueError, SolverError, ArithmeticError)):
                raise res
            solver_failed |= isinstance(res, (SolverError, ArithmeticError))
            print(f"skipped {path}: {res}", file=sys.stderr)
        else:
            reports.append(res)
    if not reports:
        return EXIT_SOLVER if solver_failed else EXIT_DATA

    text = report_csv(reports)
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    rows = list(csv.reader(io.StringIO(text)))
    widths = [max(len(r[k]) for r in rows) for k in range(len(REPORT_COLUMNS))]
    for r in rows:
        print("  ".join(c.rjust(wd) for c, wd in zip(r, widths)), file=out)
    return EXIT_OK


def cmd_synth(args, cfg: RunConfig, out) -> int:
    deltas = (0.0,) + SYNTH_DELTAS if cfg.noise_delta is None else (cfg.noise_delta,)
    inputs = default_synthetic_inputs(cfg.tau)
    print(f"{'delta':>8}  {'alpha':>8}  {'err(Q_tau)':>11}  {'err(Q_2tau)':>11}  {'err(t=2tau)':>11}", file=out)
    try:
        for d in deltas:
            syn = SyntheticConfig(noise_delta=d, beta=cfg.beta, seed=cfg.seed, solver=cfg.solver)
            r = run_synthetic(inputs, syn)
            print(f"{d:8.0e}  {r.alpha:8.0e}  {r.err_q_tau:11.4e}  {r.err_q_2tau:11.4e}  {r.err_top:11.4e}", file=out)
    except (SolverError, ArithmeticError) as exc:
        print(f"error: solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_demo_illposed(args, out) -> int:
    if args.n_max < 1:
        raise UsageError("--n-max must be >= 1")
    n = range(1, args.n_max + 1)
    coeffs = [1.0 / k if args.decay is None else math.exp(-k * k * args.decay) for k in n]
    base = reversed_heat_norm(coeffs, 0.0)
    print(f"{'t':>8}  {'|u(t)|^2':>14}  {'ratio to t=0':>14}", file=out)
    for t in args.t:
        v = reversed_heat_norm(coeffs, t)
        print(f"{t:8.4g}  {v:14.6e}  {v / base:14.6e}", file=out)
    return EXIT_OK


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        if args.command == "demo-illposed":
            return cmd_demo_illposed(args, out)
        cfg = run_config(args)
        handler = {"forecast": cmd_forecast, "backtest": cmd_backtest, "synth": cmd_synth}[args.command]
        return handler(args, cfg, out)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
