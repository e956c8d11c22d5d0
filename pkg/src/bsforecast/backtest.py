"""Day-by-day strategy replay over an option history, and the synthetic
round-trip experiment that checks the forward solver against a known field.
"""

from __future__ import annotations

import collections
import datetime as dt
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.stats import norm

from .forecast import TAU, Forecast, make_forecast
from .interp import ForecastInputs, QuadPoly, fit_quadratic
from .market_data import OptionHistory, Window, window_at
from .qr_solver import Grid, SolverConfig, build_grid, minimize, sample_reference, solve_wellposed_downward
from .strategy import Decision, StrategyConfig, decide, relative_error

__all__ = [
    "TradeRecord",
    "BacktestReport",
    "SyntheticConfig",
    "SyntheticReport",
    "run_backtest",
    "run_synthetic",
    "default_synthetic_inputs",
]

Forecaster = Callable[[Window, SolverConfig, float], Forecast]


@dataclass(frozen=True)
class TradeRecord:
    buy_date: dt.date
    sell_date: dt.date
    buy_price: float
    sell_price: float
    pnl: float
    rel_error: float
    horizon: int  # days held; 2 means the error uses the 2tau prediction


@dataclass
class BacktestReport:
    option_id: str
    trades: list[TradeRecord]
    total_pnl: float
    mean_rel_error: float
    days_evaluated: int
    decision_counts: dict[Decision, int]
    skipped: int = 0  # decisions whose sell day lies past the end of the data


def run_backtest(
    history: OptionHistory,
    solver: SolverConfig = SolverConfig(),
    strat: StrategyConfig = StrategyConfig(),
    *,
    tau: float = TAU,
    forecaster: Forecaster = make_forecast,
) -> BacktestReport:
    """Replay the strategy from the first day with two trailing days.

    Both legs trade at the option's last price. Each sale records the
    relative error of the prediction made for that horizon.
    """
    n = len(history)
    if n < 5:
        raise ValueError(f"{history.option_id}: backtest needs at least 5 days, got {n}")
    recs = history.records
    trades: list[TradeRecord] = []
    counts = collections.Counter({d: 0 for d in Decision})
    evaluated = skipped = 0
    i = 2
    while i <= n - 2:
        fc = forecaster(window_at(history, i), solver, tau)
        evaluated += 1
        decision = decide(fc, strat)
        counts[decision] += 1
        if decision.sell_offsets and i + max(decision.sell_offsets) > n - 1:
            skipped += 1
            i += 1
            continue
        buy = recs[i].opt_last
        for k in decision.sell_offsets:
            sell = recs[i + k].opt_last
            predicted = fc.predicted_tau if k == 1 else fc.predicted_2tau
            trades.append(
                TradeRecord(
                    buy_date=recs[i].date,
                    sell_date=recs[i + k].date,
                    buy_price=buy,
                    sell_price=sell,
                    pnl=sell - buy,
                    rel_error=relative_error(predicted, sell),
                    horizon=k,
                )
            )
        i += decision.next_forecast_offset

    total = 0.0
    for t in trades:  # left to right, matching the report's own sum
        total += t.pnl
    mean_err = sum(t.rel_error for t in trades) / len(trades) if trades else math.nan
    return BacktestReport(history.option_id, trades, total, mean_err, evaluated, dict(counts), skipped)


# -- synthetic validation ----------------------------------------------------


@dataclass(frozen=True)
class SyntheticConfig:
    """Noise level ``noise_delta`` picks ``alpha = noise_delta ** (2 * beta)``.

    The terminal profile borrows its curvature from an at-the-money call with
    ``profile_expiry`` years left; ``profile_expiry = 0`` gives a straight line.
    """

    noise_delta: float = 0.0
    beta: float = 0.5
    seed: int = 0
    profile_expiry: float = 0.25
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if not 0.0 <= self.noise_delta < 1.0:
            raise ValueError(f"noise_delta must lie in [0, 1), got {self.noise_delta!r}")
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta!r}")

    @property
    def alpha(self) -> float:
        if self.noise_delta == 0.0:
            return self.solver.alpha
        return self.noise_delta ** (2 * self.beta)


@dataclass(frozen=True)
class SyntheticReport:
    delta: float
    alpha: float
    err_q_tau: float
    err_q_2tau: float
    err_top: float
    noiseless_err_q_tau: float
    noiseless_err_q_2tau: float
    noiseless_err_top: float
    converged: bool


def default_synthetic_inputs(tau: float = TAU) -> ForecastInputs:
    """A near-the-money call-like quote set on a $99-$101 stock interval, vol 0.2."""
    return ForecastInputs(
        ub_poly=fit_quadratic(2.00, 2.02, 2.05, tau),
        ua_poly=fit_quadratic(2.90, 2.93, 2.97, tau),
        sigma_poly=fit_quadratic(0.2, 0.2, 0.2, tau),
        s_b=99.0,
        s_a=101.0,
        tau=tau,
    )


def _call_price(s, strike: float, vol: float, expiry: float):
    sd = vol * math.sqrt(expiry)
    d1 = (np.log(s / strike) + 0.5 * sd * sd) / sd
    return s * norm.cdf(d1) - strike * norm.cdf(d1 - sd)


def terminal_profile(inputs: ForecastInputs, s: np.ndarray, expiry: float) -> np.ndarray:
    """Chord between the ``t = 2tau`` bid/ask plus a call's convexity over ``[s_b, s_a]``.

    The call is struck at the interval mid-point, zero rate, volatility
    ``sigma(2tau)``. Only its deviation from its own chord is used, so the
    profile meets both boundary values exactly.
    """
    x = (s - inputs.s_b) / (inputs.s_a - inputs.s_b)
    t_end = 2 * inputs.tau
    lo, hi = inputs.ub_poly(t_end), inputs.ua_poly(t_end)
    profile = lo + (hi - lo) * x
    if expiry > 0:
        c = _call_price(s, inputs.s_mid, inputs.sigma(t_end), expiry)
        c_lo, c_hi = _call_price(np.array([inputs.s_b, inputs.s_a]), inputs.s_mid, inputs.sigma(t_end), expiry)
        profile = profile + c - (c_lo + (c_hi - c_lo) * x)
    return profile


def manufacture(inputs: ForecastInputs, grid: Grid, expiry: float) -> np.ndarray:
    """Exact field ``u*`` from the downward solve of the terminal profile."""
    return solve_wellposed_downward(terminal_profile(inputs, grid.s_nodes, expiry), inputs, grid)


def _anchor(inputs: ForecastInputs, grid: Grid, initial: np.ndarray) -> np.ndarray:
    # reference function corrected so its t = 0 row is the given initial data
    F = sample_reference(inputs, grid)
    return F + (initial - F[:, 0])[:, None]


def _fit_on_forward_nodes(values, tau: float) -> QuadPoly:
    # quadratic through (0, v0), (tau, v1), (2tau, v2)
    v0, v1, v2 = values
    return fit_quadratic(v0, v1, v2, tau).shifted(2 * tau)


def _rel_l2(err: np.ndarray, ref: np.ndarray) -> float:
    return float(np.linalg.norm(err) / np.linalg.norm(ref))


def _errors(u: np.ndarray, exact: np.ndarray, grid: Grid) -> tuple[float, float, float]:
    h = grid.mid_t
    e = u - exact
    return (
        _rel_l2(e[:, : h + 1], exact[:, : h + 1]),
        _rel_l2(e, exact),
        _rel_l2(e[:, -1], exact[:, -1]),
    )


def run_synthetic(inputs: ForecastInputs, syn: SyntheticConfig = SyntheticConfig()) -> SyntheticReport:
    """Manufacture ``u*`` downward, perturb its data, solve forward, compare.

    Noise is multiplicative, uniform on ``[-delta, delta]``, applied to the
    boundary quotes at ``t = 0, tau, 2tau`` (before the quadratic refit) and to
    the interior of the ``t = 0`` profile. Errors are relative discrete L2
    norms over ``t <= tau``, over the whole grid, and on the ``t = 2tau`` row.
    """
    tau = inputs.tau
    grid = build_grid(inputs, syn.solver)
    exact = manufacture(inputs, grid, syn.profile_expiry)
    f_exact = exact[:, 0]

    clean_cfg = replace(syn.solver, alpha=0.01)
    clean = minimize(inputs, clean_cfg, initial=f_exact, F_field=_anchor(inputs, grid, f_exact))
    clean_errs = _errors(clean.u, exact, grid)

    delta = syn.noise_delta
    if delta == 0.0:
        noisy_inputs, f_noisy = inputs, f_exact
    else:
        rng = np.random.default_rng(syn.seed)
        nodes = np.array([0.0, tau, 2 * tau])
        ub_vals = inputs.ub_poly(nodes) * (1 + delta * rng.uniform(-1, 1, 3))
        ua_vals = inputs.ua_poly(nodes) * (1 + delta * rng.uniform(-1, 1, 3))
        noisy_inputs = ForecastInputs(
            _fit_on_forward_nodes(ub_vals, tau),
            _fit_on_forward_nodes(ua_vals, tau),
            inputs.sigma_poly,
            inputs.s_b,
            inputs.s_a,
            tau,
        )
        f_noisy = f_exact * (1 + delta * rng.uniform(-1, 1, f_exact.shape))
        f_noisy[0] = noisy_inputs.ub_poly(0.0)
        f_noisy[-1] = noisy_inputs.ua_poly(0.0)

    cfg = replace(syn.solver, alpha=syn.alpha)
    res = minimize(noisy_inputs, cfg, initial=f_noisy, F_field=_anchor(noisy_inputs, grid, f_noisy))
    errs = _errors(res.u, exact, grid)
    return SyntheticReport(delta, syn.alpha, *errs, *clean_errs, res.converged and clean.converged)
