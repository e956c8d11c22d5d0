"""One forecast event: three-day window in, predicted last prices at tau and 2tau out."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

from .interp import ForecastInputs, fit_quadratic
from .market_data import Window
from .qr_solver import SolverConfig, minimize

__all__ = ["TAU", "Forecast", "inputs_from_window", "make_forecast"]

log = logging.getLogger(__name__)

TAU = 1.0 / 255.0  # one trading day, in years

# abstention flags
CROSSED = "crossed_extrapolation"
CAP_HIT = "iteration_cap"


@dataclass(frozen=True)
class Forecast:
    predicted_tau: float
    predicted_2tau: float
    extrap_bid_tau: float
    extrap_ask_tau: float
    extrap_bid_2tau: float
    extrap_ask_2tau: float
    s_mid: float
    flags: frozenset[str] = frozenset()

    @property
    def abstain(self) -> bool:
        return bool(self.flags)


def inputs_from_window(window: Window, tau: float = TAU) -> ForecastInputs:
    days = (window.day_minus2, window.day_minus1, window.day_0)
    return ForecastInputs(
        ub_poly=fit_quadratic(*(d.opt_bid for d in days), tau),
        ua_poly=fit_quadratic(*(d.opt_ask for d in days), tau),
        sigma_poly=fit_quadratic(*(d.impl_vol for d in days), tau),
        s_b=window.day_0.stock_bid,
        s_a=window.day_0.stock_ask,
        tau=tau,
    )


def make_forecast(window: Window, config: SolverConfig = SolverConfig(), tau: float = TAU) -> Forecast:
    """Solve forward from ``window.day_0`` and read the solution at the stock mid-point.

    The stock interval comes from ``day_0`` alone. A crossed bid/ask
    extrapolation or an unconverged solve is flagged, not raised.
    """
    inputs = inputs_from_window(window, tau)
    if inputs.s_a - inputs.s_b < 0.01:
        log.info("%s: stock spread %.4g below one cent", window.day_0.date, inputs.s_a - inputs.s_b)
    flags = set()
    if inputs.crossed:
        flags.add(CROSSED)
    result = minimize(inputs, config)
    if not result.converged:
        flags.add(CAP_HIT)
    grid = result.grid
    i = grid.mid_s
    pred_tau = float(result.u[i, grid.mid_t])
    pred_2tau = float(result.u[i, -1])
    if not flags and not (math.isfinite(pred_tau) and math.isfinite(pred_2tau)):
        raise ArithmeticError("non-finite prediction from a converged solve")
    return Forecast(
        predicted_tau=pred_tau,
        predicted_2tau=pred_2tau,
        extrap_bid_tau=float(inputs.ub_poly(tau)),
        extrap_ask_tau=float(inputs.ua_poly(tau)),
        extrap_bid_2tau=float(inputs.ub_poly(2 * tau)),
        extrap_ask_2tau=float(inputs.ua_poly(2 * tau)),
        s_mid=inputs.s_mid,
        flags=frozenset(flags),
    )
