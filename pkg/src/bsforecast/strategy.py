"""The four-case buy/sell rule and the forecast relative error."""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .forecast import Forecast

__all__ = ["Decision", "StrategyConfig", "decide", "relative_error"]


class Decision(enum.Enum):
    # value: (days after which each bought item is sold, days to the next forecast)
    BUY_TWO = ((1, 2), 2)
    BUY_ONE_SELL_AT_TAU = ((1,), 1)
    BUY_ONE_SELL_AT_2TAU = ((2,), 2)
    NO_TRADE = ((), 1)

    @property
    def sell_offsets(self) -> tuple[int, ...]:
        return self.value[0]

    @property
    def next_forecast_offset(self) -> int:
        return self.value[1]


@dataclass(frozen=True)
class StrategyConfig:
    cutoff: float = 0.03

    def __post_init__(self):
        if not self.cutoff >= 0:
            raise ValueError(f"cutoff must be >= 0, got {self.cutoff!r}")


def decide(forecast: Forecast, config: StrategyConfig = StrategyConfig()) -> Decision:
    """Buy when the predicted price clears the extrapolated ask by ``cutoff``.

    Flagged forecasts never trade.
    """
    if forecast.abstain:
        return Decision.NO_TRADE
    a = forecast.predicted_tau >= forecast.extrap_ask_tau + config.cutoff
    b = forecast.predicted_2tau >= forecast.extrap_ask_2tau + config.cutoff
    if a and b:
        return Decision.BUY_TWO
    if a:
        return Decision.BUY_ONE_SELL_AT_TAU
    if b:
        return Decision.BUY_ONE_SELL_AT_2TAU
    return Decision.NO_TRADE


def relative_error(predicted: float, true_last: float) -> float:
    if not true_last > 0:
        raise ValueError(f"true last price must be positive, got {true_last!r}")
    return abs(predicted - true_last) / true_last
