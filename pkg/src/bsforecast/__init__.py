"""Short-horizon option price forecasts from the Black-Scholes equation solved
forward in time with Tikhonov-type regularization."""

from .backtest import BacktestReport, SyntheticConfig, run_backtest, run_synthetic
from .forecast import TAU, Forecast, make_forecast
from .interp import ForecastInputs, QuadPoly, fit_quadratic
from .market_data import DataError, OptionHistory, parse_history, read_history, window_at
from .qr_solver import SolverConfig, SolverError, minimize
from .strategy import Decision, StrategyConfig, decide, relative_error

__version__ = "0.1.0"
