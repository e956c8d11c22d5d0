import pathlib

import pytest

from bsforecast.backtest import default_synthetic_inputs
from bsforecast.forecast import TAU
from bsforecast.interp import ForecastInputs, fit_quadratic

DATA_DIR = pathlib.Path(__file__).resolve().parents[1] / "data"

HEADER = "date,opt_bid,opt_ask,opt_last,impl_vol,stock_bid,stock_ask,stock_last\n"


def make_inputs(bid=(2.00, 2.10, 2.05), ask=(2.30, 2.38, 2.42), vol=(0.20, 0.21, 0.22), s=(99.0, 101.0), tau=TAU):
    return ForecastInputs(
        fit_quadratic(*bid, tau),
        fit_quadratic(*ask, tau),
        fit_quadratic(*vol, tau),
        s[0],
        s[1],
        tau,
    )


@pytest.fixture
def varied_inputs():
    """Quotes with curvature in time and a drifting volatility."""
    return make_inputs()


@pytest.fixture
def synthetic_inputs():
    return default_synthetic_inputs(TAU)


@pytest.fixture
def sample_paths():
    paths = sorted(DATA_DIR.glob("*.csv"))
    assert paths, "bundled sample CSVs missing; run scripts/make_sample_data.py"
    return paths
