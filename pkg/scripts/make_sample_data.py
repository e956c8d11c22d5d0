"""Write the bundled sample option histories under data/.

Quotes come from a geometric Brownian motion for the stock and Black-Scholes
prices for the option, with bid/ask spreads and noisy implied volatility laid
on top. Fully determined by the seeds below.
"""

import argparse
import datetime as dt
import pathlib

import numpy as np
from scipy.stats import norm

from bsforecast.market_data import COLUMNS

OPTIONS = [
    # id, seed, spot, strike, expiry (years), vol, call?, days
    ("SAMPLE_C50", 11, 49.0, 50.0, 0.35, 0.28, True, 24),
    ("SAMPLE_P100", 12, 102.0, 100.0, 0.30, 0.22, False, 24),
    ("SAMPLE_C25", 13, 24.2, 25.0, 0.45, 0.35, True, 20),
]


def bs_price(s, k, t, vol, call):
    sd = vol * np.sqrt(t)
    d1 = (np.log(s / k) + 0.5 * sd * sd) / sd
    d2 = d1 - sd
    if call:
        return s * norm.cdf(d1) - k * norm.cdf(d2)
    return k * norm.cdf(-d2) - s * norm.cdf(-d1)


def business_days(start: dt.date, n: int):
    d = start
    while n:
        if d.weekday() < 5:
            yield d
            n -= 1
        d += dt.timedelta(days=1)


def make_history(seed, spot, strike, expiry, vol, call, days):
    rng = np.random.default_rng(seed)
    dt_year = 1 / 255
    rows = []
    s = spot
    for k, day in enumerate(business_days(dt.date(2014, 9, 2), days)):
        if k:
            s *= np.exp(-0.5 * vol**2 * dt_year + vol * np.sqrt(dt_year) * rng.standard_normal())
        t_left = expiry - k * dt_year
        iv = vol * (1 + 0.04 * rng.standard_normal())
        mid = bs_price(s, strike, t_left, iv, call)
        half = max(0.01, round(0.02 + 0.02 * mid, 2) / 2)
        opt_bid = round(mid - half, 2)
        opt_ask = round(mid + half, 2)
        opt_last = round(rng.uniform(opt_bid, opt_ask) + 0.01 * rng.standard_normal(), 2)
        s_half = 0.01 * (1 + rng.integers(0, 3))
        s_mid = round(s, 2)
        rows.append(
            (
                day.isoformat(),
                f"{opt_bid:.2f}",
                f"{opt_ask:.2f}",
                f"{max(opt_last, 0.01):.2f}",
                f"{iv:.4f}",
                f"{s_mid - s_half:.2f}",
                f"{s_mid + s_half:.2f}",
                f"{s_mid + 0.01 * rng.integers(-1, 2):.2f}",
            )
        )
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=pathlib.Path(__file__).resolve().parents[1] / "data", type=pathlib.Path)
    args = parser.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for name, *params in OPTIONS:
        rows = make_history(*params)
        path = args.out / f"{name}.csv"
        path.write_text(",".join(COLUMNS) + "\n" + "".join(",".join(r) + "\n" for r in rows))
        print(path)


if __name__ == "__main__":
    main()
