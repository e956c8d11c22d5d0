"""Quadratic fits through three trailing quotes and the data-built fields
that anchor the forward Black-Scholes solve.

Time ``t`` is in years with "today" at ``t = 0``; the three observations sit at
``t = -2*tau, -tau, 0``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "QuadPoly",
    "ForecastInputs",
    "SIGMA_FLOOR",
    "VolatilityClampWarning",
    "fit_quadratic",
    "extrapolate",
    "initial_condition",
    "reference_function",
]

SIGMA_FLOOR = 1e-4

# slack on the [-2tau, 2tau] and [s_b, s_a] range checks, relative to the range width
_RANGE_SLACK = 1e-12


class VolatilityClampWarning(UserWarning):
    """Extrapolated volatility fell below the positivity floor and was clamped."""


@dataclass(frozen=True)
class QuadPoly:
    """``p(t) = a*t**2 + b*t + c`` fitted on nodes spaced ``tau`` apart."""

    a: float
    b: float
    c: float
    tau: float

    def __call__(self, t):
        t = np.asarray(t, dtype=float) if not np.isscalar(t) else float(t)
        return self.c + t * (self.b + self.a * t)

    def scaled(self, factor: float) -> "QuadPoly":
        return QuadPoly(self.a * factor, self.b * factor, self.c * factor, self.tau)

    def shifted(self, h: float) -> "QuadPoly":
        """Return ``q`` with ``q(t) = p(t - h)``."""
        a, b, c = self.a, self.b, self.c
        return QuadPoly(a, b - 2.0 * a * h, c + h * (a * h - b), self.tau)


def fit_quadratic(v_m2: float, v_m1: float, v_0: float, tau: float) -> QuadPoly:
    """Unique quadratic through ``(-2tau, v_m2), (-tau, v_m1), (0, v_0)``.

    Closed-form Lagrange coefficients on the fixed stencil; no linear solve.
    """
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau!r}")
    v_m2, v_m1, v_0 = float(v_m2), float(v_m1), float(v_0)
    a = (v_m2 - 2.0 * v_m1 + v_0) / (2.0 * tau * tau)
    b = (v_m2 - 4.0 * v_m1 + 3.0 * v_0) / (2.0 * tau)
    return QuadPoly(a, b, v_0, float(tau))


def extrapolate(p: QuadPoly, t: float) -> float:
    """Evaluate ``p`` inside the window ``[-2tau, 2tau]`` where the fit is trusted."""
    lim = 2.0 * p.tau
    if abs(t) > lim * (1.0 + _RANGE_SLACK):
        raise ValueError(f"t={t!r} outside [-2tau, 2tau] = [{-lim!r}, {lim!r}]")
    return float(p(t))


@dataclass(frozen=True)
class ForecastInputs:
    """Everything one forward solve needs, built from a three-day window.

    ``ub_poly``/``ua_poly`` are the option bid/ask quadratics, ``sigma_poly``
    the implied volatility quadratic; ``s_b``/``s_a`` are today's stock quotes.
    """

    ub_poly: QuadPoly
    ua_poly: QuadPoly
    sigma_poly: QuadPoly
    s_b: float
    s_a: float
    tau: float

    def __post_init__(self):
        if not self.s_b < self.s_a:
            raise ValueError(f"stock bid {self.s_b!r} must be below ask {self.s_a!r}")
        if not 0.0 < self.tau < 0.25:
            raise ValueError(f"tau must lie in (0, 1/4), got {self.tau!r}")
        if not self.ua_poly(0.0) > self.ub_poly(0.0):
            raise ValueError("option ask must exceed bid at t=0")

    @property
    def u_b(self) -> float:
        return float(self.ub_poly(0.0))

    @property
    def u_a(self) -> float:
        return float(self.ua_poly(0.0))

    @property
    def s_mid(self) -> float:
        return (self.s_b + self.s_a) / 2

    @property
    def crossed(self) -> bool:
        """True when the extrapolated ask is not above the bid at tau or 2tau."""
        return any(not self.ua_poly(t) > self.ub_poly(t) for t in (self.tau, 2 * self.tau))

    def sigma(self, t):
        """Extrapolated volatility clamped below at ``SIGMA_FLOOR``."""
        raw = np.asarray(self.sigma_poly(t), dtype=float)
        if np.any(raw < SIGMA_FLOOR):
            warnings.warn(
                f"extrapolated volatility {raw.min():.3g} clamped to {SIGMA_FLOOR}",
                VolatilityClampWarning,
                stacklevel=2,
            )
        out = np.maximum(raw, SIGMA_FLOOR)
        return float(out) if out.ndim == 0 else out

    def scaled_quotes(self, factor: float) -> "ForecastInputs":
        """Same stock interval and volatility with option quotes scaled."""
        return ForecastInputs(
            self.ub_poly.scaled(factor),
            self.ua_poly.scaled(factor),
            self.sigma_poly,
            self.s_b,
            self.s_a,
            self.tau,
        )


def _check_s(inputs: ForecastInputs, s):
    s = np.asarray(s, dtype=float)
    slack = _RANGE_SLACK * (inputs.s_a - inputs.s_b)
    if np.any(s < inputs.s_b - slack) or np.any(s > inputs.s_a + slack):
        raise ValueError(f"s outside [{inputs.s_b!r}, {inputs.s_a!r}]")
    return s


def _linear_in_s(lo, hi, s_b, s_a, s):
    # same line as slope*s + intercept, but exact at s_b and free of the
    # s*slope vs intercept cancellation when s is far from zero
    return lo + (hi - lo) * ((s - s_b) / (s_a - s_b))


def initial_condition(inputs: ForecastInputs, s):
    """Linear interpolation of today's option bid/ask across ``[s_b, s_a]``."""
    s = _check_s(inputs, s)
    out = _linear_in_s(inputs.u_b, inputs.u_a, inputs.s_b, inputs.s_a, s)
    return float(out) if out.ndim == 0 else out


def reference_function(inputs: ForecastInputs, s, t):
    """``F(s, t)``: the s-linear interpolant of the extrapolated bid/ask at time t.

    Broadcasts ``s`` against ``t``.
    """
    s = _check_s(inputs, s)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > 2 * inputs.tau * (1 + _RANGE_SLACK)):
        raise ValueError(f"t outside [0, 2tau] with tau={inputs.tau!r}")
    out = _linear_in_s(inputs.ub_poly(t), inputs.ua_poly(t), inputs.s_b, inputs.s_a, s)
    return float(out) if np.ndim(out) == 0 else out
