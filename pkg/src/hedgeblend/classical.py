"""Classical hedging baselines: Black-Scholes delta and the no-trade band.

All closed forms assume zero rates. Functions broadcast over numpy arrays,
so whole (paths x steps) schedules evaluate in one call per time step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .accounting import HedgeSchedule
from .errors import BoundaryError, ParameterError
from .market import MarketPaths


@dataclass(frozen=True)
class VolMode:
    """Volatility input for a classical strategy.

    Either a fixed estimate (the practitioner who never re-marks vol), or the
    true instantaneous volatility sqrt(v_t) read off the simulated paths.
    """

    mode: str  # "fixed" | "true"
    vol_value: float | None = None

    def __post_init__(self):
        if self.mode not in ("fixed", "true"):
            raise ParameterError(f"unknown vol mode {self.mode!r}")
        if self.mode == "fixed" and (self.vol_value is None or self.vol_value <= 0):
            raise ParameterError("fixed vol mode requires vol_value > 0")

    @classmethod
    def fixed(cls, vol_value: float) -> "VolMode":
        return cls(mode="fixed", vol_value=vol_value)

    @classmethod
    def true_instantaneous(cls) -> "VolMode":
        return cls(mode="true")


def _d1(spot, strike, vol, tau):
    return (np.log(spot / strike) + 0.5 * vol**2 * tau) / (vol * np.sqrt(tau))


def bs_delta(spot, strike, vol, tau):
    """Call delta N(d1); at expiry (or zero vol) the exercise indicator.

    d1 = (log(S/K) + vol^2 * tau / 2) / (vol * sqrt(tau)); the S == K tie at
    the boundary returns 0.5.
    """
    spot = np.asarray(spot, dtype=float)
    vol = np.asarray(vol, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ParameterError("tau must be non-negative")
    indicator = np.where(spot > strike, 1.0, np.where(spot == strike, 0.5, 0.0))
    live = (tau > 0) & (vol > 0)
    if not live.any():
        return indicator if indicator.ndim else float(indicator)
    safe_vol = np.where(live, vol, 1.0)
    safe_tau = np.where(live, tau, 1.0)
    with np.errstate(divide="ignore"):
        value = norm.cdf(_d1(spot, strike, safe_vol, safe_tau))
    out = np.where(live, value, indicator)
    return out if out.ndim else float(out)


def bs_price(spot, strike, vol, tau):
    """Zero-rate call price; intrinsic value at expiry."""
    spot = np.asarray(spot, dtype=float)
    tau = np.asarray(tau, dtype=float)
    intrinsic = np.maximum(spot - strike, 0.0)
    live = (tau > 0) & (np.asarray(vol, dtype=float) > 0)
    if not live.any():
        return intrinsic if intrinsic.ndim else float(intrinsic)
    safe_tau = np.where(live, tau, 1.0)
    d1 = _d1(spot, strike, vol, safe_tau)
    d2 = d1 - vol * np.sqrt(safe_tau)
    value = spot * norm.cdf(d1) - strike * norm.cdf(d2)
    out = np.where(live, value, intrinsic)
    return out if out.ndim else float(out)


def bs_gamma(spot, strike, vol, tau):
    """Call gamma phi(d1) / (S * vol * sqrt(tau)); undefined at expiry."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise BoundaryError("gamma is undefined at expiry (tau must be > 0)")
    spot = np.asarray(spot, dtype=float)
    vol = np.asarray(vol, dtype=float)
    live = vol > 0
    safe_vol = np.where(live, vol, 1.0)
    out = np.where(
        live,
        norm.pdf(_d1(spot, strike, safe_vol, tau)) / (spot * safe_vol * np.sqrt(tau)),
        0.0,
    )
    return out if out.ndim else float(out)


def _vol_surface(paths: MarketPaths, vmode: VolMode) -> np.ndarray:
    """Volatility at each (path, decision step) according to the mode."""
    n = paths.n_steps
    if vmode.mode == "fixed":
        return np.full((paths.n_paths, n), vmode.vol_value)
    return np.sqrt(paths.variance[:, :n])


def bs_delta_strategy(paths: MarketPaths, strike: float, vmode: VolMode) -> HedgeSchedule:
    """Black-Scholes delta at every (path, step) with tau_t = T - t*dt."""
    n = paths.n_steps
    taus = paths.grid.taus()[None, :]
    vol = _vol_surface(paths, vmode)
    delta = bs_delta(paths.spot[:, :n], strike, vol, taus)
    label = "bs_delta_fixed" if vmode.mode == "fixed" else "bs_delta_true"
    return HedgeSchedule(delta, label)


def ww_band_halfwidth(spot, strike, vol, tau, cost_rate, risk_aversion=1.0):
    """Half-width (3 * c * gamma^2 * S / (2a))**(1/3) of the no-trade band."""
    if risk_aversion <= 0:
        raise ParameterError("risk_aversion must be positive")
    gamma = bs_gamma(spot, strike, vol, tau)
    spot = np.asarray(spot, dtype=float)
    out = (3.0 * cost_rate * gamma**2 * spot / (2.0 * risk_aversion)) ** (1.0 / 3.0)
    return out if out.ndim else float(out)


def ww_strategy(
    paths: MarketPaths,
    strike: float,
    vmode: VolMode,
    cost_rate: float,
    risk_aversion: float = 1.0,
) -> HedgeSchedule:
    """No-trade band strategy: hold inside the band, jump to the nearest edge.

    The band is centred on the Black-Scholes delta with the asymptotic
    half-width; on the standard grid every decision time has tau >= dt, where
    the formula is valid. Should a custom grid place a decision inside the
    final step (tau < dt), the last valid band is reused.
    """
    n = paths.n_paths
    n_steps = paths.n_steps
    dt = paths.grid.dt
    taus = paths.grid.taus()
    vol = _vol_surface(paths, vmode)
    spot = paths.spot

    delta = np.empty((n, n_steps))
    position = np.zeros(n)
    center = np.zeros(n)
    width = np.zeros(n)
    for t in range(n_steps):
        tau = taus[t]
        if tau >= dt - 1e-15 or t == 0:
            center = bs_delta(spot[:, t], strike, vol[:, t], tau)
            width = ww_band_halfwidth(
                spot[:, t], strike, vol[:, t], max(tau, dt), cost_rate, risk_aversion
            )
        position = np.clip(position, center - width, center + width)
        delta[:, t] = position
    return HedgeSchedule(delta, "whalley_wilmott")
