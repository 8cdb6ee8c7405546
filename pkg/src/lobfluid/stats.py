"""Colloid velocity, layer-flow correlations, lifetime laws, spectra and Langevin fit.

Time is tick-time throughout.  Windowed sums are inclusive: a window of
length ``dt`` starting at ``t`` covers ticks ``t .. t+dt`` (``dt + 1`` terms),
while the velocity over the same window is ``(x(t+dt) - x(t)) / dt``.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import curve_fit

from lobfluid.events import Side
from lobfluid.particles import (A_II, A_OI, Fate, InsufficientData, ParticleRecord,
                                TickSeries)

logger = logging.getLogger(__name__)


class FitError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# series construction
# ---------------------------------------------------------------------------

def velocity(series: TickSeries, dt: int) -> np.ndarray:
    """v(t) = (x(t+dt) - x(t)) / dt in pips per tick; NaN where the book was one-sided."""
    if dt < 1:
        raise ValueError("dt must be >= 1")
    x = series.mid
    if len(x) <= dt:
        return np.zeros(0)
    return (x[dt:] - x[:-dt]) / dt


def window_sum(a: np.ndarray, dt: int) -> np.ndarray:
    """Inclusive forward sums ``sum_{s=0..dt} a[t+s]`` along axis 0; length ``len(a) - dt``."""
    a = np.asarray(a)
    n = a.shape[0]
    if n <= dt:
        return np.zeros((0,) + a.shape[1:], dtype=a.dtype)
    cs = np.concatenate([np.zeros((1,) + a.shape[1:], dtype=a.dtype), np.cumsum(a, axis=0)])
    return cs[dt + 1:] - cs[:n - dt]


@dataclass(frozen=True)
class ForceSeries:
    dt: int
    F_i: np.ndarray
    F_o_minus: np.ndarray
    F_o_plus: np.ndarray
    order_flow: np.ndarray


def force_series(series: TickSeries, dt: int) -> ForceSeries:
    return ForceSeries(
        dt=dt,
        F_i=window_sum(series.f_i, dt),
        F_o_minus=window_sum(series.outer_change(Side.BUY), dt),
        F_o_plus=window_sum(series.outer_change(Side.SELL), dt),
        order_flow=window_sum(series.order_flow, dt),
    )


# ---------------------------------------------------------------------------
# correlations
# ---------------------------------------------------------------------------

def pearson(x: np.ndarray, y: np.ndarray) -> float:
    """Pearson correlation over pairs where both are finite; NaN if a variance is zero."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(x) & np.isfinite(y)
    x, y = x[ok], y[ok]
    if len(x) < 2:
        return math.nan
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    den = math.sqrt(sxx) * math.sqrt(syy)
    if den <= 0.0:
        return math.nan
    r = float(np.dot(dx, dy)) / den
    return min(1.0, max(-1.0, r))


@dataclass(frozen=True)
class DepthCorrelation:
    dt: int
    bins: np.ndarray
    buy: np.ndarray
    sell: np.ndarray

    def side(self, side: Side) -> np.ndarray:
        return self.buy if side is Side.BUY else self.sell


def depth_correlation(series: TickSeries, dt: int,
                      depth_range: Optional[tuple[int, int]] = None) -> DepthCorrelation:
    """Correlation of v(t) with the windowed change of particle number at each depth bin, per side."""
    v = velocity(series, dt)
    bins = series.depth_bins
    sel = np.ones(len(bins), dtype=bool)
    if depth_range is not None:
        sel = (bins >= depth_range[0]) & (bins <= depth_range[1])
    out = []
    for side in (Side.BUY, Side.SELL):
        dn = window_sum(series.depth_change(side)[:, sel], dt)
        out.append(np.array([pearson(v, dn[:, j]) for j in range(dn.shape[1])]))
    return DepthCorrelation(dt, bins[sel], out[0], out[1])


def _smooth3(y: np.ndarray) -> np.ndarray:
    out = np.full(len(y), np.nan)
    for k in range(len(y)):
        win = y[max(0, k - 1):k + 2]
        win = win[np.isfinite(win)]
        if np.isfinite(y[k]) and len(win):
            out[k] = win.mean()
    return out


def estimate_gamma_c(bins: Sequence[int], corr: Sequence[float]) -> int:
    """Layer threshold from a depth-correlation curve.

    The curve is smoothed with a 3-bin moving average; the near-best sign is
    the sign of the shallowest defined bin at depth >= 0.  The threshold is
    the last bin still carrying that sign before a flip, so the inner layer is
    ``depth <= gamma_c``.  With several flips the steepest one wins.
    """
    bins = np.asarray(bins)
    y = _smooth3(np.asarray(corr, dtype=float))
    keep = (bins >= 0) & np.isfinite(y) & (y != 0)
    b, y = bins[keep], y[keep]
    if len(y) < 2:
        raise InsufficientData("correlation curve has fewer than two defined bins")
    near = np.sign(y[0])
    s = np.sign(y)
    flips = np.nonzero((s[:-1] == near) & (s[1:] == -near))[0]
    flips = flips[b[flips + 1] >= 1]
    if len(flips) == 0:
        raise ValueError("no sign change in depth correlation; set gamma_c manually")
    if len(flips) == 1:
        k = flips[0]
    else:
        k = flips[np.argmax(np.abs(y[flips + 1] - y[flips]))]
    return int(b[k])


def timeshift_correlation(x: np.ndarray, y: np.ndarray, max_lag: int) -> np.ndarray:
    """corr(x(t), y(t + lag)) for lag = 0 .. max_lag."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = min(len(x), len(y))
    if max_lag >= n:
        raise ValueError(f"max_lag {max_lag} >= series length {n}")
    x, y = x[:n], y[:n]
    return np.array([pearson(x[:n - lag], y[lag:]) for lag in range(max_lag + 1)])


# ---------------------------------------------------------------------------
# L(dt) regression
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Eq1Fit:
    dt: int
    L: float
    stderr: float
    corr: float
    n: int
    intercept: float = 0.0


def eq1_regression(F_i: np.ndarray, v: np.ndarray, dt: int, intercept: bool = False) -> Eq1Fit:
    """Least squares of v*dt on F_i; the slope is the mean step length L(dt) in pips.

    Zero intercept by default.  ``corr`` is the Pearson correlation of v and F_i.
    """
    x = np.asarray(F_i, dtype=float)
    y = np.asarray(v, dtype=float) * dt
    n0 = min(len(x), len(y))
    x, y = x[:n0], y[:n0]
    ok = np.isfinite(x) & np.isfinite(y)
    x, y = x[ok], y[ok]
    n = len(x)
    if n < 3:
        raise InsufficientData("fewer than 3 aligned samples")
    if intercept:
        xm, ym = x.mean(), y.mean()
        sxx = float(np.dot(x - xm, x - xm))
        if sxx <= 0:
            raise ValueError("F_i has zero variance")
        slope = float(np.dot(x - xm, y - ym)) / sxx
        c = ym - slope * xm
        resid = y - c - slope * x
        se = math.sqrt(float(np.dot(resid, resid)) / (n - 2) / sxx)
    else:
        sxx = float(np.dot(x, x))
        if sxx <= 0:
            raise ValueError("F_i is identically zero")
        slope = float(np.dot(x, y)) / sxx
        c = 0.0
        resid = y - slope * x
        se = math.sqrt(float(np.dot(resid, resid)) / (n - 1) / sxx)
    return Eq1Fit(dt, slope, se, pearson(x, y), n, c)


def decompose_velocity(series: TickSeries, L: float, dt: int):
    """Split v into the drag part v_I (a_oi flow) and driving part v_F (c_i and a_ii flow).

    Returns ``(v_I, v_F, eta)`` with ``eta = v - v_I - v_F``.
    """
    v = velocity(series, dt)
    v_I = L * window_sum(series.g_oi, dt) / dt
    v_F = L * window_sum(series.driving_flow, dt) / dt
    return v_I, v_F, v - v_I - v_F


# ---------------------------------------------------------------------------
# lifetimes
# ---------------------------------------------------------------------------

def ccdf(samples: Iterable[float]) -> tuple[np.ndarray, np.ndarray]:
    """Empirical P(T >= tau) at each distinct sample value; starts at 1."""
    x = np.sort(np.asarray(list(samples) if not isinstance(samples, np.ndarray) else samples,
                           dtype=float))
    if len(x) == 0:
        return np.zeros(0), np.zeros(0)
    values, first = np.unique(x, return_index=True)
    return values, 1.0 - first / len(x)


def powerlaw_tail_exponent(tau: np.ndarray, prob: np.ndarray, lower: float = 10,
                           upper: Optional[float] = None) -> float:
    """Log-log least-squares slope of a CCDF over ``lower <= tau <= upper``."""
    tau = np.asarray(tau, dtype=float)
    prob = np.asarray(prob, dtype=float)
    sel = (tau >= lower) & (prob > 0)
    if upper is not None:
        sel &= tau <= upper
    if sel.sum() < 2:
        raise InsufficientData("fewer than two CCDF points in the tail range")
    slope, _ = np.polyfit(np.log(tau[sel]), np.log(prob[sel]), 1)
    return float(slope)


@dataclass
class LifetimeStats:
    cls: str
    n: int
    tau: np.ndarray
    ccdf: np.ndarray
    mean: float
    exp_mean: Optional[float] = None
    tail_exponent: Optional[float] = None
    warnings: list[str] = field(default_factory=list)


def lifetime_distributions(particles: Iterable[ParticleRecord], tail_cutoff: float = 10,
                           min_count: int = 100) -> dict[str, LifetimeStats]:
    """CCDF of lifetimes for a_ii and a_oi, with an exponential mean for a_ii and a tail slope for a_oi."""
    groups: dict[str, list[int]] = {A_II: [], A_OI: []}
    for rec in particles:
        if rec.fate is not Fate.ALIVE_AT_END and rec.cls in groups:
            groups[rec.cls].append(rec.lifetime)
    out = {}
    for cls, lt in groups.items():
        if not lt:
            logger.warning("no %s particles; lifetime distribution skipped", cls)
            continue
        tau, p = ccdf(lt)
        st = LifetimeStats(cls, len(lt), tau, p, float(np.mean(lt)))
        if len(lt) < min_count:
            st.warnings.append(f"only {len(lt)} {cls} particles; fit skipped")
        elif cls == A_II:
            st.exp_mean = float(np.mean(lt))
        else:
            try:
                st.tail_exponent = powerlaw_tail_exponent(tau, p, tail_cutoff)
            except InsufficientData as exc:
                st.warnings.append(str(exc))
        out[cls] = st
    return out


# ---------------------------------------------------------------------------
# spectra and kernel
# ---------------------------------------------------------------------------

def periodogram(x: np.ndarray) -> np.ndarray:
    """|DFT(x - mean)|^2 / N over all N bins; sums to N * var(x)."""
    x = np.asarray(x, dtype=float)
    X = np.fft.fft(x - x.mean())
    return (X.real ** 2 + X.imag ** 2) / len(x)


@dataclass(frozen=True)
class Spectrum:
    omega: np.ndarray
    power: np.ndarray
    n_windows: int


def power_spectrum(series: np.ndarray, window_len: int = 256, n_windows: int = 200) -> Spectrum:
    """Periodogram averaged over up to ``n_windows`` non-overlapping windows.

    Windows containing non-finite values are skipped.  Angular frequencies
    ``omega = 2 pi k / window_len`` (radians per tick) for k = 1 .. window_len/2.
    """
    x = np.asarray(series, dtype=float)
    acc = np.zeros(window_len)
    used = 0
    for start in range(0, len(x) - window_len + 1, window_len):
        if used >= n_windows:
            break
        w = x[start:start + window_len]
        if not np.all(np.isfinite(w)):
            continue
        acc += periodogram(w)
        used += 1
    if used == 0:
        raise InsufficientData(f"no complete window of {window_len} ticks")
    if used < n_windows:
        warnings.warn(f"power spectrum averaged over {used} < {n_windows} windows", RuntimeWarning)
    k = np.arange(1, window_len // 2 + 1)
    return Spectrum(2 * np.pi * k / window_len, acc[k] / used, used)


def lorentzian(omega, a, b):
    return a / (b + omega ** 2)


def kernel_from_lorentzian(a: float, b: float) -> tuple[float, float]:
    """(phi0, delta) of phi(t) = phi0 exp(-delta t), whose |Phi(omega)|^2 = phi0^2 / (delta^2 + omega^2)."""
    return math.sqrt(a), math.sqrt(b)


def drag_coefficient(phi0: float, delta: float) -> float:
    """mu = delta / phi0 - 1."""
    return delta / phi0 - 1.0


@dataclass(frozen=True)
class LangevinFit:
    phi0: float
    delta: float
    mu: float
    lorentz_a: float
    lorentz_b: float
    rms_residual: float

    @property
    def mu_from_ab(self) -> float:
        return math.sqrt(self.lorentz_b / self.lorentz_a) - 1.0


def fit_lorentzian_ratio(omega: np.ndarray, ratio: np.ndarray, log_scale: bool = False) -> LangevinFit:
    """Fit a / (b + omega^2) to a ratio spectrum and map it to the exponential kernel and mu."""
    w = np.asarray(omega, dtype=float)
    r = np.asarray(ratio, dtype=float)
    if len(w) < 3 or not np.all(np.isfinite(r)) or (log_scale and np.any(r <= 0)):
        raise FitError("ratio spectrum must be finite (and positive for log fits) on >= 3 bins")
    # initial guess from the low-frequency level and the half-power point
    r0 = float(r[0])
    half = np.nonzero(r <= r0 / 2)[0]
    b0 = float(w[half[0]] ** 2) if len(half) else float(w[-1] ** 2)
    b0 = max(b0 - w[0] ** 2, 1e-6)
    a0 = max(r0 * (b0 + w[0] ** 2), 1e-12)
    try:
        if log_scale:
            popt, _ = curve_fit(lambda om, a, b: np.log(lorentzian(om, a, b)), w, np.log(r),
                                p0=(a0, b0), bounds=(0, np.inf), maxfev=20000)
        else:
            popt, _ = curve_fit(lorentzian, w, r, p0=(a0, b0), bounds=(0, np.inf), maxfev=20000,
                                xtol=1e-14, ftol=1e-14)
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"Lorentzian fit did not converge: {exc}") from exc
    a, b = float(popt[0]), float(popt[1])
    resid = r - lorentzian(w, a, b)
    rms = float(np.sqrt(np.mean(resid ** 2)))
    if a <= 0 or b <= 0:
        raise FitError(f"degenerate Lorentzian parameters a={a}, b={b}, rms residual {rms:.3g}")
    phi0, delta = kernel_from_lorentzian(a, b)
    return LangevinFit(phi0, delta, drag_coefficient(phi0, delta), a, b, rms)


# ---------------------------------------------------------------------------
# Knudsen number
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KnudsenEstimate:
    mean_free_path: float
    colloid_diameter: float
    kn: float
    n_collisions: int


def knudsen_number(mids: Sequence[float], spreads: Sequence[float]) -> KnudsenEstimate:
    """Mean |mid jump| between consecutive a_oi annihilations over the mean spread at those events."""
    mids = np.asarray(mids, dtype=float)
    spreads = np.asarray(spreads, dtype=float)
    if len(mids) < 2:
        raise InsufficientData("need at least two a_oi annihilations")
    path = math.fsum(np.abs(np.diff(mids))) / (len(mids) - 1)
    diameter = math.fsum(spreads) / len(spreads)
    if diameter <= 0:
        raise ValueError("mean spread must be positive")
    return KnudsenEstimate(path, diameter, path / diameter, len(mids))


def knudsen_from_series(series: TickSeries) -> KnudsenEstimate:
    col = series.collisions
    return knudsen_number(col[:, 1] / 2.0, col[:, 2])
