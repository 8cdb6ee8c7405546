"""End-to-end statistics over one replayed event log, section by section.

Each section carries a ``status`` of ``ok``, ``insufficient_data`` or
``failed``; one failing statistic never aborts the others.
"""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from lobfluid import stats
from lobfluid.events import OrderEvent, Side
from lobfluid.particles import (A_II, A_OI, InsufficientData, LayerConfig, fate_shares,
                                rolling_ratio, track)

logger = logging.getLogger(__name__)

OK = "ok"
INSUFFICIENT = "insufficient_data"
FAILED = "failed"
DEFAULT_GAMMA_C = 18


@dataclass
class AnalysisParams:
    dts: Sequence[int] = (4, 10, 100)
    gamma_c: Union[str, int] = "auto"
    depth_range: tuple[int, int] = (-10, 100)
    max_lag: int = 100
    timeshift_dt: int = 1
    spectrum_dt: int = 1
    spectrum_window: int = 256
    spectrum_windows: int = 200
    rolling_window: int = 1000
    lifetime_cutoff: float = 10
    cancels_annihilate: bool = False
    log_scale_fit: bool = False
    workers: int = 1

    def as_dict(self) -> dict:
        return {
            "dts": list(self.dts),
            "gamma_c": self.gamma_c,
            "depth_range": list(self.depth_range),
            "max_lag": self.max_lag,
            "timeshift_dt": self.timeshift_dt,
            "spectrum_dt": self.spectrum_dt,
            "spectrum_window": self.spectrum_window,
            "spectrum_windows": self.spectrum_windows,
            "rolling_window": self.rolling_window,
            "lifetime_cutoff": self.lifetime_cutoff,
            "cancels_annihilate": self.cancels_annihilate,
            "log_scale_fit": self.log_scale_fit,
        }


@dataclass
class Section:
    status: str = OK
    message: Optional[str] = None
    values: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {"status": self.status}
        if self.message:
            out["message"] = self.message
        out["values"] = self.values
        out["series"] = self.series
        return out


def _run(fn: Callable[[Section], None]) -> Section:
    sec = Section()
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            fn(sec)
        notes = list(dict.fromkeys(str(w.message) for w in caught))
        if notes:
            sec.message = "; ".join(notes if sec.message is None else [sec.message, *notes])
    except InsufficientData as exc:
        sec.status, sec.message = INSUFFICIENT, str(exc)
    except Exception as exc:  # partial-report policy
        logger.debug("section failed", exc_info=True)
        sec.status, sec.message = FAILED, f"{type(exc).__name__}: {exc}"
    return sec


def _need(series, n: int, what: str):
    if len(series) < n:
        raise InsufficientData(f"{what}: {len(series)} ticks, need {n}")


def analyze(events: Sequence[OrderEvent], params: AnalysisParams = AnalysisParams()) -> dict:
    """Replay ``events`` and compute every section; returns a plain dict (arrays as lists)."""
    events = list(events)
    provisional = DEFAULT_GAMMA_C if params.gamma_c == "auto" else int(params.gamma_c)
    tracker, book = track(events, LayerConfig.symmetric(provisional), depth_range=params.depth_range,
                          cancels_annihilate=params.cancels_annihilate)
    profiled = tracker.series()
    sections: dict[str, Section] = {}
    dts = sorted(set(int(d) for d in params.dts))
    pool = ThreadPoolExecutor(max_workers=max(1, params.workers))

    def depth_sec(dt):
        def body(sec: Section):
            _need(profiled, dt + 2, f"depth correlation dt={dt}")
            dc = stats.depth_correlation(profiled, dt)
            sec.values["dt"] = dt
            sec.series["depth_correlation"] = {"depth": dc.bins, "buy": dc.buy, "sell": dc.sell}
            sec.values["_curve"] = dc
        return _run(body)

    depth = dict(zip(dts, pool.map(depth_sec, dts)))
    for dt, sec in depth.items():
        sections[f"depth_correlation_dt{dt}"] = sec

    # layer threshold
    gsec = Section()
    if params.gamma_c == "auto":
        gsec.values["mode"] = "auto"
        src = depth[max(dts)]
        try:
            if src.status != OK:
                raise InsufficientData(src.message or "no depth correlation")
            curve = src.values["_curve"]
            gm = stats.estimate_gamma_c(curve.bins, curve.buy)
            gp = stats.estimate_gamma_c(curve.bins, -curve.sell)
            layers = LayerConfig(max(1, gm), max(1, gp))
            gsec.values["estimated_from_dt"] = max(dts)
        except Exception as exc:
            gsec.status = INSUFFICIENT if isinstance(exc, InsufficientData) else FAILED
            gsec.message = f"{exc}; using gamma_c = {DEFAULT_GAMMA_C}"
            layers = LayerConfig.symmetric(DEFAULT_GAMMA_C)
    else:
        gsec.values["mode"] = "fixed"
        layers = LayerConfig.symmetric(int(params.gamma_c))
    gsec.values["gamma_c_minus"] = layers.gamma_c_minus
    gsec.values["gamma_c_plus"] = layers.gamma_c_plus
    sections["gamma_c"] = gsec
    for sec in depth.values():
        sec.values.pop("_curve", None)

    if layers != LayerConfig.symmetric(provisional):
        tracker, book = track(events, layers, depth_range=params.depth_range, record_profile=False,
                              cancels_annihilate=params.cancels_annihilate)
    series = tracker.series()
    particles = tracker.particles

    def eq1_sec(dt):
        def body(sec: Section):
            _need(series, dt + 3, f"regression dt={dt}")
            v = stats.velocity(series, dt)
            fs = stats.force_series(series, dt)
            fit = stats.eq1_regression(fs.F_i, v, dt)
            sec.values.update(dt=dt, L=fit.L, L_stderr=fit.stderr, corr_F_i=fit.corr, n=fit.n,
                              corr_order_flow=stats.pearson(v, fs.order_flow),
                              corr_F_o_minus=stats.pearson(v, fs.F_o_minus),
                              corr_F_o_plus=stats.pearson(v, fs.F_o_plus))
            v_I, v_F, eta = stats.decompose_velocity(series, fit.L, dt)
            ok = np.isfinite(eta)
            sec.values["residual_mean"] = float(np.mean(eta[ok])) if ok.any() else math.nan
            sec.values["residual_std"] = float(np.std(eta[ok])) if ok.any() else math.nan
        return _run(body)

    eq1_dts = sorted(set(dts) | {params.spectrum_dt})
    eq1 = dict(zip(eq1_dts, pool.map(eq1_sec, eq1_dts)))
    pool.shutdown()
    curve = {"dt": [], "L": [], "corr_F_i": [], "corr_order_flow": []}
    for dt in dts:
        sections[f"eq1_dt{dt}"] = eq1[dt]
        if eq1[dt].status == OK:
            for k in curve:
                curve[k].append(eq1[dt].values[k])
    sections["eq1_vs_dt"] = Section(OK if curve["dt"] else INSUFFICIENT, series={"eq1_vs_dt": curve})

    def timeshift(sec: Section):
        _need(series, params.max_lag + params.timeshift_dt + 2, "time-shifted correlation")
        dt = params.timeshift_dt
        v = stats.velocity(series, dt)
        lag = np.arange(params.max_lag + 1)
        cols = {"lag": lag}
        for name, y in (("f_i", series.f_i), ("F_o_minus", series.outer_change(Side.BUY)),
                        ("F_o_plus", series.outer_change(Side.SELL)), ("g_ii", series.g_ii),
                        ("g_oi", series.g_oi)):
            cols[name] = stats.timeshift_correlation(v, y[:len(v)], params.max_lag)
        sec.values["dt"] = dt
        sec.series["timeshift"] = cols
    sections["timeshift"] = _run(timeshift)

    def shares(sec: Section):
        fs = fate_shares(particles)
        sec.values.update(n=fs.n, c_i=fs.c_i, a_i=fs.a_i, a_ii=fs.a_ii, a_oi=fs.a_oi,
                          a_o=fs.a_o, canceled=fs.canceled)
    sections["fate_shares"] = _run(shares)

    def lifetimes(sec: Section):
        dist = stats.lifetime_distributions(particles, params.lifetime_cutoff)
        if not dist:
            raise InsufficientData("no inner-layer annihilations")
        notes = []
        for cls in (A_II, A_OI):
            st = dist.get(cls)
            if st is None:
                notes.append(f"no {cls} particles")
                continue
            sec.values[cls] = {"n": st.n, "mean": st.mean, "exp_mean": st.exp_mean,
                               "tail_exponent": st.tail_exponent}
            sec.series[f"ccdf_{cls}"] = {"tau": st.tau, "ccdf": st.ccdf}
            notes += st.warnings
        fitted = (A_II in dist and dist[A_II].exp_mean is not None) or \
            (A_OI in dist and dist[A_OI].tail_exponent is not None)
        if not fitted:
            raise InsufficientData("; ".join(notes) or "lifetime fits unavailable")
        if notes:
            sec.message = "; ".join(notes)
    sections["lifetimes"] = _run(lifetimes)

    def spectra(sec: Section):
        dt = params.spectrum_dt
        base = eq1[dt]
        if base.status != OK:
            raise InsufficientData(f"no L estimate at dt={dt}: {base.message}")
        L = base.values["L"]
        v = stats.velocity(series, dt)
        v_I, _, _ = stats.decompose_velocity(series, L, dt)
        sv = stats.power_spectrum(v * dt, params.spectrum_window, params.spectrum_windows)
        si = stats.power_spectrum(np.where(np.isfinite(v), v_I * dt, np.nan),
                                  params.spectrum_window, params.spectrum_windows)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = si.power / sv.power
        sec.values.update(dt=dt, L=L, n_windows=sv.n_windows)
        sec.series["spectra"] = {"omega": sv.omega, "power_v": sv.power, "power_v_I": si.power,
                                 "ratio": ratio}
        fit = stats.fit_lorentzian_ratio(sv.omega, ratio, params.log_scale_fit)
        sec.values["langevin"] = {"lorentz_a": fit.lorentz_a, "lorentz_b": fit.lorentz_b,
                                  "phi0": fit.phi0, "delta": fit.delta, "mu": fit.mu,
                                  "mu_from_ab": fit.mu_from_ab, "rms_residual": fit.rms_residual}
    sections["spectra"] = _run(spectra)

    def knudsen(sec: Section):
        kn = stats.knudsen_from_series(series)
        sec.values.update(mean_free_path=kn.mean_free_path, colloid_diameter=kn.colloid_diameter,
                          kn=kn.kn, n_collisions=kn.n_collisions)
    sections["knudsen"] = _run(knudsen)

    def rolling(sec: Section):
        t, r = rolling_ratio(series, params.rolling_window)
        if len(t) == 0:
            raise InsufficientData(f"no window of {params.rolling_window} ticks with a_i > 0")
        a_i = series.counts["a_i"].sum()
        sec.values.update(window=params.rolling_window, mean=float(np.mean(r)),
                          global_ratio=float(series.counts["a_oi"].sum() / a_i))
        sec.series["rolling_ratio"] = {"tick": t, "ratio": r, "mid": series.mid[t]}
    sections["rolling_ratio"] = _run(rolling)

    summary = {
        "n_events": len(events),
        "n_ticks": len(series),
        "n_deals": int(book.tick),
        "n_particles": len(particles),
        "one_sided_ticks": int((~series.valid).sum()),
        "replay_warnings": len(book.warnings),
        "final_resting_units": book.resting_units(),
    }
    return {"summary": summary, "sections": {k: v.as_dict() for k, v in sections.items()}}


def any_failed(report: dict) -> bool:
    return any(sec["status"] == FAILED for sec in report["sections"].values())
