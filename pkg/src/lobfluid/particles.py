"""Unit orders as fluid particles: depth, layer membership, fate and per-tick counts.

A particle is inner-layer while its depth is at most the side's threshold
``gamma_c`` (negative depths, i.e. inside the spread, are inner) and
outer-layer otherwise.  Depth is measured from the particle's own-side best.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Iterable, Optional, Sequence

import numpy as np

from lobfluid.book import BookDelta, BookState, DeltaKind, ReplayObserver, replay
from lobfluid.events import OrderEvent, Side


class UndefinedDepth(ValueError):
    """Own-side best quote does not exist, so depth has no reference."""


class InsufficientData(ValueError):
    """Not enough observations for the requested statistic."""


class Fate(Enum):
    ANNIHILATED_DEAL = "ANNIHILATED_DEAL"
    CANCELED = "CANCELED"
    ALIVE_AT_END = "ALIVE_AT_END"


A_II = "a_ii"
A_OI = "a_oi"
A_O = "a_o"  # dealt while in the outer layer
CANCELED = "canceled"
ALIVE = "alive"
CLASSES = (A_II, A_OI, A_O, CANCELED, ALIVE)


@dataclass(frozen=True)
class LayerConfig:
    gamma_c_minus: int = 18
    gamma_c_plus: int = 18

    def __post_init__(self):
        if self.gamma_c_minus < 1 or self.gamma_c_plus < 1:
            raise ValueError("layer thresholds must be >= 1 pip")

    @classmethod
    def symmetric(cls, gamma_c: int) -> "LayerConfig":
        return cls(gamma_c, gamma_c)

    def threshold(self, side: Side) -> int:
        return self.gamma_c_minus if side is Side.BUY else self.gamma_c_plus


@dataclass(slots=True)
class ParticleRecord:
    id: str
    side: Side
    price: int
    birth_tick: int
    birth_event: int
    birth_depth: int
    visited_outer: bool
    born_inner: bool = True
    taker: bool = False
    death_tick: Optional[int] = None
    death_event: Optional[int] = None
    death_depth: Optional[int] = None
    fate: Fate = Fate.ALIVE_AT_END
    cls: str = ALIVE

    @property
    def lifetime(self) -> Optional[int]:
        if self.death_tick is None:
            return None
        return self.death_tick - self.birth_tick


def depth_of(price: int, side: Side, book: BookState) -> int:
    """Distance in pips from the own-side best; negative inside the spread.

    Raises :class:`UndefinedDepth` if that side of the book is empty.
    """
    best = book.best(side)
    if best is None:
        raise UndefinedDepth(f"no {side.value} quote to measure depth from")
    return _depth(price, side, best)


def _depth(price: int, side: Side, best: int) -> int:
    return best - price if side is Side.BUY else price - best


COUNT_FIELDS = ("c_i", "c_o", "a_i", "a_ii", "a_oi", "a_o", "x_i", "x_o")


@dataclass
class TickSeries:
    """Per-tick aggregates; tick ``t`` holds deal ``t`` and everything up to deal ``t+1``.

    Per-side arrays have shape ``(2, n_ticks)`` indexed by :attr:`Side.index`.
    ``mid2``/``spread``/``n_inner``/``n_outer``/``profile`` are sampled at the
    end of each tick.  ``x_i``/``x_o`` count cancels by layer.
    """

    mid2: np.ndarray
    spread: np.ndarray
    valid: np.ndarray
    counts: dict[str, np.ndarray]
    n_inner: np.ndarray
    n_outer: np.ndarray
    depth_bins: np.ndarray
    profile: Optional[np.ndarray] = None
    collisions: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))

    def __len__(self) -> int:
        return len(self.mid2)

    def __getattr__(self, name):
        counts = self.__dict__.get("counts")
        if counts is not None and name in counts:
            return counts[name]
        raise AttributeError(name)

    @property
    def mid(self) -> np.ndarray:
        """Mid-price in pips, NaN where the book was one-sided."""
        out = self.mid2.astype(float) / 2.0
        out[~self.valid] = np.nan
        return out

    def _signed(self, name: str) -> np.ndarray:
        arr = self.counts[name]
        return arr[1] - arr[0]

    @property
    def f_i(self) -> np.ndarray:
        c, a = self.counts["c_i"], self.counts["a_i"]
        return (c[0] - c[1] - a[0] + a[1]).astype(np.int64)

    @property
    def g_ii(self) -> np.ndarray:
        return self._signed("a_ii").astype(np.int64)

    @property
    def g_oi(self) -> np.ndarray:
        return self._signed("a_oi").astype(np.int64)

    @property
    def driving_flow(self) -> np.ndarray:
        """c_i^- - c_i^+ - a_ii^- + a_ii^+ per tick."""
        c, a = self.counts["c_i"], self.counts["a_ii"]
        return (c[0] - c[1] - a[0] + a[1]).astype(np.int64)

    @property
    def order_flow(self) -> np.ndarray:
        """Buy units submitted minus sell units submitted, per tick."""
        c = self.counts["c_i"] + self.counts["c_o"]
        return (c[0] - c[1]).astype(np.int64)

    def outer_change(self, side: Side) -> np.ndarray:
        n = self.n_outer[side.index]
        return np.diff(n, prepend=0).astype(np.int64)

    def depth_change(self, side: Side) -> np.ndarray:
        """Per-tick change of the depth profile, each profile in its own tick's coordinates."""
        if self.profile is None:
            raise InsufficientData("depth profile was not recorded")
        prof = self.profile[side.index]
        return np.diff(prof, axis=0, prepend=np.zeros((1, prof.shape[1]), prof.dtype))


class ParticleTracker(ReplayObserver):
    """Replay observer producing :class:`ParticleRecord` s and a :class:`TickSeries`.

    ``cancels_annihilate`` makes inner-layer cancels count as annihilations
    (classified a_ii / a_oi) instead of a separate ``canceled`` bucket.
    """

    def __init__(self, layers: LayerConfig = LayerConfig(), depth_range: tuple[int, int] = (-10, 100),
                 record_profile: bool = True, cancels_annihilate: bool = False):
        self.layers = layers
        self.gamma = (layers.gamma_c_minus, layers.gamma_c_plus)
        self.depth_lo, self.depth_hi = depth_range
        if self.depth_hi < self.depth_lo:
            raise ValueError("empty depth range")
        self.record_profile = record_profile
        self.cancels_annihilate = cancels_annihilate
        self.live: dict[str, ParticleRecord] = {}
        self.dead: list[ParticleRecord] = []
        self.alive: list[ParticleRecord] = []
        self._ref: list[Optional[int]] = [None, None]
        self._start_best: list[Optional[int]] = [None, None]
        self._pre_deal: tuple[Optional[int], Optional[int]] = (None, None)
        self._cur = {name: [0, 0] for name in COUNT_FIELDS}
        self._cols = {name: ([], []) for name in COUNT_FIELDS}
        self._mid2: list[int] = []
        self._spread: list[int] = []
        self._valid: list[bool] = []
        self._n_inner = ([], [])
        self._n_outer = ([], [])
        self._profile: tuple[list, list] = ([], [])
        self._collisions: list[tuple[int, int, int]] = []
        self._series: Optional[TickSeries] = None

    # -- observer hooks ----------------------------------------------------------
    def on_event_start(self, index, event, book):
        self._start_best[0] = book.best_bid
        self._start_best[1] = book.best_ask

    def on_tick_end(self, tick, book):
        self._pre_deal = (book.mid2, book.spread)
        for name, pair in self._cur.items():
            col = self._cols[name]
            col[0].append(pair[0])
            col[1].append(pair[1])
            pair[0] = pair[1] = 0
        valid = book.two_sided
        self._valid.append(valid)
        self._mid2.append(book.mid2 if valid else 0)
        self._spread.append(book.spread if valid else 0)
        nbins = self.depth_hi - self.depth_lo + 1
        for side in (Side.BUY, Side.SELL):
            s = side.index
            best = book.best(side)
            inner = 0
            prof = np.zeros(nbins, dtype=np.int32) if self.record_profile else None
            if best is not None:
                gc = self.gamma[s]
                for price, level in book.levels(side).items():
                    d = best - price if s == 0 else price - best
                    if d <= gc:
                        inner += len(level)
                    if prof is not None and self.depth_lo <= d <= self.depth_hi:
                        prof[d - self.depth_lo] = len(level)
            self._n_inner[s].append(inner)
            self._n_outer[s].append(book.units[s] - inner)
            if prof is not None:
                self._profile[s].append(prof)

    def on_delta(self, delta: BookDelta, book: BookState):
        if delta.kind is DeltaKind.ADD:
            self._on_add(delta, book)
        elif delta.kind is DeltaKind.DEAL:
            self._on_deal(delta, book)
        else:
            self._on_cancel(delta, book)
        self._remark(delta.side, book)

    def on_finish(self, book):
        for rec in self.live.values():
            self.alive.append(rec)
        self.live.clear()

    # -- particle bookkeeping ----------------------------------------------------
    def _on_add(self, delta: BookDelta, book: BookState):
        s = delta.side.index
        before = delta.own_best_before
        depth = 0 if before is None else _depth(delta.price, delta.side, before)
        outer = depth > self.gamma[s]
        self.live[delta.particle_id] = ParticleRecord(
            delta.particle_id, delta.side, delta.price, delta.tick, delta.event_index, depth,
            visited_outer=outer, born_inner=not outer)
        self._cur["c_o" if outer else "c_i"][s] += 1

    def _on_deal(self, delta: BookDelta, book: BookState):
        deal = delta.deal
        maker = self.live.pop(delta.particle_id, None)
        if maker is None:
            raise RuntimeError(f"deal for unknown particle {delta.particle_id!r}")
        s = delta.side.index
        start = self._start_best[s]
        depth = 0 if start is None else _depth(maker.price, maker.side, start)
        self._finalize(maker, delta, depth, Fate.ANNIHILATED_DEAL)
        if maker.cls == A_OI:
            mid2, spread = self._pre_deal
            if mid2 is not None:
                self._collisions.append((deal.tick, mid2, spread))

        tside = deal.aggressor_side
        t = tside.index
        own = book.best(tside)
        tdepth = 0 if own is None else _depth(delta.taker_price, tside, own)
        outer = tdepth > self.gamma[t]
        taker = ParticleRecord(deal.taker_particle_id, tside, delta.taker_price, deal.tick,
                               delta.event_index, tdepth, visited_outer=outer, born_inner=not outer,
                               taker=True)
        self._cur["c_o" if outer else "c_i"][t] += 1
        self._finalize(taker, delta, tdepth, Fate.ANNIHILATED_DEAL)

    def _on_cancel(self, delta: BookDelta, book: BookState):
        rec = self.live.pop(delta.particle_id, None)
        if rec is None:
            raise RuntimeError(f"cancel for unknown particle {delta.particle_id!r}")
        before = delta.own_best_before
        depth = 0 if before is None else _depth(rec.price, rec.side, before)
        self._finalize(rec, delta, depth, Fate.CANCELED)

    def _finalize(self, rec: ParticleRecord, delta: BookDelta, depth: int, fate: Fate):
        s = rec.side.index
        rec.death_tick = delta.tick
        rec.death_event = delta.event_index
        rec.death_depth = depth
        rec.fate = fate
        inner = depth <= self.gamma[s]
        if fate is Fate.CANCELED:
            self._cur["x_i" if inner else "x_o"][s] += 1
            annihilates = inner and self.cancels_annihilate
        else:
            annihilates = True
        if not annihilates:
            rec.cls = CANCELED
        elif not inner:
            rec.cls = A_O
            self._cur["a_o"][s] += 1
        else:
            rec.cls = A_OI if rec.visited_outer else A_II
            self._cur["a_i"][s] += 1
            self._cur[rec.cls][s] += 1
        if not inner:
            rec.visited_outer = True
        self.dead.append(rec)

    def _mark(self, side: Side, price: int, book: BookState):
        live = self.live
        for unit in book.levels(side)[price]:
            live[unit.particle_id].visited_outer = True

    def _remark(self, side: Side, book: BookState):
        """Set visited_outer on every unit the latest best move pushed past gamma_c."""
        s = side.index
        new = book.best(side)
        old = self._ref[s]
        if new == old:
            return
        self._ref[s] = new
        if new is None:
            return
        gc = self.gamma[s]
        levels = book.levels(side)
        if side is Side.BUY:
            hi = new - gc  # outer iff price < hi
            lo = -np.inf if old is None else old - gc
            if hi <= lo:
                return
            if old is not None and hi - lo <= len(levels):
                prices = [p for p in range(int(lo), hi) if p in levels]
            else:
                prices = [p for p in levels if lo <= p < hi]
        else:
            lo = new + gc  # outer iff price > lo
            hi = np.inf if old is None else old + gc
            if hi <= lo:
                return
            if old is not None and hi - lo <= len(levels):
                prices = [p for p in range(lo + 1, int(hi) + 1) if p in levels]
            else:
                prices = [p for p in levels if lo < p <= hi]
        for p in prices:
            self._mark(side, p, book)

    # -- results -------------------------------------------------------------------
    @property
    def particles(self) -> list[ParticleRecord]:
        return self.dead + self.alive

    def series(self) -> TickSeries:
        if self._series is None:
            counts = {name: np.array(cols, dtype=np.int64).reshape(2, -1)
                      for name, cols in self._cols.items()}
            profile = None
            if self.record_profile and self._profile[0]:
                profile = np.stack([np.vstack(self._profile[0]), np.vstack(self._profile[1])])
            self._series = TickSeries(
                mid2=np.array(self._mid2, dtype=np.int64),
                spread=np.array(self._spread, dtype=np.int64),
                valid=np.array(self._valid, dtype=bool),
                counts=counts,
                n_inner=np.array(self._n_inner, dtype=np.int64).reshape(2, -1),
                n_outer=np.array(self._n_outer, dtype=np.int64).reshape(2, -1),
                depth_bins=np.arange(self.depth_lo, self.depth_hi + 1),
                profile=profile,
                collisions=np.array(self._collisions, dtype=np.int64).reshape(-1, 3),
            )
        return self._series


def track(events: Iterable[OrderEvent], layers: LayerConfig = LayerConfig(),
          observers: Sequence[ReplayObserver] = (), **kwargs) -> tuple[ParticleTracker, BookState]:
    """Replay ``events`` with a fresh tracker attached."""
    tracker = ParticleTracker(layers, **kwargs)
    book = replay(events, [tracker, *observers])
    return tracker, book


@dataclass(frozen=True)
class FateShares:
    n: int
    c_i: float
    a_i: float
    a_ii: float
    a_oi: float
    a_o: float
    canceled: float


def fate_shares(particles: Iterable[ParticleRecord]) -> FateShares:
    """Fractions of finished particles born inner, and dying as a_i / a_ii / a_oi.

    Particles still alive at the end of the replay are excluded because
    their fate is unknown.
    """
    n = 0
    counts = dict.fromkeys(("c_i", A_II, A_OI, A_O, CANCELED), 0)
    for rec in particles:
        if rec.fate is Fate.ALIVE_AT_END:
            continue
        n += 1
        counts[rec.cls] += 1
        if rec.born_inner:
            counts["c_i"] += 1
    if n == 0:
        raise InsufficientData("no finished particles")
    a_ii, a_oi = counts[A_II] / n, counts[A_OI] / n
    return FateShares(n, counts["c_i"] / n, a_ii + a_oi, a_ii, a_oi, counts[A_O] / n,
                      counts[CANCELED] / n)


def rolling_ratio(series: TickSeries, window: int = 1000) -> tuple[np.ndarray, np.ndarray]:
    """a_oi / a_i over ``[t - window, t]`` (both sides summed) for each tick ``t >= window``.

    Ticks whose window holds no inner annihilation are dropped.  Returns
    ``(ticks, ratio)``.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    a_i = series.counts["a_i"].sum(axis=0)
    a_oi = series.counts["a_oi"].sum(axis=0)
    n = len(a_i)
    if n <= window:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    cs_i = np.concatenate([[0], np.cumsum(a_i)])
    cs_oi = np.concatenate([[0], np.cumsum(a_oi)])
    t = np.arange(window, n)
    den = cs_i[t + 1] - cs_i[t - window]
    num = cs_oi[t + 1] - cs_oi[t - window]
    keep = den > 0
    return t[keep], num[keep] / den[keep]


LEDGER_COLUMNS = ("id", "side", "price", "birth_tick", "death_tick", "birth_event", "death_event",
                  "birth_depth", "death_depth", "visited_outer", "taker", "fate", "class")


def _opt(v) -> str:
    return "" if v is None else str(v)


def write_particle_ledger(particles: Iterable[ParticleRecord], stream: Optional[IO[str]] = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LEDGER_COLUMNS)
    for r in particles:
        w.writerow([r.id, r.side.value, r.price, r.birth_tick, _opt(r.death_tick), r.birth_event,
                    _opt(r.death_event), r.birth_depth, _opt(r.death_depth), int(r.visited_outer),
                    int(r.taker), r.fate.value, r.cls])
    text = buf.getvalue()
    if stream is not None:
        stream.write(text)
    return text
