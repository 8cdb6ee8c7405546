"""Synthetic order flow with a known generating mechanism.

A zero-intelligence base model (random limit placement with geometric
offsets, market orders, a constant per-order cancel hazard) keeps a dense
two-sided book.  ``trend_coupling`` tilts shallow limit orders and market
orders toward the side of the recent mid-price move.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.signal import lfilter

from lobfluid.book import BookState
from lobfluid.events import Action, OrderEvent, Side


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    n_events: int = 10_000
    limit_rate: float = 0.5
    market_rate: float = 0.12
    # per-order, per-event cancel probability weight
    cancel_hazard: float = 0.002
    depth_mean: float = 8.0
    trend_coupling: float = 0.0
    trend_window: int = 20
    shallow_depth: int = 5
    initial_units: int = 50
    initial_depth: int = 30
    spread_floor: int = 1
    max_qty: int = 2
    start_price: int = 100_000
    min_side_units: int = 10

    def validate(self) -> None:
        rates = (self.limit_rate, self.market_rate, self.cancel_hazard)
        if any(not 0.0 <= r <= 1.0 for r in rates) or sum(rates) > 1.0 + 1e-12:
            raise ValueError("rates must lie in [0, 1] and sum to at most 1")
        if self.n_events < 0:
            raise ValueError("n_events must be >= 0")
        if self.initial_units < 1 or self.min_side_units < 1:
            raise ValueError("initial_units and min_side_units must be >= 1 or a side would empty")
        if self.limit_rate == 0.0 and (self.market_rate > 0 or self.cancel_hazard > 0):
            raise ValueError("limit_rate = 0 with removals would empty the book")
        if self.depth_mean < 0 or self.spread_floor < 1 or self.max_qty < 1:
            raise ValueError("depth_mean >= 0, spread_floor >= 1 and max_qty >= 1 required")
        if self.initial_depth < 0 or self.trend_window < 1:
            raise ValueError("initial_depth >= 0 and trend_window >= 1 required")
        if self.start_price - self.initial_depth - 1 < 1:
            raise ValueError("start_price too low for the initial book")


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(SimConfig)}


def parse_config(text: str, **overrides) -> SimConfig:
    """Build a :class:`SimConfig` from ``key = value`` lines (``#`` starts a comment)."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        kind = _FIELD_TYPES[key]
        try:
            values[key] = int(value) if kind in ("int", int) else float(value)
        except ValueError:
            raise ValueError(f"config line {lineno}: bad value {value!r} for {key}") from None
    values.update({k: v for k, v in overrides.items() if v is not None})
    cfg = SimConfig(**values)
    cfg.validate()
    return cfg


def load_config(path: str, **overrides) -> SimConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), **overrides)


def format_config(cfg: SimConfig) -> str:
    return "".join(f"{f.name} = {getattr(cfg, f.name)}\n" for f in dataclasses.fields(cfg))


class _Uniforms:
    """Block-buffered U[0, 1) draws; scalar calls into numpy dominate otherwise."""

    def __init__(self, seed: int, block: int = 8192):
        self._rng = np.random.default_rng(seed)
        self._block = block
        self._buf: list[float] = []
        self._pos = 0

    def random(self) -> float:
        if self._pos == len(self._buf):
            self._buf = self._rng.random(self._block).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u

    def integers(self, low: int, high: int) -> int:
        """Uniform integer in [low, high)."""
        return low + min(int(self.random() * (high - low)), high - low - 1)

    def geometric0(self, p: float) -> int:
        """Failures before the first success, P(k) = (1-p)^k p."""
        if p >= 1.0:
            return 0
        return int(math.log1p(-self.random()) / math.log1p(-p))


class _Generator:
    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.rng = _Uniforms(cfg.seed)
        self.book = BookState()
        self.events: list[OrderEvent] = []
        self.next_id = 1
        self.clock = 0
        self.geom_p = 1.0 / (cfg.depth_mean + 1.0)
        self.tick_mid2: list[int] = []

    def emit(self, action: Action, side: Side, price: Optional[int] = None, qty: int = 1,
             order_id: Optional[str] = None) -> None:
        if order_id is None:
            order_id = str(self.next_id)
            self.next_id += 1
        self.clock += self.rng.integers(0, 4)
        event = OrderEvent(self.clock, order_id, action, side, price, qty)
        book = self.book
        tick0 = book.tick
        book.apply(event, len(self.events))
        self.events.append(event)
        if book.tick != tick0 and book.two_sided:
            self.tick_mid2.extend([book.mid2] * (book.tick - tick0))

    def trend(self) -> float:
        cfg = self.cfg
        if cfg.trend_coupling == 0.0 or len(self.tick_mid2) <= cfg.trend_window:
            return 0.0
        move = (self.tick_mid2[-1] - self.tick_mid2[-1 - cfg.trend_window]) / 2.0
        return math.tanh(cfg.trend_coupling * move / cfg.trend_window)

    def side_for(self, tilt: float) -> Side:
        return Side.BUY if self.rng.random() < 0.5 * (1.0 + 0.8 * tilt) else Side.SELL

    def offset(self) -> int:
        return self.rng.geometric0(self.geom_p)

    def limit(self, side: Optional[Side] = None) -> None:
        cfg, book = self.cfg, self.book
        d = self.offset()
        if side is None:
            side = self.side_for(self.trend() if d <= cfg.shallow_depth else 0.0)
        if side is Side.BUY:
            anchor = book.best_ask - cfg.spread_floor if book.best_ask is not None else book.best_bid
            price = anchor - d
        else:
            anchor = book.best_bid + cfg.spread_floor if book.best_bid is not None else book.best_ask
            price = anchor + d
        qty = self.rng.integers(1, cfg.max_qty + 1)
        self.emit(Action.LIMIT, side, max(price, 1), qty)

    def market(self) -> None:
        side = self.side_for(self.trend())
        available = self.book.units[side.opposite.index]
        qty = min(self.rng.integers(1, self.cfg.max_qty + 1), available - 1)
        if qty < 1:
            self.limit(side.opposite)
            return
        self.emit(Action.MARKET, side, None, qty)

    def cancel(self) -> None:
        ids = self.book.resting_order_ids()
        oid = ids[self.rng.integers(0, len(ids))]
        side, _, units = self.book.order_info(oid)
        self.emit(Action.CANCEL, side, None, units, order_id=oid)

    def seed_book(self) -> None:
        cfg = self.cfg
        span = cfg.initial_depth + 1
        for k in range(cfg.initial_units):
            for side in (Side.BUY, Side.SELL):
                if len(self.events) >= cfg.n_events:
                    return
                d = k % span
                price = cfg.start_price - 1 - d if side is Side.BUY else cfg.start_price + 1 + d
                self.emit(Action.LIMIT, side, price, 1)

    def run(self) -> list[OrderEvent]:
        cfg, book = self.cfg, self.book
        self.seed_book()
        while len(self.events) < cfg.n_events:
            thin = [s for s in (Side.BUY, Side.SELL) if book.units[s.index] < cfg.min_side_units]
            if thin:
                self.limit(thin[0])
                continue
            w_cancel = cfg.cancel_hazard * book.n_orders
            u = self.rng.random() * (cfg.limit_rate + cfg.market_rate + w_cancel)
            if u < cfg.limit_rate:
                self.limit()
            elif u < cfg.limit_rate + cfg.market_rate:
                self.market()
            else:
                self.cancel()
        return self.events


def simulate(config: SimConfig) -> list[OrderEvent]:
    """Generate ``config.n_events`` replayable events; identical configs give identical logs."""
    config.validate()
    return _Generator(config).run()


def random_walk_recurrence(n_walks: int, max_steps: int, seed: int = 0) -> np.ndarray:
    """First-return-to-origin times of simple +-1 random walks.

    Walks that have not returned within ``max_steps`` are censored and
    reported as ``max_steps + 1``, so the CCDF is exact for tau <= max_steps.
    """
    if n_walks < 1:
        raise ValueError("n_walks must be >= 1")
    rng = np.random.default_rng(seed)
    times = np.full(n_walks, max_steps + 1, dtype=np.int64)
    idx = np.arange(n_walks)
    pos = np.zeros(n_walks, dtype=np.int32)
    t = 0
    block = 8
    while t < max_steps and idx.size:
        m = min(block, max_steps - t)
        steps = rng.integers(0, 2, size=(idx.size, m), dtype=np.int8) * 2 - 1
        path = pos[:, None] + np.cumsum(steps, axis=1, dtype=np.int32)
        hit = path == 0
        returned = hit.any(axis=1)
        times[idx[returned]] = t + hit[returned].argmax(axis=1) + 1
        pos = path[~returned, -1]
        idx = idx[~returned]
        t += m
        block = min(block * 2, 4096)
    return times


def exponential_response(v: np.ndarray, phi0: float, delta: float) -> np.ndarray:
    """Causal response to ``v`` through phi(t) = phi0 exp(-delta t).

    ``v`` is held constant within each tick and the kernel integral is taken
    exactly over each tick, giving a one-pole recursion.
    """
    r = math.exp(-delta)
    gain = phi0 * (1.0 - r) / delta
    return lfilter([gain], [1.0, -r], np.asarray(v, dtype=float))
