"""Deterministic price-time priority replay of unit orders.

Every unit of an order is its own particle with id ``"<order_id>.<k>"``.
Deals annihilate one resting (maker) unit and one incoming (taker) unit and
advance the tick clock by one.  Prices and the mid-price are kept as exact
integers (the mid in half-pips).
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from lobfluid.events import Action, OrderEvent, Side

logger = logging.getLogger(__name__)


class ReplayError(RuntimeError):
    def __init__(self, message: str, event_index: Optional[int] = None):
        where = f"event {event_index}: " if event_index is not None else ""
        super().__init__(where + message)
        self.event_index = event_index


@dataclass(slots=True, eq=False)
class Unit:
    particle_id: str
    order_id: str


@dataclass(frozen=True, slots=True)
class DealRecord:
    tick: int
    price: int
    aggressor_side: Side
    maker_particle_id: str
    taker_particle_id: str


class DeltaKind(Enum):
    ADD = "ADD"
    DEAL = "DEAL"
    CANCEL = "CANCEL"


@dataclass(frozen=True, slots=True)
class BookDelta:
    """One change to the resting sets.

    ``side``/``price``/``particle_id`` describe the resting unit that was added,
    removed by cancel, or consumed as maker.  For DEAL the taker unit is in
    ``deal`` and its own limit (or execution) price in ``taker_price``.
    """

    kind: DeltaKind
    event_index: int
    tick: int
    side: Side
    price: int
    particle_id: str
    own_best_before: Optional[int] = None
    deal: Optional[DealRecord] = None
    taker_price: Optional[int] = None


class ReplayObserver:
    """No-op base for replay observers; override what you need.

    ``on_tick_end`` fires right before a deal mutates the book, closing the
    current tick, and once more just before ``on_finish``.
    """

    def on_event_start(self, index: int, event: OrderEvent, book: "BookState") -> None:
        pass

    def on_tick_end(self, tick: int, book: "BookState") -> None:
        pass

    def on_delta(self, delta: BookDelta, book: "BookState") -> None:
        pass

    def on_event_end(self, index: int, event: OrderEvent, book: "BookState") -> None:
        pass

    def on_finish(self, book: "BookState") -> None:
        pass


class BookState:
    def __init__(self, observers: Sequence[ReplayObserver] = ()):
        self.bids: dict[int, deque[Unit]] = {}
        self.asks: dict[int, deque[Unit]] = {}
        self.best_bid: Optional[int] = None
        self.best_ask: Optional[int] = None
        self.tick = 0
        self.wall_time_ms = 0
        self.units = [0, 0]
        self.warnings: list[str] = []
        self.observers = list(observers)
        # order_id -> [side, price, remaining units]
        self._orders: dict[str, list] = {}
        self._event_index = -1

    # -- derived quantities -------------------------------------------------
    @property
    def two_sided(self) -> bool:
        return self.best_bid is not None and self.best_ask is not None

    @property
    def mid2(self) -> Optional[int]:
        """Mid-price in half-pips, i.e. best_bid + best_ask."""
        if not self.two_sided:
            return None
        return self.best_bid + self.best_ask

    @property
    def mid(self) -> Optional[Fraction]:
        m2 = self.mid2
        return None if m2 is None else Fraction(m2, 2)

    @property
    def spread(self) -> Optional[int]:
        if not self.two_sided:
            return None
        return self.best_ask - self.best_bid

    def levels(self, side: Side) -> dict[int, deque[Unit]]:
        return self.bids if side is Side.BUY else self.asks

    def best(self, side: Side) -> Optional[int]:
        return self.best_bid if side is Side.BUY else self.best_ask

    def resting_units(self) -> int:
        return self.units[0] + self.units[1]

    def is_resting(self, order_id: str) -> bool:
        return order_id in self._orders

    @property
    def n_orders(self) -> int:
        return len(self._orders)

    def resting_order_ids(self) -> list[str]:
        return list(self._orders)

    def resting_orders(self) -> dict[str, tuple[Side, int, int]]:
        return {oid: (o[0], o[1], o[2]) for oid, o in self._orders.items()}

    def order_info(self, order_id: str) -> Optional[tuple[Side, int, int]]:
        o = self._orders.get(order_id)
        return None if o is None else (o[0], o[1], o[2])

    def snapshot(self) -> list[tuple[int, Side, int]]:
        """(price, side, units) rows, highest price first."""
        rows = [(p, Side.SELL, len(q)) for p, q in self.asks.items()]
        rows += [(p, Side.BUY, len(q)) for p, q in self.bids.items()]
        rows.sort(key=lambda r: (-r[0], r[1].value))
        return rows

    # -- mechanics -----------------------------------------------------------
    def _notify_delta(self, delta: BookDelta) -> None:
        for obs in self.observers:
            obs.on_delta(delta, self)

    def _emit(self, *args, **kwargs) -> None:
        if self.observers:
            self._notify_delta(BookDelta(*args, **kwargs))

    def _refresh_best(self, side: Side) -> None:
        if side is Side.BUY:
            self.best_bid = max(self.bids) if self.bids else None
        else:
            self.best_ask = min(self.asks) if self.asks else None

    def _rest(self, side: Side, price: int, unit: Unit) -> None:
        before = self.best(side)
        levels = self.levels(side)
        level = levels.get(price)
        if level is None:
            level = levels[price] = deque()
        level.append(unit)
        self.units[side.index] += 1
        order = self._orders.get(unit.order_id)
        if order is None:
            self._orders[unit.order_id] = [side, price, 1]
        else:
            order[2] += 1
        best = self.best(side)
        if best is None or (price > best if side is Side.BUY else price < best):
            if side is Side.BUY:
                self.best_bid = price
            else:
                self.best_ask = price
        self._emit(DeltaKind.ADD, self._event_index, self.tick, side, price,
                   unit.particle_id, own_best_before=before)

    def _take_one(self, aggressor: Side, taker_id: str, taker_price: Optional[int]) -> DealRecord:
        maker_side = aggressor.opposite
        price = self.best(maker_side)
        for obs in self.observers:
            obs.on_tick_end(self.tick, self)
        levels = self.levels(maker_side)
        level = levels[price]
        maker = level.popleft()
        self.units[maker_side.index] -= 1
        order = self._orders[maker.order_id]
        order[2] -= 1
        if order[2] == 0:
            del self._orders[maker.order_id]
        if not level:
            del levels[price]
            self._refresh_best(maker_side)
        self.tick += 1
        deal = DealRecord(self.tick, price, aggressor, maker.particle_id, taker_id)
        self._emit(DeltaKind.DEAL, self._event_index, self.tick, maker_side, price,
                   maker.particle_id, own_best_before=price, deal=deal,
                   taker_price=price if taker_price is None else taker_price)
        return deal

    def _crosses(self, side: Side, price: int) -> bool:
        if side is Side.BUY:
            return self.best_ask is not None and price >= self.best_ask
        return self.best_bid is not None and price <= self.best_bid

    def apply(self, event: OrderEvent, index: Optional[int] = None) -> list[DealRecord]:
        if index is None:
            index = self._event_index + 1
        self._event_index = index
        self.wall_time_ms = event.timestamp_ms
        for obs in self.observers:
            obs.on_event_start(index, event, self)
        deals: list[DealRecord] = []
        side = event.side
        if event.action is Action.LIMIT:
            if event.order_id in self._orders:
                raise ReplayError(f"duplicate resting order id {event.order_id!r}", index)
            k = 0
            while k < event.qty_units and self._crosses(side, event.price):
                deals.append(self._take_one(side, f"{event.order_id}.{k}", event.price))
                k += 1
            for j in range(k, event.qty_units):
                self._rest(side, event.price, Unit(f"{event.order_id}.{j}", event.order_id))
        elif event.action is Action.MARKET:
            available = self.units[side.opposite.index]
            if available < event.qty_units:
                raise ReplayError(
                    f"MARKET {side.value} for {event.qty_units} units against {available} resting", index)
            for k in range(event.qty_units):
                deals.append(self._take_one(side, f"{event.order_id}.{k}", None))
        else:
            self._cancel(event, index)
        for obs in self.observers:
            obs.on_event_end(index, event, self)
        return deals

    def _cancel(self, event: OrderEvent, index: int) -> None:
        order = self._orders.get(event.order_id)
        if order is None or order[0] is not event.side:
            msg = f"event {index}: CANCEL of non-resting order {event.order_id!r} ignored"
            self.warnings.append(msg)
            logger.debug(msg)
            return
        side, price = order[0], order[1]
        levels = self.levels(side)
        level = levels[price]
        removed = [unit for unit in level if unit.order_id == event.order_id]
        del self._orders[event.order_id]
        for unit in removed:
            before = self.best(side)
            self.units[side.index] -= 1
            level.remove(unit)
            if not level:
                del levels[price]
                self._refresh_best(side)
            self._emit(DeltaKind.CANCEL, index, self.tick, side, price,
                       unit.particle_id, own_best_before=before)

    def finish(self) -> None:
        for obs in self.observers:
            obs.on_tick_end(self.tick, self)
            obs.on_finish(self)


def apply_event(state: BookState, event: OrderEvent,
                index: Optional[int] = None) -> tuple[list[DealRecord], list[BookDelta]]:
    """Apply one event to ``state`` in place; return the deals and deltas it produced."""
    collector = _DeltaCollector()
    state.observers.append(collector)
    try:
        deals = state.apply(event, index)
    finally:
        state.observers.remove(collector)
    return deals, collector.deltas


class _DeltaCollector(ReplayObserver):
    def __init__(self):
        self.deltas: list[BookDelta] = []

    def on_delta(self, delta, book):
        self.deltas.append(delta)


def replay(events: Iterable[OrderEvent], observers: Sequence[ReplayObserver] = ()) -> BookState:
    """Replay a time-ordered event stream; observers see every delta in order."""
    state = BookState(observers)
    for i, event in enumerate(events):
        try:
            state.apply(event, i)
        except ReplayError:
            raise
        except Exception as exc:
            raise ReplayError(str(exc), i) from exc
    state.finish()
    return state
