"""Quantized order events and the CSV/JSONL event-log codec.

Prices are integer pips (1 pip = 0.001 in quote currency).  They are parsed
from decimal strings with :class:`decimal.Decimal`, never through floats.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from enum import Enum
from typing import IO, Iterable, Iterator, Optional, Union

PIPS_PER_UNIT = 1000
COLUMNS = ("timestamp_ms", "order_id", "action", "side", "price", "qty_units")


class EventLogError(ValueError):
    """Malformed or out-of-order event log; ``line`` is 1-based (header = 1)."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class Action(Enum):
    LIMIT = "LIMIT"
    MARKET = "MARKET"
    CANCEL = "CANCEL"


class Side(Enum):
    BUY = "BUY"
    SELL = "SELL"

    @property
    def symbol(self) -> str:
        return "-" if self is Side.BUY else "+"

    @property
    def opposite(self) -> "Side":
        return Side.SELL if self is Side.BUY else Side.BUY


# plain attribute: this is read on every book delta
Side.BUY.index = 0
Side.SELL.index = 1


@dataclass(frozen=True, slots=True)
class OrderEvent:
    timestamp_ms: int
    order_id: str
    action: Action
    side: Side
    price: Optional[int] = None
    qty_units: int = 1

    def __post_init__(self) -> None:
        if self.qty_units < 1:
            raise ValueError("qty_units must be >= 1")
        if self.action is Action.LIMIT and self.price is None:
            raise ValueError("LIMIT event requires a price")
        if self.action is not Action.LIMIT and self.price is not None:
            raise ValueError(f"{self.action.value} event must not carry a price")


def price_to_pips(text: str) -> int:
    """Convert a decimal price string to integer pips, exactly.

    >>> price_to_pips("101.325")
    101325
    """
    try:
        value = Decimal(text.strip()) * PIPS_PER_UNIT
    except InvalidOperation:
        raise ValueError(f"not a decimal price: {text!r}") from None
    if value != value.to_integral_value():
        raise ValueError(f"price {text!r} is finer than one pip")
    return int(value)


def pips_to_price(pips: int) -> str:
    """Render integer pips with exactly three decimals."""
    return format(Decimal(pips).scaleb(-3), "f")


def _event_from_fields(fields: dict, line: int) -> OrderEvent:
    try:
        action = Action(str(fields["action"]).strip().upper())
        side = Side(str(fields["side"]).strip().upper())
        raw_price = fields.get("price")
        if raw_price is None or (isinstance(raw_price, str) and not raw_price.strip()):
            price = None
        else:
            price = price_to_pips(str(raw_price))
        raw_qty = fields.get("qty_units")
        qty = 1 if raw_qty in (None, "") else int(raw_qty)
        return OrderEvent(
            timestamp_ms=int(fields["timestamp_ms"]),
            order_id=str(fields["order_id"]).strip(),
            action=action,
            side=side,
            price=price,
            qty_units=qty,
        )
    except KeyError as exc:
        raise EventLogError(line, f"missing field {exc.args[0]!r}") from None
    except (ValueError, TypeError) as exc:
        raise EventLogError(line, str(exc)) from None


def _check_order(rows: Iterable[tuple[int, OrderEvent]]) -> Iterator[OrderEvent]:
    last = None
    for line, event in rows:
        if last is not None and event.timestamp_ms < last:
            raise EventLogError(line, f"timestamp {event.timestamp_ms} decreases (previous {last})")
        last = event.timestamp_ms
        yield event


def _iter_csv(stream: IO[str]):
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None:
        return
    header = [h.strip() for h in header]
    if tuple(header) != COLUMNS:
        raise EventLogError(1, f"unexpected header {header}")
    for row in reader:
        line = reader.line_num
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(COLUMNS):
            raise EventLogError(line, f"expected {len(COLUMNS)} columns, got {len(row)}")
        yield line, _event_from_fields(dict(zip(COLUMNS, row)), line)


def _iter_jsonl(stream: IO[str]):
    for line, text in enumerate(stream, start=1):
        if not text.strip():
            continue
        try:
            obj = json.loads(text, parse_float=Decimal)
        except json.JSONDecodeError as exc:
            raise EventLogError(line, f"invalid JSON: {exc.msg}") from None
        if not isinstance(obj, dict):
            raise EventLogError(line, "expected a JSON object")
        yield line, _event_from_fields(obj, line)


def _text_stream(source: Union[IO, bytes, str]) -> IO[str]:
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8"))
    if isinstance(source, str):
        return io.StringIO(source)
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8", newline="")


def iter_event_log(source, format: str = "csv") -> Iterator[OrderEvent]:
    """Lazily parse an event log, validating timestamps as it goes."""
    stream = _text_stream(source)
    fmt = format.lower()
    if fmt == "csv":
        rows = _iter_csv(stream)
    elif fmt == "jsonl":
        rows = _iter_jsonl(stream)
    else:
        raise ValueError(f"unknown event-log format {format!r}")
    return _check_order(rows)


def parse_event_log(source, format: str = "csv") -> list[OrderEvent]:
    """Parse a whole CSV or JSONL event log into a list, in file order.

    ``source`` may be bytes, a str holding the file contents, or an open
    binary/text stream.  A CANCEL of an unknown order id is accepted here;
    the book engine decides what to do with it.
    """
    return list(iter_event_log(source, format))


def _row(event: OrderEvent) -> list[str]:
    return [
        str(event.timestamp_ms),
        event.order_id,
        event.action.value,
        event.side.value,
        "" if event.price is None else pips_to_price(event.price),
        str(event.qty_units),
    ]


def write_event_log(events: Iterable[OrderEvent], stream: Optional[IO[str]] = None,
                    format: str = "csv") -> bytes:
    """Serialize events; returns the UTF-8 bytes (also written to ``stream`` if given)."""
    buf = io.StringIO()
    fmt = format.lower()
    if fmt == "csv":
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        for event in events:
            writer.writerow(_row(event))
    elif fmt == "jsonl":
        for event in events:
            fields = dict(zip(COLUMNS, _row(event)))
            obj = {
                "timestamp_ms": event.timestamp_ms,
                "order_id": event.order_id,
                "action": fields["action"],
                "side": fields["side"],
                "price": fields["price"] or None,
                "qty_units": event.qty_units,
            }
            buf.write(json.dumps(obj, separators=(",", ":")) + "\n")
    else:
        raise ValueError(f"unknown event-log format {format!r}")
    text = buf.getvalue()
    if stream is not None:
        stream.write(text)
    return text.encode("utf-8")


def format_from_path(path: str) -> str:
    return "jsonl" if str(path).lower().endswith((".jsonl", ".ndjson")) else "csv"


def read_event_file(path: str, format: Optional[str] = None) -> list[OrderEvent]:
    with open(path, "rb") as fh:
        return parse_event_log(fh.read(), format or format_from_path(path))


def write_event_file(path: str, events: Iterable[OrderEvent], format: Optional[str] = None) -> None:
    data = write_event_log(events, format=format or format_from_path(path))
    with open(path, "wb") as fh:
        fh.write(data)


def mirror_events(events: Iterable[OrderEvent], pivot: Optional[int] = None) -> list[OrderEvent]:
    """Swap BUY and SELL and reflect prices ``p -> pivot - p``.

    The default pivot is the sum of the lowest and highest LIMIT price, which
    keeps every mirrored price inside the original range.
    """
    events = list(events)
    if pivot is None:
        prices = [e.price for e in events if e.price is not None]
        pivot = (min(prices) + max(prices)) if prices else 0
    return [OrderEvent(e.timestamp_ms, e.order_id, e.action, e.side.opposite,
                       None if e.price is None else pivot - e.price, e.qty_units)
            for e in events]
