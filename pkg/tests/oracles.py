"""Independent oracles: a list-scan order matcher and an offline particle classifier."""
import random

from conftest import cancel, limit, market
from lobfluid.book import DeltaKind, ReplayObserver
from lobfluid.events import Action, Side
from lobfluid.particles import A_II, A_O, A_OI, CANCELED


class BruteBook:
    def __init__(self):
        self.entries = []  # [side, price, seq, particle_id, order_id]
        self.seq = 0
        self.deals = []

    def _rest(self, side, price, pid, oid):
        self.entries.append([side, price, self.seq, pid, oid])
        self.seq += 1

    def _best_maker(self, aggressor, limit):
        opp = [e for e in self.entries if e[0] is not aggressor]
        if aggressor is Side.BUY:
            opp = [e for e in opp if limit is None or e[1] <= limit]
            return min(opp, key=lambda e: (e[1], e[2])) if opp else None
        opp = [e for e in opp if limit is None or e[1] >= limit]
        return min(opp, key=lambda e: (-e[1], e[2])) if opp else None

    def apply(self, ev):
        if ev.action is Action.CANCEL:
            self.entries = [e for e in self.entries if not (e[4] == ev.order_id and e[0] is ev.side)]
            return
        if ev.action is Action.MARKET:
            if sum(e[0] is not ev.side for e in self.entries) < ev.qty_units:
                raise ValueError("insufficient liquidity")
        for k in range(ev.qty_units):
            pid = f"{ev.order_id}.{k}"
            maker = self._best_maker(ev.side, ev.price)
            if maker is None:
                self._rest(ev.side, ev.price, pid, ev.order_id)
                continue
            self.entries.remove(maker)
            self.deals.append((maker[1], ev.side, maker[3], pid))

    def resting(self, side):
        es = sorted((e for e in self.entries if e[0] is side), key=lambda e: (e[1], e[2]))
        return [(e[1], e[3]) for e in es]


def engine_resting(book, side):
    out = []
    for price in sorted(book.levels(side)):
        out += [(price, u.particle_id) for u in book.levels(side)[price]]
    return out


def random_case(rng: random.Random):
    m = 1000
    evs = []
    for side in (Side.BUY, Side.SELL):
        for _ in range(rng.randint(0, 20)):
            p = m - rng.randint(1, 8) if side is Side.BUY else m + rng.randint(0, 8)
            evs.append(limit(len(evs), f"i{len(evs)}", side, p))
    rng.shuffle(evs)
    kind = rng.random()
    side = rng.choice([Side.BUY, Side.SELL])
    if kind < 0.5:
        ev = limit(99, "x", side, m + rng.randint(-10, 10), rng.randint(1, 5))
    elif kind < 0.8:
        ev = market(99, "x", side, rng.randint(1, 5))
    else:
        target = rng.choice(evs).order_id if evs and rng.random() < 0.8 else "nope"
        ev = cancel(99, target, rng.choice([Side.BUY, Side.SELL]))
    return evs, ev


class BestTape(ReplayObserver):
    """Records both best quotes after every delta and at every event start."""

    def __init__(self):
        self.after = []          # (best_bid, best_ask) after delta k
        self.start_of_event = {}
        self.pos = {}            # particle id -> (birth delta, death delta, kind at death)

    def on_event_start(self, index, event, book):
        self.start_of_event[index] = (book.best_bid, book.best_ask)

    def on_delta(self, delta, book):
        k = len(self.after)
        self.after.append((book.best_bid, book.best_ask))
        if delta.kind is DeltaKind.ADD:
            self.pos[delta.particle_id] = [k, None, None, delta.event_index]
        else:
            self.pos[delta.particle_id][1:3] = [k, delta.kind]
            if delta.kind is DeltaKind.DEAL:
                self.pos[delta.deal.taker_particle_id] = [k, k, "taker", delta.event_index]


def oracle_class(rec, pos, tape, gc):
    birth, death, kind, _ = pos[rec.id]
    s = rec.side.index

    def depth(best):
        return best - rec.price if s == 0 else rec.price - best

    if kind == "taker":
        d = depth(tape.after[death][s])
        visited = d > gc
    else:
        visited = any(depth(tape.after[k][s]) > gc for k in range(birth, death))
        if kind is DeltaKind.DEAL:
            d = depth(tape.start_of_event[rec.death_event][s])
        else:
            d = depth(tape.after[death - 1][s])
        visited = visited or rec.birth_depth > gc
    if kind is DeltaKind.CANCEL:
        return CANCELED
    if d > gc:
        return A_O
    return A_OI if visited else A_II
