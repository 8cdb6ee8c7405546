import io

import numpy as np
import pytest

from conftest import cancel, limit, market
from lobfluid.book import ReplayObserver, replay
from lobfluid.events import Side
from lobfluid.particles import (A_II, A_O, A_OI, CANCELED, COUNT_FIELDS, Fate, InsufficientData,
                                LayerConfig, TickSeries, UndefinedDepth, depth_of, fate_shares,
                                rolling_ratio, track, write_particle_ledger)
from lobfluid.synth import SimConfig, simulate
from oracles import BestTape, oracle_class

B, S = Side.BUY, Side.SELL


def test_depth_examples(basic_book_events):
    book = replay(basic_book_events)
    assert depth_of(101320, B, book) == 5
    assert depth_of(101329, S, book) == 0
    assert depth_of(101327, B, book) == -2


def test_in_spread_birth_depth_measured_before_insertion(basic_book_events):
    tracker, _ = track(basic_book_events + [limit(2, 3, B, 101327)])
    assert _by_id(tracker)["3.0"].birth_depth == -2


def test_depth_undefined_on_one_sided_book():
    book = replay([limit(0, 1, S, 100)])
    with pytest.raises(UndefinedDepth):
        depth_of(99, B, book)


def _by_id(tracker):
    return {p.id: p for p in tracker.particles}


def test_outer_excursion_then_inner_deal_is_a_oi():
    evs = [limit(0, "ask", S, 2000),
           limit(1, "A", B, 1000), limit(2, "P", B, 995),   # P at depth 5
           limit(3, "X", B, 1020),                           # P pushed to depth 25
           cancel(4, "X", B), cancel(5, "A", B),
           limit(6, "C", B, 1005),                           # P back to depth 10
           market(7, "m", S, 2)]
    tracker, _ = track(evs, LayerConfig.symmetric(18))
    p = _by_id(tracker)["P.0"]
    assert p.birth_depth == 5 and p.born_inner
    assert p.death_depth == 10 and p.visited_outer
    assert p.cls == A_OI and p.fate is Fate.ANNIHILATED_DEAL


def test_inner_life_is_a_ii_with_lifetime():
    evs = [limit(0, "A", B, 1000), limit(1, "P", B, 998),
           limit(2, "s", S, 1010, 2),
           market(3, "m1", B), market(4, "m2", B),
           cancel(5, "A", B), market(6, "m3", S)]
    tracker, _ = track(evs, LayerConfig.symmetric(18))
    p = _by_id(tracker)["P.0"]
    assert p.birth_depth == 2 and not p.visited_outer
    assert p.cls == A_II and p.lifetime == 3
    assert _by_id(tracker)["A.0"].cls == CANCELED


def test_taker_units_are_instant_particles():
    evs = [limit(0, 1, B, 100), limit(1, 2, S, 103), market(2, 3, B)]
    tracker, _ = track(evs)
    taker = _by_id(tracker)["3.0"]
    assert taker.taker and taker.lifetime == 0 and taker.cls == A_II
    s = tracker.series()
    assert s.counts["c_i"][0, 1] == 1 and s.counts["a_ii"][0, 1] == 1
    assert s.counts["a_ii"][1, 1] == 1


def test_deep_sweep_death_is_outer_bucket():
    evs = [limit(0, "a", S, 100), limit(1, "b", S, 110), limit(2, "c", B, 90), market(3, "m", B, 2)]
    tracker, _ = track(evs, LayerConfig.symmetric(5))
    assert _by_id(tracker)["b.0"].cls == A_O


def test_cancels_annihilate_option():
    evs = [limit(0, 1, B, 100), limit(1, 2, S, 101), cancel(2, 1, B)]
    tracker, _ = track(evs, cancels_annihilate=True)
    assert _by_id(tracker)["1.0"].cls == A_II


def test_at_best_flow_has_no_a_oi():
    evs = []
    for k in range(50):
        evs += [limit(4 * k, f"b{k}", B, 1000), limit(4 * k + 1, f"s{k}", S, 1001),
                market(4 * k + 2, f"mb{k}", B), market(4 * k + 3, f"ms{k}", S)]
    tracker, _ = track(evs, LayerConfig.symmetric(18))
    shares = fate_shares(tracker.particles)
    assert shares.a_oi == 0.0
    assert shares.a_i == pytest.approx(shares.a_ii + shares.a_oi)
    assert shares.a_i == 1.0


def test_fate_shares_empty():
    with pytest.raises(InsufficientData):
        fate_shares([])


@pytest.mark.parametrize("gc", [2, 3, 6])
def test_tracker_matches_offline_reclassification(gc):
    evs = simulate(SimConfig(seed=3, n_events=10_000))
    tape = BestTape()
    tracker, _ = track(evs, LayerConfig.symmetric(gc), observers=[tape], record_profile=False)
    counts = dict.fromkeys((A_II, A_OI, A_O, CANCELED), 0)
    for rec in tracker.dead:
        expected = oracle_class(rec, tape.pos, tape, gc)
        assert rec.cls == expected, rec
        counts[expected] += 1
    assert counts[A_OI] > 0 and counts[A_II] > 0
    shares = fate_shares(tracker.particles)
    assert shares.a_oi == counts[A_OI] / shares.n
    assert shares.a_ii == counts[A_II] / shares.n


@pytest.fixture(scope="module")
def sim_tracker():
    evs = simulate(SimConfig(seed=11, n_events=4000))
    return track(evs, LayerConfig.symmetric(4), depth_range=(-10, 600))


def test_partition_and_inner_sum(sim_tracker):
    tracker, book = sim_tracker
    s = tracker.series()
    classes = [p.cls for p in tracker.dead]
    assert len(classes) == sum(classes.count(c) for c in (A_II, A_OI, A_O, CANCELED))
    assert np.array_equal(s.a_i, s.a_ii + s.a_oi)
    total_dead = sum(s.counts[k].sum() for k in ("a_i", "a_o")) + s.counts["x_i"].sum() + s.counts["x_o"].sum()
    assert total_dead == len(tracker.dead)
    assert len(tracker.alive) == book.resting_units()


def test_visited_outer_monotone():
    class Watch(ReplayObserver):
        def __init__(self, tracker):
            self.tracker, self.seen = tracker, set()

        def on_event_end(self, index, event, book):
            for pid, rec in self.tracker.live.items():
                if pid in self.seen:
                    assert rec.visited_outer
                elif rec.visited_outer:
                    self.seen.add(pid)

    from lobfluid.particles import ParticleTracker
    tracker = ParticleTracker(LayerConfig.symmetric(3), record_profile=False)
    replay(simulate(SimConfig(seed=2, n_events=3000)), [tracker, Watch(tracker)])


def test_depth_profile_bookkeeping(sim_tracker):
    tracker, _ = sim_tracker
    s = tracker.series()
    for side in (B, S):
        i = side.index
        assert np.array_equal(s.profile[i].sum(axis=1), s.n_inner[i] + s.n_outer[i])
        net = (s.c_i[i] + s.c_o[i]) - (s.a_i[i] + s.a_o[i] + s.x_i[i] + s.x_o[i])
        assert np.array_equal(s.depth_change(side).sum(axis=1), net)
    assert np.array_equal(
        s.f_i, s.c_i[0] - s.c_i[1] - s.a_i[0] + s.a_i[1])


def _series_with(a_i, a_oi):
    n = len(a_i)
    z = np.zeros((2, n), dtype=np.int64)
    counts = {k: z.copy() for k in COUNT_FIELDS}
    counts["a_i"][0] = a_i
    counts["a_oi"][0] = a_oi
    counts["a_ii"][0] = np.array(a_i) - np.array(a_oi)
    return TickSeries(np.zeros(n, np.int64), np.ones(n, np.int64), np.ones(n, bool), counts,
                      z, z, np.arange(1))


def test_rolling_ratio_single_window():
    t, r = rolling_ratio(_series_with([2, 2, 2, 2, 2], [0, 1, 0, 1, 0]), window=4)
    assert list(t) == [4] and r[0] == pytest.approx(0.2)


def test_rolling_ratio_skips_empty_window():
    t, r = rolling_ratio(_series_with([0, 0, 0, 1, 1, 2], [0, 0, 0, 1, 0, 0]), window=2)
    assert list(t) == [3, 4, 5]
    assert r == pytest.approx([1.0, 0.5, 0.25])


def test_rolling_ratio_mean_near_global():
    evs = simulate(SimConfig(seed=1, n_events=100_000))
    tracker, _ = track(evs, LayerConfig.symmetric(3), record_profile=False)
    s = tracker.series()
    _, r = rolling_ratio(s, window=1000)
    glob = s.a_oi.sum() / s.a_i.sum()
    assert abs(r.mean() / glob - 1) < 0.02


def test_particle_ledger_csv(basic_book_events):
    tracker, _ = track(basic_book_events + [market(2, 3, B)])
    text = write_particle_ledger(tracker.particles, io.StringIO())
    lines = text.strip().splitlines()
    assert lines[0].startswith("id,side,price")
    assert len(lines) == 1 + len(tracker.particles)
