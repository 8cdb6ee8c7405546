import csv
import json

import pytest

from conftest import limit
from lobfluid.book import DeltaKind, ReplayObserver, replay
from lobfluid.cli import main
from lobfluid.particles import track
from lobfluid.events import Side, price_to_pips, read_event_file, write_event_file


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "sim.cfg").write_text("seed = 1\nn_events = 30000\ntrend_coupling = 2.0\n")
    return tmp_path


@pytest.fixture
def sim_log(workdir):
    assert main(["simulate", "--config", "sim.cfg", "--out", "ev.csv"]) == 0
    return workdir / "ev.csv"


def test_simulate_writes_log_and_is_deterministic(workdir):
    assert main(["simulate", "--config", "sim.cfg", "--seed", "7", "--out", "a.csv"]) == 0
    assert main(["simulate", "--config", "sim.cfg", "--seed", "7", "--out", "b.csv"]) == 0
    assert (workdir / "a.csv").read_bytes() == (workdir / "b.csv").read_bytes()
    assert len(read_event_file("a.csv")) == 30000


def test_simulate_jsonl_and_override(workdir):
    assert main(["simulate", "--config", "sim.cfg", "--n-events", "100", "--out", "a.jsonl"]) == 0
    assert len(read_event_file("a.jsonl")) == 100


def test_simulate_missing_config(workdir, capsys):
    assert main(["simulate", "--config", "nope.cfg", "--out", "x.csv"]) == 2
    assert "nope.cfg" in capsys.readouterr().err


def test_simulate_bad_config(workdir):
    (workdir / "bad.cfg").write_text("limit_rate = 2\n")
    assert main(["simulate", "--config", "bad.cfg", "--out", "x.csv"]) == 2


def test_analyze_all_sections_ok(sim_log):
    assert main(["analyze", "ev.csv", "--dt", "100", "--out", "r.json"]) == 0
    rep = json.loads(open("r.json").read())
    assert rep["schema_version"] == 1
    assert {k: s["status"] for k, s in rep["sections"].items()} == dict.fromkeys(rep["sections"], "ok")
    for key in ("depth_correlation_dt100", "gamma_c", "eq1_dt100", "eq1_vs_dt", "timeshift",
                "fate_shares", "lifetimes", "spectra", "knudsen", "rolling_ratio"):
        assert key in rep["sections"]
    assert set(rep["sections"]["spectra"]["values"]["langevin"]) >= {"phi0", "delta", "mu"}
    for path in rep["manifest"]["outputs"]:
        assert open(path).read()


def test_analyze_fixed_gamma_is_echoed(sim_log):
    main(["analyze", "ev.csv", "--dt", "10", "--gamma-c", "18", "--out", "r.json"])
    rep = json.loads(open("r.json").read())
    assert rep["manifest"]["parameters"]["gamma_c"] == 18
    g = rep["sections"]["gamma_c"]["values"]
    assert g["mode"] == "fixed" and g["gamma_c_minus"] == g["gamma_c_plus"] == 18


def test_analyze_zero_deals(workdir):
    evs = [limit(i, i, Side.BUY, 1000 - i % 7) for i in range(50)]
    evs += [limit(50 + i, 100 + i, Side.SELL, 1001 + i % 5) for i in range(50)]
    write_event_file("quiet.csv", evs)
    assert main(["analyze", "quiet.csv", "--out", "q.json"]) == 0
    sec = json.loads(open("q.json").read())["sections"]
    assert sec["lifetimes"]["status"] == "insufficient_data"
    assert sec["spectra"]["status"] == "insufficient_data"


def test_analyze_missing_log(workdir):
    assert main(["analyze", "nope.csv", "--out", "q.json"]) == 2


def test_replay_error_exit(workdir, capsys):
    (workdir / "bad.csv").write_text(
        "timestamp_ms,order_id,action,side,price,qty_units\n0,1,MARKET,BUY,,1\n")
    assert main(["replay", "bad.csv"]) == 1
    assert "0" in capsys.readouterr().err


class UnitCounter(ReplayObserver):
    def __init__(self):
        self.net = 0
        self.at_tick = {}

    def on_delta(self, delta, book):
        if delta.kind is DeltaKind.ADD:
            self.net += 1
        elif delta.kind is DeltaKind.DEAL:
            self.net -= 1  # maker removed; the taker never rests
        else:
            self.net -= 1

    def on_tick_end(self, tick, book):
        self.at_tick[tick] = self.net


def _read_snapshot(path):
    with open(path, newline="") as fh:
        return [(price_to_pips(r["price"]), Side(r["side"]), int(r["units"])) for r in csv.DictReader(fh)]


def test_replay_snapshots(sim_log, capsys):
    evs = read_event_file("ev.csv")
    counter = UnitCounter()
    final = replay(evs, [counter])
    ticks = [0, 17, 1000, final.tick, final.tick + 5]
    rc = main(["replay", "ev.csv", "--snapshot-ticks", ",".join(map(str, ticks)), "--out-dir", "snaps",
               "--particles", "ledger.csv"])
    assert rc == 0
    assert f"tick {final.tick + 5}" in capsys.readouterr().err
    first_deal = next(i for i, e in enumerate(evs) if e.action.value == "MARKET" or
                      (e.action.value == "LIMIT" and replay(evs[:i + 1]).tick > 0))
    assert _read_snapshot("snaps/snapshot_tick0.csv") == replay(evs[:first_deal]).snapshot()
    assert _read_snapshot(f"snaps/snapshot_tick{final.tick}.csv") == final.snapshot()
    for t in ticks[:-1]:
        assert sum(u for _, _, u in _read_snapshot(f"snaps/snapshot_tick{t}.csv")) == counter.at_tick[t]
    tracker, _ = track(evs, record_profile=False)
    with open("ledger.csv") as fh:
        assert sum(1 for _ in fh) == 1 + len(tracker.particles)


def test_analyze_missing_class_is_skipped_with_warning(sim_log):
    main(["analyze", "ev.csv", "--dt", "100", "--gamma-c", "18", "--out", "r.json"])
    lt = json.loads(open("r.json").read())["sections"]["lifetimes"]
    assert lt["status"] == "ok" and "no a_oi particles" in lt["message"]
    assert lt["values"]["a_ii"]["exp_mean"] > 0
