"""``lobfluid`` command line: simulate, replay, analyze.

Exit codes: 0 success, 1 replay or analysis failure, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from typing import Optional, Sequence

from lobfluid import __version__
from lobfluid.analysis import AnalysisParams, analyze, any_failed
from lobfluid.book import ReplayError, ReplayObserver, replay
from lobfluid.events import EventLogError, pips_to_price, read_event_file, write_event_file
from lobfluid.particles import LayerConfig, ParticleTracker, write_particle_ledger
from lobfluid.report import build_report, csv_paths, manifest, write_report
from lobfluid.synth import load_config, simulate

logger = logging.getLogger("lobfluid")


class UsageError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    try:
        values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _gamma_c(text: str):
    if text == "auto":
        return "auto"
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("gamma-c must be 'auto' or a positive integer")
    if value < 1:
        raise argparse.ArgumentTypeError("gamma-c must be >= 1")
    return value


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lobfluid", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"lobfluid {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic event log")
    p.add_argument("--config", required=True, help="key = value simulator config")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--n-events", type=int, help="overrides the config n_events")
    p.add_argument("--out", required=True, help="output log (.csv or .jsonl)")

    p = sub.add_parser("replay", help="replay a log and dump book snapshots")
    p.add_argument("events")
    p.add_argument("--snapshot-ticks", type=_int_list, default=[])
    p.add_argument("--out-dir", default=".")
    p.add_argument("--particles", help="write the particle ledger CSV here")
    p.add_argument("--gamma-c", type=_gamma_c, default=18, help="layer threshold for the ledger")

    p = sub.add_parser("analyze", help="compute the full statistics report")
    p.add_argument("events")
    p.add_argument("--dt", type=_int_list, default=[4, 10, 100])
    p.add_argument("--gamma-c", type=_gamma_c, default="auto")
    p.add_argument("--out", required=True, help="report JSON path; CSVs are written alongside")
    p.add_argument("--max-lag", type=int, default=100)
    p.add_argument("--rolling-window", type=int, default=1000)
    p.add_argument("--spectrum-window", type=int, default=256)
    p.add_argument("--spectrum-windows", type=int, default=200)
    p.add_argument("--lifetime-cutoff", type=float, default=10)
    p.add_argument("--cancels-annihilate", action="store_true",
                   help="count inner-layer cancels as annihilations")
    p.add_argument("--log-fit", action="store_true", help="fit the Lorentzian on log scale")
    p.add_argument("--workers", type=int, default=1)
    return parser


def cmd_simulate(args) -> int:
    if not os.path.isfile(args.config):
        raise UsageError(f"config file not found: {args.config}")
    try:
        cfg = load_config(args.config, seed=args.seed, n_events=args.n_events)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"bad config {args.config}: {exc}")
    write_event_file(args.out, simulate(cfg))
    logger.info("wrote %d events to %s", cfg.n_events, args.out)
    return 0


class _Snapshotter(ReplayObserver):
    def __init__(self, ticks, out_dir):
        self.pending = set(ticks)
        self.out_dir = out_dir
        self.written = []

    def on_tick_end(self, tick, book):
        if tick in self.pending:
            self.pending.discard(tick)
            path = os.path.join(self.out_dir, f"snapshot_tick{tick}.csv")
            with open(path, "w", encoding="utf-8", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["price", "side", "units"])
                for price, side, units in book.snapshot():
                    w.writerow([pips_to_price(price), side.value, units])
            self.written.append(path)


def _load(path):
    try:
        return read_event_file(path)
    except FileNotFoundError:
        raise UsageError(f"event log not found: {path}")
    except EventLogError as exc:
        raise UsageError(f"{path}: {exc}")


def cmd_replay(args) -> int:
    events = _load(args.events)
    os.makedirs(args.out_dir, exist_ok=True)
    snap = _Snapshotter(args.snapshot_ticks, args.out_dir)
    observers = [snap]
    tracker = None
    if args.particles:
        gc = 18 if args.gamma_c == "auto" else args.gamma_c
        tracker = ParticleTracker(LayerConfig.symmetric(gc), record_profile=False)
        observers.append(tracker)
    book = replay(events, observers)
    for tick in sorted(snap.pending):
        print(f"warning: tick {tick} beyond final tick {book.tick}; skipped", file=sys.stderr)
    if tracker is not None:
        with open(args.particles, "w", encoding="utf-8", newline="") as fh:
            write_particle_ledger(tracker.particles, fh)
    return 0


def cmd_analyze(args) -> int:
    events = _load(args.events)
    params = AnalysisParams(
        dts=args.dt, gamma_c=args.gamma_c, max_lag=args.max_lag, rolling_window=args.rolling_window,
        spectrum_window=args.spectrum_window, spectrum_windows=args.spectrum_windows,
        lifetime_cutoff=args.lifetime_cutoff, cancels_annihilate=args.cancels_annihilate,
        log_scale_fit=args.log_fit, workers=args.workers)
    result = analyze(events, params)
    man = manifest("analyze", [args.events], params.as_dict(), [args.out])
    report = build_report(result, man)
    report["manifest"]["outputs"] += sorted(csv_paths(report, args.out).values())
    write_report(report, args.out)
    if any_failed(report):
        failed = [k for k, s in report["sections"].items() if s["status"] == "failed"]
        print(f"analysis sections failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


COMMANDS = {"simulate": cmd_simulate, "replay": cmd_replay, "analyze": cmd_analyze}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"lobfluid: error: {exc}", file=sys.stderr)
        return 2
    except ReplayError as exc:
        print(f"lobfluid: replay failed at {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
