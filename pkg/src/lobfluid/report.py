"""Deterministic JSON report and companion CSV files."""
from __future__ import annotations

import csv
import json
import math
from typing import Any

import numpy as np

from lobfluid import __version__

SCHEMA_VERSION = 1
SIG_DIGITS = 9


def _num(x: float):
    if not math.isfinite(x):
        return None
    return float(format(x, f".{SIG_DIGITS}g"))


def normalize(obj: Any) -> Any:
    """Convert numpy types to JSON scalars and round floats to 9 significant digits."""
    if isinstance(obj, dict):
        return {str(k): normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [normalize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [normalize(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(float(obj))
    return obj


def build_report(analysis: dict, manifest: dict) -> dict:
    return normalize({"schema_version": SCHEMA_VERSION, "manifest": manifest, **analysis})


def manifest(command: str, inputs: list[str], parameters: dict, outputs: list[str]) -> dict:
    return {"command": command, "inputs": inputs, "parameters": parameters,
            "tool": "lobfluid", "tool_version": __version__, "outputs": outputs}


def dumps(report: dict) -> str:
    return json.dumps(report, indent=1, allow_nan=False) + "\n"


def csv_paths(report: dict, json_path: str) -> dict[tuple[str, str], str]:
    stem = json_path[:-5] if json_path.endswith(".json") else json_path
    out = {}
    for name, sec in report["sections"].items():
        for sname in sec.get("series", {}):
            out[(name, sname)] = f"{stem}.{name}.{sname}.csv"
    return out


def _cell(v) -> str:
    return "" if v is None else (repr(v) if isinstance(v, float) else str(v))


def write_report(report: dict, json_path: str) -> list[str]:
    """Write the JSON document plus one CSV per named series; returns written paths."""
    paths = csv_paths(report, json_path)
    written = []
    for (name, sname), path in paths.items():
        cols = report["sections"][name]["series"][sname]
        keys = list(cols)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(keys)
            for row in zip(*(cols[k] for k in keys)):
                w.writerow([_cell(v) for v in row])
        written.append(path)
    with open(json_path, "w", encoding="utf-8") as fh:
        fh.write(dumps(report))
    return [json_path, *written]


def load_report(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
