"""
Result writers: RFC-4180 CSV tables and deterministic JSON documents.

Floats are written with 9 significant digits. JSON has no inf/nan, so
non-finite floats are written as the strings "inf", "-inf" and "nan"
(load_config reads them back). No timestamps are written, so identical
runs produce identical files.
"""

import csv
import hashlib
import json
import math
import os
from collections.abc import Iterable, Mapping, Sequence

import numpy as np

SIGNIFICANT_DIGITS = 9


def format_float(value: float) -> str:
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.{SIGNIFICANT_DIGITS}g}"


def to_jsonable(obj):
    """Recursively converts results to JSON-safe values with 9-digit floats."""
    if isinstance(obj, Mapping):
        return {str(key): to_jsonable(value) for key, value in obj.items()}

    if isinstance(obj, (list, tuple, np.ndarray)):
        return [to_jsonable(value) for value in obj]

    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)

    if isinstance(obj, (int, np.integer)):
        return int(obj)

    if isinstance(obj, (float, np.floating)):
        text = format_float(obj)
        return text if text in ("inf", "-inf", "nan") else float(text)

    return obj


def config_fingerprint(config: Mapping) -> str:
    canonical = json.dumps(to_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def run_metadata(config: Mapping, version: str, command: str) -> dict:
    return {
        "command": command,
        "tool_version": version,
        "config": to_jsonable(config),
        "config_sha256": config_fingerprint(config),
    }


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def write_json(path: str, payload: Mapping) -> str:
    _ensure_parent(path)

    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(to_jsonable(payload), f, sort_keys=True, indent=2, ensure_ascii=False)
        f.write("\n")

    return os.path.abspath(path)


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    """Writes a CSV table; float cells use 9 significant digits."""
    _ensure_parent(path)

    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\r\n")
        writer.writerow(header)

        for row in rows:
            writer.writerow([
                format_float(cell) if isinstance(cell, (float, np.floating)) else cell
                for cell in row
            ])

    return os.path.abspath(path)


def sidecar_path(csv_path: str) -> str:
    """control_law.csv -> control_law.json"""
    stem, _ = os.path.splitext(csv_path)
    return stem + ".json"
