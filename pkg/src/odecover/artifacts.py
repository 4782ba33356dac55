"""CSV and JSON artifacts.

Outputs are byte-stable: floats are written with ``repr`` (shortest round-trip
form), JSON keys are sorted, and line endings are ``\\n``.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from .experiment import RunRecord

RUN_COLUMNS = ("n", "rep", "seed", "method", "mse", "failed")
BOUND_COLUMNS = ("formula", "delta", "gamma", "value")
SERIES_COLUMNS = ("gamma", "series_name", "value")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if hasattr(v, "item"):  # numpy scalar
        return _cell(v.item())
    return str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def json_text(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True, allow_nan=True) + "\n"


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if hasattr(v, "tolist"):
        return v.tolist()
    return v


def write_text(path, text: str) -> Path:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def write_csv(path, header, rows) -> Path:
    return write_text(path, csv_text(header, rows))


def write_json(path, obj) -> Path:
    return write_text(path, json_text(obj))


def read_csv(path) -> tuple:
    """``(header, rows)`` with every cell as a string."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    return tuple(rows[0]), rows[1:]


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# --------------------------------------------------------------- run records

def run_rows(records) -> list:
    return [(r.n, r.rep, r.seed, r.method, r.mse, r.failed) for r in records]


def run_dicts(records) -> list:
    return [
        {"n": r.n, "rep": r.rep, "seed": r.seed, "method": r.method, "mse": r.mse,
         "failed": r.failed, "config_hash": r.config_hash, "wall_time": r.wall_time,
         "diagnostics": r.diagnostics, "error": r.error}
        for r in records
    ]


def _bool(text: str) -> bool:
    if text not in ("true", "false"):
        raise ValueError(f"expected true/false, got {text!r}")
    return text == "true"


def _record_from_dict(d: dict) -> RunRecord:
    mse = d.get("mse")
    return RunRecord(
        n=int(d["n"]), rep=int(d["rep"]), seed=int(d["seed"]), method=str(d["method"]),
        mse=None if mse in (None, "") else float(mse),
        failed=d["failed"] if isinstance(d["failed"], bool) else _bool(d["failed"]),
        config_hash=d.get("config_hash", ""), wall_time=float(d.get("wall_time", 0.0)),
        diagnostics=d.get("diagnostics", {}), error=d.get("error", ""),
    )


def read_runs(path) -> list:
    """Parse ``runs.csv`` or a JSON array of run records."""
    path = Path(path)
    if path.suffix == ".json":
        return [_record_from_dict(d) for d in read_json(path)]
    header, rows = read_csv(path)
    if header != RUN_COLUMNS:
        raise ValueError(f"unexpected run header {header}")
    return [_record_from_dict(dict(zip(header, row))) for row in rows]


# ------------------------------------------------------------ bound tables

def bound_rows(reports) -> tuple:
    """``(header, rows)``: formula, delta, gamma, value, then the terms in formula order."""
    width = max((len(r.terms) for r in reports), default=0)
    header = BOUND_COLUMNS + tuple(f"term_{i}" for i in range(1, width + 1))
    rows = []
    for r in reports:
        terms = list(r.terms.values())
        rows.append([r.formula, r.delta, r.minimizing_gamma, r.value] + terms + [None] * (width - len(terms)))
    return header, rows


def series_rows(series) -> list:
    """Long-format rows ``(gamma, series_name, value)`` of a figure series."""
    return [tuple(r) for r in series.long_rows()]


# ----------------------------------------------------------------- dispatch

def emit(obj, fmt: str, path) -> Path:
    """Write records, bound reports or figure series as CSV or JSON."""
    if fmt not in ("csv", "json"):
        raise ValueError("format must be csv or json")
    items = list(obj) if isinstance(obj, (list, tuple)) else None
    if items is not None and (not items or isinstance(items[0], RunRecord)):
        if fmt == "csv":
            return write_csv(path, RUN_COLUMNS, run_rows(items))
        return write_json(path, run_dicts(items))
    if items is not None and hasattr(items[0], "terms"):
        if fmt == "csv":
            return write_csv(path, *bound_rows(items))
        return write_json(path, [r.to_dict() for r in items])
    if hasattr(obj, "long_rows"):
        rows = series_rows(obj)
        if fmt == "csv":
            return write_csv(path, SERIES_COLUMNS, rows)
        return write_json(path, [dict(zip(SERIES_COLUMNS, r)) for r in rows])
    if items is not None and isinstance(items[0], dict):
        header = list(items[0])
        if fmt == "csv":
            return write_csv(path, header, [[d.get(k) for k in header] for d in items])
        return write_json(path, items)
    if hasattr(obj, "to_dict") and fmt == "json":
        return write_json(path, obj.to_dict())
    if isinstance(obj, dict) and fmt == "json":
        return write_json(path, obj)
    raise TypeError(f"cannot emit {type(obj).__name__} as {fmt}")
