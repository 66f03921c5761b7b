"""Reading series, building regression pairs, and writing bands and curves."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AllRowsInvalid, ColumnNotFound, EmptyData, FileNotFound, IoError, SeriesTooShort

DEFAULT_DELTA = 1.0 / 250.0
CSV_DIGITS = 12
# config keys that never enter the reproducibility hash
VOLATILE_KEYS = {"timestamp", "path", "paths", "input_path", "output", "output_dir", "out",
                 "dump"}


@dataclass
class LoadedSeries:
    values: np.ndarray
    dropped: int
    total: int
    path: str
    column: str

    def __len__(self):
        return self.values.size

    def to_dict(self) -> dict:
        return {"path": self.path, "column": self.column, "rows": self.total,
                "kept": int(self.values.size), "dropped": self.dropped}


def _parse_float(s: str):
    try:
        v = float(s)
    except (TypeError, ValueError):
        return None
    return v if math.isfinite(v) else None


def read_table(path, delim: str = ",") -> tuple[list[str], list[list[str]]]:
    p = Path(path)
    if not p.is_file():
        raise FileNotFound(f"no such file: {path}")
    with p.open(newline="") as fh:
        rows = list(csv.reader(fh, delimiter=delim))
    if not rows:
        raise EmptyData(f"{path} is empty; a header row is required")
    header = [h.strip() for h in rows[0]]
    return header, rows[1:]


def load_columns(path, columns, delim: str = ",") -> tuple[list[np.ndarray], int, int]:
    """Numeric columns by header name; a row is dropped if any requested cell is bad.

    Row order is preserved. Returns (arrays, dropped, total rows).
    """
    header, rows = read_table(path, delim)
    idx = []
    for c in columns:
        if c not in header:
            raise ColumnNotFound(f"column {c!r} not in header {header}")
        idx.append(header.index(c))
    out = [[] for _ in columns]
    dropped = 0
    for row in rows:
        vals = [_parse_float(row[i]) if i < len(row) else None for i in idx]
        if any(v is None for v in vals):
            dropped += 1
            continue
        for acc, v in zip(out, vals):
            acc.append(v)
    if rows and not out[0]:
        raise AllRowsInvalid(f"no valid numeric rows for {list(columns)} in {path}")
    if not rows:
        raise EmptyData(f"{path} has a header but no data rows")
    return [np.asarray(a, dtype=float) for a in out], dropped, len(rows)


def load_series(path, column: str, delim: str = ",") -> LoadedSeries:
    """One numeric column; blank or non-numeric cells are dropped and counted."""
    (values,), dropped, total = load_columns(path, [column], delim)
    return LoadedSeries(values, dropped, total, str(path), column)


@dataclass
class DiffusionDataset:
    """Regression pairs X_i = R_i, Y_i = R_{i+1} - R_i from a sampled rate path.

    The time step is absorbed into the drift and variance (mu Delta and
    sigma^2 Delta); :meth:`per_annum_mu` and :meth:`per_annum_sigma2` undo it.
    """

    raw: np.ndarray
    x: np.ndarray
    y: np.ndarray
    delta: float
    provenance: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.x.size

    def per_annum_mu(self, values):
        return np.asarray(values) / self.delta

    def per_annum_sigma2(self, values):
        return np.asarray(values) / self.delta

    def to_dict(self) -> dict:
        return {"n": self.n, "delta": self.delta, "provenance": self.provenance,
                "convention": "delta absorbed: drift = mu*delta, variance = sigma^2*delta"}


def make_regression_pairs(series, delta: float = DEFAULT_DELTA, provenance=None
                          ) -> DiffusionDataset:
    if isinstance(series, LoadedSeries):
        provenance = provenance or series.to_dict()
        series = series.values
    r = np.asarray(series, dtype=float)
    if r.size < 2:
        raise SeriesTooShort(f"need at least 2 observations for pairs, got {r.size}")
    if not delta > 0:
        raise ValueError("time step delta must be positive")
    return DiffusionDataset(r, r[:-1].copy(), np.diff(r), float(delta), dict(provenance or {}))


def interval_coverage(x, interval) -> float:
    """Fraction of x inside the closed interval."""
    x = np.asarray(x, dtype=float)
    return float(np.mean((x >= interval[0]) & (x <= interval[1])))


def _fmt(v) -> str:
    return f"{v:.{CSV_DIGITS}g}"


def _write_text(path, text: str):
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _format_of(path, fmt):
    if fmt is not None:
        return fmt
    return "json" if str(path).endswith(".json") else "csv"


def dumps_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(obj, path):
    _write_text(path, dumps_json(obj))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def export_band(band, path, fmt: str | None = None, extra: dict | None = None):
    """CSV with columns x,center,lower,upper (12 significant digits) or full JSON."""
    if _format_of(path, fmt) == "json":
        d = band.to_dict()
        if extra:
            d.update(extra)
        write_json(d, path)
        return
    lines = ["x,center,lower,upper"]
    for row in zip(band.x, band.center, band.lower, band.upper):
        lines.append(",".join(_fmt(v) for v in row))
    _write_text(path, "\n".join(lines) + "\n")


def read_band_csv(path) -> dict:
    header, rows = read_table(path)
    data = np.array([[float(v) for v in r] for r in rows if r])
    return {h: data[:, i] for i, h in enumerate(header)}


def export_curve(curve, path, fmt: str | None = None):
    """CSV with columns x,value or JSON with grid, values and metadata."""
    if _format_of(path, fmt) == "json":
        write_json(curve.to_dict(), path)
        return
    lines = ["x,value"] + [f"{_fmt(a)},{_fmt(v)}" for a, v in zip(curve.x, curve.values)]
    _write_text(path, "\n".join(lines) + "\n")


def write_columns(path, columns: dict):
    names = list(columns)
    arrays = [np.asarray(columns[k], dtype=float) for k in names]
    lines = [",".join(names)]
    lines += [",".join(_fmt(v) for v in row) for row in zip(*arrays)]
    _write_text(path, "\n".join(lines) + "\n")


def _strip_volatile(obj):
    if isinstance(obj, dict):
        return {k: _strip_volatile(v) for k, v in obj.items()
                if k not in VOLATILE_KEYS and not k.endswith("_path")}
    if isinstance(obj, (list, tuple)):
        return [_strip_volatile(v) for v in obj]
    return obj


def config_hash(config: dict) -> str:
    """SHA-256 of the canonical JSON of ``config`` without paths or timestamps."""
    canon = json.dumps(_jsonable(_strip_volatile(config)), sort_keys=True,
                       separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()
