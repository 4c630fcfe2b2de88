"""Delimited-text dataset, forecast and config files."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .exceptions import DataFileError
from .frame import TimeSeriesFrame

MEMBER_PREFIX = "m:"
FORECAST_COLUMNS = ["timestamp", "quantile_value", "level", "cdf_residual"]


@dataclass
class Dataset:
    timestamps: list
    target: np.ndarray | None
    members: dict = field(default_factory=dict)

    @property
    def member_names(self) -> list:
        return list(self.members)

    def member_matrix(self, names=None) -> np.ndarray:
        names = self.member_names if names is None else names
        return np.column_stack([self.members[n] for n in names])

    def to_frame(self, q: float) -> TimeSeriesFrame:
        if self.target is None:
            raise DataFileError("dataset has no target column 'y'")
        names = self.member_names
        return TimeSeriesFrame(self.timestamps, self.target, self.member_matrix(names), q, names)


def check_timestamp(value: str) -> str:
    text = value.strip()
    probe = text[:-1] + "+00:00" if text.endswith("Z") else text
    try:
        datetime.fromisoformat(probe)
    except ValueError as err:
        raise ValueError(f"not an ISO-8601 timestamp: {value!r}") from err
    return text


def _number(text: str, line: int, column: str) -> float:
    try:
        x = float(text)
    except ValueError:
        raise DataFileError(f"line {line}, column {column!r}: non-numeric value {text!r}") from None
    if not math.isfinite(x):
        raise DataFileError(f"line {line}, column {column!r}: non-finite value {text!r}")
    return x


def _read_rows(path):
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as err:
        raise DataFileError(f"cannot open {path}: {err.strerror}") from err
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFileError(f"{path}: empty file, header required") from None
        header = [h.strip() for h in header]
        rows = []
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataFileError(f"line {reader.line_num}: expected {len(header)} cells, found {len(row)}")
            rows.append((reader.line_num, [c.strip() for c in row]))
    if len(set(header)) != len(header):
        raise DataFileError(f"{path}: duplicate column names in header")
    return header, rows


def _timestamps(rows, col):
    stamps = []
    for line, row in rows:
        try:
            stamps.append(check_timestamp(row[col]))
        except ValueError as err:
            raise DataFileError(f"line {line}, column 'timestamp': {err}") from None
        if len(stamps) > 1 and stamps[-1] <= stamps[-2]:
            raise DataFileError(f"line {line}, column 'timestamp': timestamps must be strictly increasing")
    return stamps


def read_dataset(path, require_target: bool = True, require_members: bool = True) -> Dataset:
    """Read ``timestamp, y, m:<label>...`` columns; other columns are ignored."""
    header, rows = _read_rows(path)
    if "timestamp" not in header:
        raise DataFileError(f"{path}: missing required column 'timestamp'")
    members = [h for h in header if h.startswith(MEMBER_PREFIX)]
    if require_target and "y" not in header:
        raise DataFileError(f"{path}: missing required column 'y'")
    if require_members and not members:
        raise DataFileError(f"{path}: no member columns (named 'm:<label>')")
    if require_target and require_members and len(header) < 3:
        raise DataFileError(f"{path}: need at least 3 columns")
    if not rows:
        raise DataFileError(f"{path}: no data rows")

    stamps = _timestamps(rows, header.index("timestamp"))
    target = None
    if "y" in header:
        j = header.index("y")
        target = np.array([_number(r[j], line, "y") for line, r in rows])
    cols = {}
    for name in members:
        j = header.index(name)
        label = name[len(MEMBER_PREFIX):]
        if not label:
            raise DataFileError(f"{path}: member column with empty label")
        cols[label] = np.array([_number(r[j], line, name) for line, r in rows])
    return Dataset(stamps, target, cols)


def read_forecast(path):
    """Read a forecast file; returns ``(timestamps, values, levels)``."""
    header, rows = _read_rows(path)
    for col in ("timestamp", "quantile_value"):
        if col not in header:
            raise DataFileError(f"{path}: missing required column {col!r}")
    stamps = _timestamps(rows, header.index("timestamp"))
    j = header.index("quantile_value")
    values = np.array([_number(r[j], line, "quantile_value") for line, r in rows])
    levels = None
    if "level" in header:
        j = header.index("level")
        levels = np.array([_number(r[j], line, "level") for line, r in rows])
    return stamps, values, levels


def fmt(x: float) -> str:
    return repr(float(x))


def write_forecast(fh, forecasts) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(FORECAST_COLUMNS)
    for f in forecasts:
        w.writerow([f.horizon_label, fmt(f.quantile_value), fmt(f.level), fmt(f.cdf_residual)])


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise DataFileError(f"cannot read config {path}: {err.strerror}") from err
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataFileError(f"{path}: line {n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise DataFileError(f"{path}: line {n}: empty key")
        out[key.replace("-", "_")] = value
    return out


def hourly_timestamps(n: int, start: str = "2024-01-01T00:00:00") -> list:
    t0 = datetime.fromisoformat(start)
    return [(t0 + timedelta(hours=i)).isoformat() for i in range(n)]


def write_dataset(path, timestamps, target, members: dict) -> None:
    """Write ``timestamp, y, m:<label>...``; ``target=None`` omits ``y``."""
    names = list(members)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp"] + ([] if target is None else ["y"]) + [MEMBER_PREFIX + n for n in names])
        for i, ts in enumerate(timestamps):
            row = [ts] + ([] if target is None else [fmt(target[i])])
            w.writerow(row + [fmt(members[n][i]) for n in names])
