"""CSV formats used by the command line harness.

Signals: one row per sample, one column per channel, a header row with the
channel names and an optional leading ``group`` column of integer labels.
Matrices: ``d`` header-less rows of ``d`` comma-separated values.
Series: two columns ``age,value`` (age in years before present), header optional.
Floats are written with 17 significant digits so files round-trip exactly.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

FLOAT_FMT = "%.17g"


class CsvFormatError(ValueError):
    """Malformed input file; the message names the file and row."""


def fmt_float(x) -> str:
    return FLOAT_FMT % float(x)


def write_signal_csv(path, X, group_labels=None, names=None) -> None:
    """Write a ``d x n`` signal as ``n`` rows; ``group_labels`` adds a leading column."""
    X = np.asarray(X, dtype=float)
    d, n = X.shape
    names = list(names) if names is not None else [f"x{i}" for i in range(d)]
    if len(names) != d:
        raise ValueError(f"{len(names)} channel names for {d} channels")
    header = ",".join(names)
    fmt = [FLOAT_FMT] * d
    cols = X.T
    if group_labels is not None:
        labels = np.asarray(group_labels)
        if labels.shape != (n,):
            raise ValueError(f"need {n} group labels, got shape {labels.shape}")
        header = "group," + header
        fmt = ["%d"] + fmt
        cols = np.column_stack([labels.astype(float), cols])
    np.savetxt(path, cols, delimiter=",", fmt=fmt, header=header, comments="")


def read_signal_csv(path):
    """Read a signal CSV; returns ``(X (d x n), group_labels or None, names)``."""
    path = Path(path)
    try:
        with path.open() as fh:
            header = fh.readline().strip()
    except OSError as exc:
        raise CsvFormatError(f"cannot read {path}: {exc.strerror}") from None
    if not header:
        raise CsvFormatError(f"{path}: missing header row")
    names = [h.strip() for h in header.split(",")]
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise CsvFormatError(f"{path}: {exc}") from None
    if data.shape[0] == 0:
        raise CsvFormatError(f"{path}: no data rows")
    if data.shape[1] != len(names):
        raise CsvFormatError(f"{path}: header has {len(names)} columns but rows have {data.shape[1]}")
    if not np.all(np.isfinite(data)):
        row = int(np.flatnonzero(~np.all(np.isfinite(data), axis=1))[0]) + 2
        raise CsvFormatError(f"{path}: non-finite value in row {row}")
    labels = None
    if names[0] == "group":
        labels = data[:, 0]
        if np.any(labels != np.round(labels)):
            raise CsvFormatError(f"{path}: group column must hold integers")
        labels = labels.astype(np.int64)
        data, names = data[:, 1:], names[1:]
    if not names:
        raise CsvFormatError(f"{path}: no channel columns")
    return np.ascontiguousarray(data.T), labels, names


def write_matrix_csv(path, M) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    np.savetxt(path, M, delimiter=",", fmt=FLOAT_FMT)


def read_matrix_csv(path) -> np.ndarray:
    try:
        M = np.loadtxt(path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise CsvFormatError(f"{path}: {exc}") from None
    if M.shape[0] != M.shape[1]:
        raise CsvFormatError(f"{path}: expected a square matrix, got {M.shape[0]} x {M.shape[1]}")
    return M


def read_series_csv(path):
    """Read a two-column ``age,value`` file; returns ``(ages, values)``.

    A first row that does not parse as numbers is taken as a header.
    Blank lines and lines starting with ``#`` are skipped.
    """
    path = Path(path)
    ages, values = [], []
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise CsvFormatError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        for row_no, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
                continue
            if len(row) != 2:
                raise CsvFormatError(f"{path}: row {row_no}: expected 2 columns (age, value), got {len(row)}")
            try:
                a, v = float(row[0]), float(row[1])
            except ValueError:
                if not ages and row_no == 1:
                    continue
                raise CsvFormatError(f"{path}: row {row_no}: cannot parse {row!r} as numbers") from None
            if not (np.isfinite(a) and np.isfinite(v)):
                raise CsvFormatError(f"{path}: row {row_no}: non-finite value")
            ages.append(a)
            values.append(v)
    if len(ages) < 4:
        raise CsvFormatError(f"{path}: need at least 4 data rows, got {len(ages)}")
    ages = np.array(ages)
    if np.unique(ages).size != ages.size:
        raise CsvFormatError(f"{path}: duplicate ages")
    return ages, np.array(values)


def write_rows_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def read_rows_csv(path) -> tuple:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        return header, [row for row in r]


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
