"""CSV ingestion, time binning and CSV writers.

Three long-format schemas are used, one row per (timestamp, channel)::

    flows:  timestamp,movement,count
    queues: timestamp,leg,queue
    phases: timestamp,movement,state

Timestamps are seconds, millisecond precision.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .dmd import SnapshotMatrix
from .errors import ValidationError
from .movements import channel_sort_key, is_valid_channel

HEADERS = {
    "flows": ("timestamp", "movement", "count"),
    "queues": ("timestamp", "leg", "queue"),
    "phases": ("timestamp", "movement", "state"),
}
BIN_MODES = {"flows": "sum", "queues": "last", "phases": "last"}

PathLike = Union[str, Path]


@dataclass(frozen=True)
class RawEventTable:
    """Time-sorted long-format observations of one kind."""

    kind: str
    timestamps: np.ndarray
    channels: tuple
    values: np.ndarray

    def __len__(self) -> int:
        return self.timestamps.size

    @property
    def channel_set(self) -> list:
        return sorted(set(self.channels), key=channel_sort_key)


def _check_kind(kind: str) -> None:
    if kind not in HEADERS:
        raise ValidationError(f"unknown data kind {kind!r}; expected one of {sorted(HEADERS)}")


def load_csv(path: PathLike, kind: str) -> RawEventTable:
    """Parse, validate and time-sort one CSV file.

    Raises:
        ValidationError: wrong header, malformed row (with its line number),
            unknown channel or non-finite value.
    """
    _check_kind(kind)
    ts, chans, vals = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return RawEventTable(kind, np.empty(0), (), np.empty(0))
        if tuple(h.strip() for h in header) != HEADERS[kind]:
            raise ValidationError(
                f"{path}: header {','.join(header)!r} does not match {','.join(HEADERS[kind])!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise ValidationError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            try:
                t = float(row[0])
                v = float(row[2])
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: malformed number in {row!r}") from None
            if not (math.isfinite(t) and math.isfinite(v)):
                raise ValidationError(f"{path}:{lineno}: non-finite value")
            ch = row[1].strip()
            if not is_valid_channel(ch):
                raise ValidationError(f"{path}:{lineno}: unknown channel {ch!r}")
            ts.append(t)
            chans.append(ch)
            vals.append(v)
    t = np.asarray(ts, dtype=float)
    order = np.argsort(t, kind="stable")
    return RawEventTable(kind, t[order], tuple(chans[i] for i in order),
                         np.asarray(vals, dtype=float)[order])


def bin_values(table: RawEventTable, dt: float, mode: Optional[str] = None,
               t0: Optional[float] = None, n_bins: Optional[int] = None,
               channels: Optional[Sequence[str]] = None):
    """Binned ``(values, channels)`` without the two-column minimum of a snapshot matrix.

    ``sum`` mode adds the values falling in each bin and leaves empty bins
    at zero; ``last`` mode keeps the last observation in a bin and carries
    it forward through empty bins.  Bin ``j`` covers ``[t0 + j dt, t0 + (j+1) dt)``.
    """
    if not dt > 0:
        raise ValidationError("bin width must be positive")
    if len(table) == 0:
        raise ValidationError("cannot bin an empty table")
    mode = mode or BIN_MODES[table.kind]
    if mode not in ("sum", "last"):
        raise ValidationError(f"unknown binning mode {mode!r}")
    if t0 is None:
        t0 = math.floor(table.timestamps[0] / dt + 1e-9) * dt
    idx = np.floor((table.timestamps - t0) / dt + 1e-9).astype(np.int64)
    if (idx < 0).any():
        raise ValidationError("observations before the first bin")
    if n_bins is None:
        n_bins = int(idx.max()) + 1
    channels = tuple(table.channel_set if channels is None else channels)
    row_of = {c: i for i, c in enumerate(channels)}
    keep = np.array([c in row_of for c in table.channels]) & (idx < n_bins)
    rows = np.array([row_of.get(c, -1) for c in table.channels])[keep]
    cols = idx[keep]
    vals = table.values[keep]
    out = np.zeros((len(channels), n_bins))
    if mode == "sum":
        np.add.at(out, (rows, cols), vals)
        return out, channels
    seen = np.zeros_like(out, dtype=bool)
    # Rows are time-sorted, so later writes win.
    out[rows, cols] = vals
    seen[rows, cols] = True
    for r in range(out.shape[0]):
        hit = np.flatnonzero(seen[r])
        if hit.size == 0:
            continue
        # Carry the last observation forward; bins before the first stay 0.
        pos = np.searchsorted(hit, np.arange(n_bins), side="right") - 1
        ok = pos >= 0
        out[r, ok] = out[r, hit[pos[ok]]]
    return out, channels


def bin_series(table: RawEventTable, dt: float, mode: Optional[str] = None,
               t0: Optional[float] = None, n_bins: Optional[int] = None,
               channels: Optional[Sequence[str]] = None) -> SnapshotMatrix:
    """Bin a long-format table into a channel-by-time snapshot matrix.

    Flows default to ``sum`` mode, queues and phases to ``last`` mode; see
    :func:`bin_values`.
    """
    out, channels = bin_values(table, dt, mode=mode, t0=t0, n_bins=n_bins, channels=channels)
    return SnapshotMatrix(out, dt, channels)


def rebin(series: SnapshotMatrix, dt: float, mode: str = "last") -> SnapshotMatrix:
    """Aggregate a uniformly sampled matrix to a coarser step ``dt``."""
    factor = dt / series.dt
    k = int(round(factor))
    if k < 1 or abs(factor - k) > 1e-9:
        raise ValidationError(f"new step {dt} is not a multiple of {series.dt}")
    n = series.n_steps // k
    if n < 2:
        raise ValidationError("too few samples to re-bin")
    v = series.values[:, :n * k].reshape(series.n_channels, n, k)
    out = v.sum(axis=2) if mode == "sum" else v[:, :, -1]
    return SnapshotMatrix(out, dt, series.channel_labels)


def _fmt_time(t: float) -> str:
    s = f"{t:.3f}".rstrip("0").rstrip(".")
    return s if s else "0"


def write_csv(series: SnapshotMatrix, path: PathLike, kind: str, t0: float = 0.0,
              skip_zeros: bool = False) -> Path:
    """Write a matrix in the long-format schema of ``kind``.

    Column ``j`` is stamped at ``t0 + j * dt``.  Values are written with
    ``repr`` precision so a reload reproduces them exactly.
    """
    _check_kind(kind)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADERS[kind])
        for j in range(series.n_steps):
            ts = _fmt_time(t0 + j * series.dt)
            for label, v in zip(series.channel_labels, series.values[:, j]):
                if skip_zeros and v == 0:
                    continue
                w.writerow((ts, label, _fmt_value(v, kind)))
    return path


def _fmt_value(v: float, kind: str) -> str:
    if kind == "phases" or float(v).is_integer():
        return str(int(v))
    return repr(float(v))


def write_table(path: PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Plain CSV writer for analysis outputs."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(c) for c in row])
    return path


def _cell(c):
    if isinstance(c, (float, np.floating)):
        return repr(float(c))
    if isinstance(c, (np.integer,)):
        return int(c)
    if isinstance(c, (bool, np.bool_)):
        return int(c)
    return c
