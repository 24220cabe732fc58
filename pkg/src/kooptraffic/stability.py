"""Rolling-window spectral monitoring of queue growth.

A delay-embedded DMD model is fitted to each trailing window of queue
samples.  When the dominant eigenvalue leaves the unit circle the queue is
growing; a run of such windows longer than a threshold flags an abnormal
event.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dmd import SnapshotMatrix, fit_dmd, hankel_augment, spectral_radius
from .errors import InsufficientDataError, RankZeroError, ValidationError


@dataclass(frozen=True)
class InstabilityParams:
    window: int
    h: int
    rank: int
    threshold: int
    stride: int
    guard: float = 0.0


@dataclass(frozen=True)
class InstabilityTrace:
    """Per-window dominant eigenvalue modulus and consecutive-unstable counter.

    ``times[i]`` is the index of the last sample in window ``i``.
    """

    times: np.ndarray
    lambda1_mag: np.ndarray
    counter: np.ndarray
    flags: np.ndarray
    params: InstabilityParams
    dt: float = 1.0

    def __len__(self) -> int:
        return self.times.size

    def durations(self) -> np.ndarray:
        """Counter values converted to seconds of sustained growth."""
        return self.counter * self.params.stride * self.dt


def count_unstable(lambda1_mag, limit: float = 1.0) -> np.ndarray:
    """Running count of consecutive entries strictly above ``limit``."""
    mags = np.asarray(lambda1_mag, dtype=float)
    out = np.zeros(mags.size, dtype=np.int64)
    ctr = 0
    for i, m in enumerate(mags):
        ctr = ctr + 1 if m > limit else 0
        out[i] = ctr
    return out


def window_spectral_radius(values: np.ndarray, h: int, rank: int) -> float:
    """Dominant eigenvalue modulus of one delay-embedded window (0 if the data are all zero)."""
    emb = hankel_augment(values, h)
    try:
        model = fit_dmd(emb.x1, emb.x2, rank=rank, materialize=False)
    except RankZeroError:
        return 0.0
    return spectral_radius(model)[1]


def rolling_instability(queues: SnapshotMatrix, window_N: int = 180, h: int = 10,
                        rank: int = 10, threshold: int = 30, stride: int = 1,
                        guard: float = 0.0) -> InstabilityTrace:
    """Instability trace of a queue series.

    Windows of ``window_N`` samples end at indices ``window_N - 1``,
    ``window_N - 1 + stride``, ...  The counter increments while the
    dominant modulus exceeds ``1 + guard`` and resets otherwise; windows
    whose counter exceeds ``threshold`` are flagged.
    """
    if rank < 1:
        raise ValidationError(f"rank cap must be >= 1, got {rank}")
    if stride < 1:
        raise ValidationError("stride must be >= 1")
    if window_N > queues.n_steps:
        raise InsufficientDataError(
            f"window of {window_N} samples is longer than the series ({queues.n_steps})")
    if h >= window_N:
        raise ValidationError(f"delay count {h} must be smaller than the window {window_N}")
    X = queues.values
    ends = np.arange(window_N - 1, queues.n_steps, stride)
    mags = np.array([window_spectral_radius(X[:, e - window_N + 1:e + 1], h, rank) for e in ends])
    counter = count_unstable(mags, 1.0 + guard)
    return InstabilityTrace(
        times=ends,
        lambda1_mag=mags,
        counter=counter,
        flags=counter > threshold,
        params=InstabilityParams(window_N, h, rank, threshold, stride, guard),
        dt=queues.dt,
    )


def counter_to_duration(counter, stride: int = 1, dt: float = 10.0):
    """Seconds of sustained growth represented by a counter value."""
    return np.asarray(counter) * stride * dt if np.ndim(counter) else counter * stride * dt


def daily_heatmap(trace: InstabilityTrace, samples_per_day: int,
                  n_days: Optional[int] = None) -> np.ndarray:
    """Counter values arranged as day x time-of-day (NaN where no window ends)."""
    if samples_per_day < 1:
        raise ValidationError("samples_per_day must be positive")
    stride = trace.params.stride
    cols = -(-samples_per_day // stride)
    if n_days is None:
        n_days = int(trace.times.max() // samples_per_day) + 1 if len(trace) else 0
    out = np.full((n_days, cols), np.nan)
    day = trace.times // samples_per_day
    slot = (trace.times % samples_per_day) // stride
    ok = day < n_days
    out[day[ok], slot[ok]] = trace.counter[ok]
    return out
