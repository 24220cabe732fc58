"""What-if queue reconstruction under alternative signal schedules.

A DMDc model fitted on leg queues (state) and movement phase bits (input)
is rolled forward under a synthetic schedule to see how queues respond to a
different green allocation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from .dmd import (DmdcModel, SnapshotMatrix, delay_stack, fit_dmdc, hankel_augment,
                  multi_step_reconstruct)
from .errors import DimensionError, ValidationError
from .movements import EAST_WEST, MOVEMENT_LABELS, NORTH_SOUTH, leg_of


@dataclass(frozen=True)
class PhaseSchedule:
    """Binary green/red matrix, one row per movement and one column per step.

    Yellow counts as green.  A movement of one barrier (E-W or N-S) is never
    green while a movement of the other barrier is.
    """

    values: np.ndarray
    dt: float
    labels: Tuple[str, ...] = MOVEMENT_LABELS
    green_fraction: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2 or v.shape[0] != len(self.labels):
            raise DimensionError(f"schedule of shape {v.shape} for {len(self.labels)} movements")
        if not np.isin(v, (0, 1)).all():
            raise ValidationError("schedule entries must be 0 or 1")
        v = v.astype(np.int8)
        if not self.dt > 0:
            raise ValidationError("dt must be positive")
        ew = np.array([leg_of(l) in EAST_WEST for l in self.labels])
        ns = np.array([leg_of(l) in NORTH_SOUTH for l in self.labels])
        if np.any(v[ew].any(axis=0) & v[ns].any(axis=0)):
            raise ValidationError("conflicting movements green at the same step")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "labels", tuple(self.labels))
        if not self.green_fraction:
            object.__setattr__(self, "green_fraction", _fractions(v, ew, ns))

    @property
    def n_steps(self) -> int:
        return self.values.shape[1]

    def as_snapshot(self) -> SnapshotMatrix:
        return SnapshotMatrix(self.values.astype(float), self.dt, self.labels)


def _fractions(v, ew, ns) -> Dict[str, float]:
    if v.shape[1] == 0:
        return {"EW": 0.0, "NS": 0.0}
    return {"EW": float(v[ew].any(axis=0).mean()), "NS": float(v[ns].any(axis=0).mean())}


def synth_phase_schedule(cycle: float, ew_green_pct: float, dt: float, steps: int) -> PhaseSchedule:
    """Periodic schedule giving all E-W movements ``ew_green_pct`` of each cycle.

    The E-W block comes first in each cycle and N-S movements are green for
    the remainder.  Block lengths are rounded to whole steps.
    """
    if not 0.0 <= ew_green_pct <= 1.0:
        raise ValidationError(f"green fraction must lie in [0, 1], got {ew_green_pct}")
    if dt > cycle:
        raise ValidationError(f"step {dt}s is longer than the cycle {cycle}s")
    period = int(round(cycle / dt))
    n_green = int(round(ew_green_pct * period))
    pos = np.arange(int(steps)) % period
    ew_on = pos < n_green
    values = np.zeros((len(MOVEMENT_LABELS), int(steps)), dtype=np.int8)
    for i, label in enumerate(MOVEMENT_LABELS):
        values[i] = ew_on if leg_of(label) in EAST_WEST else ~ew_on
    return PhaseSchedule(values=values, dt=dt,
                         green_fraction={"EW": ew_green_pct, "NS": 1.0 - ew_green_pct})


def downsample_schedule(schedule: PhaseSchedule, dt: float) -> PhaseSchedule:
    """Coarsen a schedule to step ``dt``; a bin is green if green for more than half of it.

    Ties count as red, so the coarse schedule never has both barriers green.
    """
    factor = dt / schedule.dt
    k = int(round(factor))
    if k < 1 or abs(factor - k) > 1e-9:
        raise ValidationError(f"new step {dt} is not a multiple of {schedule.dt}")
    n = schedule.n_steps // k
    if n < 1:
        raise DimensionError("schedule shorter than one coarse step")
    frac = schedule.values[:, :n * k].reshape(len(schedule.labels), n, k).mean(axis=2)
    return PhaseSchedule(values=(frac > 0.5).astype(np.int8), dt=dt, labels=schedule.labels)


def delay_inputs(schedule, h: int, steps: int) -> np.ndarray:
    """Delay-stacked input columns; column ``k`` holds ``u_k .. u_{k+h-1}``."""
    u = schedule.values if isinstance(schedule, PhaseSchedule) else np.atleast_2d(schedule)
    return delay_stack(np.asarray(u, dtype=float), h, steps)


def fit_queue_model(queues: SnapshotMatrix, schedule: PhaseSchedule, h: int = 12,
                    threshold: Optional[float] = 1e-10, rank: Optional[int] = None) -> DmdcModel:
    """Fit DMDc on delay-embedded leg queues with delay-embedded phase inputs."""
    if schedule.n_steps < queues.n_steps - 1:
        raise DimensionError("schedule is shorter than the queue record")
    emb = hankel_augment(queues, h)
    n_cols = emb.x1.shape[1]
    U_in = delay_inputs(schedule.values[:, :queues.n_steps - 1], h, n_cols)
    labels = tuple(f"{l}[{i}]" for i in range(h) for l in schedule.labels)
    return fit_dmdc(emb.x1, emb.x2, U_in, rank=rank, threshold=threshold, dt=queues.dt,
                    input_labels=labels, delays=h)


def initial_state(queues: SnapshotMatrix, h: int, start: int = 0) -> np.ndarray:
    """Delay state ``[x_start; ...; x_{start+h-1}]``."""
    return queues.values[:, start:start + h].T.ravel()


@dataclass(frozen=True)
class WhatIfResult:
    raw: np.ndarray
    clamped: np.ndarray
    schedule: PhaseSchedule

    @property
    def steps(self) -> int:
        return self.raw.shape[1]


def what_if_reconstruct(model: DmdcModel, x1, schedule: PhaseSchedule,
                        steps: Optional[int] = None) -> WhatIfResult:
    """Roll the queue model forward under ``schedule``.

    ``x1`` is either the full delay state or a single queue vector, which is
    then held constant over the delay history.  The result holds the newest
    queue block of each predicted state, raw and clamped at zero.
    """
    h = model.delays
    M = model.base_channels
    x1 = np.asarray(x1, dtype=float).ravel()
    if x1.size == M and h > 1:
        x1 = np.tile(x1, h)
    if steps is None:
        steps = schedule.n_steps - h + 1
    if steps < 0 or schedule.n_steps < steps + h - 1:
        raise DimensionError(
            f"schedule of {schedule.n_steps} steps is too short for a {steps}-step horizon")
    U = delay_inputs(schedule, h, steps)
    traj = multi_step_reconstruct(model, x1, steps, inputs=U)
    newest = traj[-M:]
    return WhatIfResult(raw=newest, clamped=np.maximum(newest, 0.0), schedule=schedule)


@dataclass(frozen=True)
class InputEffects:
    """Sign classification of the input operator's last block of rows."""

    values: np.ndarray
    signs: np.ndarray
    row_labels: Tuple[str, ...]
    col_labels: Tuple[str, ...]
    tol: float

    def sign(self, row: str, col: str) -> int:
        return int(self.signs[self.row_labels.index(row), self.col_labels.index(col)])

    def counts(self) -> Dict[str, int]:
        return {"increase": int((self.signs > 0).sum()),
                "neutral": int((self.signs == 0).sum()),
                "decrease": int((self.signs < 0).sum())}


def input_effect_rows(model: DmdcModel, row_labels: Optional[Sequence[str]] = None,
                      rel_tol: float = 1e-6) -> InputEffects:
    """Classify each entry of the last ``d1`` rows of ``B`` as +1, 0 or -1.

    Entries within ``rel_tol * max|B|`` of zero are neutral.
    """
    B = model.input_operator
    d1 = model.base_channels
    rows = B[-d1:]
    bmax = float(np.abs(B).max()) if B.size else 0.0
    tol = rel_tol * bmax
    signs = np.where(rows > tol, 1, np.where(rows < -tol, -1, 0)).astype(np.int8)
    if row_labels is None:
        row_labels = tuple(f"x{i}" for i in range(d1))
    col_labels = model.input_labels or tuple(f"u{j}" for j in range(B.shape[1]))
    return InputEffects(values=rows.copy(), signs=signs, row_labels=tuple(row_labels),
                        col_labels=tuple(col_labels), tol=tol)
