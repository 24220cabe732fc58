"""Seedable fixed-time signalized intersection simulator.

Each movement is a point queue: Poisson arrivals, discharge at the
saturation flow while green, nothing on red.  Output flows are departure
counts, so the data carry the signal timing that the analyses try to
recover.  A two-intersection corridor feeds a fraction of one
intersection's departures, delayed by the link travel time, into an
approach of the other.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence, Tuple

import numpy as np

from .control import PhaseSchedule
from .dmd import SnapshotMatrix
from .errors import ValidationError
from .movements import CORRIDOR_LEG_ORDER, EAST_WEST, LEGS, MOVEMENT_LABELS, leg_of
from .timing import TimingPlan


class ScheduleQuantizationWarning(UserWarning):
    """Phase boundaries do not fall on step boundaries."""


@dataclass(frozen=True)
class RateWindow:
    """Time window in which selected movements have scaled arrival or service rates."""

    start: float
    end: float
    movements: Tuple[str, ...]
    arrival_factor: float = 1.0
    service_divisor: float = 1.0

    def __post_init__(self):
        if self.end <= self.start:
            raise ValidationError(f"inverted window ({self.start}, {self.end})")
        if self.arrival_factor < 0 or self.service_divisor <= 0:
            raise ValidationError("arrival factor must be >= 0 and service divisor > 0")


@dataclass(frozen=True)
class IntersectionConfig:
    """Demand, capacity and signal plan of one intersection.

    ``arrival_rates`` are vehicles per second per movement; ``capacity`` caps
    each movement queue (arrivals beyond it are turned away).
    ``plan_changes`` switches to another plan at the given simulation time;
    ``split_jitter`` perturbs the LT/T boundaries (seconds, uniform) from
    cycle to cycle, like an actuated controller would.
    """

    plan: TimingPlan
    arrival_rates: Mapping[str, float]
    saturation_flow: float = 0.5
    capacity: float = 60.0
    seed: int = 0
    plan_changes: Tuple[Tuple[float, TimingPlan], ...] = ()
    rate_windows: Tuple[RateWindow, ...] = ()
    split_jitter: float = 0.0
    offset: float = 0.0

    def __post_init__(self):
        rates = {m: float(self.arrival_rates.get(m, 0.0)) for m in MOVEMENT_LABELS}
        unknown = set(self.arrival_rates) - set(MOVEMENT_LABELS)
        if unknown:
            raise ValidationError(f"unknown movements {sorted(unknown)}")
        if any(r < 0 for r in rates.values()):
            raise ValidationError("arrival rates must be nonnegative")
        if not self.saturation_flow > 0:
            raise ValidationError("saturation flow must be positive")
        if not self.capacity > 0:
            raise ValidationError("capacity must be positive")
        if self.split_jitter < 0:
            raise ValidationError("split jitter must be nonnegative")
        object.__setattr__(self, "arrival_rates", rates)
        object.__setattr__(self, "plan_changes", tuple(sorted(self.plan_changes, key=lambda p: p[0])))


def default_arrival_rates(plan: TimingPlan, saturation_flow: float = 0.5, vc: float = 0.7,
                          rt_vc: Optional[float] = None) -> dict:
    """Arrival rates giving volume/capacity ratio ``vc`` on every timed movement."""
    rt_vc = vc / 2 if rt_vc is None else rt_vc
    windows = plan.green_windows()
    rates = {}
    for label, (g0, g1) in windows.items():
        share = (g1 - g0) / plan.cycle
        ratio = rt_vc if label.endswith("RT") else vc
        rates[label] = ratio * saturation_flow * share
    return rates


def _plan_at(config: IntersectionConfig, t: np.ndarray):
    """Index into ``[plan] + changes`` of the plan active at each time."""
    starts = np.array([0.0] + [p[0] for p in config.plan_changes])
    return np.searchsorted(starts, t, side="right") - 1, starts


def ring_barrier_schedule(plan: TimingPlan, dt: float, steps: int, offset: float = 0.0,
                          jitter: float = 0.0, rng: Optional[np.random.Generator] = None,
                          t0: float = 0.0) -> PhaseSchedule:
    """Binary schedule realizing a ring-and-barrier plan.

    In each cycle the E-W barrier runs first (left turns, then throughs),
    then the N-S barrier.  A step takes the phase active at its midpoint, so
    boundaries off the step grid are rounded to the nearest step.
    """
    if not dt > 0:
        raise ValidationError("dt must be positive")
    C = plan.cycle
    edges = np.cumsum((0.0,) + plan.splits)
    if any(abs(e / dt - round(e / dt)) > 1e-9 for e in edges):
        warnings.warn(f"plan boundaries are not multiples of dt={dt}s; rounding to nearest step",
                      ScheduleQuantizationWarning, stacklevel=2)
    t = t0 + (np.arange(int(steps)) + 0.5) * dt + offset
    cycle_idx = np.floor(t / C).astype(np.int64)
    pos = t - cycle_idx * C
    return _schedule_from_positions(plan, pos, cycle_idx, dt, jitter, rng)


def _schedule_from_positions(plan, pos, cycle_idx, dt, jitter, rng) -> PhaseSchedule:
    a, b, c, d = plan.splits
    bound_ew = np.full(pos.shape, a)
    bound_ns = np.full(pos.shape, a + b + c)
    if jitter > 0:
        rng = rng if rng is not None else np.random.default_rng(0)
        uniq, inv = np.unique(cycle_idx, return_inverse=True)
        shifts = rng.uniform(-jitter, jitter, size=(len(uniq), 2))
        bound_ew = np.clip(a + shifts[inv, 0], 0.0, a + b)
        bound_ns = np.clip(a + b + c + shifts[inv, 1], a + b, a + b + c + d)
    ew_lt = pos < bound_ew
    ew_t = (pos >= bound_ew) & (pos < a + b)
    ns_lt = (pos >= a + b) & (pos < bound_ns)
    ns_t = pos >= bound_ns
    values = np.zeros((len(MOVEMENT_LABELS), pos.size), dtype=np.int8)
    for i, label in enumerate(MOVEMENT_LABELS):
        ew = leg_of(label) in EAST_WEST
        if label.endswith("LT"):
            values[i] = ew_lt if ew else ns_lt
        else:
            values[i] = ew_t if ew else ns_t
    return PhaseSchedule(values=values, dt=dt)


def build_schedule(config: IntersectionConfig, duration: float, dt: float) -> PhaseSchedule:
    """Schedule for a whole simulation, honouring plan changes."""
    steps = int(round(duration / dt))
    if not config.plan_changes:
        rng = np.random.Generator(np.random.Philox(key=config.seed + 1))
        return ring_barrier_schedule(config.plan, dt, steps, offset=config.offset,
                                     jitter=config.split_jitter, rng=rng)
    t = (np.arange(steps) + 0.5) * dt
    which, starts = _plan_at(config, t)
    plans = [config.plan] + [p[1] for p in config.plan_changes]
    values = np.zeros((len(MOVEMENT_LABELS), steps), dtype=np.int8)
    for j, plan in enumerate(plans):
        sel = which == j
        if not sel.any():
            continue
        rng = np.random.Generator(np.random.Philox(key=config.seed + 1 + j))
        # Each plan restarts its cycle at the moment it takes over.
        local = t[sel] - starts[j] + config.offset
        cyc = np.floor(local / plan.cycle).astype(np.int64)
        sched = _schedule_from_positions(plan, local - cyc * plan.cycle, cyc, dt,
                                         config.split_jitter, rng)
        values[:, sel] = sched.values
    return PhaseSchedule(values=values, dt=dt)


def inject_incident(config: IntersectionConfig, window: Tuple[float, float], factor: float,
                    mode: str = "service", movements: Optional[Sequence[str]] = None,
                    duration: Optional[float] = None) -> IntersectionConfig:
    """Config with an incident that scales the affected movements inside ``window``.

    ``mode="service"`` divides the saturation flow by ``factor``;
    ``mode="arrival"`` multiplies the arrival rates.  Affected movements
    default to all E-W movements.
    """
    start, end = window
    if end <= start:
        raise ValidationError(f"inverted incident window {window}")
    if start < 0 or (duration is not None and end > duration):
        raise ValidationError(f"incident window {window} outside the simulated duration")
    if movements is None:
        movements = tuple(m for m in MOVEMENT_LABELS if leg_of(m) in EAST_WEST)
    if mode == "service":
        rw = RateWindow(start, end, tuple(movements), service_divisor=factor)
    elif mode == "arrival":
        rw = RateWindow(start, end, tuple(movements), arrival_factor=factor)
    else:
        raise ValidationError(f"unknown incident mode {mode!r}")
    return replace(config, rate_windows=config.rate_windows + (rw,))


@dataclass(frozen=True)
class SimulationResult:
    flows: SnapshotMatrix
    queues: SnapshotMatrix
    schedule: PhaseSchedule
    arrivals: np.ndarray
    dropped: np.ndarray

    def leg_queues(self, order: Sequence[str] = LEGS, suffix: str = "") -> SnapshotMatrix:
        """Queues summed over each leg's movements."""
        q = self.queues.values
        rows = [q[[i for i, m in enumerate(MOVEMENT_LABELS) if leg_of(m) == leg]].sum(axis=0)
                for leg in order]
        return SnapshotMatrix(np.vstack(rows), self.queues.dt, tuple(l + suffix for l in order))


def _rate_matrices(config: IntersectionConfig, steps: int, dt: float):
    rates = np.array([config.arrival_rates[m] for m in MOVEMENT_LABELS])
    lam = np.repeat(rates[:, None] * dt, steps, axis=1)
    service = np.full((len(MOVEMENT_LABELS), steps), config.saturation_flow * dt)
    t = np.arange(steps) * dt
    for rw in config.rate_windows:
        cols = (t >= rw.start) & (t < rw.end)
        rows = [MOVEMENT_LABELS.index(m) for m in rw.movements]
        for r in rows:
            lam[r, cols] *= rw.arrival_factor
            service[r, cols] /= rw.service_divisor
    return lam, service


def simulate_intersection(config: IntersectionConfig, duration: float, dt: float = 1.0,
                          extra_arrivals: Optional[np.ndarray] = None) -> SimulationResult:
    """Simulate one intersection for ``duration`` seconds in steps of ``dt``.

    Per movement and step: Poisson arrivals join the queue, a green movement
    discharges ``min(queue, saturation_flow * dt)``, and the queue is capped
    at ``capacity``.  Queues are recorded at the end of each step.
    """
    steps = int(round(duration / dt))
    if steps < 2:
        raise ValidationError("simulation needs at least two steps")
    schedule = build_schedule(config, duration, dt)
    lam, service = _rate_matrices(config, steps, dt)
    rng = np.random.Generator(np.random.Philox(key=config.seed))
    arrivals = rng.poisson(lam).astype(float)
    if extra_arrivals is not None:
        extra = np.asarray(extra_arrivals, dtype=float)
        if extra.shape != arrivals.shape:
            raise ValidationError(f"extra arrivals shape {extra.shape} != {arrivals.shape}")
        arrivals = arrivals + extra
    green = schedule.values.astype(bool)
    cap = config.capacity

    n = len(MOVEMENT_LABELS)
    q = np.zeros(n)
    queues = np.empty((n, steps))
    flows = np.empty((n, steps))
    dropped = np.zeros((n, steps))
    for k in range(steps):
        avail = q + arrivals[:, k]
        dep = np.where(green[:, k], np.minimum(avail, service[:, k]), 0.0)
        q = avail - dep
        over = q - cap
        if (over > 0).any():
            over = np.maximum(over, 0.0)
            dropped[:, k] = over
            q = q - over
        queues[:, k] = q
        flows[:, k] = dep
    labels = MOVEMENT_LABELS
    return SimulationResult(
        flows=SnapshotMatrix(flows, dt, labels),
        queues=SnapshotMatrix(queues, dt, labels),
        schedule=schedule,
        arrivals=arrivals,
        dropped=dropped,
    )


@dataclass(frozen=True)
class CorridorLink:
    """Vehicles leaving ``upstream_movements`` that join ``downstream_leg``.

    Fed vehicles are split over the downstream leg's movements in
    proportion to that leg's exogenous arrival rates.
    """

    upstream_movements: Tuple[str, ...] = ("SBT",)
    downstream_leg: str = "SB"
    travel_delay: float = 60.0
    pass_fraction: float = 1.0

    def __post_init__(self):
        if self.travel_delay < 0:
            raise ValidationError("travel delay must be nonnegative")
        if not 0.0 <= self.pass_fraction <= 1.0:
            raise ValidationError("pass fraction must lie in [0, 1]")


@dataclass(frozen=True)
class CorridorConfig:
    """Two intersections joined by one directional link.

    ``upstream_index`` says whether the upstream intersection is stacked
    first (1) or second (2) in the corridor output.
    """

    upstream: IntersectionConfig
    downstream: IntersectionConfig
    link: CorridorLink = field(default_factory=CorridorLink)
    upstream_index: int = 1

    def __post_init__(self):
        if self.upstream_index not in (1, 2):
            raise ValidationError("upstream_index must be 1 or 2")


@dataclass(frozen=True)
class CorridorResult:
    stacked: SnapshotMatrix
    upstream: SimulationResult
    downstream: SimulationResult
    fed: np.ndarray


def simulate_corridor(config: CorridorConfig, duration: float, dt: float = 1.0) -> CorridorResult:
    """Simulate a linked intersection pair.

    Returns leg queues stacked as (NB1, SB1, WB1, EB1, NB2, SB2, WB2, EB2).
    """
    up = simulate_intersection(config.upstream, duration, dt)
    link = config.link
    rows = [MOVEMENT_LABELS.index(m) for m in link.upstream_movements]
    out = link.pass_fraction * up.flows.values[rows].sum(axis=0)
    lag = int(round(link.travel_delay / dt))
    fed = np.zeros_like(out)
    if lag < out.size:
        fed[lag:] = out[:out.size - lag]
    targets = [i for i, m in enumerate(MOVEMENT_LABELS) if leg_of(m) == link.downstream_leg]
    w = np.array([config.downstream.arrival_rates[MOVEMENT_LABELS[i]] for i in targets])
    if w.sum() <= 0:
        w = np.array([1.0 if MOVEMENT_LABELS[i].endswith("T") and not MOVEMENT_LABELS[i].endswith("RT")
                      else 0.0 for i in targets])
    w = w / w.sum()
    extra = np.zeros((len(MOVEMENT_LABELS), out.size))
    for i, wi in zip(targets, w):
        extra[i] = wi * fed
    down = simulate_intersection(config.downstream, duration, dt, extra_arrivals=extra)
    first, second = (up, down) if config.upstream_index == 1 else (down, up)
    stacked = np.vstack([first.leg_queues(CORRIDOR_LEG_ORDER).values,
                         second.leg_queues(CORRIDOR_LEG_ORDER).values])
    labels = tuple(f"{l}1" for l in CORRIDOR_LEG_ORDER) + tuple(f"{l}2" for l in CORRIDOR_LEG_ORDER)
    return CorridorResult(stacked=SnapshotMatrix(stacked, dt, labels), upstream=up,
                          downstream=down, fed=fed)
