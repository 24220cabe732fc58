"""Ready-made simulator scenarios used by the acceptance suite and the CLI.

Demand is given per movement rather than per volume/capacity ratio: every
left-turn and through movement receives the same arrival rate and right
turns half of it.
"""

from __future__ import annotations

from typing import Dict, Sequence, Tuple

import numpy as np

from .movements import MOVEMENT_LABELS
from .simgen import (CorridorConfig, CorridorLink, IntersectionConfig, RateWindow,
                     inject_incident)
from .timing import PLAN_120, PLAN_150, TimingPlan

HOUR = 3600.0
DAY = 86400.0

# Hour of day -> demand multiplier, held until the next listed hour.
WEEKDAY_PROFILE = {0: 0.3, 6: 0.6, 7: 1.2, 9: 0.9, 16: 1.2, 19: 0.6, 23: 0.3}

# Weekday plan windows (start hour, end hour) running the 150 s plan.
PEAK_PLAN_HOURS = ((6, 10), (15, 19))

# Hours scored by the weekly cycle-time experiment.
SCORED_HOURS = tuple(range(6, 23))


def uniform_rates(demand: float, rt_share: float = 0.5) -> Dict[str, float]:
    """Same arrival rate on every LT/T movement, ``rt_share`` of it on right turns."""
    return {m: demand * (rt_share if m.endswith("RT") else 1.0) for m in MOVEMENT_LABELS}


def profile_windows(day: int, profile=WEEKDAY_PROFILE,
                    movements: Sequence[str] = MOVEMENT_LABELS) -> Tuple[RateWindow, ...]:
    hours = sorted(profile)
    out = []
    for i, h0 in enumerate(hours):
        h1 = hours[i + 1] if i + 1 < len(hours) else 24
        if profile[h0] != 1.0:
            out.append(RateWindow(day * DAY + h0 * HOUR, day * DAY + h1 * HOUR,
                                  tuple(movements), arrival_factor=profile[h0]))
    return tuple(out)


def week_config(seed: int = 7, demand: float = 0.05, capacity: float = 200.0,
                weekdays: int = 5, days: int = 7) -> IntersectionConfig:
    """A week alternating the 150 s and 120 s plans on weekdays, 120 s at weekends."""
    changes = []
    windows = []
    for day in range(days):
        base = day * DAY
        if day < weekdays:
            for h0, h1 in PEAK_PLAN_HOURS:
                changes += [(base + h0 * HOUR, PLAN_150), (base + h1 * HOUR, PLAN_120)]
        windows += profile_windows(day)
    return IntersectionConfig(plan=PLAN_120, arrival_rates=uniform_rates(demand),
                              capacity=capacity, seed=seed, plan_changes=tuple(changes),
                              rate_windows=tuple(windows))


def week_truth(day: int, hour: int, weekdays: int = 5) -> float:
    """Cycle length in force for a whole hour of :func:`week_config`."""
    if day < weekdays and any(h0 <= hour < h1 for h0, h1 in PEAK_PLAN_HOURS):
        return PLAN_150.cycle
    return PLAN_120.cycle


def fixed_plan_config(plan: TimingPlan = PLAN_120, seed: int = 0, demand: float = 0.05,
                      capacity: float = 200.0) -> IntersectionConfig:
    """Constant plan and demand, used for split and sequence recovery."""
    return IntersectionConfig(plan=plan, arrival_rates=uniform_rates(demand),
                              capacity=capacity, seed=seed)


INCIDENT_WINDOW = (14 * HOUR + 47 * 60, 14 * HOUR + 47 * 60 + 90 * 60)
MORNING_PEAK = (7 * HOUR, 9 * HOUR)


def incident_day_config(seed: int = 0, demand: float = 0.05, peak_factor: float = 1.2,
                        service_divisor: float = 4.0,
                        window: Tuple[float, float] = INCIDENT_WINDOW,
                        capacity: float = 200.0) -> IntersectionConfig:
    """One day with a morning demand peak and a 90-minute E-W service drop."""
    peak = RateWindow(MORNING_PEAK[0], MORNING_PEAK[1], MOVEMENT_LABELS,
                      arrival_factor=peak_factor)
    cfg = IntersectionConfig(plan=PLAN_120, arrival_rates=uniform_rates(demand),
                             capacity=capacity, seed=seed, rate_windows=(peak,))
    return inject_incident(cfg, window, service_divisor, duration=DAY)


def split_plan(ew_fraction: float, cycle: float = 120.0, lt_share_ew: float = 0.35,
               lt_share_ns: float = 0.45) -> TimingPlan:
    """Plan giving the E-W barrier ``ew_fraction`` of the cycle."""
    ew = round(cycle * ew_fraction)
    ns = cycle - ew
    a = round(lt_share_ew * ew)
    c = round(lt_share_ns * ns)
    return TimingPlan(cycle, (a, ew - a, c, ns - c))


WHATIF_FRACTIONS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


def whatif_training_config(seed: int = 0, days: int = 2, demand: float = 0.06,
                           cycle: float = 120.0, fractions: Sequence[float] = WHATIF_FRACTIONS,
                           capacity: float = 60.0, split_jitter: float = 5.0) -> IntersectionConfig:
    """Training data for the what-if model: the E-W share is redrawn every cycle.

    Varying the barrier split from cycle to cycle is what lets the input
    operator separate the effect of green time from the periodic baseline.
    """
    rng = np.random.default_rng(seed)
    n_cycles = int(days * DAY // cycle)
    picks = rng.choice(np.asarray(fractions), size=n_cycles)
    plans = {f: split_plan(f, cycle) for f in fractions}
    changes = tuple((k * cycle, plans[picks[k]]) for k in range(1, n_cycles))
    return IntersectionConfig(plan=plans[picks[0]], arrival_rates=uniform_rates(demand),
                              capacity=capacity, seed=seed, plan_changes=changes,
                              split_jitter=split_jitter)


def corridor_config(seed: int = 0, coupled: bool = True, demand: float = 0.03,
                    sb_factor: float = 3.0, travel_delay: float = 5.0,
                    downstream_offset: float = 37.0, split_jitter: float = 5.0,
                    capacity: float = 60.0) -> CorridorConfig:
    """Two intersections where intersection 1 SB throughs feed intersection 2 SB.

    The upstream SB approach carries ``sb_factor`` times the base demand.
    Downstream SB traffic comes only from the link when ``coupled``; the
    uncoupled control gives it the same demand as exogenous arrivals instead.
    """
    up_rates = uniform_rates(demand)
    for m in ("SBLT", "SBT", "SBRT"):
        up_rates[m] *= sb_factor
    dn_rates = uniform_rates(demand)
    for m in ("SBLT", "SBT", "SBRT"):
        dn_rates[m] *= 0.0 if coupled else sb_factor
    up = IntersectionConfig(plan=PLAN_120, arrival_rates=up_rates, capacity=capacity,
                            seed=1000 + 2 * seed, split_jitter=split_jitter)
    down = IntersectionConfig(plan=PLAN_120, arrival_rates=dn_rates, capacity=capacity,
                              seed=1001 + 2 * seed, offset=downstream_offset,
                              split_jitter=split_jitter)
    link = CorridorLink(("SBT",), "SB", travel_delay, 1.0 if coupled else 0.0)
    return CorridorConfig(upstream=up, downstream=down, link=link)


def benchmark_day_config(seed: int = 0, demand: float = 0.05,
                         capacity: float = 60.0) -> IntersectionConfig:
    """Single-intersection day for the DMD/VAR forecast comparison."""
    return IntersectionConfig(plan=PLAN_120, arrival_rates=uniform_rates(demand),
                              capacity=capacity, seed=seed, split_jitter=5.0)

