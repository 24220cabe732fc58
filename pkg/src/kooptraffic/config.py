"""JSON scenario files for the ``simulate`` subcommand.

A scenario is either a named preset::

    {"scenario": "incident", "seed": 3}

or an explicit intersection, optionally with a downstream partner::

    {
      "duration": 14400,
      "output_dt": 10,
      "intersection": {
        "plan": {"cycle": 120, "splits": [16, 30, 35, 39]},
        "demand": 0.05,
        "capacity": 200,
        "plan_changes": [{"time": 3600, "plan": "150"}],
        "rate_windows": [{"start": 0, "end": 600, "movements": ["EBT"], "arrival_factor": 1.5}],
        "incidents": [{"start": 7200, "end": 12600, "factor": 4}]
      },
      "corridor": {"downstream": {...}, "link": {"travel_delay": 5}}
    }

``plan`` may also be ``"120"`` or ``"150"`` for the two built-in plans.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional, Union

from . import scenarios
from .errors import ValidationError
from .simgen import (CorridorConfig, CorridorLink, IntersectionConfig, RateWindow,
                     inject_incident)
from .timing import PLAN_120, PLAN_150, TimingPlan

NAMED_PLANS = {"120": PLAN_120, "150": PLAN_150}

PRESETS = {
    "week": (scenarios.week_config, 7 * scenarios.DAY),
    "fixed": (scenarios.fixed_plan_config, 4 * scenarios.HOUR),
    "incident": (scenarios.incident_day_config, scenarios.DAY),
    "whatif": (scenarios.whatif_training_config, 2 * scenarios.DAY),
    "corridor": (scenarios.corridor_config, 2 * scenarios.HOUR),
    "benchmark": (scenarios.benchmark_day_config, scenarios.DAY),
}


@dataclass(frozen=True)
class Scenario:
    config: Union[IntersectionConfig, CorridorConfig]
    duration: float
    output_dt: float = 10.0
    sim_dt: float = 1.0

    @property
    def is_corridor(self) -> bool:
        return isinstance(self.config, CorridorConfig)


def _plan(entry) -> TimingPlan:
    if isinstance(entry, (str, int)) and str(entry) in NAMED_PLANS:
        return NAMED_PLANS[str(entry)]
    if isinstance(entry, Mapping):
        try:
            return TimingPlan(float(entry["cycle"]), tuple(entry["splits"]))
        except KeyError as exc:
            raise ValidationError(f"plan is missing {exc.args[0]!r}") from None
    raise ValidationError(f"cannot read plan {entry!r}")


def _rates(entry: Mapping[str, Any]):
    if "arrival_rates" in entry:
        return dict(entry["arrival_rates"])
    return scenarios.uniform_rates(float(entry.get("demand", 0.05)),
                                   float(entry.get("rt_share", 0.5)))


def intersection_from_dict(entry: Mapping[str, Any], seed: Optional[int] = None) -> IntersectionConfig:
    known = {"plan", "demand", "rt_share", "arrival_rates", "saturation_flow", "capacity",
             "seed", "plan_changes", "rate_windows", "split_jitter", "offset", "incidents"}
    unknown = set(entry) - known
    if unknown:
        raise ValidationError(f"unknown intersection keys {sorted(unknown)}")
    changes = tuple((float(c["time"]), _plan(c["plan"])) for c in entry.get("plan_changes", ()))
    windows = tuple(RateWindow(float(w["start"]), float(w["end"]), tuple(w["movements"]),
                               float(w.get("arrival_factor", 1.0)),
                               float(w.get("service_divisor", 1.0)))
                    for w in entry.get("rate_windows", ()))
    cfg = IntersectionConfig(
        plan=_plan(entry.get("plan", "120")),
        arrival_rates=_rates(entry),
        saturation_flow=float(entry.get("saturation_flow", 0.5)),
        capacity=float(entry.get("capacity", 60.0)),
        seed=int(seed if seed is not None else entry.get("seed", 0)),
        plan_changes=changes,
        rate_windows=windows,
        split_jitter=float(entry.get("split_jitter", 0.0)),
        offset=float(entry.get("offset", 0.0)),
    )
    for inc in entry.get("incidents", ()):
        movements = inc.get("movements")
        cfg = inject_incident(cfg, (float(inc["start"]), float(inc["end"])), float(inc["factor"]),
                              mode=inc.get("mode", "service"),
                              movements=tuple(movements) if movements else None)
    return cfg


def scenario_from_dict(entry: Mapping[str, Any], seed: Optional[int] = None,
                       duration: Optional[float] = None) -> Scenario:
    """Build a scenario; ``seed`` and ``duration`` override the file."""
    output_dt = float(entry.get("output_dt", 10.0))
    sim_dt = float(entry.get("dt", 1.0))
    if "scenario" in entry:
        name = entry["scenario"]
        if name not in PRESETS:
            raise ValidationError(f"unknown scenario {name!r}; choose from {sorted(PRESETS)}")
        factory, default_duration = PRESETS[name]
        kwargs = dict(entry.get("options", {}))
        s = seed if seed is not None else entry.get("seed")
        if s is not None:
            kwargs["seed"] = int(s)
        try:
            cfg = factory(**kwargs)
        except TypeError as exc:
            raise ValidationError(f"bad options for scenario {name!r}: {exc}") from None
        dur = duration or float(entry.get("duration", default_duration))
        return Scenario(cfg, dur, output_dt, sim_dt)
    if "intersection" not in entry:
        raise ValidationError("scenario file needs either 'scenario' or 'intersection'")
    dur = duration or entry.get("duration")
    if dur is None:
        raise ValidationError("scenario file needs a 'duration' in seconds")
    first = intersection_from_dict(entry["intersection"], seed)
    if "corridor" in entry:
        cor = entry["corridor"]
        second = intersection_from_dict(cor.get("downstream", {}),
                                        None if seed is None else seed + 1)
        link = cor.get("link", {})
        cfg = CorridorConfig(
            upstream=first, downstream=second,
            link=CorridorLink(tuple(link.get("upstream_movements", ("SBT",))),
                              link.get("downstream_leg", "SB"),
                              float(link.get("travel_delay", 60.0)),
                              float(link.get("pass_fraction", 1.0))),
            upstream_index=int(cor.get("upstream_index", 1)))
        return Scenario(cfg, float(dur), output_dt, sim_dt)
    return Scenario(first, float(dur), output_dt, sim_dt)


def load_scenario(path: Union[str, Path], seed: Optional[int] = None,
                  duration: Optional[float] = None) -> Scenario:
    try:
        with open(path, encoding="utf-8") as fh:
            entry = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(entry, Mapping):
        raise ValidationError(f"{path}: top level must be an object")
    try:
        return scenario_from_dict(entry, seed=seed, duration=duration)
    except KeyError as exc:
        raise ValidationError(f"{path}: missing key {exc.args[0]!r}") from None
