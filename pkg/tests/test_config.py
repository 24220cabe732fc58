import json

import pytest

from kooptraffic.config import (PRESETS, intersection_from_dict, load_scenario,
                                scenario_from_dict)
from kooptraffic.errors import ValidationError
from kooptraffic.scenarios import DAY
from kooptraffic.timing import PLAN_150


def test_named_plan_and_demand():
    cfg = intersection_from_dict({"plan": "150", "demand": 0.04, "capacity": 30})
    assert cfg.plan == PLAN_150
    assert cfg.arrival_rates["EBT"] == pytest.approx(0.04)
    assert cfg.arrival_rates["EBRT"] == pytest.approx(0.02)
    assert cfg.capacity == 30


def test_explicit_plan_and_changes():
    cfg = intersection_from_dict({
        "plan": {"cycle": 100, "splits": [20, 30, 20, 30]},
        "plan_changes": [{"time": 600, "plan": "120"}],
        "rate_windows": [{"start": 0, "end": 60, "movements": ["EBT"], "arrival_factor": 2}],
    })
    assert cfg.plan.cycle == 100
    assert cfg.plan_changes[0][0] == 600
    assert cfg.rate_windows[0].arrival_factor == 2


def test_incidents_become_rate_windows():
    cfg = intersection_from_dict({"incidents": [{"start": 10, "end": 20, "factor": 4}]})
    assert cfg.rate_windows[-1].service_divisor == 4


def test_unknown_keys_rejected():
    with pytest.raises(ValidationError, match="unknown"):
        intersection_from_dict({"colour": "red"})


def test_plan_missing_splits():
    with pytest.raises(ValidationError):
        intersection_from_dict({"plan": {"cycle": 100}})


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_build(name):
    scen = scenario_from_dict({"scenario": name}, seed=2)
    assert scen.duration == PRESETS[name][1]
    assert scen.is_corridor == (name == "corridor")


def test_preset_options_and_overrides():
    scen = scenario_from_dict({"scenario": "incident", "options": {"service_divisor": 3}},
                              seed=5, duration=3600)
    assert scen.duration == 3600
    assert scen.config.seed == 5
    assert scen.config.rate_windows[-1].service_divisor == 3
    assert PRESETS["incident"][1] == DAY


def test_bad_preset():
    with pytest.raises(ValidationError):
        scenario_from_dict({"scenario": "rush"})
    with pytest.raises(ValidationError):
        scenario_from_dict({"scenario": "week", "options": {"colour": 1}})


def test_explicit_needs_duration():
    with pytest.raises(ValidationError):
        scenario_from_dict({"intersection": {}})
    with pytest.raises(ValidationError):
        scenario_from_dict({"duration": 10})


def test_corridor_file(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({
        "duration": 600, "output_dt": 60,
        "intersection": {"seed": 1},
        "corridor": {"downstream": {"demand": 0.01}, "link": {"travel_delay": 30}},
    }))
    scen = load_scenario(path, seed=4)
    assert scen.is_corridor
    assert scen.output_dt == 60
    assert scen.config.upstream.seed == 4 and scen.config.downstream.seed == 5
    assert scen.config.link.travel_delay == 30


def test_invalid_json(tmp_path):
    path = tmp_path / "x.json"
    path.write_text("{")
    with pytest.raises(ValidationError, match="invalid JSON"):
        load_scenario(path)
    path.write_text("[1]")
    with pytest.raises(ValidationError, match="object"):
        load_scenario(path)
