from __future__ import annotations

import json

import pytest

from gridmob.config import BinsConfig, RunConfig, load_config
from gridmob.errors import ConfigError
from gridmob.store import DayType


def test_defaults_validate():
    config = load_config(None)
    assert config.k == 4
    assert config.cell_km == 0.5
    assert config.threshold == 0.5
    assert config.neighborhood_radius == 2
    assert [p.name for p in config.periods] == ["normal", "emergency"]
    assert config.periods[0].start_day == 43
    assert config.periods[1].start_day == 60


def test_load_from_file_with_overrides(tmp_path):
    payload = {
        "k": 5,
        "cell_km": 1.0,
        "periods": [
            {"name": "base", "start_day": 0, "end_day": 14},
            {"name": "shock", "start_day": 30, "end_day": 44},
        ],
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(payload))
    config = load_config(path, {"seed": 9})
    assert config.k == 5
    assert config.seed == 9
    assert [p.name for p in config.periods] == ["base", "shock"]


def test_calendar_override(tmp_path):
    calendar = {str(d): "weekday" for d in range(1, 16)}
    calendar["3"] = "holiday"
    payload = {
        "periods": [
            {"name": "normal", "start_day": 43, "end_day": 57, "calendar": calendar},
            {"name": "emergency", "start_day": 60, "end_day": 74},
        ]
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(payload))
    config = load_config(path)
    spec = config.period_specs()["normal"]
    assert spec.day_type(3) == DayType.HOLIDAY
    assert spec.day_type(7) == DayType.WEEKDAY  # overridden away from weekend


def test_unknown_key_names_offender(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"mystery_knob": 3}))
    with pytest.raises(ConfigError) as err:
        load_config(path)
    assert "mystery_knob" in str(err.value)


@pytest.mark.parametrize(
    "payload,key",
    [
        ({"k": 1}, "k"),
        ({"cell_km": 0}, "cell_km"),
        ({"dedup_policy": "merge"}, "dedup_policy"),
        ({"onn_attribution": "origin"}, "onn_attribution"),
        ({"x_min_policy": "median"}, "x_min_policy"),
        ({"threads": 0}, "threads"),
        ({"usual_days": [50, 10]}, "usual_days"),
        ({"windows": {"w": [70, 90]}}, "windows"),
    ],
)
def test_invalid_values_name_key(tmp_path, payload, key):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(payload))
    with pytest.raises(ConfigError) as err:
        load_config(path)
    assert key in str(err.value)


def test_duplicate_period_names_rejected(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(
        json.dumps(
            {
                "periods": [
                    {"name": "p", "start_day": 0, "end_day": 5},
                    {"name": "p", "start_day": 6, "end_day": 10},
                ]
            }
        )
    )
    with pytest.raises(ConfigError):
        load_config(path)


def test_config_hash_changes_with_content():
    a = RunConfig().validate()
    b = load_config(None, {"k": 5})
    assert a.config_hash() != b.config_hash()
    assert a.config_hash() == RunConfig().validate().config_hash()


def test_bins_defaults_have_six_bins_each():
    bins = BinsConfig()
    assert len(bins.max_distance_km) == 6       # + overflow = 6 bins
    assert len(bins.dwelling_min) == 6
    assert len(bins.onn_time_min) == 6
    assert len(bins.onn_distance_km) == 5        # + zero bin + overflow = 6
