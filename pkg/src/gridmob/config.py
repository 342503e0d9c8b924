"""Run configuration: defaults, JSON loading, validation, hashing.

Every knob the pipeline consults lives here so a manifest can echo the
fully resolved configuration (no silent defaults).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .errors import ConfigError
from .store import DAY_MAX, DayType, PeriodSpec

DEFAULT_WINDOWS: dict[str, tuple[int, int]] = {
    "first_1d": (43, 43),
    "first_3d": (43, 45),
    "first_5d": (43, 47),
    "first_7d": (43, 49),
    "first_14d": (43, 56),
    "segment_01_14": (1, 14),
    "segment_15_28": (15, 28),
    "segment_29_42": (29, 42),
    "weeks_2": (43, 56),
    "weeks_4": (29, 56),
    "weeks_6": (15, 56),
    "weeks_8": (1, 56),
}


@dataclass(frozen=True)
class BinsConfig:
    """Bin edges per metric; the bin past the last edge is the overflow bin.

    The outside-neighborhood distance metric adds a singleton bin for
    exactly zero ahead of its edges.
    """

    max_distance_km: tuple[float, ...] = (0.0, 1.0, 2.0, 5.0, 10.0, 20.0)
    dwelling_min: tuple[float, ...] = (0.0, 60.0, 120.0, 240.0, 480.0, 720.0)
    onn_time_min: tuple[float, ...] = (0.0, 30.0, 60.0, 120.0, 240.0, 480.0)
    onn_distance_km: tuple[float, ...] = (0.0, 1.0, 5.0, 10.0, 20.0)


@dataclass(frozen=True)
class PeriodConfig:
    name: str
    start_day: int
    end_day: int
    calendar: dict[int, str] | None = None  # period-day -> daytype name

    def to_spec(self) -> PeriodSpec:
        calendar = None
        if self.calendar is not None:
            calendar = {int(day): DayType(value) for day, value in self.calendar.items()}
        return PeriodSpec(
            name=self.name,
            start_day=self.start_day,
            end_day=self.end_day,
            calendar=calendar or {},
        )


DEFAULT_PERIOD_CONFIGS = (
    PeriodConfig("normal", 43, 57),
    PeriodConfig("emergency", 60, 74),
)


@dataclass(frozen=True)
class RunConfig:
    data: str | None = None
    poi: str | None = None
    out: str = "out"
    periods: tuple[PeriodConfig, ...] = DEFAULT_PERIOD_CONFIGS
    k: int = 4
    k_min: int = 2
    k_max: int = 10
    threshold: float = 0.5
    returners_high: bool = True
    cell_km: float = 0.5
    neighborhood_radius: int = 2
    dedup_policy: str = "keep_first"
    visit_weighting: str = "records"
    onn_attribution: str = "destination"
    poi_weighting: str = "visits"
    x_min_policy: str | float = "sample_min"
    min_users: int = 5
    bridge_gap_slots: int = 0
    usual_days: tuple[int, int] = (0, 59)
    windows: dict[str, tuple[int, int]] = field(
        default_factory=lambda: dict(DEFAULT_WINDOWS)
    )
    bins: BinsConfig = BinsConfig()
    seed: int = 0
    threads: int = 1

    def validate(self) -> "RunConfig":
        if self.k < 2:
            raise ConfigError("k", "must be >= 2")
        if not (2 <= self.k_min <= self.k_max):
            raise ConfigError("k_min/k_max", "need 2 <= k_min <= k_max")
        if self.cell_km <= 0:
            raise ConfigError("cell_km", "must be positive")
        if not (0.0 < self.threshold < 1.0 or self.threshold in (0.0, 1.0)):
            raise ConfigError("threshold", "must be in [0, 1]")
        if self.neighborhood_radius < 0:
            raise ConfigError("neighborhood_radius", "must be >= 0")
        if self.dedup_policy not in ("keep_first", "reject"):
            raise ConfigError("dedup_policy", f"unknown policy '{self.dedup_policy}'")
        if self.visit_weighting not in ("records", "stays"):
            raise ConfigError("visit_weighting", f"unknown weighting '{self.visit_weighting}'")
        if self.onn_attribution not in ("destination", "both_outside"):
            raise ConfigError("onn_attribution", f"unknown rule '{self.onn_attribution}'")
        if self.poi_weighting not in ("visits", "distinct_cells"):
            raise ConfigError("poi_weighting", f"unknown weighting '{self.poi_weighting}'")
        if self.min_users < 0:
            raise ConfigError("min_users", "must be >= 0")
        if self.bridge_gap_slots < 0:
            raise ConfigError("bridge_gap_slots", "must be >= 0")
        if self.threads < 1:
            raise ConfigError("threads", "must be >= 1")
        if not (0 <= self.usual_days[0] <= self.usual_days[1] <= DAY_MAX):
            raise ConfigError("usual_days", "must be an ascending range inside the data days")
        if isinstance(self.x_min_policy, str):
            if self.x_min_policy != "sample_min":
                raise ConfigError("x_min_policy", "must be 'sample_min' or a positive number")
        elif float(self.x_min_policy) <= 0:
            raise ConfigError("x_min_policy", "explicit value must be positive")
        names = [p.name for p in self.periods]
        if len(names) != len(set(names)):
            raise ConfigError("periods", "period names must be unique")
        for p in self.periods:
            p.to_spec()  # raises on bad ranges or calendars
        for name, (start, end) in self.windows.items():
            if not (0 <= start <= end <= DAY_MAX):
                raise ConfigError("windows", f"window '{name}' [{start}, {end}] out of range")
        return self

    def period_specs(self) -> dict[str, PeriodSpec]:
        return {p.name: p.to_spec() for p in self.periods}

    def to_dict(self) -> dict:
        payload = asdict(self)
        payload["periods"] = [asdict(p) for p in self.periods]
        payload["bins"] = asdict(self.bins)
        return payload

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()


def _coerce_windows(raw: dict) -> dict[str, tuple[int, int]]:
    return {name: (int(v[0]), int(v[1])) for name, v in raw.items()}


def load_config(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from an optional JSON file plus CLI overrides."""
    payload: dict = {}
    if path is not None:
        file = Path(path)
        if not file.exists():
            raise ConfigError("config", f"file not found: {file}")
        try:
            payload = json.loads(file.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc}")
    config = RunConfig()
    known = set(RunConfig.__dataclass_fields__)
    for key, value in payload.items():
        if key not in known:
            raise ConfigError(key, "unknown configuration key")
        if key == "periods":
            value = tuple(
                PeriodConfig(
                    name=p["name"],
                    start_day=int(p["start_day"]),
                    end_day=int(p["end_day"]),
                    calendar=p.get("calendar"),
                )
                for p in value
            )
        elif key == "bins":
            value = BinsConfig(**{k: tuple(v) for k, v in value.items()})
        elif key == "windows":
            value = _coerce_windows(value)
        elif key == "usual_days":
            value = (int(value[0]), int(value[1]))
        config = replace(config, **{key: value})
    for key, value in (overrides or {}).items():
        if value is not None:
            config = replace(config, **{key: value})
    return config.validate()
