"""Seeded synthetic trajectory populations with planted ground truth.

Every generated population carries a sidecar of per-user truths (home,
visit histograms, both gyration radii, labels, transition group, daily
outside-neighborhood metrics, global daily stay counts) computed by
independent brute-force loops over the emitted records, so the analysis
pipeline can be checked end to end without real data.

Randomness comes from one named generator family (NumPy PCG64). Each
user draws from the stream seeded by ``[seed, uid]``, so populations
can be generated per-user in any order without changing output.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.special import ndtri

from .errors import InputError
from .fitting import (
    EXPONENTIAL,
    LOGNORMAL,
    TRUNC_POWER_LAW,
    ExponentialParams,
    LognormalParams,
    Params,
    TruncPowerLawParams,
)
from .store import GRID_SIZE, Cell

#: Slots observed at home every generated day (all in the night window).
NIGHT_GEN_SLOTS = (44, 45, 46, 47, 0, 1)
#: First slot of the generated daytime block (09:00).
DAY_FIRST_SLOT = 18

GROUP_LABELS = ("R-R", "R-E", "E-E", "E-R")


@dataclass(frozen=True)
class Behavior:
    """Visit-pattern archetype for one user over one stretch of days.

    ``recurrent`` concentrates daytime visits on a few anchor cells near
    home (plus optional one-off jitter visits); ``roaming`` mixes a
    near-home routine with many dispersed low-frequency destinations,
    which keeps the top-k cells tight while spreading the full
    histogram.
    """

    kind: str  # "recurrent" | "roaming"
    anchors: tuple[tuple[int, int], ...] | None = None
    n_anchors: int = 2
    anchor_weights: tuple[int, ...] = (3, 1)
    anchor_spread: int = 4
    n_roam_cells: int = 24
    roam_min: int = 16
    roam_max: int = 48
    roam_share: float = 0.5
    jitter_cells: int = 0
    jitter_spread: int = 8
    day_slots: int = 16
    night_slots: int = 6
    allocation: str = "random"  # "random" | "exact"

    def __post_init__(self) -> None:
        if self.kind not in ("recurrent", "roaming"):
            raise InputError(f"unknown behavior kind '{self.kind}'")
        if self.allocation not in ("random", "exact"):
            raise InputError(f"unknown allocation '{self.allocation}'")
        if self.anchors is not None:
            for x, y in self.anchors:
                if not (1 <= x <= GRID_SIZE and 1 <= y <= GRID_SIZE):
                    raise InputError(f"anchor cell ({x}, {y}) outside the grid")
        if self.night_slots > len(NIGHT_GEN_SLOTS):
            raise InputError(f"night_slots must be <= {len(NIGHT_GEN_SLOTS)}")


def recurrent_behavior(**overrides) -> Behavior:
    return Behavior(kind="recurrent", jitter_cells=2, **overrides)


def roaming_behavior(**overrides) -> Behavior:
    # four near anchors keep the default top-4 profile tight around home
    return Behavior(
        kind="roaming", n_anchors=4, anchor_weights=(2, 1, 1, 1), anchor_spread=2,
        **overrides,
    )


@dataclass(frozen=True)
class CohortSpec:
    """A block of users sharing archetypes and a home area."""

    name: str
    n_users: int
    normal: Behavior
    emergency: Behavior
    home_center: tuple[int, int] = (100, 100)
    home_spread: int = 5


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int
    cohorts: tuple[CohortSpec, ...]
    normal_days: tuple[int, int] = (43, 57)
    emergency_days: tuple[int, int] = (60, 74)
    usual_days: tuple[int, int] = (0, 59)
    total_days: int = 75
    sunday_dip: float = 0.0  # fraction of daytime slots dropped when day % 7 == 0
    k: int = 4
    cell_km: float = 0.5
    threshold: float = 0.5
    neighborhood_radius: int = 2

    def __post_init__(self) -> None:
        cx_ok = all(
            1 <= c.home_center[0] <= GRID_SIZE and 1 <= c.home_center[1] <= GRID_SIZE
            for c in self.cohorts
        )
        if not cx_ok:
            raise InputError("cohort home centers must lie inside the grid")
        if not 0.0 <= self.sunday_dip <= 1.0:
            raise InputError("sunday_dip must be in [0, 1]")


def _clip(v: int) -> int:
    return min(max(v, 1), GRID_SIZE)


def _offset_cell(rng: np.random.Generator, center: tuple[int, int], spread: int) -> tuple[int, int]:
    dx = int(rng.integers(-spread, spread + 1)) if spread > 0 else 0
    dy = int(rng.integers(-spread, spread + 1)) if spread > 0 else 0
    return _clip(center[0] + dx), _clip(center[1] + dy)


def _ring_cell(
    rng: np.random.Generator, center: tuple[int, int], lo: int, hi: int
) -> tuple[int, int]:
    while True:
        dx = int(rng.integers(-hi, hi + 1))
        dy = int(rng.integers(-hi, hi + 1))
        if max(abs(dx), abs(dy)) >= lo:
            return _clip(center[0] + dx), _clip(center[1] + dy)


def _apportion(total: int, weights: tuple[int, ...]) -> list[int]:
    """Largest-remainder split of ``total`` slots by integer weights."""
    wsum = sum(weights)
    raw = [total * w / wsum for w in weights]
    counts = [int(math.floor(r)) for r in raw]
    remainders = sorted(
        range(len(weights)), key=lambda i: (raw[i] - counts[i], -weights[i]), reverse=True
    )
    short = total - sum(counts)
    for i in remainders[:short]:
        counts[i] += 1
    return counts


class _UserPlan:
    """Materialized cell sets for one user; day records derive from these."""

    def __init__(
        self, rng: np.random.Generator, home: tuple[int, int], behavior: Behavior
    ) -> None:
        self.behavior = behavior
        if behavior.anchors is not None:
            self.anchors = list(behavior.anchors)
        else:
            self.anchors = [home]
            seen = {home}
            while len(self.anchors) < behavior.n_anchors:
                cell = _offset_cell(rng, home, behavior.anchor_spread)
                if cell not in seen:
                    seen.add(cell)
                    self.anchors.append(cell)
        if len(behavior.anchor_weights) != len(self.anchors):
            raise InputError("anchor_weights length must match anchor count")
        self.weights = np.asarray(behavior.anchor_weights, dtype=np.float64)
        self.weights /= self.weights.sum()
        if behavior.kind == "roaming":
            self.roam_cells = [
                _ring_cell(rng, home, behavior.roam_min, behavior.roam_max)
                for _ in range(behavior.n_roam_cells)
            ]
        else:
            self.roam_cells = []

    def day_cells(self, rng: np.random.Generator, n_slots: int) -> list[tuple[int, int]]:
        b = self.behavior
        if b.allocation == "exact":
            cells: list[tuple[int, int]] = []
            for anchor, count in zip(self.anchors, _apportion(n_slots, b.anchor_weights)):
                cells.extend([anchor] * count)
            return cells[:n_slots]
        cells = []
        for _ in range(n_slots):
            if b.kind == "roaming" and self.roam_cells and rng.random() < b.roam_share:
                cells.append(self.roam_cells[int(rng.integers(len(self.roam_cells)))])
            else:
                cells.append(self.anchors[int(rng.choice(len(self.anchors), p=self.weights))])
        return cells


def _generate_user_records(
    uid: int, spec: ScenarioSpec, cohort: CohortSpec
) -> list[tuple[int, int, int, int, int]]:
    rng = np.random.default_rng([spec.seed, uid])
    home = _offset_cell(rng, cohort.home_center, cohort.home_spread)
    normal_plan = _UserPlan(rng, home, cohort.normal)
    emergency_plan = _UserPlan(rng, home, cohort.emergency)
    emergency_start = spec.emergency_days[0]

    rows: list[tuple[int, int, int, int, int]] = []
    jitter_positions: list[int] = []
    for day in range(spec.total_days):
        plan = emergency_plan if day >= emergency_start else normal_plan
        b = plan.behavior
        for slot in NIGHT_GEN_SLOTS[: b.night_slots]:
            rows.append((uid, day, slot, home[0], home[1]))
        n_day = b.day_slots
        if spec.sunday_dip > 0.0 and day % 7 == 0:
            n_day = max(int(round(n_day * (1.0 - spec.sunday_dip))), 0)
        cells = plan.day_cells(rng, n_day)
        for i, cell in enumerate(cells):
            rows.append((uid, day, DAY_FIRST_SLOT + i, cell[0], cell[1]))
            if b.jitter_cells > 0:
                jitter_positions.append(len(rows) - 1)

    # replace a few daytime visits with one-off cells near home
    jitter_n = max(cohort.normal.jitter_cells, cohort.emergency.jitter_cells)
    if jitter_n > 0 and jitter_positions:
        chosen = rng.choice(
            len(jitter_positions), size=min(jitter_n, len(jitter_positions)), replace=False
        )
        spread = max(cohort.normal.jitter_spread, cohort.emergency.jitter_spread)
        for c in np.sort(chosen):
            idx = jitter_positions[int(c)]
            u, d, t, _, _ = rows[idx]
            jx, jy = _offset_cell(rng, home, spread)
            rows[idx] = (u, d, t, jx, jy)
    rows.sort(key=lambda r: (r[1], r[2]))
    return rows


# ---------------------------------------------------------------------------
# brute-force ground truth (kept deliberately loop-based and numpy-free)


def _brute_histogram(records, day_lo: int, day_hi: int) -> dict[tuple[int, int], int]:
    hist: dict[tuple[int, int], int] = {}
    for _, day, _, x, y in records:
        if day_lo <= day <= day_hi:
            hist[(x, y)] = hist.get((x, y), 0) + 1
    return hist


def _brute_rg(hist: dict[tuple[int, int], int], cell_km: float) -> float:
    n = sum(hist.values())
    cm_x = sum(c * x for (x, _), c in hist.items()) / n
    cm_y = sum(c * y for (_, y), c in hist.items()) / n
    sq = sum(c * ((x - cm_x) ** 2 + (y - cm_y) ** 2) for (x, y), c in hist.items()) / n
    return cell_km * math.sqrt(sq)


def _brute_top_k(hist: dict[tuple[int, int], int], k: int) -> dict[tuple[int, int], int]:
    ranked = sorted(hist.items(), key=lambda item: (-item[1], item[0][0], item[0][1]))
    return dict(ranked[:k])


def _brute_home(records, usual: tuple[int, int], night: frozenset[int]) -> tuple[int, int]:
    counts: dict[tuple[int, int], int] = {}
    for _, day, slot, x, y in records:
        if usual[0] <= day <= usual[1] and slot in night:
            counts[(x, y)] = counts.get((x, y), 0) + 1
    if not counts:
        for _, day, _, x, y in records:
            if usual[0] <= day <= usual[1]:
                counts[(x, y)] = counts.get((x, y), 0) + 1
    best = min(counts.items(), key=lambda item: (-item[1], item[0][0], item[0][1]))
    return best[0]


def _brute_onn(
    records, home: tuple[int, int], radius: int, cell_km: float, day_lo: int, day_hi: int
) -> dict[int, tuple[int, float]]:
    """Per period-day (minutes outside, km of movement into outside cells)."""
    out: dict[int, tuple[int, float]] = {}
    by_day: dict[int, list[tuple[int, int, int]]] = {}
    for _, day, slot, x, y in records:
        if day_lo <= day <= day_hi:
            by_day.setdefault(day, []).append((slot, x, y))
    for day, recs in by_day.items():
        recs.sort()
        minutes = 0
        km = 0.0
        prev = None
        for slot, x, y in recs:
            outside = max(abs(x - home[0]), abs(y - home[1])) > radius
            if outside:
                minutes += 30
            if prev is not None and outside:
                km += cell_km * math.hypot(x - prev[0], y - prev[1])
            prev = (x, y)
        out[day - day_lo + 1] = (minutes, km)
    return out


def _brute_daily_stays(records, total_days: int) -> list[int]:
    counts = [0] * total_days
    by_user_day: dict[tuple[int, int], list[tuple[int, int, int]]] = {}
    for uid, day, slot, x, y in records:
        by_user_day.setdefault((uid, day), []).append((slot, x, y))
    for (_, day), recs in by_user_day.items():
        recs.sort()
        stays = 1
        for i in range(1, len(recs)):
            if (
                recs[i][1:] != recs[i - 1][1:]
                or recs[i][0] - recs[i - 1][0] > 1
            ):
                stays += 1
        counts[day] += stays
    return counts


def _period_truth(
    records, day_lo: int, day_hi: int, home: tuple[int, int], spec: ScenarioSpec
) -> dict | None:
    hist = _brute_histogram(records, day_lo, day_hi)
    if not hist:
        return None
    rg = _brute_rg(hist, spec.cell_km)
    top = _brute_top_k(hist, spec.k)
    rgk = _brute_rg(top, spec.cell_km) if len(hist) > spec.k else rg
    s_k = 1.0 if rg == 0.0 else rgk / rg
    label = "returner" if s_k >= spec.threshold else "explorer"
    onn = _brute_onn(records, home, spec.neighborhood_radius, spec.cell_km, day_lo, day_hi)
    return {
        "histogram": {f"{x},{y}": c for (x, y), c in sorted(hist.items())},
        "n": sum(hist.values()),
        "n_cells": len(hist),
        "rg_km": rg,
        "rgk_km": rgk,
        "s_k": s_k,
        "label": label,
        "onn": {str(day): [minutes, km] for day, (minutes, km) in sorted(onn.items())},
    }


NIGHT_WINDOW = frozenset(range(40, 48)) | frozenset(range(0, 16))


def generate_population(spec: ScenarioSpec) -> tuple[pd.DataFrame, dict]:
    """Emit records and the brute-force truth sidecar for a scenario."""
    all_rows: list[tuple[int, int, int, int, int]] = []
    user_entries = []
    uid = 0
    for cohort in spec.cohorts:
        for _ in range(cohort.n_users):
            records = _generate_user_records(uid, spec, cohort)
            all_rows.extend(records)
            home = _brute_home(records, spec.usual_days, NIGHT_WINDOW)
            normal = _period_truth(
                records, spec.normal_days[0], spec.normal_days[1], home, spec
            )
            emergency = _period_truth(
                records, spec.emergency_days[0], spec.emergency_days[1], home, spec
            )
            group = None
            if normal and emergency:
                group = f"{normal['label'][0].upper()}-{emergency['label'][0].upper()}"
            user_entries.append(
                {
                    "uid": uid,
                    "cohort": cohort.name,
                    "home": list(home),
                    "normal": normal,
                    "emergency": emergency,
                    "group": group,
                }
            )
            uid += 1
    frame = pd.DataFrame(all_rows, columns=["uid", "d", "t", "x", "y"])
    sidecar = {
        "seed": spec.seed,
        "analysis": {
            "k": spec.k,
            "cell_km": spec.cell_km,
            "threshold": spec.threshold,
            "neighborhood_radius": spec.neighborhood_radius,
        },
        "periods": {
            "normal": list(spec.normal_days),
            "emergency": list(spec.emergency_days),
        },
        "usual_days": list(spec.usual_days),
        "daily_stays": _brute_daily_stays(all_rows, spec.total_days),
        "users": user_entries,
    }
    return frame, sidecar


def write_population(spec: ScenarioSpec, out_dir: str | Path) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    frame, sidecar = generate_population(spec)
    csv_path = out / "synthetic_trajectories.csv"
    json_path = out / "ground_truth.json"
    frame.to_csv(csv_path, index=False)
    json_path.write_text(json.dumps(sidecar, sort_keys=True, indent=1))
    return csv_path, json_path


def scenario_from_dict(payload: dict) -> ScenarioSpec:
    cohorts = []
    for c in payload.get("cohorts", []):
        normal = Behavior(**c["normal"])
        emergency = Behavior(**c.get("emergency", c["normal"]))
        cohorts.append(
            CohortSpec(
                name=c["name"],
                n_users=int(c["n_users"]),
                normal=normal,
                emergency=emergency,
                home_center=tuple(c.get("home_center", (100, 100))),
                home_spread=int(c.get("home_spread", 5)),
            )
        )
    keys = {
        k: payload[k]
        for k in (
            "normal_days", "emergency_days", "usual_days", "total_days",
            "sunday_dip", "k", "cell_km", "threshold", "neighborhood_radius",
        )
        if k in payload
    }
    for tup in ("normal_days", "emergency_days", "usual_days"):
        if tup in keys:
            keys[tup] = tuple(keys[tup])
    return ScenarioSpec(seed=int(payload["seed"]), cohorts=tuple(cohorts), **keys)


def default_scenario(seed: int = 0, users_per_group: int = 25) -> ScenarioSpec:
    """Four cohorts planted to land in the four transition groups."""
    ret = recurrent_behavior()
    roam = roaming_behavior()
    return ScenarioSpec(
        seed=seed,
        cohorts=(
            CohortSpec("stay_recurrent", users_per_group, ret, ret, (60, 60)),
            CohortSpec("to_roaming", users_per_group, ret, roam, (60, 140)),
            CohortSpec("stay_roaming", users_per_group, roam, roam, (140, 60)),
            CohortSpec("to_recurrent", users_per_group, roam, ret, (140, 140)),
        ),
    )


# ---------------------------------------------------------------------------
# raw samples for fitter recovery


def gen_raw_samples(family: str, params: Params, n: int, seed: int) -> np.ndarray:
    """Pseudo-random draws from one fitted family.

    Exponential and lognormal invert the CDF directly; the truncated
    power law uses rejection from a matched envelope (pure power law
    when the exponent exceeds 1, shifted exponential otherwise).
    """
    if n < 0:
        raise InputError("n must be >= 0")
    rng = np.random.default_rng(seed)
    if n == 0:
        return np.empty(0, dtype=np.float64)
    if family == EXPONENTIAL:
        if not isinstance(params, ExponentialParams):
            raise InputError("exponential sampling needs ExponentialParams")
        u = rng.random(n)
        return params.x_min - np.log1p(-u) / params.rate
    if family == LOGNORMAL:
        if not isinstance(params, LognormalParams):
            raise InputError("lognormal sampling needs LognormalParams")
        u = rng.random(n)
        return np.exp(params.mu + params.sigma * ndtri(u))
    if family == TRUNC_POWER_LAW:
        if not isinstance(params, TruncPowerLawParams):
            raise InputError("truncated power law sampling needs TruncPowerLawParams")
        return _sample_tpl(rng, params, n)
    raise InputError(f"unknown family '{family}'")


def _sample_tpl(rng: np.random.Generator, p: TruncPowerLawParams, n: int) -> np.ndarray:
    out = np.empty(0, dtype=np.float64)
    while len(out) < n:
        batch = max(int((n - len(out)) * 2.5), 1024)
        u = rng.random(batch)
        v = rng.random(batch)
        if p.alpha > 1.0:
            x = p.x_min * (1.0 - u) ** (-1.0 / (p.alpha - 1.0))
            accept = v <= np.exp(-p.rate * (x - p.x_min))
        else:
            x = p.x_min - np.log1p(-u) / p.rate
            accept = v <= (x / p.x_min) ** (-p.alpha)
        out = np.concatenate([out, x[accept]])
    return out[:n]
