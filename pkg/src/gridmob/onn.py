"""Nearby-neighborhood (walkable-area) analyses on the cell grid.

A user's nearby neighborhood is every cell within Chebyshev distance
``radius`` (default 2) of their home cell, clipped at the grid border:
an interior neighborhood is a 5x5 block, roughly a 2.5 km square that
stands in for the area reachable on foot.

"ONN" metrics measure activity Outside the Nearby Neighborhood: minutes
observed outside it, and movement attributed outside it. A movement
segment (two consecutive same-day records) counts as ONN when its
destination cell is outside; requiring both endpoints outside is
available as an alternative attribution rule.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
import pandas as pd

from .errors import InputError
from .metrics import DEFAULT_CELL_KM, HomeLocation, StayTable, _home_arrays
from .store import GRID_SIZE, SLOT_MINUTES, Cell, DayType, PeriodSpec, PeriodView

DEFAULT_RADIUS = 2
ATTRIBUTION_RULES = ("destination", "both_outside")


@dataclass(frozen=True)
class Neighborhood:
    home: Cell
    radius: int
    members: frozenset[Cell]

    def contains(self, cell: Cell) -> bool:
        return max(abs(cell.x - self.home.x), abs(cell.y - self.home.y)) <= self.radius


def neighborhood(home: Cell, radius: int = DEFAULT_RADIUS) -> Neighborhood:
    if not (1 <= home.x <= GRID_SIZE and 1 <= home.y <= GRID_SIZE):
        raise InputError(f"home cell {home} outside the grid")
    members = frozenset(
        Cell(x, y)
        for x in range(max(1, home.x - radius), min(GRID_SIZE, home.x + radius) + 1)
        for y in range(max(1, home.y - radius), min(GRID_SIZE, home.y + radius) + 1)
    )
    return Neighborhood(home=home, radius=radius, members=members)


@dataclass(frozen=True)
class ONNDailyMetrics:
    user: int
    day: int
    onn_time_min: int
    onn_distance_km: float


def onn_metrics(
    view: PeriodView,
    user: int,
    nbhd: Neighborhood,
    day: int,
    cell_km: float = DEFAULT_CELL_KM,
    attribution: str = "destination",
) -> ONNDailyMetrics:
    """Outside-neighborhood minutes and movement km for one user-day."""
    if attribution not in ATTRIBUTION_RULES:
        raise InputError(f"unknown attribution rule '{attribution}'")
    sl = view.user_slice(user)
    on_day = view.period_day[sl] == day
    xs = view.x[sl][on_day].astype(np.float64)
    ys = view.y[sl][on_day].astype(np.float64)
    outside = np.maximum(np.abs(xs - nbhd.home.x), np.abs(ys - nbhd.home.y)) > nbhd.radius
    minutes = int(outside.sum()) * SLOT_MINUTES
    km = 0.0
    if len(xs) > 1:
        step = np.hypot(np.diff(xs), np.diff(ys)) * cell_km
        if attribution == "destination":
            counted = outside[1:]
        else:
            counted = outside[1:] & outside[:-1]
        km = float(step[counted].sum())
    return ONNDailyMetrics(user=user, day=day, onn_time_min=minutes, onn_distance_km=km)


def onn_daily_table(
    view: PeriodView,
    homes: Mapping[int, HomeLocation],
    radius: int = DEFAULT_RADIUS,
    cell_km: float = DEFAULT_CELL_KM,
    attribution: str = "destination",
) -> pd.DataFrame:
    """(uid, period_day, onn_min, onn_km) for every observed user-day.

    Only users with a known home enter; days without observations are
    absent rather than zero-filled.
    """
    if attribution not in ATTRIBUTION_RULES:
        raise InputError(f"unknown attribution rule '{attribution}'")
    hx, hy, known = _home_arrays(view.users, homes)
    uidx = np.searchsorted(view.users, view.uid)
    keep = known[uidx]
    uid = view.uid[keep]
    pday = view.period_day[keep].astype(np.int64)
    xs = view.x[keep].astype(np.float64)
    ys = view.y[keep].astype(np.float64)
    outside = np.maximum(
        np.abs(xs - hx[uidx[keep]]), np.abs(ys - hy[uidx[keep]])
    ) > radius

    time_frame = pd.DataFrame(
        {"uid": uid, "period_day": pday, "outside": outside.astype(np.int64)}
    )
    times = time_frame.groupby(["uid", "period_day"], as_index=False)["outside"].sum()
    times["onn_min"] = times.pop("outside") * SLOT_MINUTES

    if len(uid) > 1:
        same_track = (uid[1:] == uid[:-1]) & (pday[1:] == pday[:-1])
        step_km = np.hypot(np.diff(xs), np.diff(ys)) * cell_km
        if attribution == "destination":
            counted = same_track & outside[1:]
        else:
            counted = same_track & outside[1:] & outside[:-1]
        dist_frame = pd.DataFrame(
            {
                "uid": uid[1:][counted],
                "period_day": pday[1:][counted],
                "onn_km": step_km[counted],
            }
        )
        dists = dist_frame.groupby(["uid", "period_day"], as_index=False)["onn_km"].sum()
    else:
        dists = pd.DataFrame(
            {
                "uid": pd.Series(dtype=np.int64),
                "period_day": pd.Series(dtype=np.int64),
                "onn_km": pd.Series(dtype=np.float64),
            }
        )
    out = times.merge(dists, on=["uid", "period_day"], how="left")
    out["onn_km"] = out["onn_km"].astype(np.float64).fillna(0.0)
    return out


def _daytype_days(spec: PeriodSpec, daytype: str) -> list[int]:
    if daytype == "weekday":
        wanted = {DayType.WEEKDAY}
    elif daytype == "offday":
        wanted = {DayType.WEEKEND, DayType.HOLIDAY}
    else:
        raise InputError(f"unknown daytype '{daytype}' (use 'weekday' or 'offday')")
    return [d for d in range(1, spec.length + 1) if spec.day_type(d) in wanted]


def onn_group_distribution(
    onn_daily: pd.DataFrame,
    spec: PeriodSpec,
    classes: pd.DataFrame,
    daytype: str,
    metric: str,
    edges,
    zero_bin: bool = False,
) -> pd.DataFrame:
    """Returner/explorer composition per bin of average daily ONN metric.

    Users are averaged over their observed days of the requested daytype
    first; empty bins are emitted with zero counts, not dropped.
    """
    from .cohorts import assign_bins, bin_labels
    from .metrics import Label

    column = {"time": "onn_min", "distance": "onn_km"}.get(metric)
    if column is None:
        raise InputError(f"unknown metric '{metric}' (use 'time' or 'distance')")
    days = _daytype_days(spec, daytype)
    sub = onn_daily[onn_daily["period_day"].isin(days)]
    per_user = sub.groupby("uid")[column].mean()
    joined = per_user.to_frame("value").join(classes[["label"]], how="inner")
    bins = assign_bins(joined["value"].to_numpy(dtype=np.float64), edges, zero_bin)
    labels = bin_labels(edges, zero_bin)
    rows = []
    for b, lab in enumerate(labels):
        in_bin = joined[bins == b]
        n = len(in_bin)
        n_ret = int((in_bin["label"] == Label.RETURNER.value).sum())
        rows.append(
            {
                "bin": b,
                "bin_label": lab,
                "n_users": n,
                "returner_pct": 100.0 * n_ret / n if n else np.nan,
                "explorer_pct": 100.0 * (n - n_ret) / n if n else np.nan,
            }
        )
    return pd.DataFrame(rows)


# ---------------------------------------------------------------------------
# POI statistics


class POIGrid:
    """Per-cell point-of-interest counts.

    Cells absent from the input read as zero; their number is kept as a
    coverage diagnostic and surfaced as a warning at load time.
    """

    def __init__(self, counts: np.ndarray, n_missing_cells: int = 0) -> None:
        counts = np.asarray(counts, dtype=np.int64)
        if counts.shape != (GRID_SIZE, GRID_SIZE):
            raise InputError(f"POI grid must be {GRID_SIZE}x{GRID_SIZE}")
        if (counts < 0).any():
            raise InputError("POI counts must be non-negative")
        self.counts = counts
        self.n_missing_cells = n_missing_cells

    @classmethod
    def from_csv(cls, path: str | Path) -> "POIGrid":
        path = Path(path)
        if not path.exists():
            raise InputError(f"POI file not found: {path}")
        frame = pd.read_csv(path)
        cols = list(frame.columns)
        if cols == ["x", "y", "POI_count"]:
            counts_col = "POI_count"
        elif cols == ["x", "y", "category", "count"]:
            frame = frame.groupby(["x", "y"], as_index=False)["count"].sum()
            counts_col = "count"
        else:
            raise InputError(
                f"{path}: expected header 'x,y,POI_count' or 'x,y,category,count', got {cols}"
            )
        x = frame["x"].to_numpy(dtype=np.int64)
        y = frame["y"].to_numpy(dtype=np.int64)
        if ((x < 1) | (x > GRID_SIZE) | (y < 1) | (y > GRID_SIZE)).any():
            raise InputError(f"{path}: POI coordinates outside the grid")
        grid = np.zeros((GRID_SIZE, GRID_SIZE), dtype=np.int64)
        np.add.at(grid, (x - 1, y - 1), frame[counts_col].to_numpy(dtype=np.int64))
        covered = np.zeros((GRID_SIZE, GRID_SIZE), dtype=bool)
        covered[x - 1, y - 1] = True
        n_missing = int((~covered).sum())
        if n_missing:
            warnings.warn(
                f"POI grid covers {covered.sum()} of {GRID_SIZE * GRID_SIZE} cells; "
                f"{n_missing} missing cells read as 0",
                stacklevel=2,
            )
        return cls(grid, n_missing)

    def value(self, cell: Cell) -> int:
        return int(self.counts[cell.x - 1, cell.y - 1])

    def values_at(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return self.counts[np.asarray(x) - 1, np.asarray(y) - 1]


def home_neighborhood_poi(nbhd: Neighborhood, poi: POIGrid) -> float:
    """Mean POI count over the neighborhood's (clipped) member cells."""
    values = [poi.value(cell) for cell in nbhd.members]
    return float(np.mean(values))


def poi_onn_stats(
    view: PeriodView,
    homes: Mapping[int, HomeLocation],
    groups: pd.Series,
    poi: POIGrid,
    spec: PeriodSpec,
    daytype: str,
    radius: int = DEFAULT_RADIUS,
    weighting: str = "visits",
) -> pd.DataFrame:
    """Mean POI count of outside-neighborhood visits per transition group.

    ``visits`` weighting averages over observation records; the
    ``distinct_cells`` alternative averages each (user, cell) pair once.
    """
    if weighting not in ("visits", "distinct_cells"):
        raise InputError(f"unknown POI weighting '{weighting}'")
    days = set(_daytype_days(spec, daytype))
    hx, hy, known = _home_arrays(view.users, homes)
    uidx = np.searchsorted(view.users, view.uid)
    day_mask = np.isin(view.period_day, list(days))
    keep = known[uidx] & day_mask
    xs = view.x[keep].astype(np.int64)
    ys = view.y[keep].astype(np.int64)
    outside = np.maximum(
        np.abs(xs - hx[uidx[keep]]), np.abs(ys - hy[uidx[keep]])
    ) > radius
    frame = pd.DataFrame(
        {
            "uid": view.uid[keep][outside],
            "x": xs[outside],
            "y": ys[outside],
            "poi": poi.values_at(xs[outside], ys[outside]),
        }
    )
    if weighting == "distinct_cells":
        frame = frame.drop_duplicates(subset=["uid", "x", "y"])
    merged = frame.merge(groups.rename("group"), left_on="uid", right_index=True, how="inner")
    rows = []
    for g in sorted(groups.unique().tolist()):
        sub = merged[merged["group"] == g]
        rows.append(
            {
                "group": g,
                "mean_poi": float(sub["poi"].mean()) if len(sub) else np.nan,
                "n_visits": len(sub),
            }
        )
    return pd.DataFrame(rows)


def home_neighborhood_poi_by_group(
    homes: Mapping[int, HomeLocation],
    groups: pd.Series,
    poi: POIGrid,
    radius: int = DEFAULT_RADIUS,
) -> pd.DataFrame:
    """Mean over each group's users of their home-neighborhood POI mean."""
    rows = []
    per_user = {
        uid: home_neighborhood_poi(neighborhood(home.cell, radius), poi)
        for uid, home in homes.items()
        if uid in groups.index
    }
    series = pd.Series(per_user, name="poi")
    for g in sorted(groups.unique().tolist()):
        members = groups.index[groups == g]
        values = series.reindex(members).dropna()
        rows.append(
            {
                "group": g,
                "mean_poi": float(values.mean()) if len(values) else np.nan,
                "n_users": len(values),
            }
        )
    return pd.DataFrame(rows)


# ---------------------------------------------------------------------------
# spatial grids


@dataclass(frozen=True)
class SpatialGrid:
    """One per-cell statistic with contributor counts and a mask flag."""

    statistic: str
    values: np.ndarray      # (GRID_SIZE, GRID_SIZE), NaN where no data
    user_count: np.ndarray  # contributing users per cell
    min_users: int

    @property
    def masked(self) -> np.ndarray:
        return self.user_count < self.min_users

    def to_frame(self) -> pd.DataFrame:
        xs, ys = np.meshgrid(
            np.arange(1, GRID_SIZE + 1), np.arange(1, GRID_SIZE + 1), indexing="ij"
        )
        return pd.DataFrame(
            {
                "x": xs.ravel(),
                "y": ys.ravel(),
                "value": self.values.ravel(),
                "user_count": self.user_count.ravel(),
                "masked": self.masked.ravel(),
            }
        )


def spatial_grid(
    statistic: str,
    *,
    classes: pd.DataFrame | None = None,
    homes: Mapping[int, HomeLocation] | None = None,
    stays: StayTable | None = None,
    group_members: np.ndarray | None = None,
    min_users: int = 5,
) -> SpatialGrid:
    """Per-cell population statistic.

    ``returner_share_by_home`` needs classes and homes;
    ``stops_per_person`` and ``avg_stay_minutes`` need stays plus the
    uid array of the group being mapped (group size is that array's
    length). Cells under ``min_users`` contributors keep their value but
    carry the mask flag.
    """
    if statistic == "returner_share_by_home":
        if classes is None or homes is None:
            raise InputError("returner_share_by_home needs classes and homes")
        return _returner_share_grid(classes, homes, min_users)
    if statistic in ("stops_per_person", "avg_stay_minutes"):
        if stays is None:
            raise InputError(f"{statistic} needs a stay table")
        if group_members is None:
            group_members = np.unique(stays.uid)
        return _stay_grid(statistic, stays, np.asarray(group_members), min_users)
    raise InputError(f"unknown spatial statistic '{statistic}'")


def _returner_share_grid(
    classes: pd.DataFrame, homes: Mapping[int, HomeLocation], min_users: int
) -> SpatialGrid:
    from .metrics import Label

    values = np.full((GRID_SIZE, GRID_SIZE), np.nan)
    users = np.zeros((GRID_SIZE, GRID_SIZE), dtype=np.int64)
    returners = np.zeros((GRID_SIZE, GRID_SIZE), dtype=np.int64)
    labels = classes["label"]
    for uid, home in homes.items():
        if uid not in labels.index:
            continue
        i, j = home.cell.x - 1, home.cell.y - 1
        users[i, j] += 1
        if labels.loc[uid] == Label.RETURNER.value:
            returners[i, j] += 1
    nonzero = users > 0
    values[nonzero] = 100.0 * returners[nonzero] / users[nonzero]
    return SpatialGrid("returner_share_by_home", values, users, min_users)


def _stay_grid(
    statistic: str, stays: StayTable, group_members: np.ndarray, min_users: int
) -> SpatialGrid:
    group_members = np.unique(group_members)
    member_mask = np.isin(stays.uid, group_members)
    cells = stays.cell[member_mask]
    uids = stays.uid[member_mask]
    durations = stays.n_slots[member_mask] * SLOT_MINUTES
    values = np.full((GRID_SIZE, GRID_SIZE), np.nan)
    counts2d = np.zeros((GRID_SIZE, GRID_SIZE), dtype=np.int64)
    xi = cells // GRID_SIZE
    yi = cells % GRID_SIZE
    np.add.at(counts2d, (xi, yi), 1)
    user_count = np.zeros((GRID_SIZE, GRID_SIZE), dtype=np.int64)
    pair = np.unique(cells * np.int64(2**32) + np.searchsorted(group_members, uids))
    np.add.at(user_count, ((pair // 2**32) // GRID_SIZE, (pair // 2**32) % GRID_SIZE), 1)
    if statistic == "stops_per_person":
        if len(group_members) == 0:
            raise InputError("group has no members")
        nonzero = counts2d > 0
        values[nonzero] = counts2d[nonzero] / len(group_members)
    else:
        total_min = np.zeros((GRID_SIZE, GRID_SIZE), dtype=np.float64)
        np.add.at(total_min, (xi, yi), durations)
        nonzero = counts2d > 0
        values[nonzero] = total_min[nonzero] / counts2d[nonzero]
    return SpatialGrid(statistic, values, user_count, min_users)
