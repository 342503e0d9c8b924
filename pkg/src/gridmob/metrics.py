"""Per-user mobility metrics on gridded trajectories.

Distances are Euclidean between integer cell centers, scaled by
``cell_km`` kilometers per grid unit (default 0.5). A "visit" is one
30-minute observation record unless stay-weighted histograms are
requested explicitly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping, NamedTuple

import numpy as np
import pandas as pd

from .errors import InputError
from .store import (
    GRID_SIZE,
    N_CELLS,
    SLOT_MINUTES,
    Cell,
    PeriodView,
    TrajectoryStore,
    cell_code,
)

DEFAULT_CELL_KM = 0.5
DEFAULT_NIGHT_SLOTS = frozenset(range(40, 48)) | frozenset(range(0, 16))
DEFAULT_USUAL_DAYS = (0, 59)


class Label(str, enum.Enum):
    RETURNER = "returner"
    EXPLORER = "explorer"


@dataclass(frozen=True)
class VisitHistogram:
    """Cell -> visit-count map for one user in one period.

    ``cells_x``/``cells_y``/``counts`` are parallel arrays sorted by
    cell code; ``n_total`` is the total visit count and
    ``center_of_mass`` the visit-weighted mean coordinate.
    """

    user: int
    period: str
    cells_x: np.ndarray
    cells_y: np.ndarray
    counts: np.ndarray
    n_total: int
    n_cells: int
    center_of_mass: tuple[float, float]

    def count_of(self, cell: Cell) -> int:
        for i in range(len(self.counts)):
            if self.cells_x[i] == cell.x and self.cells_y[i] == cell.y:
                return int(self.counts[i])
        return 0


@dataclass(frozen=True)
class TopKProfile:
    """The k most-visited cells, ranked by count desc, then x asc, then y asc."""

    k: int
    cells_x: np.ndarray
    cells_y: np.ndarray
    counts: np.ndarray
    n_top: int
    center_of_mass: tuple[float, float]


class ClassOutcome(NamedTuple):
    s_k: float
    label: Label


@dataclass(frozen=True)
class ClassificationRecord:
    user: int
    period: str
    rg_km: float
    rgk_km: float
    s_k: float
    label: Label


@dataclass(frozen=True)
class StaySegment:
    """Maximal same-day run of records at one cell; duration counts observed slots."""

    user: int
    day: int
    cell: Cell
    start_slot: int
    end_slot: int
    duration_min: int


@dataclass(frozen=True)
class HomeLocation:
    user: int
    cell: Cell
    night_visit_count: int
    used_fallback: bool = False


def build_visit_histogram(
    view: PeriodView, user: int, weighting: str = "records"
) -> VisitHistogram | None:
    """Visit histogram of one user in the period; None when the user has no data."""
    sl = view.user_slice(user)
    if sl.start == sl.stop:
        return None
    if weighting == "records":
        codes = cell_code(view.x[sl], view.y[sl])
    elif weighting == "stays":
        stays = segment_stays(view, user)
        codes = np.array(
            [cell_code(np.int64(s.cell.x), np.int64(s.cell.y)) for s in stays],
            dtype=np.int64,
        )
    else:
        raise InputError(f"unknown visit weighting '{weighting}'")
    uniq, counts = np.unique(codes, return_counts=True)
    xs = (uniq // GRID_SIZE + 1).astype(np.int64)
    ys = (uniq % GRID_SIZE + 1).astype(np.int64)
    n = int(counts.sum())
    cm_x = float((counts * xs).sum() / n)
    cm_y = float((counts * ys).sum() / n)
    return VisitHistogram(
        user=user,
        period=view.spec.name,
        cells_x=xs,
        cells_y=ys,
        counts=counts.astype(np.int64),
        n_total=n,
        n_cells=len(uniq),
        center_of_mass=(cm_x, cm_y),
    )


def radius_of_gyration(hist: VisitHistogram, cell_km: float = DEFAULT_CELL_KM) -> float:
    """Root-mean-square distance of visits from the center of mass, in km."""
    cm_x, cm_y = hist.center_of_mass
    sq = (
        hist.counts * ((hist.cells_x - cm_x) ** 2 + (hist.cells_y - cm_y) ** 2)
    ).sum() / hist.n_total
    return cell_km * float(np.sqrt(sq))


def top_k_profile(hist: VisitHistogram, k: int) -> TopKProfile:
    if k < 1:
        raise InputError("k must be >= 1")
    order = np.lexsort((hist.cells_y, hist.cells_x, -hist.counts))
    top = np.sort(order[: min(k, hist.n_cells)])  # back to cell-code order
    xs, ys, counts = hist.cells_x[top], hist.cells_y[top], hist.counts[top]
    n_top = int(counts.sum())
    cm_x = float((counts * xs).sum() / n_top)
    cm_y = float((counts * ys).sum() / n_top)
    return TopKProfile(
        k=k, cells_x=xs, cells_y=ys, counts=counts, n_top=n_top,
        center_of_mass=(cm_x, cm_y),
    )


def k_radius_of_gyration(
    hist: VisitHistogram, k: int, cell_km: float = DEFAULT_CELL_KM
) -> float:
    """Radius of gyration restricted to the k most-visited cells.

    Equals the full radius exactly when the user has at most k distinct
    cells (the profile then is the whole histogram).
    """
    if k < 2:
        raise InputError("k must be >= 2")
    if hist.n_cells <= k:
        return radius_of_gyration(hist, cell_km)
    prof = top_k_profile(hist, k)
    cm_x, cm_y = prof.center_of_mass
    sq = (
        prof.counts * ((prof.cells_x - cm_x) ** 2 + (prof.cells_y - cm_y) ** 2)
    ).sum() / prof.n_top
    return cell_km * float(np.sqrt(sq))


def classify(
    rg_km: float,
    rgk_km: float,
    threshold: float = 0.5,
    returners_high: bool = True,
) -> ClassOutcome:
    """Label a user from the ratio of the two radii.

    A single-location user (zero total radius) is maximally recurrent:
    the ratio is defined as 1 and the label is Returner. The threshold
    itself belongs to the Returner side.
    """
    if rg_km < 0 or rgk_km < 0:
        raise InputError("radii must be non-negative")
    if rg_km == 0.0:
        return ClassOutcome(1.0, Label.RETURNER if returners_high else Label.EXPLORER)
    s_k = rgk_km / rg_km
    if returners_high:
        label = Label.RETURNER if s_k >= threshold else Label.EXPLORER
    else:
        label = Label.RETURNER if s_k < threshold else Label.EXPLORER
    return ClassOutcome(s_k, label)


# ---------------------------------------------------------------------------
# population-scale (vectorized) paths


@dataclass(frozen=True)
class _EntryTable:
    """Flattened (user, cell) -> count table for a whole population."""

    users: np.ndarray      # sorted unique uids
    entry_user: np.ndarray  # index into users, ascending
    entry_x: np.ndarray
    entry_y: np.ndarray
    counts: np.ndarray


def _entries_from_codes(uid: np.ndarray, codes: np.ndarray) -> _EntryTable:
    users, uidx = np.unique(uid, return_inverse=True)
    key = uidx.astype(np.int64) * N_CELLS + codes
    ukey, counts = np.unique(key, return_counts=True)
    entry_user = ukey // N_CELLS
    entry_code = ukey % N_CELLS
    return _EntryTable(
        users=users,
        entry_user=entry_user,
        entry_x=(entry_code // GRID_SIZE + 1).astype(np.float64),
        entry_y=(entry_code % GRID_SIZE + 1).astype(np.float64),
        counts=counts.astype(np.float64),
    )


def _population_entries(view: PeriodView, weighting: str = "records") -> _EntryTable:
    if weighting == "records":
        return _entries_from_codes(view.uid, view.cell_codes())
    if weighting == "stays":
        stays = segment_stays_all(view)
        return _entries_from_codes(stays.uid, stays.cell)
    raise InputError(f"unknown visit weighting '{weighting}'")


def _gyration_radii(entries: _EntryTable, k: int, cell_km: float) -> pd.DataFrame:
    """Per-user total and top-k radii from a flattened entry table."""
    n_users = len(entries.users)
    eu = entries.entry_user
    n_tot = np.bincount(eu, weights=entries.counts, minlength=n_users)
    n_cells = np.bincount(eu, minlength=n_users)
    cm_x = np.bincount(eu, weights=entries.counts * entries.entry_x, minlength=n_users) / n_tot
    cm_y = np.bincount(eu, weights=entries.counts * entries.entry_y, minlength=n_users) / n_tot
    dev = (entries.entry_x - cm_x[eu]) ** 2 + (entries.entry_y - cm_y[eu]) ** 2
    msq = np.bincount(eu, weights=entries.counts * dev, minlength=n_users) / n_tot
    rg = cell_km * np.sqrt(msq)

    # rank entries per user by count desc, x asc, y asc, then keep rank < k
    order = np.lexsort((entries.entry_y, entries.entry_x, -entries.counts, eu))
    starts = np.concatenate(([0], np.cumsum(np.bincount(eu, minlength=n_users))))
    rank = np.arange(len(eu)) - starts[eu[order]]
    selected = np.sort(order[rank < k])  # restore cell-code order for stable sums

    eu_k = eu[selected]
    c_k = entries.counts[selected]
    x_k = entries.entry_x[selected]
    y_k = entries.entry_y[selected]
    n_top = np.bincount(eu_k, weights=c_k, minlength=n_users)
    cmk_x = np.bincount(eu_k, weights=c_k * x_k, minlength=n_users) / n_top
    cmk_y = np.bincount(eu_k, weights=c_k * y_k, minlength=n_users) / n_top
    dev_k = (x_k - cmk_x[eu_k]) ** 2 + (y_k - cmk_y[eu_k]) ** 2
    msq_k = np.bincount(eu_k, weights=c_k * dev_k, minlength=n_users) / n_top
    rgk = cell_km * np.sqrt(msq_k)

    return pd.DataFrame(
        {
            "rg_km": rg,
            "rgk_km": rgk,
            "n_records": n_tot.astype(np.int64),
            "n_cells": n_cells.astype(np.int64),
        },
        index=pd.Index(entries.users, name="uid"),
    )


def classify_population(
    view: PeriodView,
    k: int,
    cell_km: float = DEFAULT_CELL_KM,
    threshold: float = 0.5,
    returners_high: bool = True,
    weighting: str = "records",
) -> pd.DataFrame:
    """Radii, ratio, and label for every user with data in the period.

    Returns a frame indexed by uid with columns rg_km, rgk_km, s_k,
    label, n_records, n_cells. Users absent from the period are not in
    the frame (the view lists them separately).
    """
    if k < 2:
        raise InputError("k must be >= 2")
    entries = _population_entries(view, weighting)
    if len(entries.users) == 0:
        frame = pd.DataFrame(
            columns=["rg_km", "rgk_km", "s_k", "label", "n_records", "n_cells"],
            index=pd.Index([], name="uid"),
        )
        frame.attrs["k"] = k
        return frame
    frame = _gyration_radii(entries, k, cell_km)
    degenerate = frame["rg_km"].to_numpy() == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        s_k = frame["rgk_km"].to_numpy() / frame["rg_km"].to_numpy()
    s_k[degenerate] = 1.0
    frame["s_k"] = s_k
    if returners_high:
        returner = s_k >= threshold
    else:
        returner = s_k < threshold
        returner[degenerate] = True
    frame["label"] = np.where(returner, Label.RETURNER.value, Label.EXPLORER.value)
    frame.attrs["k"] = k
    frame.attrs["period"] = view.spec.name
    return frame


def classification_record(
    view: PeriodView,
    user: int,
    k: int,
    cell_km: float = DEFAULT_CELL_KM,
    threshold: float = 0.5,
    weighting: str = "records",
) -> ClassificationRecord | None:
    hist = build_visit_histogram(view, user, weighting)
    if hist is None:
        return None
    rg = radius_of_gyration(hist, cell_km)
    rgk = k_radius_of_gyration(hist, k, cell_km)
    s_k, label = classify(rg, rgk, threshold)
    return ClassificationRecord(user, view.spec.name, rg, rgk, s_k, label)


# ---------------------------------------------------------------------------
# home inference


def infer_home(
    store: TrajectoryStore,
    usual_days: tuple[int, int] = DEFAULT_USUAL_DAYS,
    night_slots: frozenset[int] = DEFAULT_NIGHT_SLOTS,
) -> dict[int, HomeLocation]:
    """Most-visited night-window cell per user over the usual days.

    Users with no night-window records fall back to the argmax over all
    their usual-day records and are flagged. Ties break toward smaller
    x, then smaller y.
    """
    day_mask = (store.day >= usual_days[0]) & (store.day <= usual_days[1])
    slot_arr = store.slot
    night_mask = np.zeros(len(slot_arr), dtype=bool)
    for s in night_slots:
        night_mask |= slot_arr == s
    homes: dict[int, HomeLocation] = {}
    _argmax_homes(store, day_mask & night_mask, homes, used_fallback=False)
    missing = [u for u in store.users.tolist() if u not in homes]
    if missing:
        fallback: dict[int, HomeLocation] = {}
        _argmax_homes(store, day_mask, fallback, used_fallback=True)
        for u in missing:
            if u in fallback:
                homes[u] = fallback[u]
    return homes


def _argmax_homes(
    store: TrajectoryStore, mask: np.ndarray, out: dict[int, HomeLocation], used_fallback: bool
) -> None:
    uid = store.uid[mask]
    if len(uid) == 0:
        return
    codes = cell_code(store.x[mask], store.y[mask])
    entries = _entries_from_codes(uid, codes)
    order = np.lexsort((entries.entry_y, entries.entry_x, -entries.counts, entries.entry_user))
    eu_sorted = entries.entry_user[order]
    first = np.concatenate(([True], eu_sorted[1:] != eu_sorted[:-1]))
    for pos in np.flatnonzero(first):
        e = order[pos]
        u = int(entries.users[entries.entry_user[e]])
        out[u] = HomeLocation(
            user=u,
            cell=Cell(int(entries.entry_x[e]), int(entries.entry_y[e])),
            night_visit_count=int(entries.counts[e]),
            used_fallback=used_fallback,
        )


# ---------------------------------------------------------------------------
# stay segmentation


@dataclass(frozen=True)
class StayTable:
    """Columnar stay segments for a whole store or view."""

    uid: np.ndarray
    day: np.ndarray        # store day for stores, period day for views
    cell: np.ndarray       # dense cell code
    start_slot: np.ndarray
    end_slot: np.ndarray
    n_slots: np.ndarray

    def __len__(self) -> int:
        return len(self.uid)

    @property
    def duration_min(self) -> np.ndarray:
        return self.n_slots * SLOT_MINUTES


def segment_stays_all(
    data: TrajectoryStore | PeriodView, bridge_gap_slots: int = 0
) -> StayTable:
    """All maximal same-day, same-cell runs, allowing gaps up to the bridge.

    A run continues while consecutive records of one user on one day
    stay in the same cell with slot gaps of at most 1 + bridge_gap_slots.
    """
    n = len(data.uid)
    day = data.period_day if isinstance(data, PeriodView) else data.day
    codes = data.cell_codes()
    if n == 0:
        empty = np.empty(0, dtype=np.int64)
        return StayTable(empty, empty, empty, empty, empty, empty)
    gap = 1 + bridge_gap_slots
    brk = (
        (data.uid[1:] != data.uid[:-1])
        | (day[1:] != day[:-1])
        | (codes[1:] != codes[:-1])
        | ((data.slot[1:] - data.slot[:-1]) > gap)
    )
    starts = np.concatenate(([0], np.flatnonzero(brk) + 1))
    ends = np.concatenate((np.flatnonzero(brk), [n - 1]))
    return StayTable(
        uid=data.uid[starts],
        day=day[starts].astype(np.int64),
        cell=codes[starts],
        start_slot=data.slot[starts].astype(np.int64),
        end_slot=data.slot[ends].astype(np.int64),
        n_slots=ends - starts + 1,
    )


def segment_stays(
    view: PeriodView | TrajectoryStore, user: int, bridge_gap_slots: int = 0
) -> list[StaySegment]:
    sl = view.user_slice(user)
    if sl.start == sl.stop:
        return []
    day_all = view.period_day if isinstance(view, PeriodView) else view.day
    day = day_all[sl]
    slot = view.slot[sl]
    codes = cell_code(view.x[sl], view.y[sl])
    gap = 1 + bridge_gap_slots
    segments: list[StaySegment] = []
    start = 0
    for i in range(1, len(day) + 1):
        if (
            i == len(day)
            or day[i] != day[i - 1]
            or codes[i] != codes[i - 1]
            or slot[i] - slot[i - 1] > gap
        ):
            segments.append(
                StaySegment(
                    user=user,
                    day=int(day[start]),
                    cell=Cell(int(codes[start]) // GRID_SIZE + 1, int(codes[start]) % GRID_SIZE + 1),
                    start_slot=int(slot[start]),
                    end_slot=int(slot[i - 1]),
                    duration_min=(i - start) * SLOT_MINUTES,
                )
            )
            start = i
    return segments


# ---------------------------------------------------------------------------
# home-referenced daily metrics


def _home_arrays(
    users: np.ndarray, homes: Mapping[int, HomeLocation]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Home coordinates aligned to ``users``; mask of users with a known home."""
    hx = np.zeros(len(users), dtype=np.float64)
    hy = np.zeros(len(users), dtype=np.float64)
    known = np.zeros(len(users), dtype=bool)
    for i, u in enumerate(users.tolist()):
        home = homes.get(u)
        if home is not None:
            hx[i], hy[i] = home.cell.x, home.cell.y
            known[i] = True
    return hx, hy, known


def max_distance_from_home(
    view: PeriodView,
    user: int,
    home: HomeLocation,
    scope: str = "per_period",
    cell_km: float = DEFAULT_CELL_KM,
) -> float | dict[int, float]:
    """Farthest observed cell from home, in km, over the period or per day.

    Per-day scope returns a mapping keyed by period day; days without
    records are simply absent.
    """
    sl = view.user_slice(user)
    if sl.start == sl.stop:
        return {} if scope == "per_day" else float("nan")
    dist = cell_km * np.sqrt(
        (view.x[sl] - home.cell.x) ** 2.0 + (view.y[sl] - home.cell.y) ** 2.0
    )
    if scope == "per_period":
        return float(dist.max())
    if scope == "per_day":
        out: dict[int, float] = {}
        pdays = view.period_day[sl]
        for d in np.unique(pdays):
            out[int(d)] = float(dist[pdays == d].max())
        return out
    raise InputError(f"unknown scope '{scope}'")


def non_home_dwelling(
    view: PeriodView, user: int, home: HomeLocation, day: int
) -> int:
    """Minutes of that period day observed away from the home cell."""
    sl = view.user_slice(user)
    if sl.start == sl.stop:
        return 0
    on_day = view.period_day[sl] == day
    away = (view.x[sl] != home.cell.x) | (view.y[sl] != home.cell.y)
    return int((on_day & away).sum()) * SLOT_MINUTES


def daily_max_distance_table(
    view: PeriodView,
    homes: Mapping[int, HomeLocation],
    cell_km: float = DEFAULT_CELL_KM,
) -> pd.DataFrame:
    """(uid, period_day, km) rows for every user-day with data and a known home."""
    hx, hy, known = _home_arrays(view.users, homes)
    uidx = np.searchsorted(view.users, view.uid)
    keep = known[uidx]
    dist = cell_km * np.sqrt(
        (view.x[keep] - hx[uidx[keep]]) ** 2 + (view.y[keep] - hy[uidx[keep]]) ** 2
    )
    frame = pd.DataFrame(
        {
            "uid": view.uid[keep],
            "period_day": view.period_day[keep].astype(np.int64),
            "km": dist,
        }
    )
    return (
        frame.groupby(["uid", "period_day"], as_index=False)["km"].max()
    )


def daily_nonhome_minutes_table(
    view: PeriodView, homes: Mapping[int, HomeLocation]
) -> pd.DataFrame:
    """(uid, period_day, minutes) away-from-home dwelling per user-day."""
    hx, hy, known = _home_arrays(view.users, homes)
    uidx = np.searchsorted(view.users, view.uid)
    keep = known[uidx]
    away = (
        (view.x[keep] != hx[uidx[keep]]) | (view.y[keep] != hy[uidx[keep]])
    ).astype(np.int64)
    frame = pd.DataFrame(
        {
            "uid": view.uid[keep],
            "period_day": view.period_day[keep].astype(np.int64),
            "away": away,
        }
    )
    out = frame.groupby(["uid", "period_day"], as_index=False)["away"].sum()
    out["minutes"] = out.pop("away") * SLOT_MINUTES
    return out


def export_user_metrics(
    view: PeriodView,
    k: int,
    homes: Mapping[int, HomeLocation],
    cell_km: float = DEFAULT_CELL_KM,
    threshold: float = 0.5,
    returners_high: bool = True,
    weighting: str = "records",
) -> pd.DataFrame:
    """Per-user export table: uid, period, radii, ratio, label, home cell."""
    classes = classify_population(
        view, k, cell_km, threshold, returners_high, weighting
    )
    rows = classes.reset_index()
    rows.insert(1, "period", view.spec.name)
    home_x = [homes[u].cell.x if u in homes else -1 for u in rows["uid"]]
    home_y = [homes[u].cell.y if u in homes else -1 for u in rows["uid"]]
    rows["home_x"] = home_x
    rows["home_y"] = home_y
    return rows[
        ["uid", "period", "rg_km", "rgk_km", "s_k", "label", "home_x", "home_y"]
    ].rename(columns={"rg_km": "r_g_km", "rgk_km": "r_g_k_km"})
