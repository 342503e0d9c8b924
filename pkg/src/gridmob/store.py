"""Trajectory ingestion, validation, and period selection.

Input data is a CSV with header ``uid,d,t,x,y``: one row per observation
of a user in a 30-minute slot at a grid cell. Records are stored
columnar, sorted by (uid, day, slot), so every per-user computation
reads a contiguous slice.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, NamedTuple

import numpy as np
import pandas as pd

from .errors import DuplicateKeyError, InputError, RowError, SchemaError

GRID_SIZE = 200
N_CELLS = GRID_SIZE * GRID_SIZE
DAY_MIN, DAY_MAX = 0, 74
SLOT_MIN, SLOT_MAX = 0, 47
SLOT_MINUTES = 30

CSV_COLUMNS = ["uid", "d", "t", "x", "y"]

#: Column bounds used for row validation, keyed by CSV column name.
_BOUNDS = {
    "uid": (0, None),
    "d": (DAY_MIN, DAY_MAX),
    "t": (SLOT_MIN, SLOT_MAX),
    "x": (1, GRID_SIZE),
    "y": (1, GRID_SIZE),
}


class Cell(NamedTuple):
    """Grid cell with 1-based coordinates in [1, 200]."""

    x: int
    y: int


class ObservationRecord(NamedTuple):
    uid: int
    day: int
    slot: int
    cell: Cell


class DayType(enum.Enum):
    WEEKDAY = "weekday"
    WEEKEND = "weekend"
    HOLIDAY = "holiday"


def cell_code(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Map 1-based (x, y) to a dense 0-based cell index."""
    return (np.asarray(x, dtype=np.int64) - 1) * GRID_SIZE + (np.asarray(y, dtype=np.int64) - 1)


def code_to_cell(code: int) -> Cell:
    return Cell(int(code) // GRID_SIZE + 1, int(code) % GRID_SIZE + 1)


def default_calendar(period_length: int = 15) -> dict[int, DayType]:
    """Day-type mapping for a period starting on a Monday.

    Period-day 1 is a Monday; days 6 and 7 of each week are weekend;
    the second Monday (period-day 8) is a holiday.
    """
    if period_length < 1:
        raise InputError("period_length must be >= 1")
    calendar: dict[int, DayType] = {}
    for day in range(1, period_length + 1):
        dow = (day - 1) % 7  # 0 = Monday
        if day == 8:
            calendar[day] = DayType.HOLIDAY
        elif dow in (5, 6):
            calendar[day] = DayType.WEEKEND
        else:
            calendar[day] = DayType.WEEKDAY
    return calendar


@dataclass(frozen=True)
class PeriodSpec:
    """A named, inclusive day range with a 1-based per-day calendar."""

    name: str
    start_day: int
    end_day: int
    calendar: Mapping[int, DayType] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not (DAY_MIN <= self.start_day <= self.end_day <= DAY_MAX):
            raise InputError(
                f"period '{self.name}': day range [{self.start_day}, {self.end_day}] "
                f"must satisfy {DAY_MIN} <= start <= end <= {DAY_MAX}"
            )
        calendar = dict(self.calendar) if self.calendar else default_calendar(self.length)
        if sorted(calendar) != list(range(1, self.length + 1)):
            raise InputError(
                f"period '{self.name}': calendar must cover period-days 1..{self.length} exactly once"
            )
        object.__setattr__(self, "calendar", calendar)

    @property
    def length(self) -> int:
        return self.end_day - self.start_day + 1

    def day_type(self, period_day: int) -> DayType:
        return self.calendar[period_day]


#: Periods used throughout unless a config overrides them.
DEFAULT_PERIODS = {
    "normal": (43, 57),
    "emergency": (60, 74),
}


def default_period(name: str) -> PeriodSpec:
    start, end = DEFAULT_PERIODS[name]
    return PeriodSpec(name=name, start_day=start, end_day=end)


@dataclass(frozen=True)
class IngestReport:
    records_read: int
    records_kept: int
    records_dropped: int
    distinct_users: int

    def __post_init__(self) -> None:
        assert self.records_kept + self.records_dropped == self.records_read


class TrajectoryStore:
    """Immutable columnar store of observation records.

    Arrays are sorted by (uid, day, slot) with no duplicate (uid, day,
    slot) keys, so each user occupies one contiguous slice.
    """

    def __init__(
        self,
        uid: np.ndarray,
        day: np.ndarray,
        slot: np.ndarray,
        x: np.ndarray,
        y: np.ndarray,
    ) -> None:
        self.uid = np.ascontiguousarray(uid, dtype=np.int64)
        self.day = np.ascontiguousarray(day, dtype=np.int16)
        self.slot = np.ascontiguousarray(slot, dtype=np.int16)
        self.x = np.ascontiguousarray(x, dtype=np.int16)
        self.y = np.ascontiguousarray(y, dtype=np.int16)
        for arr in (self.uid, self.day, self.slot, self.x, self.y):
            arr.setflags(write=False)
        self.users, self._user_starts = _user_index(self.uid)

    def __len__(self) -> int:
        return len(self.uid)

    @property
    def n_users(self) -> int:
        return len(self.users)

    def user_slice(self, uid: int) -> slice:
        """Index range of a user's records; empty slice if the user is absent."""
        i = np.searchsorted(self.users, uid)
        if i == len(self.users) or self.users[i] != uid:
            return slice(0, 0)
        return slice(self._user_starts[i], self._user_starts[i + 1])

    def cell_codes(self) -> np.ndarray:
        return cell_code(self.x, self.y)

    def iter_user_records(self, uid: int) -> Iterator[ObservationRecord]:
        sl = self.user_slice(uid)
        for i in range(sl.start, sl.stop):
            yield ObservationRecord(
                int(self.uid[i]), int(self.day[i]), int(self.slot[i]),
                Cell(int(self.x[i]), int(self.y[i])),
            )


def _user_index(uid_sorted: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if len(uid_sorted) == 0:
        return np.empty(0, dtype=np.int64), np.zeros(1, dtype=np.int64)
    users, starts = np.unique(uid_sorted, return_index=True)
    starts = np.append(starts, len(uid_sorted))
    return users, starts


class PeriodView:
    """Records of one period, re-indexed to 1-based period days.

    Users present in the underlying store but without records in the
    range are reported in ``absent_users`` rather than silently dropped.
    """

    def __init__(self, store: TrajectoryStore, spec: PeriodSpec) -> None:
        mask = (store.day >= spec.start_day) & (store.day <= spec.end_day)
        self.spec = spec
        self.uid = store.uid[mask]
        self.day = store.day[mask]
        self.slot = store.slot[mask]
        self.x = store.x[mask]
        self.y = store.y[mask]
        self.period_day = (self.day - spec.start_day + 1).astype(np.int16)
        self.users, self._user_starts = _user_index(self.uid)
        present = set(self.users.tolist())
        self.absent_users = np.array(
            [u for u in store.users.tolist() if u not in present], dtype=np.int64
        )
        self.empty = len(self.uid) == 0

    def __len__(self) -> int:
        return len(self.uid)

    @property
    def n_users(self) -> int:
        return len(self.users)

    def user_slice(self, uid: int) -> slice:
        i = np.searchsorted(self.users, uid)
        if i == len(self.users) or self.users[i] != uid:
            return slice(0, 0)
        return slice(self._user_starts[i], self._user_starts[i + 1])

    def cell_codes(self) -> np.ndarray:
        return cell_code(self.x, self.y)


def select_period(store: TrajectoryStore, spec: PeriodSpec) -> PeriodView:
    """Filtered, re-indexed view of the store for one period.

    Selecting the same range from the resulting records again would
    yield the identical view (the operation is idempotent).
    """
    return PeriodView(store, spec)


def ingest_csv(
    path: str | Path,
    dedup_policy: str = "keep_first",
) -> tuple[TrajectoryStore, IngestReport]:
    """Read, validate, and index a trajectory CSV.

    dedup_policy:
        ``keep_first`` -- among rows sharing a (uid, day, slot) key, keep
        the first in file order and count the rest as dropped.
        ``reject``     -- raise on the first duplicate key.
    """
    if dedup_policy not in ("keep_first", "reject"):
        raise InputError(f"unknown dedup policy '{dedup_policy}'")
    path = Path(path)
    if not path.exists():
        raise InputError(f"trajectory file not found: {path}")

    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise SchemaError(f"{path}: file is empty, expected header {','.join(CSV_COLUMNS)}")
    if list(frame.columns) != CSV_COLUMNS:
        raise SchemaError(
            f"{path}: expected header '{','.join(CSV_COLUMNS)}', got '{','.join(frame.columns)}'"
        )

    columns: dict[str, np.ndarray] = {}
    for name in CSV_COLUMNS:
        raw = frame[name]
        values = pd.to_numeric(raw, errors="coerce")
        bad = values.isna() | (values != np.floor(values))
        if bad.any():
            row = int(bad.idxmax()) + 2  # +1 header, +1 one-based
            raise RowError(row, name, f"not an integer: {raw.iloc[bad.idxmax()]!r}")
        columns[name] = values.to_numpy(dtype=np.int64)
        lo, hi = _BOUNDS[name]
        out_of_range = columns[name] < lo if hi is None else (
            (columns[name] < lo) | (columns[name] > hi)
        )
        if out_of_range.any():
            idx = int(np.argmax(out_of_range))
            bound = f">= {lo}" if hi is None else f"in [{lo}, {hi}]"
            raise RowError(idx + 2, name, f"value {columns[name][idx]} not {bound}")

    uid, day, slot = columns["uid"], columns["d"], columns["t"]
    n_read = len(uid)

    # Stable sort keeps file order within equal keys, so "first" below
    # means first in file order.
    order = np.lexsort((slot, day, uid))
    uid_s, day_s, slot_s = uid[order], day[order], slot[order]
    if n_read > 1:
        dup = (uid_s[1:] == uid_s[:-1]) & (day_s[1:] == day_s[:-1]) & (slot_s[1:] == slot_s[:-1])
        dup = np.concatenate(([False], dup))
    else:
        dup = np.zeros(n_read, dtype=bool)

    if dup.any() and dedup_policy == "reject":
        # Report the duplicate whose second occurrence comes earliest in the file.
        offender = int(order[dup].min())
        raise DuplicateKeyError(
            f"row {offender + 2}: duplicate key "
            f"(uid={uid[offender]}, d={day[offender]}, t={slot[offender]})"
        )

    keep = ~dup
    store = TrajectoryStore(
        uid=uid_s[keep],
        day=day_s[keep],
        slot=slot_s[keep],
        x=columns["x"][order][keep],
        y=columns["y"][order][keep],
    )
    report = IngestReport(
        records_read=n_read,
        records_kept=len(store),
        records_dropped=int(dup.sum()),
        distinct_users=store.n_users,
    )
    return store, report
