"""Population-level analyses built on per-user classifications.

Functions here consume the classification frames produced by
``metrics.classify_population`` (indexed by uid, carrying ``k`` in
``attrs``) plus per-user daily metric tables, and emit tidy tables for
the report layer.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from . import fitting
from .errors import InputError
from .metrics import (
    DEFAULT_CELL_KM,
    Label,
    _population_entries,
    classify_population,
    segment_stays_all,
)
from .stats_tests import TestResult, ks_two_sample, mann_whitney_u
from .store import DAY_MAX, DayType, PeriodSpec, PeriodView, TrajectoryStore, select_period

TRANSITION_GROUPS = ("R-R", "R-E", "E-E", "E-R")


@dataclass(frozen=True)
class SkDistribution:
    """Histogram of the ratio of top-k to total radius across users."""

    k: int
    bin_edges: np.ndarray
    shares: np.ndarray
    mass_at_zero: float
    mass_at_one: float
    n: int


def sk_distribution(classes: pd.DataFrame, bin_width: float = 0.05) -> SkDistribution:
    s = classes["s_k"].to_numpy(dtype=np.float64)
    if len(s) == 0:
        raise InputError("no classified users")
    top = max(float(s.max()), bin_width)
    n_bins = int(np.ceil(top / bin_width - 1e-9))
    edges = np.arange(n_bins + 1) * bin_width
    edges[-1] = max(edges[-1], top)  # close the last bin on max S_k
    hist, _ = np.histogram(s, bins=edges)
    return SkDistribution(
        k=int(classes.attrs.get("k", 0)),
        bin_edges=edges,
        shares=hist / len(s),
        mass_at_zero=float((s == 0.0).mean()),
        mass_at_one=float((s == 1.0).mean()),
        n=len(s),
    )


@dataclass(frozen=True)
class ClassShareCurve:
    period: str
    k_values: tuple[int, ...]
    returner_pct: np.ndarray
    explorer_pct: np.ndarray
    n_classified: int
    n_absent: int


def share_by_k(
    view: PeriodView,
    k_range: Iterable[int] = range(2, 11),
    cell_km: float = DEFAULT_CELL_KM,
    threshold: float = 0.5,
    returners_high: bool = True,
    weighting: str = "records",
) -> ClassShareCurve:
    """Percent returners/explorers at each k over users with period data."""
    ks = tuple(k_range)
    ret = np.zeros(len(ks))
    n_classified = 0
    for i, k in enumerate(ks):
        classes = classify_population(
            view, k, cell_km, threshold, returners_high, weighting
        )
        n_classified = len(classes)
        if n_classified:
            ret[i] = 100.0 * (classes["label"] == Label.RETURNER.value).mean()
    return ClassShareCurve(
        period=view.spec.name,
        k_values=ks,
        returner_pct=ret,
        explorer_pct=100.0 - ret,
        n_classified=n_classified,
        n_absent=len(view.absent_users),
    )


def crossover_k(curve: ClassShareCurve) -> int | None:
    """Smallest k where returners reach at least the explorer share."""
    for k, r, e in zip(curve.k_values, curve.returner_pct, curve.explorer_pct):
        if r >= e:
            return k
    return None


@dataclass(frozen=True)
class WindowResult:
    window: tuple[int, int]
    curve: ClassShareCurve
    crossover: int | None


def window_sweep(
    store: TrajectoryStore,
    windows: Mapping[str, tuple[int, int]],
    k_range: Iterable[int] = range(2, 11),
    cell_km: float = DEFAULT_CELL_KM,
    threshold: float = 0.5,
    returners_high: bool = True,
    weighting: str = "records",
) -> dict[str, WindowResult]:
    """Re-run the share-by-k analysis independently per observation window."""
    out: dict[str, WindowResult] = {}
    for name, (start, end) in windows.items():
        if not (0 <= start <= end <= DAY_MAX):
            raise InputError(f"window '{name}' [{start}, {end}] outside the day range")
        spec = PeriodSpec(name=name, start_day=start, end_day=end)
        view = select_period(store, spec)
        curve = share_by_k(view, k_range, cell_km, threshold, returners_high, weighting)
        out[name] = WindowResult(window=(start, end), curve=curve, crossover=crossover_k(curve))
    return out


@dataclass(frozen=True)
class TransitionMatrix:
    """Counts and row-conditional shares of the four label transitions."""

    k: int
    counts: dict[str, int]
    row_shares: dict[str, float]  # percent of the first-period label's users
    n_users: int
    n_only_first: int
    n_only_second: int


def transition_groups(
    first_classes: pd.DataFrame, second_classes: pd.DataFrame
) -> pd.Series:
    """Per-user transition group over users classified in both periods."""
    if first_classes.attrs.get("k") != second_classes.attrs.get("k"):
        raise InputError("classifications must use the same k")
    joined = first_classes[["label"]].join(
        second_classes[["label"]], how="inner", lsuffix="_a", rsuffix="_b"
    )
    group = (
        joined["label_a"].str[0].str.upper() + "-" + joined["label_b"].str[0].str.upper()
    )
    group.name = "group"
    return group


def transition_matrix(
    first_classes: pd.DataFrame, second_classes: pd.DataFrame
) -> TransitionMatrix:
    groups = transition_groups(first_classes, second_classes)
    counts = {g: int((groups == g).sum()) for g in TRANSITION_GROUPS}
    totals = {
        "R": counts["R-R"] + counts["R-E"],
        "E": counts["E-E"] + counts["E-R"],
    }
    row_shares = {
        g: (100.0 * counts[g] / totals[g[0]]) if totals[g[0]] else float("nan")
        for g in TRANSITION_GROUPS
    }
    both = set(groups.index)
    return TransitionMatrix(
        k=int(first_classes.attrs.get("k", 0)),
        counts=counts,
        row_shares=row_shares,
        n_users=len(groups),
        n_only_first=len(set(first_classes.index) - both),
        n_only_second=len(set(second_classes.index) - both),
    )


# ---------------------------------------------------------------------------
# binned daily distributions


def bin_labels(edges: Sequence[float], zero_bin: bool = False) -> list[str]:
    labels = []
    if zero_bin:
        labels.append("0")
    for lo, hi in zip(edges[:-1], edges[1:]):
        labels.append(f"{lo:g}-{hi:g}")
    labels.append(f">{edges[-1]:g}")
    return labels


def assign_bins(
    values: np.ndarray, edges: Sequence[float], zero_bin: bool = False
) -> np.ndarray:
    """Bin index per value: [e0,e1), ..., [e_last, inf); optional exact-zero bin."""
    edges = np.asarray(edges, dtype=np.float64)
    idx = np.digitize(values, edges[1:], right=False)
    if zero_bin:
        idx = idx + 1
        idx[values == 0.0] = 0
    return idx


def daily_group_distribution(
    daily_values: pd.DataFrame,
    value_column: str,
    groups: pd.Series,
    edges: Sequence[float],
    total_population: int,
    zero_bin: bool = False,
) -> pd.DataFrame:
    """Per-day, per-group binned shares of the total grouped population.

    ``daily_values`` must have uid and period_day columns. Shares are
    relative to ``total_population``, so a day's panel sums to the share
    of users observed that day. Every (day, group, bin) combination is
    emitted, including zeros.
    """
    if total_population <= 0:
        raise InputError("total_population must be positive")
    labels = bin_labels(edges, zero_bin)
    merged = daily_values.merge(
        groups.rename("group"), left_on="uid", right_index=True, how="inner"
    )
    merged["bin"] = assign_bins(
        merged[value_column].to_numpy(dtype=np.float64), edges, zero_bin
    )
    counts = (
        merged.groupby(["period_day", "group", "bin"]).size().rename("count").reset_index()
    )
    days = sorted(daily_values["period_day"].unique().tolist())
    group_names = sorted(groups.unique().tolist())
    full_index = pd.MultiIndex.from_product(
        [days, group_names, range(len(labels))], names=["period_day", "group", "bin"]
    )
    counts = counts.set_index(["period_day", "group", "bin"]).reindex(full_index, fill_value=0)
    out = counts.reset_index()
    out["bin_label"] = [labels[i] for i in out["bin"]]
    out["share_pct"] = 100.0 * out["count"] / total_population
    return out[["period_day", "group", "bin", "bin_label", "count", "share_pct"]]


# ---------------------------------------------------------------------------
# entropy by class


@dataclass(frozen=True)
class EntropyByClass:
    period: str
    returner_bits: np.ndarray
    explorer_bits: np.ndarray
    ks: TestResult | None
    mwu: TestResult | None
    skipped: bool
    significant_at_01: bool | None


def entropy_by_class(
    entropy_frame: pd.DataFrame, classes: pd.DataFrame, period: str
) -> EntropyByClass:
    """Split per-user entropies by label and test the two samples."""
    joined = entropy_frame.join(classes[["label"]], how="inner")
    ret = joined.loc[joined["label"] == Label.RETURNER.value, "bits"].to_numpy()
    exp = joined.loc[joined["label"] == Label.EXPLORER.value, "bits"].to_numpy()
    if len(ret) < 2 or len(exp) < 2:
        return EntropyByClass(period, ret, exp, None, None, True, None)
    ks = ks_two_sample(ret, exp)
    mwu = mann_whitney_u(ret, exp)
    return EntropyByClass(
        period=period,
        returner_bits=ret,
        explorer_bits=exp,
        ks=ks,
        mwu=mwu,
        skipped=False,
        significant_at_01=bool(ks.p_value < 0.01 and mwu.p_value < 0.01),
    )


# ---------------------------------------------------------------------------
# per-day fits and activity


def daily_rg_samples(
    view: PeriodView, cell_km: float = DEFAULT_CELL_KM
) -> dict[int, np.ndarray]:
    """Per period-day radii of gyration computed from that day's records only."""
    out: dict[int, np.ndarray] = {}
    for day in range(1, view.spec.length + 1):
        mask = view.period_day == day
        if not mask.any():
            out[day] = np.empty(0, dtype=np.float64)
            continue
        sub = _DayRecords(view, mask)
        entries = _population_entries(sub)
        frame = _rg_only(entries, cell_km)
        out[day] = frame
    return out


class _DayRecords:
    """Minimal view-like shim over one day's records."""

    def __init__(self, view: PeriodView, mask: np.ndarray) -> None:
        self.uid = view.uid[mask]
        self.x = view.x[mask]
        self.y = view.y[mask]

    def cell_codes(self) -> np.ndarray:
        from .store import cell_code

        return cell_code(self.x, self.y)


def _rg_only(entries, cell_km: float) -> np.ndarray:
    n_users = len(entries.users)
    eu = entries.entry_user
    n_tot = np.bincount(eu, weights=entries.counts, minlength=n_users)
    cm_x = np.bincount(eu, weights=entries.counts * entries.entry_x, minlength=n_users) / n_tot
    cm_y = np.bincount(eu, weights=entries.counts * entries.entry_y, minlength=n_users) / n_tot
    dev = (entries.entry_x - cm_x[eu]) ** 2 + (entries.entry_y - cm_y[eu]) ** 2
    msq = np.bincount(eu, weights=entries.counts * dev, minlength=n_users) / n_tot
    return cell_km * np.sqrt(msq)


def daily_fit_table(
    view: PeriodView,
    cell_km: float = DEFAULT_CELL_KM,
    x_min_policy: str | float = "sample_min",
) -> pd.DataFrame:
    """One fit row set per period-day, flagging unfittable days."""
    samples = daily_rg_samples(view, cell_km)
    frames = []
    for day, sample in samples.items():
        table = fitting.fit_table({"total": sample}, x_min_policy)
        table.insert(0, "period_day", day)
        frames.append(table)
    return pd.concat(frames, ignore_index=True)


def daily_activity(
    store: TrajectoryStore, bridge_gap_slots: int = 0, n_days: int = DAY_MAX + 1
) -> np.ndarray:
    """Total stop count per store day across all users."""
    stays = segment_stays_all(store, bridge_gap_slots)
    return np.bincount(stays.day, minlength=n_days)
