"""Report builders: one function per CLI subcommand.

Each builder returns tidy tables (name -> DataFrame) plus notes for the
run manifest. Builders are deterministic: identical inputs and
configuration produce byte-identical CSV output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import cohorts, entropy, fitting, metrics, onn, synth
from .config import RunConfig
from .errors import ComputationError, InputError
from .metrics import Label
from .stats_tests import ks_two_sample, mann_whitney_u
from .store import IngestReport, PeriodView, TrajectoryStore, ingest_csv, select_period


@dataclass
class ReportBundle:
    tables: dict[str, pd.DataFrame] = field(default_factory=dict)
    notes: dict = field(default_factory=dict)


class Workspace:
    """Shared lazily-computed artifacts for one run."""

    def __init__(self, config: RunConfig) -> None:
        self.config = config
        self._store: TrajectoryStore | None = None
        self._ingest: IngestReport | None = None
        self._views: dict[str, PeriodView] = {}
        self._classes: dict[tuple[str, int], pd.DataFrame] = {}
        self._homes: dict[int, metrics.HomeLocation] | None = None

    @property
    def store(self) -> TrajectoryStore:
        if self._store is None:
            if self.config.data is None:
                raise InputError("no trajectory file given (use --data or the config file)")
            self._store, self._ingest = ingest_csv(self.config.data, self.config.dedup_policy)
        return self._store

    @property
    def ingest_report(self) -> IngestReport:
        self.store
        assert self._ingest is not None
        return self._ingest

    def view(self, period: str) -> PeriodView:
        if period not in self._views:
            specs = self.config.period_specs()
            if period not in specs:
                raise InputError(f"unknown period '{period}'")
            self._views[period] = select_period(self.store, specs[period])
        return self._views[period]

    def classes(self, period: str, k: int | None = None) -> pd.DataFrame:
        k = self.config.k if k is None else k
        key = (period, k)
        if key not in self._classes:
            self._classes[key] = metrics.classify_population(
                self.view(period),
                k,
                self.config.cell_km,
                self.config.threshold,
                self.config.returners_high,
                self.config.visit_weighting,
            )
        return self._classes[key]

    @property
    def homes(self) -> dict[int, metrics.HomeLocation]:
        if self._homes is None:
            self._homes = metrics.infer_home(self.store, self.config.usual_days)
        return self._homes

    def period_names(self, only: str | None) -> list[str]:
        names = [p.name for p in self.config.periods]
        if only is None:
            return names
        if only not in names:
            raise InputError(f"unknown period '{only}'")
        return [only]


def build_validate(ws: Workspace, period: str | None = None) -> ReportBundle:
    report = ws.ingest_report
    table = pd.DataFrame(
        [
            {
                "records_read": report.records_read,
                "records_kept": report.records_kept,
                "records_dropped": report.records_dropped,
                "distinct_users": report.distinct_users,
            }
        ]
    )
    return ReportBundle(tables={"ingest_report": table})


def build_metrics(ws: Workspace, period: str | None = None) -> ReportBundle:
    frames = [
        metrics.export_user_metrics(
            ws.view(name),
            ws.config.k,
            ws.homes,
            ws.config.cell_km,
            ws.config.threshold,
            ws.config.returners_high,
            ws.config.visit_weighting,
        )
        for name in ws.period_names(period)
    ]
    out = pd.concat(frames, ignore_index=True).sort_values(["period", "uid"])
    return ReportBundle(tables={"user_metrics": out.reset_index(drop=True)})


def build_classify(ws: Workspace, period: str | None = None) -> ReportBundle:
    rows = []
    for name in ws.period_names(period):
        classes = ws.classes(name).reset_index()
        classes.insert(1, "period", name)
        rows.append(
            classes[["uid", "period", "rg_km", "rgk_km", "s_k", "label"]].rename(
                columns={"rg_km": "r_g_km", "rgk_km": "r_g_k_km"}
            )
        )
    out = pd.concat(rows, ignore_index=True).sort_values(["period", "uid"])
    return ReportBundle(tables={"classifications": out.reset_index(drop=True)})


def _topk_samples(ws: Workspace, period: str) -> dict[str, np.ndarray]:
    samples: dict[str, np.ndarray] = {}
    for k in (2, 3, 4, 5):
        samples[str(k)] = ws.classes(period, k)["rgk_km"].to_numpy()
    samples["total"] = ws.classes(period, ws.config.k)["rg_km"].to_numpy()
    return samples


def build_fit(ws: Workspace, period: str | None = None) -> ReportBundle:
    frames = []
    for name in ws.period_names(period):
        samples = _topk_samples(ws, name)
        if all(len(s[s > 0]) == 0 for s in samples.values()):
            raise ComputationError(f"degenerate sample: no positive radii in period '{name}'")
        table = fitting.fit_table(samples, ws.config.x_min_policy)
        table.insert(0, "period", name)
        frames.append(table)
    out = pd.concat(frames, ignore_index=True)
    return ReportBundle(tables={"fits_topk": out})


def build_fit_daily(ws: Workspace, period: str | None = None) -> ReportBundle:
    frames = []
    for name in ws.period_names(period):
        table = cohorts.daily_fit_table(
            ws.view(name), ws.config.cell_km, ws.config.x_min_policy
        )
        table.insert(0, "period", name)
        frames.append(table)
    out = pd.concat(frames, ignore_index=True)
    return ReportBundle(tables={"fits_daily": out})


def build_entropy(ws: Workspace, period: str | None = None) -> ReportBundle:
    per_user_frames = []
    test_rows = []
    excluded = {}
    for name in ws.period_names(period):
        frame, n_excluded = entropy.population_entropy(ws.view(name), ws.config.threads)
        excluded[name] = n_excluded
        classes = ws.classes(name)
        joined = frame.join(classes[["label"]], how="left").reset_index()
        joined.insert(1, "period", name)
        joined = joined.rename(columns={"bits": "entropy_bits"})
        per_user_frames.append(joined[["uid", "period", "label", "entropy_bits", "n"]])
        split = cohorts.entropy_by_class(frame, classes, name)
        if not split.skipped:
            test_rows.append(
                {
                    "comparison_name": "returner_vs_explorer",
                    "period": name,
                    "metric": "entropy_bits",
                    "ks_D": split.ks.statistic,
                    "ks_p": split.ks.p_value,
                    "mwu_U": split.mwu.statistic,
                    "mwu_p": split.mwu.p_value,
                    "n1": split.ks.n1,
                    "n2": split.ks.n2,
                    "significant_01": split.significant_at_01,
                }
            )
    out = pd.concat(per_user_frames, ignore_index=True).sort_values(["period", "uid"])
    bundle = ReportBundle(
        tables={
            "entropy_per_user": out.reset_index(drop=True),
            "entropy_tests": pd.DataFrame(test_rows),
        },
        notes={"users_excluded_too_short": excluded},
    )
    return bundle


def build_cohort(ws: Workspace, period: str | None = None) -> ReportBundle:
    sk_rows = []
    mass_rows = []
    share_rows = []
    for name in ws.period_names(period):
        for k in (2, 3, 4, 5):
            dist = cohorts.sk_distribution(ws.classes(name, k))
            for lo, hi, share in zip(
                dist.bin_edges[:-1], dist.bin_edges[1:], dist.shares
            ):
                sk_rows.append(
                    {
                        "period": name, "k": k, "bin_lo": lo, "bin_hi": hi,
                        "share": share,
                    }
                )
            mass_rows.append(
                {
                    "period": name, "k": k, "mass_at_zero": dist.mass_at_zero,
                    "mass_at_one": dist.mass_at_one, "n_users": dist.n,
                }
            )
        curve = cohorts.share_by_k(
            ws.view(name),
            range(ws.config.k_min, ws.config.k_max + 1),
            ws.config.cell_km,
            ws.config.threshold,
            ws.config.returners_high,
            ws.config.visit_weighting,
        )
        for k, r, e in zip(curve.k_values, curve.returner_pct, curve.explorer_pct):
            share_rows.append(
                {
                    "period": name, "k": k, "returner_pct": r, "explorer_pct": e,
                    "n_classified": curve.n_classified, "n_absent": curve.n_absent,
                    "crossover_k": cohorts.crossover_k(curve),
                }
            )
    sweep = cohorts.window_sweep(
        ws.store,
        ws.config.windows,
        range(ws.config.k_min, ws.config.k_max + 1),
        ws.config.cell_km,
        ws.config.threshold,
        ws.config.returners_high,
        ws.config.visit_weighting,
    )
    sweep_rows = []
    crossover_rows = []
    for name in sorted(sweep):
        result = sweep[name]
        crossover_rows.append(
            {
                "window": name, "start_day": result.window[0],
                "end_day": result.window[1],
                "crossover_k": result.crossover if result.crossover is not None else -1,
            }
        )
        for k, r, e in zip(
            result.curve.k_values, result.curve.returner_pct, result.curve.explorer_pct
        ):
            sweep_rows.append(
                {
                    "window": name, "start_day": result.window[0],
                    "end_day": result.window[1], "k": k,
                    "returner_pct": r, "explorer_pct": e,
                }
            )
    return ReportBundle(
        tables={
            "sk_histogram": pd.DataFrame(sk_rows),
            "sk_point_masses": pd.DataFrame(mass_rows),
            "share_by_k": pd.DataFrame(share_rows),
            "window_sweep": pd.DataFrame(sweep_rows),
            "window_crossovers": pd.DataFrame(crossover_rows),
        }
    )


def _transition_inputs(ws: Workspace) -> tuple[pd.DataFrame, pd.DataFrame]:
    names = [p.name for p in ws.config.periods]
    if len(names) < 2:
        raise InputError("transition analyses need two configured periods")
    return ws.classes(names[0]), ws.classes(names[1])


def build_transitions(ws: Workspace, period: str | None = None) -> ReportBundle:
    first, second = _transition_inputs(ws)
    matrix = cohorts.transition_matrix(first, second)
    rows = [
        {
            "group": g,
            "count": matrix.counts[g],
            "row_share_pct": matrix.row_shares[g],
        }
        for g in cohorts.TRANSITION_GROUPS
    ]
    groups = cohorts.transition_groups(first, second)
    group_table = groups.reset_index().sort_values("uid")
    return ReportBundle(
        tables={
            "transitions": pd.DataFrame(rows),
            "transition_groups": group_table.reset_index(drop=True),
        },
        notes={
            "k": matrix.k,
            "users_in_both": matrix.n_users,
            "users_only_first_period": matrix.n_only_first,
            "users_only_second_period": matrix.n_only_second,
        },
    )


def _daily_metric_tables(
    ws: Workspace, name: str
) -> tuple[pd.DataFrame, pd.DataFrame]:
    view = ws.view(name)
    dist = metrics.daily_max_distance_table(view, ws.homes, ws.config.cell_km)
    dwell = metrics.daily_nonhome_minutes_table(view, ws.homes)
    return dist, dwell


def build_daily(ws: Workspace, period: str | None = None) -> ReportBundle:
    first, second = _transition_inputs(ws)
    trans_groups = cohorts.transition_groups(first, second)
    dist_rows = []
    dwell_rows = []
    test_rows = []
    for name in ws.period_names(period):
        classes = ws.classes(name)
        class_groups = classes["label"]
        dist, dwell = _daily_metric_tables(ws, name)
        for grouping, groups in (("class", class_groups), ("transition_group", trans_groups)):
            total = len(groups)
            if total == 0:
                continue
            d1 = cohorts.daily_group_distribution(
                dist, "km", groups, ws.config.bins.max_distance_km, total
            )
            d1.insert(0, "grouping", grouping)
            d1.insert(0, "period", name)
            dist_rows.append(d1)
            d2 = cohorts.daily_group_distribution(
                dwell, "minutes", groups, ws.config.bins.dwelling_min, total
            )
            d2.insert(0, "grouping", grouping)
            d2.insert(0, "period", name)
            dwell_rows.append(d2)
        # two-sample tests on pooled user-day values by class
        for metric_name, table, column in (
            ("max_distance_km", dist, "km"),
            ("non_home_dwelling_min", dwell, "minutes"),
        ):
            merged = table.merge(
                class_groups.rename("label"), left_on="uid", right_index=True
            )
            a = merged.loc[merged["label"] == Label.RETURNER.value, column].to_numpy()
            b = merged.loc[merged["label"] == Label.EXPLORER.value, column].to_numpy()
            if len(a) < 2 or len(b) < 2:
                continue
            ks = ks_two_sample(a, b)
            mwu = mann_whitney_u(a, b)
            test_rows.append(
                {
                    "comparison_name": "returner_vs_explorer",
                    "period": name,
                    "metric": metric_name,
                    "ks_D": ks.statistic,
                    "ks_p": ks.p_value,
                    "mwu_U": mwu.statistic,
                    "mwu_p": mwu.p_value,
                    "n1": ks.n1,
                    "n2": ks.n2,
                    "significant_01": bool(ks.p_value < 0.01 and mwu.p_value < 0.01),
                }
            )
    return ReportBundle(
        tables={
            "daily_max_distance": pd.concat(dist_rows, ignore_index=True),
            "daily_dwelling": pd.concat(dwell_rows, ignore_index=True),
            "group_tests": pd.DataFrame(test_rows),
        }
    )


def build_onn(ws: Workspace, period: str | None = None, poi: onn.POIGrid | None = None) -> ReportBundle:
    time_rows = []
    dist_rows = []
    poi_rows = []
    specs = ws.config.period_specs()
    for name in ws.period_names(period):
        view = ws.view(name)
        classes = ws.classes(name)
        daily = onn.onn_daily_table(
            view,
            ws.homes,
            ws.config.neighborhood_radius,
            ws.config.cell_km,
            ws.config.onn_attribution,
        )
        for daytype in ("weekday", "offday"):
            t = onn.onn_group_distribution(
                daily, specs[name], classes, daytype, "time",
                ws.config.bins.onn_time_min,
            )
            t.insert(0, "daytype", daytype)
            t.insert(0, "period", name)
            time_rows.append(t)
            d = onn.onn_group_distribution(
                daily, specs[name], classes, daytype, "distance",
                ws.config.bins.onn_distance_km, zero_bin=True,
            )
            d.insert(0, "daytype", daytype)
            d.insert(0, "period", name)
            dist_rows.append(d)
    tables = {
        "onn_time_composition": pd.concat(time_rows, ignore_index=True),
        "onn_distance_composition": pd.concat(dist_rows, ignore_index=True),
    }
    notes: dict = {}
    if poi is not None:
        first, second = _transition_inputs(ws)
        trans_groups = cohorts.transition_groups(first, second)
        for name in ws.period_names(period):
            for daytype in ("weekday", "offday"):
                stats = onn.poi_onn_stats(
                    ws.view(name), ws.homes, trans_groups, poi, specs[name],
                    daytype, ws.config.neighborhood_radius, ws.config.poi_weighting,
                )
                stats.insert(0, "daytype", daytype)
                stats.insert(0, "period", name)
                poi_rows.append(stats)
        tables["poi_onn_means"] = pd.concat(poi_rows, ignore_index=True)
        tables["poi_home_neighborhood"] = onn.home_neighborhood_poi_by_group(
            ws.homes, trans_groups, poi, ws.config.neighborhood_radius
        )
        notes["poi_missing_cells"] = poi.n_missing_cells
    else:
        notes["poi_tables"] = "skipped: no POI input supplied"
    return ReportBundle(tables=tables, notes=notes)


def build_spatial(ws: Workspace, period: str | None = None) -> ReportBundle:
    tables: dict[str, pd.DataFrame] = {}
    for name in ws.period_names(period):
        view = ws.view(name)
        classes = ws.classes(name)
        stays = metrics.segment_stays_all(view, ws.config.bridge_gap_slots)
        share = onn.spatial_grid(
            "returner_share_by_home",
            classes=classes,
            homes=ws.homes,
            min_users=ws.config.min_users,
        )
        tables[f"grid_returner_share_{name}"] = share.to_frame()
        for label in (None, Label.RETURNER.value, Label.EXPLORER.value):
            suffix = "all" if label is None else label
            members = (
                classes.index.to_numpy()
                if label is None
                else classes.index[classes["label"] == label].to_numpy()
            )
            for stat in ("stops_per_person", "avg_stay_minutes"):
                grid = onn.spatial_grid(
                    stat,
                    stays=stays,
                    group_members=members,
                    min_users=ws.config.min_users,
                )
                tables[f"grid_{stat}_{name}_{suffix}"] = grid.to_frame()
    return ReportBundle(tables=tables)


def build_activity(ws: Workspace, period: str | None = None) -> ReportBundle:
    counts = cohorts.daily_activity(ws.store, ws.config.bridge_gap_slots)
    table = pd.DataFrame({"day": np.arange(len(counts)), "stops": counts})
    return ReportBundle(tables={"daily_activity": table})


def build_synth(config: RunConfig, scenario: synth.ScenarioSpec) -> ReportBundle:
    frame, sidecar = synth.generate_population(scenario)
    bundle = ReportBundle(tables={"synthetic_trajectories": frame})
    bundle.notes["ground_truth"] = sidecar
    bundle.notes["n_users"] = len(sidecar["users"])
    return bundle
