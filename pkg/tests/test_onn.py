from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

from gridmob.errors import InputError
from gridmob.metrics import HomeLocation, segment_stays_all
from gridmob.onn import (
    POIGrid,
    home_neighborhood_poi,
    home_neighborhood_poi_by_group,
    neighborhood,
    onn_daily_table,
    onn_group_distribution,
    onn_metrics,
    poi_onn_stats,
    spatial_grid,
)
from gridmob.store import Cell, PeriodSpec, ingest_csv, select_period


def make_view(csv_factory, rows, start=0, end=14, name="p"):
    store, _ = ingest_csv(csv_factory(rows))
    return select_period(store, PeriodSpec(name, start, end))


def home_at(uid, x, y):
    return HomeLocation(user=uid, cell=Cell(x, y), night_visit_count=1)


# ---------------------------------------------------------------------------
# neighborhoods


def test_interior_neighborhood_has_25_cells():
    nbhd = neighborhood(Cell(100, 100))
    assert len(nbhd.members) == 25
    assert Cell(100, 100) in nbhd.members


def test_corner_neighborhood_clipped_to_9():
    assert len(neighborhood(Cell(1, 1)).members) == 9


def test_chebyshev_3_is_outside():
    nbhd = neighborhood(Cell(100, 100))
    assert not nbhd.contains(Cell(103, 100))
    assert nbhd.contains(Cell(102, 102))


def test_neighborhood_symmetry_interior():
    rng = np.random.default_rng(0)
    for _ in range(50):
        a = Cell(int(rng.integers(10, 190)), int(rng.integers(10, 190)))
        b = Cell(int(rng.integers(10, 190)), int(rng.integers(10, 190)))
        assert (b in neighborhood(a).members) == (a in neighborhood(b).members)


# ---------------------------------------------------------------------------
# per-day metrics


def test_onn_all_inside(csv_factory):
    rows = [(1, 0, s, 100 + s % 2, 100) for s in range(10)]
    view = make_view(csv_factory, rows)
    result = onn_metrics(view, 1, neighborhood(Cell(100, 100)), day=1)
    assert result.onn_time_min == 0
    assert result.onn_distance_km == 0.0


def test_onn_hand_trace(csv_factory):
    rows = [(1, 0, 0, 100, 100), (1, 0, 1, 103, 100), (1, 0, 2, 103, 100)]
    view = make_view(csv_factory, rows)
    result = onn_metrics(view, 1, neighborhood(Cell(100, 100)), day=1)
    assert result.onn_time_min == 60
    assert result.onn_distance_km == pytest.approx(1.5)


def test_onn_full_day_outside(csv_factory):
    rows = [(1, 0, s, 103, 100) for s in range(48)]
    view = make_view(csv_factory, rows)
    result = onn_metrics(view, 1, neighborhood(Cell(100, 100)), day=1)
    assert result.onn_time_min == 1440


def test_onn_both_outside_attribution(csv_factory):
    # one inside->outside move and one outside->outside move
    rows = [(1, 0, 0, 100, 100), (1, 0, 1, 105, 100), (1, 0, 2, 109, 100)]
    view = make_view(csv_factory, rows)
    nbhd = neighborhood(Cell(100, 100))
    dest = onn_metrics(view, 1, nbhd, 1, attribution="destination")
    both = onn_metrics(view, 1, nbhd, 1, attribution="both_outside")
    assert dest.onn_distance_km == pytest.approx(0.5 * (5 + 4))
    assert both.onn_distance_km == pytest.approx(0.5 * 4)


def test_onn_time_conservation(csv_factory):
    rng = np.random.default_rng(1)
    rows = {}
    for uid in range(10):
        for _ in range(100):
            key = (uid, int(rng.integers(0, 5)), int(rng.integers(0, 48)))
            rows[key] = (*key, int(rng.integers(95, 115)), int(rng.integers(95, 115)))
    view = make_view(csv_factory, list(rows.values()), end=4)
    homes = {uid: home_at(uid, 100, 100) for uid in range(10)}
    table = onn_daily_table(view, homes)
    for uid in range(10):
        sl = view.user_slice(uid)
        for day in np.unique(view.period_day[sl]):
            n_records = int((view.period_day[sl] == day).sum())
            row = table[(table.uid == uid) & (table.period_day == day)]
            onn_min = int(row["onn_min"].iloc[0])
            inside_min = n_records * 30 - onn_min
            assert inside_min >= 0
            assert onn_min + inside_min == n_records * 30


def test_onn_daily_table_matches_per_user(csv_factory):
    rng = np.random.default_rng(2)
    rows = {}
    for uid in range(6):
        for _ in range(80):
            key = (uid, int(rng.integers(0, 3)), int(rng.integers(0, 48)))
            rows[key] = (*key, int(rng.integers(90, 120)), int(rng.integers(90, 120)))
    view = make_view(csv_factory, list(rows.values()), end=2)
    homes = {uid: home_at(uid, 100, 100) for uid in range(6)}
    table = onn_daily_table(view, homes)
    for uid in range(6):
        nbhd = neighborhood(Cell(100, 100))
        sl = view.user_slice(uid)
        for day in np.unique(view.period_day[sl]):
            want = onn_metrics(view, uid, nbhd, int(day))
            row = table[(table.uid == uid) & (table.period_day == day)].iloc[0]
            assert row["onn_min"] == want.onn_time_min
            assert row["onn_km"] == pytest.approx(want.onn_distance_km)


# ---------------------------------------------------------------------------
# group composition


def _two_group_classes(uids_returner, uids_explorer):
    idx = list(uids_returner) + list(uids_explorer)
    frame = pd.DataFrame(
        {"label": ["returner"] * len(uids_returner) + ["explorer"] * len(uids_explorer)},
        index=pd.Index(idx, name="uid"),
    )
    frame.attrs["k"] = 4
    return frame


def test_onn_composition_all_returners(csv_factory):
    rows = []
    for uid in range(5):
        for day in range(5):
            rows.append((uid, day, 10, 100, 100))
            rows.append((uid, day, 11, 100 + uid, 100))
    view = make_view(csv_factory, rows, end=4)
    homes = {uid: home_at(uid, 100, 100) for uid in range(5)}
    daily = onn_daily_table(view, homes)
    classes = _two_group_classes(range(5), [])
    spec = PeriodSpec("p", 0, 4)
    result = onn_group_distribution(
        daily, spec, classes, "weekday", "time", (0, 30, 60), zero_bin=False
    )
    occupied = result[result.n_users > 0]
    assert (occupied["returner_pct"] == 100.0).all()
    empty = result[result.n_users == 0]
    assert empty["returner_pct"].isna().all()


def test_onn_composition_planted_separation(csv_factory):
    # returners stay inside; explorers spend 2.5 h outside each weekday
    rows = []
    for uid in range(4):  # returners
        for day in range(5):
            rows += [(uid, day, s, 100, 100) for s in range(10, 20)]
    for uid in range(4, 8):  # explorers
        for day in range(5):
            rows += [(uid, day, s, 100, 100) for s in range(10, 15)]
            rows += [(uid, day, s, 110, 100) for s in range(15, 20)]
    view = make_view(csv_factory, rows, end=4)
    homes = {uid: home_at(uid, 100, 100) for uid in range(8)}
    daily = onn_daily_table(view, homes)
    classes = _two_group_classes(range(4), range(4, 8))
    spec = PeriodSpec("p", 0, 4)
    result = onn_group_distribution(
        daily, spec, classes, "weekday", "time", (0, 30, 60, 120, 240, 480)
    )
    under_30 = result[result.bin_label == "0-30"].iloc[0]
    assert under_30["returner_pct"] == 100.0
    bin_120_240 = result[result.bin_label == "120-240"].iloc[0]
    assert bin_120_240["explorer_pct"] == 100.0
    assert bin_120_240["n_users"] == 4


def test_onn_composition_daytype_split(csv_factory):
    # user 1 goes outside only on period-days 6 and 7 (the first weekend)
    rows = []
    for day in range(15):
        cell = 110 if day + 1 in (6, 7) else 100
        rows += [(1, day, s, cell, 100) for s in range(10, 14)]
        rows += [(2, day, s, 100, 100) for s in range(10, 14)]
    view = make_view(csv_factory, rows, end=14)
    homes = {1: home_at(1, 100, 100), 2: home_at(2, 100, 100)}
    daily = onn_daily_table(view, homes)
    classes = _two_group_classes([1], [2])
    spec = PeriodSpec("p", 0, 14)
    # weekdays: user 1 never outside -> both users average 0 (bin 0-30)
    weekday = onn_group_distribution(
        daily, spec, classes, "weekday", "time", (0, 30, 60, 120)
    )
    assert weekday[weekday.bin_label == "0-30"]["n_users"].iloc[0] == 2
    # offdays {6,7,8,13,14}: user 1 averages (120+120+0+0+0)/5 = 48 min
    offday = onn_group_distribution(
        daily, spec, classes, "offday", "time", (0, 30, 60, 120)
    )
    assert offday[offday.bin_label == "30-60"]["n_users"].iloc[0] == 1
    assert offday[offday.bin_label == "30-60"]["returner_pct"].iloc[0] == 100.0
    assert offday[offday.bin_label == "0-30"]["n_users"].iloc[0] == 1
    assert offday[offday.bin_label == "0-30"]["explorer_pct"].iloc[0] == 100.0


def test_unknown_daytype_rejected(csv_factory):
    view = make_view(csv_factory, [(1, 0, 0, 100, 100)], end=0)
    homes = {1: home_at(1, 100, 100)}
    daily = onn_daily_table(view, homes)
    classes = _two_group_classes([1], [])
    with pytest.raises(InputError):
        onn_group_distribution(
            daily, PeriodSpec("p", 0, 0), classes, "sunday", "time", (0, 30)
        )


# ---------------------------------------------------------------------------
# POI statistics


def uniform_poi(value=7):
    return POIGrid(np.full((200, 200), value, dtype=np.int64))


def test_home_neighborhood_poi_uniform():
    assert home_neighborhood_poi(neighborhood(Cell(100, 100)), uniform_poi(7)) == 7.0


def test_home_neighborhood_poi_hand_mean():
    counts = np.zeros((200, 200), dtype=np.int64)
    counts[99, 99] = 25  # cell (100, 100)
    poi = POIGrid(counts)
    assert home_neighborhood_poi(neighborhood(Cell(100, 100)), poi) == pytest.approx(1.0)


def test_poi_onn_stats_constant_field(csv_factory):
    rows = []
    for uid in range(4):
        for day in range(15):
            rows.append((uid, day, 10, 100, 100))
            rows.append((uid, day, 11, 120, 100))
    view = make_view(csv_factory, rows, end=14)
    homes = {uid: home_at(uid, 100, 100) for uid in range(4)}
    groups = pd.Series(
        ["R-R", "R-E", "E-E", "E-R"], index=pd.Index(range(4), name="uid"), name="group"
    )
    spec = PeriodSpec("p", 0, 14)
    for daytype in ("weekday", "offday"):
        stats = poi_onn_stats(view, homes, groups, uniform_poi(7), spec, daytype)
        assert (stats["mean_poi"] == 7.0).all()


def test_poi_onn_stats_visit_vs_distinct_weighting(csv_factory):
    counts = np.zeros((200, 200), dtype=np.int64)
    counts[119, 99] = 10   # (120, 100)
    counts[129, 99] = 40   # (130, 100)
    poi = POIGrid(counts)
    rows = [(1, 0, 10, 120, 100), (1, 0, 11, 120, 100), (1, 0, 12, 120, 100), (1, 0, 13, 130, 100)]
    view = make_view(csv_factory, rows, end=0)
    homes = {1: home_at(1, 100, 100)}
    groups = pd.Series(["R-R"], index=pd.Index([1], name="uid"), name="group")
    spec = PeriodSpec("p", 0, 0)
    by_visits = poi_onn_stats(view, homes, groups, poi, spec, "weekday", weighting="visits")
    assert by_visits["mean_poi"].iloc[0] == pytest.approx((3 * 10 + 40) / 4)
    by_cells = poi_onn_stats(
        view, homes, groups, poi, spec, "weekday", weighting="distinct_cells"
    )
    assert by_cells["mean_poi"].iloc[0] == pytest.approx((10 + 40) / 2)


def test_home_neighborhood_poi_by_group_uniform():
    homes = {uid: home_at(uid, 100 + uid, 100) for uid in range(4)}
    groups = pd.Series(
        ["R-R", "R-R", "E-E", "E-E"], index=pd.Index(range(4), name="uid"), name="group"
    )
    table = home_neighborhood_poi_by_group(homes, groups, uniform_poi(7))
    assert (table["mean_poi"] == 7.0).all()


def test_poi_grid_long_form_and_coverage_warning(tmp_path):
    path = tmp_path / "poi.csv"
    path.write_text("x,y,category,count\n1,1,shop,3\n1,1,cafe,2\n2,1,shop,4\n")
    with pytest.warns(UserWarning, match="missing cells"):
        grid = POIGrid.from_csv(path)
    assert grid.value(Cell(1, 1)) == 5
    assert grid.value(Cell(2, 1)) == 4
    assert grid.value(Cell(3, 3)) == 0
    assert grid.n_missing_cells == 200 * 200 - 2


def test_poi_grid_missing_file(tmp_path):
    with pytest.raises(InputError):
        POIGrid.from_csv(tmp_path / "none.csv")


def test_poi_grid_bad_header(tmp_path):
    path = tmp_path / "poi.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(InputError):
        POIGrid.from_csv(path)


# ---------------------------------------------------------------------------
# spatial grids


def test_returner_share_single_user(csv_factory):
    classes = _two_group_classes([1], [])
    homes = {1: home_at(1, 10, 10)}
    grid = spatial_grid(
        "returner_share_by_home", classes=classes, homes=homes, min_users=1
    )
    assert grid.values[9, 9] == 100.0
    assert not grid.masked[9, 9]
    assert np.isnan(grid.values[0, 0])
    assert grid.user_count.sum() == 1


def test_returner_share_masked_under_threshold():
    classes = _two_group_classes([1], [])
    homes = {1: home_at(1, 10, 10)}
    grid = spatial_grid(
        "returner_share_by_home", classes=classes, homes=homes, min_users=5
    )
    assert grid.values[9, 9] == 100.0  # value kept, flag set
    assert grid.masked[9, 9]


def test_two_cluster_population_grid(csv_factory):
    classes = _two_group_classes([1, 2], [3, 4])
    homes = {
        1: home_at(1, 10, 10), 2: home_at(2, 10, 10),
        3: home_at(3, 10, 10), 4: home_at(4, 50, 50),
    }
    grid = spatial_grid(
        "returner_share_by_home", classes=classes, homes=homes, min_users=1
    )
    assert grid.values[9, 9] == pytest.approx(100.0 * 2 / 3)
    assert grid.values[49, 49] == 0.0


def test_stops_per_person_and_mass_conservation(csv_factory):
    rng = np.random.default_rng(3)
    rows = {}
    for uid in range(8):
        for _ in range(60):
            key = (uid, int(rng.integers(0, 5)), int(rng.integers(0, 48)))
            rows[key] = (*key, int(rng.integers(1, 20)), int(rng.integers(1, 20)))
    view = make_view(csv_factory, list(rows.values()), end=4)
    stays = segment_stays_all(view)
    members = np.arange(8)
    grid = spatial_grid("stops_per_person", stays=stays, group_members=members)
    total = np.nansum(grid.values) * len(members)
    assert total == pytest.approx(len(stays), abs=1e-9)


def test_avg_stay_minutes_grid(csv_factory):
    rows = [(1, 0, 0, 5, 5), (1, 0, 1, 5, 5), (1, 0, 10, 5, 5), (2, 0, 0, 5, 5)]
    view = make_view(csv_factory, rows, end=0)
    stays = segment_stays_all(view)
    grid = spatial_grid(
        "avg_stay_minutes", stays=stays, group_members=np.array([1, 2]), min_users=1
    )
    # stays at (5,5): 60 min, 30 min, 30 min -> mean 40
    assert grid.values[4, 4] == pytest.approx(40.0)
    assert grid.user_count[4, 4] == 2


def test_grid_frame_row_major_order():
    classes = _two_group_classes([1], [])
    homes = {1: home_at(1, 10, 10)}
    grid = spatial_grid("returner_share_by_home", classes=classes, homes=homes)
    frame = grid.to_frame()
    assert len(frame) == 200 * 200
    assert frame.iloc[0]["x"] == 1 and frame.iloc[0]["y"] == 1
    assert frame.iloc[1]["x"] == 1 and frame.iloc[1]["y"] == 2
    assert frame.iloc[200]["x"] == 2 and frame.iloc[200]["y"] == 1
