from __future__ import annotations

import os
from pathlib import Path

import pandas as pd
import pytest


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(name): top-level acceptance criterion"
    )


def pytest_runtest_logreport(report):
    """One visible pass/fail line per acceptance criterion."""
    if report.when == "teardown" and report.passed:
        return
    marker_name = getattr(report, "_criterion", None)
    if report.when == "call" or (report.when == "setup" and report.skipped):
        item_markers = dict(getattr(report, "user_properties", []))
        name = item_markers.get("criterion")
        if name:
            outcome = report.outcome.upper()
            print(f"\nCRITERION {name}: {outcome}")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker and marker.args:
        report.user_properties.append(("criterion", marker.args[0]))


def dataset_path() -> Path | None:
    value = os.environ.get("GRIDMOB_YJMOB_DATA")
    if value and Path(value).exists():
        return Path(value)
    return None


def poi_path() -> Path | None:
    value = os.environ.get("GRIDMOB_YJMOB_POI")
    if value and Path(value).exists():
        return Path(value)
    return None


requires_dataset = pytest.mark.skipif(
    dataset_path() is None,
    reason="set GRIDMOB_YJMOB_DATA to the trajectory CSV to run dataset-bound checks",
)

requires_poi = pytest.mark.skipif(
    dataset_path() is None or poi_path() is None,
    reason="set GRIDMOB_YJMOB_DATA and GRIDMOB_YJMOB_POI to run POI checks",
)


def write_csv(path: Path, rows: list[tuple[int, int, int, int, int]]) -> Path:
    frame = pd.DataFrame(rows, columns=["uid", "d", "t", "x", "y"])
    frame.to_csv(path, index=False)
    return path


@pytest.fixture
def csv_factory(tmp_path):
    def make(rows, name="data.csv"):
        return write_csv(tmp_path / name, rows)

    return make
