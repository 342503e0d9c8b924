from __future__ import annotations

import json
from pathlib import Path

import pandas as pd
import pytest

from gridmob.cli import main


def run(args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synthpop")
    assert run(["synth", "--out", out, "--seed", "11", "--users-per-group", "6"]) == 0
    return out


def test_validate_three_rows_exit_zero(tmp_path, csv_factory):
    data = csv_factory([(1, 0, 0, 5, 5), (1, 0, 1, 5, 6), (2, 1, 0, 9, 9)])
    out = tmp_path / "out"
    assert run(["validate", "--data", data, "--out", out]) == 0
    report = pd.read_csv(out / "ingest_report.csv")
    assert report.iloc[0]["records_kept"] == 3
    manifest = json.loads((out / "validate_manifest.json").read_text())
    assert manifest["status"] == "ok"
    assert manifest["outputs"]["ingest_report.csv"]["rows"] == 1


def test_missing_data_is_input_error(tmp_path):
    out = tmp_path / "out"
    assert run(["validate", "--data", tmp_path / "nope.csv", "--out", out]) == 1
    manifest = json.loads((out / "validate_manifest.json").read_text())
    assert manifest["status"] == "failed"
    assert "not found" in manifest["error"]


def test_fit_degenerate_sample_exit_two(tmp_path, csv_factory):
    # single-location users only: every radius is zero
    rows = [(uid, 43, s, 30, 30) for uid in range(12) for s in range(4)]
    data = csv_factory(rows)
    out = tmp_path / "out"
    assert run(["fit", "--data", data, "--out", out]) == 2
    manifest = json.loads((out / "fit_manifest.json").read_text())
    assert manifest["status"] == "failed"
    assert "degenerate" in manifest["error"]


def test_unknown_period_is_input_error(tmp_path, csv_factory):
    data = csv_factory([(1, 43, 0, 5, 5)])
    out = tmp_path / "out"
    assert run(["classify", "--data", data, "--out", out, "--period", "lockdown"]) == 1


def test_bad_config_key_is_input_error(tmp_path, csv_factory):
    data = csv_factory([(1, 43, 0, 5, 5)])
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"nonsense": 1}))
    assert run(["classify", "--data", data, "--config", cfg, "--out", tmp_path / "o"]) == 1


def test_transitions_planted_scenario(synth_dir, tmp_path):
    data = synth_dir / "synthetic_trajectories.csv"
    out = tmp_path / "out"
    assert run(["transitions", "--data", data, "--out", out]) == 0
    table = pd.read_csv(out / "transitions.csv").set_index("group")
    assert table.loc["R-R", "count"] == 6
    assert table.loc["R-E", "count"] == 6
    assert table.loc["E-E", "count"] == 6
    assert table.loc["E-R", "count"] == 6
    assert (table["row_share_pct"] == 50.0).all()
    manifest = json.loads((out / "transitions_manifest.json").read_text())
    assert manifest["notes"]["users_in_both"] == 24


def test_reports_byte_identical_across_runs(synth_dir, tmp_path):
    data = synth_dir / "synthetic_trajectories.csv"
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    for out in (out_a, out_b):
        assert run(["classify", "--data", data, "--out", out]) == 0
    bytes_a = (out_a / "classifications.csv").read_bytes()
    bytes_b = (out_b / "classifications.csv").read_bytes()
    assert bytes_a == bytes_b
    man_a = json.loads((out_a / "classify_manifest.json").read_text())
    man_b = json.loads((out_b / "classify_manifest.json").read_text())
    man_a.pop("metadata")
    man_b.pop("metadata")
    # output paths differ only through the out key
    man_a["config"].pop("out")
    man_b["config"].pop("out")
    man_a.pop("config_hash")
    man_b.pop("config_hash")
    assert man_a == man_b


def test_manifest_echoes_defaults(synth_dir, tmp_path):
    data = synth_dir / "synthetic_trajectories.csv"
    out = tmp_path / "out"
    assert run(["classify", "--data", data, "--out", out]) == 0
    manifest = json.loads((out / "classify_manifest.json").read_text())
    config = manifest["config"]
    assert config["k"] == 4
    assert config["cell_km"] == 0.5
    assert config["threshold"] == 0.5
    assert config["x_min_policy"] == "sample_min"
    assert config["dedup_policy"] == "keep_first"
    assert manifest["inputs"]["data"]["sha256"]


def test_k_flag_overrides_config(synth_dir, tmp_path):
    data = synth_dir / "synthetic_trajectories.csv"
    out = tmp_path / "out"
    assert run(["classify", "--data", data, "--out", out, "--k", "2"]) == 0
    manifest = json.loads((out / "classify_manifest.json").read_text())
    assert manifest["config"]["k"] == 2


def test_synth_outputs_and_seed_determinism(tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert run(["synth", "--out", out_a, "--seed", "4", "--users-per-group", "2"]) == 0
    assert run(["synth", "--out", out_b, "--seed", "4", "--users-per-group", "2"]) == 0
    csv_a = (out_a / "synthetic_trajectories.csv").read_bytes()
    csv_b = (out_b / "synthetic_trajectories.csv").read_bytes()
    assert csv_a == csv_b
    truth = json.loads((out_a / "ground_truth.json").read_text())
    assert len(truth["users"]) == 8


def test_metrics_export_schema(synth_dir, tmp_path):
    data = synth_dir / "synthetic_trajectories.csv"
    out = tmp_path / "out"
    assert run(["metrics", "--data", data, "--out", out]) == 0
    table = pd.read_csv(out / "user_metrics.csv")
    assert list(table.columns) == [
        "uid", "period", "r_g_km", "r_g_k_km", "s_k", "label", "home_x", "home_y",
    ]
    assert set(table["period"]) == {"normal", "emergency"}
    assert table["home_x"].between(1, 200).all()


def test_cohort_and_entropy_run_on_synth(synth_dir, tmp_path):
    data = synth_dir / "synthetic_trajectories.csv"
    out = tmp_path / "out"
    assert run(["cohort", "--data", data, "--out", out]) == 0
    shares = pd.read_csv(out / "share_by_k.csv")
    assert set(shares["period"]) == {"normal", "emergency"}
    assert run(["entropy", "--data", data, "--out", out]) == 0
    per_user = pd.read_csv(out / "entropy_per_user.csv")
    assert {"uid", "period", "label", "entropy_bits", "n"} <= set(per_user.columns)


def test_onn_without_poi_notes_skip(synth_dir, tmp_path):
    data = synth_dir / "synthetic_trajectories.csv"
    out = tmp_path / "out"
    assert run(["onn", "--data", data, "--out", out]) == 0
    manifest = json.loads((out / "onn_manifest.json").read_text())
    assert "skipped" in manifest["notes"]["poi_tables"]
    assert not (out / "poi_onn_means.csv").exists()


def test_onn_with_poi(synth_dir, tmp_path):
    data = synth_dir / "synthetic_trajectories.csv"
    poi = tmp_path / "poi.csv"
    rows = ["x,y,POI_count"]
    for x in range(1, 201):
        for y in range(1, 201):
            rows.append(f"{x},{y},7")
    poi.write_text("\n".join(rows) + "\n")
    out = tmp_path / "out"
    assert run(["onn", "--data", data, "--poi", poi, "--out", out]) == 0
    means = pd.read_csv(out / "poi_onn_means.csv")
    assert (means["mean_poi"].dropna() == 7.0).all()
    home_means = pd.read_csv(out / "poi_home_neighborhood.csv")
    assert (home_means["mean_poi"] == 7.0).all()
