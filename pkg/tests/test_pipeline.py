from __future__ import annotations

import csv
import json
from pathlib import Path

import pytest

from conftest import FIG1_MAP
from mlc.formats import read_series, read_series_csv, series_from_json, series_to_json, write_series_csv
from mlc.ingest import serialize_commit_log
from mlc.pipeline import AnalysisConfig, ProjectManifest, run_pipeline
from mlc.synth import Episode, SyntheticSpec, generate_history, service_map_document


def write_project(tmp_path: Path, log: str, smap: str, config: dict | None = None, **extra) -> Path:
    (tmp_path / "commits.log").write_text(log)
    (tmp_path / "map.txt").write_text(smap)
    manifest = {"commits_file": "commits.log", "map_file": "map.txt", "out_dir": "out", "config": config or {}}
    manifest.update(extra)
    path = tmp_path / "project.json"
    path.write_text(json.dumps(manifest))
    return path


def test_worked_example_manifest(tmp_path, fig1_log):
    path = write_project(tmp_path, fig1_log, FIG1_MAP, {"n": 3, "patience": 2, "min_len": 2})
    result = run_pipeline(ProjectManifest.load(path))
    assert result.ok, result.errors
    with open(tmp_path / "out" / "series.csv", newline="") as fh:
        rows = [r for r in csv.DictReader(fh) if (r["mu"], r["nu"]) == ("mu", "nu")]
    assert [r["coupling"] for r in rows] == ["0.666666666667"] * 2 + ["0.333333333333"] * 3
    assert rows[0]["p_nu_given_mu"] == "1"
    states = json.loads((tmp_path / "out" / "states.json").read_text())
    mu_nu = next(s for s in states if (s["mu"], s["nu"]) == ("mu", "nu"))
    assert [w["state"] for w in mu_nu["timeline"]] == ["Coupled"] * 3 + ["Decoupled"] * 2
    meta = json.loads((tmp_path / "out" / "run.json").read_text())
    assert meta["ok"] and meta["diagnostics"]["active_days"] == 10


def test_series_json_is_exact(tmp_path, fig1_log):
    path = write_project(tmp_path, fig1_log, FIG1_MAP, {"n": 3})
    run_pipeline(ProjectManifest.load(path))
    series = read_series(tmp_path / "out" / "series.json")
    mu_nu = next(s for s in series if (s.mu, s.nu) == ("mu", "nu"))
    from fractions import Fraction as F

    assert mu_nu.couplings == [F(2, 3), F(2, 3), F(1, 3), F(1, 3), F(1, 3)]
    assert series_to_json(series_from_json(series_to_json(series))) == series_to_json(series)


def test_csv_round_trip(tmp_path, fig1_log):
    path = write_project(tmp_path, fig1_log, FIG1_MAP, {"n": 3})
    run_pipeline(ProjectManifest.load(path))
    tab = read_series_csv(tmp_path / "out" / "series.csv")
    again = tmp_path / "again.csv"
    write_series_csv(read_series(tmp_path / "out" / "series.json"), again)
    assert again.read_text() == (tmp_path / "out" / "series.csv").read_text()
    assert {(s.mu, s.nu) for s in tab} == {("mu", "nu"), ("mu", "rho"), ("nu", "rho")}


def test_empty_history(tmp_path):
    path = write_project(tmp_path, "", FIG1_MAP)
    result = run_pipeline(ProjectManifest.load(path))
    assert result.ok
    assert "no active days (A=0)" in result.diagnostics["warnings"]
    assert (tmp_path / "out" / "series.csv").read_text().count("\n") == 1


def test_deterministic_outputs(tmp_path):
    spec = SyntheticSpec(
        services=4,
        days=200,
        base_rate=0.3,
        episodes=(Episode("svc-01", "svc-02", 50, 150, 0.8),),
        seed=13,
        unmapped_rate=0.1,
    )
    config = {"n": 10, "sweep_windows": [10, 30]}
    outs = []
    for run in ("a", "b"):
        base = tmp_path / run
        base.mkdir()
        path = write_project(base, generate_history(spec), service_map_document(spec), config)
        result = run_pipeline(ProjectManifest.load(path))
        assert result.ok, result.errors
        outs.append({f: (base / "out" / f).read_bytes() for f in sorted(result.outputs + ["run.json"])})
    assert outs[0] == outs[1]
    assert "sweep.json" in outs[0]


def test_stage_error_is_recorded(tmp_path, fig1_log):
    path = write_project(tmp_path, fig1_log, FIG1_MAP, {"n": 3, "pairs": [["mu", "zeta"]]})
    result = run_pipeline(ProjectManifest.load(path))
    assert not result.ok
    assert result.errors[0]["stage"] == "couple"
    # Outputs from stages before the failure survive.
    assert "calendar.json" in result.outputs
    assert json.loads((tmp_path / "out" / "run.json").read_text())["ok"] is False


def test_autodetect_from_commit_paths(tmp_path):
    from datetime import datetime, timezone

    from mlc.ingest import CommitRecord

    stamp = datetime(2023, 1, 2, tzinfo=timezone.utc)
    commits = [
        CommitRecord("1", stamp, "a", "init", ("api/Dockerfile", "web/package.json")),
        CommitRecord("2", stamp.replace(day=3), "a", "fix", ("api/main.go",)),
    ]
    (tmp_path / "commits.log").write_text(serialize_commit_log(commits))
    (tmp_path / "project.json").write_text(json.dumps({"commits_file": "commits.log", "autodetect": True}))
    result = run_pipeline(ProjectManifest.load(tmp_path / "project.json"))
    assert result.ok
    assert (tmp_path / "mlc-out" / "map.txt").read_text() == "api/** => api\nweb/** => web\n"


@pytest.mark.parametrize(
    "doc",
    [
        {"map_file": "m.txt"},
        {"commits_file": "c.log", "repo_path": "repo", "map_file": "m.txt"},
        {"commits_file": "c.log", "map_file": "m.txt", "autodetect": True},
    ],
)
def test_manifest_validation(doc):
    with pytest.raises(ValueError):
        ProjectManifest.from_dict(doc)


def test_config_round_trip():
    from fractions import Fraction as F

    from mlc.ingest import CommitFilter

    cfg = AnalysisConfig(
        n=7,
        threshold=F(2, 3),
        filter=CommitFilter(max_files=20),
        pairs=(("a", "b"),),
        sweep_windows=(5, 7),
        sweep_thresholds=(F(1, 3),),
    )
    assert AnalysisConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
