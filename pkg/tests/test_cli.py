from __future__ import annotations

import csv
import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from conftest import FIG1_MAP
from mlc.cli import main

DATA = Path(__file__).parent / "data"


@pytest.fixture
def fig1_files(tmp_path, fig1_log):
    (tmp_path / "commits.log").write_text(fig1_log)
    (tmp_path / "map.txt").write_text(FIG1_MAP)
    return tmp_path


def build_series(base: Path, n=3, fmt="csv") -> Path:
    assert main(["calendar", str(base / "commits.log"), "--map", str(base / "map.txt"), "-o", str(base / "cal.json")]) == 0
    out = base / f"series.{fmt}"
    assert main(["couple", str(base / "cal.json"), "--n", str(n), "--format", fmt, "-o", str(out)]) == 0
    return out


def test_calendar_and_couple(fig1_files):
    out = build_series(fig1_files)
    with open(out, newline="") as fh:
        rows = [r for r in csv.DictReader(fh) if r["nu"] == "nu"]
    assert [r["coupling"] for r in rows] == ["0.666666666667"] * 2 + ["0.333333333333"] * 3


def test_couple_to_stdout_with_pairs(fig1_files, capsys):
    build_series(fig1_files)
    capsys.readouterr()
    assert main(["couple", str(fig1_files / "cal.json"), "--n", "3", "--pairs", "nu,mu"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "mu,nu,window_end_date,coupling,p_nu_given_mu,p_mu_given_nu"
    assert lines[1].startswith("nu,mu,2023-05-03,0.666666666667,0.666666666667,1")


def test_analyze(fig1_files):
    series = build_series(fig1_files, fmt="json")
    out = fig1_files / "analysis.json"
    argv = ["analyze", str(series), "--segment", "--min-len", "2", "--states", "--patience", "2", "-o", str(out)]
    assert main(argv) == 0
    report = json.loads(out.read_text())
    mu_nu = next(s for s in report["states"] if s["nu"] == "nu" and s["mu"] == "mu")
    assert [w["state"] for w in mu_nu["timeline"]] == ["Coupled"] * 3 + ["Decoupled"] * 2
    assert report["segments"]


def test_validate(fig1_files):
    series = build_series(fig1_files)
    truth = fig1_files / "truth.csv"
    truth.write_text(
        "mu,nu,window_end_date,coupled\n"
        "mu,nu,2023-05-03,true\n"
        "nu,mu,2023-05-04,true\n"
        "mu,nu,2023-05-08,true\n"
        "mu,nu,2023-05-12,false\n"
    )
    out = fig1_files / "report.json"
    assert main(["validate", str(series), str(truth), "--patience", "1", "-o", str(out)]) == 0
    report = json.loads(out.read_text())
    # With k=1 the states are C, C, D, D, D; windows end 05-03, 05-04, 05-05, 05-08, 05-12.
    assert report["confusion"] == {"tp": 2, "fp": 0, "fn": 1, "tn": 1}
    assert report["precision"] == 1.0
    assert report["recall"] == pytest.approx(2 / 3)


def test_validate_missing_key(fig1_files, capsys):
    series = build_series(fig1_files)
    truth = fig1_files / "truth.csv"
    truth.write_text("mu,nu,window_end_date,coupled\nmu,nu,2024-01-01,true\n")
    assert main(["validate", str(series), str(truth)]) == 2
    assert "no prediction" in capsys.readouterr().err


def test_map_check_auto_and_sizes(fig1_files, capsys):
    assert main(["map", str(fig1_files / "map.txt")]) == 0
    assert capsys.readouterr().out == FIG1_MAP
    assert main(["map", "--auto", str(DATA / "demo_tree.txt")]) == 0
    assert capsys.readouterr().out.splitlines()[0] == "src/adservice/** => src/adservice"
    out = fig1_files / "sizes.json"
    assert main(["map", str(fig1_files / "map.txt"), "--sizes", str(DATA / "demo_tree.txt"), "-o", str(out)]) == 0
    assert json.loads(out.read_text())["__unmapped__"] == 42


def test_map_errors(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("services/a/**\n")
    assert main(["map", str(bad)]) == 2
    assert main(["map", str(tmp_path / "missing.txt")]) == 2


def test_synth_seed_override(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"services": 3, "days": 40, "base_rate": 0.4, "seed": 1}))
    a, b, c = (tmp_path / f"{x}.log" for x in "abc")
    assert main(["synth", str(spec), "-o", str(a), "--map-out", str(tmp_path / "m.txt")]) == 0
    assert main(["synth", str(spec), "-o", str(b)]) == 0
    assert main(["synth", str(spec), "--seed", "2", "-o", str(c)]) == 0
    assert a.read_bytes() == b.read_bytes() != c.read_bytes()
    assert (tmp_path / "m.txt").read_text().startswith("svc-01/** => svc-01\n")


def test_sweep(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"services": 3, "days": 150, "base_rate": 0.4, "seed": 3}))
    main(["synth", str(spec), "-o", str(tmp_path / "c.log"), "--map-out", str(tmp_path / "m.txt")])
    out = tmp_path / "sweep.json"
    argv = ["sweep", str(tmp_path / "c.log"), "--map", str(tmp_path / "m.txt"), "--windows", "5,10"]
    assert main(argv + ["--also-unfiltered", "--thresholds", "1/3,0.5", "-o", str(out)]) == 0
    report = json.loads(out.read_text())
    assert len(report["cells"]) == 4
    assert report["pearson"][0][0] == pytest.approx(1)


def test_run_and_out_dir(fig1_files):
    manifest = fig1_files / "project.json"
    manifest.write_text(json.dumps({"commits_file": "commits.log", "map_file": "map.txt", "config": {"n": 3}}))
    assert main(["run", str(manifest), "--out-dir", str(fig1_files / "elsewhere")]) == 0
    assert (fig1_files / "elsewhere" / "series.csv").exists()


def test_run_stage_failure(fig1_files, capsys):
    manifest = fig1_files / "project.json"
    manifest.write_text(
        json.dumps({"commits_file": "commits.log", "map_file": "map.txt", "config": {"pairs": [["mu", "zeta"]]}})
    )
    assert main(["run", str(manifest)]) == 1
    assert "stage couple failed" in capsys.readouterr().err


def test_filter_flags(tmp_path):
    src = (DATA / "sample.log").read_text()
    (tmp_path / "c.log").write_text(src)
    (tmp_path / "m.txt").write_text("** => all\n")
    out_default, out_all = tmp_path / "d.json", tmp_path / "a.json"
    base = ["calendar", str(tmp_path / "c.log"), "--map", str(tmp_path / "m.txt")]
    assert main(base + ["-o", str(out_default)]) == 0
    assert main(base + ["--include-merges", "--include-bots", "-o", str(out_all)]) == 0
    assert len(json.loads(out_all.read_text())["days"]) >= len(json.loads(out_default.read_text())["days"])
    assert main(base + ["--exclude-scope", "NewFeature", "--max-files", "1", "-o", str(out_default)]) == 0


@pytest.mark.skipif(shutil.which("git") is None, reason="git not available")
def test_ingest_git_repo(tmp_path):
    repo = tmp_path / "repo"
    repo.mkdir()

    def git(*args, date="2023-03-01T10:00:00+00:00"):
        env = {"GIT_AUTHOR_DATE": date, "GIT_COMMITTER_DATE": date, "HOME": str(tmp_path), "PATH": "/usr/bin:/bin"}
        subprocess.run(["git", "-C", str(repo), *args], check=True, capture_output=True, env=env)

    git("init", "-q")
    git("config", "user.email", "a@example.com")
    git("config", "user.name", "Ada")
    (repo / "svc-a").mkdir()
    (repo / "svc-a" / "f.txt").write_text("one\n")
    git("add", ".")
    git("commit", "-q", "-m", "first")
    out = tmp_path / "commits.log"
    assert main(["ingest", str(repo), "-o", str(out)]) == 0
    text = out.read_text()
    assert "|Ada|first" in text and "1\t0\tsvc-a/f.txt" in text


def test_console_script_version():
    res = subprocess.run([sys.executable, "-m", "mlc.cli", "--version"], capture_output=True, text=True)
    assert res.stdout.strip().startswith("mlc ")
