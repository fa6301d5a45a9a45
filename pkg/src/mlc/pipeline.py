"""End-to-end runs driven by a project manifest."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from . import __version__
from .activity import DAY, build_calendar, write_calendar
from .analysis import DEFAULT_EPSILON, SweepSpec, run_sweep, segment_series
from .coupling import (
    DEFAULT_PATIENCE,
    DEFAULT_THRESHOLD,
    DEFAULT_WINDOW,
    all_pair_series,
    coupling_state,
)
from .formats import dump_json, segments_to_json, series_to_json, state_to_json, write_series_csv
from .ingest import CommitFilter, ParseStats, export_git_history, filter_commits, list_git_tree, parse_commit_log
from .servicemap import autodetect_services, load_service_map, read_tree

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AnalysisConfig:
    n: int = DEFAULT_WINDOW
    threshold: Fraction = DEFAULT_THRESHOLD
    patience: int = DEFAULT_PATIENCE
    filter: CommitFilter = field(default_factory=CommitFilter)
    granularity: str = DAY
    max_sse: float = 0.05
    min_len: int = 5
    epsilon: float = DEFAULT_EPSILON
    pairs: tuple[tuple[str, str], ...] | None = None
    sweep_windows: tuple[int, ...] | None = None
    sweep_thresholds: tuple[Fraction, ...] | None = None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "threshold": str(self.threshold),
            "patience": self.patience,
            "filter": self.filter.to_dict(),
            "granularity": self.granularity,
            "max_sse": self.max_sse,
            "min_len": self.min_len,
            "epsilon": self.epsilon,
            "pairs": [list(p) for p in self.pairs] if self.pairs else None,
            "sweep_windows": list(self.sweep_windows) if self.sweep_windows else None,
            "sweep_thresholds": [str(t) for t in self.sweep_thresholds] if self.sweep_thresholds else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> AnalysisConfig:
        kw = dict(data)
        if "threshold" in kw:
            kw["threshold"] = Fraction(str(kw["threshold"]))
        if "filter" in kw:
            kw["filter"] = CommitFilter.from_dict(kw["filter"])
        if kw.get("pairs"):
            kw["pairs"] = tuple(tuple(p) for p in kw["pairs"])
        if kw.get("sweep_windows"):
            kw["sweep_windows"] = tuple(kw["sweep_windows"])
        if kw.get("sweep_thresholds"):
            kw["sweep_thresholds"] = tuple(Fraction(str(t)) for t in kw["sweep_thresholds"])
        return cls(**kw)


@dataclass(frozen=True)
class ProjectManifest:
    out_dir: Path
    commits_file: Path | None = None
    repo_path: Path | None = None
    map_file: Path | None = None
    autodetect: bool = False
    tree_file: Path | None = None
    config: AnalysisConfig = field(default_factory=AnalysisConfig)
    name: str = "project"

    def __post_init__(self) -> None:
        if (self.commits_file is None) == (self.repo_path is None):
            raise ValueError("manifest needs exactly one of commits_file, repo_path")
        if (self.map_file is None) == (not self.autodetect):
            raise ValueError("manifest needs exactly one of map_file, autodetect")

    @classmethod
    def from_dict(cls, data: dict, base: Path = Path(".")) -> ProjectManifest:
        def path(key):
            value = data.get(key)
            return None if value is None else base / value

        return cls(
            out_dir=path("out_dir") or base / "mlc-out",
            commits_file=path("commits_file"),
            repo_path=path("repo_path"),
            map_file=path("map_file"),
            autodetect=bool(data.get("autodetect", False)),
            tree_file=path("tree_file"),
            config=AnalysisConfig.from_dict(data.get("config", {})),
            name=data.get("name", "project"),
        )

    @classmethod
    def load(cls, path) -> ProjectManifest:
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh), base=path.parent)


@dataclass
class RunResult:
    out_dir: Path
    outputs: list[str] = field(default_factory=list)
    errors: list[dict] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.errors


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class _Stage:
    """Context manager that records a failing stage instead of raising."""

    def __init__(self, result: RunResult, name: str):
        self.result, self.name = result, name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is None:
            return False
        log.error("stage %s failed: %s", self.name, exc)
        self.result.errors.append({"stage": self.name, "error": f"{exc_type.__name__}: {exc}"})
        return True


def run_pipeline(manifest: ProjectManifest) -> RunResult:
    """Run ingest → map → calendar → couple → segment/state (→ sweep).

    Outputs are written to ``manifest.out_dir`` as soon as each stage
    finishes, so a failure keeps everything produced before it.
    """
    cfg = manifest.config
    out = Path(manifest.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = RunResult(out)
    inputs: dict[str, str] = {}

    def emit(name: str, writer, data) -> None:
        writer(data, out / name)
        result.outputs.append(name)

    commits = smap = cal = series = None
    with _Stage(result, "ingest"):
        if manifest.commits_file is not None:
            raw = Path(manifest.commits_file).read_bytes()
        else:
            raw = export_git_history(manifest.repo_path).encode("utf-8", "surrogateescape")
        inputs["commits"] = _sha256(raw)
        stats = ParseStats()
        commits = parse_commit_log(raw.split(b"\n"), stats)
        result.diagnostics["commits_parsed"] = stats.records
        result.diagnostics["skipped_non_utf8"] = stats.skipped_non_utf8

    if commits is not None:
        with _Stage(result, "map"):
            if manifest.map_file is not None:
                text = Path(manifest.map_file).read_text(encoding="utf-8")
                inputs["map"] = _sha256(text.encode())
                smap = load_service_map(manifest.map_file)
            else:
                if manifest.tree_file is not None:
                    tree = read_tree(manifest.tree_file)
                elif manifest.repo_path is not None:
                    tree = list_git_tree(manifest.repo_path)
                else:
                    tree = sorted({f for c in commits for f in c.files})
                inputs["tree"] = _sha256("\n".join(tree).encode())
                smap = autodetect_services(tree)
            (out / "map.txt").write_text(smap.to_document(), encoding="utf-8")
            result.outputs.append("map.txt")

    if smap is not None:
        with _Stage(result, "calendar"):
            kept = filter_commits(commits, cfg.filter)
            result.diagnostics["commits_kept"] = len(kept)
            cal = build_calendar(kept, smap, cfg.granularity)
            result.diagnostics["active_days"] = cal.active_days
            if cal.active_days == 0:
                result.diagnostics.setdefault("warnings", []).append("no active days (A=0)")
            emit("calendar.json", write_calendar, cal)

    if cal is not None:
        with _Stage(result, "couple"):
            series = all_pair_series(cal, cfg.n, cfg.pairs)
            result.diagnostics["pairs"] = len(series)
            result.diagnostics["pairs_too_short"] = sum(s.diagnostics.too_short for s in series)
            emit("series.csv", write_series_csv, series)
            emit("series.json", dump_json, series_to_json(series))

    if series is not None:
        with _Stage(result, "segment"):
            segs = [
                segments_to_json(s, segment_series(s.couplings, cfg.max_sse, cfg.min_len, cfg.epsilon))
                for s in series
                if s.points
            ]
            emit("segments.json", dump_json, segs)
        with _Stage(result, "state"):
            states = [
                state_to_json(s.mu, s.nu, coupling_state(s, cfg.threshold, cfg.patience))
                for s in series
            ]
            emit("states.json", dump_json, states)

    if cfg.sweep_windows and commits is not None and smap is not None:
        with _Stage(result, "sweep"):
            spec = SweepSpec(
                window_sizes=cfg.sweep_windows,
                filters=(("config", cfg.filter),),
                thresholds=cfg.sweep_thresholds or (cfg.threshold,),
                patience=cfg.patience,
                granularity=cfg.granularity,
            )
            emit("sweep.json", dump_json, run_sweep(commits, smap, spec))

    meta = {
        "tool": "mlc",
        "version": __version__,
        "project": manifest.name,
        "config": cfg.to_dict(),
        "inputs_sha256": inputs,
        "outputs": result.outputs,
        "diagnostics": result.diagnostics,
        "errors": result.errors,
        "ok": result.ok,
    }
    dump_json(meta, out / "run.json")
    return result
