"""``mlc`` command-line interface."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

from . import __version__
from .activity import COMMIT, DAY, build_calendar, read_calendar, write_calendar
from .analysis import DEFAULT_EPSILON, SweepSpec, run_sweep, segment_series
from .coupling import DEFAULT_PATIENCE, DEFAULT_THRESHOLD, all_pair_series, coupling_state
from .formats import (
    dump_json,
    read_series,
    segments_to_json,
    series_to_json,
    state_to_json,
    write_series_csv,
)
from .ingest import (
    CommitFilter,
    CommitScope,
    ParseStats,
    export_git_history,
    filter_commits,
    read_commit_log,
)
from .pipeline import ProjectManifest, run_pipeline
from .servicemap import autodetect_services, load_service_map, read_tree, service_size
from .synth import generate_history, load_synthetic_spec, service_map_document
from .validation import (
    confusion,
    precision_recall_f1,
    read_ground_truth,
)

log = logging.getLogger("mlc")


def _out_path(args, default: str) -> Path | None:
    if args.output:
        return Path(args.output)
    if args.out_dir:
        return Path(args.out_dir) / default
    return None


def _write_text(args, default: str, text: str) -> None:
    path = _out_path(args, default)
    if path is None:
        sys.stdout.write(text)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")


def _add_filter_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--include-merges", action="store_true", help="keep merge commits")
    p.add_argument("--include-bots", action="store_true", help="keep commits by *[bot] authors")
    p.add_argument("--max-files", type=int, help="drop commits touching more files")
    p.add_argument("--max-churn", type=int, help="drop commits with more added+deleted lines")
    p.add_argument(
        "--exclude-scope",
        action="append",
        default=[],
        choices=[s.value for s in CommitScope],
        help="drop commits of this scope (repeatable)",
    )
    p.add_argument("--granularity", choices=[DAY, COMMIT], default=DAY)


def _filter_from(args) -> CommitFilter:
    return CommitFilter(
        exclude_merges=not args.include_merges,
        exclude_bots=not args.include_bots,
        max_files=args.max_files,
        max_churn=args.max_churn,
        excluded_scopes=frozenset(CommitScope(s) for s in args.exclude_scope),
    )


def _load_commits(path):
    stats = ParseStats()
    commits = read_commit_log(path, stats)
    if stats.skipped_non_utf8:
        log.warning("skipped %d commits with non-UTF-8 paths", stats.skipped_non_utf8)
    return commits


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x)


def _fraction_list(text: str) -> tuple[Fraction, ...]:
    return tuple(Fraction(x) for x in text.split(",") if x)


def cmd_ingest(args) -> int:
    _write_text(args, "commits.log", export_git_history(args.repo))
    return 0


def cmd_map(args) -> int:
    if args.auto:
        m = autodetect_services(read_tree(args.auto))
    elif args.map:
        m = load_service_map(args.map)
    else:
        raise SystemExit("mlc map: give a mapping document or --auto <tree-file>")
    if args.sizes:
        _write_text(args, "sizes.json", json.dumps(service_size(m, read_tree(args.sizes)), indent=2) + "\n")
    else:
        _write_text(args, "map.txt", m.to_document())
    return 0


def cmd_calendar(args) -> int:
    commits = filter_commits(_load_commits(args.commits), _filter_from(args))
    cal = build_calendar(commits, load_service_map(args.map), args.granularity)
    path = _out_path(args, "calendar.json")
    if path is None:
        json.dump(cal.to_json(), sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    else:
        write_calendar(cal, path)
    return 0


def _pairs(text: str | None):
    if not text:
        return None
    items = [p for p in text.split(";") if p]
    out = []
    for item in items:
        a, _, b = item.partition(",")
        if not a or not b:
            raise SystemExit(f"bad pair {item!r}; expected 'a,b'")
        out.append((a, b))
    return out


def cmd_couple(args) -> int:
    cal = read_calendar(args.calendar)
    series = all_pair_series(cal, args.n, _pairs(args.pairs))
    for s in series:
        if s.diagnostics.too_short:
            log.info("%s/%s: %d relevant days < n=%d, no windows", s.mu, s.nu, s.diagnostics.relevant_days, args.n)
    path = _out_path(args, "series.json" if args.format == "json" else "series.csv")
    if args.format == "json":
        if path is None:
            json.dump(series_to_json(series), sys.stdout, indent=2, sort_keys=True)
        else:
            dump_json(series_to_json(series), path)
    else:
        write_series_csv(series, path or sys.stdout)
    return 0


def cmd_analyze(args) -> int:
    series = read_series(args.series)
    report: dict = {}
    if args.segment:
        report["segments"] = [
            segments_to_json(s, segment_series(s.couplings, args.max_sse, args.min_len, args.epsilon))
            for s in series
            if s.points
        ]
    if args.states:
        report["states"] = [
            state_to_json(s.mu, s.nu, coupling_state(s, args.threshold, args.patience)) for s in series
        ]
    _write_text(args, "analysis.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_sweep(args) -> int:
    commits = _load_commits(args.commits)
    base = _filter_from(args)
    filters = [("default", base)]
    if args.also_unfiltered:
        filters.append(("unfiltered", CommitFilter.empty()))
    spec = SweepSpec(
        window_sizes=_int_list(args.windows),
        filters=tuple(filters),
        thresholds=_fraction_list(args.thresholds),
        patience=args.patience,
        granularity=args.granularity,
    )
    report = run_sweep(commits, load_service_map(args.map), spec)
    _write_text(args, "sweep.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    return 1 if any(c["error"] for c in report["cells"]) else 0


def cmd_validate(args) -> int:
    series = read_series(args.series)
    truth = read_ground_truth(args.truth)
    states = [(s.mu, s.nu, coupling_state(s, args.threshold, args.patience)) for s in series]
    c = confusion(states, truth)
    p, r, f1 = precision_recall_f1(c)
    report = {
        "confusion": {"tp": c.tp, "fp": c.fp, "fn": c.fn, "tn": c.tn},
        "precision": None if p is None else float(p),
        "recall": None if r is None else float(r),
        "f1": None if f1 is None else float(f1),
        "labels": len(truth),
        "threshold": str(Fraction(args.threshold)),
        "patience": args.patience,
        "truth": truth.provenance,
    }
    _write_text(args, "report.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_synth(args) -> int:
    spec = load_synthetic_spec(args.spec)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    _write_text(args, "commits.log", generate_history(spec))
    if args.map_out:
        Path(args.map_out).write_text(service_map_document(spec), encoding="utf-8")
    return 0


def cmd_run(args) -> int:
    manifest = ProjectManifest.load(args.manifest)
    if args.out_dir:
        manifest = replace(manifest, out_dir=Path(args.out_dir))
    result = run_pipeline(manifest)
    for err in result.errors:
        print(f"mlc run: stage {err['stage']} failed: {err['error']}", file=sys.stderr)
    return 0 if result.ok else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (synth)")
    common.add_argument("--out-dir", help="directory for outputs without an explicit -o")
    common.add_argument("--format", choices=["csv", "json"], default="csv")
    common.add_argument("-o", "--output", help="output file (default: stdout or --out-dir)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="mlc", description="Microservice logical coupling over git history")
    parser.add_argument("--version", action="version", version=f"mlc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="export a git repository's history")
    p.add_argument("repo")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("map", parents=[common], help="check, autodetect or size a service map")
    p.add_argument("map", nargs="?", help="mapping document")
    p.add_argument("--auto", metavar="TREE", help="autodetect services from a file tree listing")
    p.add_argument("--sizes", metavar="TREE", help="print per-service file counts for a tree listing")
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("calendar", parents=[common], help="build the active-day calendar")
    p.add_argument("commits")
    p.add_argument("--map", required=True)
    _add_filter_args(p)
    p.set_defaults(func=cmd_calendar)

    p = sub.add_parser("couple", parents=[common], help="sliding-window coupling series")
    p.add_argument("calendar")
    p.add_argument("--n", type=int, default=30, help="window length in relevant active days")
    p.add_argument("--pairs", help="'a,b' or 'a,b;c,d' (default: all pairs)")
    p.set_defaults(func=cmd_couple)

    p = sub.add_parser("analyze", parents=[common], help="segment series and derive coupling states")
    p.add_argument("series")
    p.add_argument("--segment", action="store_true")
    p.add_argument("--max-sse", type=float, default=0.05)
    p.add_argument("--min-len", type=int, default=5)
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--states", action="store_true")
    p.add_argument("--threshold", type=Fraction, default=DEFAULT_THRESHOLD)
    p.add_argument("--patience", type=int, default=DEFAULT_PATIENCE)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", parents=[common], help="window/filter sensitivity sweep")
    p.add_argument("commits")
    p.add_argument("--map", required=True)
    p.add_argument("--windows", default="10,30,100")
    p.add_argument("--thresholds", default="0.5")
    p.add_argument("--patience", type=int, default=DEFAULT_PATIENCE)
    p.add_argument("--also-unfiltered", action="store_true", help="add a cell keeping every commit")
    _add_filter_args(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", parents=[common], help="score states against ground truth")
    p.add_argument("series")
    p.add_argument("truth")
    p.add_argument("--threshold", type=Fraction, default=DEFAULT_THRESHOLD)
    p.add_argument("--patience", type=int, default=DEFAULT_PATIENCE)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic history")
    p.add_argument("spec", help="JSON synthetic spec")
    p.add_argument("--map-out", help="also write the matching mapping document")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", parents=[common], help="run the whole pipeline from a manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"mlc {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
