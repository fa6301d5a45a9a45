"""Commit history ingestion: export format parsing, scope classification, filtering.

The export format is a line-oriented text file.  Each record starts with a
separator line ``\\x01COMMIT`` followed by a header line::

    id|iso8601-timestamp|author|message

where ``|``, backslash and newlines inside a field are backslash-escaped
(``\\|``, ``\\\\``, ``\\n``, ``\\r``).  An optional ``M`` line marks a merge
commit; every further line is ``added<TAB>deleted<TAB>path`` (``-`` for
binary counts) or a bare path when no line counts are known.
"""

from __future__ import annotations

import enum
import logging
import subprocess
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import IO, Union

log = logging.getLogger(__name__)

RECORD_SEPARATOR = "\x01COMMIT"
MERGE_MARKER = "M"

Line = Union[str, bytes]


class ParseError(ValueError):
    """Malformed commit log input."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class CommitRecord:
    id: str
    timestamp: datetime
    author: str
    message: str
    files: tuple[str, ...] = ()
    churn: tuple[int, int] | None = None
    is_merge: bool = False

    def __post_init__(self) -> None:
        if self.timestamp.tzinfo is None:
            raise ValueError(f"commit {self.id}: timestamp lacks a UTC offset")
        if any(not f for f in self.files):
            raise ValueError(f"commit {self.id}: empty file path")
        if len(set(self.files)) != len(self.files):
            raise ValueError(f"commit {self.id}: duplicate file paths")
        if self.churn is not None and min(self.churn) < 0:
            raise ValueError(f"commit {self.id}: negative churn")

    @property
    def utc_date(self):
        return self.timestamp.astimezone(timezone.utc).date()


class CommitScope(enum.Enum):
    REFACTORING = "Refactoring"
    BUG_FIX = "BugFix"
    IMPROVEMENT = "Improvement"
    NEW_FEATURE = "NewFeature"
    OTHER = "Other"


# First match on the lowercased message wins; order matters.
SCOPE_RULES: tuple[tuple[CommitScope, tuple[str, ...]], ...] = (
    (CommitScope.REFACTORING, ("refactor", "restructur", "rename", "cleanup", "clean up")),
    (CommitScope.BUG_FIX, ("fix", "bug", "hotfix", "patch", "defect")),
    (CommitScope.NEW_FEATURE, ("feat", "add ", "introduc", "implement")),
    (CommitScope.IMPROVEMENT, ("improv", "perf", "optimiz", "enhanc", "upgrade", "update")),
)


def classify_commit_scope(message: str) -> CommitScope:
    text = message.lower()
    for scope, keywords in SCOPE_RULES:
        if any(k in text for k in keywords):
            return scope
    return CommitScope.OTHER


def commit_size(commit: CommitRecord) -> tuple[int, int]:
    """Return ``(files_changed, lines_churned)``; churn is 0 when unknown."""
    churned = sum(commit.churn) if commit.churn is not None else 0
    return len(commit.files), churned


def is_bot(author: str) -> bool:
    return author.rstrip().endswith("[bot]")


@dataclass(frozen=True)
class CommitFilter:
    """Which commits to drop before building activity calendars.

    The defaults drop merges and bot commits.  ``CommitFilter.empty()`` keeps
    everything.
    """

    exclude_merges: bool = True
    exclude_bots: bool = True
    max_files: int | None = None
    max_churn: int | None = None
    excluded_scopes: frozenset[CommitScope] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        for name in ("max_files", "max_churn"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        object.__setattr__(self, "excluded_scopes", frozenset(self.excluded_scopes))

    @classmethod
    def empty(cls) -> CommitFilter:
        return cls(exclude_merges=False, exclude_bots=False)

    def accepts(self, commit: CommitRecord) -> bool:
        if self.exclude_merges and commit.is_merge:
            return False
        if self.exclude_bots and is_bot(commit.author):
            return False
        files, churn = commit_size(commit)
        if self.max_files is not None and files > self.max_files:
            return False
        if self.max_churn is not None and churn > self.max_churn:
            return False
        if self.excluded_scopes and classify_commit_scope(commit.message) in self.excluded_scopes:
            return False
        return True

    def to_dict(self) -> dict:
        return {
            "exclude_merges": self.exclude_merges,
            "exclude_bots": self.exclude_bots,
            "max_files": self.max_files,
            "max_churn": self.max_churn,
            "excluded_scopes": sorted(s.value for s in self.excluded_scopes),
        }

    @classmethod
    def from_dict(cls, data: dict) -> CommitFilter:
        return cls(
            exclude_merges=data.get("exclude_merges", True),
            exclude_bots=data.get("exclude_bots", True),
            max_files=data.get("max_files"),
            max_churn=data.get("max_churn"),
            excluded_scopes=frozenset(CommitScope(s) for s in data.get("excluded_scopes", ())),
        )


def filter_commits(commits: Iterable[CommitRecord], f: CommitFilter) -> list[CommitRecord]:
    return [c for c in commits if f.accepts(c)]


# --------------------------------------------------------------------------
# Export format

_ESCAPES = {"\\": "\\\\", "|": "\\|", "\n": "\\n", "\r": "\\r"}
_UNESCAPES = {"\\": "\\", "|": "|", "n": "\n", "r": "\r"}


def escape_field(value: str) -> str:
    return "".join(_ESCAPES.get(ch, ch) for ch in value)


def _split_header(line: str, lineno: int) -> list[str]:
    fields: list[str] = []
    buf: list[str] = []
    chars = iter(line)
    for ch in chars:
        if ch == "\\":
            nxt = next(chars, None)
            if nxt not in _UNESCAPES:
                raise ParseError(lineno, f"bad escape sequence \\{nxt or ''}")
            buf.append(_UNESCAPES[nxt])
        elif ch == "|":
            fields.append("".join(buf))
            buf = []
        else:
            buf.append(ch)
    fields.append("".join(buf))
    return fields


def parse_timestamp(text: str) -> datetime:
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        raise ValueError("timestamp has no UTC offset")
    return ts


@dataclass
class ParseStats:
    records: int = 0
    skipped_non_utf8: int = 0


class _RecordBuilder:
    def __init__(self, header: str, lineno: int):
        fields = _split_header(header, lineno)
        if len(fields) != 4:
            raise ParseError(lineno, f"expected 4 header fields, got {len(fields)}")
        cid, stamp, self.author, self.message = fields
        if not cid:
            raise ParseError(lineno, "empty commit id")
        try:
            self.timestamp = parse_timestamp(stamp)
        except ValueError as exc:
            raise ParseError(lineno, f"bad timestamp {stamp!r}: {exc}") from None
        self.id = cid
        self.is_merge = False
        self.files: dict[str, None] = {}
        self.added = 0
        self.deleted = 0
        self.has_numstat = False
        self.bad_encoding = False
        self.seen_files = False

    def add_line(self, line: str, lineno: int) -> None:
        if line == MERGE_MARKER and not self.seen_files and not self.is_merge:
            self.is_merge = True
            return
        self.seen_files = True
        parts = line.split("\t", 2)
        if len(parts) == 3:
            added, deleted, path = parts
            try:
                self.added += 0 if added == "-" else int(added)
                self.deleted += 0 if deleted == "-" else int(deleted)
            except ValueError:
                raise ParseError(lineno, f"bad numstat counts in {line!r}") from None
            self.has_numstat = True
        elif len(parts) == 1:
            path = line
        else:
            raise ParseError(lineno, f"bad file line {line!r}")
        if not path:
            raise ParseError(lineno, "empty path")
        self.files[path] = None

    def build(self) -> CommitRecord:
        return CommitRecord(
            id=self.id,
            timestamp=self.timestamp,
            author=self.author,
            message=self.message,
            files=tuple(self.files),
            churn=(self.added, self.deleted) if self.has_numstat else None,
            is_merge=self.is_merge,
        )


def _decode(raw: Line) -> tuple[str, bool]:
    """Return the decoded line and whether it is valid UTF-8."""
    if isinstance(raw, bytes):
        try:
            return raw.decode("utf-8"), True
        except UnicodeDecodeError:
            return raw.decode("utf-8", "surrogateescape"), False
    try:
        raw.encode("utf-8")
    except UnicodeEncodeError:
        return raw, False
    return raw, True


def _lines(source: str | bytes | Iterable[Line]) -> Iterable[Line]:
    # Only "\n" ends a line; str.splitlines would also split on U+0085 etc.
    if isinstance(source, str):
        return source.split("\n")
    if isinstance(source, bytes):
        return source.split(b"\n")
    return source


def parse_commit_log(
    source: str | bytes | Iterable[Line] | IO,
    stats: ParseStats | None = None,
) -> list[CommitRecord]:
    """Parse an export-format stream into commit records, in stream order.

    ``source`` may be the whole text, or any iterable of text or byte lines
    (open files included).  Records containing a path that is not valid
    UTF-8 are skipped and counted in ``stats.skipped_non_utf8``.
    """
    stats = stats if stats is not None else ParseStats()
    out: list[CommitRecord] = []
    current: _RecordBuilder | None = None
    expect_header = False

    def finish() -> None:
        if current is None:
            return
        if current.bad_encoding:
            stats.skipped_non_utf8 += 1
            log.warning("skipping commit %s: non-UTF-8 path", current.id)
            return
        out.append(current.build())
        stats.records += 1

    for lineno, raw in enumerate(_lines(source), start=1):
        line, valid = _decode(raw)
        if line.endswith("\n"):
            line = line[:-1]
        if line.endswith("\r"):  # CRLF exports
            line = line[:-1]
        if line == RECORD_SEPARATOR:
            if expect_header:
                raise ParseError(lineno, "record separator where a header was expected")
            finish()
            current = None
            expect_header = True
            continue
        if expect_header:
            if not valid:
                raise ParseError(lineno, "header is not valid UTF-8")
            current = _RecordBuilder(line, lineno)
            expect_header = False
            continue
        if not line:
            continue
        if current is None:
            raise ParseError(lineno, "content before the first record separator")
        if not valid:
            current.bad_encoding = True
            continue
        current.add_line(line, lineno)

    if expect_header:
        raise ParseError(lineno, "stream ends after a record separator")
    finish()
    return out


def read_commit_log(path: str | Path, stats: ParseStats | None = None) -> list[CommitRecord]:
    with open(path, "rb") as fh:
        return parse_commit_log(fh, stats)


def format_commit(commit: CommitRecord) -> str:
    header = "|".join(
        escape_field(v)
        for v in (commit.id, commit.timestamp.isoformat(), commit.author, commit.message)
    )
    lines = [RECORD_SEPARATOR, header]
    if commit.is_merge:
        lines.append(MERGE_MARKER)
    if commit.churn is None:
        lines.extend(commit.files)
    else:
        # Only totals are kept per record, so they land on the first file.
        for i, path in enumerate(commit.files):
            added, deleted = commit.churn if i == 0 else (0, 0)
            lines.append(f"{added}\t{deleted}\t{path}")
    return "\n".join(lines) + "\n"


def serialize_commit_log(commits: Iterable[CommitRecord]) -> str:
    return "".join(format_commit(c) for c in commits)


# --------------------------------------------------------------------------
# git wrapper

GIT_LOG_ARGS = [
    "log",
    "--no-renames",
    "--numstat",
    "--date-order",
    "--reverse",
    # Two NULs start a commit; \x1f separates fields; \x1e ends the message.
    "--format=%x00%x00%H%x1f%cI%x1f%an%x1f%P%x1f%B%x1e",
]


def export_git_history(repo: str | Path, git: str = "git", extra_args: Sequence[str] = ()) -> str:
    """Run ``git log`` in ``repo`` and convert its output to the export format."""
    cmd = [git, "-C", str(repo), "-c", "core.quotepath=off", *GIT_LOG_ARGS, *extra_args]
    raw = subprocess.run(cmd, check=True, capture_output=True).stdout
    text = raw.decode("utf-8", "surrogateescape")
    return convert_git_log(text)


def convert_git_log(text: str) -> str:
    parts = []
    for chunk in text.split("\x00\x00"):
        if not chunk.strip():
            continue
        head, _, tail = chunk.partition("\x1e")
        sha, stamp, author, parents, message = head.split("\x1f", 4)
        header = "|".join(escape_field(v) for v in (sha, stamp, author, message.strip()))
        lines = [RECORD_SEPARATOR, header]
        if len(parents.split()) > 1:
            lines.append(MERGE_MARKER)
        lines.extend(ln for ln in tail.splitlines() if ln.strip())
        parts.append("\n".join(lines) + "\n")
    return "".join(parts)


def list_git_tree(repo: str | Path, git: str = "git", rev: str = "HEAD") -> list[str]:
    cmd = [git, "-C", str(repo), "-c", "core.quotepath=off", "ls-tree", "-r", "--name-only", rev]
    out = subprocess.run(cmd, check=True, capture_output=True, text=True).stdout
    return [ln for ln in out.splitlines() if ln]
