"""Mapping from repository paths to microservices.

Mapping documents hold one rule per line, ``pattern => service_id``, with
``#`` comments.  Rules are tried top to bottom and the first match wins.
Patterns are globs over ``/``-separated paths: ``*`` and ``?`` stay within a
path segment, ``[...]`` is a character class and ``**`` spans any number of
segments.
"""

from __future__ import annotations

import re
from collections.abc import Iterable
from dataclasses import dataclass, field
from pathlib import PurePosixPath

UNMAPPED = "__unmapped__"

SERVICE_MARKERS = frozenset(
    {
        "Dockerfile",
        "pom.xml",
        "build.gradle",
        "package.json",
        "go.mod",
        "Cargo.toml",
        "requirements.txt",
    }
)
MAX_SERVICE_DEPTH = 2


class ServiceMapError(ValueError):
    pass


def glob_to_regex(pattern: str) -> re.Pattern[str]:
    if not pattern:
        raise ServiceMapError("empty pattern")
    out = []
    i, n = 0, len(pattern)
    while i < n:
        ch = pattern[i]
        if pattern.startswith("**", i):
            at_start = i == 0 or pattern[i - 1] == "/"
            j = i + 2
            if not at_start or (j < n and pattern[j] != "/"):
                raise ServiceMapError(f"'**' must be a whole path segment in {pattern!r}")
            if j < n:  # "**/" matches zero or more leading directories
                out.append("(?:[^/]+/)*")
                j += 1
            else:
                out.append(".*")
            i = j
            continue
        if ch == "*":
            out.append("[^/]*")
        elif ch == "?":
            out.append("[^/]")
        elif ch == "[":
            end = pattern.find("]", i + 2 if pattern[i + 1 : i + 2] in ("!", "]") else i + 1)
            if end == -1:
                raise ServiceMapError(f"unterminated character class in {pattern!r}")
            body = pattern[i + 1 : end]
            if body.startswith("!"):
                body = "^" + body[1:]
            out.append("[" + body.replace("\\", "\\\\") + "]")
            i = end
        else:
            out.append(re.escape(ch))
        i += 1
    try:
        return re.compile("".join(out) + r"\Z")
    except re.error as exc:
        raise ServiceMapError(f"bad pattern {pattern!r}: {exc}") from None


@dataclass(frozen=True)
class ServiceMap:
    rules: tuple[tuple[str, str], ...]
    sizes: dict[str, int] | None = None
    _compiled: tuple[tuple[re.Pattern[str], str], ...] = field(
        init=False, repr=False, compare=False
    )

    def __post_init__(self) -> None:
        if not self.rules:
            raise ServiceMapError("service map has no rules")
        seen = set()
        for _, service in self.rules:
            if not service or service == UNMAPPED:
                raise ServiceMapError(f"invalid service id {service!r}")
            if service in seen:
                raise ServiceMapError(f"duplicate service id {service!r}")
            seen.add(service)
        compiled = tuple((glob_to_regex(p), s) for p, s in self.rules)
        object.__setattr__(self, "_compiled", compiled)

    @property
    def services(self) -> tuple[str, ...]:
        return tuple(s for _, s in self.rules)

    def resolve(self, path: str) -> str | None:
        for regex, service in self._compiled:
            if regex.match(path):
                return service
        return None

    def to_document(self) -> str:
        return "".join(f"{p} => {s}\n" for p, s in self.rules)


def resolve_service(m: ServiceMap, path: str) -> str | None:
    return m.resolve(path)


def parse_service_map(text: str) -> ServiceMap:
    rules = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        pattern, sep, service = line.partition("=>")
        pattern, service = pattern.strip(), service.strip()
        if not sep or not pattern or not service:
            raise ServiceMapError(f"line {lineno}: expected 'pattern => service_id'")
        try:
            glob_to_regex(pattern)
        except ServiceMapError as exc:
            raise ServiceMapError(f"line {lineno}: {exc}") from None
        if service in {s for _, s in rules}:
            raise ServiceMapError(f"line {lineno}: duplicate service id {service!r}")
        rules.append((pattern, service))
    return ServiceMap(tuple(rules))


def load_service_map(path) -> ServiceMap:
    with open(path, encoding="utf-8") as fh:
        return parse_service_map(fh.read())


def read_tree(path) -> list[str]:
    """Read a file tree listing, one repository-relative path per line."""
    with open(path, encoding="utf-8") as fh:
        return [ln.strip() for ln in fh if ln.strip()]


def _rule_order(directory: str) -> tuple[str, ...]:
    # Lexicographic, except a nested service directory sorts before its
    # ancestor so that first-match-wins can still reach it.
    return (*PurePosixPath(directory).parts, "\U0010ffff")


def autodetect_services(tree: Iterable[str]) -> ServiceMap:
    """One rule ``<dir>/** => <dir>`` per directory holding a service marker file."""
    dirs = set()
    for path in tree:
        p = PurePosixPath(path)
        if p.name in SERVICE_MARKERS and 1 <= len(p.parts) - 1 <= MAX_SERVICE_DEPTH:
            dirs.add(str(p.parent))
    if not dirs:
        raise ServiceMapError(
            "no microservices detected (no marker files within depth "
            f"{MAX_SERVICE_DEPTH}); write a mapping document by hand"
        )
    return ServiceMap(tuple((f"{d}/**", d) for d in sorted(dirs, key=_rule_order)))


def service_size(m: ServiceMap, tree: Iterable[str]) -> dict[str, int]:
    counts = dict.fromkeys(m.services, 0)
    counts[UNMAPPED] = 0
    for path in tree:
        counts[m.resolve(path) or UNMAPPED] += 1
    return counts
