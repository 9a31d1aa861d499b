"""Loading and filtering of nightly test-failure logs.

Two ingest paths feed the rest of the package: structured JSONL (the
canonical interchange format) and plaintext log files parsed with a small
rules file. Only error- and critical-severity records survive parsing.
Downstream stages work on immutable Corpus snapshots cut from a time window.
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Iterator

from .errors import EmptyWindowError, IngestError, WindowPlacementError


class Severity(Enum):
    ERROR = "error"
    CRITICAL = "critical"


# Source severities mapped onto the two levels we keep; everything else is dropped.
DEFAULT_SEVERITY_MAP: dict[str, Severity] = {
    "error": Severity.ERROR,
    "err": Severity.ERROR,
    "critical": Severity.CRITICAL,
    "crit": Severity.CRITICAL,
    "fatal": Severity.CRITICAL,
}

_REQUIRED_FIELDS = ("timestamp", "branch", "session_id", "severity", "message")


@dataclass(frozen=True)
class LogRecord:
    """One failure log entry, normalized to UTC."""

    id: str
    timestamp: datetime | None
    branch: str
    session_id: str
    severity: Severity
    message: str
    test_id: str | None = None
    source: str = ""

    def __post_init__(self) -> None:
        if not self.id:
            raise IngestError("record id must be non-empty")
        if not self.message.strip():
            raise IngestError(f"record {self.id}: message is empty")
        if self.timestamp is not None:
            object.__setattr__(self, "timestamp", _to_utc(self.timestamp))


@dataclass(frozen=True)
class WindowSpec:
    """Half-open time interval [start, end) plus an optional branch filter.

    An empty branch set means all branches.
    """

    start: datetime
    end: datetime
    branches: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "start", _to_utc(self.start))
        object.__setattr__(self, "end", _to_utc(self.end))
        object.__setattr__(self, "branches", frozenset(self.branches))
        if self.start >= self.end:
            raise IngestError("window start must precede end")

    def contains(self, record: LogRecord) -> bool:
        if record.timestamp is None:
            return False
        if not (self.start <= record.timestamp < self.end):
            return False
        return not self.branches or record.branch in self.branches


@dataclass(frozen=True)
class Corpus:
    """Windowed, ordered snapshot of records ready for analysis."""

    records: tuple[LogRecord, ...]
    window: WindowSpec
    created_at: datetime = field(compare=False, default_factory=lambda: datetime.now(timezone.utc))

    def __len__(self) -> int:
        return len(self.records)


@dataclass
class ParseResult:
    records: list[LogRecord]
    dropped: int = 0
    warnings: list[str] = field(default_factory=list)


def parse_rfc3339(value: str) -> datetime:
    """Parse an RFC 3339 timestamp, accepting the Z suffix, into aware UTC."""
    try:
        parsed = datetime.fromisoformat(value.replace("Z", "+00:00"))
    except (ValueError, AttributeError, TypeError) as exc:
        raise IngestError(f"invalid timestamp {value!r}: {exc}") from None
    return _to_utc(parsed)


def _to_utc(value: datetime) -> datetime:
    if value.tzinfo is None:
        return value.replace(tzinfo=timezone.utc)
    return value.astimezone(timezone.utc)


def _iter_lines(stream: IO[bytes] | IO[str] | str | Iterable[str]) -> Iterator[str]:
    if isinstance(stream, str):
        yield from stream.splitlines()
        return
    for line in stream:
        if isinstance(line, bytes):
            yield line.decode("utf-8")
        else:
            yield line


def _synth_id(*parts: object) -> str:
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8"))
    return digest.hexdigest()[:16]


def parse_structured(
    stream: IO[bytes] | IO[str] | str | Iterable[str],
    severity_map: dict[str, Severity] | None = None,
) -> ParseResult:
    """Parse JSONL records, keeping error/critical entries.

    Malformed lines and missing required fields raise IngestError naming the
    line; records with unmapped severities are dropped and counted.
    """
    smap = severity_map if severity_map is not None else DEFAULT_SEVERITY_MAP
    result = ParseResult(records=[])
    for lineno, raw in enumerate(_iter_lines(stream), start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise IngestError(f"line {lineno}: invalid JSON ({exc.msg})") from None
        if not isinstance(obj, dict):
            raise IngestError(f"line {lineno}: expected an object")
        for name in _REQUIRED_FIELDS:
            if name not in obj:
                raise IngestError(f"line {lineno}: missing required field '{name}'")
        severity = smap.get(str(obj["severity"]).lower())
        if severity is None:
            result.dropped += 1
            continue
        message = obj["message"]
        if not isinstance(message, str) or not message.strip():
            raise IngestError(f"line {lineno}: field 'message' is empty")
        timestamp = obj["timestamp"]
        try:
            parsed_ts = parse_rfc3339(timestamp)
        except IngestError as exc:
            raise IngestError(f"line {lineno}: field 'timestamp': {exc}") from None
        record_id = str(obj["id"]) if obj.get("id") else _synth_id(lineno, line)
        result.records.append(
            LogRecord(
                id=record_id,
                timestamp=parsed_ts,
                branch=str(obj["branch"]),
                session_id=str(obj["session_id"]),
                severity=severity,
                message=message,
                test_id=str(obj["test_id"]) if obj.get("test_id") is not None else None,
                source=str(obj.get("source", "")),
            )
        )
    return result


def record_to_obj(record: LogRecord) -> dict:
    """Render a record as a JSON-safe dict in the ingest schema."""
    obj: dict = {
        "id": record.id,
        "timestamp": record.timestamp.isoformat() if record.timestamp else None,
        "branch": record.branch,
        "session_id": record.session_id,
        "severity": record.severity.value,
        "message": record.message,
        "source": record.source,
    }
    if record.test_id is not None:
        obj["test_id"] = record.test_id
    return obj


def serialize_records(records: Iterable[LogRecord]) -> str:
    """Serialize records to JSONL in the same schema parse_structured reads."""
    lines = [json.dumps(record_to_obj(r), sort_keys=True, ensure_ascii=False) for r in records]
    return "\n".join(lines) + ("\n" if lines else "")


def select_window(
    records: Iterable[LogRecord],
    window: WindowSpec,
    created_at: datetime | None = None,
) -> Corpus:
    """Cut an ordered Corpus out of records using a half-open time window.

    Records are sorted by (timestamp, id). Fewer than two surviving records
    raise EmptyWindowError; records without timestamps cannot be placed and
    raise WindowPlacementError naming them.
    """
    records = list(records)
    unplaceable = [r.id for r in records if r.timestamp is None]
    if unplaceable:
        raise WindowPlacementError(
            "records without timestamps cannot be windowed: " + ", ".join(sorted(unplaceable))
        )
    selected = sorted(
        (r for r in records if window.contains(r)),
        key=lambda r: (r.timestamp, r.id),
    )
    seen: set[str] = set()
    for rec in selected:
        if rec.id in seen:
            raise IngestError(f"duplicate record id {rec.id!r} in window")
        seen.add(rec.id)
    if len(selected) == 0:
        raise EmptyWindowError("empty window: no records matched")
    if len(selected) < 2:
        raise EmptyWindowError("empty window: fewer than 2 records (insufficient for clustering)")
    stamp = created_at if created_at is not None else datetime.now(timezone.utc)
    return Corpus(records=tuple(selected), window=window, created_at=stamp)


@dataclass(frozen=True)
class PlaintextRules:
    """Extraction rules for plaintext logs.

    `boundary` marks lines that start a new record; following non-boundary
    lines are merged into the record. `severity` captures the severity token,
    `timestamp` the timestamp text (parsed with `timestamp_format` when given,
    otherwise as RFC 3339-ish).
    """

    boundary: re.Pattern
    severity: re.Pattern
    timestamp: re.Pattern
    timestamp_format: str | None = None
    branch: re.Pattern | None = None
    session: re.Pattern | None = None
    branch_default: str = ""
    session_default: str = ""
    severity_map: dict[str, Severity] = field(default_factory=lambda: dict(DEFAULT_SEVERITY_MAP))


def parse_rules(text: str) -> PlaintextRules:
    """Parse a rules file of `key = value` lines (# starts a comment line)."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise IngestError(f"rules line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    for required in ("boundary", "severity", "timestamp"):
        if required not in values:
            raise IngestError(f"rules file: missing required key '{required}'")

    def compile_pattern(key: str) -> re.Pattern:
        try:
            return re.compile(values[key])
        except re.error as exc:
            raise IngestError(f"rules key '{key}': bad pattern ({exc})") from None

    severity_map = dict(DEFAULT_SEVERITY_MAP)
    if "severity_map" in values:
        severity_map = {}
        for pair in values["severity_map"].split(","):
            src, _, dst = pair.partition("=")
            src, dst = src.strip().lower(), dst.strip().lower()
            if not src or dst not in ("error", "critical"):
                raise IngestError(f"rules key 'severity_map': bad entry {pair.strip()!r}")
            severity_map[src] = Severity(dst)
    return PlaintextRules(
        boundary=compile_pattern("boundary"),
        severity=compile_pattern("severity"),
        timestamp=compile_pattern("timestamp"),
        timestamp_format=values.get("timestamp_format"),
        branch=compile_pattern("branch") if "branch" in values else None,
        session=compile_pattern("session") if "session" in values else None,
        branch_default=values.get("branch_default", ""),
        session_default=values.get("session_default", ""),
        severity_map=severity_map,
    )


def load_rules(path: str | Path) -> PlaintextRules:
    return parse_rules(Path(path).read_text(encoding="utf-8"))


def _capture(pattern: re.Pattern, text: str) -> str | None:
    match = pattern.search(text)
    if match is None:
        return None
    return match.group(1) if match.groups() else match.group(0)


def parse_plaintext(
    stream: IO[bytes] | IO[str] | str | Iterable[str],
    rules: PlaintextRules,
    source: str = "",
) -> ParseResult:
    """Parse a plaintext log into records using the given rules.

    Contiguous lines belonging to one entry are merged into a single message.
    Record ids are a hash of (source, first-line number) so the same file
    always parses to the same ids. Entries whose severity does not map to
    error/critical are dropped and counted; a record whose timestamp cannot
    be parsed is kept with no timestamp and fails later at windowing time.
    """
    result = ParseResult(records=[])
    blocks: list[tuple[int, list[str]]] = []
    for lineno, raw in enumerate(_iter_lines(stream), start=1):
        line = raw.rstrip("\n").rstrip("\r")
        if rules.boundary.search(line):
            blocks.append((lineno, [line]))
        elif blocks:
            blocks[-1][1].append(line)
        elif line.strip():
            result.warnings.append(f"line {lineno}: skipped text before first record boundary")
    for first_lineno, lines in blocks:
        text = "\n".join(lines).rstrip("\n")
        if not text.strip():
            result.dropped += 1
            continue
        token = _capture(rules.severity, text)
        severity = rules.severity_map.get(token.lower()) if token else None
        if severity is None:
            result.dropped += 1
            continue
        raw_ts = _capture(rules.timestamp, text)
        timestamp: datetime | None = None
        if raw_ts is not None:
            if rules.timestamp_format:
                try:
                    timestamp = _to_utc(datetime.strptime(raw_ts, rules.timestamp_format))
                except ValueError:
                    timestamp = None
            else:
                try:
                    timestamp = parse_rfc3339(raw_ts)
                except IngestError:
                    timestamp = None
        branch = (_capture(rules.branch, text) if rules.branch else None) or rules.branch_default
        session = (_capture(rules.session, text) if rules.session else None) or rules.session_default
        result.records.append(
            LogRecord(
                id=_synth_id(source, first_lineno),
                timestamp=timestamp,
                branch=branch,
                session_id=session,
                severity=severity,
                message=text,
                source=source,
            )
        )
    return result
