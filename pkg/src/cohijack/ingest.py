"""Turn capture-tool exports (CSV or JSONL) into canonical observations and sessions."""

from __future__ import annotations

import csv
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional

from .errors import SchemaError, UnmappedTap
from .session_model import REDIRECT_STATUSES, ResponseObservation, SessionRecord

log = logging.getLogger(__name__)

RETAINED_STATUSES = frozenset({200, 301, 302})
DEFAULT_GAP_SECONDS = 10.0
REQUIRED_FIELDS = ("src_ip", "dst_ip", "ttl", "tcp_seq", "http_status", "host", "timestamp", "tap")
OPTIONAL_FIELDS = ("location", "correlation_id")
_UNIT_TO_US = {"s": 1_000_000, "ms": 1_000, "us": 1}


@dataclass(frozen=True)
class RawHttpEvent:
    src_ip: str  # server side of the response
    dst_ip: str  # client
    ttl: int
    tcp_seq: int
    http_status: int
    host: str
    timestamp: int  # microseconds
    tap: str
    location: Optional[str] = None
    correlation_id: Optional[str] = None


@dataclass
class ColumnMapping:
    """Which source column feeds each canonical field, plus the timestamp unit."""

    columns: dict = field(default_factory=dict)
    timestamp_unit: str = "us"

    def source(self, name):
        return self.columns.get(name, name)

    @classmethod
    def load(cls, path) -> "ColumnMapping":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        unit = doc.get("timestamp_unit", "us")
        if unit not in _UNIT_TO_US:
            raise SchemaError(f"timestamp_unit must be one of {sorted(_UNIT_TO_US)}")
        unknown = set(doc.get("columns", {})) - set(REQUIRED_FIELDS) - set(OPTIONAL_FIELDS)
        if unknown:
            raise SchemaError(f"mapping names unknown canonical fields {sorted(unknown)}")
        return cls(dict(doc.get("columns", {})), unit)


@dataclass
class NormalizeResult:
    observations: list[ResponseObservation]
    sessions: list[SessionRecord]
    input_count: int = 0
    filtered: int = 0  # valid events with a status outside 200/301/302
    invalid: int = 0

    @property
    def retained(self) -> int:
        return len(self.observations)

    @property
    def dropped(self) -> int:
        return self.filtered + self.invalid

    def summary(self) -> dict:
        return {
            "input": self.input_count,
            "retained": self.retained,
            "filtered": self.filtered,
            "invalid": self.invalid,
            "sessions": len(self.sessions),
        }


def _blank(v):
    return v is None or (isinstance(v, str) and not v.strip())


def parse_event(row: Mapping, mapping: ColumnMapping) -> RawHttpEvent:
    values = {}
    for name in REQUIRED_FIELDS:
        v = row.get(mapping.source(name))
        if _blank(v):
            raise SchemaError(f"missing {name}")
        values[name] = v
    for name in OPTIONAL_FIELDS:
        v = row.get(mapping.source(name))
        values[name] = None if _blank(v) else str(v)
    try:
        ts = float(values["timestamp"]) * _UNIT_TO_US[mapping.timestamp_unit]
        return RawHttpEvent(
            src_ip=str(values["src_ip"]),
            dst_ip=str(values["dst_ip"]),
            ttl=int(values["ttl"]),
            tcp_seq=int(values["tcp_seq"]),
            http_status=int(values["http_status"]),
            host=str(values["host"]),
            timestamp=int(round(ts)),
            tap=str(values["tap"]),
            location=values["location"],
            correlation_id=values["correlation_id"],
        )
    except ValueError as exc:
        raise SchemaError(str(exc)) from None


def normalize(
    rows: Iterable[Mapping],
    bras_mapping: Mapping[str, str],
    mapping: Optional[ColumnMapping] = None,
    gap_seconds: float = DEFAULT_GAP_SECONDS,
) -> NormalizeResult:
    """Filter to 200/301/302 responses and group them into sessions.

    Responses are grouped per (client, server, host, BRAS) and, when the
    export carries one, per request correlation id. Without it a new
    session starts whenever consecutive responses are more than
    ``gap_seconds`` apart. Malformed events are counted, not fatal.
    """
    mapping = mapping or ColumnMapping()
    result = NormalizeResult([], [])
    kept: list[RawHttpEvent] = []
    for row in rows:
        result.input_count += 1
        try:
            ev = parse_event(row, mapping)
        except SchemaError as exc:
            result.invalid += 1
            log.debug("invalid event #%d: %s", result.input_count, exc)
            continue
        if ev.http_status not in RETAINED_STATUSES:
            result.filtered += 1
            continue
        if not 1 <= ev.ttl <= 255 or not 0 <= ev.tcp_seq < 2**32:
            result.invalid += 1
            continue
        if ev.http_status in REDIRECT_STATUSES and ev.location is None:
            result.invalid += 1
            continue
        kept.append(ev)

    unmapped = {ev.tap for ev in kept if ev.tap not in bras_mapping}
    if unmapped:
        raise UnmappedTap(unmapped)

    groups = defaultdict(list)
    for order, ev in enumerate(kept):
        key = (ev.dst_ip, ev.src_ip, ev.host, bras_mapping[ev.tap], ev.correlation_id or "")
        groups[key].append((ev.timestamp, order, ev))

    gap_us = gap_seconds * 1_000_000
    chunks = []
    for key, items in groups.items():
        items.sort(key=lambda t: (t[0], t[1]))
        current = [items[0]]
        for item in items[1:]:
            if not key[4] and item[0] - current[-1][0] > gap_us:
                chunks.append((key, current))
                current = []
            current.append(item)
        chunks.append((key, current))
    chunks.sort(key=lambda kc: (kc[1][0][0], kc[0]))

    for n, (key, items) in enumerate(chunks, 1):
        sid = f"ing{n:07d}"
        responses = tuple(
            ResponseObservation(
                session_id=sid,
                server_ip=ev.src_ip,
                client_ip=ev.dst_ip,
                bras_id=key[3],
                ttl=ev.ttl,
                tcp_seq=ev.tcp_seq,
                http_status=ev.http_status,
                redirect_location=ev.location if ev.http_status in REDIRECT_STATUSES else None,
                timestamp=ev.timestamp,
                host=ev.host,
            )
            for _, _, ev in items
        )
        result.sessions.append(SessionRecord(sid, responses[0].timestamp, responses))
    result.observations = sorted(
        (r for s in result.sessions for r in s.responses), key=lambda r: (r.timestamp, r.session_id)
    )
    return result


def read_events(path) -> list[dict]:
    """Rows of a CSV export, or objects of a JSONL export (chosen by suffix)."""
    p = Path(path)
    if p.suffix.lower() in (".jsonl", ".ndjson", ".json"):
        rows = []
        with open(p, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if line.strip():
                    try:
                        rows.append(json.loads(line))
                    except json.JSONDecodeError:
                        # counted as invalid downstream
                        rows.append({"_malformed_line": lineno})
        return rows
    with open(p, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def load_bras_mapping(path) -> dict[str, str]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or not all(isinstance(v, str) for v in doc.values()):
        raise SchemaError(f"{path}: BRAS mapping must be a JSON object of tap tag -> bras_id")
    return doc
