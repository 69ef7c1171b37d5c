"""Packet and session value types plus their JSONL interchange format.

Every stage of the pipeline (simulator, ingester, detector, evaluator)
exchanges these records one JSON object per line, with keys named exactly
after the dataclass fields.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .errors import EmptySession, MixedSession, SchemaError

# Default initial TTLs of common network stacks, ascending.
INITIAL_TTLS = (64, 128, 255)
REDIRECT_STATUSES = frozenset({301, 302})
MAX_SEQ = 2**32 - 1


def infer_hops(ttl: int) -> int:
    """Route hop count implied by an observed TTL.

    The sender's initial TTL is taken to be the smallest of 64, 128, 255
    that is not below the observed value.
    """
    if not 1 <= ttl <= 255:
        raise ValueError(f"ttl out of range: {ttl}")
    for initial in INITIAL_TTLS:
        if ttl <= initial:
            return initial - ttl
    raise AssertionError("unreachable")


class Label(str, Enum):
    NORMAL = "Normal"
    HIJACKED_302 = "Hijacked302"
    HIJACKED_200 = "Hijacked200"

    @property
    def is_hijacked(self) -> bool:
        return self is not Label.NORMAL


@dataclass(frozen=True)
class ResponseObservation:
    """One captured HTTP response, reduced to the fields detection needs."""

    session_id: str
    server_ip: str
    client_ip: str
    bras_id: str
    ttl: int
    tcp_seq: int
    http_status: int
    redirect_location: Optional[str]
    timestamp: int  # microseconds since dataset start
    host: str

    def __post_init__(self):
        if not isinstance(self.ttl, int) or not 1 <= self.ttl <= 255:
            raise SchemaError(f"ttl must be an integer in 1..255, got {self.ttl!r}")
        if not isinstance(self.tcp_seq, int) or not 0 <= self.tcp_seq <= MAX_SEQ:
            raise SchemaError(f"tcp_seq must be a 32-bit unsigned integer, got {self.tcp_seq!r}")
        is_redirect = self.http_status in REDIRECT_STATUSES
        if is_redirect != (self.redirect_location is not None):
            raise SchemaError(
                f"redirect_location must be present iff status is 301/302 "
                f"(status={self.http_status}, location={self.redirect_location!r})"
            )

    @property
    def hops(self) -> int:
        return infer_hops(self.ttl)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ResponseObservation":
        try:
            return cls(
                session_id=str(d["session_id"]),
                server_ip=str(d["server_ip"]),
                client_ip=str(d["client_ip"]),
                bras_id=str(d["bras_id"]),
                ttl=_as_int(d["ttl"]),
                tcp_seq=_as_int(d["tcp_seq"]),
                http_status=_as_int(d["http_status"]),
                redirect_location=d.get("redirect_location"),
                timestamp=_as_int(d["timestamp"]),
                host=str(d["host"]),
            )
        except KeyError as exc:
            raise SchemaError(f"observation missing field {exc}") from None


@dataclass(frozen=True)
class SessionRecord:
    session_id: str
    request_time: int
    responses: tuple[ResponseObservation, ...]
    label: Optional[Label] = None

    def __post_init__(self):
        if not isinstance(self.responses, tuple):
            object.__setattr__(self, "responses", tuple(self.responses))
        if self.label is not None and not isinstance(self.label, Label):
            object.__setattr__(self, "label", Label(self.label))
        if not self.responses:
            raise EmptySession(f"session {self.session_id} has no responses")
        first = self.responses[0]
        for r in self.responses:
            if r.session_id != self.session_id:
                raise MixedSession(f"response for {r.session_id} inside session {self.session_id}")
            if r.client_ip != first.client_ip or r.bras_id != first.bras_id:
                raise MixedSession(f"session {self.session_id} spans several clients or BRAS domains")
        if any(a.timestamp > b.timestamp for a, b in zip(self.responses, self.responses[1:])):
            raise SchemaError(f"responses of session {self.session_id} are not time-ordered")

    @property
    def client_ip(self) -> str:
        return self.responses[0].client_ip

    @property
    def bras_id(self) -> str:
        return self.responses[0].bras_id

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "request_time": self.request_time,
            "responses": [r.to_dict() for r in self.responses],
            "label": self.label.value if self.label is not None else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SessionRecord":
        try:
            label = d.get("label")
            return cls(
                session_id=str(d["session_id"]),
                request_time=_as_int(d["request_time"]),
                responses=tuple(ResponseObservation.from_dict(r) for r in d["responses"]),
                label=Label(label) if label is not None else None,
            )
        except KeyError as exc:
            raise SchemaError(f"session missing field {exc}") from None
        except ValueError as exc:
            if isinstance(exc, SchemaError):
                raise
            raise SchemaError(str(exc)) from None


def session_from_packets(observations: Iterable[ResponseObservation], request_time: int) -> SessionRecord:
    """Assemble observations of a single session into a time-ordered record."""
    obs = list(observations)
    if not obs:
        raise EmptySession("cannot build a session from zero observations")
    ids = {o.session_id for o in obs}
    if len(ids) > 1:
        raise MixedSession(f"observations span sessions {sorted(ids)}")
    # stable sort keeps capture order for equal timestamps
    obs.sort(key=lambda o: o.timestamp)
    return SessionRecord(session_id=obs[0].session_id, request_time=request_time, responses=tuple(obs))


def _as_int(value) -> int:
    if isinstance(value, bool):
        raise SchemaError(f"expected integer, got {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    if isinstance(value, str):
        try:
            return int(value.strip())
        except ValueError:
            pass
    raise SchemaError(f"expected integer, got {value!r}")


# -- JSONL -----------------------------------------------------------------


def dumps_record(record) -> str:
    return json.dumps(record.to_dict(), separators=(",", ":"))


def write_jsonl(path, records) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(dumps_record(rec))
            fh.write("\n")
            n += 1
    return n


def _iter_json_lines(path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None


def read_observations(path) -> list[ResponseObservation]:
    out = []
    for lineno, d in _iter_json_lines(path):
        try:
            out.append(ResponseObservation.from_dict(d))
        except SchemaError as exc:
            raise SchemaError(f"{path}:{lineno}: {exc}") from None
    return out


def read_sessions(path) -> list[SessionRecord]:
    out = []
    for lineno, d in _iter_json_lines(path):
        try:
            out.append(SessionRecord.from_dict(d))
        except (SchemaError, MixedSession, EmptySession) as exc:
            raise SchemaError(f"{Path(path)}:{lineno}: {exc}") from None
    return out
