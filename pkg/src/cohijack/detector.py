"""Session classification: hop-count suspicion confirmed by duplicate TCP sequence numbers.

A response arriving with noticeably fewer hops than the learned baseline
marks its session suspicious. Only a second response carrying the same
TCP sequence number confirms a hijack; a suspicious session without such
a pair is cleared back to normal. The duplicate check alone is enough to
catch attackers that forge the TTL of the legitimate server.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional

from .errors import NotHijacked, SchemaError
from .hop_table import HopTable
from .session_model import ResponseObservation, SessionRecord, infer_hops

DEFAULT_DELTA = 1
HIJACK_CSV_HEADER = ["host", "server_ip", "bras_id", "victim_ip", "timestamp", "hijack_kind"]


class VerdictState(str, Enum):
    NORMAL = "Normal"
    SUSPICIOUS = "Suspicious"
    HIJACKED = "Hijacked"


class Reason(str, Enum):
    HOP_ANOMALY = "HopAnomaly"
    DUPLICATE_SEQ = "DuplicateSeq"
    HOP_ANOMALY_AND_DUPLICATE_SEQ = "HopAnomalyAndDuplicateSeq"
    NONE = "None"


class HijackKind(str, Enum):
    REDIRECT_302 = "Redirect302"
    OK_200 = "Ok200"


@dataclass(frozen=True)
class Verdict:
    session_id: str
    state: VerdictState
    reason: Reason = Reason.NONE
    offending_response_index: Optional[int] = None
    # a hop anomaly fired but no duplicate pair confirmed it
    suspicion_cleared: bool = False

    def __post_init__(self):
        object.__setattr__(self, "state", VerdictState(self.state))
        object.__setattr__(self, "reason", Reason(self.reason))
        if self.state is VerdictState.HIJACKED and self.reason not in (
            Reason.DUPLICATE_SEQ,
            Reason.HOP_ANOMALY_AND_DUPLICATE_SEQ,
        ):
            raise ValueError("a Hijacked verdict must be confirmed by a duplicate sequence number")
        if self.state is VerdictState.SUSPICIOUS and self.reason is not Reason.HOP_ANOMALY:
            raise ValueError("a Suspicious verdict must carry reason HopAnomaly")
        if self.state is VerdictState.NORMAL and self.reason is not Reason.NONE:
            raise ValueError("a Normal verdict carries no reason")

    @property
    def is_hijacked(self) -> bool:
        return self.state is VerdictState.HIJACKED

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "state": self.state.value,
            "reason": self.reason.value,
            "offending_response_index": self.offending_response_index,
            "suspicion_cleared": self.suspicion_cleared,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Verdict":
        try:
            return cls(
                session_id=str(d["session_id"]),
                state=VerdictState(d["state"]),
                reason=Reason(d.get("reason", "None")),
                offending_response_index=d.get("offending_response_index"),
                suspicion_cleared=bool(d.get("suspicion_cleared", False)),
            )
        except (KeyError, ValueError) as exc:
            raise SchemaError(f"bad verdict record: {exc}") from None


@dataclass(frozen=True)
class HijackRecord:
    host: str
    server_ip: str
    bras_id: str
    victim_ip: str
    timestamp: int
    hijack_kind: HijackKind

    def sort_key(self):
        return (self.timestamp, self.bras_id, self.victim_ip, self.host, self.server_ip)


def check_hop_anomaly(obs: ResponseObservation, table: HopTable, delta: int = DEFAULT_DELTA) -> bool:
    """True when the response came from more than ``delta`` hops closer than normal.

    Keys without a warmed-up baseline are never suspicious.
    """
    if delta < 0:
        raise ValueError("delta must be >= 0")
    normal = table.lookup(obs.host, obs.server_ip, obs.bras_id)
    if normal is None:
        return False
    return infer_hops(obs.ttl) < normal - delta


def check_duplicate_seq(session: SessionRecord) -> Optional[tuple[int, int]]:
    """Indices of the first pair of responses sharing a TCP sequence number.

    "First" means the pair whose later member arrives earliest, which is
    the moment a streaming monitor could confirm it.
    """
    first_seen: dict[int, int] = {}
    for j, r in enumerate(session.responses):
        i = first_seen.get(r.tcp_seq)
        if i is not None:
            return (i, j)
        first_seen[r.tcp_seq] = j
    return None


def classify_session(session: SessionRecord, table: HopTable, delta: int = DEFAULT_DELTA) -> Verdict:
    anomalous = [i for i, r in enumerate(session.responses) if check_hop_anomaly(r, table, delta)]
    pair = check_duplicate_seq(session)
    if pair is not None:
        reason = Reason.HOP_ANOMALY_AND_DUPLICATE_SEQ if anomalous else Reason.DUPLICATE_SEQ
        return Verdict(session.session_id, VerdictState.HIJACKED, reason, offending_response_index=pair[0])
    return Verdict(session.session_id, VerdictState.NORMAL, suspicion_cleared=bool(anomalous))


def hop_anomaly_only(session: SessionRecord, table: HopTable, delta: int = DEFAULT_DELTA) -> Verdict:
    """Baseline that stops after the hop check and never clears suspicion.

    Kept as a negative control; score it with Suspicious as the positive state.
    """
    for i, r in enumerate(session.responses):
        if check_hop_anomaly(r, table, delta):
            return Verdict(session.session_id, VerdictState.SUSPICIOUS, Reason.HOP_ANOMALY, i)
    return Verdict(session.session_id, VerdictState.NORMAL)


def record_hijack(verdict: Verdict, session: SessionRecord) -> HijackRecord:
    """Hijack record attributed to the earlier packet of the duplicate pair.

    The camouflage response wins the race, so the earlier packet is the forged one.
    """
    if not verdict.is_hijacked:
        raise NotHijacked(f"session {verdict.session_id} is {verdict.state.value}")
    if verdict.session_id != session.session_id:
        raise ValueError("verdict and session refer to different sessions")
    idx = verdict.offending_response_index
    if idx is None:
        pair = check_duplicate_seq(session)
        if pair is None:
            raise NotHijacked(f"session {session.session_id} has no duplicate sequence pair")
        idx = pair[0]
    camo = session.responses[idx]
    kind = HijackKind.OK_200 if camo.http_status == 200 else HijackKind.REDIRECT_302
    return HijackRecord(
        host=camo.host,
        server_ip=camo.server_ip,
        bras_id=camo.bras_id,
        victim_ip=camo.client_ip,
        timestamp=camo.timestamp,
        hijack_kind=kind,
    )


def detect(
    sessions: Iterable[SessionRecord], table: HopTable, delta: int = DEFAULT_DELTA
) -> tuple[list[Verdict], list[HijackRecord]]:
    """Classify every session; outputs are ordered by (request_time, session_id)."""
    ordered = sorted(sessions, key=lambda s: (s.request_time, s.session_id))
    verdicts, records = [], []
    for s in ordered:
        v = classify_session(s, table, delta)
        verdicts.append(v)
        if v.is_hijacked:
            records.append(record_hijack(v, s))
    records.sort(key=HijackRecord.sort_key)
    return verdicts, records


# -- files -------------------------------------------------------------------


def write_verdicts(path, verdicts: Iterable[Verdict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for v in verdicts:
            fh.write(json.dumps(v.to_dict(), separators=(",", ":")))
            fh.write("\n")


def read_verdicts(path) -> list[Verdict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(Verdict.from_dict(json.loads(line)))
            except (json.JSONDecodeError, SchemaError) as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from None
    return out


def write_hijacks(path, records: Iterable[HijackRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HIJACK_CSV_HEADER)
        for r in records:
            writer.writerow([r.host, r.server_ip, r.bras_id, r.victim_ip, r.timestamp, r.hijack_kind.value])


def read_hijacks(path) -> list[HijackRecord]:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != HIJACK_CSV_HEADER:
            raise SchemaError(f"{path}:1: expected header {','.join(HIJACK_CSV_HEADER)}")
        for row in reader:
            try:
                out.append(
                    HijackRecord(
                        host=row["host"],
                        server_ip=row["server_ip"],
                        bras_id=row["bras_id"],
                        victim_ip=row["victim_ip"],
                        timestamp=int(row["timestamp"]),
                        hijack_kind=HijackKind(row["hijack_kind"]),
                    )
                )
            except ValueError as exc:
                raise SchemaError(f"{path}:{reader.line_num}: {exc}") from None
    return out
