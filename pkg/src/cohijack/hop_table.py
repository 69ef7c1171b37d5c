"""Learned normal route-hop counts per (target host, server IP, BRAS domain).

The baseline for each key is the mode of the most recent hop samples,
ties resolved toward the larger hop count. Persistence is a sorted CSV.
"""

from __future__ import annotations

import csv
import threading
from collections import Counter, deque
from dataclasses import dataclass
from typing import Iterable, Optional

from .errors import CorruptTableFile
from .session_model import ResponseObservation, infer_hops

CSV_HEADER = ["host", "server_ip", "bras_id", "normal_hops", "sample_count", "last_updated"]
SAMPLE_WINDOW = 1024
DEFAULT_MIN_SAMPLES = 5
MAX_HOPS = 254

Key = tuple[str, str, str]


@dataclass(frozen=True)
class HopTableEntry:
    host: str
    server_ip: str
    bras_id: str
    normal_hops: int
    sample_count: int
    last_updated: int

    @property
    def key(self) -> Key:
        return (self.host, self.server_ip, self.bras_id)


def mode_toward_larger(counts: Counter) -> int:
    return max(counts.items(), key=lambda kv: (kv[1], kv[0]))[0]


class _Samples:
    """Bounded window of hop samples with an incrementally maintained histogram."""

    __slots__ = ("window", "counts")

    def __init__(self, maxlen=SAMPLE_WINDOW):
        self.window = deque(maxlen=maxlen)
        self.counts = Counter()

    def add(self, hops):
        if len(self.window) == self.window.maxlen:
            old = self.window[0]
            self.counts[old] -= 1
            if not self.counts[old]:
                del self.counts[old]
        self.window.append(hops)
        self.counts[hops] += 1

    def copy(self):
        dup = _Samples(self.window.maxlen)
        dup.window.extend(self.window)
        dup.counts = self.counts.copy()
        return dup


class HopTable:
    """Hash table of normal hop counts.

    Writers go through ``learn`` which is serialized by a lock; each update
    replaces the entry object in one assignment, so readers never see a
    half-written entry. ``snapshot`` gives detectors a private copy.
    """

    def __init__(self, learning_min_samples: int = DEFAULT_MIN_SAMPLES):
        if learning_min_samples < 1:
            raise ValueError("learning_min_samples must be >= 1")
        self.learning_min_samples = learning_min_samples
        self._entries: dict[Key, HopTableEntry] = {}
        self._samples: dict[Key, _Samples] = {}
        self._lock = threading.Lock()

    def __len__(self):
        return len(self._entries)

    def __contains__(self, key):
        return key in self._entries

    def __eq__(self, other):
        if not isinstance(other, HopTable):
            return NotImplemented
        return self._entries == other._entries

    def __repr__(self):
        return f"HopTable({len(self)} entries, learning_min_samples={self.learning_min_samples})"

    def get(self, key: Key) -> Optional[HopTableEntry]:
        return self._entries.get(key)

    def entries(self) -> list[HopTableEntry]:
        return [self._entries[k] for k in sorted(self._entries)]

    def samples(self, key: Key) -> tuple[int, ...]:
        """Retained hop samples for ``key``, oldest first."""
        s = self._samples.get(key)
        return tuple(s.window) if s else ()

    def learn_hops(self, key: Key, hops: int, timestamp: int) -> "HopTable":
        if not 0 <= hops <= MAX_HOPS:
            raise ValueError(f"hop count out of range: {hops}")
        with self._lock:
            samples = self._samples.setdefault(key, _Samples())
            samples.add(hops)
            prev = self._entries.get(key)
            self._entries[key] = HopTableEntry(
                host=key[0],
                server_ip=key[1],
                bras_id=key[2],
                normal_hops=mode_toward_larger(samples.counts),
                sample_count=(prev.sample_count if prev else 0) + 1,
                last_updated=max(timestamp, prev.last_updated) if prev else timestamp,
            )
        return self

    def learn(self, obs: ResponseObservation) -> "HopTable":
        return self.learn_hops((obs.host, obs.server_ip, obs.bras_id), infer_hops(obs.ttl), obs.timestamp)

    def lookup(self, host: str, server_ip: str, bras_id: str) -> Optional[int]:
        """Normal hop count, or None when unknown or not yet warmed up."""
        entry = self._entries.get((host, server_ip, bras_id))
        if entry is None or entry.sample_count < self.learning_min_samples:
            return None
        return entry.normal_hops

    def snapshot(self) -> "HopTable":
        with self._lock:
            dup = HopTable(self.learning_min_samples)
            dup._entries = dict(self._entries)
            dup._samples = {k: s.copy() for k, s in self._samples.items()}
        return dup

    def _restore(self, entry: HopTableEntry):
        # the CSV keeps no raw samples; reseed the window with the persisted mode
        samples = _Samples()
        for _ in range(min(entry.sample_count, SAMPLE_WINDOW)):
            samples.add(entry.normal_hops)
        self._samples[entry.key] = samples
        self._entries[entry.key] = entry


def learn(table: HopTable, obs: ResponseObservation) -> HopTable:
    return table.learn(obs)


def lookup_normal_hops(table: HopTable, host: str, server_ip: str, bras_id: str) -> Optional[int]:
    return table.lookup(host, server_ip, bras_id)


def learn_from_observations(
    table: HopTable, observations: Iterable[ResponseObservation], skip_confirmed: bool = True
) -> HopTable:
    """Feed a batch of observations into ``table`` in timestamp order.

    With ``skip_confirmed`` every session containing two responses with the
    same TCP sequence number is left out, so camouflage packets never
    become part of the baseline.
    """
    obs = sorted(observations, key=lambda o: (o.timestamp, o.session_id))
    if skip_confirmed:
        seen: dict[str, set[int]] = {}
        tainted = set()
        for o in obs:
            seqs = seen.setdefault(o.session_id, set())
            if o.tcp_seq in seqs:
                tainted.add(o.session_id)
            seqs.add(o.tcp_seq)
        obs = [o for o in obs if o.session_id not in tainted]
    for o in obs:
        table.learn(o)
    return table


def save(table: HopTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for e in table.entries():
            writer.writerow([e.host, e.server_ip, e.bras_id, e.normal_hops, e.sample_count, e.last_updated])


def load(path, learning_min_samples: int = DEFAULT_MIN_SAMPLES) -> HopTable:
    table = HopTable(learning_min_samples)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise CorruptTableFile(path, 1, f"expected header {','.join(CSV_HEADER)}")
        for row in reader:
            lineno = reader.line_num
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise CorruptTableFile(path, lineno, f"expected {len(CSV_HEADER)} columns, got {len(row)}")
            host, server_ip, bras_id, hops, count, updated = row
            try:
                hops, count, updated = int(hops), int(count), int(updated)
            except ValueError:
                raise CorruptTableFile(path, lineno, "non-integer numeric column") from None
            if not 0 <= hops <= MAX_HOPS:
                raise CorruptTableFile(path, lineno, f"normal_hops out of range: {hops}")
            if count < 1:
                raise CorruptTableFile(path, lineno, f"sample_count must be >= 1: {count}")
            entry = HopTableEntry(host, server_ip, bras_id, hops, count, updated)
            if entry.key in table:
                raise CorruptTableFile(path, lineno, f"duplicate key {entry.key}")
            table._restore(entry)
    return table
