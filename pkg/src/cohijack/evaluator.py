"""Confusion counts, rate metrics, ROC sweeps and repeated-run experiments.

Positives are hijacked sessions. Rates with a zero denominator are left
undefined (None) and the reason is kept next to them.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

from .detector import DEFAULT_DELTA, Verdict, VerdictState, classify_session, detect
from .hop_table import HopTable, learn_from_observations
from .session_model import SessionRecord
from .errors import SessionSetMismatch

ROC_CSV_HEADER = ["delta", "false_alarm_rate", "detection_rate"]
_SEED_STRIDE = 0x9E3779B97F4A7C15


@dataclass(frozen=True)
class EvalCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __add__(self, other: "EvalCounts") -> "EvalCounts":
        return EvalCounts(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MetricReport:
    counts: EvalCounts
    detection_rate: Optional[float]
    false_alarm_rate: Optional[float]
    missed_detection_rate: Optional[float]
    accuracy: Optional[float]
    undefined: dict = field(default_factory=dict)

    @classmethod
    def from_counts(cls, c: EvalCounts) -> "MetricReport":
        undefined = {}
        positives, negatives = c.tp + c.fn, c.fp + c.tn

        def ratio(name, num, den, why):
            if den == 0:
                undefined[name] = why
                return None
            return num / den

        return cls(
            counts=c,
            detection_rate=ratio("detection_rate", c.tp, positives, "no hijacked sessions"),
            false_alarm_rate=ratio("false_alarm_rate", c.fp, negatives, "no normal sessions"),
            missed_detection_rate=ratio("missed_detection_rate", c.fn, positives, "no hijacked sessions"),
            accuracy=ratio("accuracy", c.tp + c.tn, c.total, "no sessions"),
            undefined=undefined,
        )

    def to_dict(self) -> dict:
        return {
            "detection_rate": self.detection_rate,
            "false_alarm_rate": self.false_alarm_rate,
            "missed_detection_rate": self.missed_detection_rate,
            "accuracy": self.accuracy,
            "counts": self.counts.__dict__.copy(),
            "undefined": dict(self.undefined),
        }


def confusion(
    verdicts: Iterable[Verdict],
    truth: Iterable[SessionRecord],
    positive_states=frozenset({VerdictState.HIJACKED}),
) -> EvalCounts:
    by_id = {v.session_id: v for v in verdicts}
    labels = {s.session_id: s.label for s in truth}
    if by_id.keys() != labels.keys():
        raise SessionSetMismatch(labels.keys() - by_id.keys(), by_id.keys() - labels.keys())
    tp = fp = tn = fn = 0
    for sid, label in labels.items():
        if label is None:
            raise ValueError(f"session {sid} has no ground-truth label")
        predicted = by_id[sid].state in positive_states
        if label.is_hijacked:
            tp += predicted
            fn += not predicted
        else:
            fp += predicted
            tn += not predicted
    return EvalCounts(tp, fp, tn, fn)


def score(verdicts, truth, positive_states=frozenset({VerdictState.HIJACKED})) -> MetricReport:
    return MetricReport.from_counts(confusion(verdicts, truth, positive_states))


@dataclass(frozen=True)
class RocPoint:
    delta: int
    false_alarm_rate: Optional[float]
    detection_rate: Optional[float]


def roc_sweep(
    dataset,
    table: HopTable,
    deltas: Sequence[int],
    classifier: Callable = classify_session,
    positive_states=frozenset({VerdictState.HIJACKED}),
) -> list[RocPoint]:
    """One ROC point per suspicion delta, re-classifying every session each time."""
    deltas = list(deltas)
    if not deltas:
        raise ValueError("deltas must be non-empty")
    if deltas != sorted(deltas):
        raise ValueError("deltas must be sorted ascending")
    sessions = dataset.sessions if hasattr(dataset, "sessions") else list(dataset)
    points = []
    for d in deltas:
        verdicts = [classifier(s, table, d) for s in sessions]
        rep = score(verdicts, sessions, positive_states)
        points.append(RocPoint(d, rep.false_alarm_rate, rep.detection_rate))
    return points


def derive_seed(base_seed: int, run: int) -> int:
    return (base_seed + run * _SEED_STRIDE) % 2**64


@dataclass(frozen=True)
class BatchReport:
    aggregate: MetricReport
    runs: tuple[MetricReport, ...]
    seeds: tuple[int, ...]

    def to_dict(self) -> dict:
        d = self.aggregate.to_dict()
        d["n_runs"] = len(self.runs)
        d["runs"] = [dict(r.to_dict(), seed=s) for r, s in zip(self.runs, self.seeds)]
        return d


def run_pipeline(config, delta: int = DEFAULT_DELTA, learning_min_samples: int = 5):
    """simulate -> learn -> detect for one scenario; returns (dataset, table, verdicts, records)."""
    from .simulator import generate

    dataset = generate(config)
    table = learn_from_observations(HopTable(learning_min_samples), dataset.observations)
    verdicts, records = detect(dataset.sessions, table, delta)
    return dataset, table, verdicts, records


def experiment_batch(
    config,
    n_runs: int,
    attack_duration: Optional[float] = None,
    delta: int = DEFAULT_DELTA,
    learning_min_samples: int = 5,
) -> BatchReport:
    """Repeat generate -> learn -> detect -> score with distinct derived seeds.

    ``attack_duration`` (seconds) sizes each run as duration x session_rate.
    Counts are summed across runs before the aggregate rates are computed.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    if attack_duration is not None:
        if attack_duration <= 0:
            raise ValueError("attack_duration must be positive")
        config = config.with_(n_sessions=math.ceil(attack_duration * config.session_rate))
    reports, seeds = [], []
    total = EvalCounts()
    for run in range(n_runs):
        seed = derive_seed(config.rng_seed, run)
        dataset, _, verdicts, _ = run_pipeline(config.with_(rng_seed=seed), delta, learning_min_samples)
        rep = score(verdicts, dataset.sessions)
        reports.append(rep)
        seeds.append(seed)
        total = total + rep.counts
    return BatchReport(MetricReport.from_counts(total), tuple(reports), tuple(seeds))


# -- files -------------------------------------------------------------------


def write_metrics(path, report) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")


def _fmt(x):
    return "" if x is None else repr(float(x))


def write_roc_csv(path, points: Iterable[RocPoint]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ROC_CSV_HEADER)
        for p in points:
            writer.writerow([p.delta, _fmt(p.false_alarm_rate), _fmt(p.detection_rate)])


def read_roc_csv(path) -> list[RocPoint]:
    with open(path, encoding="utf-8", newline="") as fh:
        return [
            RocPoint(
                int(r["delta"]),
                float(r["false_alarm_rate"]) if r["false_alarm_rate"] else None,
                float(r["detection_rate"]) if r["detection_rate"] else None,
            )
            for r in csv.DictReader(fh)
        ]


def write_gnuplot_data(path, points: Iterable[RocPoint]) -> None:
    """Whitespace-separated columns; undefined rates become gnuplot's NaN."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# delta false_alarm_rate detection_rate\n")
        for p in points:
            far = "NaN" if p.false_alarm_rate is None else f"{p.false_alarm_rate:.6f}"
            dr = "NaN" if p.detection_rate is None else f"{p.detection_rate:.6f}"
            fh.write(f"{p.delta} {far} {dr}\n")
