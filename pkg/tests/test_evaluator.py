import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cohijack.detector import Reason, Verdict, VerdictState, hop_anomaly_only
from cohijack.errors import SessionSetMismatch
from cohijack.evaluator import (
    EvalCounts,
    MetricReport,
    experiment_batch,
    read_roc_csv,
    roc_sweep,
    run_pipeline,
    score,
    write_gnuplot_data,
    write_roc_csv,
)
from cohijack.session_model import Label
from cohijack.simulator import AttackConfig, ScenarioConfig, make_sites, tree_topology

from conftest import obs, session

ROWS = tree_topology({"CR1": {"BR1": 2, "BR2": 2}, "CR2": {"BR3": 2}})


def small_scenario(**kw):
    d = dict(topology=ROWS, sites=make_sites(ROWS), n_sessions=400,
             attack=AttackConfig("BR1", "Mixed", 0.3), hop_jitter=1, rng_seed=9)
    d.update(kw)
    return ScenarioConfig(**d)


def labeled(n_pos_hit, n_pos_miss, n_neg_ok, n_neg_fa):
    verdicts, truth, i = [], [], 0
    plan = ([(Label.HIJACKED_302, True)] * n_pos_hit + [(Label.HIJACKED_200, False)] * n_pos_miss
            + [(Label.NORMAL, False)] * n_neg_ok + [(Label.NORMAL, True)] * n_neg_fa)
    for label, predicted in plan:
        sid = f"s{i}"
        i += 1
        truth.append(session(obs(session_id=sid), session_id=sid, label=label))
        verdicts.append(Verdict(sid, VerdictState.HIJACKED, Reason.DUPLICATE_SEQ) if predicted
                        else Verdict(sid, VerdictState.NORMAL))
    return verdicts, truth


def test_ninety_nine_percent_operating_point():
    v, t = labeled(99, 1, 99, 1)
    rep = score(v, t)
    assert rep.counts == EvalCounts(tp=99, fp=1, tn=99, fn=1)
    assert (99 + 99) / (99 + 99 + 1 + 1) == 0.99
    assert rep.accuracy == pytest.approx(0.99)
    assert rep.false_alarm_rate == pytest.approx(1 / 100)


def test_no_positives_leaves_rates_undefined():
    v, t = labeled(0, 0, 20, 0)
    rep = score(v, t)
    assert rep.accuracy == 1.0
    assert rep.detection_rate is None and rep.missed_detection_rate is None
    assert "detection_rate" in rep.undefined
    assert rep.to_dict()["detection_rate"] is None


def test_session_set_mismatch():
    v, t = labeled(1, 0, 1, 0)
    with pytest.raises(SessionSetMismatch) as err:
        score(v[:1], t[1:])
    assert err.value.missing_verdicts == ["s1"] and err.value.missing_truth == ["s0"]


@settings(max_examples=200)
@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
def test_metric_identities(tp, fn, tn, fp):
    v, t = labeled(tp, fn, tn, fp)
    rep = score(v, t)
    # recount from the raw pairs, independent of confusion()
    truth = {s.session_id: s.label.is_hijacked for s in t}
    pred = {x.session_id: x.state is VerdictState.HIJACKED for x in v}
    raw = {"tp": 0, "fp": 0, "tn": 0, "fn": 0}
    for sid in truth:
        k = ("t" if truth[sid] == pred[sid] else "f") + ("p" if pred[sid] else "n")
        raw[k] += 1
    assert rep.counts == EvalCounts(**raw)
    n = tp + fn + tn + fp
    if n:
        assert rep.accuracy == (raw["tp"] + raw["tn"]) / n
    if tp + fn:
        assert rep.detection_rate + rep.missed_detection_rate == pytest.approx(1.0)
    if tn + fp:
        assert rep.false_alarm_rate == fp / (fp + tn)


@settings(max_examples=50)
@given(st.lists(st.tuples(st.integers(0, 30), st.integers(0, 30), st.integers(0, 30), st.integers(0, 30)),
                min_size=1, max_size=6))
def test_aggregation_invariance(runs):
    total = EvalCounts()
    for r in runs:
        total = total + EvalCounts(*r)
    union = EvalCounts(*(sum(col) for col in zip(*runs)))
    assert MetricReport.from_counts(total) == MetricReport.from_counts(union)


def test_roc_single_point_and_validation():
    ds, table, _, _ = run_pipeline(small_scenario())
    assert len(roc_sweep(ds, table, [1])) == 1
    with pytest.raises(ValueError):
        roc_sweep(ds, table, [])
    with pytest.raises(ValueError):
        roc_sweep(ds, table, [3, 1])


def test_roc_monotone_in_delta():
    ds, table, _, _ = run_pipeline(small_scenario(hop_jitter=2))
    deltas = [0, 1, 2, 4, 8]
    for clf, pos in ((None, None), (hop_anomaly_only, frozenset({VerdictState.SUSPICIOUS}))):
        pts = roc_sweep(ds, table, deltas) if clf is None else roc_sweep(ds, table, deltas, clf, pos)
        assert [p.delta for p in pts] == deltas
        drs = [p.detection_rate for p in pts]
        fars = [p.false_alarm_rate for p in pts]
        assert drs == sorted(drs, reverse=True)
        assert fars == sorted(fars, reverse=True)


def test_roc_without_hijacks_has_no_detection_rate():
    ds, table, _, _ = run_pipeline(small_scenario(attack=None))
    assert all(p.detection_rate is None for p in roc_sweep(ds, table, [0, 1, 2]))


def test_roc_files(tmp_path):
    ds, table, _, _ = run_pipeline(small_scenario())
    pts = roc_sweep(ds, table, [0, 2])
    write_roc_csv(tmp_path / "roc.csv", pts)
    assert (tmp_path / "roc.csv").read_text().splitlines()[0] == "delta,false_alarm_rate,detection_rate"
    assert read_roc_csv(tmp_path / "roc.csv") == pts
    write_gnuplot_data(tmp_path / "roc.dat", pts)
    rows = [line.split() for line in (tmp_path / "roc.dat").read_text().splitlines() if not line.startswith("#")]
    assert [int(r[0]) for r in rows] == [0, 2]


def test_batch_single_run_equals_single_score():
    cfg = small_scenario()
    batch = experiment_batch(cfg, 1)
    ds, _, verdicts, _ = run_pipeline(cfg.with_(rng_seed=batch.seeds[0]))
    assert batch.aggregate == score(verdicts, ds.sessions)
    assert batch.runs[0] == batch.aggregate


def test_batch_sums_counts_and_uses_distinct_seeds():
    batch = experiment_batch(small_scenario(n_sessions=100), 4, attack_duration=20)
    assert len(set(batch.seeds)) == 4
    assert sum(r.counts.total for r in batch.runs) == batch.aggregate.counts.total == 4 * 200
    assert batch.to_dict()["n_runs"] == 4


def test_batch_requires_a_run():
    with pytest.raises(ValueError):
        experiment_batch(small_scenario(), 0)
