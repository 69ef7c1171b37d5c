import json

import pytest

from cohijack.errors import UnmappedTap
from cohijack.ingest import ColumnMapping, normalize, read_events
from cohijack.session_model import read_sessions, write_jsonl

BRAS = {"tap-a": "BRAS1", "tap-b": "BRAS2"}


def ev(status=200, ts=0, seq=1, tap="tap-a", client="10.0.0.7", **extra):
    row = {"src_ip": "203.0.113.5", "dst_ip": client, "ttl": 51, "tcp_seq": seq, "http_status": status,
           "host": "news.example.cn", "timestamp": ts, "tap": tap}
    if status in (301, 302):
        row["location"] = "http://promo.example/"
    row.update(extra)
    return row


def test_filters_to_interesting_statuses():
    res = normalize([ev(200, 0), ev(404, 1), ev(302, 2)], BRAS)
    assert res.retained == 2 and res.filtered == 1
    assert [o.http_status for o in res.observations] == [200, 302]


def test_gap_heuristic_groups_sessions():
    us = 1_000_000
    res = normalize([ev(ts=0), ev(ts=2 * us, seq=2), ev(ts=20 * us, seq=3)], BRAS)
    assert [len(s.responses) for s in res.sessions] == [2, 1]


def test_correlation_id_overrides_gap():
    us = 1_000_000
    rows = [ev(ts=0, correlation_id="r1"), ev(ts=30 * us, correlation_id="r1"), ev(ts=1, correlation_id="r2")]
    res = normalize(rows, BRAS)
    assert sorted(len(s.responses) for s in res.sessions) == [1, 2]


def test_unmapped_tap():
    with pytest.raises(UnmappedTap) as err:
        normalize([ev(tap="tap-z")], BRAS)
    assert err.value.tags == ["tap-z"]


def test_invalid_events_counted_not_fatal():
    rows = [ev(), {"src_ip": "1.2.3.4"}, ev(ttl=999), ev(302, location="")]
    res = normalize(rows, BRAS)
    assert (res.retained, res.invalid, res.filtered) == (1, 3, 0)
    assert res.retained + res.dropped == res.input_count


def test_deterministic_and_schema_round_trip(tmp_path):
    rows = [ev(ts=t * 300_000, seq=t % 3, client=f"10.0.0.{t % 4}", tap="tap-a" if t % 2 else "tap-b")
            for t in range(40)]
    a, b = normalize(rows, BRAS), normalize(list(rows), BRAS)
    assert a.sessions == b.sessions
    write_jsonl(tmp_path / "s.jsonl", a.sessions)
    assert read_sessions(tmp_path / "s.jsonl") == a.sessions


def test_column_mapping_and_units(tmp_path):
    (tmp_path / "map.json").write_text(json.dumps(
        {"columns": {"src_ip": "ip.src", "dst_ip": "ip.dst", "ttl": "ip.ttl", "tcp_seq": "tcp.seq",
                     "http_status": "http.response.code", "host": "http.host", "timestamp": "frame.time",
                     "tap": "iface", "location": "http.location"},
         "timestamp_unit": "s"}))
    (tmp_path / "ev.csv").write_text(
        "ip.src,ip.dst,ip.ttl,tcp.seq,http.response.code,http.host,frame.time,iface,http.location\n"
        "203.0.113.5,10.0.0.7,60,77,302,news.example.cn,1.5,tap-a,http://promo.example/\n"
        "203.0.113.5,10.0.0.7,51,77,200,news.example.cn,1.52,tap-a,\n"
    )
    res = normalize(read_events(tmp_path / "ev.csv"), BRAS, ColumnMapping.load(tmp_path / "map.json"))
    (s,) = res.sessions
    assert [r.timestamp for r in s.responses] == [1_500_000, 1_520_000]
    assert s.responses[0].redirect_location == "http://promo.example/"
    assert s.responses[1].redirect_location is None


def test_read_jsonl_events(tmp_path):
    p = tmp_path / "ev.jsonl"
    p.write_text(json.dumps(ev()) + "\nnot json\n")
    res = normalize(read_events(p), BRAS)
    assert (res.retained, res.invalid) == (1, 1)
