import pytest

from cohijack.hop_table import HopTable
from cohijack.session_model import ResponseObservation, SessionRecord


def obs(session_id="s1", ttl=50, tcp_seq=1000, status=200, timestamp=0, host="news.example.cn",
        server_ip="203.0.113.10", client_ip="10.0.0.5", bras_id="BRAS1", location=None):
    if status in (301, 302) and location is None:
        location = "http://elsewhere.example/"
    return ResponseObservation(
        session_id=session_id,
        server_ip=server_ip,
        client_ip=client_ip,
        bras_id=bras_id,
        ttl=ttl,
        tcp_seq=tcp_seq,
        http_status=status,
        redirect_location=location,
        timestamp=timestamp,
        host=host,
    )


def session(*responses, session_id="s1", request_time=0, label=None):
    return SessionRecord(session_id, request_time, tuple(responses), label)


def table_with(hops, n=10, min_samples=5, **key):
    """Hop table whose single key has seen ``hops`` n times."""
    t = HopTable(min_samples)
    o = obs(ttl=64 - hops, **key)
    for i in range(n):
        t.learn_hops((o.host, o.server_ip, o.bras_id), hops, i)
    return t


@pytest.fixture
def baseline14():
    return table_with(14)


_CRITERIA = []


@pytest.fixture
def criterion():
    """Record one acceptance line; the summary hook prints them all at the end."""
    def record(number, ok, detail):
        _CRITERIA.append((number, bool(ok), detail))
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(_CRITERIA):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
