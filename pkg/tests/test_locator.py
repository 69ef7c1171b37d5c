import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from cohijack.detector import HijackKind, HijackRecord
from cohijack.errors import TopologyError, UnknownBras
from cohijack.locator import (
    AttackDistribution,
    AutonomousDomain,
    Level,
    LocationResult,
    Topology,
    TopologyRow,
    attack_distribution,
    converge,
    corroborate,
    read_topology,
    redirect_share_by_bras,
    write_location,
    write_topology,
)

from conftest import obs

TOPO = Topology([
    TopologyRow("b1", "BR1", "CR1"),
    TopologyRow("b2", "BR1", "CR1"),
    TopologyRow("b3", "BR2", "CR1"),
    TopologyRow("b4", "BR3", "CR2"),
    TopologyRow("b5", "BR3", "CR2"),
])


def records(bras_counts):
    out = []
    for b, n in bras_counts.items():
        out += [HijackRecord("h", "1.1.1.1", b, "10.0.0.1", i, HijackKind.OK_200) for i in range(n)]
    return out


def dist(counts):
    return AttackDistribution(counts=dict(counts), total=sum(counts.values()))


class TestDistribution:
    def test_empty(self):
        d = attack_distribution([])
        assert (d.counts, d.total) == ({}, 0)

    def test_counts(self):
        d = attack_distribution(records({"b1": 2, "b3": 1}))
        assert (d.counts, d.total) == ({"b1": 2, "b3": 1}, 3)

    def test_single_domain(self):
        assert attack_distribution(records({"b2": 100})).counts == {"b2": 100}


class TestConverge:
    def test_border_router_example(self):
        topo = Topology([TopologyRow("β1", "BR1", "CR1"), TopologyRow("β2", "BR1", "CR1"),
                         TopologyRow("β3", "BR2", "CR1")])
        r = converge(dist({"β1": 40, "β2": 38, "β3": 2}), topo, 0.05)
        assert 2 / 80 < 0.05
        assert (r.converged_node, r.level, r.supporting_bras) == ("BR1", Level.BORDER_ROUTER, ("β1", "β2"))
        assert r.confidence == pytest.approx(78 / 80)
        assert r.confidence == pytest.approx(0.975)

    def test_single_bras(self):
        r = converge(dist({"b1": 10}), TOPO)
        assert (r.converged_node, r.level, r.confidence) == ("b1", Level.BRAS, 1.0)

    def test_core_router(self):
        r = converge(dist({"b1": 30, "b2": 25, "b3": 31}), TOPO)
        assert (r.converged_node, r.level) == ("CR1", Level.CORE_ROUTER)

    def test_two_cores_unresolved(self):
        r = converge(dist({"b1": 20, "b3": 20, "b4": 20, "b5": 20}), TOPO)
        assert r.level is Level.UNRESOLVED
        assert r.converged_node == AutonomousDomain(("CR1", "CR2"))
        assert r.confidence == 1.0

    def test_empty_distribution(self):
        r = converge(dist({}), TOPO)
        assert r.level is Level.UNRESOLVED and r.converged_node is None

    def test_unknown_bras(self):
        with pytest.raises(UnknownBras):
            converge(dist({"zz": 3}), TOPO)

    def test_many_small_children_still_converge(self):
        rows = [TopologyRow(f"x{i}", "BRA", "CRA") for i in range(30)] + [TopologyRow("y", "BRB", "CRA")]
        r = converge(dist({f"x{i}": 10 for i in range(30)}), Topology(rows), 0.05)
        assert (r.converged_node, r.level) == ("BRA", Level.BORDER_ROUTER)
        assert len(r.supporting_bras) == 30


@settings(max_examples=150, deadline=None)
@given(st.dictionaries(st.sampled_from(["b1", "b2", "b3", "b4", "b5"]), st.integers(0, 200), min_size=1),
       st.floats(0, 0.5))
def test_candidate_sets_never_grow(counts, min_share):
    r = converge(dist(counts), TOPO, min_share)
    sizes = [len(step.candidates) for step in r.trace]
    assert sizes == sorted(sizes, reverse=True)
    assert 0 <= r.confidence <= 1


@settings(max_examples=150, deadline=None)
@given(st.sampled_from(["BR1", "BR3", "CR1", "CR2"]), st.data())
def test_ground_truth_recovery(tap, data):
    # children on distinct branches; for a core router that means distinct border routers
    level = TOPO.level_of(tap)
    children = TOPO.subtree_bras(tap)
    if level is Level.CORE_ROUTER:
        assume(len({TOPO.bras_to_br[b] for b in children}) >= 2)
    counts = {b: data.draw(st.integers(0, 200)) for b in children}
    total = sum(counts.values())
    heavy = [b for b, c in counts.items() if total and c >= 0.05 * total]
    branch = (lambda b: TOPO.bras_to_br[b]) if level is Level.CORE_ROUTER else (lambda b: b)
    assume(len({branch(b) for b in heavy}) >= 2)
    r = converge(dist(counts), TOPO, 0.05)
    assert r.converged_node == tap


def test_topology_invariants():
    with pytest.raises(TopologyError):
        Topology([TopologyRow("b1", "BR1", "CR1"), TopologyRow("b1", "BR2", "CR1")])
    with pytest.raises(TopologyError):
        Topology([TopologyRow("b1", "BR1", "CR1"), TopologyRow("b2", "BR1", "CR2")])
    with pytest.raises(TopologyError):
        Topology([TopologyRow("X", "BR1", "X")])


class TestRedirectShare:
    def test_ratio(self):
        o = [obs(status=s, tcp_seq=i) for i, s in enumerate([200, 200, 302, 200])]
        assert redirect_share_by_bras(o) == {"BRAS1": 0.25}

    def test_absent_without_responses(self):
        assert "BRAS9" not in redirect_share_by_bras([obs()])


class TestCorroborate:
    base = LocationResult("BR1", Level.BORDER_ROUTER, ("b1", "b2"), 0.8)
    shares = {"b1": 0.30, "b2": 0.28, "b3": 0.05, "b4": 0.04, "b5": 0.05, "b6": 0.06}

    def test_elevated_raises_confidence(self):
        r = corroborate(self.base, self.shares, 2.0)
        assert r.confidence == pytest.approx(min(1.0, 1.1 * 0.8))
        assert r.corroborated and r.converged_node == "BR1" and r.level is Level.BORDER_ROUTER

    def test_capped(self):
        r = corroborate(LocationResult("BR1", Level.BORDER_ROUTER, ("b1",), 0.97), self.shares, 2.0)
        assert r.confidence == 1.0

    def test_one_at_median_unchanged(self):
        shares = dict(self.shares, b2=0.05)
        assert corroborate(self.base, shares, 2.0) == self.base

    def test_empty_support_unchanged(self):
        r = LocationResult(None, Level.UNRESOLVED, (), 0.0)
        assert corroborate(r, self.shares) == r


def test_files(tmp_path):
    write_topology(tmp_path / "t.csv", TOPO)
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "bras_id,border_router_id,core_router_id"
    back = read_topology(tmp_path / "t.csv")
    assert back.bras_to_br == TOPO.bras_to_br and back.br_to_cr == TOPO.br_to_cr

    import json

    write_location(tmp_path / "l.json", converge(dist({"b1": 20, "b4": 20}), TOPO))
    doc = json.loads((tmp_path / "l.json").read_text())
    assert {"converged_node", "level", "supporting_bras", "confidence"} <= set(doc)
    assert doc["converged_node"] == {"autonomous_domain": ["CR1", "CR2"]}
