"""Labeled HTTP traffic with an optional bypass tap racing the real server.

Each session gets one legitimate response whose TTL reflects a stable
per-(site, BRAS) hop count plus bounded jitter. A tap at a border or core
router sees only the sessions routed through it and, for a chosen
fraction of them, injects a forged 302 or 200 response that copies the
TCP sequence number of the real answer and arrives first.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import InvalidScenario, UnknownNode
from .locator import Level, Topology, TopologyRow, write_topology
from .session_model import Label, ResponseObservation, SessionRecord, read_observations, read_sessions, write_jsonl

SENDER_INITIAL_TTL = 64
DEFAULT_ACCESS_OFFSET = 3
ATTACK_KINDS = ("Redirect302", "Ok200", "Mixed")

# legitimate server reply, microseconds after the request
LEGIT_LATENCY_US = (15_000, 80_000)
CAMOUFLAGE_LATENCY_US = (1_000, 10_000)


@dataclass
class SiteConfig:
    host: str
    server_ips: list[str]
    base_hops: dict[str, int]  # bras_id -> normal hop count

    def to_dict(self):
        return {"host": self.host, "server_ips": list(self.server_ips), "base_hops": dict(sorted(self.base_hops.items()))}

    @classmethod
    def from_dict(cls, d):
        return cls(d["host"], list(d["server_ips"]), {k: int(v) for k, v in d["base_hops"].items()})


@dataclass
class AttackConfig:
    tap_node: str
    kind: str = "Redirect302"
    rate: float = 0.05
    ttl_tamper: bool = False
    redirect_url: str = "http://promo.example.net/landing?ch=7731"
    # negative-testing knobs, off in every default scenario
    camouflage_loses_race: bool = False
    drop_legitimate: bool = False
    # (on_seconds, off_seconds) duty cycle; None attacks continuously
    burst: Optional[tuple[float, float]] = None

    def to_dict(self):
        d = dict(self.__dict__)
        d["burst"] = list(self.burst) if self.burst else None
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("burst") is not None:
            d["burst"] = tuple(float(x) for x in d["burst"])
        return cls(**d)


@dataclass
class ScenarioConfig:
    topology: list[TopologyRow]
    sites: list[SiteConfig]
    n_sessions: int
    attack: Optional[AttackConfig] = None
    hop_jitter: int = 1
    rng_seed: int = 0
    session_rate: float = 10.0  # sessions per second
    access_offset: int = DEFAULT_ACCESS_OFFSET
    legit_302_share: float = 0.04
    legit_301_share: float = 0.01
    clients_per_bras: int = 200

    def to_dict(self) -> dict:
        return {
            "topology": [r.__dict__ for r in self.topology],
            "sites": [s.to_dict() for s in self.sites],
            "n_sessions": self.n_sessions,
            "attack": self.attack.to_dict() if self.attack else None,
            "hop_jitter": self.hop_jitter,
            "rng_seed": self.rng_seed,
            "session_rate": self.session_rate,
            "access_offset": self.access_offset,
            "legit_302_share": self.legit_302_share,
            "legit_301_share": self.legit_301_share,
            "clients_per_bras": self.clients_per_bras,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        try:
            d = dict(d)
            d["topology"] = [TopologyRow(**r) for r in d["topology"]]
            d["sites"] = [SiteConfig.from_dict(s) for s in d["sites"]]
            if d.get("attack") is not None:
                d["attack"] = AttackConfig.from_dict(d["attack"])
            return cls(**d)
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidScenario(f"malformed scenario document: {exc}") from None

    def with_(self, **changes) -> "ScenarioConfig":
        d = dict(self.__dict__)
        d.update(changes)
        return ScenarioConfig(**d)


@dataclass
class LabeledDataset:
    sessions: list[SessionRecord]
    observations: list[ResponseObservation]
    manifest: dict = field(default_factory=dict)

    @property
    def topology(self) -> Topology:
        return Topology(TopologyRow(**r) for r in self.manifest["config"]["topology"])


def hop_distance(topology: Topology, bras_id: str, tap_node: str, access_offset: int = DEFAULT_ACCESS_OFFSET) -> int:
    """Hops between a client behind ``bras_id`` and a tap at ``tap_node``."""
    if bras_id not in topology.bras_to_br:
        raise UnknownNode(bras_id)
    if tap_node not in topology:
        raise UnknownNode(tap_node)
    level = topology.level_of(tap_node)
    if topology.ancestor(bras_id, level) != tap_node:
        raise ValueError(f"tap {tap_node} does not carry traffic of {bras_id}")
    return {Level.BRAS: 0, Level.BORDER_ROUTER: 1, Level.CORE_ROUTER: 2}[level] + access_offset


def validate(config: ScenarioConfig) -> Topology:
    try:
        topology = Topology(config.topology)
    except Exception as exc:
        raise InvalidScenario(f"bad topology: {exc}") from None
    if not topology.bras_ids:
        raise InvalidScenario("topology has no BRAS")
    if not config.sites:
        raise InvalidScenario("at least one site is required")
    if config.n_sessions < 0:
        raise InvalidScenario("n_sessions must be >= 0")
    if config.hop_jitter < 0:
        raise InvalidScenario("hop_jitter must be >= 0")
    if config.session_rate <= 0:
        raise InvalidScenario("session_rate must be positive")
    if not 1 <= config.clients_per_bras <= 65534:
        raise InvalidScenario("clients_per_bras must lie in 1..65534")
    if config.legit_302_share < 0 or config.legit_301_share < 0 or config.legit_302_share + config.legit_301_share > 1:
        raise InvalidScenario("legitimate redirect shares must be non-negative and sum to <= 1")
    for site in config.sites:
        if not site.server_ips:
            raise InvalidScenario(f"site {site.host} has no server IP")
        missing = set(topology.bras_ids) - set(site.base_hops)
        if missing:
            raise InvalidScenario(f"site {site.host} lacks base_hops for {sorted(missing)}")
        for b, h in site.base_hops.items():
            if h - config.hop_jitter < 0 or h + config.hop_jitter > SENDER_INITIAL_TTL - 1:
                raise InvalidScenario(f"site {site.host} base_hops {h} at {b} leaves the TTL range with jitter")
    atk = config.attack
    if atk is not None:
        if not 0.0 <= atk.rate <= 1.0:
            raise InvalidScenario(f"attack rate must lie in [0, 1], got {atk.rate}")
        if atk.kind not in ATTACK_KINDS:
            raise InvalidScenario(f"attack kind must be one of {ATTACK_KINDS}")
        if atk.tap_node not in topology:
            raise InvalidScenario(f"tap node {atk.tap_node} not in topology")
        if topology.level_of(atk.tap_node) is Level.BRAS:
            raise InvalidScenario("taps below or at the BRAS are not modeled")
        if atk.burst is not None and (len(atk.burst) != 2 or atk.burst[0] <= 0 or atk.burst[1] < 0):
            raise InvalidScenario("burst must be (on_seconds > 0, off_seconds >= 0)")
        for b in topology.subtree_bras(atk.tap_node):
            camo = hop_distance(topology, b, atk.tap_node, config.access_offset)
            for site in config.sites:
                if site.base_hops[b] - config.hop_jitter <= camo:
                    raise InvalidScenario(
                        f"site {site.host} at {b}: legitimate hops may fall to {site.base_hops[b] - config.hop_jitter}, "
                        f"not above the tap distance {camo}"
                    )
    return topology


def _client_ip(bras_index: int, host_index: int) -> str:
    return f"10.{bras_index % 256}.{host_index // 256}.{host_index % 256}"


def _attack_active(atk: AttackConfig, t_us: int) -> bool:
    if atk.burst is None:
        return True
    on, off = atk.burst
    return (t_us / 1e6) % (on + off) < on


def generate(config: ScenarioConfig) -> LabeledDataset:
    topology = validate(config)
    rng = random.Random(config.rng_seed)
    bras_ids = topology.bras_ids
    atk = config.attack
    tapped = set(topology.subtree_bras(atk.tap_node)) if atk else set()

    sessions = []
    t = 0.0
    for i in range(config.n_sessions):
        t += rng.expovariate(config.session_rate)
        request_time = int(t * 1e6)
        sid = f"s{i:07d}"
        bi = rng.randrange(len(bras_ids))
        bras = bras_ids[bi]
        client = _client_ip(bi, 1 + rng.randrange(config.clients_per_bras))
        site = config.sites[rng.randrange(len(config.sites))]
        server_ip = site.server_ips[rng.randrange(len(site.server_ips))]

        legit_hops = site.base_hops[bras] + rng.randint(-config.hop_jitter, config.hop_jitter)
        legit_ttl = SENDER_INITIAL_TTL - legit_hops
        seq = rng.getrandbits(32)
        u = rng.random()
        if u < config.legit_302_share:
            status, location = 302, f"http://{site.host}/r/{i}"
        elif u < config.legit_302_share + config.legit_301_share:
            status, location = 301, f"https://{site.host}/"
        else:
            status, location = 200, None
        legit_latency = rng.randint(*LEGIT_LATENCY_US)
        legit = ResponseObservation(
            session_id=sid,
            server_ip=server_ip,
            client_ip=client,
            bras_id=bras,
            ttl=legit_ttl,
            tcp_seq=seq,
            http_status=status,
            redirect_location=location,
            timestamp=request_time + legit_latency,
            host=site.host,
        )

        hijack_draw = rng.random()
        hijacked = atk is not None and bras in tapped and _attack_active(atk, request_time) and hijack_draw < atk.rate
        if not hijacked:
            sessions.append(SessionRecord(sid, request_time, (legit,), Label.NORMAL))
            continue

        kind = atk.kind
        if kind == "Mixed":
            kind = "Redirect302" if rng.random() < 0.5 else "Ok200"
        if atk.camouflage_loses_race:
            camo_latency = legit_latency + rng.randint(*CAMOUFLAGE_LATENCY_US)
        else:
            camo_latency = rng.randint(CAMOUFLAGE_LATENCY_US[0], min(CAMOUFLAGE_LATENCY_US[1], legit_latency - 1))
        camo_hops = hop_distance(topology, bras, atk.tap_node, config.access_offset)
        camo = ResponseObservation(
            session_id=sid,
            server_ip=server_ip,
            client_ip=client,
            bras_id=bras,
            ttl=legit_ttl if atk.ttl_tamper else SENDER_INITIAL_TTL - camo_hops,
            tcp_seq=seq,
            http_status=302 if kind == "Redirect302" else 200,
            redirect_location=atk.redirect_url if kind == "Redirect302" else None,
            timestamp=request_time + camo_latency,
            host=site.host,
        )
        responses = [camo] if atk.drop_legitimate else sorted([camo, legit], key=lambda r: r.timestamp)
        label = Label.HIJACKED_302 if kind == "Redirect302" else Label.HIJACKED_200
        sessions.append(SessionRecord(sid, request_time, tuple(responses), label))

    observations = sorted((r for s in sessions for r in s.responses), key=lambda r: (r.timestamp, r.session_id))
    labels = {lab.value: 0 for lab in Label}
    for s in sessions:
        labels[s.label.value] += 1
    manifest = {
        "config": config.to_dict(),
        "counts": {
            "sessions": len(sessions),
            "observations": len(observations),
            "labels": labels,
            "sessions_under_tap": sum(1 for s in sessions if s.bras_id in tapped),
        },
    }
    return LabeledDataset(sessions, observations, manifest)


# -- scenario directory --------------------------------------------------------


def write_dataset(dataset: LabeledDataset, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(out / "sessions.jsonl", dataset.sessions)
    write_jsonl(out / "observations.jsonl", dataset.observations)
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(dataset.manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_topology(out / "topology.csv", dataset.topology)
    return out


def read_dataset(scenario_dir) -> LabeledDataset:
    d = Path(scenario_dir)
    with open(d / "manifest.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    return LabeledDataset(read_sessions(d / "sessions.jsonl"), read_observations(d / "observations.jsonl"), manifest)


def load_scenario(path) -> ScenarioConfig:
    """Scenario from a JSON file, or a built-in one named ``@default``, ``@s1``, ``@clean``."""
    name = str(path)
    if name.startswith("@"):
        try:
            return BUILTIN_SCENARIOS[name[1:]]()
        except KeyError:
            raise InvalidScenario(f"unknown built-in scenario {name}; choose from {sorted(BUILTIN_SCENARIOS)}") from None
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidScenario(f"{path}: invalid JSON ({exc.msg})") from None
    return ScenarioConfig.from_dict(doc)


def save_scenario(config: ScenarioConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2)
        fh.write("\n")


# -- built-in scenarios ----------------------------------------------------------


def tree_topology(layout: dict[str, dict[str, int]]) -> list[TopologyRow]:
    """Rows for ``{core: {border: n_bras}}``; BRAS are numbered globally from 1."""
    rows, n = [], 0
    for cr, brs in layout.items():
        for br, count in brs.items():
            for _ in range(count):
                n += 1
                rows.append(TopologyRow(f"BRAS{n}", br, cr))
    return rows


def make_sites(topology_rows, n_sites=8, seed=7, hop_range=(9, 20)) -> list[SiteConfig]:
    """Target sites with stable per-BRAS hop counts drawn once from ``seed``."""
    rng = random.Random(seed)
    bras_ids = sorted({r.bras_id for r in topology_rows})
    sites = []
    for k in range(n_sites):
        n_ips = 1 + rng.randrange(3)
        ips = [f"203.0.{113 + k}.{10 + j}" for j in range(n_ips)]
        base = rng.randint(*hop_range)
        hops = {b: min(hop_range[1], max(hop_range[0], base + rng.randint(-2, 2))) for b in bras_ids}
        sites.append(SiteConfig(f"www.site{k + 1}.example.com", ips, hops))
    return sites


def default_topology() -> list[TopologyRow]:
    return tree_topology({"CR1": {"BR1": 3, "BR2": 3}, "CR2": {"BR3": 3, "BR4": 3}})


def default_scenario(rng_seed: int = 20170101) -> ScenarioConfig:
    """Five minutes at 10 sessions/s, mixed 302/200 camouflage from a tap at BR1."""
    topo = default_topology()
    return ScenarioConfig(
        topology=topo,
        sites=make_sites(topo),
        n_sessions=3000,
        attack=AttackConfig(tap_node="BR1", kind="Mixed", rate=0.05),
        hop_jitter=1,
        rng_seed=rng_seed,
        session_rate=10.0,
    )


def scenario_s1(rng_seed: int = 1) -> ScenarioConfig:
    """302-redirect tap at BR1, heavy enough to stand out per BRAS."""
    topo = tree_topology({"CR1": {"BR1": 3, "BR2": 2}, "CR2": {"BR3": 3}})
    return ScenarioConfig(
        topology=topo,
        sites=make_sites(topo),
        n_sessions=6000,
        attack=AttackConfig(tap_node="BR1", kind="Redirect302", rate=0.10),
        hop_jitter=1,
        rng_seed=rng_seed,
    )


def clean_scenario(rng_seed: int = 3) -> ScenarioConfig:
    topo = default_topology()
    return ScenarioConfig(topology=topo, sites=make_sites(topo), n_sessions=2000, attack=None, rng_seed=rng_seed)


BUILTIN_SCENARIOS = {"default": default_scenario, "s1": scenario_s1, "clean": clean_scenario}


def random_topology(rng: random.Random, n_bras=(8, 32), n_br=(2, 6), n_cr=(1, 2)) -> list[TopologyRow]:
    """Random tree; every core router gets a border router and every border router a BRAS."""
    cr_count = rng.randint(*n_cr)
    br_count = max(cr_count, rng.randint(*n_br))
    bras_count = max(br_count, rng.randint(*n_bras))
    crs = [f"CR{i + 1}" for i in range(cr_count)]
    br_parent = crs + [rng.choice(crs) for _ in range(br_count - cr_count)]
    rng.shuffle(br_parent)
    brs = [f"BR{i + 1}" for i in range(br_count)]
    bras_parent = brs + [rng.choice(brs) for _ in range(bras_count - br_count)]
    rng.shuffle(bras_parent)
    br_to_cr = dict(zip(brs, br_parent))
    return [TopologyRow(f"BRAS{i + 1}", br, br_to_cr[br]) for i, br in enumerate(bras_parent)]
