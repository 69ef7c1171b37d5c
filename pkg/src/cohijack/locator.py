"""Trace a bypass tap by lifting per-BRAS hijack counts up the BRAS -> BR -> CR tree.

At each level the hijack records are re-tallied per node and nodes below
``min_share`` of all records are dropped as noise. The walk stops at the
first level where a single node remains; that router (or BRAS) is the
converged attack point. If even the core level is ambiguous the result
is an autonomous domain spanning the involved core routers.
"""

from __future__ import annotations

import csv
import json
import statistics
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence, Union

from .errors import SchemaError, TopologyError, UnknownBras, UnknownNode

TOPOLOGY_CSV_HEADER = ["bras_id", "border_router_id", "core_router_id"]
DEFAULT_MIN_SHARE = 0.05
DEFAULT_Z_THRESHOLD = 2.0
CORROBORATION_FACTOR = 1.1
MAD_SCALE = 1.4826  # makes the MAD a consistent estimator of sigma for normal data


@dataclass(frozen=True)
class TopologyRow:
    bras_id: str
    border_router_id: str
    core_router_id: str


class Topology:
    """Validated three-level tree built from Table-3 style rows."""

    def __init__(self, rows: Iterable[TopologyRow]):
        self.rows = tuple(rows)
        self.bras_to_br: dict[str, str] = {}
        self.br_to_cr: dict[str, str] = {}
        for r in self.rows:
            prev = self.bras_to_br.setdefault(r.bras_id, r.border_router_id)
            if prev != r.border_router_id:
                raise TopologyError(f"BRAS {r.bras_id} attached to both {prev} and {r.border_router_id}")
            prev = self.br_to_cr.setdefault(r.border_router_id, r.core_router_id)
            if prev != r.core_router_id:
                raise TopologyError(f"border router {r.border_router_id} attached to both {prev} and {r.core_router_id}")
        self.core_routers = sorted(set(self.br_to_cr.values()))
        clash = (set(self.bras_to_br) & set(self.br_to_cr)) | (
            (set(self.bras_to_br) | set(self.br_to_cr)) & set(self.core_routers)
        )
        if clash:
            raise TopologyError(f"node ids reused across levels: {sorted(clash)}")

    @property
    def bras_ids(self) -> list[str]:
        return sorted(self.bras_to_br)

    @property
    def border_routers(self) -> list[str]:
        return sorted(self.br_to_cr)

    def __contains__(self, node):
        return node in self.bras_to_br or node in self.br_to_cr or node in self.core_routers

    def level_of(self, node: str) -> "Level":
        if node in self.bras_to_br:
            return Level.BRAS
        if node in self.br_to_cr:
            return Level.BORDER_ROUTER
        if node in self.core_routers:
            return Level.CORE_ROUTER
        raise UnknownNode(node)

    def ancestor(self, bras_id: str, level: "Level") -> str:
        if bras_id not in self.bras_to_br:
            raise UnknownBras(bras_id)
        if level is Level.BRAS:
            return bras_id
        br = self.bras_to_br[bras_id]
        if level is Level.BORDER_ROUTER:
            return br
        if level is Level.CORE_ROUTER:
            return self.br_to_cr[br]
        raise ValueError(level)

    def subtree_bras(self, node: str) -> list[str]:
        level = self.level_of(node)
        return [b for b in self.bras_ids if self.ancestor(b, level) == node]


class Level(str, Enum):
    BRAS = "BRAS"
    BORDER_ROUTER = "BorderRouter"
    CORE_ROUTER = "CoreRouter"
    UNRESOLVED = "Unresolved"


LIFT_ORDER = (Level.BRAS, Level.BORDER_ROUTER, Level.CORE_ROUTER)


@dataclass(frozen=True)
class AutonomousDomain:
    core_routers: tuple[str, ...]

    def __str__(self):
        return "AS{" + ",".join(self.core_routers) + "}"


@dataclass(frozen=True)
class AttackDistribution:
    counts: Mapping[str, int]
    total: int

    def share(self, bras_id: str) -> float:
        return self.counts.get(bras_id, 0) / self.total if self.total else 0.0


@dataclass(frozen=True)
class LevelStep:
    level: Level
    candidates: tuple[str, ...]  # nodes carrying at least one record
    active: tuple[str, ...]  # candidates above the noise floor


@dataclass(frozen=True)
class LocationResult:
    converged_node: Optional[Union[str, AutonomousDomain]]
    level: Level
    supporting_bras: tuple[str, ...]
    confidence: float
    corroborated: bool = False
    trace: tuple[LevelStep, ...] = field(default=(), compare=False)

    def __post_init__(self):
        is_router = isinstance(self.converged_node, str)
        if (self.level is Level.UNRESOLVED) == is_router:
            raise ValueError("level is Unresolved exactly when no single node converged")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence out of range: {self.confidence}")

    def to_dict(self) -> dict:
        node = self.converged_node
        if isinstance(node, AutonomousDomain):
            node = {"autonomous_domain": list(node.core_routers)}
        return {
            "converged_node": node,
            "level": self.level.value,
            "supporting_bras": list(self.supporting_bras),
            "confidence": self.confidence,
            "corroborated": self.corroborated,
        }


def attack_distribution(records) -> AttackDistribution:
    counts = Counter(r.bras_id for r in records)
    return AttackDistribution(counts=dict(sorted(counts.items())), total=sum(counts.values()))


def _supporting(dist: AttackDistribution, bras_ids: Sequence[str], min_share: float) -> tuple[str, ...]:
    # relative to the busiest domain so large subtrees are not all filtered out
    carrying = {b: dist.counts.get(b, 0) for b in bras_ids if dist.counts.get(b, 0) > 0}
    if not carrying:
        return ()
    floor = min_share * max(carrying.values())
    return tuple(sorted(b for b, c in carrying.items() if c >= floor))


def converge(
    dist: AttackDistribution, topology: Topology, min_share: float = DEFAULT_MIN_SHARE
) -> LocationResult:
    if not isinstance(topology, Topology):
        topology = Topology(topology)
    if not 0.0 <= min_share <= 1.0:
        raise ValueError("min_share must lie in [0, 1]")
    unknown = sorted(b for b in dist.counts if b not in topology.bras_to_br)
    if unknown:
        raise UnknownBras(f"no topology row for BRAS {', '.join(unknown)}")
    if dist.total == 0:
        return LocationResult(None, Level.UNRESOLVED, (), 0.0)

    floor = min_share * dist.total
    trace = []
    for level in LIFT_ORDER:
        lifted = Counter()
        for b, c in dist.counts.items():
            if c:
                lifted[topology.ancestor(b, level)] += c
        active = sorted(n for n, c in lifted.items() if c >= floor)
        trace.append(LevelStep(level, tuple(sorted(lifted)), tuple(active)))
        if len(active) == 1:
            node = active[0]
            return LocationResult(
                converged_node=node,
                level=level,
                supporting_bras=_supporting(dist, topology.subtree_bras(node), min_share),
                confidence=lifted[node] / dist.total,
                trace=tuple(trace),
            )

    core_counts = Counter()
    for b, c in dist.counts.items():
        core_counts[topology.ancestor(b, Level.CORE_ROUTER)] += c
    involved = trace[-1].active or trace[-1].candidates
    bras = [b for cr in involved for b in topology.subtree_bras(cr)]
    return LocationResult(
        converged_node=AutonomousDomain(tuple(involved)),
        level=Level.UNRESOLVED,
        supporting_bras=_supporting(dist, sorted(bras), min_share),
        confidence=sum(core_counts[cr] for cr in involved) / dist.total,
        trace=tuple(trace),
    )


def redirect_share_by_bras(observations) -> dict[str, float]:
    """Fraction of 302 responses among all responses seen in each BRAS domain."""
    seen = Counter()
    redirects = Counter()
    for o in observations:
        seen[o.bras_id] += 1
        if o.http_status == 302:
            redirects[o.bras_id] += 1
    return {b: redirects[b] / seen[b] for b in sorted(seen)}


def corroborate(
    result: LocationResult, shares: Mapping[str, float], z_threshold: float = DEFAULT_Z_THRESHOLD
) -> LocationResult:
    """Raise confidence when every supporting BRAS shows an outlying 302 share.

    Outlying means above the median of all shares by more than
    ``z_threshold`` scaled median absolute deviations.
    """
    if not result.supporting_bras or not shares:
        return result
    values = list(shares.values())
    med = statistics.median(values)
    mad = MAD_SCALE * statistics.median(abs(v - med) for v in values)
    cut = med + z_threshold * mad
    if all(b in shares and shares[b] > cut for b in result.supporting_bras):
        return replace(
            result,
            confidence=min(1.0, CORROBORATION_FACTOR * result.confidence),
            corroborated=True,
        )
    return result


# -- files -------------------------------------------------------------------


def read_topology(path) -> Topology:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TOPOLOGY_CSV_HEADER:
            raise SchemaError(f"{path}:1: expected header {','.join(TOPOLOGY_CSV_HEADER)}")
        for row in reader:
            if not all(row.get(k) for k in TOPOLOGY_CSV_HEADER):
                raise SchemaError(f"{path}:{reader.line_num}: empty topology field")
            rows.append(TopologyRow(row["bras_id"], row["border_router_id"], row["core_router_id"]))
    return Topology(rows)


def write_topology(path, topology: Topology) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TOPOLOGY_CSV_HEADER)
        for r in sorted(topology.rows, key=lambda r: r.bras_id):
            writer.writerow([r.bras_id, r.border_router_id, r.core_router_id])


def write_location(path, result: LocationResult) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(result.to_dict(), fh, indent=2)
        fh.write("\n")
