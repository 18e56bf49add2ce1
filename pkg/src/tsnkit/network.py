"""Network graph, flows, routes and preemption configurations."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path as FsPath
from typing import Iterable, Mapping, Sequence

MIN_PAYLOAD = 42
MAX_PAYLOAD = 1500
NUM_PRIORITIES = 8

LinkId = tuple[str, str]


class ModelError(ValueError):
    """Raised when a network, flow or configuration is malformed."""


class NoRoute(ModelError):
    pass


class ConfigStructureError(ModelError):
    """The configuration does not even have the right shape for the flowset."""


class NodeKind(str, Enum):
    END_POINT = "EndPoint"
    SWITCH = "Switch"


@dataclass(frozen=True)
class Node:
    id: str
    kind: NodeKind


@dataclass(frozen=True)
class Link:
    src: str
    dst: str
    rate: Fraction  # bits per microsecond == Mbit/s

    @property
    def id(self) -> LinkId:
        return (self.src, self.dst)


@dataclass(frozen=True)
class Network:
    nodes: Mapping[str, Node]
    links: Mapping[LinkId, Link]

    @classmethod
    def build(cls, nodes: Iterable[Node], links: Iterable[Link]) -> "Network":
        """Build a network, adding the reverse direction of any one-way link."""
        node_map: dict[str, Node] = {}
        for n in nodes:
            if n.id in node_map:
                raise ModelError(f"duplicate node id {n.id!r}")
            node_map[n.id] = n
        link_map: dict[LinkId, Link] = {}
        for l in links:
            if l.src not in node_map or l.dst not in node_map:
                raise ModelError(f"link {l.src}->{l.dst} names an unknown node")
            if l.src == l.dst:
                raise ModelError(f"self-loop on {l.src!r}")
            if l.rate <= 0:
                raise ModelError(f"link {l.src}->{l.dst} has non-positive rate")
            for d in (l, Link(l.dst, l.src, l.rate)):
                old = link_map.get(d.id)
                if old is not None and old.rate != d.rate:
                    raise ModelError(f"link {d.src}<->{d.dst} is not symmetric")
                link_map[d.id] = d
        net = cls(node_map, link_map)
        for n in node_map.values():
            if n.kind is NodeKind.END_POINT and len(net.neighbors(n.id)) != 1:
                raise ModelError(f"end-point {n.id!r} must have exactly one link")
        return net

    def neighbors(self, node_id: str) -> list[str]:
        return sorted(dst for (src, dst) in self.links if src == node_id)

    @property
    def end_points(self) -> list[str]:
        return sorted(n.id for n in self.nodes.values() if n.kind is NodeKind.END_POINT)

    def rate(self, link: LinkId) -> Fraction:
        return self.links[link].rate

    def is_switch(self, node_id: str) -> bool:
        return self.nodes[node_id].kind is NodeKind.SWITCH


@dataclass(frozen=True)
class Flow:
    id: str
    src: str
    dst: str
    period: Fraction
    deadline: Fraction
    size: int
    priority: int | None = None
    preemption_class: int | None = None

    def __post_init__(self) -> None:
        if self.period <= 0 or self.deadline <= 0:
            raise ModelError(f"flow {self.id!r}: period and deadline must be positive")
        if not MIN_PAYLOAD <= self.size <= MAX_PAYLOAD:
            raise ModelError(
                f"flow {self.id!r}: size {self.size} outside [{MIN_PAYLOAD}, {MAX_PAYLOAD}]"
            )
        if self.priority is not None and not 0 <= self.priority < NUM_PRIORITIES:
            raise ModelError(f"flow {self.id!r}: priority {self.priority} outside 0..7")
        if self.src == self.dst:
            raise ModelError(f"flow {self.id!r}: src == dst")

    def with_priority(self, priority: int) -> "Flow":
        return Flow(self.id, self.src, self.dst, self.period, self.deadline,
                    self.size, priority, None)


@dataclass(frozen=True)
class Path:
    links: tuple[LinkId, ...]

    def __post_init__(self) -> None:
        for a, b in zip(self.links, self.links[1:]):
            if a[1] != b[0]:
                raise ModelError(f"path links {a} and {b} do not chain")
        nodes = self.nodes
        if len(set(nodes)) != len(nodes):
            raise ModelError("path repeats a node")

    @property
    def nodes(self) -> tuple[str, ...]:
        if not self.links:
            return ()
        return (self.links[0][0],) + tuple(l[1] for l in self.links)

    def __len__(self) -> int:
        return len(self.links)

    def __iter__(self):
        return iter(self.links)


class FlowClassKind(str, Enum):
    EXPRESS = "express"
    TP = "tp"
    BP = "bp"


def class_kind(preemption_class: int, level: int) -> FlowClassKind:
    if level == 0 or preemption_class == 0:
        return FlowClassKind.EXPRESS
    if preemption_class == level:
        return FlowClassKind.BP
    return FlowClassKind.TP


@dataclass(frozen=True)
class PreemptionConfig:
    """Maps each priority rank (0 = highest priority present) to a preemption class."""

    level: int
    entries: tuple[int, ...]

    @classmethod
    def of(cls, entries: Sequence[int], level: int | None = None) -> "PreemptionConfig":
        entries = tuple(int(e) for e in entries)
        if level is None:
            level = max(entries, default=0)
        return cls(level, entries)

    @classmethod
    def non_preemptive(cls, p: int) -> "PreemptionConfig":
        return cls(0, (0,) * p)

    @classmethod
    def fully_preemptive(cls, p: int) -> "PreemptionConfig":
        return cls(max(p - 1, 0), tuple(range(p)))


@dataclass(frozen=True)
class RuleViolation:
    rule: str
    indices: tuple
    message: str


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple[RuleViolation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def distinct_priorities(flows: Iterable[Flow]) -> list[int]:
    prios = set()
    for f in flows:
        if f.priority is None:
            raise ModelError(f"flow {f.id!r} has no priority")
        prios.add(f.priority)
    return sorted(prios)


def priority_ranks(flows: Iterable[Flow]) -> dict[int, int]:
    return {p: r for r, p in enumerate(distinct_priorities(flows))}


def validate_config(flows: Sequence[Flow], config: PreemptionConfig) -> ValidationResult:
    """Check rules R1 (one class per priority), R2 (monotone) and R3 (surjective)."""
    ranks = priority_ranks(flows)
    entries = config.entries
    if len(entries) != len(ranks):
        raise ConfigStructureError(
            f"config has {len(entries)} entries but the flowset has {len(ranks)} priorities"
        )
    violations = []

    r1 = tuple(sorted(
        f.id for f in flows
        if f.preemption_class is not None and f.preemption_class != entries[ranks[f.priority]]
    ))
    if r1:
        violations.append(RuleViolation("R1", r1, "flows carry a class that disagrees with their priority's class"))

    r2 = tuple(k for k in range(len(entries) - 1) if entries[k] > entries[k + 1])
    if r2:
        violations.append(RuleViolation("R2", r2, "lower priority mapped to a higher preemption class"))

    missing = tuple(c for c in range(config.level + 1) if c not in entries)
    out_of_range = tuple(k for k, c in enumerate(entries) if not 0 <= c <= config.level)
    if missing or out_of_range:
        violations.append(RuleViolation(
            "R3", missing + out_of_range,
            f"classes {list(missing)} unused; entries {list(out_of_range)} outside 0..{config.level}",
        ))
    return ValidationResult(tuple(violations))


def flow_classes(flows: Sequence[Flow], config: PreemptionConfig) -> dict[str, int]:
    ranks = priority_ranks(flows)
    return {f.id: config.entries[ranks[f.priority]] for f in flows}


def config_from_flow_classes(flows: Sequence[Flow]) -> PreemptionConfig:
    """Recover the configuration implied by explicit per-flow classes."""
    ranks = priority_ranks(flows)
    entries: list[int | None] = [None] * len(ranks)
    for f in flows:
        if f.preemption_class is None:
            raise ModelError(f"flow {f.id!r} has no preemption class")
        r = ranks[f.priority]
        if entries[r] not in (None, f.preemption_class):
            raise ModelError(f"priority {f.priority} maps to two classes (R1)")
        entries[r] = f.preemption_class
    return PreemptionConfig.of(entries)


def shortest_path(network: Network, src: str, dst: str) -> Path:
    """Minimum-hop path; ties go to the lexicographically smallest node sequence."""
    for n in (src, dst):
        if n not in network.nodes or network.is_switch(n):
            raise ModelError(f"{n!r} is not an end-point of the network")
    if src == dst:
        raise ModelError("src == dst")
    # distances to dst, then walk greedily from src
    dist = {dst: 0}
    todo = deque([dst])
    while todo:
        u = todo.popleft()
        for v in network.neighbors(u):
            if v not in dist:
                dist[v] = dist[u] + 1
                todo.append(v)
    if src not in dist:
        raise NoRoute(f"no route from {src!r} to {dst!r}")
    links = []
    u = src
    while u != dst:
        v = min(v for v in network.neighbors(u) if dist.get(v) == dist[u] - 1)
        links.append((u, v))
        u = v
    return Path(tuple(links))


def route_all(network: Network, flows: Iterable[Flow]) -> dict[str, Path]:
    return {f.id: shortest_path(network, f.src, f.dst) for f in flows}


def egress_port_flowsets(
    network: Network, flows: Iterable[Flow], routes: Mapping[str, Path]
) -> dict[LinkId, list[Flow]]:
    ports: dict[LinkId, list[Flow]] = {}
    for f in flows:
        if f.id not in routes:
            raise ModelError(f"flow {f.id!r} has no route")
        for link in routes[f.id]:
            if link not in network.links:
                raise ModelError(f"route of {f.id!r} uses unknown link {link}")
            ports.setdefault(link, []).append(f)
    return ports


# --- JSON ------------------------------------------------------------------

def _fraction(value) -> Fraction:
    if isinstance(value, bool):
        raise ValueError("expected a number")
    if isinstance(value, float):
        return Fraction(str(value))
    return Fraction(value)


def network_from_dict(data: Mapping) -> Network:
    try:
        nodes = [Node(str(n["id"]), NodeKind(n["kind"])) for n in data["nodes"]]
        links = [Link(str(l["from"]), str(l["to"]), _fraction(l["rate_mbps"])) for l in data["links"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"bad network description: {exc}") from exc
    return Network.build(nodes, links)


def network_to_dict(network: Network) -> dict:
    links, seen = [], set()
    for (a, b), l in sorted(network.links.items()):
        if (b, a) in seen:
            continue
        seen.add((a, b))
        links.append({"from": a, "to": b, "rate_mbps": _number(l.rate)})
    return {
        "nodes": [{"id": n.id, "kind": n.kind.value} for n in sorted(network.nodes.values(), key=lambda n: n.id)],
        "links": links,
    }


def flows_from_list(data: Sequence[Mapping]) -> list[Flow]:
    flows = []
    try:
        for d in data:
            flows.append(Flow(
                id=str(d["id"]), src=str(d["src"]), dst=str(d["dst"]),
                period=_fraction(d["period_us"]), deadline=_fraction(d["deadline_us"]),
                size=int(d["size_bytes"]),
                priority=None if d.get("priority") is None else int(d["priority"]),
                preemption_class=None if d.get("class") is None else int(d["class"]),
            ))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"bad flow description: {exc}") from exc
    if len({f.id for f in flows}) != len(flows):
        raise ModelError("duplicate flow ids")
    return flows


def flows_to_list(flows: Iterable[Flow]) -> list[dict]:
    out = []
    for f in flows:
        d = {"id": f.id, "src": f.src, "dst": f.dst, "period_us": _number(f.period),
             "deadline_us": _number(f.deadline), "size_bytes": f.size}
        if f.priority is not None:
            d["priority"] = f.priority
        if f.preemption_class is not None:
            d["class"] = f.preemption_class
        out.append(d)
    return out


def _number(x: Fraction):
    # non-integers are written as "num/den" strings so they round-trip exactly
    return int(x) if x.denominator == 1 else str(x)


def load_network(path: str | FsPath) -> Network:
    return network_from_dict(json.loads(FsPath(path).read_text()))


def load_flows(path: str | FsPath) -> list[Flow]:
    """Read a flow file: a plain list, or a report object with a ``flows`` key."""
    data = json.loads(FsPath(path).read_text())
    if isinstance(data, Mapping):
        data = data.get("flows", [])
    return flows_from_list(data)
