"""Attack-graph data model.

Nodes are vulnerabilities, edges are exploits between them. Each device owns a
DAG of nodes; a :class:`SystemGraph` is the union of all device graphs plus the
edges that connect devices to one another (which may close cycles).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator


class NodeKind(str, Enum):
    ENTRY = "entry"
    INTERMEDIATE = "intermediate"
    EXPLOIT_GOAL = "exploit_goal"


class AttackVector(str, Enum):
    NETWORK = "network"
    ADJACENT = "adjacent"
    LOCAL = "local"
    PHYSICAL = "physical"


class AttackComplexity(str, Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"


class PrivilegesRequired(str, Enum):
    NONE = "none"
    LOW = "low"
    HIGH = "high"


class UserInteraction(str, Enum):
    NONE = "none"
    REQUIRED = "required"


class Scope(str, Enum):
    UNCHANGED = "unchanged"
    CHANGED = "changed"


@dataclass(frozen=True)
class Exploitability:
    attack_vector: AttackVector = AttackVector.NETWORK
    attack_complexity: AttackComplexity = AttackComplexity.LOW
    privileges_required: PrivilegesRequired = PrivilegesRequired.NONE
    user_interaction: UserInteraction = UserInteraction.NONE
    scope: Scope = Scope.UNCHANGED

    @classmethod
    def from_dict(cls, data: dict) -> "Exploitability":
        return cls(
            attack_vector=AttackVector(data.get("attack_vector", "network")),
            attack_complexity=AttackComplexity(data.get("attack_complexity", "low")),
            privileges_required=PrivilegesRequired(data.get("privileges_required", "none")),
            user_interaction=UserInteraction(data.get("user_interaction", "none")),
            scope=Scope(data.get("scope", "unchanged")),
        )

    def to_dict(self) -> dict:
        return {
            "attack_vector": self.attack_vector.value,
            "attack_complexity": self.attack_complexity.value,
            "privileges_required": self.privileges_required.value,
            "user_interaction": self.user_interaction.value,
            "scope": self.scope.value,
        }


@dataclass(frozen=True)
class Impact:
    confidentiality: float = 0.0
    integrity: float = 0.0
    availability: float = 0.0

    def to_dict(self) -> dict:
        return {
            "confidentiality": self.confidentiality,
            "integrity": self.integrity,
            "availability": self.availability,
        }

    def is_zero(self) -> bool:
        return self.confidentiality == 0 and self.integrity == 0 and self.availability == 0


def make_node_id(device_id: str, permission: str | None, slug: str) -> str:
    return f"{device_id}/{permission or '-'}/{slug}"


@dataclass
class VulnNode:
    id: str
    label: str
    kind: NodeKind
    device_id: str
    slug: str
    permission: str | None = None
    exploitability: Exploitability = field(default_factory=Exploitability)
    impact: Impact = field(default_factory=Impact)
    accessibility: float = 0.0
    node_defense_score: float = 1.0
    vulnerability_score: float = 0.0
    exploit_score: float = 0.0
    exp_avg: float = 0.0
    # template default for attack_vector before position rules ran
    vector_hint: AttackVector | None = None

    @property
    def is_entry(self) -> bool:
        return self.kind is NodeKind.ENTRY

    @property
    def is_goal(self) -> bool:
        return self.kind is NodeKind.EXPLOIT_GOAL


@dataclass
class ExploitEdge:
    source: str
    target: str
    edge_defense_score: float = 1.0
    predicted: bool = False

    def __post_init__(self) -> None:
        if self.source == self.target:
            raise ValueError(f"self-loop on {self.source!r}")

    @property
    def key(self) -> tuple[str, str]:
        return (self.source, self.target)


@dataclass
class DeviceGraph:
    device_id: str
    name: str
    category: str
    subcategories: dict[str, str]
    device_set: str | None = None
    nodes: dict[str, VulnNode] = field(default_factory=dict)
    edges: list[ExploitEdge] = field(default_factory=list)

    def add_node(self, node: VulnNode) -> None:
        if node.id in self.nodes:
            raise ValueError(f"duplicate node id {node.id!r}")
        self.nodes[node.id] = node

    def add_edge(self, source: str, target: str, **kw) -> ExploitEdge:
        edge = ExploitEdge(source, target, **kw)
        self.edges.append(edge)
        return edge


@dataclass(frozen=True)
class Violation:
    kind: str  # "cycle" | "dangling-edge" | "unreachable-goal" | "self-loop"
    detail: str
    nodes: tuple[str, ...] = ()


def find_cycle(node_ids: Iterable[str], children: dict[str, list[str]]) -> list[str] | None:
    """Return one cycle as a node list, or None if the graph is acyclic."""
    WHITE, GREY, BLACK = 0, 1, 2
    color = {n: WHITE for n in node_ids}
    parent: dict[str, str] = {}
    for root in sorted(color):
        if color[root] != WHITE:
            continue
        stack: list[tuple[str, Iterator[str]]] = [(root, iter(children.get(root, ())))]
        color[root] = GREY
        while stack:
            node, it = stack[-1]
            for child in it:
                if color.get(child, BLACK) == GREY:
                    path = [node]
                    cur = node
                    while cur != child:
                        cur = parent[cur]
                        path.append(cur)
                    path.reverse()
                    return path
                if color.get(child) == WHITE:
                    color[child] = GREY
                    parent[child] = node
                    stack.append((child, iter(children.get(child, ()))))
                    break
            else:
                color[node] = BLACK
                stack.pop()
    return None


def _forward_reach(start: str, children: dict[str, list[str]]) -> set[str]:
    seen = {start}
    todo = [start]
    while todo:
        n = todo.pop()
        for c in children.get(n, ()):
            if c not in seen:
                seen.add(c)
                todo.append(c)
    return seen


def validate_device_graph(g: DeviceGraph) -> list[Violation]:
    """Check acyclicity, edge endpoints and entry-to-goal reachability.

    Problems are returned, not raised, so callers can report all of them.
    """
    violations: list[Violation] = []
    children: dict[str, list[str]] = {n: [] for n in g.nodes}
    for e in g.edges:
        missing = [x for x in (e.source, e.target) if x not in g.nodes]
        if missing:
            violations.append(Violation("dangling-edge", f"edge {e.source} -> {e.target} references unknown node(s)", tuple(missing)))
            continue
        children[e.source].append(e.target)

    cycle = find_cycle(g.nodes, children)
    if cycle is not None:
        violations.append(Violation("cycle", "device graph is not acyclic: " + " -> ".join(cycle), tuple(cycle)))

    for nid in sorted(g.nodes):
        node = g.nodes[nid]
        if not node.is_entry:
            continue
        reach = _forward_reach(nid, children)
        if not any(g.nodes[r].is_goal for r in reach):
            violations.append(Violation("unreachable-goal", f"entry node {nid} reaches no exploit goal", (nid,)))
    return violations


class SystemGraph:
    """Union of device graphs plus inter-device edges.

    Holds an index from node id to node and cached child/parent adjacency; the
    adjacency is structural only (defense multipliers live on the edges) so it
    stays valid across defense applications.
    """

    def __init__(
        self,
        devices: Iterable[DeviceGraph] = (),
        inter_edges: Iterable[ExploitEdge] = (),
        *,
        applied_defenses: Iterable[str] = (),
        provenance: dict | None = None,
    ) -> None:
        self.devices: dict[str, DeviceGraph] = {}
        self.nodes: dict[str, VulnNode] = {}
        self.inter_edges: list[ExploitEdge] = []
        self.applied_defenses: list[str] = list(applied_defenses)
        self.provenance: dict = dict(provenance or {})
        self._adjacency: tuple[dict, dict] | None = None
        self._edge_index: dict[tuple[str, str], ExploitEdge] | None = None
        # structural caches shared by copies (see propagation.Topology)
        self.topology_cache: object | None = None
        for d in devices:
            self.add_device(d)
        for e in inter_edges:
            self.add_inter_edge(e)

    # -- construction -------------------------------------------------------

    def add_device(self, device: DeviceGraph) -> None:
        if device.device_id in self.devices:
            raise ValueError(f"duplicate device {device.device_id!r}")
        for nid, node in device.nodes.items():
            if nid in self.nodes:
                raise ValueError(f"duplicate node id {nid!r}")
            self.nodes[nid] = node
        self.devices[device.device_id] = device
        self._invalidate()

    def add_inter_edge(self, edge: ExploitEdge) -> None:
        for end in (edge.source, edge.target):
            if end not in self.nodes:
                raise KeyError(f"unknown node id {end!r}")
        self.inter_edges.append(edge)
        self._invalidate()

    def sort_edges(self) -> None:
        for d in self.devices.values():
            d.edges.sort(key=lambda e: e.key)
        self.inter_edges.sort(key=lambda e: e.key)
        self._invalidate()

    def _invalidate(self) -> None:
        self._adjacency = None
        self._edge_index = None
        self.topology_cache = None

    # -- views --------------------------------------------------------------

    def iter_edges(self) -> Iterator[ExploitEdge]:
        for dev_id in sorted(self.devices):
            yield from self.devices[dev_id].edges
        yield from self.inter_edges

    @property
    def edge_index(self) -> dict[tuple[str, str], ExploitEdge]:
        if self._edge_index is None:
            self._edge_index = {e.key: e for e in self.iter_edges()}
        return self._edge_index

    def edge(self, source: str, target: str) -> ExploitEdge:
        return self.edge_index[(source, target)]

    def _adj(self) -> tuple[dict[str, list[ExploitEdge]], dict[str, list[str]]]:
        if self._adjacency is None:
            out: dict[str, list[ExploitEdge]] = {n: [] for n in self.nodes}
            parents: dict[str, list[str]] = {n: [] for n in self.nodes}
            for e in self.iter_edges():
                out[e.source].append(e)
                parents[e.target].append(e.source)
            for lst in out.values():
                lst.sort(key=lambda e: e.target)
            for lst in parents.values():
                lst.sort()
            self._adjacency = (out, parents)
        return self._adjacency

    def out_edges(self, node_id: str) -> list[ExploitEdge]:
        return self._adj()[0][node_id]

    def children(self, node_id: str) -> list[str]:
        return [e.target for e in self._adj()[0][node_id]]

    def parents(self, node_id: str) -> list[str]:
        return self._adj()[1][node_id]

    @property
    def entry_nodes(self) -> list[str]:
        return sorted(n for n, v in self.nodes.items() if v.is_entry)

    @property
    def goal_nodes(self) -> list[str]:
        return sorted(n for n, v in self.nodes.items() if v.is_goal)

    def has_inter_out_edge(self, node_id: str) -> bool:
        dev = self.nodes[node_id].device_id
        return any(self.nodes[e.target].device_id != dev for e in self.out_edges(node_id))

    def device_of(self, node_id: str) -> DeviceGraph:
        return self.devices[self.nodes[node_id].device_id]

    def __len__(self) -> int:
        return len(self.nodes)

    # -- copying ------------------------------------------------------------

    def copy(self) -> "SystemGraph":
        """Independent copy: nodes and edges are duplicated, frozen records shared."""
        clone = _clone
        new = SystemGraph(applied_defenses=self.applied_defenses, provenance=dict(self.provenance))
        for dev_id, d in self.devices.items():
            nd = DeviceGraph(
                device_id=d.device_id,
                name=d.name,
                category=d.category,
                subcategories=dict(d.subcategories),
                device_set=d.device_set,
                nodes={nid: clone(n) for nid, n in d.nodes.items()},
                edges=[clone(e) for e in d.edges],
            )
            new.devices[dev_id] = nd
            new.nodes.update(nd.nodes)
        new.inter_edges = [clone(e) for e in self.inter_edges]
        new.topology_cache = self.topology_cache
        return new


def _clone(obj):
    # shallow copy without copy.copy's reduce protocol overhead
    new = object.__new__(type(obj))
    new.__dict__.update(obj.__dict__)
    return new


def reachable_goals(g: SystemGraph, node_id: str) -> set[str]:
    """Exploit goals forward-reachable from ``node_id`` (the node itself included)."""
    if node_id not in g.nodes:
        raise KeyError(f"unknown node id {node_id!r}")
    seen = {node_id}
    queue = deque([node_id])
    while queue:
        n = queue.popleft()
        for c in g.children(n):
            if c not in seen:
                seen.add(c)
                queue.append(c)
    return {n for n in seen if g.nodes[n].is_goal}
