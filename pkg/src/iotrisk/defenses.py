"""Defense records, catalog loading, and application to a system graph.

A defense lowers node and/or edge multipliers on the devices it covers. Node
selectors are template slugs and match the base node, every permission copy
and every parameterized instance of that slug; a ``permission`` qualifier
narrows the match (``"-"`` means the base copy only).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping

from .cvss import DEFAULT_TABLE, FactorTable, score_node
from .graph import SystemGraph, VulnNode

DEFENSE_LEVELS = ("none", "workaround", "temporary", "definite", "infallible")


class CatalogError(ValueError):
    pass


@dataclass(frozen=True)
class NodeUpdate:
    slug: str
    score: float
    permission: str | None = None  # None: any copy, "-": base only

    def matches(self, n: VulnNode) -> bool:
        if n.slug.split("@", 1)[0] != self.slug:
            return False
        if self.permission is None:
            return True
        return (n.permission or "-") == self.permission


@dataclass(frozen=True)
class EdgeUpdate:
    source: str
    target: str
    score: float
    permission: str | None = None  # qualifies the source node

    def matches(self, s: VulnNode, t: VulnNode) -> bool:
        if s.device_id != t.device_id:
            return False
        if s.slug.split("@", 1)[0] != self.source or t.slug.split("@", 1)[0] != self.target:
            return False
        return self.permission is None or (s.permission or "-") == self.permission


@dataclass(frozen=True)
class Defense:
    name: str
    devices: tuple[str, ...]
    cost: float
    node_updates: tuple[NodeUpdate, ...] = ()
    edge_updates: tuple[EdgeUpdate, ...] = ()
    device_set: str | None = None

    def effective_cost(self, per_device: bool = False) -> float:
        return self.cost * len(self.devices) if per_device else self.cost

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"name": self.name}
        if self.device_set is not None:
            out["device_set"] = self.device_set
        out["devices"] = list(self.devices)
        out["cost"] = self.cost
        out["node_updates"] = [_drop_none({"node": u.slug, "permission": u.permission, "score": u.score}) for u in self.node_updates]
        out["edge_updates"] = [
            _drop_none({"from": u.source, "to": u.target, "permission": u.permission, "score": u.score}) for u in self.edge_updates
        ]
        return out


def _drop_none(d: dict) -> dict:
    return {k: v for k, v in d.items() if v is not None}


@dataclass
class Resolution:
    nodes: list[str] = field(default_factory=list)
    edges: list[tuple[str, str]] = field(default_factory=list)


def _level(raw: Any, table: FactorTable) -> float:
    if isinstance(raw, str):
        if raw not in DEFENSE_LEVELS:
            raise CatalogError(f"unknown defense level {raw!r}")
        return table.defense_level(raw)
    v = float(raw)
    if not 0.0 <= v <= 1.0:
        raise CatalogError(f"defense score {v} outside [0, 1]")
    return v


def parse_defense(raw: Mapping[str, Any], table: FactorTable = DEFAULT_TABLE, device_sets: Mapping[str, list[str]] | None = None) -> Defense:
    name = raw.get("name")
    if not name:
        raise CatalogError("defense without a name")
    try:
        cost = float(raw["cost"])
    except (KeyError, TypeError, ValueError):
        raise CatalogError(f"defense {name!r}: missing or bad cost") from None
    if not cost > 0:
        raise CatalogError(f"defense {name!r}: cost must be > 0")
    device_set = raw.get("device_set")
    devices = list(raw.get("devices") or [])
    if device_set is not None and not devices:
        if device_sets is None or device_set not in device_sets:
            raise CatalogError(f"defense {name!r}: unknown device set {device_set!r}")
        devices = list(device_sets[device_set])
    if not devices:
        raise CatalogError(f"defense {name!r}: no devices")
    try:
        nodes = tuple(
            NodeUpdate(u["node"], _level(u["score"], table), u.get("permission")) for u in raw.get("node_updates", [])
        )
        edges = tuple(
            EdgeUpdate(u["from"], u["to"], _level(u["score"], table), u.get("permission")) for u in raw.get("edge_updates", [])
        )
    except KeyError as exc:
        raise CatalogError(f"defense {name!r}: update missing field {exc}") from None
    except CatalogError as exc:
        raise CatalogError(f"defense {name!r}: {exc}") from None
    if not nodes and not edges:
        raise CatalogError(f"defense {name!r}: no node or edge updates")
    return Defense(name, tuple(sorted(set(devices))), cost, nodes, edges, device_set)


def resolve(defense: Defense, g: SystemGraph) -> Resolution:
    """Node ids and edge keys the defense touches on ``g``."""
    res = Resolution()
    node_slugs = {u.slug for u in defense.node_updates}
    edge_slugs = {u.source for u in defense.edge_updates}
    for dev in sorted(set(defense.devices) & set(g.devices)):
        for nid in sorted(g.devices[dev].nodes):
            n = g.nodes[nid]
            base = n.slug.split("@", 1)[0]
            if base in node_slugs and any(u.matches(n) for u in defense.node_updates):
                res.nodes.append(nid)
            if base in edge_slugs:
                for e in g.out_edges(nid):
                    if any(u.matches(n, g.nodes[e.target]) for u in defense.edge_updates):
                        res.edges.append(e.key)
    res.edges.sort()
    return res


def validate_catalog(catalog: Iterable[Defense], g: SystemGraph) -> list[str]:
    problems = []
    names = set()
    for d in catalog:
        if d.name in names:
            problems.append(f"duplicate defense name {d.name!r}")
        names.add(d.name)
        unknown = [x for x in d.devices if x not in g.devices]
        if unknown:
            problems.append(f"defense {d.name!r}: unknown device(s) {unknown}")
        r = resolve(d, g)
        if not r.nodes and not r.edges:
            problems.append(f"defense {d.name!r}: selectors match nothing on its devices")
    return problems


def load_catalog(source: str | Path | list, g: SystemGraph | None = None, table: FactorTable = DEFAULT_TABLE) -> list[Defense]:
    """Parse a catalog document (list of records, or ``{"defenses": [...]}``)."""
    if isinstance(source, (str, Path)):
        source = json.loads(Path(source).read_text(encoding="utf-8"))
    if isinstance(source, Mapping):
        source = source.get("defenses", [])
    device_sets = None
    if g is not None:
        device_sets = {}
        for dev_id in sorted(g.devices):
            ds = g.devices[dev_id].device_set
            if ds:
                device_sets.setdefault(ds, []).append(dev_id)
    catalog = [parse_defense(raw, table, device_sets) for raw in source]
    if g is not None:
        problems = validate_catalog(catalog, g)
        if problems:
            raise CatalogError("; ".join(problems))
    return catalog


def apply_defense(g: SystemGraph, defense: Defense, table: FactorTable = DEFAULT_TABLE) -> list[str]:
    """Apply ``defense`` in place and return the node ids to re-propagate from.

    Multipliers only ever go down: the stored value becomes the minimum of the
    current and the defense's value, so stacking defenses is order-free.
    """
    res = resolve(defense, g)
    seeds = set()
    for nid in res.nodes:
        n = g.nodes[nid]
        new = min((u.score for u in defense.node_updates if u.matches(n)), default=1.0)
        if new < n.node_defense_score:
            n.node_defense_score = new
            score_node(n, table)
            seeds.add(nid)
    for key in res.edges:
        e = g.edge(*key)
        s, t = g.nodes[e.source], g.nodes[e.target]
        new = min((u.score for u in defense.edge_updates if u.matches(s, t)), default=1.0)
        if new < e.edge_defense_score:
            e.edge_defense_score = new
            seeds.add(e.source)
    g.applied_defenses.append(defense.name)
    return sorted(seeds)


# -- generic library ----------------------------------------------------------


@lru_cache(maxsize=1)
def default_library() -> tuple[dict, ...]:
    text = resources.files("iotrisk.data").joinpath("defense_library.json").read_text(encoding="utf-8")
    return tuple(json.loads(text)["defenses"])


def expand_library(
    g: SystemGraph,
    library: Iterable[Mapping[str, Any]] | None = None,
    table: FactorTable = DEFAULT_TABLE,
    cost_scale: Mapping[str, float] | None = None,
) -> list[Defense]:
    """Instantiate generic defense archetypes for every device (or device set) they fit.

    Members of a device set get one shared defense. ``cost_scale`` optionally
    multiplies an archetype's cost per device category.
    """
    library = list(default_library() if library is None else library)
    groups: dict[str, list[str]] = {}
    for dev_id in sorted(g.devices):
        key = g.devices[dev_id].device_set or dev_id
        groups.setdefault(key, []).append(dev_id)
    out = []
    for arch in library:
        for key in sorted(groups):
            members = groups[key]
            raw = dict(arch)
            raw["name"] = f"{arch['name']} [{key}]"
            raw["devices"] = members
            if len(members) > 1 or g.devices[members[0]].device_set:
                raw["device_set"] = key
            if cost_scale:
                raw["cost"] = float(arch["cost"]) * cost_scale.get(g.devices[members[0]].category, 1.0)
            d = parse_defense(raw, table)
            r = resolve(d, g)
            if r.nodes or r.edges:
                out.append(d)
    return out
