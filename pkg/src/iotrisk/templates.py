"""Master attack-graph template and per-device template derivation.

The master template is data (``data/master_template.json``). A device template
is the subgraph of the master that survives the node ``requires`` tags for one
category/subcategory combination, with fragments that can no longer reach an
exploit goal pruned away.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from .graph import NodeKind, find_cycle

CATEGORIES = ("sensor", "actuator", "local_controller", "router_gateway", "user_device", "cloud_server")

SUBCATEGORY_VALUES = {
    "updatability": ("updatable", "non_updatable"),
    "network_access": ("local", "external"),
    "comms": ("send", "receive", "send_and_receive"),
}

# Exploit goal labels every master template must carry.
STANDARD_GOALS = (
    "Eavesdropping over network",
    "Denial-of-Service (DoS)",
    "Disabling device",
    "Actuator malfunction",
    "Data leak",
    "Data change",
    "Replay attack",
    "Ransomware attack",
    "Obtain authentication key to device i with permissions j",
    "Obtain open access to device i with permissions j",
)

AUTH_KEY_SLUG = "obtain-auth-key"
OPEN_ACCESS_SLUG = "obtain-open-access"
MANIPULATE_SLUG = "manipulate-commands"


class TemplateError(ValueError):
    pass


@dataclass(frozen=True)
class TemplateNode:
    slug: str
    label: str
    kind: NodeKind
    factors: Mapping[str, str]
    login: bool = False
    execute: bool = False
    requires: tuple[str, ...] = ()
    parameterized: bool = False


@dataclass(frozen=True)
class TemplateEdge:
    source: str
    target: str
    predicted: bool = False


@dataclass(frozen=True)
class MasterTemplate:
    version: str
    nodes: Mapping[str, TemplateNode]
    edges: tuple[TemplateEdge, ...]


@dataclass(frozen=True)
class DeviceTemplate:
    category: str
    subcategories: Mapping[str, str]
    version: str
    nodes: Mapping[str, TemplateNode]
    edges: tuple[TemplateEdge, ...]

    @property
    def goal_slugs(self) -> list[str]:
        """Non-parameterized exploit goals, in the order impact score lists use."""
        return sorted(s for s, n in self.nodes.items() if n.kind is NodeKind.EXPLOIT_GOAL and not n.parameterized)

    @property
    def entry_slugs(self) -> list[str]:
        """Entry nodes, in the order accessibility score lists use."""
        return sorted(s for s, n in self.nodes.items() if n.kind is NodeKind.ENTRY)

    def permission_slugs(self, types: set[str] | frozenset[str]) -> list[str]:
        out = []
        for s, n in self.nodes.items():
            if ("login" in types and n.login) or ("execute" in types and n.execute):
                out.append(s)
        return sorted(out)


def _parse_node(raw: dict[str, Any]) -> TemplateNode:
    try:
        slug = raw["slug"]
        label = raw["label"]
        kind = NodeKind(raw["kind"])
    except KeyError as exc:
        raise TemplateError(f"template node missing field {exc}") from None
    except ValueError:
        raise TemplateError(f"node {raw.get('slug')!r}: bad kind {raw.get('kind')!r}") from None
    if "@" in slug or "/" in slug:
        raise TemplateError(f"slug {slug!r} may not contain '@' or '/'")
    flags = raw.get("permission_flags", {})
    return TemplateNode(
        slug=slug,
        label=label,
        kind=kind,
        factors=dict(raw.get("factors", {})),
        login=bool(flags.get("login", False)),
        execute=bool(flags.get("execute", False)),
        requires=tuple(raw.get("requires", ())),
        parameterized=bool(raw.get("parameterized", False)),
    )


def load_master_template(source: dict | str | Path, *, require_standard_goals: bool = True) -> MasterTemplate:
    """Validate a template document and return the immutable master template.

    ``source`` is the parsed document or a path to it. Raises TemplateError on
    schema problems, cycles, or (unless disabled) missing standard goals.
    """
    if not isinstance(source, dict):
        source = json.loads(Path(source).read_text(encoding="utf-8"))
    if not isinstance(source.get("nodes"), list):
        raise TemplateError("template document needs a 'nodes' list")
    nodes: dict[str, TemplateNode] = {}
    for raw in source["nodes"]:
        node = _parse_node(raw)
        if node.slug in nodes:
            raise TemplateError(f"duplicate slug {node.slug!r}")
        nodes[node.slug] = node
    edges = []
    seen = set()
    for raw in source.get("edges", []):
        try:
            e = TemplateEdge(raw["from"], raw["to"], bool(raw.get("predicted", False)))
        except KeyError as exc:
            raise TemplateError(f"template edge missing field {exc}") from None
        for end in (e.source, e.target):
            if end not in nodes:
                raise TemplateError(f"edge {e.source} -> {e.target}: unknown slug {end!r}")
        if e.source == e.target:
            raise TemplateError(f"self-loop on {e.source!r}")
        if (e.source, e.target) in seen:
            raise TemplateError(f"duplicate edge {e.source} -> {e.target}")
        seen.add((e.source, e.target))
        edges.append(e)
    children: dict[str, list[str]] = {s: [] for s in nodes}
    for e in edges:
        children[e.source].append(e.target)
    cycle = find_cycle(nodes, children)
    if cycle:
        raise TemplateError("template contains a cycle: " + " -> ".join(cycle))
    if require_standard_goals:
        labels = {n.label for n in nodes.values() if n.kind is NodeKind.EXPLOIT_GOAL}
        missing = [g for g in STANDARD_GOALS if g not in labels]
        if missing:
            raise TemplateError("missing mandatory exploit goal(s): " + "; ".join(missing))
    edges.sort(key=lambda e: (e.source, e.target))
    return MasterTemplate(version=str(source.get("version", "unversioned")), nodes=nodes, edges=tuple(edges))


@lru_cache(maxsize=1)
def default_master_template() -> MasterTemplate:
    text = resources.files("iotrisk.data").joinpath("master_template.json").read_text(encoding="utf-8")
    return load_master_template(json.loads(text))


def device_tags(category: str, subcategories: Mapping[str, str]) -> set[str]:
    tags = {f"category:{category}"}
    if subcategories["updatability"] == "updatable":
        tags.add("updatable")
    if subcategories["network_access"] == "external":
        tags.add("external_network")
    comms = subcategories["comms"]
    if comms in ("send", "send_and_receive"):
        tags.add("send")
    if comms in ("receive", "send_and_receive"):
        tags.add("receive")
    return tags


def _satisfied(requirement: str, tags: set[str]) -> bool:
    if requirement.startswith("category:"):
        allowed = requirement.split(":", 1)[1].split("|")
        return any(f"category:{c}" in tags for c in allowed)
    return requirement in tags


def check_subcategories(category: str, subcategories: Mapping[str, str]) -> None:
    if category not in CATEGORIES:
        raise TemplateError(f"unknown category {category!r}; expected one of {', '.join(CATEGORIES)}")
    for key, allowed in SUBCATEGORY_VALUES.items():
        value = subcategories.get(key)
        if value not in allowed:
            raise TemplateError(f"subcategory {key}={value!r}; expected one of {', '.join(allowed)}")


def derive_device_template(m: MasterTemplate, category: str, subcategories: Mapping[str, str]) -> DeviceTemplate:
    check_subcategories(category, subcategories)
    tags = device_tags(category, subcategories)
    keep = {s for s, n in m.nodes.items() if all(_satisfied(r, tags) for r in n.requires)}
    edges = [e for e in m.edges if e.source in keep and e.target in keep]

    # prune non-goal nodes that can no longer reach any goal
    children: dict[str, set[str]] = {s: set() for s in keep}
    for e in edges:
        children[e.source].add(e.target)
    alive = {s for s in keep if m.nodes[s].kind is NodeKind.EXPLOIT_GOAL}
    changed = True
    while changed:
        changed = False
        for s in keep - alive:
            if children[s] & alive:
                alive.add(s)
                changed = True
    edges = [e for e in edges if e.source in alive and e.target in alive]
    return DeviceTemplate(
        category=category,
        subcategories={k: subcategories[k] for k in SUBCATEGORY_VALUES},
        version=m.version,
        nodes={s: m.nodes[s] for s in sorted(alive)},
        edges=tuple(edges),
    )


def all_subcategory_combinations() -> list[dict[str, str]]:
    out = []
    for u in SUBCATEGORY_VALUES["updatability"]:
        for na in SUBCATEGORY_VALUES["network_access"]:
            for c in SUBCATEGORY_VALUES["comms"]:
                out.append({"updatability": u, "network_access": na, "comms": c})
    return out
