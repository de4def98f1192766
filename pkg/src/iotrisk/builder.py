"""Turn an administrator's system description into a scored-ready SystemGraph.

Steps: parse and validate the spec, instantiate each device from its template
(adding one permission-subgraph copy per permission held on the device), then
wire devices together from permissions and local-network adjacency.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping

from . import __version__
from .cvss import DEFAULT_TABLE, FactorTable, assign_exploitability_factors, entry_vector_classes
from .distributions import RNG_NAME, make_rng, sample, validate_distribution
from .graph import (
    AttackComplexity,
    AttackVector,
    DeviceGraph,
    ExploitEdge,
    Exploitability,
    Impact,
    NodeKind,
    PrivilegesRequired,
    SystemGraph,
    UserInteraction,
    VulnNode,
    make_node_id,
)
from .templates import (
    AUTH_KEY_SLUG,
    CATEGORIES,
    MANIPULATE_SLUG,
    OPEN_ACCESS_SLUG,
    SUBCATEGORY_VALUES,
    DeviceTemplate,
    MasterTemplate,
    TemplateError,
    default_master_template,
    derive_device_template,
)

log = logging.getLogger(__name__)

DEFAULT_ACCESSIBILITY = 0.40
PERMISSION_TYPES = ("login", "execute_command", "general")
IMPACT_FIELDS = ("confidentiality", "integrity", "availability")
_LEVELS = {"high", "medium", "low", "none"}


class SpecError(ValueError):
    """Invalid system specification; ``problems`` lists every issue found."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class PermissionGrant:
    name: str
    type: str  # login | execute_command | general
    target: str  # device the credentials open
    holders: tuple[str, ...]  # devices holding the credentials


@dataclass
class DeviceSpec:
    name: str
    category: str
    subcategories: dict[str, str]
    device_set: str | None = None
    impact: dict[str, Any] = field(default_factory=dict)
    accessibility: Any = None
    login_permissions: list[PermissionGrant] = field(default_factory=list)
    execute_permissions: list[PermissionGrant] = field(default_factory=list)
    general_permissions: bool = False
    local_network: list[str] = field(default_factory=list)
    factor_overrides: dict[str, dict[str, str]] = field(default_factory=dict)


@dataclass
class SystemSpec:
    devices: list[DeviceSpec]
    parameters: dict[str, Any] = field(default_factory=dict)

    def device(self, name: str) -> DeviceSpec:
        for d in self.devices:
            if d.name == name:
                return d
        raise KeyError(name)

    @property
    def grants(self) -> list[PermissionGrant]:
        out = []
        for d in self.devices:
            out.extend(d.login_permissions)
            out.extend(d.execute_permissions)
        return out

    def adjacency(self) -> set[frozenset[str]]:
        pairs = set()
        for d in self.devices:
            for other in d.local_network:
                if other != d.name:
                    pairs.add(frozenset((d.name, other)))
        return pairs


# -- parsing ----------------------------------------------------------------


def _score_value(raw: Any, what: str, problems: list[str], levels: Mapping[str, float]) -> float:
    if isinstance(raw, str):
        key = raw.lower()
        if key not in levels:
            problems.append(f"{what}: unknown level {raw!r}")
            return 0.0
        return levels[key]
    try:
        v = float(raw)
    except (TypeError, ValueError):
        problems.append(f"{what}: not a number: {raw!r}")
        return 0.0
    if not 0.0 <= v <= 1.0:
        problems.append(f"{what}: score {v} outside [0, 1]")
    return v


def _score_block(raw: Any, what: str, problems: list[str], levels: Mapping[str, float]) -> Any:
    """Normalize a score list / slug-keyed mapping / "auto" marker."""
    if raw is None or raw == "auto":
        return raw
    if isinstance(raw, Mapping):
        return {k: _score_value(v, f"{what}[{k}]", problems, levels) for k, v in raw.items()}
    if isinstance(raw, list):
        return [_score_value(v, f"{what}[{i}]", problems, levels) for i, v in enumerate(raw)]
    problems.append(f"{what}: expected list, mapping or 'auto'")
    return None


def _grants(raw: Any, ptype: str, target: str, problems: list[str]) -> list[PermissionGrant]:
    by_name: dict[str, list[str]] = {}
    for i, item in enumerate(raw or []):
        if isinstance(item, str):
            name, holders = "default", [item]
        elif isinstance(item, Mapping):
            name = str(item.get("permission", "default"))
            holders = list(item.get("devices", []))
        else:
            problems.append(f"device {target!r}: bad {ptype} permission entry #{i}")
            continue
        if not name or name == "-" or "/" in name or "@" in name or ":" in name:
            problems.append(f"device {target!r}: illegal permission name {name!r}")
            continue
        by_name.setdefault(name, [])
        for h in holders:
            if h not in by_name[name]:
                by_name[name].append(h)
    return [PermissionGrant(n, ptype, target, tuple(sorted(h))) for n, h in sorted(by_name.items())]


def parse_system_spec(document: Mapping[str, Any], table: FactorTable = DEFAULT_TABLE) -> SystemSpec:
    """Validate a system-spec document and fill defaults.

    Raises SpecError listing duplicate names, unknown categories, dangling
    device references and out-of-range scores.
    """
    problems: list[str] = []
    raw_devices = document.get("devices")
    if not isinstance(raw_devices, list):
        raise SpecError(["spec needs a 'devices' list"])
    impact_levels = {lv: table.impact_level(lv) for lv in ("high", "low", "none")}
    access_levels = {lv: table.accessibility_level(lv) for lv in _LEVELS}

    devices: list[DeviceSpec] = []
    names: set[str] = set()
    for i, rd in enumerate(raw_devices):
        name = rd.get("name")
        if not name or not isinstance(name, str):
            problems.append(f"device #{i}: missing name")
            continue
        if "/" in name or "@" in name or ":" in name:
            problems.append(f"device {name!r}: name may not contain '/', '@' or ':'")
        if name in names:
            problems.append(f"duplicate device name {name!r}")
            continue
        names.add(name)
        category = rd.get("category")
        if category not in CATEGORIES:
            problems.append(f"device {name!r}: unknown category {category!r}")
        sub = rd.get("subcategory") or rd.get("subcategories")
        if not isinstance(sub, Mapping):
            problems.append(f"device {name!r}: missing subcategory")
            sub = {}
        for key, allowed in SUBCATEGORY_VALUES.items():
            if sub.get(key) not in allowed:
                problems.append(f"device {name!r}: subcategory {key}={sub.get(key)!r} not in {allowed}")
        raw_impact = rd.get("impact") or {}
        if raw_impact == "auto":
            impact = {f: "auto" for f in IMPACT_FIELDS}
        else:
            impact = {
                f: _score_block(raw_impact.get(f), f"device {name!r} {f}", problems, impact_levels)
                for f in IMPACT_FIELDS
            }
        devices.append(
            DeviceSpec(
                name=name,
                category=category,
                subcategories={k: sub.get(k) for k in SUBCATEGORY_VALUES},
                device_set=rd.get("device_set"),
                impact=impact,
                accessibility=_score_block(rd.get("accessibility"), f"device {name!r} accessibility", problems, access_levels),
                login_permissions=_grants(rd.get("login_permissions"), "login", name, problems),
                execute_permissions=_grants(rd.get("execute_permissions"), "execute_command", name, problems),
                general_permissions=bool(rd.get("general_permissions", False)),
                local_network=list(rd.get("local_network") or []),
                factor_overrides=dict(rd.get("factor_overrides") or {}),
            )
        )

    for d in devices:
        for g in d.login_permissions + d.execute_permissions:
            for h in g.holders:
                if h not in names:
                    problems.append(f"device {d.name!r}: {g.type} permission {g.name!r} names unknown device {h!r}")
                elif h == d.name:
                    problems.append(f"device {d.name!r}: grants permission {g.name!r} to itself")
        for other in d.local_network:
            if other not in names:
                problems.append(f"device {d.name!r}: local network names unknown device {other!r}")
        for slug, ov in d.factor_overrides.items():
            try:
                _override_exploitability(Exploitability(), ov)
            except ValueError as exc:
                problems.append(f"device {d.name!r}: bad factor override for {slug!r}: {exc}")

    params = dict(document.get("parameters") or {})
    auto = params.get("auto_fill")
    if auto:
        for key in ("impact", "accessibility"):
            if key in auto:
                try:
                    validate_distribution(auto[key])
                except (KeyError, ValueError) as exc:
                    problems.append(f"auto_fill.{key}: {exc}")
    if problems:
        raise SpecError(problems)
    return SystemSpec(devices=devices, parameters=params)


def _override_exploitability(base: Exploitability, ov: Mapping[str, str]) -> Exploitability:
    kinds = {
        "attack_vector": AttackVector,
        "attack_complexity": AttackComplexity,
        "privileges_required": PrivilegesRequired,
        "user_interaction": UserInteraction,
    }
    changes = {}
    for key, value in ov.items():
        if key not in kinds:
            raise ValueError(f"unknown factor {key!r}")
        changes[key] = kinds[key](value)
    return replace(base, **changes)


# -- instantiation ----------------------------------------------------------


def _resolve_scores(raw: Any, slugs: list[str], default: float, what: str, device: str) -> dict[str, float]:
    if raw is None:
        return {s: default for s in slugs}
    if isinstance(raw, Mapping):
        unknown = sorted(set(raw) - set(slugs))
        if unknown:
            raise SpecError([f"device {device!r}: {what} given for unknown node(s) {unknown}; expected {slugs}"])
        return {s: raw.get(s, default) for s in slugs}
    if len(raw) != len(slugs):
        raise SpecError(
            [f"device {device!r}: {what} list has {len(raw)} value(s), expected {len(slugs)} (one per {slugs})"]
        )
    return dict(zip(slugs, raw))


def _auto_scores(spec: SystemSpec, device: DeviceSpec, key: str, n: int, salt: int) -> list[float]:
    auto = spec.parameters.get("auto_fill") or {}
    dist = auto.get(key)
    if dist is None:
        raise SpecError([f"device {device.name!r}: {key} is 'auto' but parameters.auto_fill.{key} is missing"])
    seed = int(auto.get("seed", 0))
    # one stream per device set keeps members of a set identical
    group = device.device_set or device.name
    rng = make_rng([seed, salt, *group.encode("utf-8")])
    return [round(v, 6) for v in sample(dist, rng, n)]


def _param_goal_label(slug: str, label: str, target: str, perm: str) -> str:
    if slug == AUTH_KEY_SLUG:
        return f"Obtain authentication key to device {target} with permissions {perm}"
    if slug == OPEN_ACCESS_SLUG:
        return f"Obtain open access to device {target} with permissions {perm}"
    if slug == MANIPULATE_SLUG:
        return f"Manipulate commands to device {target} with permission {perm}"
    return f"{label} ({target}, {perm})"


def _held_credentials(device: str, grants: Iterable[PermissionGrant]) -> dict[str, list[tuple[str, str]]]:
    """Parameterized goal instances for a credential-holding device: slug -> [(target, perm)]."""
    out: dict[str, list[tuple[str, str]]] = {AUTH_KEY_SLUG: [], OPEN_ACCESS_SLUG: [], MANIPULATE_SLUG: []}
    for g in grants:
        if device not in g.holders:
            continue
        if g.type == "login":
            out[AUTH_KEY_SLUG].append((g.target, g.name))
            out[OPEN_ACCESS_SLUG].append((g.target, g.name))
        elif g.type == "execute_command":
            out[MANIPULATE_SLUG].append((g.target, g.name))
    return {k: sorted(set(v)) for k, v in out.items()}


def instantiate_device(
    entry: DeviceSpec,
    template: DeviceTemplate,
    grants: Iterable[PermissionGrant] = (),
    spec: SystemSpec | None = None,
) -> DeviceGraph:
    """Build one device's attack DAG from its template and spec entry."""
    grants = list(grants)
    dev = entry.name
    g = DeviceGraph(
        device_id=dev,
        name=dev,
        category=entry.category,
        subcategories=dict(entry.subcategories),
        device_set=entry.device_set,
    )
    held = _held_credentials(dev, grants)
    # permission name -> types granted on this device
    perms: dict[str, set[str]] = {}
    for gr in grants:
        if gr.target == dev and gr.type in ("login", "execute_command"):
            perms.setdefault(gr.name, set()).add("execute" if gr.type == "execute_command" else "login")

    instances: dict[str, list[str]] = {}  # template slug -> instance slugs (parameterized goals)

    def make(tn, permission: str | None, slug: str, label: str, pr: PrivilegesRequired) -> VulnNode:
        f = tn.factors
        hint = AttackVector(f["attack_vector"]) if "attack_vector" in f else None
        kind = tn.kind
        if permission is not None and kind is NodeKind.ENTRY:
            kind = NodeKind.INTERMEDIATE
        return VulnNode(
            id=make_node_id(dev, permission, slug),
            label=label,
            kind=kind,
            device_id=dev,
            slug=slug,
            permission=permission,
            exploitability=Exploitability(
                attack_vector=hint or AttackVector.NETWORK,
                attack_complexity=AttackComplexity(f.get("attack_complexity", "low")),
                privileges_required=pr,
                user_interaction=UserInteraction(f.get("user_interaction", "none")),
            ),
            vector_hint=hint,
        )

    for slug, tn in template.nodes.items():
        if tn.parameterized:
            instances[slug] = []
            for target, perm in held.get(slug, []):
                islug = f"{slug}@{target}:{perm}"
                g.add_node(make(tn, None, islug, _param_goal_label(slug, tn.label, target, perm), PrivilegesRequired.NONE))
                instances[slug].append(islug)
        else:
            g.add_node(make(tn, None, slug, tn.label, PrivilegesRequired.NONE))

    def targets(slug: str) -> list[str]:
        return instances[slug] if slug in instances else [slug]

    for e in template.edges:
        for t in targets(e.target):
            g.add_edge(make_node_id(dev, None, e.source), make_node_id(dev, None, t), predicted=e.predicted)

    for perm, types in sorted(perms.items()):
        copy_slugs = set(template.permission_slugs(types))
        for slug in sorted(copy_slugs):
            tn = template.nodes[slug]
            pr = PrivilegesRequired.LOW if (tn.execute and "execute" in types) else PrivilegesRequired.HIGH
            g.add_node(make(tn, perm, slug, f"{tn.label} as {perm}", pr))
        for e in template.edges:
            if e.source not in copy_slugs:
                continue
            src = make_node_id(dev, perm, e.source)
            if e.target in copy_slugs:
                g.add_edge(src, make_node_id(dev, perm, e.target), predicted=e.predicted)
            else:
                for t in targets(e.target):
                    g.add_edge(src, make_node_id(dev, None, t), predicted=e.predicted)

    # impact and accessibility
    goal_slugs = template.goal_slugs
    entry_slugs = template.entry_slugs
    impacts = {}
    for i, fname in enumerate(IMPACT_FIELDS):
        raw = entry.impact.get(fname)
        if raw == "auto":
            raw = _auto_scores(spec or SystemSpec([]), entry, "impact", len(goal_slugs), i)
        impacts[fname] = _resolve_scores(raw, goal_slugs, 0.0, fname, dev)
    for slug in goal_slugs:
        node = g.nodes[make_node_id(dev, None, slug)]
        node.impact = Impact(*(impacts[f][slug] for f in IMPACT_FIELDS))
    raw_acc = entry.accessibility
    if raw_acc == "auto":
        raw_acc = _auto_scores(spec or SystemSpec([]), entry, "accessibility", len(entry_slugs), 3)
    for slug, v in _resolve_scores(raw_acc, entry_slugs, DEFAULT_ACCESSIBILITY, "accessibility", dev).items():
        g.nodes[make_node_id(dev, None, slug)].accessibility = v
    return g


# -- wiring -----------------------------------------------------------------


def _edge(nodes: Mapping[str, VulnNode], src: str, dst: str, rule: str, out: set, warnings: list[str]) -> None:
    missing = [x for x in (src, dst) if x not in nodes]
    if missing:
        msg = f"rule {rule}: skipped {src} -> {dst}; absent node(s) {missing}"
        log.warning(msg)
        warnings.append(msg)
        return
    out.add((src, dst))


def connect_devices(devices: Iterable[DeviceGraph], spec: SystemSpec) -> SystemGraph:
    """Union the device graphs and add inter-device edges.

    Login grant j on device i: holder's auth-key goal -> i's copy-j network
    address (and open-access goal -> i's base network address). Execute grant:
    holder's manipulate-commands goal -> i's copy-j network address, or the
    copy's execute-command node when the copy has no login nodes. Sensor or
    actuator next to a controller: tamper / unsigned-firmware -> controller
    ports. Routers: authentication nodes linked both ways between adjacent
    routers, and to the access-request node of adjacent non-routers. A device
    with general permissions is reachable from every neighbour's
    authentication node straight into its network address.
    """
    g = SystemGraph(devices)
    nodes = g.nodes
    warnings: list[str] = []
    edges: set[tuple[str, str]] = set()
    nid = make_node_id
    cat = {d.name: d.category for d in spec.devices}

    for gr in spec.grants:
        i, j = gr.target, gr.name
        landing = nid(i, j, "access-network-address")
        for h in gr.holders:
            if gr.type == "login":
                _edge(nodes, nid(h, None, f"{AUTH_KEY_SLUG}@{i}:{j}"), landing, "login", edges, warnings)
                _edge(nodes, nid(h, None, f"{OPEN_ACCESS_SLUG}@{i}:{j}"), nid(i, None, "access-network-address"), "open-access", edges, warnings)
            elif gr.type == "execute_command":
                target = landing if landing in nodes else nid(i, j, "execute-command")
                _edge(nodes, nid(h, None, f"{MANIPULATE_SLUG}@{i}:{j}"), target, "execute", edges, warnings)

    for pair in sorted(spec.adjacency(), key=sorted):
        a, b = sorted(pair)
        for x, y in ((a, b), (b, a)):
            if cat[x] in ("sensor", "actuator") and cat[y] == "local_controller":
                ports = nid(y, None, "access-ports")
                for slug in ("sensor-tampering", "firmware-unsigned"):
                    if nid(x, None, slug) in nodes:
                        _edge(nodes, nid(x, None, slug), ports, "sensor-controller", edges, warnings)
            if cat[x] == "router_gateway":
                if cat[y] == "router_gateway":
                    _edge(nodes, nid(x, None, "no-strong-auth"), nid(y, None, "no-strong-auth"), "router-router", edges, warnings)
                else:
                    _edge(nodes, nid(x, None, "no-strong-auth"), nid(y, None, "access-requested"), "router-device", edges, warnings)
            if spec.device(y).general_permissions:
                _edge(nodes, nid(x, None, "no-strong-auth"), nid(y, None, "access-network-address"), "general", edges, warnings)

    for src, dst in sorted(edges):
        g.add_inter_edge(ExploitEdge(src, dst))
    g.sort_edges()
    g.provenance["warnings"] = warnings
    return g


def build_system(
    spec: SystemSpec,
    master: MasterTemplate | None = None,
    table: FactorTable = DEFAULT_TABLE,
) -> SystemGraph:
    """Instantiate, connect, and assign exploitability factors (not yet scored)."""
    master = master or default_master_template()
    grants = spec.grants
    devices = []
    for d in spec.devices:
        try:
            template = derive_device_template(master, d.category, d.subcategories)
        except TemplateError as exc:
            raise SpecError([f"device {d.name!r}: {exc}"]) from None
        devices.append(instantiate_device(d, template, grants, spec))
    g = connect_devices(devices, spec)
    overrides = {d.name: d.factor_overrides for d in spec.devices}
    classes = entry_vector_classes(g)
    for node_id in sorted(g.nodes):
        node = g.nodes[node_id]
        factors = assign_exploitability_factors(node, g, classes)
        ov = overrides[node.device_id].get(node.slug.split("@", 1)[0])
        if ov:
            factors = _override_exploitability(factors, ov)
        node.exploitability = factors
    g.provenance.update(
        {
            "engine_version": __version__,
            "template_version": master.version,
        }
    )
    auto = spec.parameters.get("auto_fill")
    if auto:
        g.provenance["auto_fill_seed"] = int(auto.get("seed", 0))
        g.provenance["rng"] = RNG_NAME
    return g
