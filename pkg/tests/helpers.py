"""Random graph and catalog builders for property tests."""

from __future__ import annotations

import random

from iotrisk.cvss import score_all_nodes
from iotrisk.defenses import Defense, EdgeUpdate, NodeUpdate
from iotrisk.graph import (
    AttackComplexity,
    AttackVector,
    DeviceGraph,
    Exploitability,
    ExploitEdge,
    Impact,
    NodeKind,
    PrivilegesRequired,
    Scope,
    SystemGraph,
    UserInteraction,
    VulnNode,
    make_node_id,
)

LEVELS = (0.0, 0.2, 0.56)


def random_factors(rng: random.Random) -> tuple[Exploitability, Impact, float]:
    ex = Exploitability(
        rng.choice(list(AttackVector)),
        rng.choice(list(AttackComplexity)),
        rng.choice(list(PrivilegesRequired)),
        rng.choice(list(UserInteraction)),
        rng.choice(list(Scope)),
    )
    imp = Impact(rng.choice(LEVELS), rng.choice(LEVELS), rng.choice(LEVELS))
    return ex, imp, rng.choice((0.0, 0.4, 0.6, 0.8))


def random_system(
    rng: random.Random,
    n_devices: int = 3,
    size: tuple[int, int] = (4, 9),
    p_edge: float = 0.35,
    n_inter: int = 3,
    max_entries: int | None = None,
) -> SystemGraph:
    """Devices are random layered DAGs; inter-device edges may close cycles."""
    g = SystemGraph()
    entries_left = max_entries
    for d in range(n_devices):
        dev = f"d{d}"
        n = rng.randint(*size)
        n_entry = max(1, n // 4)
        if entries_left is not None:
            n_entry = max(1, min(n_entry, entries_left - (n_devices - d - 1)))
            entries_left -= n_entry
        n_goal = max(1, n // 4)
        dg = DeviceGraph(dev, dev, "sensor", {"updatability": "updatable", "network_access": "local", "comms": "send"})
        kinds = []
        for j in range(n):
            kind = NodeKind.ENTRY if j < n_entry else NodeKind.EXPLOIT_GOAL if j >= n - n_goal else NodeKind.INTERMEDIATE
            kinds.append(kind)
            nid = make_node_id(dev, None, f"v{j}")
            ex, imp, acc = random_factors(rng)
            node = VulnNode(nid, f"vuln {j}", kind, dev, f"v{j}", exploitability=ex, impact=imp, accessibility=acc)
            dg.add_node(node)
        edges = set()
        for j in range(n - n_goal):
            lo = max(j + 1, n_entry)
            targets = [t for t in range(lo, n) if rng.random() < p_edge] or [rng.randrange(lo, n)]
            edges.update((j, t) for t in targets)
        for t in range(n_entry, n):
            if not any(b == t for _, b in edges):
                edges.add((rng.randrange(0, min(t, n - n_goal)), t))
        for a, b in sorted(edges):
            dg.add_edge(make_node_id(dev, None, f"v{a}"), make_node_id(dev, None, f"v{b}"))
        g.add_device(dg)
    ids = sorted(g.nodes)
    inter = set()
    for _ in range(n_inter if n_devices > 1 else 0):
        s = rng.choice(ids)
        candidates = [t for t in ids if g.nodes[t].device_id != g.nodes[s].device_id and not g.nodes[t].is_entry]
        if candidates:
            inter.add((s, rng.choice(candidates)))
    for s, t in sorted(inter):
        g.add_inter_edge(ExploitEdge(s, t))
    g.sort_edges()
    return score_all_nodes(g)


def random_dag(rng: random.Random, max_nodes: int = 30, max_entries: int | None = None) -> SystemGraph:
    n_dev = rng.randint(1, 3)
    per = max(4, max_nodes // n_dev)
    return random_system(rng, n_dev, (4, per), n_inter=0, max_entries=max_entries)


def random_catalog(rng: random.Random, g: SystemGraph, n: int) -> list[Defense]:
    out = []
    devs = sorted(g.devices)
    for i in range(n):
        dev = rng.choice(devs)
        nodes = sorted(g.devices[dev].nodes)
        picks = rng.sample(nodes, k=min(len(nodes), rng.randint(1, 2)))
        nu = tuple(NodeUpdate(g.nodes[p].slug, rng.choice([0.0, 0.3, 0.6, 0.9])) for p in picks)
        eu = ()
        if g.devices[dev].edges and rng.random() < 0.5:
            e = rng.choice(g.devices[dev].edges)
            eu = (EdgeUpdate(g.nodes[e.source].slug, g.nodes[e.target].slug, rng.choice([0.0, 0.3, 0.6])),)
        out.append(Defense(f"def-{i:02d}", (dev,), float(rng.randint(1, 5)), nu, eu))
    return out


def tiny_graph(nodes: dict[str, tuple[str, float]], edges: list[tuple[str, str]] | list[tuple[str, str, float]], device: str = "dev") -> SystemGraph:
    """Single-device graph with vulnerability scores set directly; ids are ``dev/-/<slug>``."""
    kinds = {"entry": NodeKind.ENTRY, "mid": NodeKind.INTERMEDIATE, "goal": NodeKind.EXPLOIT_GOAL}
    dg = DeviceGraph(device, device, "sensor", {"updatability": "updatable", "network_access": "local", "comms": "send"})
    for slug, (kind, vuln) in nodes.items():
        n = VulnNode(make_node_id(device, None, slug), slug, kinds[kind], device, slug)
        n.vulnerability_score = vuln
        dg.add_node(n)
    for e in edges:
        edge = dg.add_edge(make_node_id(device, None, e[0]), make_node_id(device, None, e[1]))
        if len(e) == 3:
            edge.edge_defense_score = e[2]
    g = SystemGraph()
    g.add_device(dg)
    g.sort_edges()
    return g


def nid(slug: str, device: str = "dev") -> str:
    return make_node_id(device, None, slug)


_AV = {"N": AttackVector.NETWORK, "A": AttackVector.ADJACENT, "L": AttackVector.LOCAL, "P": AttackVector.PHYSICAL}
_AC = {"L": AttackComplexity.LOW, "H": AttackComplexity.HIGH}
_PR = {"N": PrivilegesRequired.NONE, "L": PrivilegesRequired.LOW, "H": PrivilegesRequired.HIGH}
_UI = {"N": UserInteraction.NONE, "R": UserInteraction.REQUIRED}
_S = {"U": Scope.UNCHANGED, "C": Scope.CHANGED}


def package_score(combo: tuple[str, ...], table) -> float:
    """Score a CVSS metric combination with the package (accessibility none, no defense)."""
    from iotrisk.cvss import compute_vulnerability_score

    av, ac, pr, ui, s, c, i, a = combo
    level = {"H": "high", "L": "low", "N": "none"}
    imp = Impact(*(table.impact_level(level[x]) for x in (c, i, a)))
    return compute_vulnerability_score(Exploitability(_AV[av], _AC[ac], _PR[pr], _UI[ui], _S[s]), imp, 0.0, 1.0, table)
