"""Vulnerability scoring with CVSS v3.1 base-metric arithmetic.

Scores are continuous in [0, 1]: the CVSS base score divided by ten and scaled
by the node's defense multiplier. No CVSS roundup is applied here.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .graph import (
    AttackComplexity,
    AttackVector,
    Exploitability,
    Impact,
    NodeKind,
    PrivilegesRequired,
    Scope,
    SystemGraph,
    UserInteraction,
    VulnNode,
)

def _default_weights() -> dict[str, float]:
    return {
        "exploitability.attack_vector.network": 0.85,
        "exploitability.attack_vector.adjacent": 0.62,
        "exploitability.attack_vector.local": 0.60,
        "exploitability.attack_vector.physical": 0.44,
        "exploitability.attack_complexity.low": 0.77,
        "exploitability.attack_complexity.medium": 0.44,
        "exploitability.attack_complexity.high": 0.20,
        "exploitability.privileges_required.none": 0.85,
        "exploitability.privileges_required.low_changed": 0.68,
        "exploitability.privileges_required.low_unchanged": 0.62,
        "exploitability.privileges_required.high_changed": 0.50,
        "exploitability.privileges_required.high_unchanged": 0.27,
        "exploitability.user_interaction.none": 0.85,
        "exploitability.user_interaction.required": 0.62,
        "exploitability.accessibility.high": 0.80,
        "exploitability.accessibility.medium": 0.60,
        "exploitability.accessibility.low": 0.40,
        "exploitability.accessibility.none": 0.0,
        "impact.level.high": 0.56,
        "impact.level.low": 0.20,
        "impact.level.none": 0.0,
        "defense.level.none": 1.0,
        "defense.level.workaround": 0.90,
        "defense.level.temporary": 0.60,
        "defense.level.definite": 0.30,
        "defense.level.infallible": 0.0,
    }


@dataclass
class FactorTable:
    """Numeric weight for every (category, factor, level) triple."""

    weights: dict[str, float] = field(default_factory=_default_weights)

    @classmethod
    def cvss31(cls) -> "FactorTable":
        """Weights of the official CVSS v3.1 calculator (AC has no medium level there)."""
        t = cls()
        t.weights.update(
            {
                "exploitability.attack_vector.local": 0.55,
                "exploitability.attack_vector.physical": 0.20,
                "exploitability.attack_complexity.medium": 0.44,
                "exploitability.attack_complexity.high": 0.44,
                "impact.level.low": 0.22,
            }
        )
        return t

    @classmethod
    def load(cls, path: str | Path) -> "FactorTable":
        t = cls()
        t.apply_overrides(json.loads(Path(path).read_text(encoding="utf-8")))
        return t

    def apply_overrides(self, overrides: dict[str, float]) -> None:
        for key, value in overrides.items():
            if key not in self.weights:
                raise KeyError(f"unknown factor key {key!r}")
            value = float(value)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"factor {key} = {value} outside [0, 1]")
            self.weights[key] = value

    def attack_vector(self, av: AttackVector) -> float:
        return self.weights[f"exploitability.attack_vector.{av.value}"]

    def attack_complexity(self, ac: AttackComplexity) -> float:
        return self.weights[f"exploitability.attack_complexity.{ac.value}"]

    def privileges_required(self, pr: PrivilegesRequired, scope: Scope) -> float:
        if pr is PrivilegesRequired.NONE:
            return self.weights["exploitability.privileges_required.none"]
        return self.weights[f"exploitability.privileges_required.{pr.value}_{scope.value}"]

    def user_interaction(self, ui: UserInteraction) -> float:
        return self.weights[f"exploitability.user_interaction.{ui.value}"]

    def impact_level(self, level: str) -> float:
        return self.weights[f"impact.level.{level}"]

    def accessibility_level(self, level: str) -> float:
        return self.weights[f"exploitability.accessibility.{level}"]

    def defense_level(self, level: str) -> float:
        return self.weights[f"defense.level.{level}"]


DEFAULT_TABLE = FactorTable()


def base_score_fraction(
    av: float,
    ac: float,
    pr: float,
    ui: float,
    scope_changed: bool,
    confidentiality: float,
    integrity: float,
    availability: float,
    accessibility: float = 0.0,
    defense: float = 1.0,
) -> float:
    """Numeric core of the scoring rule, on already-resolved weights."""
    iss = 1.0 - (1.0 - confidentiality) * (1.0 - integrity) * (1.0 - availability) * (1.0 - accessibility)
    if scope_changed:
        impact = 7.52 * (iss - 0.029) - 3.25 * (iss - 0.02) ** 15
    else:
        impact = 6.42 * iss
    exploitability = 8.22 * av * ac * pr * ui
    if impact < 0:
        impact = 0.0
    if scope_changed:
        x = min(1.08 * (impact + exploitability), 10.0)
    else:
        x = min(impact + exploitability, 10.0)
    return x / 10.0 * defense


def _check_unit(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0) or math.isnan(value):
        raise ValueError(f"{name} = {value!r} outside [0, 1]")


def compute_vulnerability_score(
    factors: Exploitability,
    impact: Impact,
    accessibility: float,
    node_defense_score: float,
    table: FactorTable = DEFAULT_TABLE,
) -> float:
    for name, v in (
        ("confidentiality", impact.confidentiality),
        ("integrity", impact.integrity),
        ("availability", impact.availability),
        ("accessibility", accessibility),
        ("node_defense_score", node_defense_score),
    ):
        _check_unit(name, v)
    return base_score_fraction(
        table.attack_vector(factors.attack_vector),
        table.attack_complexity(factors.attack_complexity),
        table.privileges_required(factors.privileges_required, factors.scope),
        table.user_interaction(factors.user_interaction),
        factors.scope is Scope.CHANGED,
        impact.confidentiality,
        impact.integrity,
        impact.availability,
        accessibility,
        node_defense_score,
    )


# -- factor assignment ------------------------------------------------------


def _entry_vector(node: VulnNode, g: SystemGraph) -> AttackVector:
    hint = node.vector_hint or AttackVector.NETWORK
    if hint is AttackVector.NETWORK:
        dev = g.devices[node.device_id]
        if dev.subcategories.get("network_access") != "external":
            return AttackVector.ADJACENT
    return hint


def _device_entry_ancestors(node: VulnNode, g: SystemGraph) -> set[str]:
    """Entry nodes of the same device (base copy) from which ``node`` is reachable."""
    seen = {node.id}
    todo = [node.id]
    found: set[str] = set()
    while todo:
        n = todo.pop()
        for p in g.parents(n):
            pn = g.nodes[p]
            if p in seen or pn.device_id != node.device_id or pn.permission is not None:
                continue
            seen.add(p)
            if pn.is_entry:
                found.add(p)
            todo.append(p)
    return found


def entry_vector_classes(g: SystemGraph) -> dict[str, set[AttackVector]]:
    """For every base node: the entry vectors of same-device base entries above it."""
    out: dict[str, set[AttackVector]] = {}
    for entry_id in g.entry_nodes:
        entry = g.nodes[entry_id]
        if entry.permission is not None:
            continue
        av = _entry_vector(entry, g)
        seen = {entry_id}
        todo = [entry_id]
        while todo:
            n = todo.pop()
            for c in g.children(n):
                cn = g.nodes[c]
                if c in seen or cn.device_id != entry.device_id or cn.permission is not None:
                    continue
                seen.add(c)
                out.setdefault(c, set()).add(av)
                todo.append(c)
    return out


def assign_exploitability_factors(
    n: VulnNode, g: SystemGraph, classes: dict[str, set[AttackVector]] | None = None
) -> Exploitability:
    """Position rules for a node's exploitability levels.

    Attack vector: physical for tamper/port nodes, network for nodes reached
    only from external-network entries, adjacent below local-network entries,
    local otherwise. Privileges: none outside permission copies; inside a copy
    the level chosen at instantiation (low for execute, high for login) is
    kept. Scope is changed iff the node has an edge into another device.
    ``classes`` is an optional precomputed :func:`entry_vector_classes`.
    """
    current = n.exploitability
    if n.vector_hint is AttackVector.PHYSICAL:
        av = AttackVector.PHYSICAL
    elif n.kind is NodeKind.ENTRY and n.permission is None:
        av = _entry_vector(n, g)
    elif n.permission is not None:
        av = AttackVector.LOCAL
    else:
        if classes is None:
            found = {_entry_vector(g.nodes[a], g) for a in _device_entry_ancestors(n, g)}
        else:
            found = classes.get(n.id, set())
        if found == {AttackVector.NETWORK}:
            av = AttackVector.NETWORK
        elif found & {AttackVector.NETWORK, AttackVector.ADJACENT}:
            av = AttackVector.ADJACENT
        else:
            av = AttackVector.LOCAL

    if n.permission is None:
        pr = PrivilegesRequired.NONE
    elif current.privileges_required is PrivilegesRequired.NONE:
        pr = PrivilegesRequired.HIGH
    else:
        pr = current.privileges_required

    scope = Scope.CHANGED if g.has_inter_out_edge(n.id) else Scope.UNCHANGED
    return Exploitability(
        attack_vector=av,
        attack_complexity=current.attack_complexity,
        privileges_required=pr,
        user_interaction=current.user_interaction,
        scope=scope,
    )


def score_node(n: VulnNode, table: FactorTable = DEFAULT_TABLE) -> float:
    n.vulnerability_score = compute_vulnerability_score(
        n.exploitability, n.impact, n.accessibility, n.node_defense_score, table
    )
    return n.vulnerability_score


def score_all_nodes(g: SystemGraph, table: FactorTable = DEFAULT_TABLE) -> SystemGraph:
    for nid in sorted(g.nodes):
        score_node(g.nodes[nid], table)
    return g
