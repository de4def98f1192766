"""JSON encoding with fixed six-decimal floats, and graph (de)serialization."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

from .graph import (
    AttackVector,
    DeviceGraph,
    ExploitEdge,
    Exploitability,
    Impact,
    NodeKind,
    SystemGraph,
    VulnNode,
)

GRAPH_FORMAT = "iotrisk.graph/1"


def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"cannot encode non-finite number {x!r}")
    s = f"{x:.6f}"
    return "0.000000" if s == "-0.000000" else s


def dumps(obj: Any, indent: int = 1) -> str:
    """Deterministic JSON: insertion-ordered keys, every float as %.6f."""
    out: list[str] = []

    def enc(o: Any, level: int) -> None:
        pad = "\n" + " " * (indent * (level + 1))
        end = "\n" + " " * (indent * level)
        if isinstance(o, bool) or o is None or isinstance(o, str):
            out.append(json.dumps(o))
        elif isinstance(o, int):
            out.append(str(o))
        elif isinstance(o, float):
            out.append(_fmt_float(o))
        elif isinstance(o, dict):
            if not o:
                out.append("{}")
                return
            out.append("{")
            for i, (k, v) in enumerate(o.items()):
                out.append(("," if i else "") + pad + json.dumps(str(k)) + ": ")
                enc(v, level + 1)
            out.append(end + "}")
        elif isinstance(o, (list, tuple)):
            if not o:
                out.append("[]")
                return
            out.append("[")
            for i, v in enumerate(o):
                out.append(("," if i else "") + pad)
                enc(v, level + 1)
            out.append(end + "]")
        else:
            raise TypeError(f"cannot encode {type(o).__name__}")

    enc(obj, 0)
    return "".join(out) + "\n"


def write(path: str | Path, obj: Any) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8")


# -- graphs -------------------------------------------------------------------


def _node_dict(n: VulnNode) -> dict[str, Any]:
    return {
        "id": n.id,
        "label": n.label,
        "kind": n.kind.value,
        "device_id": n.device_id,
        "slug": n.slug,
        "permission": n.permission,
        "exploitability": n.exploitability.to_dict(),
        "impact": n.impact.to_dict(),
        "accessibility": float(n.accessibility),
        "node_defense_score": float(n.node_defense_score),
        "vulnerability_score": float(n.vulnerability_score),
        "exploit_score": float(n.exploit_score),
        "exp_avg": float(n.exp_avg),
        "vector_hint": n.vector_hint.value if n.vector_hint else None,
    }


def _edge_dict(e: ExploitEdge) -> dict[str, Any]:
    return {"from": e.source, "to": e.target, "edge_defense_score": float(e.edge_defense_score), "predicted": e.predicted}


def graph_to_dict(g: SystemGraph) -> dict[str, Any]:
    devices = []
    for dev_id in sorted(g.devices):
        d = g.devices[dev_id]
        devices.append(
            {
                "id": d.device_id,
                "name": d.name,
                "category": d.category,
                "subcategories": dict(d.subcategories),
                "device_set": d.device_set,
                "nodes": [_node_dict(d.nodes[n]) for n in sorted(d.nodes)],
                "edges": [_edge_dict(e) for e in sorted(d.edges, key=lambda e: e.key)],
            }
        )
    return {
        "format": GRAPH_FORMAT,
        "provenance": _plain(g.provenance),
        "applied_defenses": list(g.applied_defenses),
        "devices": devices,
        "inter_edges": [_edge_dict(e) for e in sorted(g.inter_edges, key=lambda e: e.key)],
    }


def _plain(o: Any) -> Any:
    if isinstance(o, dict):
        return {str(k): _plain(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_plain(v) for v in o]
    if isinstance(o, float) and not math.isfinite(o):
        return None
    return o


def _node_from(raw: dict[str, Any]) -> VulnNode:
    imp = raw.get("impact", {})
    hint = raw.get("vector_hint")
    return VulnNode(
        id=raw["id"],
        label=raw["label"],
        kind=NodeKind(raw["kind"]),
        device_id=raw["device_id"],
        slug=raw["slug"],
        permission=raw.get("permission"),
        exploitability=Exploitability.from_dict(raw.get("exploitability", {})),
        impact=Impact(float(imp.get("confidentiality", 0)), float(imp.get("integrity", 0)), float(imp.get("availability", 0))),
        accessibility=float(raw.get("accessibility", 0)),
        node_defense_score=float(raw.get("node_defense_score", 1)),
        vulnerability_score=float(raw.get("vulnerability_score", 0)),
        exploit_score=float(raw.get("exploit_score", 0)),
        exp_avg=float(raw.get("exp_avg", 0)),
        vector_hint=AttackVector(hint) if hint else None,
    )


def _edge_from(raw: dict[str, Any]) -> ExploitEdge:
    return ExploitEdge(raw["from"], raw["to"], float(raw.get("edge_defense_score", 1)), bool(raw.get("predicted", False)))


def graph_from_dict(doc: dict[str, Any]) -> SystemGraph:
    if doc.get("format") != GRAPH_FORMAT:
        raise ValueError(f"not a serialized graph (format {doc.get('format')!r})")
    g = SystemGraph(applied_defenses=doc.get("applied_defenses", []), provenance=doc.get("provenance", {}))
    for rd in doc["devices"]:
        d = DeviceGraph(
            device_id=rd["id"],
            name=rd.get("name", rd["id"]),
            category=rd["category"],
            subcategories=dict(rd.get("subcategories", {})),
            device_set=rd.get("device_set"),
        )
        for rn in rd["nodes"]:
            d.add_node(_node_from(rn))
        d.edges = [_edge_from(re) for re in rd["edges"]]
        g.add_device(d)
    for re in doc.get("inter_edges", []):
        g.add_inter_edge(_edge_from(re))
    g.sort_edges()
    return g


def dumps_graph(g: SystemGraph) -> str:
    return dumps(graph_to_dict(g))


def loads_graph(text: str) -> SystemGraph:
    return graph_from_dict(json.loads(text))
