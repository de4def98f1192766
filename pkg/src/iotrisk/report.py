"""Weakest-link reports and optimization-curve documents."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Any

from . import __version__
from .chains import ExploitChain, extract_top_exploit_chains
from .graph import SystemGraph
from .optimizer import OptimizationResult
from .propagation import adversary_score

CURVE_HEADER = ("round", "defense", "total_cost", "adversary_score", "local_obj", "global_obj", "is_optimal")


@dataclass
class NodeRow:
    device: str
    node_id: str
    label: str
    kind: str
    score: float


@dataclass
class RiskReport:
    top_nodes: list[NodeRow]
    chains: list[ExploitChain]
    adversary_score: float
    k: int
    device_max: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "adversary_score": self.adversary_score,
            "k": self.k,
            "top_nodes": [
                {"device": r.device, "node": r.node_id, "label": r.label, "kind": r.kind, "exploit_score": r.score}
                for r in self.top_nodes
            ],
            "chains": [
                {"nodes": list(c.nodes), "devices": c.devices, "risk": c.risk, "impact": c.impact.to_dict()} for c in self.chains
            ],
            "device_max": dict(self.device_max),
        }


def weakest_link_report(g: SystemGraph, m: int, k: int | None = None, n_chains: int = 0, max_len: int = 25) -> RiskReport:
    """Top-``m`` nodes by exploit score (any kind), plus optional top chains."""
    ranked = sorted(g.nodes.values(), key=lambda n: (-n.exploit_score, n.id))[:m]
    rows = [NodeRow(n.device_id, n.id, n.label, n.kind.value, n.exploit_score) for n in ranked]
    device_max: dict[str, float] = {}
    for n in g.nodes.values():
        device_max[n.device_id] = max(device_max.get(n.device_id, 0.0), n.exploit_score)
    n_entries = len(g.entry_nodes)
    if k is None:
        k = len(g.devices)
    k = max(1, min(k, n_entries)) if n_entries else 0
    adv = adversary_score(g, k) if k else 0.0
    chains = extract_top_exploit_chains(g, n_chains, max_len) if n_chains else []
    return RiskReport(rows, chains, adv, k, {d: device_max[d] for d in sorted(device_max)})


def emit_curve_data(result: OptimizationResult, provenance: dict[str, Any] | None = None) -> dict[str, Any]:
    """Per-round rows plus a final marker row for the recommended moment."""
    best = result.best
    rows = []
    for h in result.history:
        rows.append(
            {
                "round": h.round,
                "defense": h.defense or "",
                "total_cost": h.total_cost,
                "adversary_score": h.adversary_score,
                "local_obj": h.local_objective,
                "global_obj": h.global_objective,
                "is_optimal": h.round == best.round,
            }
        )
    rows.append(
        {
            "round": "h_best",
            "defense": best.defense or "",
            "total_cost": best.total_cost,
            "adversary_score": best.adversary_score,
            "local_obj": best.local_objective,
            "global_obj": best.global_objective,
            "is_optimal": True,
        }
    )
    p = result.params
    return {
        "provenance": {"engine_version": __version__, **(provenance or {})},
        "parameters": {
            "alpha_local": p.alpha_local,
            "alpha_global": p.alpha_global,
            "k": result.k,
            "set_size": result.set_size,
            "max_set_time": p.max_set_time if p.max_set_time != float("inf") else None,
            "max_defenses": p.max_defenses,
            "opt_halt_value": p.opt_halt_value,
            "seed": p.seed,
            "per_device_cost": p.per_device_cost,
            "local_orientation": p.local_orientation,
        },
        "rows": rows,
        "recommended": {"round": best.round, "defenses": list(best.defenses), "total_cost": best.total_cost,
                        "adversary_score": best.adversary_score, "global_obj": best.global_objective},
    }


def curve_csv(doc: dict[str, Any]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_HEADER)
    for r in doc["rows"]:
        w.writerow(
            [
                r["round"],
                r["defense"],
                f"{r['total_cost']:.6f}",
                f"{r['adversary_score']:.6f}",
                "" if r["local_obj"] is None else f"{r['local_obj']:.6f}",
                f"{r['global_obj']:.6f}",
                int(r["is_optimal"]),
            ]
        )
    return buf.getvalue()
