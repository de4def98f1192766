"""Best-first extraction of the riskiest entry-to-goal exploit chains."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable, Iterable

from .graph import Impact, SystemGraph


@dataclass(frozen=True)
class ExploitChain:
    nodes: tuple[str, ...]
    risk: float
    impact: Impact

    @property
    def devices(self) -> list[str]:
        out: list[str] = []
        for nid in self.nodes:
            dev = nid.split("/", 1)[0]
            if not out or out[-1] != dev:
                out.append(dev)
        return out


def chain_risk(g: SystemGraph, nodes: Iterable[str]) -> float:
    """Product of node vulnerability scores and the edge multipliers between them."""
    nodes = list(nodes)
    risk = 1.0
    for a, b in zip(nodes, nodes[1:]):
        risk *= g.nodes[a].vulnerability_score * g.edge(a, b).edge_defense_score
    return risk * g.nodes[nodes[-1]].vulnerability_score


def extract_top_exploit_chains(
    g: SystemGraph,
    m: int,
    max_len: int = 25,
    *,
    sources: Iterable[str] | None = None,
    accept: Callable[[str], bool] | None = None,
    path_filter: Callable[[tuple[str, ...]], bool] | None = None,
    max_expansions: int = 2_000_000,
) -> list[ExploitChain]:
    """The ``m`` highest-risk simple paths from an entry node to an exploit goal.

    Searches in order of -log(risk); since every factor is at most 1 the cost
    never decreases along a path, so complete paths pop in final order. Ties
    are broken by the node-id sequence. ``sources`` restricts the start nodes
    and ``accept`` filters which goal nodes end a chain; ``path_filter`` vets
    a complete chain before it is reported.
    """
    if m <= 0:
        return []
    starts = sorted(sources) if sources is not None else g.entry_nodes
    heap: list[tuple[float, tuple[str, ...]]] = []

    def cost_of(x: float) -> float:
        return -math.log(x) if x > 0 else math.inf

    for s in starts:
        v = g.nodes[s].vulnerability_score
        if v > 0:
            heap.append((cost_of(v), (s,)))
    heapq.heapify(heap)
    found: list[ExploitChain] = []
    expansions = 0
    while heap and len(found) < m and expansions < max_expansions:
        cost, path = heapq.heappop(heap)
        expansions += 1
        last = path[-1]
        node = g.nodes[last]
        if node.is_goal and (accept is None or accept(last)) and (path_filter is None or path_filter(path)):
            found.append(ExploitChain(path, chain_risk(g, path), node.impact))
        if len(path) >= max_len:
            continue
        on_path = set(path)
        for e in g.out_edges(last):
            if e.target in on_path:
                continue
            step = e.edge_defense_score * g.nodes[e.target].vulnerability_score
            if step <= 0:
                continue
            heapq.heappush(heap, (cost - math.log(step), path + (e.target,)))
    return found
