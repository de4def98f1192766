"""Exploit-risk propagation over a (possibly cyclic) system graph.

Each node's exploit score is a squashed probabilistic union of its children's
exploit scores, scaled by its own vulnerability score. Scores are swept in
reverse breadth-first order from the exploit goals, repeatedly, until the
entry-node scores settle against their exponential moving averages.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable

from .graph import SystemGraph, VulnNode


@dataclass(frozen=True)
class PropagationParams:
    sum_ratio: float = 1e-5
    exp_weight: float = 0.1
    max_cycle: int = 100
    activation_base: float = 7.0
    # "debiased": the moving average is seeded by the first score of the run
    # (weight w / (1 - (1-w)^c) in cycle c); "zero": plain EMA from 0
    ema_init: str = "debiased"

    def __post_init__(self) -> None:
        if not self.sum_ratio > 0:
            raise ValueError("sum_ratio must be > 0")
        if not 0 < self.exp_weight <= 1:
            raise ValueError("exp_weight must be in (0, 1]")
        if self.max_cycle < 1:
            raise ValueError("max_cycle must be >= 1")
        if not self.activation_base > 1:
            raise ValueError("activation_base must be > 1")
        if self.ema_init not in ("debiased", "zero"):
            raise ValueError("ema_init must be 'debiased' or 'zero'")


DEFAULT_PARAMS = PropagationParams()


def activation(union: float, base: float = 7.0) -> float:
    score = 1.0 - base ** (-union)
    return min(max(score, 0.0), 1.0)


def calculate_exploit_score(n: VulnNode, g: SystemGraph, params: PropagationParams = DEFAULT_PARAMS) -> float:
    """Score one node from its children's current exploit scores.

    A goal with no children takes its vulnerability score directly, which is
    what seeds the propagation with impact.
    """
    edges = g.out_edges(n.id)
    if not edges:
        return n.vulnerability_score if n.is_goal else 0.0
    miss = 1.0
    for e in edges:
        miss *= 1.0 - g.nodes[e.target].exploit_score * e.edge_defense_score
    return activation(n.vulnerability_score * (1.0 - miss), params.activation_base)


class Topology:
    """Integer-indexed structure of a graph, shared by its copies.

    Only structure lives here; vulnerability scores and edge multipliers are
    read from the graph on every run.
    """

    __slots__ = ("ids", "index", "is_goal", "is_entry", "children", "parents", "n_entries")

    def __init__(self, g: SystemGraph) -> None:
        self.ids = sorted(g.nodes)
        self.index = {nid: i for i, nid in enumerate(self.ids)}
        idx = self.index
        self.is_goal = [g.nodes[nid].is_goal for nid in self.ids]
        self.is_entry = [g.nodes[nid].is_entry for nid in self.ids]
        self.n_entries = sum(self.is_entry)
        # children as (child index, position in g.iter_edges()) sorted by child id
        self.children: list[list[tuple[int, int]]] = [[] for _ in self.ids]
        self.parents: list[list[int]] = [[] for _ in self.ids]
        for pos, e in enumerate(g.iter_edges()):
            self.children[idx[e.source]].append((idx[e.target], pos))
            self.parents[idx[e.target]].append(idx[e.source])
        for lst in self.children:
            lst.sort()
        for lst in self.parents:
            lst.sort()

    @classmethod
    def of(cls, g: SystemGraph) -> "Topology":
        if g.topology_cache is None:
            g.topology_cache = cls(g)
        return g.topology_cache

    def sweep_order(self, seeds: list[int]) -> list[int]:
        # dequeued order of a queue that skips already-visited nodes
        visited = [False] * len(self.ids)
        order = []
        queue = deque(seeds)
        while queue:
            i = queue.popleft()
            if visited[i]:
                continue
            visited[i] = True
            order.append(i)
            for p in self.parents[i]:
                if not visited[p]:
                    queue.append(p)
        return order


def _run(g: SystemGraph, topo: Topology, order: list[int], params: PropagationParams, fresh: bool) -> int:
    nodes = [g.nodes[topo.ids[i]] for i in order]
    score = [0.0] * len(topo.ids)
    avg = [0.0] * len(topo.ids)
    all_nodes = g.nodes
    for nid, i in topo.index.items():
        n = all_nodes[nid]
        score[i] = n.exploit_score
        avg[i] = n.exp_avg
    edef = [e.edge_defense_score for e in g.iter_edges()]
    # per visited node: (index, vuln, [(child, multiplier)], is_goal, is_entry)
    plan = [
        (i, n.vulnerability_score, [(c, edef[pos]) for c, pos in topo.children[i]], topo.is_goal[i], topo.is_entry[i])
        for i, n in zip(order, nodes)
    ]
    w = params.exp_weight
    base = params.activation_base
    n_entries = topo.n_entries
    # average_sum starts at |A| so the first cycle always runs
    average_sum = float(n_entries)
    count = 0
    denom = max(n_entries, 1)
    # besides the entry test, a cycle that still moved some node by more than
    # sum_ratio is never the last: entries can sit at 0 while scores are
    # still travelling towards them
    moved = math.inf
    while count == 0 or ((average_sum / denom > params.sum_ratio or moved > params.sum_ratio) and count < params.max_cycle):
        average_sum = 0.0
        moved = 0.0
        if fresh and params.ema_init == "debiased":
            w = params.exp_weight / (1.0 - (1.0 - params.exp_weight) ** (count + 1))
        for i, vuln, kids, goal, entry in plan:
            if kids:
                miss = 1.0
                for c, d in kids:
                    miss *= 1.0 - score[c] * d
                s = 1.0 - base ** (-(vuln * (1.0 - miss)))
                s = 0.0 if s < 0.0 else (1.0 if s > 1.0 else s)
            else:
                s = vuln if goal else 0.0
            d = s - score[i]
            if d > moved or -d > moved:
                moved = abs(d)
            score[i] = s
            if entry:
                average_sum += abs(s - avg[i])
            avg[i] = w * s + (1.0 - w) * avg[i]
        count += 1
    for i, n in zip(order, nodes):
        n.exploit_score = score[i]
        n.exp_avg = avg[i]
    return count


def propagate_scores(g: SystemGraph, params: PropagationParams = DEFAULT_PARAMS) -> tuple[SystemGraph, int]:
    """Full propagation from the exploit goals; returns (g, cycles used).

    Exploit scores and moving averages restart from zero. Hitting
    ``params.max_cycle`` means the convergence test never fired.
    """
    for n in g.nodes.values():
        n.exploit_score = 0.0
        n.exp_avg = 0.0
    if not g.nodes:
        return g, 0
    topo = Topology.of(g)
    seeds = [i for i, goal in enumerate(topo.is_goal) if goal]
    cycles = _run(g, topo, topo.sweep_order(seeds), params, fresh=True)
    return g, cycles


def propagate_from_defense(
    g: SystemGraph,
    affected: Iterable[str],
    params: PropagationParams = DEFAULT_PARAMS,
) -> tuple[SystemGraph, int]:
    """Re-propagate after a defense touched ``affected`` node ids.

    For edge updates pass the edge's source node. Only the affected nodes and
    their ancestors are swept; current scores and moving averages carry over,
    so the average is not re-seeded. Swept nodes that can no longer reach a
    goal are reset to 0 first, which keeps the result on the same fixed point
    a full propagation from zero reaches.
    """
    affected = sorted(set(affected))
    if not affected:
        return g, 0
    topo = Topology.of(g)
    seeds = [topo.index[a] for a in affected]
    order = topo.sweep_order(seeds)
    live = _live(g, topo)
    for i in order:
        if not live[i]:
            # cut off from every goal: the true score is 0, but a cycle would
            # otherwise hold on to its old, self-sustaining value
            n = g.nodes[topo.ids[i]]
            n.exploit_score = 0.0
            n.exp_avg = 0.0
    cycles = _run(g, topo, order, params, fresh=False)
    return g, cycles


def _live(g: SystemGraph, topo: Topology) -> list[bool]:
    """Nodes with a path of positive vulnerability and multipliers to a scoring goal."""
    nodes = [g.nodes[nid] for nid in topo.ids]
    edef = [e.edge_defense_score for e in g.iter_edges()]
    live = [False] * len(nodes)
    queue = deque()
    for i, n in enumerate(nodes):
        if topo.is_goal[i] and not topo.children[i] and n.vulnerability_score > 0:
            live[i] = True
            queue.append(i)
    while queue:
        c = queue.popleft()
        for p in topo.parents[c]:
            if live[p] or not nodes[p].vulnerability_score > 0:
                continue
            if any(child == c and edef[pos] > 0 for child, pos in topo.children[p]):
                live[p] = True
                queue.append(p)
    return live


def entry_scores(g: SystemGraph) -> list[float]:
    return [g.nodes[n].exploit_score for n in g.entry_nodes]


def adversary_score(g: SystemGraph, k: int) -> float:
    """Mean of the k highest entry-node exploit scores."""
    scores = sorted(entry_scores(g), reverse=True)
    if not 1 <= k <= len(scores):
        raise ValueError(f"k = {k} outside 1..{len(scores)}")
    return math.fsum(scores[:k]) / k
