"""Greedy defense placement.

Each round scores a rolling candidate set S of graphs, each differing from the
current graph by one extra defense, picks the candidate with the lowest local
objective, and records it in the history. The recommended defense set is the
history moment with the lowest global objective.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .cvss import DEFAULT_TABLE, FactorTable
from .defenses import Defense, apply_defense
from .distributions import make_rng
from .graph import SystemGraph
from .propagation import DEFAULT_PARAMS, PropagationParams, adversary_score, propagate_from_defense, propagate_scores


@dataclass(frozen=True)
class OptimizerParams:
    max_defenses: int | None = None  # None: no limit beyond the catalog
    opt_halt_value: float = 0.0
    alpha_local: float = 5e-5
    alpha_global: float = 0.00032
    max_set_time: float = 25
    set_size: int | None = None  # None: max(10, ceil(0.05 * devices)), capped by catalog size
    k: int | None = None  # None: number of devices, capped by entry-node count
    seed: int = 0
    per_device_cost: bool = False
    # "corrected": reward larger risk reductions; "printed": the literal subtraction order
    local_orientation: str = "corrected"
    keep_graphs: bool = False
    threads: int = 1

    def __post_init__(self) -> None:
        for name in ("alpha_local", "alpha_global"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.set_size is not None and self.set_size < 1:
            raise ValueError("set_size must be >= 1")
        if self.max_defenses is not None and self.max_defenses < 0:
            raise ValueError("max_defenses must be >= 0")
        if self.local_orientation not in ("corrected", "printed"):
            raise ValueError("local_orientation must be 'corrected' or 'printed'")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    def resolved_k(self, g: SystemGraph) -> int:
        n_entries = len(g.entry_nodes)
        k = self.k if self.k is not None else len(g.devices)
        return max(1, min(k, n_entries))

    def resolved_set_size(self, g: SystemGraph, n_catalog: int) -> int:
        if self.set_size is not None:
            return self.set_size
        return max(1, min(n_catalog, max(10, math.ceil(0.05 * len(g.devices)))))


def local_objective(alpha_local: float, cost: float, adv_prev: float, adv_candidate: float, orientation: str = "corrected") -> float:
    """Lower is better; with the default orientation a bigger risk drop lowers it."""
    delta = adv_candidate - adv_prev if orientation == "corrected" else adv_prev - adv_candidate
    return alpha_local * cost + (1.0 - alpha_local) * delta


def global_objective(alpha_global: float, total_cost: float, adversary: float) -> float:
    return alpha_global * total_cost + (1.0 - alpha_global) * adversary


@dataclass
class DefenseSetEntry:
    defense: Defense
    graph: SystemGraph
    time_in_set: int = 0
    adversary: float = 0.0


@dataclass
class HistoryMoment:
    round: int
    defense: str | None
    defenses: tuple[str, ...]
    total_cost: float
    adversary_score: float
    local_objective: float | None
    global_objective: float
    graph: SystemGraph | None = None


@dataclass
class OptimizationResult:
    history: list[HistoryMoment]
    best: HistoryMoment
    k: int
    set_size: int
    params: OptimizerParams

    @property
    def curve(self) -> list[float]:
        return [m.adversary_score for m in self.history]


@dataclass
class _State:
    available: list[Defense]
    S: list[DefenseSetEntry] = field(default_factory=list)
    rng: np.random.Generator | None = None


class Optimizer:
    """One optimization run; the RNG is consumed only in the serial refresh step."""

    def __init__(
        self,
        g: SystemGraph,
        catalog: Sequence[Defense],
        params: OptimizerParams = OptimizerParams(),
        prop: PropagationParams = DEFAULT_PARAMS,
        table: FactorTable = DEFAULT_TABLE,
    ) -> None:
        if not catalog:
            raise ValueError("empty defense catalog")
        names = [d.name for d in catalog]
        if len(set(names)) != len(names):
            raise ValueError("defense names must be unique")
        self.g = g
        self.catalog = sorted(catalog, key=lambda d: d.name)
        self.params = params
        self.prop = prop
        self.table = table
        self.k = params.resolved_k(g)
        self.set_size = params.resolved_set_size(g, len(self.catalog))

    def _cost(self, d: Defense) -> float:
        return d.effective_cost(self.params.per_device_cost)

    def _with_defense(self, base: SystemGraph, d: Defense) -> DefenseSetEntry:
        new = base.copy()
        seeds = apply_defense(new, d, self.table)
        propagate_from_defense(new, seeds, self.prop)
        return DefenseSetEntry(d, new, 0, adversary_score(new, self.k))

    def _reapply(self, entry: DefenseSetEntry, d: Defense) -> None:
        seeds = apply_defense(entry.graph, d, self.table)
        propagate_from_defense(entry.graph, seeds, self.prop)
        entry.adversary = adversary_score(entry.graph, self.k)

    def _map(self, fn: Callable, items: list) -> list:
        if self.params.threads > 1 and len(items) > 1:
            with ThreadPoolExecutor(max_workers=self.params.threads) as pool:
                return list(pool.map(fn, items))
        return [fn(x) for x in items]

    @staticmethod
    def _riskiest_device(g: SystemGraph) -> str:
        best = {}
        for n in g.nodes.values():
            if n.exploit_score > best.get(n.device_id, -1.0):
                best[n.device_id] = n.exploit_score
        return min(best, key=lambda dev: (-best[dev], dev))

    def refresh(self, chosen: Defense | None, g: SystemGraph, state: _State) -> None:
        """Evict stale entries, re-apply the chosen defense, refill S."""
        keep = []
        for s in state.S:
            if s.time_in_set > self.params.max_set_time:
                state.available.append(s.defense)
            else:
                keep.append(s)
        state.available.sort(key=lambda d: d.name)
        state.S = keep
        if chosen is not None:
            self._map(lambda s: self._reapply(s, chosen), state.S)

        hot = self._riskiest_device(g)
        draws = []
        while len(state.S) + len(draws) < self.set_size and state.available:
            preferred = [d for d in state.available if hot in d.devices]
            pool = preferred or state.available
            d = pool[int(state.rng.integers(len(pool)))]
            state.available.remove(d)
            draws.append(d)
        state.S.extend(self._map(lambda d: self._with_defense(g, d), draws))

    def run(self) -> OptimizationResult:
        p = self.params
        g0 = self.g
        adv0 = adversary_score(g0, self.k)
        base = HistoryMoment(0, None, (), 0.0, adv0, None, global_objective(p.alpha_global, 0.0, adv0), g0 if p.keep_graphs else None)
        history = [base]
        state = _State(available=list(self.catalog), rng=make_rng(p.seed))
        self.refresh(None, g0, state)
        limit = len(self.catalog) if p.max_defenses is None else p.max_defenses
        total = 0.0
        prev = adv0
        chosen_names: list[str] = []
        while state.S and len(history) - 1 < limit and history[-1].global_objective > p.opt_halt_value:
            scored = []
            for s in state.S:
                obj = local_objective(p.alpha_local, self._cost(s.defense), prev, s.adversary, p.local_orientation)
                scored.append((obj, self._cost(s.defense), s.defense.name, s))
                s.time_in_set += 1
            obj, cost, name, win = min(scored, key=lambda t: t[:3])
            total += cost
            chosen_names.append(name)
            prev = win.adversary
            history.append(
                HistoryMoment(
                    round=len(history),
                    defense=name,
                    defenses=tuple(chosen_names),
                    total_cost=total,
                    adversary_score=win.adversary,
                    local_objective=obj,
                    global_objective=global_objective(p.alpha_global, total, win.adversary),
                    graph=win.graph.copy() if p.keep_graphs else None,
                )
            )
            state.S.remove(win)
            self.refresh(win.defense, win.graph, state)
        best = min(history, key=lambda m: (m.global_objective, m.round))
        return OptimizationResult(history, best, self.k, self.set_size, p)


def optimize(
    g: SystemGraph,
    catalog: Sequence[Defense],
    params: OptimizerParams = OptimizerParams(),
    prop: PropagationParams = DEFAULT_PARAMS,
    table: FactorTable = DEFAULT_TABLE,
) -> OptimizationResult:
    """Run the greedy optimization on a scored, propagated graph (left untouched)."""
    return Optimizer(g, catalog, params, prop, table).run()


def replay(
    g: SystemGraph,
    catalog: Iterable[Defense],
    names: Iterable[str],
    prop: PropagationParams = DEFAULT_PARAMS,
    table: FactorTable = DEFAULT_TABLE,
) -> SystemGraph:
    """Re-derive a history moment's graph: apply ``names`` in order and fully re-propagate."""
    by_name = {d.name: d for d in catalog}
    new = g.copy()
    for name in names:
        apply_defense(new, by_name[name], table)
    propagate_scores(new, prop)
    return new
