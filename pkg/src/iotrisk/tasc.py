"""Seeded quasi-random IoT/CPS system generator and curve-consistency tools.

The generator emits an ordinary system-spec document plus a defense catalog,
so anything it produces goes through the same builder as hand-written specs.
"""

from __future__ import annotations

import itertools
import json
import math
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import __version__
from .builder import build_system, parse_system_spec
from .defenses import expand_library
from .distributions import RNG_NAME, make_rng, sample, validate_distribution
from .templates import CATEGORIES, SUBCATEGORY_VALUES, default_master_template, derive_device_template

_SHORT = {
    "sensor": "sensor",
    "actuator": "actuator",
    "local_controller": "controller",
    "router_gateway": "router",
    "user_device": "user",
    "cloud_server": "cloud",
}


class InfeasibleError(ValueError):
    pass


def _default_mix() -> dict[str, float]:
    # smart-home proportions: 3 routers, 4 controllers, 11 sensors/actuators, 5 others out of 23
    return {
        "sensor": 6 / 23,
        "actuator": 5 / 23,
        "local_controller": 4 / 23,
        "router_gateway": 3 / 23,
        "user_device": 3 / 23,
        "cloud_server": 2 / 23,
    }


def _default_subcats() -> dict[str, dict[str, float]]:
    return {
        "updatability": {"updatable": 0.7, "non_updatable": 0.3},
        "network_access": {"local": 0.6, "external": 0.4},
        "comms": {"send": 0.3, "receive": 0.2, "send_and_receive": 0.5},
    }


def _default_links() -> dict[str, float]:
    # probability of an extra local-network link between two devices of these categories
    return {
        "router_gateway-router_gateway": 0.3,
        "user_device-local_controller": 0.5,
        "local_controller-cloud_server": 0.5,
        "local_controller-router_gateway": 0.2,
    }


@dataclass
class GenParams:
    seed: int = 0
    n_devices: int = 23
    category_mix: dict[str, float] = field(default_factory=_default_mix)
    subcategory_probs: dict[str, dict[str, float]] = field(default_factory=_default_subcats)
    link_probs: dict[str, float] = field(default_factory=_default_links)
    permission_prob: float = 0.5
    general_permission_prob: float = 0.2
    impact: dict[str, dict] = field(
        default_factory=lambda: {"default": {"family": "categorical", "values": [0.0, 0.2, 0.56], "weights": [2, 5, 1]}}
    )
    accessibility: dict = field(default_factory=lambda: {"family": "categorical", "values": [0.0, 0.4, 0.6, 0.8], "weights": [1, 4, 2, 1]})
    defense_cost: dict = field(default_factory=lambda: {"family": "categorical", "values": [1.0, 2.0, 3.0, 4.0]})
    defense_density: float = 6.0

    def validate(self) -> None:
        problems = []
        if self.n_devices < 1:
            problems.append("n_devices must be >= 1")
        unknown = set(self.category_mix) - set(CATEGORIES)
        if unknown:
            problems.append(f"unknown categories in mix: {sorted(unknown)}")
        if any(v < 0 for v in self.category_mix.values()) or not math.isclose(sum(self.category_mix.values()), 1.0, abs_tol=1e-9):
            problems.append("category_mix proportions must be >= 0 and sum to 1")
        for key, allowed in SUBCATEGORY_VALUES.items():
            probs = self.subcategory_probs.get(key, {})
            if set(probs) - set(allowed) or not math.isclose(sum(probs.values()), 1.0, abs_tol=1e-9):
                problems.append(f"subcategory_probs.{key} must cover {allowed} and sum to 1")
        for name, p in [("permission_prob", self.permission_prob), ("general_permission_prob", self.general_permission_prob), *self.link_probs.items()]:
            if not 0.0 <= p <= 1.0:
                problems.append(f"probability {name} = {p} outside [0, 1]")
        for name, dist in [*(("impact." + k, v) for k, v in self.impact.items()), ("accessibility", self.accessibility), ("defense_cost", self.defense_cost)]:
            try:
                validate_distribution(dist)
            except (KeyError, ValueError) as exc:
                problems.append(f"{name}: {exc}")
        if "default" not in self.impact:
            problems.append("impact needs a 'default' distribution")
        if self.defense_density < 0:
            problems.append("defense_density must be >= 0")
        if problems:
            raise ValueError("; ".join(problems))

    @classmethod
    def load(cls, source: str | Path | Mapping) -> "GenParams":
        if not isinstance(source, Mapping):
            source = json.loads(Path(source).read_text(encoding="utf-8"))
        known = {f for f in cls.__dataclass_fields__}
        extra = set(source) - known
        if extra:
            raise ValueError(f"unknown GenParams field(s): {sorted(extra)}")
        p = cls(**source)
        p.validate()
        return p

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def category_counts(n: int, mix: Mapping[str, float]) -> dict[str, int]:
    """Largest-remainder apportionment of ``n`` devices over the category mix."""
    quotas = {c: n * mix.get(c, 0.0) for c in CATEGORIES}
    counts = {c: int(math.floor(q)) for c, q in quotas.items()}
    left = n - sum(counts.values())
    order = sorted(CATEGORIES, key=lambda c: (-(quotas[c] - counts[c]), CATEGORIES.index(c)))
    for c in order[:left]:
        counts[c] += 1
    return counts


def _pick(rng, probs: Mapping[str, float], allowed: Sequence[str]) -> str:
    weights = [probs.get(v, 0.0) for v in allowed]
    total = sum(weights)
    i = int(rng.choice(len(allowed), p=[w / total for w in weights]))
    return allowed[i]


def generate_system(p: GenParams, with_catalog: bool = True) -> tuple[dict, list[dict]]:
    """Return (system-spec document, defense catalog records); pure in ``p``.

    The catalog is drawn after the spec, so skipping it leaves the spec unchanged.
    """
    p.validate()
    rng = make_rng(p.seed)
    counts = category_counts(p.n_devices, p.category_mix)
    if p.n_devices > 1 and counts["router_gateway"] == 0:
        raise InfeasibleError(
            f"category mix gives 0 routers for {p.n_devices} devices; connecting devices needs at least one router"
        )
    names: dict[str, list[str]] = {}
    devices: dict[str, dict] = {}
    for cat in CATEGORIES:
        names[cat] = [f"{_SHORT[cat]}-{i:02d}" for i in range(counts[cat])]
        for name in names[cat]:
            sub = {key: _pick(rng, p.subcategory_probs[key], allowed) for key, allowed in SUBCATEGORY_VALUES.items()}
            if cat in ("router_gateway", "cloud_server") and name.endswith("-00"):
                sub["network_access"] = "external"
            devices[name] = {"name": name, "category": cat, "subcategory": sub, "local_network": []}

    links: set[tuple[str, str]] = set()

    def link(a: str, b: str) -> None:
        if a != b:
            links.add((min(a, b), max(a, b)))

    routers = names["router_gateway"]
    # only a single-device system can lack routers (checked above)
    if routers:
        for i, r in enumerate(routers[1:], start=1):
            link(r, routers[int(rng.integers(i))])
        for c in names["local_controller"]:
            link(c, routers[int(rng.integers(len(routers)))])
        hubs = names["local_controller"] or routers
        for cat in ("sensor", "actuator"):
            for d in names[cat]:
                link(d, hubs[int(rng.integers(len(hubs)))])
        for cat in ("user_device", "cloud_server"):
            for d in names[cat]:
                link(d, routers[int(rng.integers(len(routers)))])
    for pair, prob in sorted(p.link_probs.items()):
        a_cat, b_cat = pair.split("-")
        for a, b in itertools.product(names.get(a_cat, []), names.get(b_cat, [])):
            if a < b or a_cat != b_cat:
                if rng.random() < prob:
                    link(a, b)
    for a, b in sorted(links):
        devices[a]["local_network"].append(b)

    # permission grants: (holder category, target category, type, permission name)
    grant_kinds = [
        ("user_device", "local_controller", "login_permissions", "owner"),
        ("user_device", "router_gateway", "login_permissions", "admin"),
        ("local_controller", "router_gateway", "login_permissions", "service"),
        ("local_controller", "cloud_server", "login_permissions", "account"),
        ("local_controller", "sensor", "execute_permissions", "control"),
        ("local_controller", "actuator", "execute_permissions", "control"),
        ("user_device", "user_device", "execute_permissions", "owner"),
    ]
    for h_cat, t_cat, field_name, perm in grant_kinds:
        for target in names[t_cat]:
            holders = [h for h in names[h_cat] if h != target and rng.random() < p.permission_prob]
            if holders:
                devices[target].setdefault(field_name, []).append({"permission": perm, "devices": holders})
    for cat in ("sensor", "actuator"):
        for d in names[cat]:
            if rng.random() < p.general_permission_prob:
                devices[d]["general_permissions"] = True

    master = default_master_template()
    for name, d in devices.items():
        t = derive_device_template(master, d["category"], d["subcategory"])
        impact = {}
        for fname in ("confidentiality", "integrity", "availability"):
            impact[fname] = {
                slug: round(sample(p.impact.get(slug, p.impact["default"]), rng), 6) for slug in t.goal_slugs
            }
        d["impact"] = impact
        d["accessibility"] = {slug: round(sample(p.accessibility, rng), 6) for slug in t.entry_slugs}

    spec = {
        "devices": [devices[n] for n in sorted(devices)],
        "parameters": {
            "generator": {"engine_version": __version__, "rng": RNG_NAME, "seed": p.seed, "params": p.to_dict()},
        },
    }
    catalog = _generate_catalog(spec, p, rng) if with_catalog else []
    return spec, catalog


def _generate_catalog(spec: dict, p: GenParams, rng) -> list[dict]:
    g = build_system(parse_system_spec(spec))
    fitting: dict[str, list] = {}
    for d in expand_library(g):
        fitting.setdefault(d.devices[0], []).append(d)
    out = []
    for dev in sorted(fitting):
        options = sorted(fitting[dev], key=lambda d: d.name)
        whole = int(p.defense_density)
        n = whole + (1 if rng.random() < p.defense_density - whole else 0)
        n = min(n, len(options))
        picks = sorted(rng.choice(len(options), size=n, replace=False).tolist()) if n else []
        for i in picks:
            rec = options[i].to_dict()
            rec["cost"] = round(sample(p.defense_cost, rng), 6)
            if rec["cost"] <= 0:
                rec["cost"] = 1.0
            out.append(rec)
    return out


# -- curve comparison ------------------------------------------------------------


def noise_metric(curve: Sequence[float]) -> float:
    """Population standard deviation of successive differences (0 for < 2 steps)."""
    diffs = [b - a for a, b in zip(curve, curve[1:])]
    return statistics.pstdev(diffs) if len(diffs) >= 2 else 0.0


def _pad(curves: Sequence[Sequence[float]]) -> list[list[float]]:
    n = max(len(c) for c in curves)
    return [list(c) + [c[-1]] * (n - len(c)) for c in curves]


def compare_optimization_curves(curves: Sequence[Sequence[float]], threshold: float = 0.1) -> dict[str, Any]:
    """Pairwise max deviation, terminal spread and per-curve noise.

    Shorter curves are padded with their terminal value.
    """
    if len(curves) < 2:
        raise ValueError("need at least two curves")
    if any(len(c) == 0 for c in curves):
        raise ValueError("empty curve")
    padded = _pad(curves)
    pairwise = []
    for i, j in itertools.combinations(range(len(padded)), 2):
        dev = max(abs(a - b) for a, b in zip(padded[i], padded[j]))
        pairwise.append({"pair": [i, j], "max_deviation": dev})
    terminals = [c[-1] for c in padded]
    mean_t = statistics.fmean(terminals)
    spread = max(terminals) - min(terminals)
    return {
        "rounds": len(padded[0]),
        "pairwise": pairwise,
        "max_deviation": max(p["max_deviation"] for p in pairwise),
        "terminal_scores": terminals,
        "terminal_spread": spread,
        "mean_terminal_deviation": statistics.fmean(abs(t - mean_t) for t in terminals),
        "noise": [noise_metric(c) for c in curves],
        "threshold": threshold,
        "consistent": spread <= threshold,
    }
