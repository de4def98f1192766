"""Command-line interface.

Exit status: 0 success, 1 bad input, 2 internal error. Graph-consuming
commands also accept a system spec, which is built (and scored) on the fly.
Paths of the form ``builtin:<name>`` refer to the data files shipped with
the package (for example ``builtin:smart_home.json``).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .builder import SpecError, build_system, parse_system_spec
from .cvss import DEFAULT_TABLE, FactorTable, score_all_nodes
from .defenses import CatalogError, expand_library, load_catalog
from .graph import validate_device_graph
from .optimizer import OptimizerParams, optimize
from .propagation import PropagationParams, adversary_score, propagate_scores
from .report import curve_csv, emit_curve_data, weakest_link_report
from .serialize import GRAPH_FORMAT, dumps, graph_from_dict, graph_to_dict
from .tasc import GenParams, InfeasibleError, generate_system
from .templates import TemplateError, default_master_template, load_master_template

log = logging.getLogger("iotrisk")


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # usage problems are input errors
        raise InputError(message)


def _read_json(path: str) -> Any:
    try:
        if path.startswith("builtin:"):
            text = resources.files("iotrisk.data").joinpath(path.split(":", 1)[1]).read_text(encoding="utf-8")
        elif path == "-":
            text = sys.stdin.read()
        else:
            text = Path(path).read_text(encoding="utf-8")
        return json.loads(text)
    except (OSError, FileNotFoundError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from None


def _table(args: argparse.Namespace) -> FactorTable:
    if getattr(args, "factors", None):
        try:
            return FactorTable.load(args.factors)
        except (KeyError, ValueError, OSError) as exc:
            raise InputError(f"factor file: {exc}") from None
    return DEFAULT_TABLE


def _prop(args: argparse.Namespace) -> PropagationParams:
    try:
        return PropagationParams(sum_ratio=args.sum_ratio, exp_weight=args.exp_weight, max_cycle=args.max_cycle)
    except ValueError as exc:
        raise InputError(f"propagation parameters: {exc}") from None


def _load_graph(args: argparse.Namespace, *, scored: bool = True, propagated: bool = False):
    doc = _read_json(args.input)
    table = _table(args)
    if isinstance(doc, dict) and doc.get("format") == GRAPH_FORMAT:
        try:
            g = graph_from_dict(doc)
        except (KeyError, ValueError) as exc:
            raise InputError(f"bad graph file: {exc}") from None
        fresh = False
    else:
        g = build_system(parse_system_spec(doc, table), table=table)
        fresh = True
    if fresh and scored:
        score_all_nodes(g, table)
    if propagated and (fresh or all(n.exploit_score == 0 for n in g.nodes.values())):
        _, cycles = propagate_scores(g, _prop(args))
        g.provenance["propagation_cycles"] = cycles
    return g, table


def _emit(args: argparse.Namespace, doc: Any) -> None:
    text = dumps(doc)
    if getattr(args, "output", None):
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _k(args: argparse.Namespace, g) -> int:
    n = len(g.entry_nodes)
    k = args.k if args.k is not None else len(g.devices)
    if not 1 <= k <= n:
        raise InputError(f"--k {k} outside 1..{n} (entry nodes)")
    return k


# -- commands --------------------------------------------------------------------


def cmd_build(args: argparse.Namespace) -> int:
    table = _table(args)
    spec = parse_system_spec(_read_json(args.input), table)
    master = load_master_template(_read_json(args.template)) if args.template else None
    g = build_system(spec, master, table)
    _emit(args, graph_to_dict(g))
    return 0


def cmd_score(args: argparse.Namespace) -> int:
    g, table = _load_graph(args, scored=False)
    score_all_nodes(g, table)
    _emit(args, graph_to_dict(g))
    return 0


def cmd_propagate(args: argparse.Namespace) -> int:
    g, table = _load_graph(args)
    if all(n.vulnerability_score == 0 for n in g.nodes.values()):
        score_all_nodes(g, table)
    _, cycles = propagate_scores(g, _prop(args))
    g.provenance["propagation_cycles"] = cycles
    g.provenance["propagation"] = {"sum_ratio": args.sum_ratio, "exp_weight": args.exp_weight, "max_cycle": args.max_cycle}
    k = _k(args, g)
    adv = adversary_score(g, k)
    if args.json:
        _emit(args, {"cycles": cycles, "converged": cycles < args.max_cycle, "k": k, "adversary_score": adv})
    else:
        _emit(args, graph_to_dict(g))
        print(f"cycles={cycles} adversary_score(k={k})={adv:.6f}", file=sys.stderr)
    return 0


def cmd_optimize(args: argparse.Namespace) -> int:
    g, table = _load_graph(args, propagated=True)
    if args.catalog:
        catalog = load_catalog(_read_json(args.catalog), g, table)
    else:
        catalog = expand_library(g, table=table)
    if not catalog:
        raise InputError("defense catalog is empty")
    try:
        params = OptimizerParams(
            max_defenses=args.max_defenses,
            opt_halt_value=args.opt_halt_value,
            alpha_local=args.alpha_local,
            alpha_global=args.alpha_global,
            max_set_time=args.max_set_time,
            set_size=args.set_size,
            k=_k(args, g),
            seed=args.seed,
            per_device_cost=args.per_device_cost,
            threads=args.threads,
        )
    except ValueError as exc:
        raise InputError(f"optimizer parameters: {exc}") from None
    result = optimize(g, catalog, params, _prop(args), table)
    prov = {
        "template_version": g.provenance.get("template_version"),
        "seed": args.seed,
        "catalog_size": len(catalog),
        "propagation": {"sum_ratio": args.sum_ratio, "exp_weight": args.exp_weight, "max_cycle": args.max_cycle},
    }
    doc = emit_curve_data(result, prov)
    if args.csv:
        Path(args.csv).write_text(curve_csv(doc), encoding="utf-8")
    _emit(args, doc)
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    g, _ = _load_graph(args, propagated=True)
    rep = weakest_link_report(g, args.top, _k(args, g), n_chains=args.chains, max_len=args.max_len)
    if args.json:
        _emit(args, rep.to_dict())
        return 0
    lines = [f"adversary score (k={rep.k}): {rep.adversary_score:.6f}", "", "rank  score     device / vulnerability"]
    for i, r in enumerate(rep.top_nodes, 1):
        lines.append(f"{i:>4}  {r.score:.6f}  {r.device} / {r.label}")
    for i, c in enumerate(rep.chains, 1):
        lines.append("")
        lines.append(f"chain {i}: risk {c.risk:.6f} across {' -> '.join(c.devices)}")
        lines.extend(f"    {nid}" for nid in c.nodes)
    text = "\n".join(lines) + "\n"
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_generate(args: argparse.Namespace) -> int:
    raw = _read_json(args.input) if args.input else {}
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.devices is not None:
        raw["n_devices"] = args.devices
    try:
        params = GenParams.load(raw)
    except (TypeError, ValueError) as exc:
        raise InputError(f"generator parameters: {exc}") from None
    spec, catalog = generate_system(params)
    _emit(args, spec)
    if args.catalog_out:
        Path(args.catalog_out).write_text(dumps({"defenses": catalog}), encoding="utf-8")
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    problems: list[str] = []
    if args.template:
        try:
            load_master_template(_read_json(args.template))
        except TemplateError as exc:
            problems.append(f"template: {exc}")
    if args.input:
        doc = _read_json(args.input)
        try:
            spec = parse_system_spec(doc)
            master = load_master_template(_read_json(args.template)) if args.template and not problems else default_master_template()
            g = build_system(spec, master)
            for d in g.devices.values():
                problems.extend(f"{v.kind}: {v.detail}" for v in validate_device_graph(d))
            if args.catalog:
                load_catalog(_read_json(args.catalog), g)
            warnings = g.provenance.get("warnings", [])
        except (SpecError, CatalogError) as exc:
            problems.extend(getattr(exc, "problems", [str(exc)]))
            warnings = []
    else:
        warnings = []
    if args.json:
        print(dumps({"ok": not problems, "problems": problems, "warnings": warnings}), end="")
    else:
        for w in warnings:
            print(f"warning: {w}")
        for p in problems:
            print(f"error: {p}")
        print("ok" if not problems else f"{len(problems)} problem(s)")
    return 0 if not problems else 1


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="iotrisk", description="IoT/CPS attack-graph risk scoring and defense optimization")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, graph: bool = True):
        sp.add_argument("input", help="system spec or serialized graph (JSON); builtin:<file> for shipped data")
        sp.add_argument("-o", "--output", help="write result here instead of stdout")
        sp.add_argument("--json", action="store_true", help="machine-readable summary output")
        sp.add_argument("--factors", help="factor-weight override file")
        if graph:
            sp.add_argument("--sum-ratio", type=float, default=1e-5)
            sp.add_argument("--exp-weight", type=float, default=0.1)
            sp.add_argument("--max-cycle", type=int, default=100)

    sp = sub.add_parser("build", help="system spec -> serialized graph")
    common(sp, graph=False)
    sp.add_argument("--template", help="alternative master template")
    sp.set_defaults(func=cmd_build)

    sp = sub.add_parser("score", help="graph -> vulnerability scores")
    common(sp)
    sp.set_defaults(func=cmd_score)

    sp = sub.add_parser("propagate", help="graph -> exploit scores and adversary score")
    common(sp)
    sp.add_argument("--k", type=int)
    sp.set_defaults(func=cmd_propagate)

    sp = sub.add_parser("optimize", help="graph + catalog -> history and recommended defenses")
    common(sp)
    sp.add_argument("--catalog", help="defense catalog (default: generic library expanded per device)")
    sp.add_argument("--csv", help="also write the curve as CSV")
    sp.add_argument("--k", type=int)
    sp.add_argument("--alpha-local", type=float, default=5e-5)
    sp.add_argument("--alpha-global", type=float, default=0.00032)
    sp.add_argument("--max-defenses", type=int)
    sp.add_argument("--max-set-time", type=float, default=25)
    sp.add_argument("--set-size", type=int)
    sp.add_argument("--opt-halt-value", type=float, default=0.0)
    sp.add_argument("--per-device-cost", action="store_true")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--threads", type=int, default=1)
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("report", help="weakest-link nodes and riskiest chains")
    common(sp)
    sp.add_argument("--top", type=int, default=10)
    sp.add_argument("--chains", type=int, default=3)
    sp.add_argument("--max-len", type=int, default=25)
    sp.add_argument("--k", type=int)
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("generate", help="generator parameters -> random system spec")
    sp.add_argument("input", nargs="?", help="GenParams JSON (defaults used when omitted)")
    sp.add_argument("-o", "--output")
    sp.add_argument("--catalog-out", help="write the generated defense catalog here")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--devices", type=int)
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("validate", help="lint a system spec and/or template")
    sp.add_argument("input", nargs="?")
    sp.add_argument("--template")
    sp.add_argument("--catalog")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_validate)
    return p


def run_cli(argv: Sequence[str] | None = None) -> int:
    try:
        args = _parser().parse_args(argv)
    except InputError as exc:
        print(f"iotrisk: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, SpecError, CatalogError, TemplateError, InfeasibleError) as exc:
        print(f"iotrisk: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - report anything else as an internal error
        log.debug("internal error", exc_info=True)
        print(f"iotrisk: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
