"""Command-line interface: optimize, verify, validate rules, generate batches."""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from fractions import Fraction
from pathlib import Path

from .errors import PatternsatError
from .optimizer import CostTable, Limits, cost_table_from_json, optimize
from .oracle import DEFAULT_REGISTRY, DataGraph, FilterRegistry, GraphDistribution, load_filters, queries_equivalent
from .packs import load_manifest, manifest_to_json, sm_pack, validate_rule, wedge_rule
from .pattern import pattern_from_json
from .query import parse_query, serialize_query
from .translate import PROV_MODES, approx_query, quasi_clique_query

EXIT_OK, EXIT_FAILED, EXIT_INPUT = 0, 1, 2

log = logging.getLogger("patternsat")


class InputError(Exception):
    pass


def _read(path: str) -> str:
    try:
        return sys.stdin.read() if path == "-" else Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc


def _load_json(path: str):
    try:
        return json.loads(_read(path))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: malformed JSON at line {exc.lineno} col {exc.colno}: {exc.msg}") from exc


def _load_rules(paths):
    rules, filters = [], []
    for path in paths or ():
        try:
            m = load_manifest(_read(path))
        except PatternsatError as exc:
            raise InputError(f"{path}: {exc}") from exc
        rules.extend(m.rules)
        filters.extend(m.filters)
    return rules, filters


def _registry(args, extra=()) -> FilterRegistry:
    filters = list(extra)
    for path in getattr(args, "filters", None) or ():
        obj = _load_json(path)
        try:
            filters.extend(load_filters(obj.get("filters", obj) if isinstance(obj, dict) else obj))
        except PatternsatError as exc:
            raise InputError(f"{path}: {exc}") from exc
    return DEFAULT_REGISTRY.with_filters(filters) if filters else DEFAULT_REGISTRY


def _query(path: str):
    try:
        return parse_query(_read(path))
    except PatternsatError as exc:
        raise InputError(f"{path}: {exc}") from exc


def _emit(text: str, out: str | None) -> None:
    if out and out != "-":
        Path(out).write_text(text + "\n")
    else:
        print(text)


# -- commands --------------------------------------------------------------------------


def cmd_optimize(args) -> int:
    q = _query(args.query)
    rules, filters = _load_rules(args.rules)
    if args.sm_pack:
        rules += sm_pack(args.sm_pack)
    if args.wedge:
        rules.append(wedge_rule())
    cost = CostTable()
    if args.cost:
        try:
            cost = cost_table_from_json(_load_json(args.cost))
        except PatternsatError as exc:
            raise InputError(f"{args.cost}: {exc}") from exc
    limits = Limits(args.time_limit, args.iter_limit, args.node_limit)
    out, report = optimize(q, rules, cost, limits, extract_mode=args.extract)
    _emit(serialize_query(out, indent=2), args.out)
    rep = json.dumps(report.to_json(), indent=2, sort_keys=True)
    if args.report:
        Path(args.report).write_text(rep + "\n")
    else:
        print(rep, file=sys.stderr)
    return EXIT_OK


def cmd_verify(args) -> int:
    a, b = _query(args.query_a), _query(args.query_b)
    _, filters = _load_rules(args.rules)
    registry = _registry(args, filters)
    seed = args.seed if args.seed is not None else random.SystemRandom().randrange(2**31)
    print(f"seed: {seed}", file=sys.stderr)
    graphs = [DataGraph.from_text(_read(g)) for g in args.graph or ()]
    dist = GraphDistribution(args.min_v, args.max_v, args.min_p, args.max_p)
    rep = queries_equivalent(a, b, registry, trials=args.trials, seed=seed, distribution=dist, graphs=graphs)
    print(json.dumps(rep.to_json(), indent=2, sort_keys=True))
    return EXIT_OK if rep.passed else EXIT_FAILED


def cmd_validate_rule(args) -> int:
    rules, filters = _load_rules([args.rule_file])
    registry = _registry(args, filters)
    seed = args.seed if args.seed is not None else random.SystemRandom().randrange(2**31)
    print(f"seed: {seed}", file=sys.stderr)
    results = [validate_rule(r, registry, trials=args.trials, seed=seed) for r in rules]
    print(json.dumps([r.to_json() for r in results], indent=2, sort_keys=True))
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED


def cmd_gen_quasi_clique(args) -> int:
    q = quasi_clique_query(args.k, Fraction(args.gamma), args.prov_mode, floor=args.floor)
    _emit(serialize_query(q, indent=2), args.out)
    return EXIT_OK


def cmd_gen_approx(args) -> int:
    obj = _load_json(args.pattern)
    try:
        p = pattern_from_json(obj)
    except PatternsatError as exc:
        raise InputError(f"{args.pattern}: {exc}") from exc
    q = approx_query(p, args.k, args.prov_mode, allow_disconnected=args.allow_disconnected)
    _emit(serialize_query(q, indent=2), args.out)
    return EXIT_OK


def cmd_gen_rules(args) -> int:
    rules = sm_pack(args.sm_pack, direction=args.direction) if args.sm_pack else []
    if args.wedge:
        rules.append(wedge_rule())
    _emit(json.dumps(manifest_to_json(rules), indent=2, sort_keys=True), args.out)
    return EXIT_OK


# -- parser --------------------------------------------------------------------------


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="patternsat", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", help="saturate a query under rewrite rules and extract the cheapest form")
    p.add_argument("query", help="query JSON file ('-' for stdin)")
    p.add_argument("--rules", nargs="+", default=[], metavar="FILE", help="rule manifests")
    p.add_argument("--sm-pack", type=int, metavar="N", help="add subgraph-morphing rules up to N vertices")
    p.add_argument("--wedge", action="store_true", help="add the triangle-to-wedge rule")
    p.add_argument("--cost", metavar="FILE", help="cost table JSON")
    p.add_argument("--time-limit", type=float, default=Limits.time_limit)
    p.add_argument("--iter-limit", type=int, default=Limits.iter_limit)
    p.add_argument("--node-limit", type=int, default=Limits.node_limit)
    p.add_argument("--extract", choices=("set", "tree"), default="set")
    p.add_argument("--out", help="write the optimized query here instead of stdout")
    p.add_argument("--report", help="write the report here instead of stderr")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("verify", help="differential-test two queries on random graphs")
    p.add_argument("query_a")
    p.add_argument("query_b")
    p.add_argument("--trials", type=int, default=30)
    p.add_argument("--seed", type=int)
    p.add_argument("--rules", nargs="+", default=[], metavar="FILE", help="manifests whose filters to register")
    p.add_argument("--filters", nargs="+", metavar="FILE", help="filter definition files")
    p.add_argument("--graph", nargs="+", metavar="FILE", help="extra data graphs to test on")
    p.add_argument("--min-v", type=int, default=8)
    p.add_argument("--max-v", type=int, default=12)
    p.add_argument("--min-p", type=float, default=0.3)
    p.add_argument("--max-p", type=float, default=0.7)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("validate-rule", help="check rules in a file against the oracle")
    p.add_argument("rule_file")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--seed", type=int)
    p.add_argument("--filters", nargs="+", metavar="FILE")
    p.set_defaults(func=cmd_validate_rule)

    p = sub.add_parser("gen-quasi-clique", help="batched query for gamma-quasi-cliques of size k")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--gamma", type=_fraction, required=True)
    p.add_argument("--prov-mode", choices=PROV_MODES, default="collective")
    p.add_argument("--floor", action="store_true", help="round the degree bound down instead of up")
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_quasi_clique)

    p = sub.add_parser("gen-approx", help="batched query for approximate matches of a pattern")
    p.add_argument("pattern", help="pattern JSON file")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--prov-mode", choices=PROV_MODES, default="collective")
    p.add_argument("--allow-disconnected", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_approx)

    p = sub.add_parser("gen-rules", help="write generated rules as a manifest")
    p.add_argument("--sm-pack", type=int, metavar="N")
    p.add_argument("--direction", choices=("forward", "inverse", "both"), default="forward")
    p.add_argument("--wedge", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_rules)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (InputError, PatternsatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
