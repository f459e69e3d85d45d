"""Equality saturation over query terms and cost-based extraction."""

from __future__ import annotations

import json
import logging
import math
import time
from collections import deque
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Sequence

from .egraph import ClassRef, EGraph, ENode
from .errors import CostTableError, ExtractionError, RuleError
from .pattern import Pattern, canonicalize_pattern, pattern_from_json
from .query import (
    TOP,
    Count,
    PatternLeaf,
    Query,
    Union,
    canonicalize_query,
    format_coef,
    parse_coef,
    patterns_of,
    serialize_query,
    term_size,
    well_formedness_violation,
)
from .rewrite import (
    FilterVar,
    MLeaf,
    PatVar,
    RewriteRule,
    builtin_rules,
    cancellation_rules,
    is_opaque,
    respect_wrap,
)

log = logging.getLogger(__name__)

Leaf = tuple[Pattern, str]


# -- costs --------------------------------------------------------------------------


@dataclass
class CostTable:
    """Per-(pattern, filter) costs; keys are canonical so isomorphic patterns cost the same."""

    entries: dict[Leaf, Fraction] = field(default_factory=dict)
    default: Fraction = Fraction(1)

    def __post_init__(self):
        canon: dict[Leaf, Fraction] = {}
        for (p, f), c in self.entries.items():
            c = Fraction(c)
            if c < 0:
                raise CostTableError(f"negative cost {c} for {p!r}")
            key = (canonicalize_pattern(p), f)
            if key in canon:
                raise CostTableError(f"duplicate cost entry for {key[0]!r} / {f!r} after canonicalization")
            canon[key] = c
        self.entries = canon
        self.default = Fraction(self.default)
        if self.default < 0:
            raise CostTableError("default cost must be nonnegative")

    def __call__(self, p: Pattern, f: str = TOP) -> Fraction:
        p = canonicalize_pattern(p)
        hit = self.entries.get((p, f))
        if hit is None and f != TOP:
            hit = self.entries.get((p, TOP))
        return self.default if hit is None else hit

    @classmethod
    def from_function(cls, patterns, fn, default=1) -> "CostTable":
        return cls({(canonicalize_pattern(p), TOP): Fraction(fn(p)) for p in set(map(canonicalize_pattern, patterns))}, default)

    def to_json(self) -> dict:
        return {
            "default": format_coef(self.default),
            "entries": [
                {"p": p.to_json(), "filter": f, "cost": format_coef(c)}
                for (p, f), c in sorted(self.entries.items(), key=lambda kv: (kv[0][0].sort_key(), kv[0][1]))
            ],
        }


def cost_table_from_json(obj) -> CostTable:
    if not isinstance(obj, dict):
        raise CostTableError("cost table must be an object")
    default = parse_coef(obj.get("default", "1"), "$.default")
    raw = obj.get("entries", [])
    if not isinstance(raw, list):
        raise CostTableError("'entries' must be a list")
    entries: dict[Leaf, Fraction] = {}
    for i, e in enumerate(raw):
        loc = f"$.entries[{i}]"
        if not isinstance(e, dict) or "p" not in e or "cost" not in e:
            raise CostTableError(f"{loc}: entry needs 'p' and 'cost'")
        key = (canonicalize_pattern(pattern_from_json(e["p"], f"{loc}.p")), e.get("filter", TOP))
        if key in entries:
            raise CostTableError(f"{loc}: duplicate key after canonicalization")
        entries[key] = parse_coef(e["cost"], f"{loc}.cost")
    return CostTable(entries, default)


def query_cost(cost: CostTable, q: Query) -> Fraction:
    """Sum of costs over the *set* of distinct (pattern, filter) leaves."""
    return sum((cost(p, f) for p, f in patterns_of(q)), Fraction(0))


def tree_cost(cost: CostTable, q: Query) -> Fraction:
    if isinstance(q, PatternLeaf):
        return cost(q.pattern, q.filter)
    if isinstance(q, Count):
        return tree_cost(cost, q.inner)
    return tree_cost(cost, q.left) + tree_cost(cost, q.right)


# -- limits, scheduling, reports ------------------------------------------------------


@dataclass(frozen=True)
class Limits:
    time_limit: float = 60.0
    iter_limit: int = 40
    node_limit: int = 100_000

    def __post_init__(self):
        if self.time_limit <= 0 or self.iter_limit <= 0 or self.node_limit <= 0:
            raise ValueError("limits must be positive")


@dataclass
class BackoffScheduler:
    """Temporarily bans rules whose match count explodes (the usual e-graph runner policy)."""

    match_limit: int = 1000
    ban_length: int = 5
    _banned_until: dict[str, int] = field(default_factory=dict)
    _times_banned: dict[str, int] = field(default_factory=dict)

    def is_banned(self, rule: RewriteRule, iteration: int) -> bool:
        return self._banned_until.get(rule.name, 0) > iteration

    def threshold(self, rule: RewriteRule) -> int:
        return self.match_limit << self._times_banned.get(rule.name, 0)

    def ban(self, rule: RewriteRule, iteration: int) -> None:
        times = self._times_banned.get(rule.name, 0)
        self._banned_until[rule.name] = iteration + (self.ban_length << times)
        self._times_banned[rule.name] = times + 1

    def any_banned(self, iteration: int) -> bool:
        return any(v > iteration for v in self._banned_until.values())

    def unban_all(self, iteration: int) -> None:
        for k in self._banned_until:
            self._banned_until[k] = min(self._banned_until[k], iteration)


@dataclass
class Report:
    iterations: int = 0
    nodes: int = 0
    classes: int = 0
    stop_reason: str = ""
    input_cost: Fraction = Fraction(0)
    output_cost: Fraction = Fraction(0)
    elapsed: float = 0.0
    applications: int = 0
    source: str = "egraph"

    def to_json(self) -> dict:
        d = asdict(self)
        d["input_cost"] = format_coef(self.input_cost)
        d["output_cost"] = format_coef(self.output_cost)
        d["elapsed"] = round(self.elapsed, 4)
        return d


@dataclass
class ApplyResult:
    changed: bool
    node_limit_hit: bool = False
    time_limit_hit: bool = False
    applications: int = 0


def apply_rules_once(
    egraph: EGraph,
    rules: Sequence[RewriteRule],
    *,
    node_limit: int | None = None,
    deadline: float | None = None,
    scheduler: BackoffScheduler | None = None,
    iteration: int = 0,
) -> ApplyResult:
    """One saturation round: find every match, then apply them all, then rebuild."""
    matches: list[tuple[RewriteRule, int, dict]] = []
    for rule in rules:
        if scheduler is not None:
            if scheduler.is_banned(rule, iteration):
                continue
            limit = scheduler.threshold(rule)
            found = egraph.search(rule, limit, deadline)
            if len(found) > limit:
                scheduler.ban(rule, iteration)
                continue
        else:
            found = egraph.search(rule, None, deadline)
        matches.extend((rule, cid, s) for cid, s in found)
        if deadline is not None and time.monotonic() > deadline:
            return ApplyResult(False, time_limit_hit=True)

    before = egraph.node_count
    changed = False
    result = ApplyResult(False)
    for k, (rule, cid, s) in enumerate(matches):
        new = egraph.add_term(rule.transform(s))
        changed |= egraph.union(cid, new)
        result.applications += 1
        if node_limit is not None and egraph.node_count > node_limit:
            result.node_limit_hit = True
            break
        if deadline is not None and k % 64 == 0 and time.monotonic() > deadline:
            result.time_limit_hit = True
            break
    egraph.rebuild()
    result.changed = changed or egraph.node_count != before
    return result


# -- extraction -------------------------------------------------------------------------


def _node_json(node: ENode, kids: list[str]) -> str:
    # same text serialize_query would produce for the assembled term
    if node.op == "P":
        return serialize_query(PatternLeaf(*node.data))
    if node.op == "C":
        return '{"count": {"inner": %s, "path": %s}}' % (kids[0], json.dumps(node.data.to_json(), sort_keys=True))
    return '{"union": [%s, %s]}' % (kids[0], kids[1])


def extract(
    egraph: EGraph,
    root: int,
    cost: CostTable,
    *,
    mode: str = "set",
    discount: frozenset = frozenset(),
) -> Query:
    """Cheapest represented term of ``root``'s class.

    ``set`` mode charges each distinct leaf once, ``tree`` mode charges every
    occurrence. Leaves in ``discount`` are free (used when refining around an
    already-chosen leaf set). Ties go to fewer AST nodes, then to the smaller
    serialization.

    A worklist first settles (cost, size) per class, revisiting a class
    whenever a child improves; costs are scaled to integers by the common
    denominator. A second pass in increasing size order then breaks ties by
    serialization, composing each class's text from its children's.
    """
    if mode not in ("set", "tree"):
        raise ValueError(f"unknown extraction mode {mode!r}")
    find = egraph.find
    leaf_keys = {n.data for cid in egraph.classes for n in egraph.classes[cid].by_op("P")}
    raw = {k: (Fraction(0) if k in discount else cost(*k)) for k in leaf_keys}
    scale = 1
    for c in raw.values():
        scale = scale * c.denominator // math.gcd(scale, c.denominator)
    lc = {k: int(c * scale) for k, c in raw.items()}
    set_cost: dict[frozenset, int] = {}

    def cost_of(leaves: frozenset) -> int:
        c = set_cost.get(leaves)
        if c is None:
            c = set_cost[leaves] = sum(lc[x] for x in leaves)
        return c

    # best[cid] = (cost, size, leaves)
    best: dict[int, tuple[int, int, frozenset]] = {}

    def candidate(node: ENode, table):
        if node.op == "P":
            return lc[node.data], 1, frozenset((node.data,))
        kids = []
        for c in node.children:
            k = table.get(find(c))
            if k is None:
                return None
            kids.append(k)
        if node.op == "C":
            k = kids[0]
            return k[0], k[1] + 1, k[2]
        a, b = kids
        leaves = a[2] | b[2]
        c = cost_of(leaves) if mode == "set" else a[0] + b[0]
        return c, a[1] + b[1] + 1, leaves

    queue = deque(egraph.classes_with_op("P"))
    queued = set(queue)
    while queue:
        cid = find(queue.popleft())
        queued.discard(cid)
        cur = best.get(cid)
        changed = False
        for node in egraph.classes[cid].nodes:
            cand = candidate(node, best)
            if cand is not None and (cur is None or cand[:2] < cur[:2]):
                cur = cand
                changed = True
        if changed:
            best[cid] = cur
            for _, pclass in egraph.classes[cid].parents:
                pc = find(pclass)
                if pc not in queued:
                    queued.add(pc)
                    queue.append(pc)
    root = find(root)
    if root not in best:
        raise ExtractionError(f"class {root} has no finite-cost term")

    # tie-breaking pass; children of any candidate are strictly smaller, so they are final
    final: dict[int, tuple[int, int, frozenset]] = {}
    text: dict[int, str] = {}
    choice: dict[int, ENode] = {}
    for cid in sorted(best, key=lambda c: (best[c][1], c)):
        top = None
        for node in egraph.classes[cid].nodes:
            if any(find(c) not in final for c in node.children):
                continue
            cand = candidate(node, final)
            key = (cand[0], cand[1])
            if top is not None and key > top[0]:
                continue
            t = _node_json(node, [text[find(c)] for c in node.children])
            if top is None or (key, t) < (top[0], top[1]):
                top = (key, t, cand, node)
        if top is None:
            continue
        final[cid], text[cid], choice[cid] = top[2], top[1], top[3]

    def term(cid: int) -> Query:
        node = choice[find(cid)]
        if node.op == "P":
            return PatternLeaf(*node.data)
        if node.op == "C":
            return Count(node.data, term(node.children[0]))
        return Union(term(node.children[0]), term(node.children[1]))

    return term(root)


# -- the optimizer ------------------------------------------------------------------


def automorphism_rules(max_n: int = 8) -> list[RewriteRule]:
    """Relabel a leaf by swapping two vertices; only for the no-canonicalization ablation."""
    from functools import partial

    rules = []
    for i in range(max_n):
        for j in range(i + 1, max_n):
            rules.append(
                RewriteRule(
                    f"swap-{i}-{j}",
                    MLeaf(PatVar("p"), FilterVar("f")),
                    partial(_swap_transform, i, j),
                    condition=partial(_swap_applies, j),
                )
            )
    return rules


def _swap_applies(j: int, s) -> bool:
    return s["p"].n > j


def _swap_transform(i: int, j: int, s) -> Query:
    p: Pattern = s["p"]
    perm = list(range(p.n))
    perm[i], perm[j] = j, i
    return PatternLeaf(p.relabel(perm), s["f"])


def prepare_rules(rules: Sequence[RewriteRule], *, canonical: bool = True) -> list[RewriteRule]:
    out = []
    for r in rules:
        if not is_opaque(r.lhs):
            raise RuleError(f"rule {r.name!r} is not opaque")
        out.append(respect_wrap(r) if canonical else r)
    return out


def optimize(
    q: Query,
    rules: Sequence[RewriteRule],
    cost: CostTable,
    limits: Limits = Limits(),
    *,
    canonicalize: bool = True,
    include_builtins: bool = True,
    cancel_zero: bool = True,
    extra_rules: Sequence[RewriteRule] = (),
    extract_mode: str = "set",
    scheduler: BackoffScheduler | None | str = "backoff",
    refine_passes: int = 2,
) -> tuple[Query, Report]:
    """Saturate ``q`` under ``rules`` plus the built-ins and extract a cheapest equivalent.

    With ``canonicalize=False`` neither the input nor rule outputs are
    canonicalized (``extra_rules`` can then add relabeling rules); this is
    the ablation configuration.
    """
    start = time.monotonic()
    deadline = start + limits.time_limit
    all_rules = list(rules)
    if include_builtins:
        all_rules += builtin_rules()
    if cancel_zero:
        all_rules += cancellation_rules()
    all_rules = prepare_rules(all_rules, canonical=canonicalize) + list(extra_rules)
    if scheduler == "backoff":
        scheduler = BackoffScheduler()

    q0 = canonicalize_query(q) if canonicalize else q
    score = query_cost if extract_mode == "set" else tree_cost
    report = Report(input_cost=score(cost, q0))

    eg = EGraph()
    root = eg.add_term(q0)
    eg.rebuild()
    iteration = 0
    while True:
        if iteration >= limits.iter_limit:
            report.stop_reason = "iter_limit"
            break
        if time.monotonic() > deadline:
            report.stop_reason = "time_limit"
            break
        res = apply_rules_once(
            eg, all_rules, node_limit=limits.node_limit, deadline=deadline, scheduler=scheduler, iteration=iteration
        )
        iteration += 1
        report.applications += res.applications
        if res.node_limit_hit or eg.node_count > limits.node_limit:
            report.stop_reason = "node_limit"
            break
        if res.time_limit_hit:
            report.stop_reason = "time_limit"
            break
        if not res.changed:
            if scheduler is not None and scheduler.any_banned(iteration):
                scheduler.unban_all(iteration)
                continue
            report.stop_reason = "saturated"
            break
    report.iterations = iteration
    report.nodes = eg.node_count
    report.classes = len(eg.classes)

    candidates = [extract(eg, root, cost, mode=extract_mode)]
    for _ in range(refine_passes if extract_mode == "set" else 0):
        chosen = frozenset(patterns_of(candidates[-1]))
        nxt = extract(eg, root, cost, mode="set", discount=chosen)
        if nxt in candidates:
            break
        candidates.append(nxt)
    candidates = [c for c in candidates if well_formedness_violation(c) is None]
    # ties keep the input
    best, best_key = q0, (report.input_cost, term_size(q0))
    report.source = "input"
    for c in candidates:
        key = (score(cost, c), term_size(c))
        if key < best_key:
            best, best_key = c, key
            report.source = "egraph"
    report.output_cost = best_key[0]
    report.elapsed = time.monotonic() - start
    log.debug("optimize: %s", report)
    return best, report
