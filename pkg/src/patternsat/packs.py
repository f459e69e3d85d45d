"""Generated rule packs, rule files and oracle-backed rule validation."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .errors import FilterError, QueryParseError, RuleError
from .oracle import (
    DEFAULT_REGISTRY,
    EquivalenceReport,
    Filter,
    FilterRegistry,
    GraphDistribution,
    load_filters,
    queries_equivalent,
)
from .pattern import (
    ANTI_WEDGE,
    TRIANGLE,
    WEDGE,
    Pattern,
    canonicalize_pattern,
    enumerate_connected_patterns,
    occurrence_coefficient,
    pattern_from_json,
    saturate_anti_edges,
    super_patterns,
)
from .query import (
    TOP,
    Count,
    PatternLeaf,
    ReconstructionPath,
    Union,
    count,
    format_coef,
    leaf,
    parse_coef,
    path_from_json,
    union_of,
    well_formedness_violation,
)
from .rewrite import (
    CoefExpr,
    FilterVar,
    MCount,
    MEntries,
    MEntry,
    MLeaf,
    MUnion,
    PathSum,
    PathVar,
    PatVar,
    ProvProduct,
    ProvVar,
    QVar,
    RewriteRule,
    ScalarVar,
    Var,
    instantiate,
    is_opaque,
    respect_wrap,
    variables,
)


# -- subgraph morphing ------------------------------------------------------------


def _check_sm_input(p: Pattern) -> None:
    if p.anti_edges:
        raise RuleError("subgraph morphing is defined on anti-edge-free patterns")
    if not p.is_connected():
        raise RuleError("subgraph morphing requires a connected pattern")
    if not 3 <= p.n <= 6:
        raise RuleError(f"subgraph morphing supports 3..6 vertices, got {p.n}")


def sm_expansion(p: Pattern):
    """p as a union of anti-edge-saturated same-size super-patterns (unital provenance)."""
    _check_sm_input(p)
    terms = [count(leaf(saturate_anti_edges(p)))]
    for q in super_patterns(p):
        terms.append(count(leaf(saturate_anti_edges(q)), x=occurrence_coefficient(p, q)))
    return union_of(terms)


def sm_rule(p: Pattern) -> RewriteRule:
    """``p -> p^V + sum_q phi(p, q) q^V``; a clique yields ``p -> p`` (callers skip it)."""
    p = canonicalize_pattern(p)
    rhs = sm_expansion(p)
    name = f"sm-{p.n}-{p.encoding():x}"
    return respect_wrap(RewriteRule.from_template(name, MLeaf(p, TOP), rhs))


def sm_inverse_rule(p: Pattern) -> RewriteRule:
    """The same identity solved for the induced pattern: ``p^V -> p - sum_q phi(p, q) q^V``."""
    p = canonicalize_pattern(p)
    _check_sm_input(p)
    terms = [count(leaf(p))]
    for q in super_patterns(p):
        terms.append(count(leaf(saturate_anti_edges(q)), x=-occurrence_coefficient(p, q)))
    name = f"sm-inv-{p.n}-{p.encoding():x}"
    return respect_wrap(RewriteRule.from_template(name, MLeaf(saturate_anti_edges(p), TOP), union_of(terms)))


def _is_clique(p: Pattern) -> bool:
    return len(p.edges) == p.n * (p.n - 1) // 2


def sm_pack(max_n: int, *, min_n: int = 3, direction: str = "forward") -> list[RewriteRule]:
    """SM rules for every connected pattern with min_n..max_n vertices, cliques elided.

    ``direction`` picks the forward rules, the inverse rules (the identity
    solved for the induced pattern), or both.
    """
    if not 3 <= min_n <= max_n <= 6:
        raise RuleError(f"sm_pack needs 3 <= min_n <= max_n <= 6, got {min_n}..{max_n}")
    if direction not in ("forward", "inverse", "both"):
        raise RuleError(f"unknown direction {direction!r}")
    rules = []
    for n in range(min_n, max_n + 1):
        for p in enumerate_connected_patterns(n):
            if _is_clique(p):
                continue
            if direction != "inverse":
                rules.append(sm_rule(p))
            if direction != "forward":
                rules.append(sm_inverse_rule(p))
    return rules


def wedge_rule() -> RewriteRule:
    """Triangles as a third of wedges minus a third of anti-wedges."""
    rhs = Union(
        count(leaf(WEDGE), x=Fraction(1, 3)),
        count(leaf(ANTI_WEDGE), x=Fraction(-1, 3)),
    )
    return respect_wrap(RewriteRule.from_template("wedge", MLeaf(TRIANGLE, TOP), rhs))


# -- rule files ----------------------------------------------------------------------


def _var_of(obj, sort: type[Var], loc: str) -> Var | None:
    if isinstance(obj, dict) and set(obj) == {"var"}:
        if not isinstance(obj["var"], str) or not obj["var"]:
            raise QueryParseError("variable name must be a non-empty string", loc)
        return sort(obj["var"])
    return None


def _coef_from_json(obj, loc: str):
    v = _var_of(obj, ScalarVar, loc)
    if v is not None:
        return v
    if isinstance(obj, dict) and len(obj) == 1:
        (op, args), = obj.items()
        if op in ("mul", "add") and isinstance(args, list):
            return CoefExpr(op, tuple(_coef_from_json(a, f"{loc}.{op}[{i}]") for i, a in enumerate(args)))
        if op == "neg":
            return CoefExpr("neg", (_coef_from_json(args, f"{loc}.neg"),))
    return parse_coef(obj, loc)


def _prov_from_json(obj, loc: str):
    v = _var_of(obj, ProvVar, loc)
    if v is not None:
        return v
    if isinstance(obj, dict) and set(obj) == {"product"} and isinstance(obj["product"], list):
        return ProvProduct(tuple(_prov_from_json(a, f"{loc}.product[{i}]") for i, a in enumerate(obj["product"])))
    if isinstance(obj, list) and all(isinstance(a, str) and a for a in obj):
        return frozenset(obj)
    raise QueryParseError("provenance must be an atom list, a variable or a product", loc)


def _path_matcher_from_json(obj, loc: str):
    v = _var_of(obj, PathVar, loc)
    if v is not None:
        return v
    if isinstance(obj, dict) and set(obj) == {"sum"} and isinstance(obj["sum"], list):
        return PathSum(tuple(_path_matcher_from_json(a, f"{loc}.sum[{i}]") for i, a in enumerate(obj["sum"])))
    if not isinstance(obj, list):
        raise QueryParseError("path must be a list of entries, a variable or a sum", loc)
    if all(isinstance(e, dict) and not isinstance(e.get("prov"), dict) and not isinstance(e.get("coef"), dict) for e in obj):
        return path_from_json(obj, loc)
    entries = []
    for i, e in enumerate(obj):
        if not isinstance(e, dict) or set(e) != {"prov", "coef"}:
            raise QueryParseError("entry must have 'prov' and 'coef'", f"{loc}[{i}]")
        entries.append(MEntry(_prov_from_json(e["prov"], f"{loc}[{i}].prov"), _coef_from_json(e["coef"], f"{loc}[{i}].coef")))
    return MEntries(tuple(entries))


def matcher_from_json(obj, location: str = "$"):
    """Query JSON where positions may be ``{"var": name}``; sorts follow the position."""
    v = _var_of(obj, QVar, location)
    if v is not None:
        return v
    if not isinstance(obj, dict) or len(obj) != 1:
        raise QueryParseError("matcher must be a variable or one of union/count/pattern", location)
    (tag, body), = obj.items()
    if tag == "union":
        if not isinstance(body, list) or len(body) != 2:
            raise QueryParseError("'union' takes exactly two matchers", f"{location}.union")
        return MUnion(matcher_from_json(body[0], f"{location}.union[0]"), matcher_from_json(body[1], f"{location}.union[1]"))
    if tag == "count":
        if not isinstance(body, dict) or set(body) != {"path", "inner"}:
            raise QueryParseError("'count' needs 'path' and 'inner'", f"{location}.count")
        return MCount(
            _path_matcher_from_json(body["path"], f"{location}.count.path"),
            matcher_from_json(body["inner"], f"{location}.count.inner"),
        )
    if tag == "pattern":
        if not isinstance(body, dict) or "p" not in body:
            raise QueryParseError("'pattern' needs 'p'", f"{location}.pattern")
        p = _var_of(body["p"], PatVar, f"{location}.pattern.p") or pattern_from_json(body["p"], f"{location}.pattern.p")
        f = body.get("filter", TOP)
        f = _var_of(f, FilterVar, f"{location}.pattern.filter") or f
        if not isinstance(f, (str, FilterVar)):
            raise QueryParseError("filter must be a name or a variable", f"{location}.pattern.filter")
        return MLeaf(p, f)
    raise QueryParseError(f"unknown matcher tag {tag!r}", location)


def _coef_to_json(c):
    if isinstance(c, Var):
        return {"var": c.name}
    if isinstance(c, CoefExpr):
        if c.op == "neg":
            return {"neg": _coef_to_json(c.args[0])}
        return {c.op: [_coef_to_json(a) for a in c.args]}
    return format_coef(Fraction(c))


def _prov_to_json(p):
    if isinstance(p, Var):
        return {"var": p.name}
    if isinstance(p, ProvProduct):
        return {"product": [_prov_to_json(i) for i in p.items]}
    return sorted(p)


def _path_to_json(pm):
    if isinstance(pm, Var):
        return {"var": pm.name}
    if isinstance(pm, ReconstructionPath):
        return pm.to_json()
    if isinstance(pm, PathSum):
        return {"sum": [_path_to_json(x) for x in pm.parts]}
    return [{"prov": _prov_to_json(e.prov), "coef": _coef_to_json(e.coef)} for e in pm.entries]


def matcher_to_json(m) -> dict:
    if isinstance(m, Var):
        return {"var": m.name}
    if isinstance(m, (MUnion, Union)):
        return {"union": [matcher_to_json(m.left), matcher_to_json(m.right)]}
    if isinstance(m, (MCount, Count)):
        return {"count": {"path": _path_to_json(m.path), "inner": matcher_to_json(m.inner)}}
    if isinstance(m, (MLeaf, PatternLeaf)):
        p = {"var": m.pattern.name} if isinstance(m.pattern, Var) else m.pattern.to_json()
        f = {"var": m.filter.name} if isinstance(m.filter, Var) else m.filter
        return {"pattern": {"p": p, "filter": f}}
    raise RuleError(f"cannot serialize matcher {m!r}")


def rule_to_json(rule: RewriteRule, bidirectional: bool = False) -> dict:
    if rule.rhs is None:
        raise RuleError(f"rule {rule.name!r} has a programmatic transform and no template to serialize")
    return {"name": rule.name, "lhs": matcher_to_json(rule.lhs), "rhs": matcher_to_json(rule.rhs), "bidirectional": bidirectional}


def rules_from_json(obj, location: str = "$") -> list[RewriteRule]:
    """One rule object -> one rule, or two (forward and ``<name>-rev``) when bidirectional."""
    if not isinstance(obj, dict) or not {"name", "lhs", "rhs"} <= set(obj):
        raise QueryParseError("rule needs 'name', 'lhs' and 'rhs'", location)
    name = obj["name"]
    if not isinstance(name, str) or not name:
        raise QueryParseError("rule name must be a non-empty string", f"{location}.name")
    for side in ("lhs", "rhs"):
        if not is_opaque(obj[side]):
            raise RuleError(f"rule {name!r}: {side} destructures a pattern; only whole-pattern matching is allowed")
    lhs = matcher_from_json(obj["lhs"], f"{location}.lhs")
    rhs = matcher_from_json(obj["rhs"], f"{location}.rhs")
    bidir = obj.get("bidirectional", False)
    if not isinstance(bidir, bool):
        raise QueryParseError("'bidirectional' must be a boolean", f"{location}.bidirectional")
    rules = [respect_wrap(RewriteRule.from_template(name, lhs, rhs))]
    if bidir:
        rules.append(respect_wrap(RewriteRule.from_template(f"{name}-rev", rhs, lhs)))
    return rules


@dataclass
class Manifest:
    rules: list[RewriteRule] = field(default_factory=list)
    filters: list[Filter] = field(default_factory=list)


def manifest_from_json(obj, location: str = "$") -> Manifest:
    """A manifest ``{"rules": [...], "filters": [...]}``, a bare rule list, or a single rule."""
    if isinstance(obj, list):
        obj = {"rules": obj}
    elif isinstance(obj, dict) and "lhs" in obj:
        obj = {"rules": [obj]}
    if not isinstance(obj, dict) or set(obj) - {"rules", "filters"}:
        raise QueryParseError("manifest must have only 'rules' and 'filters'", location)
    raw = obj.get("rules", [])
    if not isinstance(raw, list):
        raise QueryParseError("'rules' must be a list", f"{location}.rules")
    rules: list[RewriteRule] = []
    for i, r in enumerate(raw):
        rules.extend(rules_from_json(r, f"{location}.rules[{i}]"))
    return Manifest(rules, load_filters(obj.get("filters", []), f"{location}.filters"))


def load_manifest(text: str) -> Manifest:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise QueryParseError(f"malformed JSON: {exc.msg}", f"line {exc.lineno} col {exc.colno}") from exc
    return manifest_from_json(obj)


def manifest_to_json(rules: Sequence[RewriteRule], filters: Sequence[Filter] = ()) -> dict:
    return {"rules": [rule_to_json(r) for r in rules], "filters": [f.to_json() for f in filters]}


# -- validation ------------------------------------------------------------------------


@dataclass
class RuleValidation:
    rule: str
    passed: bool
    instances: int
    failure: EquivalenceReport | None = None
    lhs: object = None
    rhs: object = None

    def __bool__(self) -> bool:
        return self.passed

    def to_json(self) -> dict:
        out = {"rule": self.rule, "passed": self.passed, "instances": self.instances}
        if self.failure is not None:
            out["failure"] = self.failure.to_json()
            out["lhs"] = matcher_to_json(self.lhs)
            out["rhs"] = matcher_to_json(self.rhs)
        return out


def _filter_names(m, out: set[str]) -> set[str]:
    if isinstance(m, (MUnion, Union)):
        _filter_names(m.left, out)
        _filter_names(m.right, out)
    elif isinstance(m, (MCount, Count)):
        _filter_names(m.inner, out)
    elif isinstance(m, (MLeaf, PatternLeaf)) and isinstance(m.filter, str):
        out.add(m.filter)
    return out


_FILL_PATTERNS = [WEDGE, TRIANGLE, ANTI_WEDGE] + enumerate_connected_patterns(4)
_ATOMS = ("a", "b", "c")


class _Filler:
    def __init__(self, rng: random.Random, registry: FilterRegistry):
        self.rng = rng
        self.registry = registry

    def coef(self) -> Fraction:
        return Fraction(self.rng.randint(-3, 3) or 1, self.rng.choice((1, 1, 2, 3)))

    def prov(self) -> frozenset[str]:
        return frozenset(a for a in _ATOMS if self.rng.random() < 0.35)

    def path(self) -> ReconstructionPath:
        k = self.rng.randint(1, 2)
        return ReconstructionPath(tuple((self.prov(), self.coef()) for _ in range(k)))

    def pattern(self) -> Pattern:
        return canonicalize_pattern(self.rng.choice(_FILL_PATTERNS))

    def filter_for(self, p: Pattern) -> str:
        names = sorted(n for n, f in self.registry.items() if f.max_vertex() < p.n)
        return self.rng.choice(names) if names and self.rng.random() < 0.3 else TOP

    def query(self, depth: int = 2):
        r = self.rng.random()
        if depth <= 0 or r < 0.4:
            p = self.pattern()
            return PatternLeaf(p, self.filter_for(p))
        if r < 0.7:
            return Count(self.path(), self.query(depth - 1))
        return Union(self.query(depth - 1), self.query(depth - 1))

    def fill(self, sorts: dict[str, str]) -> dict:
        s: dict = {}
        for name, sort in sorted(sorts.items()):
            if sort == "query":
                s[name] = self.query()
            elif sort == "pattern":
                s[name] = self.pattern()
            elif sort == "filter":
                s[name] = None  # chosen once the pattern is known
            elif sort == "path":
                s[name] = self.path()
            elif sort == "prov":
                s[name] = self.prov()
            elif sort == "scalar":
                s[name] = self.coef()
        for name, sort in sorts.items():
            if sort == "filter":
                pats = [v for k, v in s.items() if sorts[k] == "pattern"]
                s[name] = self.filter_for(min(pats, key=lambda p: p.n)) if pats else TOP
        return s


def validate_rule(
    rule: RewriteRule,
    registry: FilterRegistry = DEFAULT_REGISTRY,
    trials: int = 50,
    seed: int | None = 0,
    *,
    instances: int = 10,
    distribution: GraphDistribution = GraphDistribution(),
    max_attempts: int = 200,
) -> RuleValidation:
    """Instantiate the rule with random fills and differential-test both sides.

    A rule without variables has a single instance. Fills that make either
    side ill-formed or fail the rule's side condition are redrawn.
    """
    missing = sorted(
        n for n in _filter_names(rule.lhs, set()) | (_filter_names(rule.rhs, set()) if rule.rhs is not None else set())
        if n not in registry
    )
    if missing:
        raise FilterError(f"rule {rule.name!r} uses unregistered filter(s) {missing}")
    sorts = variables(rule.lhs)
    rng = random.Random(seed)
    filler = _Filler(rng, registry)
    wanted = instances if sorts else 1
    done = attempts = 0
    while done < wanted and attempts < max_attempts:
        attempts += 1
        s = filler.fill(sorts)
        if not rule.applies(s):
            continue
        lhs = instantiate(rule.lhs, s)
        try:
            rhs = rule.transform(s)
        except KeyError as exc:
            raise FilterError(f"rule {rule.name!r}: {exc}") from exc
        if well_formedness_violation(lhs) or well_formedness_violation(rhs):
            continue
        missing = sorted(n for n in _filter_names(rhs, set()) if n not in registry)
        if missing:
            raise FilterError(f"rule {rule.name!r} produces unregistered filter(s) {missing}")
        rep = queries_equivalent(lhs, rhs, registry, trials=trials, seed=rng.randrange(2**31), distribution=distribution)
        done += 1
        if not rep.passed:
            return RuleValidation(rule.name, False, done, rep, lhs, rhs)
    if done == 0:
        raise RuleError(f"rule {rule.name!r}: no well-formed instance found in {max_attempts} attempts")
    return RuleValidation(rule.name, True, done)
