"""Matchers, substitutions and rewrite rules over query terms.

A matcher is a query-shaped tree with sorted holes. Pattern positions can
hold a whole-pattern variable or a concrete pattern, never a partial edge
list, so every matcher built from these classes treats patterns opaquely.
The same node classes double as right-hand-side templates, where a few
extra forms (``ProvProduct``, ``CoefExpr``, ``PathSum``) compute new
provenances, coefficients and paths from bound variables.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import partial
from typing import Any, Callable, Iterator, Mapping

from .errors import RuleError
from .pattern import Pattern, canonicalize_pattern
from .query import (
    EMPTY_PATH,
    TOP,
    Count,
    PatternLeaf,
    Query,
    ReconstructionPath,
    Union,
    canonicalize_query,
)

Subst = dict[str, Any]


# -- variables -----------------------------------------------------------------


@dataclass(frozen=True)
class Var:
    name: str
    sort = "?"

    def __repr__(self) -> str:
        return f"?{self.name}"


class QVar(Var):
    sort = "query"


class PatVar(Var):
    sort = "pattern"


class FilterVar(Var):
    sort = "filter"


class PathVar(Var):
    sort = "path"


class ProvVar(Var):
    sort = "prov"


class ScalarVar(Var):
    sort = "scalar"


# -- matcher / template nodes ----------------------------------------------------------


@dataclass(frozen=True)
class MUnion:
    left: Any
    right: Any


@dataclass(frozen=True)
class MCount:
    path: Any
    inner: Any


@dataclass(frozen=True)
class MLeaf:
    pattern: Pattern | PatVar
    filter: str | FilterVar = TOP


@dataclass(frozen=True)
class MEntry:
    prov: Any  # frozenset | ProvVar | ProvProduct
    coef: Any  # Fraction | ScalarVar | CoefExpr


@dataclass(frozen=True)
class MEntries:
    """Matches a path with exactly these entries, in any order."""

    entries: tuple[MEntry, ...]


@dataclass(frozen=True)
class ProvProduct:
    items: tuple


@dataclass(frozen=True)
class CoefExpr:
    op: str  # "mul" | "add" | "neg"
    args: tuple


@dataclass(frozen=True)
class PathSum:
    parts: tuple


def entry(p, x) -> MEntries:
    return MEntries((MEntry(p, x),))


_QUERY_NODES = (MUnion, MCount, MLeaf, Union, Count, PatternLeaf)


def variables(m, out: dict[str, str] | None = None) -> dict[str, str]:
    """Variable name -> sort, raising on a name used at two sorts."""
    out = {} if out is None else out

    def note(v: Var):
        prev = out.setdefault(v.name, v.sort)
        if prev != v.sort:
            raise RuleError(f"variable {v.name!r} used as both {prev} and {v.sort}")

    def walk(x):
        if isinstance(x, Var):
            note(x)
        elif isinstance(x, (MUnion, Union)):
            walk(x.left)
            walk(x.right)
        elif isinstance(x, (MCount, Count)):
            walk(x.path)
            walk(x.inner)
        elif isinstance(x, (MLeaf, PatternLeaf)):
            walk(x.pattern)
            walk(x.filter)
        elif isinstance(x, MEntries):
            for e in x.entries:
                walk(e)
        elif isinstance(x, MEntry):
            walk(x.prov)
            walk(x.coef)
        elif isinstance(x, ProvProduct):
            for i in x.items:
                walk(i)
        elif isinstance(x, CoefExpr):
            for a in x.args:
                walk(a)
        elif isinstance(x, PathSum):
            for p in x.parts:
                walk(p)

    walk(m)
    return out


# -- matching concrete terms -------------------------------------------------------


def _bind(s: Subst, var: Var, value, same=lambda a, b: a == b) -> Subst | None:
    if var.name in s:
        return s if same(s[var.name], value) else None
    out = dict(s)
    out[var.name] = value
    return out


def match_value(m, value, s: Subst) -> Subst | None:
    """Match a scalar-ish position: pattern, filter name, provenance or coefficient."""
    if isinstance(m, Var):
        return _bind(s, m, value)
    return s if m == value else None


def match_path(pm, path: ReconstructionPath, s: Subst) -> Iterator[Subst]:
    if isinstance(pm, PathVar):
        r = _bind(s, pm, path)
        if r is not None:
            yield r
    elif isinstance(pm, ReconstructionPath):
        if pm == path:
            yield s
    elif isinstance(pm, MEntries):
        if len(pm.entries) != len(path.entries):
            return
        seen = []
        for order in itertools.permutations(path.entries):
            cur: Subst | None = s
            for me, (p, x) in zip(pm.entries, order):
                cur = match_value(me.prov, p, cur)
                if cur is None:
                    break
                cur = match_value(me.coef, x, cur)
                if cur is None:
                    break
            if cur is not None and cur not in seen:
                seen.append(cur)
                yield cur
    else:
        raise RuleError(f"{pm!r} cannot appear in a matcher path position")


def _match(m, t, s: Subst) -> Iterator[Subst]:
    if isinstance(m, QVar):
        r = _bind(s, m, t)
        if r is not None:
            yield r
    elif isinstance(m, MUnion):
        if isinstance(t, Union):
            for s1 in _match(m.left, t.left, s):
                yield from _match(m.right, t.right, s1)
    elif isinstance(m, MCount):
        if isinstance(t, Count):
            for s1 in match_path(m.path, t.path, s):
                yield from _match(m.inner, t.inner, s1)
    elif isinstance(m, MLeaf):
        if isinstance(t, PatternLeaf):
            s1 = match_value(m.pattern, t.pattern, s)
            if s1 is not None:
                s2 = match_value(m.filter, t.filter, s1)
                if s2 is not None:
                    yield s2
    elif isinstance(m, (Union, Count, PatternLeaf)):
        if m == t:
            yield s
    else:
        raise RuleError(f"{m!r} is not a query matcher")


def match(m, t: Query) -> list[Subst]:
    """All substitutions ``s`` with ``m[s] == t`` at the root of ``t``."""
    return list(_match(m, t, {}))


# -- instantiation -----------------------------------------------------------------


def _inst_prov(p, s: Subst) -> frozenset[str]:
    if isinstance(p, ProvVar):
        return s[p.name]
    if isinstance(p, ProvProduct):
        out: frozenset[str] = frozenset()
        for i in p.items:
            out |= _inst_prov(i, s)
        return out
    return frozenset(p)


def _inst_coef(c, s: Subst) -> Fraction:
    if isinstance(c, ScalarVar):
        return s[c.name]
    if isinstance(c, CoefExpr):
        vals = [_inst_coef(a, s) for a in c.args]
        if c.op == "mul":
            out = Fraction(1)
            for v in vals:
                out *= v
            return out
        if c.op == "add":
            return sum(vals, Fraction(0))
        if c.op == "neg":
            return -vals[0]
        raise RuleError(f"unknown coefficient operator {c.op!r}")
    return Fraction(c)


def _inst_path(pm, s: Subst) -> ReconstructionPath:
    if isinstance(pm, PathVar):
        return s[pm.name]
    if isinstance(pm, ReconstructionPath):
        return pm
    if isinstance(pm, MEntries):
        return ReconstructionPath(tuple((_inst_prov(e.prov, s), _inst_coef(e.coef, s)) for e in pm.entries))
    if isinstance(pm, PathSum):
        out = EMPTY_PATH
        for part in pm.parts:
            out = out + _inst_path(part, s)
        return out
    raise RuleError(f"{pm!r} is not a path template")


def instantiate(template, s: Subst):
    """``template[s]``; query variables become whatever ``s`` holds for them."""
    if isinstance(template, QVar):
        return s[template.name]
    if isinstance(template, MUnion):
        return Union(instantiate(template.left, s), instantiate(template.right, s))
    if isinstance(template, MCount):
        return Count(_inst_path(template.path, s), instantiate(template.inner, s))
    if isinstance(template, MLeaf):
        p = s[template.pattern.name] if isinstance(template.pattern, PatVar) else template.pattern
        f = s[template.filter.name] if isinstance(template.filter, FilterVar) else template.filter
        return PatternLeaf(p, f)
    if isinstance(template, (Union, Count, PatternLeaf)):
        return template
    raise RuleError(f"{template!r} is not a query template")


# -- opacity ---------------------------------------------------------------------


def is_opaque(m) -> bool:
    """Whether ``m`` only ever matches patterns whole.

    Matcher objects are opaque by construction; the check matters for JSON
    matchers loaded from rule files, where a pattern position could try to
    peel off single edges (``{"edge": [u, v], "rest": ...}``).
    """
    if isinstance(m, dict):
        return _json_opaque(m, "query")
    try:
        variables(m)
    except RuleError:
        return False
    return _object_opaque(m)


def _object_opaque(m) -> bool:
    if isinstance(m, Var):
        return True
    if isinstance(m, (MUnion, Union)):
        return _object_opaque(m.left) and _object_opaque(m.right)
    if isinstance(m, (MCount, Count)):
        return _object_opaque(m.inner)
    if isinstance(m, (MLeaf, PatternLeaf)):
        return isinstance(m.pattern, (Pattern, PatVar))
    return False


def _json_opaque(m, position: str) -> bool:
    if not isinstance(m, dict):
        return position == "filter" and isinstance(m, str)
    if set(m) == {"var"}:
        return True
    if position == "pattern":
        # only a whole concrete pattern is allowed besides a variable
        return set(m) <= {"n", "edges", "antiEdges"}
    if position != "query" or len(m) != 1:
        return False
    (tag, body), = m.items()
    if tag == "union":
        return isinstance(body, list) and all(_json_opaque(b, "query") for b in body)
    if tag == "count":
        return isinstance(body, dict) and _json_opaque(body.get("inner"), "query")
    if tag == "pattern":
        return isinstance(body, dict) and _json_opaque(body.get("p"), "pattern")
    return False


# -- rules --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RewriteRule:
    name: str
    lhs: Any
    transform: Callable[[Subst], Query]
    condition: Callable[[Subst], bool] | None = None
    rhs: Any = None
    canonical: bool = False

    @classmethod
    def from_template(cls, name: str, lhs, rhs, condition=None) -> "RewriteRule":
        lv, rv = variables(lhs), variables(rhs)
        missing = set(rv) - set(lv)
        if missing:
            raise RuleError(f"rule {name!r}: right-hand side uses unbound variables {sorted(missing)}")
        for v, sort in rv.items():
            if lv[v] != sort:
                raise RuleError(f"rule {name!r}: variable {v!r} is {lv[v]} on the left but {sort} on the right")
        return cls(name, lhs, partial(instantiate, rhs), condition, rhs)

    def applies(self, s: Subst) -> bool:
        return self.condition is None or self.condition(s)

    def apply(self, t: Query) -> list[Query]:
        """Rewrite ``t`` at its root in every way the rule allows."""
        out = []
        for s in match(self.lhs, t):
            if self.applies(s):
                r = self.transform(s)
                if r not in out:
                    out.append(r)
        return out

    def __repr__(self) -> str:
        return f"RewriteRule({self.name!r})"


def canonicalize_matcher(m):
    if isinstance(m, MUnion):
        return MUnion(canonicalize_matcher(m.left), canonicalize_matcher(m.right))
    if isinstance(m, MCount):
        return MCount(m.path, canonicalize_matcher(m.inner))
    if isinstance(m, MLeaf) and isinstance(m.pattern, Pattern):
        return MLeaf(canonicalize_pattern(m.pattern), m.filter)
    if isinstance(m, (Union, Count, PatternLeaf)):
        return canonicalize_query(m)
    return m


def _canonical_value(v):
    if isinstance(v, Pattern):
        return canonicalize_pattern(v)
    return canonicalize_query(v)


def _wrapped_transform(inner: Callable[[Subst], Query], s: Subst) -> Query:
    return canonicalize_query(inner({k: _canonical_value(v) for k, v in s.items()}))


def respect_wrap(rule: RewriteRule) -> RewriteRule:
    """Canonicalize the matcher and sandwich the transform between canonicalizations."""
    if rule.canonical:
        return rule
    if not is_opaque(rule.lhs):
        raise RuleError(f"rule {rule.name!r}: matcher destructures a pattern; only whole-pattern matching is allowed")
    rhs = canonicalize_matcher(rule.rhs) if rule.rhs is not None else None
    return RewriteRule(
        rule.name,
        canonicalize_matcher(rule.lhs),
        partial(_wrapped_transform, rule.transform),
        rule.condition,
        rhs,
        canonical=True,
    )


def one_step_rewrites(t: Query, rules) -> list[Query]:
    """Terms reachable from ``t`` by one rule application at a single position."""
    out: list[Query] = []

    def add(x):
        if x not in out:
            out.append(x)

    for r in rules:
        for x in r.apply(t):
            add(x)
    if isinstance(t, Union):
        for x in one_step_rewrites(t.left, rules):
            add(Union(x, t.right))
        for x in one_step_rewrites(t.right, rules):
            add(Union(t.left, x))
    elif isinstance(t, Count):
        for x in one_step_rewrites(t.inner, rules):
            add(Count(t.path, x))
    return out


# -- built-in rules -----------------------------------------------------------------

_X, _Y, _Z = QVar("x"), QVar("y"), QVar("z")
_P, _F = PatVar("p"), FilterVar("f")


def _disjoint_nesting(s: Subst) -> bool:
    return not (s["pi1"] & s["pi2"])


def builtin_rules() -> list[RewriteRule]:
    """Union commutativity/associativity, Count distribution, nesting and leaf merges.

    Associativity is bidirectional and appears as two one-way rules.
    Commutativity is its own reverse, so a single rule covers both
    directions.
    """
    pi1, pi2 = ProvVar("pi1"), ProvVar("pi2")
    n1, n2 = ScalarVar("n1"), ScalarVar("n2")
    path, path1, path2 = PathVar("path"), PathVar("path1"), PathVar("path2")
    pl = MLeaf(_P, _F)
    return [
        RewriteRule.from_template("union-comm", MUnion(_X, _Y), MUnion(_Y, _X)),
        RewriteRule.from_template("union-assoc-l", MUnion(_X, MUnion(_Y, _Z)), MUnion(MUnion(_X, _Y), _Z)),
        RewriteRule.from_template("union-assoc-r", MUnion(MUnion(_X, _Y), _Z), MUnion(_X, MUnion(_Y, _Z))),
        RewriteRule.from_template(
            "count-distrib", MCount(path, MUnion(_X, _Y)), MUnion(MCount(path, _X), MCount(path, _Y))
        ),
        RewriteRule.from_template(
            "count-nest",
            MCount(entry(pi1, n1), MCount(entry(pi2, n2), _X)),
            MCount(entry(ProvProduct((pi1, pi2)), CoefExpr("mul", (n1, n2))), _X),
            condition=_disjoint_nesting,
        ),
        RewriteRule.from_template(
            "leaf-merge-coef",
            MUnion(MCount(entry(pi1, n1), pl), MCount(entry(pi1, n2), pl)),
            MCount(entry(pi1, CoefExpr("add", (n1, n2))), pl),
        ),
        RewriteRule.from_template(
            "leaf-merge-path",
            MUnion(MCount(path1, pl), MCount(path2, pl)),
            MCount(PathSum((path1, path2)), pl),
        ),
    ]


def cancellation_rules() -> list[RewriteRule]:
    """Drop a Count whose path became empty (every coefficient cancelled)."""
    return [RewriteRule.from_template("drop-zero-count", MUnion(MCount(EMPTY_PATH, _X), _Y), _Y)]
