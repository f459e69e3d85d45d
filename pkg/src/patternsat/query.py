"""Query terms, provenance, reconstruction paths and their JSON form."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Union as TUnion

from .errors import QueryParseError
from .pattern import Pattern, canonicalize_pattern, pattern_from_json

Provenance = frozenset
UNIT: frozenset[str] = frozenset()
TOP = "top"


def prov(*atoms: str) -> frozenset[str]:
    return frozenset(atoms)


def prov_product(a: frozenset[str], b: frozenset[str]) -> frozenset[str]:
    return a | b


def prov_divides(a: frozenset[str], b: frozenset[str]) -> bool:
    return a <= b


def prov_key(p: frozenset[str]) -> tuple:
    return (len(p), tuple(sorted(p)))


def format_coef(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def parse_coef(text, location: str = "$") -> Fraction:
    if isinstance(text, bool) or not isinstance(text, (str, int)):
        raise QueryParseError("coefficient must be an 'n/d' string", location)
    if isinstance(text, str) and any(c in text for c in ".eE"):
        raise QueryParseError(f"coefficient {text!r} must be rational, not decimal", location)
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise QueryParseError(f"bad coefficient {text!r}", location) from exc


@dataclass(frozen=True)
class ReconstructionPath:
    """Sum of (provenance, coefficient) entries, kept in normal form.

    Entries with equal provenance are summed, zero entries dropped, and the
    rest sorted, so equal paths compare (and hash) equal.
    """

    entries: tuple[tuple[frozenset[str], Fraction], ...] = ()

    def __post_init__(self):
        acc: dict[frozenset[str], Fraction] = {}
        for p, x in self.entries:
            p = frozenset(p)
            acc[p] = acc.get(p, Fraction(0)) + Fraction(x)
        norm = tuple(sorted(((p, x) for p, x in acc.items() if x != 0), key=lambda e: prov_key(e[0])))
        object.__setattr__(self, "entries", norm)

    @classmethod
    def single(cls, p: Iterable[str] = UNIT, x=1) -> "ReconstructionPath":
        return cls(((frozenset(p), Fraction(x)),))

    def __add__(self, other: "ReconstructionPath") -> "ReconstructionPath":
        return ReconstructionPath(self.entries + other.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def atoms(self) -> frozenset[str]:
        out: frozenset[str] = frozenset()
        for p, _ in self.entries:
            out |= p
        return out

    def value_at(self, p: frozenset[str]) -> Fraction:
        return sum((x for q, x in self.entries if q <= p), Fraction(0))

    def to_json(self) -> list:
        return [{"prov": sorted(p), "coef": format_coef(x)} for p, x in self.entries]

    def __repr__(self) -> str:
        if not self.entries:
            return "[]"
        return " + ".join(f"({'·'.join(sorted(p)) or '1'}, {x})" for p, x in self.entries)


EMPTY_PATH = ReconstructionPath()


@dataclass(frozen=True)
class Union:
    left: "Query"
    right: "Query"


@dataclass(frozen=True)
class Count:
    path: ReconstructionPath
    inner: "Query"


@dataclass(frozen=True)
class PatternLeaf:
    pattern: Pattern
    filter: str = TOP


Query = TUnion[Union, Count, PatternLeaf]


def leaf(p: Pattern, filter: str = TOP) -> PatternLeaf:
    return PatternLeaf(p, filter)


def count(inner: Query, p: Iterable[str] = UNIT, x=1) -> Count:
    return Count(ReconstructionPath.single(p, x), inner)


def union_of(parts: Iterable[Query]) -> Query:
    """Right-nested union of one or more queries."""
    parts = list(parts)
    if not parts:
        raise ValueError("union_of needs at least one query")
    out = parts[-1]
    for q in reversed(parts[:-1]):
        out = Union(q, out)
    return out


def leaves(q: Query) -> Iterator[PatternLeaf]:
    stack = [q]
    while stack:
        t = stack.pop()
        if isinstance(t, PatternLeaf):
            yield t
        elif isinstance(t, Count):
            stack.append(t.inner)
        elif isinstance(t, Union):
            stack.append(t.right)
            stack.append(t.left)
        else:
            raise TypeError(f"not a query term: {t!r}")


def patterns_of(q: Query) -> set[tuple[Pattern, str]]:
    return {(lf.pattern, lf.filter) for lf in leaves(q)}


def atoms_of(q: Query) -> frozenset[str]:
    out: set[str] = set()
    stack = [q]
    while stack:
        t = stack.pop()
        if isinstance(t, Count):
            out |= t.path.atoms()
            stack.append(t.inner)
        elif isinstance(t, Union):
            stack.extend((t.left, t.right))
    return frozenset(out)


def term_size(q: Query) -> int:
    if isinstance(q, Union):
        return 1 + term_size(q.left) + term_size(q.right)
    if isinstance(q, Count):
        return 1 + term_size(q.inner)
    return 1


def canonicalize_query(q: Query) -> Query:
    if isinstance(q, PatternLeaf):
        c = canonicalize_pattern(q.pattern)
        return q if c == q.pattern else PatternLeaf(c, q.filter)
    if isinstance(q, Count):
        inner = canonicalize_query(q.inner)
        return q if inner is q.inner else Count(q.path, inner)
    if isinstance(q, Union):
        left, right = canonicalize_query(q.left), canonicalize_query(q.right)
        return q if (left is q.left and right is q.right) else Union(left, right)
    # anything else (e.g. an e-class reference inside a rewrite result) is opaque
    return q


def well_formedness_violation(q: Query, seen: frozenset[str] = frozenset()) -> str | None:
    """Return a description of the first atom reused by nested Counts, if any."""
    if isinstance(q, Count):
        here = q.path.atoms()
        clash = here & seen
        if clash:
            return f"atom(s) {sorted(clash)} appear in nested Count paths"
        return well_formedness_violation(q.inner, seen | here)
    if isinstance(q, Union):
        return well_formedness_violation(q.left, seen) or well_formedness_violation(q.right, seen)
    return None


def is_well_formed(q: Query) -> bool:
    return well_formedness_violation(q) is None


# -- JSON -----------------------------------------------------------------------


def query_to_json(q: Query) -> dict:
    if isinstance(q, Union):
        return {"union": [query_to_json(q.left), query_to_json(q.right)]}
    if isinstance(q, Count):
        return {"count": {"path": q.path.to_json(), "inner": query_to_json(q.inner)}}
    if isinstance(q, PatternLeaf):
        return {"pattern": {"p": q.pattern.to_json(), "filter": q.filter}}
    raise TypeError(f"cannot serialize {q!r}")


def serialize_query(q: Query, indent: int | None = None) -> str:
    return json.dumps(query_to_json(q), indent=indent, sort_keys=True)


def path_from_json(obj, location: str) -> ReconstructionPath:
    if not isinstance(obj, list):
        raise QueryParseError("path must be a list of entries", location)
    entries = []
    for i, e in enumerate(obj):
        loc = f"{location}[{i}]"
        if not isinstance(e, dict) or set(e) != {"prov", "coef"}:
            raise QueryParseError("entry must be {'prov': [...], 'coef': 'n/d'}", loc)
        atoms = e["prov"]
        if not isinstance(atoms, list) or not all(isinstance(a, str) and a for a in atoms):
            raise QueryParseError("'prov' must be a list of atom names", f"{loc}.prov")
        entries.append((frozenset(atoms), parse_coef(e["coef"], f"{loc}.coef")))
    return ReconstructionPath(tuple(entries))


def query_from_json(obj, location: str = "$") -> Query:
    if not isinstance(obj, dict) or len(obj) != 1:
        raise QueryParseError("query must be an object with exactly one of union/count/pattern", location)
    (tag, body), = obj.items()
    if tag == "union":
        if not isinstance(body, list) or len(body) != 2:
            raise QueryParseError("'union' takes exactly two queries", f"{location}.union")
        return Union(
            query_from_json(body[0], f"{location}.union[0]"),
            query_from_json(body[1], f"{location}.union[1]"),
        )
    if tag == "count":
        if not isinstance(body, dict) or set(body) != {"path", "inner"}:
            raise QueryParseError("'count' needs 'path' and 'inner'", f"{location}.count")
        return Count(
            path_from_json(body["path"], f"{location}.count.path"),
            query_from_json(body["inner"], f"{location}.count.inner"),
        )
    if tag == "pattern":
        if not isinstance(body, dict) or "p" not in body or set(body) - {"p", "filter"}:
            raise QueryParseError("'pattern' needs 'p' and optional 'filter'", f"{location}.pattern")
        name = body.get("filter", TOP)
        if not isinstance(name, str) or not name:
            raise QueryParseError("filter must be a non-empty name", f"{location}.pattern.filter")
        return PatternLeaf(pattern_from_json(body["p"], f"{location}.pattern.p"), name)
    raise QueryParseError(f"unknown query tag {tag!r}", location)


def parse_query(text: str, *, check_well_formed: bool = True) -> Query:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise QueryParseError(f"malformed JSON: {exc.msg}", f"line {exc.lineno} col {exc.colno}") from exc
    q = query_from_json(obj)
    if check_well_formed:
        problem = well_formedness_violation(q)
        if problem:
            raise QueryParseError(problem, "$")
    return q


def pretty(q: Query) -> str:
    if isinstance(q, Union):
        return f"Union({pretty(q.left)}, {pretty(q.right)})"
    if isinstance(q, Count):
        return f"Count({q.path!r}, {pretty(q.inner)})"
    if isinstance(q, PatternLeaf):
        f = "" if q.filter == TOP else f", {q.filter}"
        return f"Pattern({sorted(q.pattern.edges)}{'~' + str(sorted(q.pattern.anti_edges)) if q.pattern.anti_edges else ''}{f})"
    return repr(q)
