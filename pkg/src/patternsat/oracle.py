"""Exact reference semantics: brute-force matching and query evaluation.

Nothing here relies on canonical labeling, so the oracle stays an
independent check on everything the optimizer does with canonical forms.

Counts are *occurrences*: injective assignments satisfying every edge,
anti-edge and filter constraint, identified up to the pattern's
automorphisms. Query results are finite maps from provenance (a set of
atoms, the empty set being the unit) to exact rationals. A Count node
looks up its inner result at the remainder ``pi - S`` for every path
entry ``(S, x)`` with ``S <= pi``.
"""

from __future__ import annotations

import itertools
import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from types import MappingProxyType
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np

from .errors import FilterError, QueryParseError
from .pattern import Pattern
from .query import TOP, Count, PatternLeaf, Query, Union, atoms_of, prov_key

MAX_GRAPH_SIZE = 64
# below this size, counts go through exhaustive vertex-subset enumeration
_SUBSET_LIMIT = 16

ProvResult = dict  # frozenset[str] -> Fraction, zero values never stored


# -- data graphs -------------------------------------------------------------------


@dataclass(frozen=True)
class DataGraph:
    V: int
    edges: frozenset[tuple[int, int]]
    adj: tuple[frozenset[int], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0 <= self.V <= MAX_GRAPH_SIZE:
            raise ValueError(f"data graphs are capped at {MAX_GRAPH_SIZE} vertices, got {self.V}")
        norm = set()
        for u, v in self.edges:
            if u == v:
                raise ValueError(f"self-loop at {u}")
            if not (0 <= u < self.V and 0 <= v < self.V):
                raise ValueError(f"edge ({u},{v}) out of range")
            norm.add((min(u, v), max(u, v)))
        object.__setattr__(self, "edges", frozenset(norm))
        nbrs: list[set[int]] = [set() for _ in range(self.V)]
        for u, v in norm:
            nbrs[u].add(v)
            nbrs[v].add(u)
        object.__setattr__(self, "adj", tuple(frozenset(s) for s in nbrs))

    def has_edge(self, u: int, v: int) -> bool:
        return v in self.adj[u]

    @classmethod
    def complete(cls, n: int) -> "DataGraph":
        return cls(n, frozenset(itertools.combinations(range(n), 2)))

    @classmethod
    def cycle(cls, n: int) -> "DataGraph":
        return cls(n, frozenset((i, (i + 1) % n) for i in range(n)))

    @classmethod
    def from_text(cls, text: str, V: int | None = None) -> "DataGraph":
        """Parse a ``u v`` per line edge list ('#' comments, 0-based)."""
        edges = set()
        top = -1
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise QueryParseError(f"expected 'u v', got {line!r}", f"line {lineno}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError as exc:
                raise QueryParseError(f"non-integer vertex in {line!r}", f"line {lineno}") from exc
            if u < 0 or v < 0 or u == v:
                raise QueryParseError(f"invalid edge {line!r}", f"line {lineno}")
            edges.add((min(u, v), max(u, v)))
            top = max(top, u, v)
        return cls(V if V is not None else top + 1, frozenset(edges))

    def to_text(self) -> str:
        return "".join(f"{u} {v}\n" for u, v in sorted(self.edges))


@dataclass(frozen=True)
class GraphDistribution:
    """Erdős–Rényi graphs with vertex count and edge probability drawn uniformly."""

    v_min: int = 8
    v_max: int = 12
    p_min: float = 0.3
    p_max: float = 0.7

    def sample(self, rng: random.Random) -> DataGraph:
        V = rng.randint(self.v_min, self.v_max)
        p = rng.uniform(self.p_min, self.p_max)
        return DataGraph(V, frozenset(e for e in itertools.combinations(range(V), 2) if rng.random() < p))


# -- filters -----------------------------------------------------------------------


def _outside_neighbors(g: DataGraph, x: int, image: frozenset[int]) -> frozenset[int]:
    return g.adj[x] - image


@dataclass(frozen=True)
class ExtDegreeAtLeast:
    v: int
    k: int

    def holds(self, g: DataGraph, sigma: Sequence[int], image: frozenset[int]) -> bool:
        return len(_outside_neighbors(g, sigma[self.v], image)) >= self.k

    def to_json(self) -> dict:
        return {"kind": "extDegreeAtLeast", "v": self.v, "k": self.k}


@dataclass(frozen=True)
class ExtDegreeAllAtLeast:
    k: int

    def holds(self, g: DataGraph, sigma: Sequence[int], image: frozenset[int]) -> bool:
        return all(len(_outside_neighbors(g, x, image)) >= self.k for x in sigma)

    def to_json(self) -> dict:
        return {"kind": "extDegreeAllAtLeast", "k": self.k}


@dataclass(frozen=True)
class EdgeExtraTrianglesAtLeast:
    u: int
    v: int
    k: int

    def holds(self, g: DataGraph, sigma: Sequence[int], image: frozenset[int]) -> bool:
        a, b = sigma[self.u], sigma[self.v]
        if not g.has_edge(a, b):
            return False
        return len((g.adj[a] & g.adj[b]) - image) >= self.k

    def to_json(self) -> dict:
        return {"kind": "edgeExtraTrianglesAtLeast", "u": self.u, "v": self.v, "k": self.k}


Constraint = ExtDegreeAtLeast | ExtDegreeAllAtLeast | EdgeExtraTrianglesAtLeast


@dataclass(frozen=True)
class Filter:
    """A named conjunction of constraints; an empty conjunction is always true."""

    name: str
    constraints: tuple = field(default=(), compare=False)

    @property
    def is_top(self) -> bool:
        return not self.constraints

    def max_vertex(self) -> int:
        hi = -1
        for c in self.constraints:
            for attr in ("v", "u"):
                if hasattr(c, attr):
                    hi = max(hi, getattr(c, attr))
        return hi

    def __call__(self, g: DataGraph, sigma: Sequence[int]) -> bool:
        if not self.constraints:
            return True
        image = frozenset(sigma)
        return all(c.holds(g, sigma, image) for c in self.constraints)

    def to_json(self) -> dict:
        return {"name": self.name, "all": [c.to_json() for c in self.constraints]}


TOP_FILTER = Filter(TOP)


def _nonneg_int(obj, key, loc):
    val = obj.get(key)
    if not isinstance(val, int) or isinstance(val, bool) or val < 0:
        raise QueryParseError(f"'{key}' must be a non-negative integer", f"{loc}.{key}")
    return val


def filter_from_json(obj, location: str = "$") -> Filter:
    if not isinstance(obj, dict) or not isinstance(obj.get("name"), str) or not obj["name"]:
        raise QueryParseError("filter needs a non-empty 'name'", location)
    raw = obj.get("all", [])
    if not isinstance(raw, list):
        raise QueryParseError("'all' must be a list", f"{location}.all")
    out = []
    for i, c in enumerate(raw):
        loc = f"{location}.all[{i}]"
        kind = c.get("kind") if isinstance(c, dict) else None
        if kind == "extDegreeAtLeast":
            out.append(ExtDegreeAtLeast(_nonneg_int(c, "v", loc), _nonneg_int(c, "k", loc)))
        elif kind == "extDegreeAllAtLeast":
            out.append(ExtDegreeAllAtLeast(_nonneg_int(c, "k", loc)))
        elif kind == "edgeExtraTrianglesAtLeast":
            out.append(
                EdgeExtraTrianglesAtLeast(
                    _nonneg_int(c, "u", loc), _nonneg_int(c, "v", loc), _nonneg_int(c, "k", loc)
                )
            )
        else:
            raise QueryParseError(f"unknown constraint kind {kind!r}", loc)
    if obj["name"] == TOP and out:
        raise QueryParseError("'top' is reserved for the always-true filter", location)
    return Filter(obj["name"], tuple(out))


class FilterRegistry(Mapping[str, Filter]):
    """Immutable name -> filter map; ``top`` is always present."""

    def __init__(self, filters: Sequence[Filter] = ()):
        table = {TOP: TOP_FILTER}
        for f in filters:
            if f.name in table and table[f.name].constraints != f.constraints:
                raise FilterError(f"conflicting definitions for filter {f.name!r}")
            table[f.name] = f
        self._table = MappingProxyType(table)

    def __getitem__(self, name: str) -> Filter:
        try:
            return self._table[name]
        except KeyError:
            raise FilterError(f"unregistered filter {name!r}") from None

    def __iter__(self):
        return iter(self._table)

    def __len__(self) -> int:
        return len(self._table)

    def with_filters(self, filters: Sequence[Filter]) -> "FilterRegistry":
        return FilterRegistry(list(self._table.values()) + list(filters))


DEFAULT_REGISTRY = FilterRegistry()


# -- matching ----------------------------------------------------------------------


@lru_cache(maxsize=4096)
def _oracle_automorphisms(p: Pattern) -> int:
    count = 0
    for perm in itertools.permutations(range(p.n)):
        if all((min(perm[u], perm[v]), max(perm[u], perm[v])) in p.edges for u, v in p.edges) and all(
            (min(perm[u], perm[v]), max(perm[u], perm[v])) in p.anti_edges for u, v in p.anti_edges
        ):
            count += 1
    return count


def _search_order(p: Pattern) -> list[int]:
    adj = {v: set() for v in range(p.n)}
    for u, v in p.edges:
        adj[u].add(v)
        adj[v].add(u)
    order: list[int] = []
    remaining = set(range(p.n))
    while remaining:
        start = max(remaining, key=lambda v: (len(adj[v]), -v))
        frontier = [start]
        while frontier:
            v = frontier.pop(0)
            if v not in remaining:
                continue
            remaining.discard(v)
            order.append(v)
            frontier.extend(sorted(adj[v] & remaining, key=lambda w: (-len(adj[w]), w)))
    return order


def assignments(g: DataGraph, p: Pattern) -> Iterator[tuple[int, ...]]:
    """All injective maps pattern -> graph honouring edges and anti-edges (backtracking)."""
    if p.n > g.V:
        return
    order = _search_order(p)
    pos = {v: i for i, v in enumerate(order)}
    # constraints against earlier-placed vertices
    checks: list[list[tuple[int, bool]]] = [[] for _ in order]
    for u, v in p.edges:
        a, b = sorted((u, v), key=pos.__getitem__)
        checks[pos[b]].append((a, True))
    for u, v in p.anti_edges:
        a, b = sorted((u, v), key=pos.__getitem__)
        checks[pos[b]].append((a, False))
    sigma = [-1] * p.n
    used: set[int] = set()
    everything = range(g.V)

    def extend(i: int):
        if i == len(order):
            yield tuple(sigma)
            return
        v = order[i]
        anchors = [a for a, is_edge in checks[i] if is_edge]
        candidates = g.adj[sigma[anchors[0]]] if anchors else everything
        for x in candidates:
            if x in used:
                continue
            if all(g.has_edge(sigma[a], x) == is_edge for a, is_edge in checks[i]):
                sigma[v] = x
                used.add(x)
                yield from extend(i + 1)
                used.discard(x)
        sigma[v] = -1

    yield from extend(0)


@lru_cache(maxsize=4096)
def _bijection_requirements(p: Pattern) -> tuple[np.ndarray, np.ndarray]:
    """For each bijection onto positions 0..n-1: (required edge bits, required non-edge bits)."""
    n = p.n
    bit = {pair: 1 << i for i, pair in enumerate(itertools.combinations(range(n), 2))}
    req_e, req_a = [], []
    for perm in itertools.permutations(range(n)):
        e = a = 0
        for u, v in p.edges:
            e |= bit[(min(perm[u], perm[v]), max(perm[u], perm[v]))]
        for u, v in p.anti_edges:
            a |= bit[(min(perm[u], perm[v]), max(perm[u], perm[v]))]
        req_e.append(e)
        req_a.append(a)
    return np.array(req_e, dtype=np.int64), np.array(req_a, dtype=np.int64)


class Evaluator:
    """Evaluates queries on one data graph, caching per-leaf counts."""

    def __init__(self, g: DataGraph, registry: FilterRegistry = DEFAULT_REGISTRY):
        self.g = g
        self.registry = registry
        self._counts: dict[tuple[Pattern, str], int] = {}
        self._masks: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def _subset_masks(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Distinct induced-subgraph bitmasks over all k-subsets, with multiplicities."""
        if k not in self._masks:
            g = self.g
            pairs = list(itertools.combinations(range(k), 2))
            masks = []
            for subset in itertools.combinations(range(g.V), k):
                m = 0
                for i, (a, b) in enumerate(pairs):
                    if subset[b] in g.adj[subset[a]]:
                        m |= 1 << i
                masks.append(m)
            uniq, mult = np.unique(np.array(masks, dtype=np.int64), return_counts=True)
            self._masks[k] = (uniq, mult)
        return self._masks[k]

    def raw_assignments(self, p: Pattern) -> int:
        """Number of injective assignments satisfying edges and anti-edges (no filter)."""
        if p.n > self.g.V:
            return 0
        if self.g.V <= _SUBSET_LIMIT:
            masks, mult = self._subset_masks(p.n)
            req_e, req_a = _bijection_requirements(p)
            ok = ((masks[:, None] & req_e[None, :]) == req_e[None, :]) & ((masks[:, None] & req_a[None, :]) == 0)
            return int(ok.sum(axis=1) @ mult)
        return sum(1 for _ in assignments(self.g, p))

    def count_matches(self, p: Pattern, filter_name: str = TOP) -> int:
        key = (p, filter_name)
        if key not in self._counts:
            f = self.registry[filter_name]
            if f.max_vertex() >= p.n:
                raise FilterError(f"filter {filter_name!r} refers to vertex {f.max_vertex()} of a {p.n}-vertex pattern")
            if f.is_top:
                raw = self.raw_assignments(p)
                aut = _oracle_automorphisms(p)
                assert raw % aut == 0
                self._counts[key] = raw // aut
            else:
                # the filter may distinguish automorphic assignments, so count orbits
                # (same image, same edge and anti-edge images) that contain a passing one
                orbits = set()
                for sigma in assignments(self.g, p):
                    if f(self.g, sigma):
                        orbits.add(
                            (
                                frozenset(sigma),
                                frozenset(frozenset((sigma[u], sigma[v])) for u, v in p.edges),
                                frozenset(frozenset((sigma[u], sigma[v])) for u, v in p.anti_edges),
                            )
                        )
                self._counts[key] = len(orbits)
        return self._counts[key]

    def evaluate(self, q: Query) -> ProvResult:
        if isinstance(q, PatternLeaf):
            c = self.count_matches(q.pattern, q.filter)
            return {frozenset(): Fraction(c)} if c else {}
        if isinstance(q, Union):
            out = dict(self.evaluate(q.left))
            for p, x in self.evaluate(q.right).items():
                s = out.get(p, 0) + x
                if s:
                    out[p] = s
                else:
                    out.pop(p, None)
            return out
        if isinstance(q, Count):
            inner = self.evaluate(q.inner)
            out: ProvResult = {}
            for s, x in q.path.entries:
                for t, y in inner.items():
                    if s & t:
                        continue
                    key = s | t
                    val = out.get(key, 0) + x * y
                    if val:
                        out[key] = val
                    else:
                        out.pop(key, None)
            return out
        raise TypeError(f"not a query term: {q!r}")


def count_matches(g: DataGraph, p: Pattern, filter_name: str = TOP, registry: FilterRegistry = DEFAULT_REGISTRY) -> int:
    return Evaluator(g, registry).count_matches(p, filter_name)


def evaluate_result(g: DataGraph, q: Query, registry: FilterRegistry = DEFAULT_REGISTRY) -> ProvResult:
    return Evaluator(g, registry).evaluate(q)


def evaluate_query(
    g: DataGraph, q: Query, registry: FilterRegistry = DEFAULT_REGISTRY, at: frozenset[str] = frozenset()
) -> Fraction:
    return Fraction(evaluate_result(g, q, registry).get(frozenset(at), 0))


# -- differential testing ------------------------------------------------------------


@dataclass
class Witness:
    graph: DataGraph
    atom: frozenset[str]
    left: Fraction
    right: Fraction

    def to_json(self) -> dict:
        return {
            "graph": {"V": self.graph.V, "edges": [list(e) for e in sorted(self.graph.edges)]},
            "provenance": sorted(self.atom),
            "left": f"{self.left.numerator}/{self.left.denominator}",
            "right": f"{self.right.numerator}/{self.right.denominator}",
        }


@dataclass
class EquivalenceReport:
    passed: bool
    trials: int
    seed: int | None
    atoms: frozenset[str]
    witness: Witness | None = None

    def __bool__(self) -> bool:
        return self.passed

    def to_json(self) -> dict:
        out = {"passed": self.passed, "trials": self.trials, "seed": self.seed, "atoms": sorted(self.atoms)}
        if self.witness is not None:
            out["witness"] = self.witness.to_json()
        return out


def evaluation_points(atoms: frozenset[str], limit: int = 8) -> list[frozenset[str]]:
    """The unit, every single atom, and (for small universes) every atom set."""
    ordered = sorted(atoms)
    if len(ordered) <= limit:
        return [frozenset(c) for r in range(len(ordered) + 1) for c in itertools.combinations(ordered, r)]
    return [frozenset()] + [frozenset([a]) for a in ordered]


def compare_results(g: DataGraph, r1: ProvResult, r2: ProvResult, points) -> Witness | None:
    """First provenance where two results differ: listed points first, then any support key."""
    for p in list(points) + sorted(set(r1) | set(r2), key=prov_key):
        a, b = Fraction(r1.get(p, 0)), Fraction(r2.get(p, 0))
        if a != b:
            return Witness(g, p, a, b)
    return None


def queries_equivalent(
    q1: Query,
    q2: Query,
    registry: FilterRegistry = DEFAULT_REGISTRY,
    trials: int = 30,
    seed: int | None = 0,
    distribution: GraphDistribution = GraphDistribution(),
    graphs: Sequence[DataGraph] = (),
) -> EquivalenceReport:
    """Differential check of two queries on explicit graphs plus ``trials`` random ones.

    Whole provenance maps are compared, which covers every atom set, not only
    the unit and the atoms mentioned by either query.
    """
    atoms = atoms_of(q1) | atoms_of(q2)
    points = evaluation_points(atoms)
    rng = random.Random(seed)
    pool = list(graphs) + [distribution.sample(rng) for _ in range(trials)]
    for g in pool:
        ev = Evaluator(g, registry)
        w = compare_results(g, ev.evaluate(q1), ev.evaluate(q2), points)
        if w is not None:
            return EquivalenceReport(False, len(pool), seed, atoms, w)
    return EquivalenceReport(True, len(pool), seed, atoms)


def load_filters(obj, location: str = "$") -> list[Filter]:
    if not isinstance(obj, list):
        raise QueryParseError("filters must be a list", location)
    return [filter_from_json(f, f"{location}[{i}]") for i, f in enumerate(obj)]


def registry_from_json_text(text: str) -> FilterRegistry:
    return FilterRegistry(load_filters(json.loads(text)))
