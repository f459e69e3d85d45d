"""Small constraint patterns: edges, anti-edges, canonical labeling.

Patterns are tiny (at most 8 vertices), so every structural question is
answered by enumerating vertex permutations, vectorized with numpy.
The canonical form of a pattern is the relabeling whose pair-state string
is lexicographically smallest, where the unordered vertex pairs are listed
in lexicographic order and each pair contributes two bits
(``00`` nothing, ``01`` edge, ``10`` anti-edge).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

import numpy as np

from .errors import PatternError, PatternSizeError, QueryParseError

MAX_CANON_SIZE = 8
MAX_ENUM_SIZE = 6

NONE, EDGE, ANTI = 0, 1, 2

Pair = tuple[int, int]


def _pair(u: int, v: int) -> Pair:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True, order=False)
class Pattern:
    n: int
    edges: frozenset[Pair]
    anti_edges: frozenset[Pair] = frozenset()

    def __post_init__(self):
        if not isinstance(self.n, int) or self.n < 1:
            raise PatternError(f"vertex count must be a positive integer, got {self.n!r}")
        for kind in ("edges", "anti_edges"):
            pairs = getattr(self, kind)
            norm = frozenset(_pair(int(u), int(v)) for u, v in pairs)
            for u, v in norm:
                if u == v:
                    raise PatternError(f"self-pair ({u},{v}) in {kind}")
                if u < 0 or v >= self.n:
                    raise PatternError(f"pair ({u},{v}) out of range for n={self.n}")
            object.__setattr__(self, kind, norm)
        both = self.edges & self.anti_edges
        if both:
            raise PatternError(f"pairs {sorted(both)} are both edge and anti-edge")

    @classmethod
    def of(cls, n: int, edges: Iterable[Pair] = (), anti_edges: Iterable[Pair] = ()) -> "Pattern":
        return cls(n, frozenset(edges), frozenset(anti_edges))

    def state(self, u: int, v: int) -> int:
        p = _pair(u, v)
        if p in self.edges:
            return EDGE
        if p in self.anti_edges:
            return ANTI
        return NONE

    def matrix(self) -> np.ndarray:
        m = np.zeros((self.n, self.n), dtype=np.int64)
        for u, v in self.edges:
            m[u, v] = m[v, u] = EDGE
        for u, v in self.anti_edges:
            m[u, v] = m[v, u] = ANTI
        return m

    def encoding(self) -> int:
        """Pair-state string of this labeling, read as an integer."""
        code = 0
        for u, v in _pairs(self.n):
            code = (code << 2) | self.state(u, v)
        return code

    def relabel(self, perm: Iterable[int]) -> "Pattern":
        """Move vertex ``v`` to ``perm[v]``."""
        perm = tuple(perm)
        if sorted(perm) != list(range(self.n)):
            raise PatternError(f"{perm} is not a permutation of 0..{self.n - 1}")
        return Pattern(
            self.n,
            frozenset(_pair(perm[u], perm[v]) for u, v in self.edges),
            frozenset(_pair(perm[u], perm[v]) for u, v in self.anti_edges),
        )

    def non_adjacent_pairs(self) -> list[Pair]:
        return [p for p in _pairs(self.n) if p not in self.edges]

    def is_connected(self) -> bool:
        adj: dict[int, set[int]] = {v: set() for v in range(self.n)}
        for u, v in self.edges:
            adj[u].add(v)
            adj[v].add(u)
        seen = {0}
        stack = [0]
        while stack:
            for w in adj[stack.pop()]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == self.n

    def degrees(self) -> list[int]:
        deg = [0] * self.n
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    def sort_key(self) -> tuple[int, int]:
        return (self.n, self.encoding())

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "edges": [list(e) for e in sorted(self.edges)],
            "antiEdges": [list(e) for e in sorted(self.anti_edges)],
        }

    def __repr__(self) -> str:
        parts = [f"n={self.n}", f"edges={sorted(self.edges)}"]
        if self.anti_edges:
            parts.append(f"anti={sorted(self.anti_edges)}")
        return f"Pattern({', '.join(parts)})"


def pattern_from_json(obj, location: str = "$") -> Pattern:
    if not isinstance(obj, dict):
        raise QueryParseError("pattern must be an object", location)
    unknown = set(obj) - {"n", "edges", "antiEdges"}
    if unknown:
        raise QueryParseError(f"unknown pattern keys {sorted(unknown)}", location)
    n = obj.get("n")
    if not isinstance(n, int) or isinstance(n, bool):
        raise QueryParseError("'n' must be an integer", f"{location}.n")
    lists = {}
    for key in ("edges", "antiEdges"):
        raw = obj.get(key, [])
        if not isinstance(raw, list):
            raise QueryParseError(f"'{key}' must be a list", f"{location}.{key}")
        pairs = []
        for i, item in enumerate(raw):
            loc = f"{location}.{key}[{i}]"
            if (
                not isinstance(item, list)
                or len(item) != 2
                or not all(isinstance(x, int) and not isinstance(x, bool) for x in item)
            ):
                raise QueryParseError("pair must be [u, v] with integer endpoints", loc)
            u, v = item
            if not u < v:
                raise QueryParseError(f"pair must satisfy u < v, got [{u}, {v}]", loc)
            pairs.append((u, v))
        lists[key] = pairs
    try:
        return Pattern.of(n, lists["edges"], lists["antiEdges"])
    except PatternError as exc:
        raise QueryParseError(str(exc), location) from exc


# -- permutation machinery ----------------------------------------------------


@lru_cache(maxsize=None)
def _pairs(n: int) -> tuple[Pair, ...]:
    return tuple(itertools.combinations(range(n), 2))


@lru_cache(maxsize=None)
def _perms(n: int) -> np.ndarray:
    # row r, column i: the old vertex that receives new label i
    return np.array(list(itertools.permutations(range(n))), dtype=np.intp).reshape(-1, n)


@lru_cache(maxsize=None)
def _pair_columns(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pairs = _pairs(n)
    first = np.array([u for u, _ in pairs], dtype=np.intp)
    second = np.array([v for _, v in pairs], dtype=np.intp)
    weights = np.array([4 ** (len(pairs) - 1 - k) for k in range(len(pairs))], dtype=np.int64)
    return first, second, weights


def _relabeled_codes(p: Pattern) -> np.ndarray:
    perms = _perms(p.n)
    first, second, weights = _pair_columns(p.n)
    states = p.matrix()[perms[:, first], perms[:, second]]
    return states @ weights


def _check_size(p: Pattern) -> None:
    if p.n > MAX_CANON_SIZE:
        raise PatternSizeError(
            f"pattern has {p.n} vertices; brute-force labeling supports at most {MAX_CANON_SIZE}"
        )


@lru_cache(maxsize=65536)
def canonicalize_pattern(p: Pattern) -> Pattern:
    _check_size(p)
    if p.n == 1:
        return p
    codes = _relabeled_codes(p)
    best = _perms(p.n)[int(np.argmin(codes))]
    # new label i <- old vertex best[i]; relabel() wants old -> new
    inverse = [0] * p.n
    for new, old in enumerate(best):
        inverse[int(old)] = new
    return p.relabel(inverse)


def is_canonical(p: Pattern) -> bool:
    return canonicalize_pattern(p) == p


def isomorphic(p: Pattern, q: Pattern) -> bool:
    if p.n != q.n or len(p.edges) != len(q.edges) or len(p.anti_edges) != len(q.anti_edges):
        return False
    return canonicalize_pattern(p) == canonicalize_pattern(q)


@lru_cache(maxsize=65536)
def automorphism_count(p: Pattern) -> int:
    _check_size(p)
    if p.n == 1:
        return 1
    codes = _relabeled_codes(p)
    return int(np.count_nonzero(codes == p.encoding()))


@lru_cache(maxsize=65536)
def embedding_count(p: Pattern, q: Pattern) -> int:
    """Bijections from p's vertices onto q's carrying every edge of p onto an edge of q."""
    if p.n != q.n:
        raise PatternError(f"vertex-count mismatch: {p.n} vs {q.n}")
    if p.anti_edges:
        raise PatternError("embedding_count expects a pattern without anti-edges")
    _check_size(q)
    if not p.edges:
        return len(_perms(p.n))
    perms = _perms(p.n)
    qm = q.matrix()
    ok = np.ones(len(perms), dtype=bool)
    for u, v in p.edges:
        ok &= qm[perms[:, u], perms[:, v]] == EDGE
    return int(np.count_nonzero(ok))


def occurrence_coefficient(p: Pattern, q: Pattern) -> int:
    emb = embedding_count(p, q)
    aut = automorphism_count(p)
    assert emb % aut == 0, "embeddings must split into automorphism orbits"
    return emb // aut


def saturate_anti_edges(p: Pattern) -> Pattern:
    if p.anti_edges:
        raise PatternError("pattern already carries anti-edges")
    return canonicalize_pattern(Pattern(p.n, p.edges, frozenset(p.non_adjacent_pairs())))


@lru_cache(maxsize=4096)
def _super_patterns(p: Pattern) -> tuple[Pattern, ...]:
    missing = p.non_adjacent_pairs()
    found: set[Pattern] = set()
    for r in range(1, len(missing) + 1):
        for extra in itertools.combinations(missing, r):
            found.add(canonicalize_pattern(Pattern(p.n, p.edges | frozenset(extra))))
    return tuple(sorted(found, key=Pattern.sort_key))


def super_patterns(p: Pattern) -> list[Pattern]:
    """Strict same-size super-patterns of ``p``, one per isomorphism class."""
    if p.anti_edges:
        raise PatternError("super_patterns expects a pattern without anti-edges")
    _check_size(p)
    return list(_super_patterns(p))


@lru_cache(maxsize=None)
def _connected_patterns(n: int) -> tuple[Pattern, ...]:
    # grow every isomorphism class one edge at a time from the empty graph
    level = {canonicalize_pattern(Pattern(n, frozenset()))}
    everything = set(level)
    while level:
        nxt = set()
        for g in level:
            for pair in g.non_adjacent_pairs():
                h = canonicalize_pattern(Pattern(n, g.edges | {pair}))
                if h not in everything:
                    everything.add(h)
                    nxt.add(h)
        level = nxt
    return tuple(sorted((g for g in everything if g.is_connected()), key=Pattern.sort_key))


def enumerate_connected_patterns(n: int) -> list[Pattern]:
    if not 1 <= n <= MAX_ENUM_SIZE:
        raise PatternSizeError(f"enumeration supports 1 <= n <= {MAX_ENUM_SIZE}, got {n}")
    return list(_connected_patterns(n))


# -- named shapes used throughout tests, rules and the CLI ----------------------


def clique(n: int) -> Pattern:
    return Pattern.of(n, itertools.combinations(range(n), 2))


def path(n: int) -> Pattern:
    return Pattern.of(n, [(i, i + 1) for i in range(n - 1)])


def cycle(n: int) -> Pattern:
    return Pattern.of(n, [(i, (i + 1) % n) for i in range(n)])


TRIANGLE = clique(3)
WEDGE = path(3)
ANTI_WEDGE = Pattern.of(3, [(0, 1), (1, 2)], [(0, 2)])
FOUR_CYCLE = cycle(4)
DIAMOND = Pattern.of(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3)])
TAILED_TRIANGLE = Pattern.of(4, [(0, 1), (1, 2), (0, 2), (2, 3)])
K4 = clique(4)
