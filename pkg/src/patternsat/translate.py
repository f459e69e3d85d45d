"""Mining problems as batched pattern queries: quasi-cliques and approximate matching."""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

from .errors import PatternError
from .pattern import Pattern, canonicalize_pattern, enumerate_connected_patterns
from .query import Query, count, leaf, union_of

PROV_MODES = ("collective", "individual")


def batch_query(patterns: list[Pattern], mode: str = "collective", atom: str = "q") -> Query:
    """Union of unit-coefficient Counts: one shared atom, or one atom per pattern."""
    if mode not in PROV_MODES:
        raise ValueError(f"provenance mode must be one of {PROV_MODES}, got {mode!r}")
    if not patterns:
        raise PatternError("empty pattern batch")
    terms = []
    for i, p in enumerate(patterns):
        name = atom if mode == "collective" else f"{atom}{i}"
        terms.append(count(leaf(p), {name}))
    return union_of(terms)


def min_degree_threshold(k: int, gamma, floor: bool = False) -> int:
    bound = Fraction(gamma) * (k - 1)
    return math.floor(bound) if floor else math.ceil(bound)


def quasi_clique_patterns(k: int, gamma, floor: bool = False) -> list[Pattern]:
    if not 3 <= k <= 5:
        raise PatternError(f"quasi-clique size must be 3..5, got {k}")
    gamma = Fraction(gamma)
    if not 0 < gamma <= 1:
        raise PatternError(f"gamma must be in (0, 1], got {gamma}")
    d = min_degree_threshold(k, gamma, floor)
    return sorted((p for p in enumerate_connected_patterns(k) if min(p.degrees()) >= d), key=Pattern.sort_key)


def quasi_clique_query(k: int, gamma, mode: str = "collective", floor: bool = False) -> Query:
    return batch_query(quasi_clique_patterns(k, gamma, floor), mode)


def approx_patterns(p: Pattern, k: int, allow_disconnected: bool = False) -> list[Pattern]:
    """Patterns that become ``p`` again by adding back at most ``k`` edges."""
    if p.anti_edges:
        raise PatternError("approximate matching expects an anti-edge-free pattern")
    if not p.is_connected():
        raise PatternError("approximate matching expects a connected pattern")
    if k < 0:
        raise PatternError(f"k must be nonnegative, got {k}")
    edges = sorted(p.edges)
    out = set()
    for r in range(min(k, len(edges)) + 1):
        for drop in itertools.combinations(edges, r):
            q = Pattern.of(p.n, set(edges) - set(drop))
            if allow_disconnected or q.is_connected():
                out.add(canonicalize_pattern(q))
    return sorted(out, key=Pattern.sort_key)


def approx_query(p: Pattern, k: int, mode: str = "collective", allow_disconnected: bool = False) -> Query:
    return batch_query(approx_patterns(p, k, allow_disconnected), mode)
