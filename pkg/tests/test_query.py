import itertools
import json
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from strategies import ATOMS, paths, queries
from patternsat.errors import QueryParseError
from patternsat.oracle import GraphDistribution, evaluate_result
from patternsat.pattern import DIAMOND, K4, TRIANGLE, WEDGE, Pattern, canonicalize_pattern
from patternsat.query import (
    EMPTY_PATH,
    UNIT,
    Count,
    PatternLeaf,
    ReconstructionPath,
    Union,
    canonicalize_query,
    count,
    format_coef,
    leaf,
    parse_coef,
    parse_query,
    patterns_of,
    prov,
    prov_divides,
    prov_product,
    serialize_query,
    term_size,
    union_of,
)
from patternsat.translate import quasi_clique_query

ALL_PROVS = [frozenset(c) for r in range(4) for c in itertools.combinations(ATOMS, r)]


# -- provenance ------------------------------------------------------------------


def test_prov_product_examples():
    assert prov_product(UNIT, prov("p1")) == prov("p1")
    assert prov_product(prov("p1"), prov("p1")) == prov("p1")
    assert prov_product(prov("p1"), prov("p2")) == prov("p1", "p2")


def test_prov_divides_examples():
    assert prov_divides(UNIT, prov("p1"))
    assert prov_divides(prov("p1"), prov("p1", "p2"))
    assert not prov_divides(prov("p1", "p2"), prov("p1"))


def test_prov_product_axioms_exhaustive():
    for a, b, c in itertools.product(ALL_PROVS, repeat=3):
        assert prov_product(a, prov_product(b, c)) == prov_product(prov_product(a, b), c)
        assert prov_product(a, b) == prov_product(b, a)
    for a in ALL_PROVS:
        assert prov_product(a, a) == a
        assert prov_product(UNIT, a) == a == prov_product(a, UNIT)


# -- coefficients and paths -----------------------------------------------------------


def test_coefficient_text():
    assert format_coef(Fraction(-2, 6)) == "-1/3"
    assert parse_coef("6/3") == 2
    assert parse_coef(4) == 4
    for bad in ("0.5", "1e3", "x", True, None, "1/0"):
        with pytest.raises(QueryParseError):
            parse_coef(bad)


def test_path_normalization():
    a = prov("a")
    p = ReconstructionPath(((a, 2), (UNIT, 1), (a, -2), (prov("b"), Fraction(1, 2))))
    assert p.entries == ((UNIT, 1), (prov("b"), Fraction(1, 2)))
    assert ReconstructionPath(((a, 1), (a, -1))) == EMPTY_PATH


@settings(max_examples=100, deadline=None)
@given(paths, st.randoms())
def test_path_normalization_confluent(p, rnd):
    entries = list(p.entries) + [(e[0], -e[1]) for e in p.entries[:1]] + list(p.entries[:1])
    shuffled = entries[:]
    rnd.shuffle(shuffled)
    assert ReconstructionPath(tuple(entries)) == ReconstructionPath(tuple(shuffled))


# -- canonicalization and leaf sets ---------------------------------------------------------


def test_canonicalize_relabeled_triangle():
    t = Pattern.of(3, [(2, 0), (0, 1), (1, 2)])
    q = count(leaf(t), {"p"})
    assert canonicalize_query(q) == count(leaf(canonicalize_pattern(TRIANGLE)), {"p"})


def test_canonicalize_makes_isomorphic_leaves_equal():
    w1, w2 = Pattern.of(3, [(0, 1), (1, 2)]), Pattern.of(3, [(0, 2), (2, 1)])
    assert w1 != w2
    q = canonicalize_query(Union(leaf(w1), leaf(w2)))
    assert q.left == q.right


@settings(max_examples=100, deadline=None)
@given(queries)
def test_canonicalize_query_idempotent(q):
    c = canonicalize_query(q)
    assert canonicalize_query(c) == c
    assert term_size(c) == term_size(q)


def test_patterns_of_is_a_set():
    a = canonicalize_pattern(DIAMOND)
    q = Union(count(leaf(a), {"x"}), count(leaf(a), {"y"}, 2))
    assert patterns_of(q) == {(a, "top")}
    assert patterns_of(leaf(a)) == {(a, "top")}


def test_patterns_of_worked_batch():
    # a three-query batch sharing leaves: P1 in two results, P4 and P5 in others
    p1, p4, p5 = (canonicalize_pattern(x) for x in (TRIANGLE, DIAMOND, K4))
    q = union_of(
        [
            Count(ReconstructionPath(((prov("a"), 1), (prov("b"), -1))), leaf(p1)),
            count(leaf(p4), {"b"}, 2),
            Count(ReconstructionPath(((prov("c"), 1), (prov("b"), 3))), leaf(p5)),
        ]
    )
    assert len(patterns_of(q)) == 3


# -- JSON ----------------------------------------------------------------------


def test_quasi_clique_query_round_trip():
    q = canonicalize_query(quasi_clique_query(4, Fraction(1, 2)))
    assert parse_query(serialize_query(q)) == q


@settings(max_examples=100, deadline=None)
@given(queries)
def test_round_trip(q):
    c = canonicalize_query(q)
    text = serialize_query(c)
    assert parse_query(text) == c
    assert serialize_query(parse_query(text)) == text


def test_serialization_is_deterministic():
    q = Count(ReconstructionPath(((prov("b"), 1), (prov("a"), 2))), leaf(TRIANGLE))
    r = Count(ReconstructionPath(((prov("a"), 2), (prov("b"), 1))), leaf(TRIANGLE))
    assert serialize_query(q) == serialize_query(r)
    assert json.loads(serialize_query(q))["count"]["path"][0]["prov"] == ["a"]


@pytest.mark.parametrize(
    "text,where",
    [
        ("{", "line"),
        ('{"union": [{"pattern": {"p": {"n": 1, "edges": [], "antiEdges": []}}}]}', "$.union"),
        ('{"count": {"path": [{"prov": [], "coef": "1.5"}], "inner": {"pattern": {"p": {"n": 1, "edges": [], "antiEdges": []}}}}}', "$.count.path[0].coef"),
        ('{"pattern": {"p": {"n": 2, "edges": [[0, 2]], "antiEdges": []}}}', "$.pattern.p"),
        ('{"bogus": 1}', "$"),
    ],
)
def test_parse_errors_carry_location(text, where):
    with pytest.raises(QueryParseError) as exc:
        parse_query(text)
    assert where in str(exc.value)


def test_unknown_filter_name_is_accepted():
    q = parse_query('{"pattern": {"p": {"n": 3, "edges": [[0, 1], [1, 2]], "antiEdges": []}, "filter": "F7"}}')
    assert q.filter == "F7"


def test_nested_reuse_of_an_atom_is_rejected():
    inner = count(leaf(TRIANGLE), {"a"})
    bad = serialize_query(count(inner, {"a", "b"}))
    with pytest.raises(QueryParseError):
        parse_query(bad)
    assert parse_query(bad, check_well_formed=False) == count(inner, {"a", "b"})
    # siblings may share atoms
    parse_query(serialize_query(Union(inner, count(leaf(WEDGE), {"a"}))))


@settings(max_examples=40, deadline=None)
@given(queries, st.integers(0, 2**16))
def test_canonicalization_preserves_semantics(q, seed):
    g = GraphDistribution().sample(random.Random(seed))
    assert evaluate_result(g, q) == evaluate_result(g, canonicalize_query(q))
