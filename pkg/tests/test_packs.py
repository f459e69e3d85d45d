import json
import random
from fractions import Fraction

import pytest

from bruteforce import automorphisms, embeddings, eval_at, occurrences
from patternsat.errors import FilterError, QueryParseError, RuleError
from patternsat.oracle import DEFAULT_REGISTRY, ExtDegreeAtLeast, Filter, GraphDistribution
from patternsat.packs import (
    load_manifest,
    manifest_to_json,
    rule_to_json,
    rules_from_json,
    sm_expansion,
    sm_inverse_rule,
    sm_pack,
    sm_rule,
    validate_rule,
    wedge_rule,
)
from patternsat.pattern import (
    DIAMOND,
    K4,
    TAILED_TRIANGLE,
    TRIANGLE,
    WEDGE,
    Pattern,
    canonicalize_pattern,
    enumerate_connected_patterns,
    saturate_anti_edges,
)
from patternsat.query import Count, Union, count, leaf, patterns_of
from patternsat.rewrite import MLeaf, MUnion, PatVar, QVar, RewriteRule

D = canonicalize_pattern(DIAMOND)


def _terms(q):
    if isinstance(q, Union):
        return _terms(q.left) + _terms(q.right)
    return [q]


def _coefs(q):
    out = {}
    for t in _terms(q):
        assert isinstance(t, Count) and len(t.path.entries) == 1
        out[t.inner.pattern] = t.path.entries[0][1]
    return out


# -- subgraph morphing --------------------------------------------------------------


def test_diamond_expansion():
    c = _coefs(sm_expansion(DIAMOND))
    assert c == {saturate_anti_edges(DIAMOND): 1, canonicalize_pattern(K4): 6}


def test_tailed_triangle_expansion_matches_brute_force():
    c = _coefs(sm_expansion(TAILED_TRIANGLE))
    assert len(c) == 3
    for q, x in c.items():
        full = Pattern.of(q.n, q.edges)
        assert x == embeddings(TAILED_TRIANGLE, full) // automorphisms(TAILED_TRIANGLE)


@pytest.mark.parametrize("n", [3, 4])
def test_sm_identity_by_brute_force(n):
    # independent count of both sides on random graphs, pattern by pattern
    rng = random.Random(n)
    graphs = [GraphDistribution(6, 7, 0.3, 0.7).sample(rng) for _ in range(3)]
    for p in enumerate_connected_patterns(n):
        q = sm_expansion(p)
        for g in graphs:
            assert eval_at(g.V, g.edges, q, frozenset()) == occurrences(g.V, g.edges, p)


def test_sm_rejects_bad_inputs():
    with pytest.raises(RuleError):
        sm_rule(Pattern.of(3, [(0, 1), (1, 2)], [(0, 2)]))
    with pytest.raises(RuleError):
        sm_rule(Pattern.of(4, [(0, 1), (2, 3)]))


@pytest.mark.parametrize("n,expected", [(3, 1), (4, 6), (5, 26)])
def test_pack_sizes(n, expected):
    assert len(sm_pack(n)) == expected
    assert len(sm_pack(n, direction="both")) == 2 * expected


def test_pack_is_deterministic():
    assert [r.name for r in sm_pack(4)] == [r.name for r in sm_pack(4)]
    assert len({r.name for r in sm_pack(5)}) == 26


def test_pack_bounds():
    with pytest.raises(RuleError):
        sm_pack(7)
    with pytest.raises(RuleError):
        sm_pack(4, direction="sideways")


@pytest.mark.parametrize("rule", sm_pack(4, direction="both") + [wedge_rule()], ids=lambda r: r.name)
def test_generated_rules_validate(rule):
    assert validate_rule(rule, trials=8, seed=1).passed


def test_inverse_rule_shape():
    r = sm_inverse_rule(DIAMOND)
    (out,) = r.apply(leaf(saturate_anti_edges(DIAMOND)))
    assert _coefs(out) == {D: 1, canonicalize_pattern(K4): -6}


# -- validation ------------------------------------------------------------------------


def test_corrupted_coefficient_fails_with_witness():
    rhs = Union(count(leaf(saturate_anti_edges(DIAMOND))), count(leaf(K4), x=5))
    bad = RewriteRule.from_template("bad-diamond", MLeaf(D), rhs)
    res = validate_rule(bad, trials=20, seed=0)
    assert not res.passed
    js = res.to_json()
    assert js["failure"]["witness"]["left"] != js["failure"]["witness"]["right"]


def test_path_blind_merge_fails():
    text = json.dumps(
        {
            "name": "merge-any",
            "lhs": {
                "union": [
                    {"count": {"path": [{"prov": {"var": "a"}, "coef": {"var": "m"}}], "inner": {"pattern": {"p": {"var": "p"}}}}},
                    {"count": {"path": [{"prov": {"var": "b"}, "coef": {"var": "n"}}], "inner": {"pattern": {"p": {"var": "p"}}}}},
                ]
            },
            "rhs": {"count": {"path": [{"prov": {"var": "a"}, "coef": {"add": [{"var": "m"}, {"var": "n"}]}}], "inner": {"pattern": {"p": {"var": "p"}}}}},
        }
    )
    (rule,) = load_manifest(text).rules
    assert not validate_rule(rule, trials=20, seed=0).passed


def test_unregistered_filter_is_an_error():
    rule = RewriteRule.from_template("f", MLeaf(TRIANGLE, "F9"), MLeaf(TRIANGLE, "F9"))
    with pytest.raises(FilterError):
        validate_rule(rule)
    reg = DEFAULT_REGISTRY.with_filters([Filter("F9", (ExtDegreeAtLeast(0, 1),))])
    assert validate_rule(rule, reg, trials=5).passed


def test_variable_rule_draws_instances():
    comm = RewriteRule.from_template("comm", MUnion(QVar("x"), QVar("y")), MUnion(QVar("y"), QVar("x")))
    res = validate_rule(comm, trials=3, instances=4)
    assert res.passed and res.instances == 4


# -- rule files -------------------------------------------------------------------------


def test_rule_json_round_trip():
    for r in sm_pack(4)[:3] + [wedge_rule()]:
        (back,) = rules_from_json(rule_to_json(r))
        assert back.name == r.name
        assert back.apply(leaf(r.lhs.pattern)) == r.apply(leaf(r.lhs.pattern))


def test_bidirectional_rule_adds_reverse():
    obj = rule_to_json(wedge_rule(), bidirectional=True)
    fwd, rev = rules_from_json(obj)
    assert rev.name == "wedge-rev"
    (expanded,) = fwd.apply(leaf(canonicalize_pattern(TRIANGLE)))
    assert rev.apply(expanded) == [leaf(canonicalize_pattern(TRIANGLE))]


def test_manifest_forms():
    m = manifest_to_json([wedge_rule()], [Filter("F1", (ExtDegreeAtLeast(0, 1),))])
    loaded = load_manifest(json.dumps(m))
    assert [r.name for r in loaded.rules] == ["wedge"] and loaded.filters[0].name == "F1"
    assert len(load_manifest(json.dumps(m["rules"])).rules) == 1
    assert len(load_manifest(json.dumps(m["rules"][0])).rules) == 1


def test_non_opaque_rule_file_names_the_rule():
    obj = {"name": "peel", "lhs": {"pattern": {"p": {"edge": [0, 1], "rest": {"var": "r"}}}}, "rhs": {"var": "r"}}
    with pytest.raises(RuleError) as exc:
        rules_from_json(obj)
    assert "peel" in str(exc.value)


def test_malformed_rule_file():
    with pytest.raises(QueryParseError):
        load_manifest("[{")
    with pytest.raises(QueryParseError) as exc:
        load_manifest(json.dumps({"rules": [{"name": "x", "lhs": {"union": [{"var": "a"}]}, "rhs": {"var": "a"}}]}))
    assert "$.rules[0].lhs.union" in str(exc.value)


def test_rule_sides_keep_leaf_sets():
    (out,) = wedge_rule().apply(leaf(canonicalize_pattern(TRIANGLE)))
    assert {p.n for p, _ in patterns_of(out)} == {3}
    assert Fraction(1, 3) in {t.path.entries[0][1] for t in _terms(out)}
    assert canonicalize_pattern(WEDGE) in {p for p, _ in patterns_of(out)}
