import json
from fractions import Fraction

import pytest

from patternsat.cli import main
from patternsat.optimizer import CostTable
from patternsat.packs import manifest_to_json, sm_pack, wedge_rule
from patternsat.pattern import DIAMOND, K4, TRIANGLE, WEDGE, canonicalize_pattern, saturate_anti_edges
from patternsat.query import Union, canonicalize_query, count, leaf, parse_query, serialize_query
from patternsat.rewrite import MLeaf, RewriteRule


def _write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return str(p)


@pytest.fixture
def triangle(tmp_path):
    return _write(tmp_path, "tri.json", serialize_query(leaf(TRIANGLE)))


def test_optimize_with_wedge_and_cost(tmp_path, triangle, capsys):
    cost = CostTable({(canonicalize_pattern(TRIANGLE), "top"): 10}, default=1)
    cfile = _write(tmp_path, "cost.json", cost.to_json())
    out = tmp_path / "out.json"
    assert main(["optimize", triangle, "--wedge", "--cost", cfile, "--out", str(out)]) == 0
    q = parse_query(out.read_text())
    assert isinstance(q, Union)
    report = json.loads(capsys.readouterr().err)
    assert report["stop_reason"] == "saturated" and Fraction(report["output_cost"]) == 2


def test_optimize_without_rules_returns_canonical_input(tmp_path, capsys):
    relabeled = WEDGE.relabel([1, 0, 2])
    qfile = _write(tmp_path, "w.json", serialize_query(count(leaf(relabeled), {"a"})))
    rfile = tmp_path / "rep.json"
    assert main(["optimize", qfile, "--report", str(rfile)]) == 0
    assert parse_query(capsys.readouterr().out) == canonicalize_query(count(leaf(relabeled), {"a"}))
    assert json.loads(rfile.read_text())["source"] == "input"


def test_optimize_fig5_style_batch(tmp_path, capsys):
    assert main(["gen-quasi-clique", "--k", "4", "--gamma", "1/2", "--out", str(tmp_path / "qc.json")]) == 0
    qfile = str(tmp_path / "qc.json")
    out = str(tmp_path / "opt.json")
    assert main(["optimize", qfile, "--sm-pack", "4", "--out", out, "--time-limit", "30"]) == 0
    rep = json.loads(capsys.readouterr().err)
    assert Fraction(rep["output_cost"]) <= Fraction(rep["input_cost"])
    assert main(["verify", qfile, out, "--seed", "4"]) == 0


def test_non_opaque_rule_file_exits_2(tmp_path, triangle, capsys):
    rule = {"name": "peel", "lhs": {"pattern": {"p": {"edge": [0, 1], "rest": {"var": "r"}}}}, "rhs": {"var": "r"}}
    rfile = _write(tmp_path, "bad.json", [rule])
    assert main(["optimize", triangle, "--rules", rfile]) == 2
    assert "peel" in capsys.readouterr().err


def test_missing_and_malformed_files(tmp_path, triangle, capsys):
    assert main(["optimize", str(tmp_path / "nope.json")]) == 2
    bad = _write(tmp_path, "bad.json", '{"union": [')
    assert main(["optimize", bad]) == 2
    assert main(["optimize", triangle, "--cost", bad]) == 2
    assert "error:" in capsys.readouterr().err


def test_verify_pass_and_fail(tmp_path, triangle, capsys):
    assert main(["verify", triangle, triangle, "--trials", "1", "--seed", "0"]) == 0
    captured = capsys.readouterr()
    assert "seed: 0" in captured.err and json.loads(captured.out)["passed"]
    wedge = _write(tmp_path, "w.json", serialize_query(leaf(WEDGE)))
    assert main(["verify", triangle, wedge, "--seed", "1"]) == 1
    rep = json.loads(capsys.readouterr().out)
    assert not rep["passed"] and rep["witness"]["left"] != rep["witness"]["right"]


def test_verify_with_explicit_graph(tmp_path, triangle, capsys):
    gfile = _write(tmp_path, "k4.txt", "0 1\n0 2\n0 3\n1 2\n1 3\n2 3\n")
    x = _write(tmp_path, "x.json", serialize_query(Union(leaf(TRIANGLE), leaf(TRIANGLE))))
    assert main(["verify", triangle, x, "--trials", "0", "--graph", gfile]) == 1
    assert json.loads(capsys.readouterr().out)["witness"]["graph"]["V"] == 4


def test_verify_seed_is_printed_when_random(triangle, capsys):
    assert main(["verify", triangle, triangle, "--trials", "1"]) == 0
    assert capsys.readouterr().err.startswith("seed: ")


def test_validate_rule(tmp_path, capsys):
    good = _write(tmp_path, "wedge.json", manifest_to_json([wedge_rule()]))
    assert main(["validate-rule", good, "--trials", "10", "--seed", "0"]) == 0
    rhs = Union(count(leaf(saturate_anti_edges(DIAMOND))), count(leaf(K4), x=5))
    bad = RewriteRule.from_template("bad", MLeaf(canonicalize_pattern(DIAMOND)), rhs)
    bfile = _write(tmp_path, "bad.json", manifest_to_json([bad]))
    assert main(["validate-rule", bfile, "--trials", "20", "--seed", "0"]) == 1
    capsys.readouterr()
    missing = RewriteRule.from_template("f", MLeaf(TRIANGLE, "F9"), MLeaf(TRIANGLE, "F9"))
    mfile = _write(tmp_path, "missing.json", manifest_to_json([missing]))
    assert main(["validate-rule", mfile, "--seed", "0"]) == 2
    assert "F9" in capsys.readouterr().err


def test_validate_rule_with_filters_in_manifest(tmp_path, capsys):
    rule = RewriteRule.from_template("f", MLeaf(TRIANGLE, "F9"), MLeaf(TRIANGLE, "F9"))
    m = manifest_to_json([rule])
    m["filters"] = [{"name": "F9", "all": [{"kind": "extDegreeAtLeast", "v": 0, "k": 1}]}]
    assert main(["validate-rule", _write(tmp_path, "m.json", m), "--trials", "3", "--seed", "0"]) == 0


def test_gen_quasi_clique(capsys):
    assert main(["gen-quasi-clique", "--k", "4", "--gamma", "0.8"]) == 0
    q = parse_query(capsys.readouterr().out)
    assert len(list(_leaves(q))) == 1
    assert main(["gen-quasi-clique", "--k", "4", "--gamma", "0.8", "--floor", "--prov-mode", "individual"]) == 0
    assert len(list(_leaves(parse_query(capsys.readouterr().out)))) == 3
    assert main(["gen-quasi-clique", "--k", "7", "--gamma", "0.5"]) == 2


def test_gen_approx(tmp_path, capsys):
    pfile = _write(tmp_path, "tri.json", TRIANGLE.to_json())
    assert main(["gen-approx", pfile, "--k", "1"]) == 0
    assert len(list(_leaves(parse_query(capsys.readouterr().out)))) == 2
    assert main(["gen-approx", pfile, "--k", "0"]) == 0
    assert len(list(_leaves(parse_query(capsys.readouterr().out)))) == 1


def test_gen_rules_round_trip(tmp_path, capsys):
    out = tmp_path / "pack.json"
    assert main(["gen-rules", "--sm-pack", "4", "--wedge", "--out", str(out)]) == 0
    names = [r["name"] for r in json.loads(out.read_text())["rules"]]
    assert names == [r.name for r in sm_pack(4)] + ["wedge"]
    tri = _write(tmp_path, "t.json", serialize_query(leaf(TRIANGLE)))
    assert main(["optimize", tri, "--rules", str(out), "--iter-limit", "3"]) == 0


def _leaves(q):
    if isinstance(q, Union):
        yield from _leaves(q.left)
        yield from _leaves(q.right)
    else:
        yield q
