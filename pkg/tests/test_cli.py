from __future__ import annotations

import io
import json
import subprocess
import sys

import pytest

from wnetkat.cli import run


def call(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run(list(argv), out=out, err=err)
    return code, out.getvalue(), err.getvalue()


def call_json(*argv):
    code, out, err = call("--format", "json", *argv)
    return code, json.loads(out) if out else None, err


JSON_KEYS = {"command", "verdict", "witness", "optimal_weight", "saturated", "elapsed_ms"}


def test_cost_reach_exit_codes_and_json():
    code, doc, _ = call_json("query", "cost-reach", "--topology", "b4.top", "--src", "dc1", "--dst", "dc5", "--bound", "7")
    assert code == 0
    assert JSON_KEYS <= set(doc)
    assert doc["verdict"] == "NotDrop" and doc["saturated"] is True
    assert doc["witness"]["path"] == ["dc1", "dc2", "dc5"]
    assert doc["witness"]["bound"] == "7"
    code, doc, _ = call_json("query", "cost-reach", "--topology", "b4.top", "--src", "dc1", "--dst", "dc5", "--bound", "6")
    assert code == 1 and doc["verdict"] == "IsDrop" and doc["witness"] is None


def test_unknown_verdict_when_fuel_runs_out():
    code, doc, _ = call_json("query", "cost-reach", "--topology", "b4.top", "--src", "dc1", "--dst", "dc5", "--bound", "6", "--fuel", "1")
    assert code == 2 and doc["verdict"] == "Unknown" and doc["saturated"] is False


def test_cap_reach_modes():
    base = ["query", "cap-reach", "--topology", "b4.top", "--src", "dc1", "--dst", "dc5"]
    assert call(*base, "--rate", "6")[0] == 0
    assert call(*base, "--rate", "7")[0] == 1
    assert call(*base, "--rate", "7", "--mode", "unsplit-guard")[0] == 1
    split = base + ["--mode", "split", "--policy", "b4_split.wnk", "--state", "b4_split.state"]
    assert call(*split, "--rate", "10")[0] == 0
    assert call(*split, "--rate", "11")[0] == 1
    code, _, err = call(*base, "--rate", "3", "--mode", "split")
    assert code == 3 and "--state" in err


def test_chain_and_fairness_and_qos():
    code, out, _ = call("query", "chain", "--topology", "chain.top", "--src", "s", "--dst", "t", "--waypoints", "F1,F2", "--bound", "4", "--rate", "4")
    assert code == 0 and "s -> F1 -> F2_2 -> t" in out
    assert call("query", "chain", "--topology", "chain.top", "--src", "s", "--dst", "t", "--waypoints", "F1,F2", "--bound", "3")[0] == 1
    code, doc, _ = call_json("query", "fairness", "--topology", "fair.top", "--flows", "fair.flows")
    assert code == 1
    assert [r["verdict"] for r in doc["flows"]] == ["NotDrop", "IsDrop", "NotDrop"]
    code, doc, _ = call_json("query", "qos", "--arrivals", ",".join(["high"] * 10), "--queued")
    assert code == 0 and doc["forwarded"] == {"high": 10, "low": 0}
    code, doc, _ = call_json("query", "qos", "--arrivals", ",".join(["high"] * 10))
    assert doc["forwarded"] == {"high": 8, "low": 0}


def test_parse_eval_check_compile(tmp_path):
    src = tmp_path / "p.wnk"
    src.write_text("x <- 0; (sw=a; x <- x + 2; sw <- b; x <= 5; dup)*; sw=b; x <= 5\n")
    code, out, _ = call("parse", "--expr", str(src))
    assert code == 0 and "fields: x quant packet" in out
    code, doc, _ = call_json("eval", "--expr", str(src), "--packet", "sw=a")
    assert code == 0 and len(doc["worlds"]) == 1 and "x=2" in doc["worlds"][0]
    code, doc, _ = call_json("check", "--expr", str(src))
    assert code == 0 and doc["backend"] == "wfa" and doc["optimal_weight"] == "0"
    code, doc, _ = call_json("check", "--expr", str(src), "--backend", "eval", "--packet", "sw=b")
    assert code == 0 and doc["backend"] == "eval"
    target = tmp_path / "a.txt"
    code, doc, _ = call_json("compile-wfa", "--expr", str(src), "--structure", "min-plus", "--out", str(target))
    assert code == 0 and doc["states"] == 3 and target.read_text().startswith("structure min-plus")


def test_check_falls_back_to_evaluator_for_two_quantities(tmp_path):
    src = tmp_path / "q.wnk"
    src.write_text("x <- 1; y <- y + 2; x >= 3\n")
    code, doc, _ = call_json("check", "--expr", str(src))
    assert code == 1 and doc["backend"] == "eval"


def test_check_drop_program(tmp_path):
    src = tmp_path / "drop.wnk"
    src.write_text("drop\n")
    code, doc, _ = call_json("check", "--expr", str(src))
    assert code == 1 and doc["verdict"] == "IsDrop" and doc["optimal_weight"] is None


@pytest.mark.parametrize("name", ["b4_cost.wnk"])
def test_backends_agree_on_bundled_queries(name):
    code_e, doc_e, _ = call_json("check", "--expr", name, "--backend", "eval")
    code_w, doc_w, _ = call_json("check", "--expr", name, "--backend", "wfa")
    assert code_e == code_w == 0
    assert doc_e["verdict"] == doc_w["verdict"]
    assert doc_w["optimal_weight"] == "7"
    assert doc_e["witness"]["path"] == ["dc1", "dc2", "dc5"]


def test_json_and_text_carry_the_same_verdict():
    argv = ["query", "cap-reach", "--topology", "b4.top", "--src", "dc1", "--dst", "dc5", "--rate", "6"]
    _, doc, _ = call_json(*argv)
    _, text, _ = call(*argv)
    assert f"verdict: {doc['verdict']}" in text
    assert "witness: " + " -> ".join(doc["witness"]["path"]) in text
    assert json.loads(json.dumps(doc)) == doc


def test_parse_error_is_usage_error_with_position(tmp_path):
    src = tmp_path / "bad.wnk"
    src.write_text("f=0;\n(g<-1\n")
    code, out, err = call("parse", "--expr", str(src))
    assert code == 3 and out == ""
    assert "line 2, column 6" in err


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["frobnicate"],
        ["query", "cost-reach", "--topology", "b4.top"],
        ["query", "cost-reach", "--topology", "b4.top", "--src", "dc1", "--dst", "dc5", "--bound", "x"],
        ["query", "cost-reach", "--topology", "missing.top", "--src", "a", "--dst", "b", "--bound", "1"],
        ["query", "chain", "--topology", "chain.top", "--src", "s", "--dst", "t", "--waypoints", "F1"],
    ],
)
def test_usage_errors_exit_three(argv):
    code, _, err = call(*argv)
    assert code == 3 and err


def test_equivalence_is_refused():
    code, out, err = call("equiv", "a.wnk", "b.wnk")
    assert code == 3 and out == ""
    assert "emptiness" in err and "wnetkat check" in err
    assert call("--format", "json", "equiv")[0] == 3


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "wnetkat", "query", "cost-reach", "--topology", "b4.top", "--src", "dc1", "--dst", "dc5", "--bound", "7"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "verdict: NotDrop" in proc.stdout
