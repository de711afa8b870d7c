import json
import subprocess
import sys
from fractions import Fraction as F

import pydot
import pytest

from conftest import corpus_path
from pdpomdp.cli import run
from pdpomdp.model import check_posterior_deterministic
from pdpomdp.modelio import parse_model


def call(capsys, *argv):
    code = run([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None), out


def test_check(capsys, tmp_path):
    code, doc, _ = call(capsys, "check", corpus_path("scenario2_gadget"))
    assert (code, doc) == (0, {"posterior_deterministic": True})
    code, doc, _ = call(capsys, "check", corpus_path("notpd"))
    assert code == 3
    assert doc["witness"]["state"] == "q1" and doc["witness"]["successors"] == ["q2", "q3"]


def test_approx_g1(capsys):
    code, doc, _ = call(capsys, "approx", corpus_path("g1"), "--epsilon", "1/20")
    assert code == 0
    width = F(doc["upper"]["exact"]) - F(doc["lower"]["exact"])
    assert width <= F(1, 20)
    assert "wall_time_ms" not in doc


def test_approx_notpd_exits_3(capsys):
    code, doc, _ = call(capsys, "approx", corpus_path("notpd"), "--epsilon", "1/10")
    assert code == 3
    assert doc["error"] == "NotPosteriorDeterministic" and "witness" in doc


def test_usage_errors(capsys):
    assert run([]) == 1
    assert run(["approx", str(corpus_path("g1"))]) == 1
    assert run(["approx", str(corpus_path("g1")), "--epsilon", "0"]) == 1
    assert run(["approx", str(corpus_path("g1")), "--epsilon", "abc"]) == 1
    assert run(["info", "/nonexistent/model.pdp"]) == 1
    assert capsys.readouterr().out == ""


def test_parse_error_exit_2(capsys, tmp_path):
    bad = tmp_path / "bad.pdp"
    bad.write_text("pomdp t\nstates: s\nactions a\n")
    code, doc, _ = call(capsys, "info", bad)
    assert code == 2 and doc["line"] == 3


def test_semantic_error_exit_3(capsys, tmp_path):
    bad = tmp_path / "bad.pdp"
    bad.write_text("pomdp t\nstates: s\nactions: a\nobservations: o\ninit: s 1\ntarget: zz\ntrans: s a -> o s 1\n")
    code, _, _ = call(capsys, "info", bad)
    assert code == 3


def test_budget_env_var(capsys, monkeypatch):
    monkeypatch.setenv("PDPOMDP_NODE_BUDGET", "40")
    code, doc, _ = call(capsys, "approx", corpus_path("infinite_tree"), "--epsilon", "1/1000")
    assert code == 4
    assert doc["status"] == "budget_exceeded"
    assert F(doc["lower"]["exact"]) <= F(doc["upper"]["exact"])


def test_certified_budget_reports_depth(capsys):
    code, doc, _ = call(capsys, "approx", corpus_path("infinite_tree"), "--epsilon", "1/20", "--mode", "certified")
    assert code == 4
    assert int(doc["n_eps"]) > 10**30
    assert F(doc["lower"]["exact"]) <= 1 <= F(doc["upper"]["exact"])


def test_memo_flag_agrees(capsys):
    _, on, _ = call(capsys, "approx", corpus_path("ndist_swap"), "--epsilon", "1/20")
    _, off, _ = call(capsys, "approx", corpus_path("ndist_swap"), "--epsilon", "1/20", "--memo", "off")
    assert on["lower"] == off["lower"]


def test_timing_flag(capsys):
    _, doc, _ = call(capsys, "approx", corpus_path("tiger"), "--epsilon", "1/20", "--timing")
    assert isinstance(doc["wall_time_ms"], int)


def test_tree_dot(capsys, tmp_path):
    dot = tmp_path / "tree.dot"
    code, _, _ = call(capsys, "approx", corpus_path("scenario1"), "--epsilon", "1/20", "--tree-dot", dot, "--tree-depth", "3")
    assert code == 0
    assert pydot.graph_from_dot_data(dot.read_text())


def test_info_scenario1(capsys, tmp_path):
    dot = tmp_path / "sec.dot"
    code, doc, _ = call(capsys, "info", corpus_path("scenario1"), "--dot", dot)
    assert code == 0
    flags = {tuple(s["domain"]): s["distinguishing"] for s in doc["maximal_secs"]}
    assert flags[("{q,q1,q2}",)] is True
    assert flags[("{q,q1}", "{q,q2}")] is True
    assert flags[("{q1,q2}",)] is False
    assert doc["rank_classes"][0]["rank"] == 0
    assert pydot.graph_from_dot_data(dot.read_text())


def test_normalize(capsys, tmp_path):
    out = tmp_path / "n.pdp"
    code, doc, _ = call(capsys, "normalize", corpus_path("chain"), "-o", out)
    assert code == 0 and doc["merged_into_bot"] == ["d"]
    m, b, targets = parse_model(out.read_text())
    assert targets == {"TOP"}


def test_decide(capsys):
    code, doc, _ = call(capsys, "decide", corpus_path("scenario1"), "--threshold", "1/2", "--epsilon", "1/20")
    assert (code, doc["case"]) == (0, "CaseI")
    code, doc, _ = call(capsys, "decide", corpus_path("scenario1"), "--threshold", "9/10", "--epsilon", "1/20")
    assert (code, doc["case"]) == (0, "CaseII")
    assert run(["decide", str(corpus_path("scenario1")), "--threshold", "2", "--epsilon", "1/20"]) == 1


def test_oracle(capsys):
    code, doc, _ = call(capsys, "oracle", corpus_path("ndist_swap"), "--which", "naive", "--horizon", "3")
    assert code == 0 and doc["value"]["exact"] == "7/12"
    code, doc, _ = call(capsys, "oracle", corpus_path("ndist_swap"))
    assert doc["value"] == pytest.approx(2 / 3, abs=1e-9)
    code, doc, _ = call(capsys, "oracle", corpus_path("scenario1"), "--cap", "100")
    assert code == 4 and doc["error"] == "NotFinite"


def test_simulate(capsys, tmp_path):
    code, doc, _ = call(
        capsys, "simulate", corpus_path("g1"), "--strategy", "wait:10:a:b:o2=c", "--runs", "2000", "--horizon", "30", "--seed", "4"
    )
    assert code == 0
    lo, hi = doc["interval"]
    assert lo <= 1 - 2**-11 <= hi
    strat = tmp_path / "s.txt"
    strat.write_text("memory: m\nchoose: m b 1\n")
    code, doc, _ = call(capsys, "simulate", corpus_path("g1"), "--strategy", strat, "--runs", "100", "--seed", "0")
    assert code == 0 and 0 < doc["hits"] < 100
    code, _, _ = call(capsys, "simulate", corpus_path("g1"), "--strategy", "nope")
    assert code == 1


def test_gen(capsys, tmp_path):
    a, b = tmp_path / "a.pdp", tmp_path / "b.pdp"
    for path in (a, b):
        code, _, _ = call(capsys, "gen", "--states", 4, "--actions", 2, "--obs", 2, "--seed", 5, "-o", path)
        assert code == 0
    assert a.read_bytes() == b.read_bytes()
    m, _, _ = parse_model(a.read_text())
    assert check_posterior_deterministic(m) is True


@pytest.mark.parametrize("argv", [["info", "scenario1"], ["approx", "g1", "--epsilon", "1/20"]])
def test_stdout_is_byte_identical(argv):
    argv = [argv[0], str(corpus_path(argv[1]))] + argv[2:]
    cmd = [sys.executable, "-m", "pdpomdp.cli"] + argv
    first = subprocess.run(cmd, capture_output=True, check=True).stdout
    second = subprocess.run(cmd, capture_output=True, check=True).stdout
    assert first == second and json.loads(first)
