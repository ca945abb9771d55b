import io
import json

import pytest

from refmpst import __version__, corpus
from refmpst.cli import main
from refmpst.trace import recv, send, trace_to_json


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def run_json(capsys, *argv):
    code, out, _ = run(capsys, *argv)
    return code, json.loads(out)


def test_version(capsys):
    code, out, _ = run(capsys, "--version")
    assert code == 0 and __version__ in out


def test_parse_and_project(capsys, tmp_path):
    code, out = run_json(capsys, "parse", "@gs")
    assert code == 0 and out["name"] == "Gs" and out["roles"] == ["A", "B"]
    f = tmp_path / "p.rscr"
    f.write_text(corpus.source("plus_minus_refined"))
    code, out = run_json(capsys, "project", str(f), "--role", "B")
    assert code == 0 and list(out) == ["B"] and out["B"].startswith("A? {Secret")


def test_parse_errors_are_usage_errors(capsys, tmp_path):
    f = tmp_path / "bad.rscr"
    f.write_text("global protocol P (role A, role B) { l() from A to Z; }")
    code, _, err = run(capsys, "parse", str(f))
    assert code == 2 and "bad.rscr:1:" in err and "'Z'" in err
    code, _, err = run(capsys, "parse", str(tmp_path / "missing.rscr"))
    assert code == 2 and "cannot read" in err


def test_stdin_input(capsys, monkeypatch):
    monkeypatch.setattr("sys.stdin", io.StringIO("A->B {l(x: int){x > 0}. end}"))
    code, out = run_json(capsys, "project", "-")
    assert code == 0 and out == {"A": "B! {l(x: int){x > 0}. end}", "B": "A? {l(x: int){true}. end}"}


def test_automata_dot(capsys):
    code, out, _ = run(capsys, "automata", "@plus_minus", "--role", "B", "--dot")
    assert code == 0 and out.startswith('digraph "B"') and "B!C:correct(_)[x = n]" in out


def test_simulate_exhaustive(capsys):
    code, out = run_json(capsys, "simulate", "@plus_minus", "--domain", "0..4", "--depth", "12")
    assert code == 0 and out["runs"] == 1956 and out["deadlocks"] == 0 and out["invalid_traces"] == []


def test_simulate_negative_domain_and_script(capsys, tmp_path):
    code, out = run_json(capsys, "simulate", "@gs", "--domain", "-2..2", "--depth", "6")
    assert code == 0 and out["runs"] > 1
    script = tmp_path / "s.json"
    script.write_text(json.dumps([
        {"participant": "A", "label": "l1", "value": -1},
        {"participant": "B", "label": "l1"},
        {"participant": "A", "label": "l2", "value": 5},
        {"participant": "B", "label": "l2"},
    ]))
    code, out = run_json(capsys, "simulate", "@gs", "--mode", "script", "--script", str(script), "--domain", "-2..6")
    assert code == 0 and out["status"] == "final" and len(out["trace"]) == 4 and out["verdict"]["valid"]
    script.write_text(json.dumps([{"participant": "A", "label": "l1", "value": 3}]))
    code, out = run_json(capsys, "simulate", "@gs", "--mode", "script", "--script", str(script), "--domain", "0..4")
    assert code == 1 and out["diverged"] == 0 and "l1" in out["reason"]


def test_bad_domain_is_a_usage_error(capsys):
    code, _, err = run(capsys, "simulate", "@gs", "--domain", "x..y")
    assert code == 2 and "expected a domain" in err


def test_check_trace(capsys, tmp_path, monkeypatch):
    monkeypatch.setattr("sys.stdin", io.StringIO("[]"))
    code, out = run_json(capsys, "check-trace", "-")
    assert code == 0 and out["valid"]
    f = tmp_path / "t.json"
    f.write_text(json.dumps(trace_to_json((send("A", "B", "l", "x", 3), recv("A", "B", "l", "x", 4)))))
    code, out = run_json(capsys, "check-trace", str(f))
    assert code == 1 and not out["valid"]
    f.write_text("{not json")
    code, _, err = run(capsys, "check-trace", str(f))
    assert code == 2 and "bad trace" in err


def test_localise(capsys):
    code, out = run_json(capsys, "localise", "@plus_minus_refined")
    assert code == 0 and out["verdict"] == "decentralisable" and out["sizes"]["S"] == 4
    code, out, err = run(capsys, "localise", "@reverse_sim")
    assert code == 1 and json.loads(out)["verdict"] == "not decentralisable" and "NotVerifFV" in err
    code, out = run_json(capsys, "localise", "@plus_minus_refined", "--no-collapse")
    assert out["sizes"]["U"] == 19
    code, out = run_json(capsys, "localise", "@both_branch_loop", "--max-vertices", "5")
    assert code == 1 and out["verdict"] == "unknown"
    code, out, _ = run(capsys, "localise", "@gs", "--emit-dot", "unrolled")
    assert out.startswith("digraph")


def test_elide(capsys):
    code, out = run_json(capsys, "elide", "@gs", "--target-step", "0/0/l2", "--domain", "-11..11")
    assert code == 0 and out == {"type": "A->B {l1(x: int){x < 0}. A->B {l2(y: int){true}. end}}"}
    code, out = run_json(capsys, "elide", "@gs", "--target", "A/l2", "--domain", "-11..11")
    assert code == 0 and "type" not in out
    assert [t["refinement"] for t in out["automata"]["A"]] == ["x < 0", "true"]
    code, out = run_json(capsys, "elide", "@three_party", "--target-step", "l3")
    assert code == 1 and out["guard"] == "l1" and out["witness"] == {"x": 21}
    code, out = run_json(capsys, "elide", "@three_party", "--target-step", "l3", "--force")
    assert code == 0 and "l3(" in out["type"]


@pytest.mark.parametrize(
    "argv",
    [
        ["elide", "@gs"],
        ["elide", "@gs", "--target", "l2"],
        ["elide", "@gs", "--target", "Z/l2"],
        ["elide", "@gs", "--target-step", "nope"],
        ["parse", "@no_such_protocol"],
    ],
)
def test_usage_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2 and err.startswith("error:")
