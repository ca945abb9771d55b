import pytest
from hypothesis import given
from hypothesis import strategies as st

from refmpst import corpus
from refmpst.frontend import ProtocolError, emit_dot, emit_type, parse, parse_global, parse_type
from refmpst.refinement import TOP, parse_refinement
from refmpst.rmpst import END, Comm, Rec, RecVar, branch, comm

R = parse_refinement


def errors(src: str) -> list[str]:
    res = parse(src)
    assert not res.ok
    return [d.message for d in res.diagnostics if d.severity == "error"]


def test_single_message():
    g = parse_global("global protocol P (role A, role B) { L(x: int) from A to B; }")
    assert g == comm("A", "B", branch("L", "x", TOP, END))


def test_refined_listing_has_hint_refinements():
    res = parse(corpus.source("plus_minus_refined"))
    assert res.ok and res.name == "PlusMinus" and res.roles == ("A", "B", "C")
    g = res.type
    assert isinstance(g, Comm) and g.branches[0].label == "Secret"
    loop = g.branches[0].cont
    assert isinstance(loop, Rec)
    hints = loop.body.branches[0].cont
    assert {b.label: (b.var, b.refinement) for b in hints.branches} == {
        "More": ("x", R("x < n")),
        "Less": ("x", R("x > n")),
        "Correct": ("x", R("x = n")),
    }
    assert hints.branches[0].cont == RecVar("Loop")


@pytest.mark.parametrize(
    "body, message",
    [
        ("choice at B { l() from C to B; } or { m() from B to C; }", "not from B"),
        ("l() from A to Z;", "role 'Z' is not declared"),
        ("l() from A to A;", "to itself"),
        ("continue T;", "not inside 'rec T'"),
        ("rec T { l() from A to B; continue T; l2() from A to B; }", "last statement"),
        ("rec T { rec T { l() from A to B; continue T; } }", "shadows"),
        ("choice at A { l() from A to B; } or { m() from A to C; }", "different roles"),
        ("choice at A { l() from A to B; } or { l() from A to B; }", "duplicate labels"),
        ("l(x: int {x <}) from A to B;", "refinement"),
        ("l(x: float) from A to B;", "float"),
    ],
)
def test_diagnostics(body, message):
    src = "global protocol P (role A, role B, role C) { " + body + " }"
    msgs = errors(src)
    assert any(message in m for m in msgs), msgs


def test_diagnostic_offsets_are_bytes():
    src = "// é\nglobal protocol P (role A, role B) { l() from A to Z; }"
    res = parse(src)
    d = res.diagnostics[0]
    assert src.encode()[d.start:d.end] == b"Z"
    assert d.render(src, "f.rscr").startswith("f.rscr:2:")


def test_comments_and_preamble():
    src = """
    module demo;
    (* block *) /* another */
    type <java> "int" from "rt.jar" as int;
    global protocol P (role A, role B) { // trailing
      l(x: int) from A to B;
    }
    """
    assert parse(src).ok


def test_bytes_input():
    assert parse(b"A->B {l(x: int){true}. end}").ok
    assert not parse(b"\xff\xfe").ok


def test_parse_global_raises():
    with pytest.raises(ProtocolError):
        parse_global("global protocol P (role A) {")


def test_ascii_types():
    assert parse_type("end").type == END
    t = parse_type("rec T. A->B {l(x: int){x > 0}. T}").type
    assert t == Rec("T", comm("A", "B", branch("l", "x", R("x > 0"), RecVar("T"))))
    assert emit_type(END) == "end"


def test_round_trip_on_corpus():
    for name in corpus.names():
        g = corpus.load(name)
        assert parse_global(emit_type(g)) == g


def test_emit_dot_for_machine():
    from refmpst.automata import rcfsm_of
    from refmpst.rmpst import project

    dot = emit_dot(rcfsm_of(project(corpus.load("plus_minus"), "B"), "B"))
    assert dot.count("shape=circle") + dot.count("shape=doublecircle") >= 4


def test_limits_give_diagnostics():
    deep = "A->B {l(x: int){true}. " * 120 + "end" + "}" * 120
    assert any("deep" in m for m in errors(deep))
    many = "global protocol P (role A, role B) {" + " l() from A to B;" * 250 + "}"
    assert any("200" in m for m in errors(many))
    nested_ref = "A->B {l(x: int){" + "(" * 80 + "x > 0" + ")" * 80 + "}. end}"
    assert errors(nested_ref)


@given(st.text(alphabet=st.characters(codec="utf-8"), max_size=200))
def test_parser_never_raises_on_text(s):
    res = parse(s)
    assert res.ok or res.diagnostics


@given(st.binary(max_size=200))
def test_parser_never_raises_on_bytes(b):
    res = parse(b)
    assert res.ok or res.diagnostics
