import ctypes
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from refmpst.refinement import (
    BOT,
    TOP,
    And,
    ArithBin,
    Cmp,
    IntLit,
    Not,
    NotClosed,
    Or,
    RefinementError,
    Var,
    VarMap,
    conj,
    constants,
    eval_closed,
    evaluate,
    fv,
    models,
    parse_expr,
    parse_refinement,
    pretty,
    substitute,
    wrap,
)

I32 = st.integers(-(2**31), 2**31 - 1)


def c32(v: int) -> int:
    return ctypes.c_int32(v & 0xFFFFFFFF).value


def oracle_arith(op: str, a: int, b: int) -> int:
    """Reference 32-bit semantics written against ctypes, not the library."""
    if op == "+":
        return c32(a + b)
    if op == "-":
        return c32(a - b)
    if op == "*":
        return c32(a * b)
    if op == "%":
        return a if b == 0 else c32(int(math.fmod(a, b)))
    if op == "^":
        result, base, e = 1, a, b & 0xFFFFFFFF
        while e:
            if e & 1:
                result = c32(result * base)
            base = c32(base * base)
            e >>= 1
        return result
    raise AssertionError(op)


@given(st.integers(-(2**40), 2**40))
def test_wrap_matches_int32(v):
    assert wrap(v) == c32(v)


@pytest.mark.parametrize("op", ["+", "-", "*", "%", "^"])
@given(a=I32, b=I32)
def test_arith_matches_oracle(op, a, b):
    assert evaluate(ArithBin(op, IntLit(a), IntLit(b))) == oracle_arith(op, a, b)


def test_arith_trivial_vectors():
    assert evaluate(parse_expr("2147483647 + 1")) == -(2**31)
    assert evaluate(parse_expr("7 % 0")) == 7
    assert evaluate(parse_expr("-7 % 3")) == -1
    assert evaluate(parse_expr("7 % -3")) == 1
    assert evaluate(parse_expr("2 ^ 10")) == 1024
    assert evaluate(parse_expr("2 ^ 32")) == 0
    assert evaluate(parse_expr("3 ^ -1")) == oracle_arith("^", 3, -1)


def test_eval_closed_and_not_closed():
    assert eval_closed(parse_refinement("1 < 2 && !(3 = 4)"))
    assert not eval_closed(BOT)
    assert eval_closed(TOP)
    with pytest.raises(NotClosed):
        evaluate(parse_refinement("x > 0"))


def test_models_checks_domain_first():
    r = parse_refinement("x < 0 || y = 1")
    assert not models({"x": -1}, r)
    assert models({"x": -1, "y": 0}, r)
    assert models({}, TOP)
    assert not models({}, BOT)


def test_fv_constants_substitute():
    r = parse_refinement("x + 3 < y && !(z = -4)")
    assert fv(r) == {"x", "y", "z"}
    assert constants(r) == {3, -4}
    closed = substitute({"x": 1, "y": 5, "z": 0}, r)
    assert fv(closed) == frozenset() and eval_closed(closed)


def test_conj():
    a, b = parse_refinement("x > 0"), parse_refinement("y > 0")
    assert conj() == TOP
    assert conj(TOP, a) == a
    assert conj(a, b) == And(a, b)


@pytest.mark.parametrize(
    "text, error",
    [("x <", "end"), ("(x < 1", ")"), ("x < 1 )", ""), ("x $ 1", "unexpected"), ("3", "boolean"), ("", "")],
)
def test_parse_errors(text, error):
    with pytest.raises(RefinementError) as info:
        parse_refinement(text)
    assert error in str(info.value) or error == ""


def test_precedence():
    e = parse_refinement("a + b * c ^ d ^ e > 0 || !p = 1 && q < 2")
    assert isinstance(e, Or)
    lhs = e.left.left
    assert lhs == ArithBin("+", Var("a"), ArithBin("*", Var("b"), ArithBin("^", Var("c"), ArithBin("^", Var("d"), Var("e")))))


def test_varmap():
    m = VarMap.empty().update("x", 1).update("y", 2)
    assert m["x"] == 1 and m.dom() == {"x", "y"}
    assert m.update("x", 3)["x"] == 3 and m["x"] == 1
    assert m.remove("x").dom() == {"y"}
    assert hash(m) == hash(VarMap({"y": 2, "x": 1}))
    assert m.disjoint_union(VarMap({"z": 0})).dom() == {"x", "y", "z"}
    with pytest.raises(ValueError):
        m.disjoint_union(VarMap({"x": 0}))


names = st.sampled_from(["x", "y", "n", "v1"])


def arith():
    leaves = st.one_of(I32.map(IntLit), names.map(Var))
    return st.recursive(
        leaves,
        lambda sub: st.builds(ArithBin, st.sampled_from(["+", "-", "*", "%", "^"]), sub, sub),
        max_leaves=6,
    )


def boolean():
    atoms = st.one_of(
        st.just(TOP),
        st.just(BOT),
        st.builds(Cmp, st.sampled_from(["=", "!=", "<", "<=", ">", ">="]), arith(), arith()),
    )
    return st.recursive(
        atoms,
        lambda sub: st.one_of(st.builds(Not, sub), st.builds(And, sub, sub), st.builds(Or, sub, sub)),
        max_leaves=5,
    )


@given(boolean())
def test_pretty_parse_round_trip(e):
    assert parse_refinement(pretty(e)) == e


@given(boolean(), st.dictionaries(names, I32))
def test_substitution_agrees_with_models(e, m):
    if fv(e) <= m.keys():
        assert models(m, e) == eval_closed(substitute(m, e))
    else:
        assert not models(m, e)
