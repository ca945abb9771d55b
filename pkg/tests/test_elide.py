import pytest
from hypothesis import given
from hypothesis import strategies as st

from refmpst import corpus
from refmpst.automata import rcs_of
from refmpst.elide import (
    Rejected,
    default_domain,
    depends_on,
    elide_many,
    elide_rcs,
    elide_type,
    entails,
    is_self_independent,
    is_well_defined_transition,
    step_of,
)
from refmpst.frontend import parse_global
from refmpst.refinement import BOT, TOP, models, parse_refinement
from refmpst.semantics import BoundExceeded, ExploreParams, check_bisimulation, make_semantics

R = parse_refinement
DOM = tuple(range(-11, 12))


def test_entailment_vectors():
    assert entails(R("x < 0"), R("x < 10"), DOM)
    e = entails(R("x > 20"), R("x < 10"), tuple(range(-30, 31)))
    assert not e and e.witness == {"x": 21}
    assert entails(R("x = y"), TOP, DOM)
    assert entails(BOT, R("z > 0"), DOM)
    # A consequent over variables the antecedent does not bind cannot follow.
    assert not entails(R("x > 0"), R("x > 0 || y = 1"), DOM)


atoms = st.sampled_from(["x < 0", "x < 10", "x > 20", "x = 3", "x != 3", "x >= -2", "x % 2 = 0", "x * x < 50"])


@given(atoms, atoms, st.sampled_from(["&&", "||"]), atoms)
def test_entailment_agrees_with_enumeration(a1, a2, op, c):
    a = R(f"({a1}) {op} ({a2})")
    cons = R(c)
    dom = default_domain(a, cons)
    expected = all(models({"x": v}, cons) for v in dom if models({"x": v}, a))
    assert bool(entails(a, cons, dom)) == expected


def test_default_domain_is_symmetric_and_covers_constants():
    d = default_domain(R("x > 20"), R("y < -3"))
    assert all(-v in d for v in d)
    for c in (19, 20, 21, 2, 3, 4):
        assert c in d and -c in d


def test_entailment_budget():
    with pytest.raises(BoundExceeded):
        entails(R("a + b + c + d + e > 0"), TOP, tuple(range(100)))


def test_gs_elision():
    g = corpus.load("gs")
    out = elide_type(g, "l2", DOM)
    assert out == parse_global("""
      global protocol P (role A, role B) { l1(x: int {x < 0}) from A to B; l2(y: int) from A to B; }
    """)
    rcs = rcs_of(g)
    t = rcs["A"].find("l2")
    elided = elide_rcs(rcs, "A", t, DOM, g=g)
    assert elided == rcs_of(out)
    assert elide_rcs(rcs, "A", t, DOM) == elided  # bounded well-definedness agrees
    params = ExploreParams(value_domain=DOM, max_depth=8)
    assert check_bisimulation(make_semantics(rcs, "central", params), make_semantics(elided, "central", params), params)


def test_target_already_true_is_identity():
    rcs = rcs_of(corpus.load("gs"))
    t = rcs["B"].find("l2")
    assert elide_rcs(rcs, "B", t, DOM) is rcs


def test_rejections():
    three = corpus.load("three_party")
    out = elide_type(three, "l3")
    assert isinstance(out, Rejected) and out.guard == "l1" and out.witness == {"x": 21}
    self_dep = elide_type(corpus.load("gs"), "l1")
    assert isinstance(self_dep, Rejected) and "own payload" in self_dep.reason
    pm = elide_type(corpus.load("plus_minus"), "correct")
    assert isinstance(pm, Rejected) and pm.guard == "secret" and "x = n" in pm.reason
    unordered = parse_global("""
    global protocol P (role A, role B, role C, role D) {
      l1(x: int) from A to B;
      l2(y: int {x > 0}) from C to D;
    }""")
    undefined = elide_type(unordered, "l2")
    assert isinstance(undefined, Rejected) and "not well-defined" in undefined.reason


def test_well_defined_transitions():
    g = corpus.load("gs")
    rcs = rcs_of(g)
    t = rcs["A"].find("l2")
    assert is_well_defined_transition(rcs, "A", t, g=g)
    assert is_well_defined_transition(rcs, "A", t, ExploreParams(value_domain=DOM))
    three = corpus.load("three_party")
    r3 = rcs_of(three)
    assert is_well_defined_transition(r3, "C", r3["C"].find("l3"), g=three)
    rev = corpus.load("reverse_sim")
    rr = rcs_of(rev)
    assert not is_well_defined_transition(rr, "C", rr["C"].find("l2"), ExploreParams(value_domain=(0, 1)))
    assert step_of(g, t).label == "l2"


def test_dependence():
    rcs = rcs_of(corpus.load("gs"))
    l1, l2 = rcs["A"].find("l1"), rcs["A"].find("l2")
    assert depends_on(l1, l2) and not depends_on(l2, l1)
    assert not is_self_independent(l1) and is_self_independent(l2)


def test_successive_elisions():
    g = parse_global("""
    global protocol P (role A, role B) {
      a(x: int {x < 0}) from A to B;
      b(y: int {x < 5}) from A to B;
      c(z: int {x < 7}) from A to B;
    }""")
    out = elide_many(g, ["b", "0/0/0/c"], DOM)
    assert not isinstance(out, Rejected)
    assert [b.refinement for b in (out.branches[0].cont.branches[0], out.branches[0].cont.branches[0].cont.branches[0])] == [TOP, TOP]
    assert isinstance(elide_many(g, ["a"], DOM), Rejected)
