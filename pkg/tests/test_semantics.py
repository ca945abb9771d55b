import pytest

from refmpst import corpus
from refmpst.automata import rcs_of
from refmpst.elide import force_elide_type
from refmpst.refinement import VarMap, parse_refinement
from refmpst.semantics import (
    ExploreParams,
    ScriptDiverged,
    ScriptEntry,
    StepNotEnabled,
    accepts_trace,
    apply_centralised,
    check_bisimulation,
    check_simulation,
    decentralisation_violations,
    enabled_centralised,
    explore,
    initial_configuration,
    initial_dec_configuration,
    is_final,
    make_semantics,
    random_run,
    reachable,
    run_concurrent,
    scripted_run,
    trace_of_run,
    walk,
)
from refmpst.trace import Message, Queues, is_valid_refined, recv, send

SMALL = ExploreParams(value_domain=(0, 1, 2), max_depth=10)


def pm():
    return rcs_of(corpus.load("plus_minus"))


def test_initial_configurations():
    rcs = pm()
    c = initial_configuration(rcs)
    assert c.states == (0, 0, 0) and c.queues == Queues.empty() and c.varmap == VarMap.empty()
    d = initial_dec_configuration(rcs)
    assert d.states == (0, 0, 0) and d.maps == (VarMap.empty(),) * 3
    assert is_final(c) and is_final(d)


def test_secret_step():
    rcs = pm()
    c = initial_configuration(rcs)
    steps = enabled_centralised(rcs, c, range(10))
    secret = next(s for s in steps if s.value == 5)
    c2 = apply_centralised(rcs, c, secret)
    assert c2.states == (1, 0, 0)
    assert c2.queues.get("A", "B") == (Message("secret", "n", 5),)
    assert c2.varmap == VarMap({"n": 5})
    assert not is_final(c2)
    # Sends are asynchronous: C may guess before the secret is delivered.
    assert {s.participant for s in steps} == {"A", "C"}


def test_non_head_receive_is_not_enabled():
    rcs = pm()
    c = initial_configuration(rcs)
    c = apply_centralised(rcs, c, next(s for s in enabled_centralised(rcs, c) if s.value == 1))
    recv_step = next(s for s in enabled_centralised(rcs, c) if s.participant == "B")
    wrong = type(recv_step)(recv_step.participant, recv_step.transition, 2)
    with pytest.raises(StepNotEnabled):
        apply_centralised(rcs, c, wrong)


def test_decentralised_send_needs_local_variables():
    rcs = rcs_of(corpus.load("reverse_sim"))
    dec = make_semantics(rcs, "decentral", SMALL)
    labels = set()
    for run in walk(dec, SMALL):
        labels |= {s.transition.action.label for s in run.steps}
    assert "l2" not in labels
    central = make_semantics(rcs, "central", SMALL)
    assert any(s.transition.action.label == "l2" for run in walk(central, SMALL) for s in run.steps)


def test_guessing_game_run():
    rcs = pm()
    sem = make_semantics(rcs, "central", ExploreParams(value_domain=range(10)))
    script = [ScriptEntry("A", "secret", 5), ScriptEntry("B", "secret"), ScriptEntry("C", "guess", 5),
              ScriptEntry("B", "guess"), ScriptEntry("B", "correct"), ScriptEntry("C", "correct")]
    run = scripted_run(sem, script)
    assert run.status == "final"
    assert trace_of_run(run) == (
        send("A", "B", "secret", "n", 5),
        recv("A", "B", "secret", "n", 5),
        send("C", "B", "guess", "x", 5),
        recv("C", "B", "guess", "x", 5),
        send("B", "C", "correct", "_", 0, parse_refinement("x = n")),
        recv("B", "C", "correct", "_", 0),
    )
    with pytest.raises(ScriptDiverged) as info:
        scripted_run(sem, script[:4] + [ScriptEntry("B", "more")])
    assert info.value.index == 4


def test_depth_zero_and_empty_run():
    sem = make_semantics(pm(), "central")
    runs = list(walk(sem, ExploreParams(max_depth=0)))
    assert len(runs) == 1 and runs[0].steps == () and trace_of_run(runs[0]) == ()


def test_random_runs_are_seeded_and_valid():
    sem = make_semantics(rcs_of(corpus.load("three_buyers")), "central")
    a = random_run(sem, ExploreParams(seed=4, max_depth=30))
    b = random_run(sem, ExploreParams(seed=4, max_depth=30))
    assert a == b and a.status == "final"
    assert is_valid_refined(trace_of_run(a))


def _lts(sem, max_depth=50):
    """Full reachable transition system of a loop-free protocol."""
    states = reachable(sem, max_depth)
    return {c: [(s.key(), c2) for s, c2 in sem.successors(c)[0]] for c in states}


def naive_simulates(lts_a, init_a, lts_b, init_b) -> bool:
    """Does A simulate B? Plain greatest fixpoint over all pairs."""
    rel = {(b, a) for b in lts_b for a in lts_a}
    changed = True
    while changed:
        changed = False
        for b, a in list(rel):
            ok = all(any(la == lb and (b2, a2) in rel for la, a2 in lts_a[a]) for lb, b2 in lts_b[b])
            if not ok:
                rel.discard((b, a))
                changed = True
    return (init_b, init_a) in rel


LOOP_FREE = ["adder", "gs", "three_party", "reverse_sim", "ringmax", "three_buyers", "diffie_hellman"]


@pytest.mark.parametrize("name", LOOP_FREE)
def test_simulation_matches_naive_oracle(name):
    params = ExploreParams(value_domain=(0, 1, 2), max_depth=50)
    rcs = rcs_of(corpus.load(name))
    c = make_semantics(rcs, "central", params)
    d = make_semantics(rcs, "decentral", params)
    lc, ld = _lts(c), _lts(d)
    for a, la, b, lb in ((c, lc, d, ld), (d, ld, c, lc)):
        res = check_simulation(a, b, params)
        assert res.holds == naive_simulates(la, a.initial(), lb, b.initial()), name
        if not res.holds:
            assert res.counterexample.side == "left"


def test_reflexive_simulation_and_bisimulation():
    for name in ("plus_minus", "auth", "gs"):
        sem = make_semantics(rcs_of(corpus.load(name)), "central", SMALL)
        assert check_simulation(sem, sem, SMALL).holds
        assert check_bisimulation(sem, sem, SMALL).holds


def test_counterexample_is_a_run_of_the_moving_side():
    g = corpus.load("three_party")
    params = ExploreParams(value_domain=(-1, 0, 21), max_depth=6)
    left = make_semantics(rcs_of(g), "central", params)
    right = make_semantics(rcs_of(force_elide_type(g, "l3")), "central", params)
    res = check_bisimulation(left, right, params)
    assert not res.holds
    cx = res.counterexample
    moving = right if cx.side == "right" else left
    c = moving.initial()
    for step in cx.path + (cx.unmatched,):
        nxt = [c2 for s, c2 in moving.successors(c)[0] if s.key() == step.key()]
        assert nxt
        c = nxt[0]


def test_decentralised_traces_included_in_centralised():
    for name in ("adder", "pingpong", "ringmax"):
        rcs = rcs_of(corpus.load(name))
        central = make_semantics(rcs, "central", SMALL)
        dec = make_semantics(rcs, "decentral", SMALL)
        for run in walk(dec, SMALL):
            if run.status == "final":
                assert accepts_trace(central, trace_of_run(run))


def test_dynamic_conditions():
    padded = ExploreParams(value_domain=(-1, 0, 1, 21), max_depth=8)
    assert decentralisation_violations(rcs_of(corpus.load("adder")), padded) == []
    kinds = {v.kind for v in decentralisation_violations(rcs_of(corpus.load("list_adder")), padded)}
    assert "duplication" in kinds
    kinds = {v.kind for v in decentralisation_violations(rcs_of(corpus.load("reverse_sim")), padded)}
    assert kinds == {"free-variable"}


def test_concurrent_runs_produce_valid_traces():
    for seed in range(5):
        out = run_concurrent(rcs_of(corpus.load("three_buyers")), ExploreParams(seed=seed, max_depth=30))
        assert out.completed, out
        assert is_valid_refined(out.trace)


def test_explore_counts():
    result = explore(pm(), ExploreParams(value_domain=tuple(range(5)), max_depth=12))
    assert len(result.runs) == 1956 and not result.deadlocks
