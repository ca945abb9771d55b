import json
from collections import defaultdict, deque

import pytest
from hypothesis import given
from hypothesis import strategies as st

from refmpst.refinement import TOP, VarMap, models, parse_refinement
from refmpst.trace import (
    Message,
    Queues,
    TraceFormatError,
    Undefined,
    end_up_with_map,
    ends_up_with_queue,
    first_unpredicated,
    is_valid_refined,
    is_well_predicated,
    is_well_queued,
    recv,
    send,
    trace_from_json,
    trace_to_json,
)


def naive_well_queued(trace) -> bool:
    """Reference checker: one deque per ordered pair, built from scratch."""
    q = defaultdict(deque)
    for a in trace:
        key = (a.sender, a.receiver)
        if a.direction == "!":
            q[key].append((a.message.label, a.message.var, a.message.value))
        else:
            if not q[key] or q[key][0] != (a.message.label, a.message.var, a.message.value):
                return False
            q[key].popleft()
    return all(not v for v in q.values())


def naive_well_predicated(trace, m=None) -> bool:
    env = dict(m or {})
    for a in trace:
        env[a.message.var] = a.message.value
        if not models(env, a.refinement):
            return False
    return True


ROLES = st.sampled_from(["A", "B", "C"])
REFS = st.sampled_from([TOP, parse_refinement("x > 0"), parse_refinement("x = y"), parse_refinement("y <= 2")])


@st.composite
def actions(draw):
    p = draw(ROLES)
    q = draw(ROLES.filter(lambda r: r != p))
    msg = (draw(st.sampled_from(["a", "b"])), draw(st.sampled_from(["x", "y"])), draw(st.integers(-2, 3)))
    make = send if draw(st.booleans()) else recv
    return make(p, q, *msg, draw(REFS))


traces = st.lists(actions(), max_size=12).map(tuple)


@st.composite
def well_queued_traces(draw):
    """Sends followed by matching receives in a random FIFO-respecting interleaving."""
    sends = draw(st.lists(actions().map(lambda a: send(a.sender, a.receiver, a.message.label, a.message.var, a.message.value)), max_size=8))
    out, pending = [], defaultdict(deque)
    remaining = list(sends)
    while remaining or any(pending.values()):
        choices = ["s"] if remaining else []
        choices += [k for k, v in pending.items() if v]
        pick = draw(st.sampled_from(choices))
        if pick == "s":
            a = remaining.pop(0)
            out.append(a)
            pending[(a.sender, a.receiver)].append(a.message)
        else:
            m = pending[pick].popleft()
            out.append(recv(pick[0], pick[1], m.label, m.var, m.value))
    return tuple(out)


@given(traces)
def test_well_queued_matches_oracle(t):
    assert is_well_queued(t) == naive_well_queued(t)


@given(well_queued_traces())
def test_generated_traces_are_well_queued(t):
    assert is_well_queued(t) and naive_well_queued(t)


@given(traces)
def test_well_predicated_matches_oracle(t):
    assert is_well_predicated(t) == naive_well_predicated(t)


@given(traces)
def test_validity_is_conjunction(t):
    assert bool(is_valid_refined(t)) == (naive_well_queued(t) and naive_well_predicated(t))


@given(traces, traces)
def test_queue_concatenation(t1, t2):
    w1 = ends_up_with_queue(t1)
    if isinstance(w1, Undefined):
        assert isinstance(ends_up_with_queue(t1 + t2), Undefined)
        return
    assert ends_up_with_queue(t2, w1) == ends_up_with_queue(t1 + t2) or (
        isinstance(ends_up_with_queue(t2, w1), Undefined) and isinstance(ends_up_with_queue(t1 + t2), Undefined)
    )


@given(traces, traces)
def test_predicate_concatenation(t1, t2):
    if is_well_predicated(t1) and is_well_predicated(t2, end_up_with_map(t1)):
        assert is_well_predicated(t1 + t2)
    assert end_up_with_map(t1 + t2) == end_up_with_map(t2, end_up_with_map(t1))


@given(traces)
def test_json_round_trip(t):
    assert trace_from_json(json.dumps(trace_to_json(t))) == t


def test_receive_must_match_head():
    t = (send("A", "B", "a", "x", 1), send("A", "B", "b", "x", 2), recv("A", "B", "b", "x", 2))
    w = ends_up_with_queue(t)
    assert isinstance(w, Undefined) and w.index == 2
    verdict = is_valid_refined(t)
    assert verdict.kind == "not-well-queued" and verdict.index == 2


def test_queues_are_per_pair():
    t = (send("A", "B", "a", "x", 1), send("C", "B", "b", "y", 2), recv("C", "B", "b", "y", 2), recv("A", "B", "a", "x", 1))
    assert is_well_queued(t)
    w = Queues.empty().push("A", "B", Message("a", "x", 1))
    assert w.head("A", "B") == Message("a", "x", 1) and w.pop("A", "B") == Queues.empty()


def test_unpredicated_reports_pre_action_map():
    t = (send("A", "B", "a", "x", 1), send("A", "B", "b", "y", 5, parse_refinement("y < x")))
    assert first_unpredicated(t) == (1, VarMap({"x": 1}))
    assert first_unpredicated(t[1:], {"x": 9}) is None


@pytest.mark.parametrize(
    "payload",
    ["{}", "[1]", '[{"from": "A"}]', '[{"from":"A","dir":"~","to":"B","label":"l","var":"x","value":1}]', "nope"],
)
def test_bad_json(payload):
    with pytest.raises((TraceFormatError, json.JSONDecodeError)):
        trace_from_json(payload)
