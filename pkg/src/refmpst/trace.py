"""Actions, traces, FIFO queues and validity of refined traces.

A trace is a finite sequence of actions. Sends push a message onto the
queue of their ordered participant pair and receives pop it again. A trace
is well-queued when this never gets stuck and every queue is empty at the
end, and well-predicated when each refinement holds under the map obtained
by binding the payloads seen so far.
"""

from __future__ import annotations

import json
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from typing import Any

from .refinement import DISCARD, TOP, Expr, RefinementError, VarMap, models, parse_refinement, pretty

SEND = "!"
RECV = "?"


@dataclass(frozen=True)
class Message:
    label: str
    var: str
    value: int

    def __str__(self) -> str:
        return f"{self.label}({self.var},{self.value})"


@dataclass(frozen=True)
class Action:
    """``sender dir receiver : message |= refinement``.

    Both sends and receives name the sending participant first, so the
    receive matching ``A!B`` is written ``A?B``.
    """

    sender: str
    direction: str
    receiver: str
    message: Message
    refinement: Expr = TOP

    @property
    def is_send(self) -> bool:
        return self.direction == SEND

    @property
    def subject(self) -> str:
        """The participant performing the action."""
        return self.sender if self.direction == SEND else self.receiver

    def __str__(self) -> str:
        return f"{self.sender}{self.direction}{self.receiver}:{self.message}|={pretty(self.refinement)}"


Trace = tuple[Action, ...]


def send(p: str, q: str, label: str, var: str, value: int, refinement: Expr = TOP) -> Action:
    return Action(p, SEND, q, Message(label, var, value), refinement)


def recv(p: str, q: str, label: str, var: str, value: int, refinement: Expr = TOP) -> Action:
    return Action(p, RECV, q, Message(label, var, value), refinement)


class Queues:
    """Immutable, hashable family of FIFO queues indexed by ``(sender, receiver)``.

    Empty queues are not stored, so two families are equal exactly when all
    their queues agree.
    """

    __slots__ = ("_q", "_h")

    def __init__(self, queues: Mapping[tuple[str, str], Sequence[Message]] | None = None):
        self._q: dict[tuple[str, str], tuple[Message, ...]] = {
            k: tuple(v) for k, v in (queues or {}).items() if v
        }
        self._h: int | None = None

    @classmethod
    def empty(cls) -> "Queues":
        return _NO_QUEUES

    def get(self, p: str, q: str) -> tuple[Message, ...]:
        return self._q.get((p, q), ())

    def head(self, p: str, q: str) -> Message | None:
        w = self._q.get((p, q))
        return w[0] if w else None

    def push(self, p: str, q: str, m: Message) -> "Queues":
        d = dict(self._q)
        d[(p, q)] = self._q.get((p, q), ()) + (m,)
        return _from_dict(d)

    def pop(self, p: str, q: str) -> "Queues":
        w = self._q[(p, q)]
        d = dict(self._q)
        if len(w) == 1:
            del d[(p, q)]
        else:
            d[(p, q)] = w[1:]
        return _from_dict(d)

    def is_empty(self) -> bool:
        return not self._q

    def max_len(self) -> int:
        return max((len(w) for w in self._q.values()), default=0)

    def items(self):
        return sorted(self._q.items())

    def messages(self) -> Iterable[tuple[str, str, Message]]:
        for (p, q), w in self.items():
            for m in w:
                yield p, q, m

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Queues) and self._q == other._q

    def __hash__(self) -> int:
        if self._h is None:
            self._h = hash(frozenset(self._q.items()))
        return self._h

    def __repr__(self) -> str:
        inner = ", ".join(f"{p}->{q}: [{', '.join(map(str, w))}]" for (p, q), w in self.items())
        return "{" + inner + "}"

    def to_json(self) -> dict[str, list[dict[str, Any]]]:
        return {
            f"{p}->{q}": [{"label": m.label, "var": m.var, "value": m.value} for m in w]
            for (p, q), w in self.items()
        }


def _from_dict(d: dict[tuple[str, str], tuple[Message, ...]]) -> Queues:
    out = Queues.__new__(Queues)
    out._q = d
    out._h = None
    return out


_NO_QUEUES = Queues()


@dataclass(frozen=True)
class Undefined:
    """The queue fold got stuck at ``index`` (a receive with no matching head)."""

    index: int
    reason: str
    queues: Queues


def queue_step(w: Queues, a: Action) -> Queues | None:
    """Apply one action to ``w``; ``None`` when a receive cannot fire."""
    if a.direction == SEND:
        return w.push(a.sender, a.receiver, a.message)
    if w.head(a.sender, a.receiver) != a.message:
        return None
    return w.pop(a.sender, a.receiver)


def ends_up_with_queue(t: Sequence[Action], start: Queues | None = None) -> Queues | Undefined:
    """Fold the actions of ``t`` over the queues, starting from ``start``."""
    w = start if start is not None else Queues.empty()
    for i, a in enumerate(t):
        nxt = queue_step(w, a)
        if nxt is None:
            head = w.head(a.sender, a.receiver)
            why = "queue is empty" if head is None else f"queue head is {head}"
            return Undefined(i, f"cannot receive {a.message} from {a.sender} at {a.receiver}: {why}", w)
        w = nxt
    return w


def is_well_queued(t: Sequence[Action]) -> bool:
    w = ends_up_with_queue(t)
    return isinstance(w, Queues) and w.is_empty()


def end_up_with_map(t: Sequence[Action], m: Mapping[str, int] | None = None) -> VarMap:
    """Bind the payload of every action in order, later bindings winning."""
    out = m if isinstance(m, VarMap) else VarMap(m or {})
    for a in t:
        out = out.update(a.message.var, a.message.value)
    return out


def first_unpredicated(t: Sequence[Action], m: Mapping[str, int] | None = None) -> tuple[int, VarMap] | None:
    """Index and pre-action map of the first action whose refinement fails."""
    cur = m if isinstance(m, VarMap) else VarMap(m or {})
    for i, a in enumerate(t):
        nxt = cur.update(a.message.var, a.message.value)
        if not models(nxt, a.refinement):
            return i, cur
        cur = nxt
    return None


def is_well_predicated(t: Sequence[Action], m: Mapping[str, int] | None = None) -> bool:
    return first_unpredicated(t, m) is None


@dataclass(frozen=True)
class TraceVerdict:
    """Outcome of :func:`is_valid_refined`; truthy iff the trace is valid."""

    valid: bool
    kind: str = "valid"
    index: int | None = None
    reason: str = ""
    queues: Queues | None = None
    varmap: VarMap | None = None

    def __bool__(self) -> bool:
        return self.valid

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"valid": self.valid, "kind": self.kind}
        if self.index is not None:
            out["index"] = self.index
        if self.reason:
            out["reason"] = self.reason
        if self.queues is not None:
            out["queues"] = self.queues.to_json()
        if self.varmap is not None:
            out["map"] = self.varmap.to_dict()
        return out


def is_valid_refined(t: Sequence[Action]) -> TraceVerdict:
    """Well-queued and well-predicated from the empty map."""
    w = ends_up_with_queue(t)
    if isinstance(w, Undefined):
        return TraceVerdict(False, "not-well-queued", w.index, w.reason, queues=w.queues)
    if not w.is_empty():
        return TraceVerdict(False, "not-well-queued", len(t), "messages left in transit", queues=w)
    bad = first_unpredicated(t)
    if bad is not None:
        i, m = bad
        a = t[i]
        reason = f"{pretty(a.refinement)} fails with {a.message.var} = {a.message.value}"
        return TraceVerdict(False, "not-well-predicated", i, reason, varmap=m)
    return TraceVerdict(True)


# ---------------------------------------------------------------------------
# JSON


def action_to_json(a: Action) -> dict[str, Any]:
    return {
        "from": a.sender,
        "dir": a.direction,
        "to": a.receiver,
        "label": a.message.label,
        "var": a.message.var,
        "value": a.message.value,
        "refinement": pretty(a.refinement),
    }


def trace_to_json(t: Sequence[Action]) -> list[dict[str, Any]]:
    return [action_to_json(a) for a in t]


class TraceFormatError(ValueError):
    pass


def action_from_json(obj: Any, index: int = 0) -> Action:
    if not isinstance(obj, dict):
        raise TraceFormatError(f"action {index}: expected an object")
    try:
        direction = obj["dir"]
        if direction not in (SEND, RECV):
            raise TraceFormatError(f"action {index}: dir must be '!' or '?'")
        var = obj.get("var", DISCARD)
        value = obj.get("value", 0)
        if not isinstance(value, int) or isinstance(value, bool):
            raise TraceFormatError(f"action {index}: value must be an integer")
        ref_text = obj.get("refinement", "true")
        refinement = parse_refinement(ref_text) if ref_text not in ("", None) else TOP
        return Action(str(obj["from"]), direction, str(obj["to"]), Message(str(obj["label"]), str(var), value), refinement)
    except KeyError as e:
        raise TraceFormatError(f"action {index}: missing field {e.args[0]!r}") from None
    except RefinementError as e:
        raise TraceFormatError(f"action {index}: bad refinement: {e.message}") from None


def trace_from_json(data: Any) -> Trace:
    if isinstance(data, str):
        data = json.loads(data)
    if not isinstance(data, list):
        raise TraceFormatError("a trace is a JSON array of actions")
    return tuple(action_from_json(obj, i) for i, obj in enumerate(data))


__all__ = [
    "Action",
    "Message",
    "Queues",
    "RECV",
    "SEND",
    "Trace",
    "TraceFormatError",
    "TraceVerdict",
    "Undefined",
    "end_up_with_map",
    "ends_up_with_queue",
    "first_unpredicated",
    "is_valid_refined",
    "is_well_predicated",
    "is_well_queued",
    "queue_step",
    "recv",
    "send",
    "trace_from_json",
    "trace_to_json",
]
