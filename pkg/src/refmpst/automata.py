"""Refined communicating finite state machines (RCFSMs) and systems (RCSs).

Each local type yields one machine. Its states are the distinct subterms of
the local type other than ``rec`` binders and recursion variables; the
initial state is the type with its leading binders stripped. Every branch of
a choice contributes one symbolic transition whose payload value is left
open until the semantics instantiates it.
"""

from __future__ import annotations

from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field

from .refinement import Expr, pretty
from .rmpst import (
    End,
    ExtChoice,
    GlobalType,
    IntChoice,
    LocalType,
    ProjectionUndefined,
    Rec,
    RecVar,
    RefinementPlacement,
    binder_of,
    iter_paths,
    project,
    roles,
    show,
    strip,
)
from .trace import RECV, SEND, Action, Message


@dataclass(frozen=True)
class SymAction:
    """A symbolic action: the payload variable is known, its value is not."""

    sender: str
    direction: str
    receiver: str
    label: str
    var: str
    refinement: Expr

    @property
    def subject(self) -> str:
        return self.sender if self.direction == SEND else self.receiver

    @property
    def peer(self) -> str:
        return self.receiver if self.direction == SEND else self.sender

    def instantiate(self, value: int) -> Action:
        return Action(self.sender, self.direction, self.receiver, Message(self.label, self.var, value), self.refinement)

    def __str__(self) -> str:
        return f"{self.sender}{self.direction}{self.receiver}:{self.label}({self.var})[{pretty(self.refinement)}]"


@dataclass(frozen=True)
class Transition:
    src: int
    action: SymAction
    dst: int

    def __str__(self) -> str:
        return f"{self.src} --{self.action}--> {self.dst}"


@dataclass(frozen=True)
class Rcfsm:
    """One participant's machine. ``names`` holds the rendered state terms."""

    participant: str
    states: tuple[int, ...]
    initial: int
    transitions: tuple[Transition, ...]
    names: tuple[str, ...] = field(default=(), compare=False, repr=False)
    _out: dict = field(default_factory=dict, init=False, compare=False, repr=False, hash=False)

    def __post_init__(self) -> None:
        out: dict[int, list[Transition]] = {s: [] for s in self.states}
        for t in self.transitions:
            out.setdefault(t.src, []).append(t)
        self._out.update({s: tuple(ts) for s, ts in out.items()})

    def outgoing(self, s: int) -> tuple[Transition, ...]:
        return self._out.get(s, ())

    def is_terminal(self, s: int) -> bool:
        return not self._out.get(s)

    def state_name(self, s: int) -> str:
        return self.names[s] if s < len(self.names) else str(s)

    def find(self, label: str) -> Transition:
        hits = [t for t in self.transitions if t.action.label == label]
        if len(hits) != 1:
            raise KeyError(f"{self.participant} has {len(hits)} transitions labelled {label!r}")
        return hits[0]

    def with_refinement(self, target: Transition, refinement: Expr) -> "Rcfsm":
        """Copy with the refinement of ``target`` replaced."""
        if target not in self.transitions:
            raise KeyError(f"{target} is not a transition of {self.participant}")
        ts = []
        for t in self.transitions:
            if t == target:
                a = t.action
                t = Transition(t.src, SymAction(a.sender, a.direction, a.receiver, a.label, a.var, refinement), t.dst)
            ts.append(t)
        return Rcfsm(self.participant, self.states, self.initial, tuple(ts), self.names)


def _resolve(local: LocalType, cont):
    cont = strip(cont)
    if isinstance(cont, RecVar):
        cont = strip(binder_of(local, cont.name).body)
    return cont


def rcfsm_of(local: LocalType, participant: str) -> Rcfsm:
    """The machine of ``participant`` whose behaviour is ``local``."""
    index: dict[object, int] = {}
    terms: list[object] = []
    for _, node in iter_paths(strip(local)):
        if isinstance(node, (Rec, RecVar)):
            continue
        if node not in index:
            index[node] = len(terms)
            terms.append(node)
    transitions = []
    for sid, term in enumerate(terms):
        if isinstance(term, End):
            continue
        for b in term.branches:
            if isinstance(term, IntChoice):
                act = SymAction(participant, SEND, term.peer, b.label, b.var, b.refinement)
            else:
                assert isinstance(term, ExtChoice)
                act = SymAction(term.peer, RECV, participant, b.label, b.var, b.refinement)
            transitions.append(Transition(sid, act, index[_resolve(local, b.cont)]))
    return Rcfsm(
        participant,
        tuple(range(len(terms))),
        0,
        tuple(transitions),
        tuple(show(t) for t in terms),
    )


@dataclass(frozen=True)
class Rcs:
    """A refined communicating system: one machine per participant."""

    participants: tuple[str, ...]
    machines: tuple[Rcfsm, ...]

    def __post_init__(self) -> None:
        if tuple(m.participant for m in self.machines) != self.participants:
            raise ValueError("machines must be listed in participant order")

    @classmethod
    def of(cls, machines: Mapping[str, Rcfsm]) -> "Rcs":
        ps = tuple(sorted(machines))
        return cls(ps, tuple(machines[p] for p in ps))

    def __getitem__(self, p: str) -> Rcfsm:
        return self.machines[self.participants.index(p)]

    def __iter__(self) -> Iterator[str]:
        return iter(self.participants)

    def index(self, p: str) -> int:
        return self.participants.index(p)

    def replace(self, machine: Rcfsm) -> "Rcs":
        i = self.index(machine.participant)
        ms = list(self.machines)
        ms[i] = machine
        return Rcs(self.participants, tuple(ms))

    def transitions(self) -> Iterator[tuple[str, Transition]]:
        for m in self.machines:
            for t in m.transitions:
                yield m.participant, t

    def find(self, label: str) -> tuple[str, Transition]:
        """The unique send transition labelled ``label``."""
        hits = [(p, t) for p, t in self.transitions() if t.action.label == label and t.action.direction == SEND]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} send transitions labelled {label!r}")
        return hits[0]


def rcs_of(g: GlobalType, placement: RefinementPlacement = RefinementPlacement.SEND) -> Rcs:
    """Project onto every role and build its machine.

    Raises :class:`ProjectionUndefined` naming the first role (in sorted
    order) whose projection is undefined.
    """
    machines = {}
    for p in sorted(roles(g)):
        try:
            local = project(g, p, placement)
        except ProjectionUndefined as e:
            raise ProjectionUndefined(p, e.reason, e.path) from None
        machines[p] = rcfsm_of(local, p)
    return Rcs.of(machines)


# ---------------------------------------------------------------------------
# DOT


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def edge_label(a: SymAction) -> str:
    return f"{a.sender}{a.direction}{a.receiver}:{a.label}({a.var})[{pretty(a.refinement)}]"


def rcfsm_to_dot(m: Rcfsm, name: str | None = None) -> str:
    """Deterministic DOT rendering of one machine."""
    lines = [f'digraph "{_dot_escape(name or m.participant)}" {{', "  rankdir=LR;", "  node [shape=circle];"]
    lines.append('  start [shape=point, label=""];')
    for s in m.states:
        shape = "doublecircle" if m.is_terminal(s) else "circle"
        lines.append(f'  s{s} [label="{m.participant}{s + 1}", shape={shape}, tooltip="{_dot_escape(m.state_name(s))}"];')
    lines.append(f"  start -> s{m.initial};")
    for t in m.transitions:
        lines.append(f'  s{t.src} -> s{t.dst} [label="{_dot_escape(edge_label(t.action))}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def rcs_to_dot(r: Rcs) -> str:
    """All machines of ``r`` as clusters of one graph."""
    lines = ['digraph "rcs" {', "  rankdir=LR;", "  node [shape=circle];"]
    for m in r.machines:
        p = m.participant
        lines.append(f'  subgraph "cluster_{_dot_escape(p)}" {{')
        lines.append(f'    label="{_dot_escape(p)}";')
        lines.append(f'    "{_dot_escape(p)}_start" [shape=point, label=""];')
        for s in m.states:
            shape = "doublecircle" if m.is_terminal(s) else "circle"
            lines.append(f'    "{_dot_escape(p)}{s}" [label="{_dot_escape(p)}{s + 1}", shape={shape}];')
        lines.append(f'    "{_dot_escape(p)}_start" -> "{_dot_escape(p)}{m.initial}";')
        for t in m.transitions:
            lines.append(
                f'    "{_dot_escape(p)}{t.src}" -> "{_dot_escape(p)}{t.dst}" [label="{_dot_escape(edge_label(t.action))}"];'
            )
        lines.append("  }")
    lines.append("}")
    return "\n".join(lines) + "\n"
