"""Operational semantics of refined communicating systems.

Two step relations are provided. The *centralised* one keeps a single global
variable map: a send may pick any value ``c`` from the value domain such that
the refinement holds once the payload variable is bound to ``c``. The
*decentralised* one gives every participant its own map; a sender checks the
refinement against its own map and forgets the payload variable, and the
receiver learns it.

Exploration is bounded by a finite value domain, a depth and a per-queue
length. Bounded simulation and bisimulation checks are computed as greatest
fixpoints over the pairs of configurations reachable in lock step.
"""

from __future__ import annotations

import random
import threading
import time
from collections import deque
from collections.abc import Callable, Hashable, Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from typing import Any, Protocol

from . import refinement as _ref
from .automata import Rcs, Transition
from .refinement import DISCARD, VarMap, fv
from .trace import RECV, SEND, Action, Message, Queues, Trace

DEFAULT_DOMAIN = tuple(range(5))


class BoundExceeded(Exception):
    """The state budget ran out; the result would be inconclusive."""


class StepNotEnabled(ValueError):
    """A step was applied in a configuration where it cannot fire."""


class ScriptDiverged(Exception):
    """A scripted run asked for a step that is not enabled."""

    def __init__(self, index: int, reason: str = ""):
        super().__init__(f"script diverged at step {index}" + (f": {reason}" if reason else ""))
        self.index = index
        self.reason = reason


@dataclass(frozen=True)
class ScriptEntry:
    participant: str
    label: str
    value: int | None = None

    @classmethod
    def from_json(cls, obj: Any) -> "ScriptEntry":
        if not isinstance(obj, dict) or "participant" not in obj or "label" not in obj:
            raise ValueError("script entries need 'participant' and 'label'")
        value = obj.get("value")
        if value is not None and (not isinstance(value, int) or isinstance(value, bool)):
            raise ValueError("script values must be integers")
        return cls(str(obj["participant"]), str(obj["label"]), value)


@dataclass(frozen=True)
class ExploreParams:
    value_domain: tuple[int, ...] = DEFAULT_DOMAIN
    max_depth: int = 12
    max_queue_len: int = 4
    seed: int | None = None
    mode: str = "exhaustive"
    script: tuple[ScriptEntry, ...] = ()
    max_states: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "value_domain", tuple(self.value_domain))
        object.__setattr__(self, "script", tuple(self.script))
        if self.mode not in ("exhaustive", "random", "script"):
            raise ValueError(f"unknown exploration mode {self.mode!r}")
        if self.max_depth < 0 or self.max_queue_len < 1:
            raise ValueError("bounds must be non-negative (queue length at least 1)")


# ---------------------------------------------------------------------------
# Configurations and steps


@dataclass(frozen=True)
class Configuration:
    """Centralised configuration: local states, queues and one global map."""

    states: tuple[int, ...]
    queues: Queues
    varmap: VarMap

    @property
    def is_final(self) -> bool:
        return self.queues.is_empty()


@dataclass(frozen=True)
class DecConfiguration:
    """Decentralised configuration: each participant has its own map."""

    states: tuple[int, ...]
    maps: tuple[VarMap, ...]
    queues: Queues

    @property
    def is_final(self) -> bool:
        return self.queues.is_empty()


@dataclass(frozen=True)
class GlobalStep:
    """Participant ``participant`` fires ``transition`` with payload ``value``."""

    participant: str
    transition: Transition
    value: int

    @property
    def action(self) -> Action:
        return self.transition.action.instantiate(self.value)

    def key(self) -> tuple:
        """Observable part of the step, ignoring refinement and state ids."""
        a = self.transition.action
        return (self.participant, a.sender, a.direction, a.receiver, a.label, a.var, self.value)

    def __str__(self) -> str:
        a = self.transition.action
        return f"{a.sender}{a.direction}{a.receiver}:{a.label}({a.var},{self.value})"

    def to_json(self) -> dict[str, Any]:
        return {"participant": self.participant, "label": self.transition.action.label, "value": self.value}


class Semantics(Protocol):
    rcs: Rcs

    def initial(self) -> Hashable: ...

    def is_final(self, c) -> bool: ...

    def successors(self, c) -> tuple[list[tuple[GlobalStep, Hashable]], bool]: ...


def _holds(m, r, fvs) -> bool:
    for name in fvs:
        if name not in m:
            return False
    return bool(_ref._eval(r, m))


class _Base:
    def __init__(self, rcs: Rcs, domain: Iterable[int] = DEFAULT_DOMAIN, max_queue_len: int = 4):
        self.rcs = rcs
        self.domain = tuple(domain)
        self.max_queue_len = max_queue_len
        # Per participant and state: transitions with their refinement's free variables.
        self._out: list[dict[int, list[tuple[Transition, frozenset[str], bool]]]] = []
        for m in rcs.machines:
            table = {}
            for s in m.states:
                table[s] = [(t, fv(t.action.refinement), isinstance(t.action.refinement, _ref.Top)) for t in m.outgoing(s)]
            self._out.append(table)

    def values_for(self, var: str) -> tuple[int, ...]:
        return (0,) if var == DISCARD else self.domain

    def is_final(self, c) -> bool:
        return c.queues.is_empty()

    def step_label(self, step: GlobalStep) -> tuple:
        return step.key()


class CentralisedSemantics(_Base):
    """One global map shared by all participants."""

    kind = "central"

    def initial(self) -> Configuration:
        return Configuration(tuple(m.initial for m in self.rcs.machines), Queues.empty(), VarMap.empty())

    def successors(self, c: Configuration) -> tuple[list[tuple[GlobalStep, Configuration]], bool]:
        out: list[tuple[GlobalStep, Configuration]] = []
        bounded = False
        parts = self.rcs.participants
        for i, s in enumerate(c.states):
            for t, fvs, trivial in self._out[i][s]:
                a = t.action
                if a.direction == SEND:
                    if len(c.queues.get(a.sender, a.receiver)) >= self.max_queue_len:
                        bounded = True
                        continue
                    for v in self.values_for(a.var):
                        m2 = c.varmap.update(a.var, v)
                        if trivial or _holds(m2, a.refinement, fvs):
                            states = c.states[:i] + (t.dst,) + c.states[i + 1:]
                            q2 = c.queues.push(a.sender, a.receiver, Message(a.label, a.var, v))
                            out.append((GlobalStep(parts[i], t, v), Configuration(states, q2, m2)))
                else:
                    head = c.queues.head(a.sender, a.receiver)
                    if head is None or head.label != a.label or head.var != a.var:
                        continue
                    m2 = c.varmap.update(a.var, head.value)
                    if trivial or _holds(m2, a.refinement, fvs):
                        states = c.states[:i] + (t.dst,) + c.states[i + 1:]
                        q2 = c.queues.pop(a.sender, a.receiver)
                        out.append((GlobalStep(parts[i], t, head.value), Configuration(states, q2, m2)))
        return out, bounded


class DecentralisedSemantics(_Base):
    """Each participant checks refinements against its own map only."""

    kind = "decentral"

    def initial(self) -> DecConfiguration:
        n = len(self.rcs.machines)
        return DecConfiguration(tuple(m.initial for m in self.rcs.machines), (VarMap.empty(),) * n, Queues.empty())

    def successors(self, c: DecConfiguration) -> tuple[list[tuple[GlobalStep, DecConfiguration]], bool]:
        out: list[tuple[GlobalStep, DecConfiguration]] = []
        bounded = False
        parts = self.rcs.participants
        for i, s in enumerate(c.states):
            mi = c.maps[i]
            for t, fvs, trivial in self._out[i][s]:
                a = t.action
                if a.direction == SEND:
                    if len(c.queues.get(a.sender, a.receiver)) >= self.max_queue_len:
                        bounded = True
                        continue
                    forgotten = mi.remove(a.var)
                    maps = c.maps[:i] + (forgotten,) + c.maps[i + 1:]
                    for v in self.values_for(a.var):
                        if trivial or _holds(mi.update(a.var, v), a.refinement, fvs):
                            states = c.states[:i] + (t.dst,) + c.states[i + 1:]
                            q2 = c.queues.push(a.sender, a.receiver, Message(a.label, a.var, v))
                            out.append((GlobalStep(parts[i], t, v), DecConfiguration(states, maps, q2)))
                else:
                    head = c.queues.head(a.sender, a.receiver)
                    if head is None or head.label != a.label or head.var != a.var:
                        continue
                    m2 = mi.update(a.var, head.value)
                    if trivial or _holds(m2, a.refinement, fvs):
                        states = c.states[:i] + (t.dst,) + c.states[i + 1:]
                        maps = c.maps[:i] + (m2,) + c.maps[i + 1:]
                        q2 = c.queues.pop(a.sender, a.receiver)
                        out.append((GlobalStep(parts[i], t, head.value), DecConfiguration(states, maps, q2)))
        return out, bounded


def make_semantics(rcs: Rcs, kind: str, params: ExploreParams | None = None) -> CentralisedSemantics | DecentralisedSemantics:
    params = params or ExploreParams()
    cls = {"central": CentralisedSemantics, "decentral": DecentralisedSemantics}[kind]
    return cls(rcs, params.value_domain, params.max_queue_len)


def global_steps(rcs: Rcs, c: Configuration, domain: Iterable[int] = DEFAULT_DOMAIN) -> list[GlobalStep]:
    """Centralised steps enabled in ``c`` (queue lengths unbounded)."""
    sem = CentralisedSemantics(rcs, domain, max_queue_len=1 << 30)
    return [s for s, _ in sem.successors(c)[0]]


def apply_step(rcs: Rcs, c: Configuration, step: GlobalStep) -> Configuration:
    sem = CentralisedSemantics(rcs, (step.value,), max_queue_len=1 << 30)
    for s, c2 in sem.successors(c)[0]:
        if s == step:
            return c2
    raise StepNotEnabled(f"{step} is not enabled")


def initial_configuration(rcs: Rcs) -> Configuration:
    return CentralisedSemantics(rcs).initial()


def initial_dec_configuration(rcs: Rcs) -> DecConfiguration:
    return DecentralisedSemantics(rcs).initial()


def is_final(c: Configuration | DecConfiguration) -> bool:
    return c.queues.is_empty()


enabled_centralised = global_steps
apply_centralised = apply_step


# ---------------------------------------------------------------------------
# Runs and exploration


@dataclass(frozen=True)
class Run:
    """A path ``configs[0] --steps[0]--> configs[1] ...``.

    ``status`` is ``final`` (ends with empty queues), ``deadlock`` (no step
    enabled and messages pending) or ``bound`` (cut by a depth or queue bound).
    """

    configs: tuple
    steps: tuple[GlobalStep, ...]
    status: str = "final"

    @property
    def last(self):
        return self.configs[-1]

    def __len__(self) -> int:
        return len(self.steps)


def trace_of_run(run: Run | Sequence[GlobalStep]) -> Trace:
    steps = run.steps if isinstance(run, Run) else run
    return tuple(s.action for s in steps)


@dataclass
class ExploreResult:
    runs: list[Run] = field(default_factory=list)
    deadlocks: list[Run] = field(default_factory=list)
    bound_hits: int = 0
    paths: int = 0

    @property
    def traces(self) -> list[Trace]:
        return [trace_of_run(r) for r in self.runs]


def walk(sem: Semantics, params: ExploreParams) -> Iterator[Run]:
    """Depth-first enumeration of bounded paths.

    Yields every prefix ending in a final configuration (status ``final``),
    every maximal path stuck in a non-final configuration (``deadlock``),
    and every non-final path cut by a bound (``bound``).
    """
    c0 = sem.initial()
    configs = [c0]
    steps: list[GlobalStep] = []
    stack: list[Iterator] = []

    def emit(status: str) -> Run:
        return Run(tuple(configs), tuple(steps), status)

    def expand(c):
        succ, bounded = sem.successors(c)
        return succ, bounded

    succ, bounded = expand(c0)
    if sem.is_final(c0):
        yield emit("final")
    elif not succ:
        yield emit("bound" if bounded else "deadlock")
    if params.max_depth == 0:
        return
    stack.append(iter(succ))
    while stack:
        nxt = next(stack[-1], None)
        if nxt is None:
            stack.pop()
            if steps:
                steps.pop()
                configs.pop()
            continue
        step, c = nxt
        steps.append(step)
        configs.append(c)
        final = sem.is_final(c)
        if len(steps) >= params.max_depth:
            if final:
                yield emit("final")
            else:
                more, bounded = expand(c)
                yield emit("bound" if (more or bounded) else "deadlock")
            steps.pop()
            configs.pop()
            continue
        succ, bounded = expand(c)
        if final:
            yield emit("final")
        elif not succ:
            yield emit("bound" if bounded else "deadlock")
        stack.append(iter(succ))


def explore(rcs: Rcs, params: ExploreParams | None = None, semantics: str = "central") -> ExploreResult:
    """Runs of ``rcs`` under the chosen semantics and exploration mode."""
    params = params or ExploreParams()
    sem = make_semantics(rcs, semantics, params)
    result = ExploreResult()
    if params.mode == "exhaustive":
        source: Iterable[Run] = walk(sem, params)
    elif params.mode == "random":
        source = [random_run(sem, params)]
    else:
        source = [scripted_run(sem, params.script, params.max_depth)]
    for run in source:
        result.paths += 1
        if run.status == "final":
            result.runs.append(run)
        elif run.status == "deadlock":
            result.deadlocks.append(run)
        else:
            result.bound_hits += 1
        if params.max_states is not None and result.paths > params.max_states:
            raise BoundExceeded(f"more than {params.max_states} paths")
    return result


def random_run(sem: Semantics, params: ExploreParams) -> Run:
    """A single seeded random walk of at most ``max_depth`` steps."""
    rng = random.Random(params.seed)
    c = sem.initial()
    configs = [c]
    steps: list[GlobalStep] = []
    while True:
        succ, bounded = sem.successors(c)
        if not succ:
            status = "final" if sem.is_final(c) else ("bound" if bounded else "deadlock")
            return Run(tuple(configs), tuple(steps), status)
        if len(steps) >= params.max_depth:
            return Run(tuple(configs), tuple(steps), "final" if sem.is_final(c) else "bound")
        step, c = succ[rng.randrange(len(succ))]
        steps.append(step)
        configs.append(c)


def scripted_run(sem: Semantics, script: Sequence[ScriptEntry], max_depth: int | None = None) -> Run:
    """Follow ``script`` exactly; raise :class:`ScriptDiverged` otherwise."""
    c = sem.initial()
    configs = [c]
    steps: list[GlobalStep] = []
    for i, entry in enumerate(script):
        succ, _ = sem.successors(c)
        hits = [
            (s, c2)
            for s, c2 in succ
            if s.participant == entry.participant
            and s.transition.action.label == entry.label
            and (entry.value is None or s.value == entry.value)
        ]
        if not hits:
            raise ScriptDiverged(i, f"{entry.participant} cannot do {entry.label}" + (
                f" with value {entry.value}" if entry.value is not None else ""))
        step, c = hits[0]
        steps.append(step)
        configs.append(c)
    succ, bounded = sem.successors(c)
    status = "final" if sem.is_final(c) else ("deadlock" if not succ else "bound")
    return Run(tuple(configs), tuple(steps), status)


def reachable(sem: Semantics, max_depth: int, max_states: int | None = None) -> dict:
    """Breadth-first reachable configurations mapped to their depth."""
    c0 = sem.initial()
    depth = {c0: 0}
    todo = deque([c0])
    while todo:
        c = todo.popleft()
        d = depth[c]
        if d >= max_depth:
            continue
        for _, c2 in sem.successors(c)[0]:
            if c2 not in depth:
                depth[c2] = d + 1
                if max_states is not None and len(depth) > max_states:
                    raise BoundExceeded(f"more than {max_states} configurations")
                todo.append(c2)
    return depth


def accepts_trace(sem: Semantics, trace: Sequence[Action]) -> bool:
    """Whether some run of ``sem`` from its initial configuration has ``trace``."""
    current = {sem.initial()}
    for a in trace:
        nxt = set()
        for c in current:
            for step, c2 in sem.successors(c)[0]:
                if step.action == a:
                    nxt.add(c2)
        if not nxt:
            return False
        current = nxt
    return any(sem.is_final(c) for c in current)


# ---------------------------------------------------------------------------
# Bounded simulation and bisimulation


@dataclass(frozen=True)
class Counterexample:
    """``path`` leads to ``pair``, where ``unmatched`` cannot be answered."""

    path: tuple[GlobalStep, ...]
    unmatched: GlobalStep
    pair: tuple
    side: str = "left"

    @property
    def trace(self) -> Trace:
        return trace_of_run(self.path + (self.unmatched,))

    def to_json(self) -> dict[str, Any]:
        return {
            "path": [s.to_json() for s in self.path],
            "unmatched": self.unmatched.to_json(),
            "side": self.side,
        }


@dataclass(frozen=True)
class SimulationResult:
    holds: bool
    within_bounds: bool
    pairs: int
    counterexample: Counterexample | None = None

    @property
    def verdict(self) -> str:
        if self.holds:
            return "SIMULATES" + (" (within bounds)" if self.within_bounds else "")
        return "COUNTEREXAMPLE"

    def __bool__(self) -> bool:
        return self.holds


def _fixpoint(
    init: tuple,
    obligations_of: Callable[[tuple], list[tuple[str, GlobalStep, list[tuple]]]],
    max_depth: int,
    max_states: int | None,
) -> SimulationResult:
    depth = {init: 0}
    order = [init]
    obligations: dict[tuple, list[tuple[str, GlobalStep, list[tuple]]]] = {}
    parent: dict[tuple, tuple] = {}
    within_bounds = False
    todo = deque([init])
    while todo:
        p = todo.popleft()
        if depth[p] >= max_depth:
            obligations[p] = []
            within_bounds = within_bounds or bool(obligations_of(p))
            continue
        obs = obligations_of(p)
        obligations[p] = obs
        for _, _, cands in obs:
            for q in cands:
                if q not in depth:
                    depth[q] = depth[p] + 1
                    parent[q] = p
                    order.append(q)
                    if max_states is not None and len(depth) > max_states:
                        raise BoundExceeded(f"more than {max_states} configuration pairs")
                    todo.append(q)

    # Greatest fixpoint by counting live candidates per obligation.
    alive = {p: True for p in order}
    counters: dict[tuple[tuple, int], int] = {}
    users: dict[tuple, list[tuple[tuple, int]]] = {}
    dead_order: dict[tuple, int] = {}
    reason: dict[tuple, int] = {}
    kill = deque()
    for p in order:
        for k, (_, _, cands) in enumerate(obligations[p]):
            uniq = set(cands)
            counters[(p, k)] = len(uniq)
            for q in uniq:
                users.setdefault(q, []).append((p, k))
            if not uniq and alive[p]:
                alive[p] = False
                reason[p] = k
                dead_order[p] = len(dead_order)
                kill.append(p)
    while kill:
        q = kill.popleft()
        for p, k in users.get(q, ()):
            counters[(p, k)] -= 1
            if counters[(p, k)] == 0 and alive[p]:
                alive[p] = False
                reason[p] = k
                dead_order[p] = len(dead_order)
                kill.append(p)

    if alive[init]:
        return SimulationResult(True, within_bounds, len(order))

    # Walk from the initial pair along the cause of death to a pair where a
    # step has no answer at all.
    path: list[GlobalStep] = []
    p = init
    while True:
        side, step, cands = obligations[p][reason[p]]
        uniq = set(cands)
        if not uniq:
            return SimulationResult(False, within_bounds, len(order), Counterexample(tuple(path), step, p, side))
        path.append(step)
        p = min(uniq, key=lambda q: dead_order[q])


def _answers(sem: Semantics, c, step: GlobalStep) -> list:
    key = step.key()
    return [c2 for s, c2 in sem.successors(c)[0] if s.key() == key]


def check_simulation(simulator: Semantics, simulated: Semantics, params: ExploreParams | None = None) -> SimulationResult:
    """Bounded check that ``simulator`` simulates ``simulated``.

    Every step of the simulated side must be answered by a step of the
    simulator with the same observable label, and the pair of targets must
    again be related. Pairs at the depth bound are assumed related, in which
    case a positive answer is reported as holding within bounds.
    """
    params = params or ExploreParams()

    def obligations_of(pair):
        c_sim, c_imp = pair
        out = []
        for step, c2 in simulated.successors(c_sim)[0]:
            out.append(("left", step, [(c2, d2) for d2 in _answers(simulator, c_imp, step)]))
        return out

    return _fixpoint((simulated.initial(), simulator.initial()), obligations_of, params.max_depth, params.max_states)


def check_bisimulation(left: Semantics, right: Semantics, params: ExploreParams | None = None) -> SimulationResult:
    """Bounded bisimulation check; a counterexample names the side that moved."""
    params = params or ExploreParams()

    def obligations_of(pair):
        a, b = pair
        out = []
        for step, a2 in left.successors(a)[0]:
            out.append(("left", step, [(a2, b2) for b2 in _answers(right, b, step)]))
        for step, b2 in right.successors(b)[0]:
            out.append(("right", step, [(a2, b2) for a2 in _answers(left, a, step)]))
        return out

    return _fixpoint((left.initial(), right.initial()), obligations_of, params.max_depth, params.max_states)


# ---------------------------------------------------------------------------
# Dynamic decentralisation conditions


@dataclass(frozen=True)
class ConditionViolation:
    kind: str  # "duplication" or "free-variable"
    participant: str
    variable: str
    config: DecConfiguration
    detail: str = ""


def decentralisation_violations(rcs: Rcs, params: ExploreParams | None = None, limit: int = 10) -> list[ConditionViolation]:
    """Check, in every bounded-reachable decentralised configuration, that no
    variable is held twice (across maps and queued messages) and that every
    outgoing transition only mentions variables its participant holds."""
    params = params or ExploreParams()
    sem = DecentralisedSemantics(rcs, params.value_domain, params.max_queue_len)
    out: list[ConditionViolation] = []
    seen_kinds: set[tuple[str, str, str]] = set()
    for c in reachable(sem, params.max_depth, params.max_states):
        holders: dict[str, list[str]] = {}
        for p, m in zip(rcs.participants, c.maps):
            for x in m:
                if x != DISCARD:
                    holders.setdefault(x, []).append(p)
        for p, q, msg in c.queues.messages():
            if msg.var != DISCARD:
                holders.setdefault(msg.var, []).append(f"{p}->{q}")
        for x, hs in holders.items():
            if len(hs) > 1 and ("duplication", hs[0], x) not in seen_kinds:
                seen_kinds.add(("duplication", hs[0], x))
                out.append(ConditionViolation("duplication", hs[0], x, c, "held by " + ", ".join(hs)))
        for i, (p, s) in enumerate(zip(rcs.participants, c.states)):
            dom = c.maps[i].dom()
            for t, fvs, _ in sem._out[i][s]:
                missing = fvs - dom - {t.action.var}
                for x in sorted(missing):
                    if ("free-variable", p, x) not in seen_kinds:
                        seen_kinds.add(("free-variable", p, x))
                        out.append(ConditionViolation("free-variable", p, x, c, f"{t.action} needs {x}"))
        if len(out) >= limit:
            break
    return out


# ---------------------------------------------------------------------------
# Concurrent execution


@dataclass
class ConcurrentOutcome:
    trace: Trace
    completed: bool
    stuck: tuple[str, ...] = ()


def run_concurrent(rcs: Rcs, params: ExploreParams | None = None, timeout: float = 2.0) -> ConcurrentOutcome:
    """Run one thread per participant under the decentralised semantics.

    Queues are the only shared state. Each FIFO has its own condition
    variable, and the global log is appended to while holding the FIFO lock
    so the log is a valid interleaving. A participant stops when its machine
    terminates, when it cannot find a value satisfying any of its send
    refinements, or when a receive waits longer than ``timeout``.
    """
    params = params or ExploreParams()
    base_seed = params.seed if params.seed is not None else 0
    fifos: dict[tuple[str, str], deque] = {}
    conds: dict[tuple[str, str], threading.Condition] = {}
    for p in rcs.participants:
        for q in rcs.participants:
            if p != q:
                fifos[(p, q)] = deque()
                conds[(p, q)] = threading.Condition()
    log: list[Action] = []
    log_lock = threading.Lock()
    stuck: list[str] = []
    deadline = time.monotonic() + timeout * 10

    def worker(idx: int) -> None:
        m = rcs.machines[idx]
        rng = random.Random(base_seed * 7919 + idx)
        state = m.initial
        local = VarMap.empty()
        for _ in range(params.max_depth):
            ts = m.outgoing(state)
            if not ts:
                return
            a0 = ts[0].action
            if a0.direction == SEND:
                options = []
                for t in ts:
                    vals = (0,) if t.action.var == DISCARD else params.value_domain
                    for v in vals:
                        if _ref.models(local.update(t.action.var, v), t.action.refinement):
                            options.append((t, v))
                if not options:
                    stuck.append(m.participant)
                    return
                t, v = options[rng.randrange(len(options))]
                a = t.action
                key = (a.sender, a.receiver)
                with conds[key]:
                    fifos[key].append(Message(a.label, a.var, v))
                    with log_lock:
                        log.append(a.instantiate(v))
                    conds[key].notify_all()
                local = local.remove(a.var)
                state = t.dst
            else:
                key = (a0.sender, a0.receiver)
                with conds[key]:
                    ok = conds[key].wait_for(lambda: bool(fifos[key]), timeout=timeout)
                    if not ok or time.monotonic() > deadline:
                        stuck.append(m.participant)
                        return
                    msg = fifos[key][0]
                    match = [t for t in ts if t.action.label == msg.label and t.action.var == msg.var]
                    if not match:
                        stuck.append(m.participant)
                        return
                    t = match[0]
                    fifos[key].popleft()
                    with log_lock:
                        log.append(t.action.instantiate(msg.value))
                local = local.update(msg.var, msg.value)
                state = t.dst

    threads = [threading.Thread(target=worker, args=(i,), daemon=True) for i in range(len(rcs.machines))]
    for th in threads:
        th.start()
    for th in threads:
        th.join(timeout * 20)
    completed = not stuck and all(not f for f in fifos.values())
    return ConcurrentOutcome(tuple(log), completed, tuple(sorted(stuck)))
