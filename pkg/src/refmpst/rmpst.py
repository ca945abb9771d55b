"""Refined global and local session types, projection and step analysis.

Global types describe a protocol from a bird's-eye view; projecting onto a
participant gives its local type. Nodes of a global type are addressed by
structural paths: the root has the empty path, the body of ``rec`` is child
``0`` and the continuation of branch ``i`` of a communication is child ``i``.
"""

from __future__ import annotations

import enum
from collections.abc import Iterator, Sequence
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

from .refinement import DISCARD, TOP, Expr, fv, pretty

Path = tuple[int, ...]


# ---------------------------------------------------------------------------
# Syntax shared by global and local types


@dataclass(frozen=True)
class Rec:
    tvar: str
    body: "Union[GlobalType, LocalType]"


@dataclass(frozen=True)
class RecVar:
    name: str


@dataclass(frozen=True)
class End:
    pass


END = End()


@dataclass(frozen=True)
class Branch:
    """One labelled alternative ``label(var: sort) |= refinement . cont``."""

    label: str
    var: str
    refinement: Expr
    cont: "Union[GlobalType, LocalType]"
    sort: str = "int"


@dataclass(frozen=True)
class Comm:
    """Global communication ``sender -> receiver { branches }``."""

    sender: str
    receiver: str
    branches: tuple[Branch, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "branches", tuple(self.branches))


@dataclass(frozen=True)
class IntChoice:
    """Local internal choice: send one of the branches to ``peer``."""

    peer: str
    branches: tuple[Branch, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "branches", tuple(self.branches))


@dataclass(frozen=True)
class ExtChoice:
    """Local external choice: receive one of the branches from ``peer``."""

    peer: str
    branches: tuple[Branch, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "branches", tuple(self.branches))


GlobalType = Union[Comm, Rec, RecVar, End]
LocalType = Union[IntChoice, ExtChoice, Rec, RecVar, End]


def comm(sender: str, receiver: str, *branches: Branch) -> Comm:
    return Comm(sender, receiver, tuple(branches))


def branch(label: str, var: str = DISCARD, refinement: Expr = TOP, cont=END, sort: str = "int") -> Branch:
    return Branch(label, var, refinement, cont, sort)


class ProjectionUndefined(Exception):
    """Projection onto ``role`` is undefined (the naive merge failed)."""

    def __init__(self, role: str, reason: str = "", path: Path = ()):
        msg = f"projection onto {role} is undefined"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)
        self.role = role
        self.reason = reason
        self.path = path


class NonUniqueLabels(Exception):
    def __init__(self, labels: Sequence[str]):
        super().__init__("labels occur more than once: " + ", ".join(labels))
        self.labels = tuple(labels)


class MalformedType(Exception):
    pass


class RefinementPlacement(enum.Enum):
    """Which endpoint keeps the refinement of a branch after projection."""

    SEND = "send"
    RECEIVE = "receive"
    BOTH = "both"


# ---------------------------------------------------------------------------
# Structural utilities


def children(t) -> tuple:
    if isinstance(t, Rec):
        return (t.body,)
    if isinstance(t, (Comm, IntChoice, ExtChoice)):
        return tuple(b.cont for b in t.branches)
    return ()


def subterm_at(t, path: Path):
    for i in path:
        kids = children(t)
        if i < 0 or i >= len(kids):
            raise KeyError(f"no child {i} at this node")
        t = kids[i]
    return t


def iter_paths(t, prefix: Path = ()) -> Iterator[tuple[Path, object]]:
    """Pre-order enumeration of ``(path, subterm)`` pairs."""
    stack = [(prefix, t)]
    while stack:
        path, node = stack.pop()
        yield path, node
        kids = children(node)
        for i in range(len(kids) - 1, -1, -1):
            stack.append((path + (i,), kids[i]))


def strip(t):
    """Remove leading ``rec`` binders."""
    while isinstance(t, Rec):
        t = t.body
    return t


def occurs(sub, t) -> bool:
    """``sub`` is a (syntactic) subterm of ``t``."""
    return any(node == sub for _, node in iter_paths(t))


occurs_global = occurs
occurs_local = occurs


def roles(g) -> frozenset[str]:
    out: set[str] = set()
    for _, node in iter_paths(g):
        if isinstance(node, Comm):
            out.add(node.sender)
            out.add(node.receiver)
        elif isinstance(node, (IntChoice, ExtChoice)):
            out.add(node.peer)
    return frozenset(out)


def frv(t) -> frozenset[str]:
    """Free recursion variables."""
    if isinstance(t, RecVar):
        return frozenset((t.name,))
    if isinstance(t, Rec):
        return frv(t.body) - {t.tvar}
    out: frozenset[str] = frozenset()
    for k in children(t):
        out |= frv(k)
    return out


def binders(t) -> list[str]:
    return [node.tvar for _, node in iter_paths(t) if isinstance(node, Rec)]


def type_fv(t) -> frozenset[str]:
    """Refinement variables mentioned anywhere in ``t``."""
    out: set[str] = set()
    for _, node in iter_paths(t):
        if isinstance(node, (Comm, IntChoice, ExtChoice)):
            for b in node.branches:
                out |= fv(b.refinement)
    return frozenset(out)


def payload_vars(t) -> frozenset[str]:
    out: set[str] = set()
    for _, node in iter_paths(t):
        if isinstance(node, (Comm, IntChoice, ExtChoice)):
            out.update(b.var for b in node.branches if b.var != DISCARD)
    return frozenset(out)


def well_formedness_errors(g) -> list[str]:
    """Closedness, guardedness, distinct binders and distinct branch labels."""
    errors = []
    free = frv(g)
    if free:
        errors.append("unbound recursion variables: " + ", ".join(sorted(free)))
    recs: dict[str, set] = {}
    for _, node in iter_paths(g):
        if isinstance(node, Rec):
            recs.setdefault(node.tvar, set()).add(node)
    # Identical copies of one binder (from a duplicated tail) are harmless.
    dup = sorted(n for n, nodes in recs.items() if len(nodes) > 1)
    if dup:
        errors.append("recursion variables bound more than once: " + ", ".join(dup))
    for path, node in iter_paths(g):
        if isinstance(node, Rec) and isinstance(strip(node), RecVar):
            errors.append(f"unguarded recursion at {format_path(path)}")
        if isinstance(node, (Comm, IntChoice, ExtChoice)):
            labels = [b.label for b in node.branches]
            if not labels:
                errors.append(f"empty choice at {format_path(path)}")
            if len(set(labels)) != len(labels):
                errors.append(f"duplicate branch labels at {format_path(path)}")
            if isinstance(node, Comm) and node.sender == node.receiver:
                errors.append(f"self communication at {format_path(path)}")
    return errors


def binder_of(t, name: str):
    """The ``rec name . body`` node of ``t``; types bind each variable once."""
    for _, node in iter_paths(t):
        if isinstance(node, Rec) and node.tvar == name:
            return node
    raise MalformedType(f"unbound recursion variable {name}")


def format_path(path: Path) -> str:
    return "/".join(["0", *map(str, path)])


# ---------------------------------------------------------------------------
# Projection


def merge(types: Sequence, role: str = "?", path: Path = ()):
    """Naive merge: all candidates must be syntactically equal."""
    first = types[0]
    for other in types[1:]:
        if other != first:
            raise ProjectionUndefined(role, f"branches disagree at {format_path(path)}", path)
    return first


def project(g: GlobalType, p: str, placement: RefinementPlacement = RefinementPlacement.SEND) -> LocalType:
    """Local type of ``p`` in ``g``. Raises :class:`ProjectionUndefined`."""
    return _project(g, p, placement, ())


def _project(g, p: str, placement: RefinementPlacement, path: Path):
    if isinstance(g, End):
        return END
    if isinstance(g, RecVar):
        return g
    if isinstance(g, Rec):
        if p in roles(g.body) or frv(g):
            return Rec(g.tvar, _project(g.body, p, placement, path + (0,)))
        return END
    if isinstance(g, Comm):
        conts = [_project(b.cont, p, placement, path + (i,)) for i, b in enumerate(g.branches)]
        if p == g.sender:
            keep = placement in (RefinementPlacement.SEND, RefinementPlacement.BOTH)
            return IntChoice(g.receiver, tuple(
                Branch(b.label, b.var, b.refinement if keep else TOP, c, b.sort) for b, c in zip(g.branches, conts)
            ))
        if p == g.receiver:
            keep = placement in (RefinementPlacement.RECEIVE, RefinementPlacement.BOTH)
            return ExtChoice(g.sender, tuple(
                Branch(b.label, b.var, b.refinement if keep else TOP, c, b.sort) for b, c in zip(g.branches, conts)
            ))
        return merge(conts, p, path)
    raise TypeError(f"not a global type: {g!r}")


def project_all(g: GlobalType, placement: RefinementPlacement = RefinementPlacement.SEND) -> dict[str, LocalType]:
    return {p: project(g, p, placement) for p in sorted(roles(g))}


# ---------------------------------------------------------------------------
# Steps and happens-before


@dataclass(frozen=True)
class Step:
    """``sender -> receiver : (label, var) |= refinement`` at a node of a type."""

    path: Path
    index: int
    sender: str
    receiver: str
    label: str
    var: str
    refinement: Expr

    @property
    def address(self) -> str:
        return format_path(self.path) + "/" + self.label

    def __str__(self) -> str:
        return f"{self.sender}->{self.receiver}:{self.label}({self.var})|={pretty(self.refinement)}"


def steps_of(g: GlobalType) -> list[Step]:
    """Every step of every communication node, in path order."""
    out = []
    for path, node in sorted(iter_paths(g), key=lambda pn: pn[0]):
        if isinstance(node, Comm):
            for i, b in enumerate(node.branches):
                out.append(Step(path, i, node.sender, node.receiver, b.label, b.var, b.refinement))
    return out


def labels_of(g: GlobalType) -> list[str]:
    return [s.label for s in steps_of(g)]


def check_unique_labels(g: GlobalType) -> None:
    seen: set[str] = set()
    dup: list[str] = []
    for label in labels_of(g):
        if label in seen and label not in dup:
            dup.append(label)
        seen.add(label)
    if dup:
        raise NonUniqueLabels(dup)


def make_labels_unique(g: GlobalType) -> GlobalType:
    """Rename repeated labels to ``label#k`` (k = 1, 2, ...) in path order."""
    counts: dict[str, int] = {}
    renames: dict[tuple[Path, int], str] = {}
    for s in steps_of(g):
        k = counts.get(s.label, 0)
        counts[s.label] = k + 1
        if k:
            renames[(s.path, s.index)] = f"{s.label}#{k}"
    if not renames:
        return g

    def go(t, path: Path):
        if isinstance(t, Rec):
            return Rec(t.tvar, go(t.body, path + (0,)))
        if isinstance(t, Comm):
            return Comm(t.sender, t.receiver, tuple(
                Branch(renames.get((path, i), b.label), b.var, b.refinement, go(b.cont, path + (i,)), b.sort)
                for i, b in enumerate(t.branches)
            ))
        return t

    return go(g, ())


def find_step(g: GlobalType, label: str) -> Step:
    matches = [s for s in steps_of(g) if s.label == label]
    if not matches:
        raise KeyError(f"no step labelled {label!r}")
    if len(matches) > 1:
        raise NonUniqueLabels([label])
    return matches[0]


def parse_step_address(g: GlobalType, address: str) -> Step:
    """Resolve ``0/i1/.../ik/label`` (node path then branch label) to a step."""
    parts = [p for p in address.strip().split("/") if p != ""]
    if len(parts) < 2 or parts[0] != "0":
        raise KeyError(f"step address must look like 0/<indices>/<label>, got {address!r}")
    try:
        path = tuple(int(x) for x in parts[1:-1])
    except ValueError:
        raise KeyError(f"bad path in step address {address!r}") from None
    node = subterm_at(g, path)
    if not isinstance(node, Comm):
        raise KeyError(f"{format_path(path)} is not a communication")
    for i, b in enumerate(node.branches):
        if b.label == parts[-1]:
            return Step(path, i, node.sender, node.receiver, b.label, b.var, b.refinement)
    raise KeyError(f"no branch {parts[-1]!r} at {format_path(path)}")


class HappensBefore:
    """Transitive closure of the immediate happens-before relation on nodes.

    ``G1 <' G2`` when ``G2`` occurs in a continuation of ``G1`` and the sender
    of ``G2`` took part in ``G1`` (as sender or receiver).
    """

    def __init__(self, g: GlobalType):
        self.g = g
        nodes = {path: node for path, node in iter_paths(g) if isinstance(node, Comm)}
        self.nodes = nodes
        succ: dict[Path, set[Path]] = {p: set() for p in nodes}
        for p1, n1 in nodes.items():
            involved = (n1.sender, n1.receiver)
            for p2, n2 in nodes.items():
                if len(p2) > len(p1) and p2[: len(p1)] == p1 and n2.sender in involved:
                    succ[p1].add(p2)
        self.immediate = succ
        closure: dict[Path, frozenset[Path]] = {}
        # Successors are strictly deeper, so process deepest nodes first.
        for p in sorted(nodes, key=len, reverse=True):
            acc: set[Path] = set()
            for q in succ[p]:
                acc.add(q)
                acc |= closure[q]
            closure[p] = frozenset(acc)
        self.closure = closure

    def before(self, p1: Path, p2: Path) -> bool:
        return p2 in self.closure.get(p1, ())


@lru_cache(maxsize=64)
def _hb(g: GlobalType) -> HappensBefore:
    return HappensBefore(g)


def happens_before(g: GlobalType, p1: Path, p2: Path) -> bool:
    return _hb(g).before(p1, p2)


def step_definers(g: GlobalType, z: Step, x: str) -> list[tuple[Path, int]]:
    """Nodes (and branch) that send ``x`` and happen before the node of ``z``."""
    hb = _hb(g)
    out = []
    for path, node in hb.nodes.items():
        if not hb.before(path, z.path):
            continue
        for i, b in enumerate(node.branches):
            if b.var == x and z.path[: len(path) + 1] == path + (i,):
                out.append((path, i))
    return sorted(out)


def is_well_defined_step(g: GlobalType, z: Step) -> bool:
    """Every free variable of the refinement of ``z`` was sent before it."""
    return all(step_definers(g, z, x) for x in fv(z.refinement))


def replace_refinement(g: GlobalType, path: Path, index: int, refinement: Expr) -> GlobalType:
    """Copy of ``g`` with the refinement of one branch replaced."""

    def go(t, depth: int):
        if depth == len(path):
            if not isinstance(t, Comm):
                raise KeyError("not a communication node")
            bs = list(t.branches)
            b = bs[index]
            bs[index] = Branch(b.label, b.var, refinement, b.cont, b.sort)
            return Comm(t.sender, t.receiver, tuple(bs))
        i = path[depth]
        if isinstance(t, Rec):
            return Rec(t.tvar, go(t.body, depth + 1))
        if isinstance(t, Comm):
            bs = list(t.branches)
            b = bs[i]
            bs[i] = Branch(b.label, b.var, b.refinement, go(b.cont, depth + 1), b.sort)
            return Comm(t.sender, t.receiver, tuple(bs))
        raise KeyError("path leaves the type")

    return go(g, 0)


def size(t) -> int:
    return sum(1 for _ in iter_paths(t))


# ---------------------------------------------------------------------------
# Textual form


def _show_branch(b: Branch) -> str:
    return f"{b.label}({b.var}: {b.sort}){{{pretty(b.refinement)}}}. {show(b.cont)}"


def show(t) -> str:
    """ASCII rendering, e.g. ``A->B {l1(x: int){x < 0}. end}``.

    Local choices render as ``B!{...}`` (send to B) and ``A?{...}`` (receive
    from A). The frontend parses this form back to the same term.
    """
    if isinstance(t, End):
        return "end"
    if isinstance(t, RecVar):
        return t.name
    if isinstance(t, Rec):
        return f"rec {t.tvar}. {show(t.body)}"
    if isinstance(t, Comm):
        head = f"{t.sender}->{t.receiver}"
    elif isinstance(t, IntChoice):
        head = f"{t.peer}!"
    elif isinstance(t, ExtChoice):
        head = f"{t.peer}?"
    else:
        raise TypeError(f"not a session type: {t!r}")
    return head + " {" + ", ".join(_show_branch(b) for b in t.branches) + "}"
