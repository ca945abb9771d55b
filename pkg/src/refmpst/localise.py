"""Static localisation check: can a type run with per-participant maps?

The check works on the *type graph* of a global type, whose vertices are
its communication subterms and whose edges are branches. Every loop of the
graph is unrolled once, then a Datalog-style fixpoint computes facts
``In(s, p, x)``: in state ``s`` participant ``p`` holds variable ``x``.
Two kinds of problems are reported:

``NotVerifFV``
    a participant sends a branch whose refinement mentions a variable it
    does not hold;
``NotVerifDupl``
    a variable is held by two participants at once, or is sent by one
    participant while another still holds the previous value.
"""

from __future__ import annotations

from collections import deque
from collections.abc import Iterable
from dataclasses import dataclass, field

from .refinement import DISCARD, fv
from .rmpst import Comm, End, GlobalType, Path, Rec, RecVar, binder_of, format_path, iter_paths, payload_vars, strip


# Unrolling can grow exponentially with nested loops; past this many
# vertices the analysis gives up rather than run for minutes.
MAX_UNROLLED = 5000


class UnrollLimit(Exception):
    """Unrolling produced more vertices than the configured limit."""


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    sender: str
    receiver: str
    var: str
    fvs: frozenset[str]
    labels: tuple[str, ...]
    visited: bool = False

    def retarget(self, src: int, dst: int, visited: bool | None = None) -> "Edge":
        return Edge(src, dst, self.sender, self.receiver, self.var, self.fvs, self.labels,
                    self.visited if visited is None else visited)

    @property
    def label_key(self) -> tuple:
        return (self.sender, self.receiver, self.var, self.fvs)


@dataclass
class TypeGraph:
    """Labelled graph of a global type.

    ``origin`` maps every vertex to the vertex of the original graph it was
    copied from (itself for original vertices), and ``paths`` gives the
    structural path of each original vertex in the type.
    """

    vertices: list[int]
    initial: int
    edges: list[Edge]
    origin: dict[int, int]
    paths: dict[int, Path]
    names: dict[int, str] = field(default_factory=dict)

    def out_edges(self, v: int) -> list[Edge]:
        return [e for e in self.edges if e.src == v]

    def depths(self) -> dict[int, int]:
        """Breadth-first distance from the initial vertex."""
        succ: dict[int, list[int]] = {}
        for e in self.edges:
            succ.setdefault(e.src, []).append(e.dst)
        depth = {self.initial: 0}
        todo = deque([self.initial])
        while todo:
            v = todo.popleft()
            for w in succ.get(v, ()):
                if w not in depth:
                    depth[w] = depth[v] + 1
                    todo.append(w)
        return depth

    def reachable_from(self, v: int) -> set[int]:
        succ: dict[int, list[int]] = {}
        for e in self.edges:
            succ.setdefault(e.src, []).append(e.dst)
        seen = {v}
        todo = [v]
        while todo:
            u = todo.pop()
            for w in succ.get(u, ()):
                if w not in seen:
                    seen.add(w)
                    todo.append(w)
        return seen

    def path_of(self, v: int) -> Path:
        return self.paths[self.origin[v]]


def _resolve(g: GlobalType, cont):
    cont = strip(cont)
    if isinstance(cont, RecVar):
        cont = strip(binder_of(g, cont.name).body)
    return cont


def type_graph(g: GlobalType, collapse: bool = True) -> TypeGraph:
    """Graph of ``g``. With ``collapse``, branches that agree on sender,
    receiver, payload variable, refinement variables and target share an
    edge; otherwise every branch keeps its own edge."""
    index: dict[object, int] = {}
    paths: dict[int, Path] = {}
    terms: list[object] = []
    for path, node in iter_paths(g):
        if isinstance(node, (Rec, RecVar)):
            continue
        if node not in index:
            index[node] = len(terms)
            paths[len(terms)] = path
            terms.append(node)
    start = index[strip(g)]
    edges: list[Edge] = []
    by_key: dict[tuple, int] = {}
    for v, term in enumerate(terms):
        if not isinstance(term, Comm):
            continue
        for b in term.branches:
            dst = index[_resolve(g, b.cont)]
            e = Edge(v, dst, term.sender, term.receiver, b.var, fv(b.refinement), (b.label,))
            key = (v, dst) + e.label_key
            if collapse and key in by_key:
                old = edges[by_key[key]]
                edges[by_key[key]] = Edge(old.src, old.dst, old.sender, old.receiver, old.var, old.fvs, old.labels + (b.label,))
                continue
            by_key[key] = len(edges)
            edges.append(e)
    vertices = list(range(len(terms)))
    names = {v: _vertex_name(t) for v, t in enumerate(terms)}
    return TypeGraph(vertices, start, edges, {v: v for v in vertices}, paths, names)


def _vertex_name(t) -> str:
    if isinstance(t, End):
        return "end"
    assert isinstance(t, Comm)
    return f"{t.sender}->{t.receiver} {{{', '.join(b.label for b in t.branches)}}}"


def unroll(graph: TypeGraph, max_vertices: int = MAX_UNROLLED) -> TypeGraph:
    """Unroll every loop of ``graph`` once.

    Repeatedly pick an unvisited backward edge ``v1 -> v2`` (one whose source
    is at least as deep as its target), mark it visited, copy the subgraph
    reachable from ``v2``, and redirect the edge to the copy of ``v2``.
    Candidates are taken in order of source depth, then the structural path
    of the source, then creation order, so the result is deterministic.
    """
    vertices = list(graph.vertices)
    edges = list(graph.edges)
    origin = dict(graph.origin)
    names = dict(graph.names)
    next_id = max(vertices, default=-1) + 1
    g = TypeGraph(vertices, graph.initial, edges, origin, graph.paths, names)
    while True:
        depth = g.depths()
        best = None
        for i, e in enumerate(g.edges):
            if e.visited or e.src not in depth or depth[e.src] < depth[e.dst]:
                continue
            key = (depth[e.src], g.path_of(e.src), e.src, i)
            if best is None or key < best[0]:
                best = (key, i)
        if best is None:
            break
        i = best[1]
        e = g.edges[i].retarget(g.edges[i].src, g.edges[i].dst, visited=True)
        g.edges[i] = e
        region = g.reachable_from(e.dst)
        copy: dict[int, int] = {}
        for v in sorted(region):
            copy[v] = next_id
            g.origin[next_id] = g.origin[v]
            g.names[next_id] = g.names.get(v, "")
            g.vertices.append(next_id)
            next_id += 1
        if len(g.vertices) > max_vertices:
            raise UnrollLimit(f"unrolling exceeded {max_vertices} vertices")
        copied = [f.retarget(copy[f.src], copy[f.dst]) for f in g.edges if f.src in region]
        del g.edges[i]
        g.edges.extend(copied)
        g.edges.append(e.retarget(e.src, copy[e.dst], visited=True))
        _prune(g)
    return g


def _prune(g: TypeGraph) -> None:
    live = g.reachable_from(g.initial)
    g.vertices[:] = [v for v in g.vertices if v in live]
    g.edges[:] = [e for e in g.edges if e.src in live]
    for v in list(g.origin):
        if v not in live and v not in g.paths:
            del g.origin[v]
            g.names.pop(v, None)


# ---------------------------------------------------------------------------
# Inference


@dataclass(frozen=True)
class SendFact:
    src: int
    sender: str
    var: str
    receiver: str
    dst: int
    fvs: frozenset[str]
    labels: tuple[str, ...]


def send_facts(g: TypeGraph) -> list[SendFact]:
    """``Send`` facts of the graph; discard payloads get a fresh name per edge."""
    out = []
    for i, e in enumerate(g.edges):
        var = f"{DISCARD}#{i}" if e.var == DISCARD else e.var
        out.append(SendFact(e.src, e.sender, var, e.receiver, e.dst, e.fvs, e.labels))
    return out


def infer_in(sends: Iterable[SendFact]) -> tuple[frozenset[tuple[int, str, str]], int]:
    """Least fixpoint of the ``In`` rules, computed semi-naively.

    Rules::

        In(s2, q, x) <- Send(_, _, x, q, s2)
        In(s2, p, x) <- In(s1, p, x), Send(s1, p, y, _, s2), x != y
        In(s2, r, x) <- In(s1, r, x), Send(s1, p, _, _, s2), p != r

    Returns the facts and the number of rounds.
    """
    sends = list(sends)
    by_src: dict[int, list[SendFact]] = {}
    for s in sends:
        by_src.setdefault(s.src, []).append(s)
    facts: set[tuple[int, str, str]] = set()
    delta = {(s.dst, s.receiver, s.var) for s in sends}
    rounds = 0
    while delta:
        rounds += 1
        facts |= delta
        new: set[tuple[int, str, str]] = set()
        for s1, r, x in delta:
            for s in by_src.get(s1, ()):
                if s.sender != r or s.var != x:
                    fact = (s.dst, r, x)
                    if fact not in facts:
                        new.add(fact)
        delta = new
    return frozenset(facts), rounds


@dataclass(frozen=True)
class Violation:
    kind: str  # "NotVerifFV" or "NotVerifDupl"
    vertex: int
    var: str
    roles: tuple[str, ...]
    labels: tuple[str, ...]
    path: Path

    def describe(self) -> str:
        where = f"at {format_path(self.path)} ({', '.join(self.labels)})" if self.labels else f"at {format_path(self.path)}"
        if self.kind == "NotVerifFV":
            return f"{self.roles[0]} cannot check a refinement on {self.var}: it does not hold {self.var} {where}"
        return f"{self.var} is held by both {self.roles[0]} and {self.roles[1]} {where}"

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "vertex": self.vertex,
            "var": self.var,
            "roles": list(self.roles),
            "labels": list(self.labels),
            "path": format_path(self.path),
            "message": self.describe(),
        }


def find_violations(g: TypeGraph, sends: list[SendFact], facts: frozenset[tuple[int, str, str]]) -> list[Violation]:
    held: dict[int, dict[str, set[str]]] = {}
    for s, p, x in facts:
        held.setdefault(s, {}).setdefault(x, set()).add(p)
    out: set[Violation] = set()
    for sf in sends:
        for x in sorted(sf.fvs - {sf.var}):
            if sf.sender not in held.get(sf.src, {}).get(x, ()):
                out.add(Violation("NotVerifFV", sf.src, x, (sf.sender,), sf.labels, g.path_of(sf.src)))
        # A participant sends x while someone else still holds the old x.
        for r in sorted(held.get(sf.src, {}).get(sf.var, ())):
            if r != sf.sender and not sf.var.startswith(DISCARD):
                out.add(Violation("NotVerifDupl", sf.src, sf.var, tuple(sorted((sf.sender, r))), sf.labels, g.path_of(sf.src)))
    for s, by_var in held.items():
        for x, ps in by_var.items():
            if x.startswith(DISCARD):
                continue
            ps_sorted = sorted(ps)
            for i in range(len(ps_sorted)):
                for j in range(i + 1, len(ps_sorted)):
                    out.add(Violation("NotVerifDupl", s, x, (ps_sorted[i], ps_sorted[j]), (), g.path_of(s)))
    return sorted(out, key=lambda v: (v.kind, v.vertex, v.var, v.roles, v.labels))


@dataclass
class LocalisationReport:
    decentralisable: bool
    graph: TypeGraph
    unrolled: TypeGraph
    facts: frozenset[tuple[int, str, str]]
    violations: list[Violation]
    rounds: int
    variables: frozenset[str]

    @property
    def verdict(self) -> str:
        return "decentralisable" if self.decentralisable else "not decentralisable"

    @property
    def sizes(self) -> dict[str, int]:
        return {"S": len(self.graph.vertices), "U": len(self.unrolled.vertices), "V": len(self.variables)}

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}

    def facts_json(self) -> list[dict]:
        return [
            {"vertex": s, "role": p, "var": x, "path": format_path(self.unrolled.path_of(s))}
            for s, p, x in sorted(self.facts, key=lambda f: (f[0], f[1], f[2]))
        ]

    def to_json(self, facts: bool = False) -> dict:
        out = {
            "verdict": self.verdict,
            "sizes": self.sizes,
            "violations": [v.to_json() for v in self.violations],
            "rounds": self.rounds,
        }
        if facts:
            out["facts"] = self.facts_json()
        return out


def localise(g: GlobalType, collapse: bool = True, max_vertices: int = MAX_UNROLLED) -> LocalisationReport:
    """Decide whether ``g`` can run with one variable map per participant."""
    graph = type_graph(g, collapse=collapse)
    unrolled = unroll(graph, max_vertices=max_vertices)
    sends = send_facts(unrolled)
    facts, rounds = infer_in(sends)
    violations = find_violations(unrolled, sends, facts)
    return LocalisationReport(not violations, graph, unrolled, facts, violations, rounds, payload_vars(g))


# ---------------------------------------------------------------------------
# DOT


def type_graph_to_dot(g: TypeGraph, name: str = "type_graph") -> str:
    lines = [f'digraph "{name}" {{', "  rankdir=LR;", "  node [shape=box];"]
    for v in g.vertices:
        label = f"S{v}"
        if g.origin.get(v, v) != v:
            label += f" (copy of S{g.origin[v]})"
        lines.append(f'  s{v} [label="{label}"];')
    for e in g.edges:
        fvs = ", ".join(sorted(e.fvs))
        style = ", style=dashed" if e.visited else ""
        text = f"{e.sender}->{e.receiver}: {e.var} {{{fvs}}} [{' | '.join(e.labels)}]"
        lines.append(f'  s{e.src} -> s{e.dst} [label="{text}"{style}];')
    lines.append("}")
    return "\n".join(lines) + "\n"
