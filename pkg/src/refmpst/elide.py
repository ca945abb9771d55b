"""Elision of redundant refinements.

A refinement ``r`` on a transition ``t`` is redundant when every transition
that can set one of the variables of ``r`` already guarantees ``r``. Removing
it (replacing it by ``true``) then leaves the behaviour of the system
unchanged. The checks here are conservative:

* ``t`` must not depend on its own payload (self-independence);
* ``t`` must be well-defined: the variables of ``r`` are always bound when
  ``t`` can fire;
* every send transition (or type step) carrying a variable of ``r`` must
  entail ``r``. Entailment is decided by enumeration over a finite domain.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .automata import Rcs, Transition, rcs_of
from .refinement import TOP, Expr, Top, constants, fv, models, pretty
from .rmpst import (
    GlobalType,
    NonUniqueLabels,
    Step,
    check_unique_labels,
    find_step,
    is_well_defined_step,
    parse_step_address,
    replace_refinement,
    step_definers,
    steps_of,
)
from .semantics import BoundExceeded, CentralisedSemantics, ExploreParams, reachable
from .trace import SEND

MAX_ASSIGNMENTS = 2_000_000


def depends_on(u: Transition, t: Transition) -> bool:
    """``t`` depends on ``u`` when ``u``'s payload occurs in ``t``'s refinement."""
    return u.action.var in fv(t.action.refinement)


def is_self_independent(t: Transition) -> bool:
    return not depends_on(t, t)


@dataclass(frozen=True)
class Entailment:
    holds: bool
    witness: dict[str, int] | None = None
    reason: str = ""

    def __bool__(self) -> bool:
        return self.holds


def default_domain(*refinements: Expr) -> tuple[int, ...]:
    """Values around every constant of the refinements, mirrored around zero."""
    vals = {-1, 0, 1}
    for r in refinements:
        for c in constants(r):
            for v in (c - 1, c, c + 1):
                vals.add(v)
                vals.add(-v)
    return tuple(sorted(vals))


def entails(antecedent: Expr, consequent: Expr, domain: tuple[int, ...] | None = None) -> Entailment:
    """Whether every map satisfying ``antecedent`` satisfies ``consequent``.

    Maps range over the variables of both formulae with values from
    ``domain``. Since a map that binds only the variables of the antecedent
    does not satisfy a consequent mentioning other variables, entailment also
    requires ``fv(consequent) <= fv(antecedent)`` unless the antecedent is
    unsatisfiable on the domain.
    """
    if domain is None:
        domain = default_domain(antecedent, consequent)
    domain = tuple(domain)
    names = sorted(fv(antecedent) | fv(consequent))
    if len(domain) ** len(names) > MAX_ASSIGNMENTS:
        raise BoundExceeded(f"{len(domain)}^{len(names)} assignments to enumerate")
    satisfiable = None
    for values in itertools.product(domain, repeat=len(names)):
        m = dict(zip(names, values))
        if models(m, antecedent):
            if satisfiable is None:
                satisfiable = m
            if not models(m, consequent):
                return Entailment(False, m, f"{pretty(antecedent)} holds but {pretty(consequent)} fails")
    extra = fv(consequent) - fv(antecedent)
    if extra and satisfiable is not None:
        witness = {k: v for k, v in satisfiable.items() if k in fv(antecedent)}
        return Entailment(
            False, witness,
            f"{pretty(consequent)} mentions {', '.join(sorted(extra))}, which {pretty(antecedent)} does not bind",
        )
    return Entailment(True)


@dataclass(frozen=True)
class Rejected:
    """Why an elision was refused."""

    reason: str
    guard: str | None = None
    witness: dict[str, int] | None = None

    def __bool__(self) -> bool:
        return False

    def to_json(self) -> dict:
        out: dict = {"rejected": self.reason}
        if self.guard is not None:
            out["guard"] = self.guard
        if self.witness is not None:
            out["witness"] = self.witness
        return out


# ---------------------------------------------------------------------------
# Automata level


def step_of(g: GlobalType, t: Transition) -> Step:
    """The step of ``g`` that ``t`` was projected from (labels must be unique)."""
    return find_step(g, t.action.label)


def is_well_defined_transition(
    rcs: Rcs,
    participant: str,
    t: Transition,
    params: ExploreParams | None = None,
    g: GlobalType | None = None,
) -> bool | None:
    """Well-definedness of ``t``.

    With a global type ``g`` the type-level criterion on the matching step is
    used. Otherwise every bounded-reachable centralised configuration in
    which ``participant`` sits at the source of ``t`` is checked; ``None``
    means the state budget ran out.
    """
    need = fv(t.action.refinement)
    if g is not None:
        return is_well_defined_step(g, step_of(g, t))
    params = params or ExploreParams()
    sem = CentralisedSemantics(rcs, params.value_domain, params.max_queue_len)
    i = rcs.index(participant)
    try:
        configs = reachable(sem, params.max_depth, params.max_states)
    except BoundExceeded:
        return None
    return all(need <= c.varmap.dom() for c in configs if c.states[i] == t.src)


def _guards(rcs: Rcs, variables: frozenset[str], target: Transition):
    for p, u in rcs.transitions():
        if u.action.direction == SEND and u.action.var in variables and u != target:
            yield p, u


def elide_rcs(
    rcs: Rcs,
    participant: str,
    target: Transition,
    domain: tuple[int, ...] | None = None,
    params: ExploreParams | None = None,
    g: GlobalType | None = None,
) -> Rcs | Rejected:
    """Replace the refinement of ``target`` by ``true`` when it is redundant."""
    r = target.action.refinement
    if isinstance(r, Top):
        return rcs
    if not is_self_independent(target):
        return Rejected(f"{target.action.label} depends on its own payload {target.action.var}")
    guards = list(_guards(rcs, fv(r), target))
    if domain is None:
        domain = default_domain(r, *(u.action.refinement for _, u in guards))
    if params is None:
        params = ExploreParams(value_domain=domain)
    wd = is_well_defined_transition(rcs, participant, target, params, g)
    if wd is None:
        return Rejected(f"well-definedness of {target.action.label} is unknown within the bounds")
    if not wd:
        return Rejected(f"{target.action.label} is not well-defined: {pretty(r)} may mention unbound variables")
    for _, u in guards:
        ent = entails(u.action.refinement, r, domain)
        if not ent:
            return Rejected(f"{u.action.label} does not guarantee {pretty(r)}: {ent.reason}", u.action.label, ent.witness)
    return rcs.replace(rcs[participant].with_refinement(target, TOP))


# ---------------------------------------------------------------------------
# Type level


def resolve_step(g: GlobalType, target: Step | str) -> Step:
    """Accept a step, a branch label, or an address ``0/.../label``."""
    if isinstance(target, Step):
        return target
    if "/" in target:
        return parse_step_address(g, target)
    return find_step(g, target)


def elide_type(g: GlobalType, target: Step | str, domain: tuple[int, ...] | None = None) -> GlobalType | Rejected:
    """Drop the refinement of one step when it is implied by its guards."""
    try:
        check_unique_labels(g)
    except NonUniqueLabels as e:
        return Rejected(str(e))
    z = resolve_step(g, target)
    r = z.refinement
    if isinstance(r, Top):
        return g
    if z.var in fv(r):
        return Rejected(f"{z.label} depends on its own payload {z.var}")
    if not is_well_defined_step(g, z):
        missing = sorted(x for x in fv(r) if not _defined(g, z, x))
        return Rejected(f"{z.label} is not well-defined: nothing sends {', '.join(missing)} before it")
    guards = [w for w in steps_of(g) if w.var in fv(r) and (w.path, w.index) != (z.path, z.index)]
    if domain is None:
        domain = default_domain(r, *(w.refinement for w in guards))
    for w in guards:
        ent = entails(w.refinement, r, domain)
        if not ent:
            return Rejected(f"{w.label} does not guarantee {pretty(r)}: {ent.reason}", w.label, ent.witness)
    return replace_refinement(g, z.path, z.index, TOP)


def _defined(g: GlobalType, z: Step, x: str) -> bool:
    return bool(step_definers(g, z, x))


def force_elide_type(g: GlobalType, target: Step | str) -> GlobalType:
    """Drop the refinement without any check (for counterexamples)."""
    z = resolve_step(g, target)
    return replace_refinement(g, z.path, z.index, TOP)


def elide_many(g: GlobalType, targets: list[str], domain: tuple[int, ...] | None = None) -> GlobalType | Rejected:
    """Apply successive elisions in order, stopping at the first rejection."""
    for target in targets:
        out = elide_type(g, target, domain)
        if isinstance(out, Rejected):
            return out
        g = out
    return g


def transition_of_step(g: GlobalType, z: Step) -> tuple[str, Transition]:
    """The sender's transition that corresponds to step ``z``."""
    rcs = rcs_of(g)
    m = rcs[z.sender]
    return z.sender, m.find(z.label)
