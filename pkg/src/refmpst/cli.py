"""Command line interface.

Exit codes: 0 for success or a positive verdict, 1 for a negative verdict
(invalid trace, undefined projection, not decentralisable, rejected
elision, deadlock found), 2 for usage and parse errors. JSON and DOT go to
standard output, diagnostics to standard error.
"""

from __future__ import annotations

import argparse
import json
import sys
from collections.abc import Sequence
from typing import Any

from . import __version__, corpus
from .automata import rcfsm_to_dot, rcs_of, rcs_to_dot
from .elide import Rejected, elide_rcs, elide_type, force_elide_type
from .frontend import emit_dot, emit_type, parse
from .localise import MAX_UNROLLED, UnrollLimit, localise
from .refinement import pretty
from .rmpst import GlobalType, ProjectionUndefined, RefinementPlacement, project, roles
from .semantics import (
    BoundExceeded,
    ExploreParams,
    ScriptDiverged,
    ScriptEntry,
    explore,
    make_semantics,
    random_run,
    scripted_run,
    trace_of_run,
)
from .trace import TraceFormatError, is_valid_refined, trace_from_json, trace_to_json

OK, NEGATIVE, USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    if path.startswith("@"):
        try:
            return corpus.source(path[1:])
        except KeyError as e:
            raise UsageError(str(e.args[0])) from None
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from None


def _load(path: str) -> tuple[GlobalType, dict[str, Any]]:
    text = _read(path)
    res = parse(text)
    name = "<stdin>" if path == "-" else path
    for d in res.diagnostics:
        print(d.render(text, name), file=sys.stderr)
    if not res.ok:
        raise UsageError(f"{name}: could not parse the protocol")
    return res.type, {"name": res.name, "roles": list(res.roles) or sorted(roles(res.type))}


def _domain(text: str) -> tuple[int, ...]:
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            lo_i, hi_i = int(lo), int(hi)
            if hi_i < lo_i:
                raise ValueError
            return tuple(range(lo_i, hi_i + 1))
        return tuple(sorted({int(v) for v in text.split(",")}))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a domain such as 0..4 or 1,5,9, got {text!r}") from None


def _emit(obj: Any) -> None:
    print(json.dumps(obj, indent=2))


def cmd_parse(args) -> int:
    g, meta = _load(args.file)
    _emit({**meta, "type": emit_type(g)})
    return OK


def cmd_project(args) -> int:
    g, _ = _load(args.file)
    placement = RefinementPlacement(args.placement)
    targets = [args.role] if args.role else sorted(roles(g))
    out = {}
    for r in targets:
        if r not in roles(g):
            raise UsageError(f"role {r!r} does not occur in the protocol")
        try:
            out[r] = emit_type(project(g, r, placement))
        except ProjectionUndefined as e:
            print(f"error: {e}", file=sys.stderr)
            return NEGATIVE
    _emit(out)
    return OK


def _rcs(g: GlobalType):
    try:
        return rcs_of(g)
    except ProjectionUndefined as e:
        print(f"error: {e}", file=sys.stderr)
        return None


def cmd_automata(args) -> int:
    g, _ = _load(args.file)
    rcs = _rcs(g)
    if rcs is None:
        return NEGATIVE
    if args.role and args.role not in rcs.participants:
        raise UsageError(f"role {args.role!r} does not occur in the protocol")
    if args.dot:
        sys.stdout.write(rcfsm_to_dot(rcs[args.role]) if args.role else rcs_to_dot(rcs))
        return OK
    machines = [rcs[args.role]] if args.role else list(rcs.machines)
    _emit({
        m.participant: {
            "states": [{"id": s, "term": m.state_name(s)} for s in m.states],
            "initial": m.initial,
            "transitions": [
                {"src": t.src, "dst": t.dst, "action": f"{t.action.sender}{t.action.direction}{t.action.receiver}",
                 "label": t.action.label, "var": t.action.var, "refinement": pretty(t.action.refinement)}
                for t in m.transitions
            ],
        }
        for m in machines
    })
    return OK


def cmd_simulate(args) -> int:
    g, _ = _load(args.file)
    rcs = _rcs(g)
    if rcs is None:
        return NEGATIVE
    script: tuple[ScriptEntry, ...] = ()
    if args.mode == "script":
        if not args.script:
            raise UsageError("--mode script needs --script FILE")
        try:
            script = tuple(ScriptEntry.from_json(o) for o in json.loads(_read(args.script)))
        except (ValueError, TypeError) as e:
            raise UsageError(f"bad script: {e}") from None
    params = ExploreParams(
        value_domain=args.domain, max_depth=args.depth, max_queue_len=args.queue_bound,
        seed=args.seed, mode=args.mode, script=script, max_states=args.max_paths,
    )
    if args.mode != "exhaustive":
        sem = make_semantics(rcs, args.semantics, params)
        try:
            run = random_run(sem, params) if args.mode == "random" else scripted_run(sem, script, args.depth)
        except ScriptDiverged as e:
            _emit({"diverged": e.index, "reason": e.reason})
            return NEGATIVE
        trace = trace_of_run(run)
        verdict = is_valid_refined(trace)
        _emit({
            "semantics": args.semantics,
            "mode": args.mode,
            "status": run.status,
            "trace": trace_to_json(trace),
            "verdict": verdict.to_json(),
        })
        return NEGATIVE if run.status == "deadlock" or not verdict else OK
    try:
        result = explore(rcs, params, args.semantics)
    except BoundExceeded as e:
        print(f"error: {e}", file=sys.stderr)
        return NEGATIVE
    invalid = []
    for run in result.runs:
        v = is_valid_refined(trace_of_run(run))
        if not v:
            invalid.append({"trace": trace_to_json(trace_of_run(run)), "verdict": v.to_json()})
    out: dict[str, Any] = {
        "semantics": args.semantics,
        "mode": args.mode,
        "runs": len(result.runs),
        "deadlocks": len(result.deadlocks),
        "bound_hits": result.bound_hits,
        "invalid_traces": invalid[:10],
    }
    if args.traces:
        out["traces"] = [trace_to_json(trace_of_run(r)) for r in result.runs]
    if result.deadlocks:
        out["deadlock_example"] = trace_to_json(trace_of_run(result.deadlocks[0]))
    _emit(out)
    return NEGATIVE if invalid or result.deadlocks else OK


def cmd_check_trace(args) -> int:
    try:
        trace = trace_from_json(_read(args.file))
    except (TraceFormatError, json.JSONDecodeError) as e:
        raise UsageError(f"bad trace: {e}") from None
    verdict = is_valid_refined(trace)
    _emit(verdict.to_json())
    return OK if verdict else NEGATIVE


def cmd_localise(args) -> int:
    g, _ = _load(args.file)
    try:
        report = localise(g, collapse=not args.no_collapse, max_vertices=args.max_vertices)
    except UnrollLimit as e:
        _emit({"verdict": "unknown", "reason": str(e)})
        return NEGATIVE
    if args.emit_dot:
        sys.stdout.write(emit_dot(report.unrolled if args.emit_dot == "unrolled" else report.graph))
    else:
        _emit(report.to_json(facts=args.facts))
    for v in report.violations:
        print(f"{v.kind}: {v.describe()}", file=sys.stderr)
    return OK if report.decentralisable else NEGATIVE


def cmd_elide(args) -> int:
    g, _ = _load(args.file)
    if not args.target and not args.target_step:
        raise UsageError("give at least one --target or --target-step")
    domain = args.domain
    if args.target_step:
        for step in args.target_step:
            try:
                out = force_elide_type(g, step) if args.force else elide_type(g, step, domain)
            except KeyError as e:
                raise UsageError(str(e.args[0])) from None
            if isinstance(out, Rejected):
                _emit({"target": step, **out.to_json()})
                return NEGATIVE
            g = out
    rcs = None
    if args.target:
        rcs = _rcs(g)
        if rcs is None:
            return NEGATIVE
        for target in args.target:
            if "/" not in target:
                raise UsageError(f"--target expects participant/label, got {target!r}")
            p, label = target.split("/", 1)
            if p not in rcs.participants:
                raise UsageError(f"unknown participant {p!r}")
            try:
                t = rcs[p].find(label)
            except KeyError as e:
                raise UsageError(str(e.args[0])) from None
            out = elide_rcs(rcs, p, t, domain, g=g)
            if isinstance(out, Rejected):
                _emit({"target": target, **out.to_json()})
                return NEGATIVE
            rcs = out
    # Automaton-level targets leave the type untouched, so only report the
    # type when a type-level elision produced it.
    result: dict[str, Any] = {}
    if args.target_step:
        result["type"] = emit_type(g)
    if rcs is not None:
        result["automata"] = {
            m.participant: [
                {"src": t.src, "dst": t.dst, "label": t.action.label, "refinement": pretty(t.action.refinement)}
                for t in m.transitions
            ]
            for m in rcs.machines
        }
    _emit(result)
    return OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="refmpst", description="Refined multiparty session types toolkit.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name: str, func, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.set_defaults(func=func)
        return p

    file_help = "protocol file ('-' for stdin, '@name' for a bundled protocol)"
    p = add("parse", cmd_parse, "parse a protocol and print its global type")
    p.add_argument("file", help=file_help)

    p = add("project", cmd_project, "project a protocol onto one or all roles")
    p.add_argument("file", help=file_help)
    p.add_argument("--role")
    p.add_argument("--placement", choices=[e.value for e in RefinementPlacement], default="send")

    p = add("automata", cmd_automata, "build the refined communicating automata")
    p.add_argument("file", help=file_help)
    p.add_argument("--role")
    p.add_argument("--dot", action="store_true", help="print DOT instead of JSON")

    p = add("simulate", cmd_simulate, "explore runs under the centralised or decentralised semantics")
    p.add_argument("file", help=file_help)
    p.add_argument("--semantics", choices=["central", "decentral"], default="central")
    p.add_argument("--mode", choices=["exhaustive", "random", "script"], default="exhaustive")
    p.add_argument("--script", help="JSON list of {participant, label, value} steps")
    p.add_argument("--domain", type=_domain, default=tuple(range(5)), help="value domain, e.g. 0..4")
    p.add_argument("--depth", type=int, default=12)
    p.add_argument("--queue-bound", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-paths", type=int, default=None)
    p.add_argument("--traces", action="store_true", help="print every trace in exhaustive mode")

    p = add("check-trace", cmd_check_trace, "check that a JSON trace is a valid refined trace")
    p.add_argument("file", help="trace file ('-' for stdin)")

    p = add("localise", cmd_localise, "decide whether a protocol can run with local maps")
    p.add_argument("file", help=file_help)
    p.add_argument("--emit-dot", nargs="?", const="unrolled", choices=["graph", "unrolled"])
    p.add_argument("--facts", action="store_true", help="include the inferred In facts")
    p.add_argument("--no-collapse", action="store_true", help="keep one edge per branch label")
    p.add_argument("--max-vertices", type=int, default=MAX_UNROLLED, help="give up when unrolling exceeds this size")

    p = add("elide", cmd_elide, "remove redundant refinements")
    p.add_argument("file", help=file_help)
    p.add_argument("--target", action="append", default=[], help="participant/label of a transition")
    p.add_argument("--target-step", action="append", default=[], help="step address 0/<path>/<label> or a label")
    p.add_argument("--domain", type=_domain, default=None, help="entailment domain, e.g. -11..11")
    p.add_argument("--force", action="store_true", help="skip the checks (type-level targets only)")
    return ap


def _join_domain(argv: Sequence[str]) -> list[str]:
    """Let ``--domain -11..11`` through; argparse would read it as a flag."""
    out: list[str] = []
    it = iter(argv)
    for a in it:
        if a == "--domain":
            nxt = next(it, None)
            out.append(a if nxt is None else f"--domain={nxt}")
        else:
            out.append(a)
    return out


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(_join_domain(sys.argv[1:] if argv is None else argv))
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else USAGE
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE
    except BrokenPipeError:  # pragma: no cover
        return OK


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
