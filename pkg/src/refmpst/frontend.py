"""Parser for refined protocol descriptions and the ASCII type syntax.

Two inputs are accepted by :func:`parse`:

* a Scribble-style protocol (``global protocol Name (role A, ...) { ... }``)
  whose payloads may carry refinements in braces, and
* the ASCII rendering of a global type produced by :func:`emit_type`, for
  example ``A->B {l1(x: int){x < 0}. end}``.

The parser never raises on bad input. Problems are reported as
:class:`Diagnostic` values carrying a byte span, and the type is ``None``
whenever an error was found.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path as FsPath

from .refinement import DISCARD, TOP, Expr, RefinementError, parse_refinement
from .rmpst import (
    END,
    Branch,
    Comm,
    ExtChoice,
    GlobalType,
    IntChoice,
    Rec,
    RecVar,
    show,
    well_formedness_errors,
)

MAX_DEPTH = 100
MAX_STATEMENTS = 200
SORTS = ("int",)


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" or "warning"
    start: int  # byte offsets into the source
    end: int
    message: str

    def render(self, source: str | None = None, filename: str = "<input>") -> str:
        where = ""
        if source is not None:
            raw = source.encode("utf-8")
            line = raw[: self.start].count(b"\n") + 1
            col = self.start - (raw.rfind(b"\n", 0, self.start) + 1) + 1
            where = f"{line}:{col}: "
        return f"{filename}:{where}{self.severity}: {self.message}"


@dataclass
class ParseResult:
    type: GlobalType | None
    diagnostics: list[Diagnostic] = field(default_factory=list)
    name: str | None = None
    roles: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return self.type is not None and not any(d.severity == "error" for d in self.diagnostics)


class ProtocolError(Exception):
    """Raised by :func:`parse_global` when the source has errors."""

    def __init__(self, diagnostics: list[Diagnostic], source: str = ""):
        self.diagnostics = diagnostics
        text = "; ".join(d.render(source) for d in diagnostics if d.severity == "error")
        super().__init__(text or "parse failed")


# ---------------------------------------------------------------------------
# Lexing

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_#']*")
_INT = re.compile(r"\d+")
_PUNCT = ("->", "(", ")", "{", "}", ";", ":", ",", ".", "!", "?")


@dataclass(frozen=True)
class Tok:
    kind: str  # ident, int, punct, eof, error
    text: str
    start: int
    end: int


class Lexer:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self._peeked: Tok | None = None
        self.comment_errors: list[tuple[int, int, str]] = []

    def _skip(self) -> None:
        t = self.text
        n = len(t)
        while self.pos < n:
            c = t[self.pos]
            if c.isspace():
                self.pos += 1
            elif t.startswith("//", self.pos):
                nl = t.find("\n", self.pos)
                self.pos = n if nl < 0 else nl + 1
            elif t.startswith("/*", self.pos) or t.startswith("(*", self.pos):
                close = "*/" if t[self.pos] == "/" else "*)"
                end = t.find(close, self.pos + 2)
                if end < 0:
                    self.comment_errors.append((self.pos, n, "unterminated comment"))
                    self.pos = n
                else:
                    self.pos = end + 2
            else:
                return

    def peek(self) -> Tok:
        if self._peeked is None:
            self._peeked = self._scan()
        return self._peeked

    def next(self) -> Tok:
        tok = self.peek()
        self._peeked = None
        return tok

    def _scan(self) -> Tok:
        self._skip()
        t = self.text
        p = self.pos
        if p >= len(t):
            return Tok("eof", "", p, p)
        m = _IDENT.match(t, p)
        if m:
            self.pos = m.end()
            return Tok("ident", m.group(), p, m.end())
        m = _INT.match(t, p)
        if m:
            self.pos = m.end()
            return Tok("int", m.group(), p, m.end())
        for punct in _PUNCT:
            if t.startswith(punct, p):
                self.pos = p + len(punct)
                return Tok("punct", punct, p, self.pos)
        self.pos = p + 1
        return Tok("error", t[p], p, p + 1)

    def raw_block(self) -> tuple[str, int, int]:
        """Text up to the next ``}`` (called just after ``{`` was consumed)."""
        assert self._peeked is None
        start = self.pos
        end = self.text.find("}", start)
        if end < 0:
            raise _SyntaxError("unterminated refinement", start, len(self.text))
        self.pos = end + 1
        return self.text[start:end], start, end


class _SyntaxError(Exception):
    def __init__(self, message: str, start: int, end: int):
        super().__init__(message)
        self.message = message
        self.start = start
        self.end = end


# ---------------------------------------------------------------------------
# Scribble-style protocols


@dataclass
class _Msg:
    label: str
    var: str
    refinement: Expr
    sender: str
    receiver: str
    span: tuple[int, int]
    roles_span: tuple[tuple[int, int], tuple[int, int]]


@dataclass
class _Choice:
    at: str
    blocks: list[list]
    span: tuple[int, int]


@dataclass
class _RecStmt:
    name: str
    body: list
    span: tuple[int, int]


@dataclass
class _Continue:
    name: str
    span: tuple[int, int]


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.lex = Lexer(text)
        self.depth = 0
        self.count = 0

    # helpers
    def err(self, message: str, tok: Tok | None = None):
        tok = tok or self.lex.peek()
        raise _SyntaxError(message, tok.start, max(tok.end, tok.start + 1) if tok.kind != "eof" else tok.start)

    def expect(self, text: str) -> Tok:
        tok = self.lex.next()
        if tok.text != text or tok.kind not in ("punct", "ident"):
            self.err(f"expected '{text}' but found {_describe(tok)}", tok)
        return tok

    def accept(self, text: str) -> bool:
        tok = self.lex.peek()
        if tok.text == text and tok.kind in ("punct", "ident"):
            self.lex.next()
            return True
        return False

    def ident(self, what: str) -> Tok:
        tok = self.lex.next()
        if tok.kind != "ident":
            self.err(f"expected {what} but found {_describe(tok)}", tok)
        return tok

    def enter(self, tok: Tok) -> None:
        self.depth += 1
        if self.depth > MAX_DEPTH:
            self.err("nesting is too deep", tok)

    def leave(self) -> None:
        self.depth -= 1

    def refinement(self) -> Expr:
        text, start, end = self.lex.raw_block()
        if not text.strip():
            return TOP
        try:
            return parse_refinement(text)
        except RefinementError as e:
            off = start + e.offset
            raise _SyntaxError(f"bad refinement: {e.message}", off, min(end, off + 1) if end > off else off) from None

    # protocol level
    def protocol(self):
        while self.lex.peek().text in ("module", "import", "type"):
            while True:
                tok = self.lex.next()
                if tok.kind == "eof":
                    self.err("expected ';'", tok)
                if tok.text == ";":
                    break
        self.expect("global")
        self.expect("protocol")
        name = self.ident("a protocol name").text
        self.expect("(")
        roles: list[tuple[str, Tok]] = []
        while True:
            self.expect("role")
            tok = self.ident("a role name")
            roles.append((tok.text, tok))
            if not self.accept(","):
                break
        self.expect(")")
        open_tok = self.expect("{")
        body = self.stmts(open_tok)
        self.expect("}")
        tail = self.lex.peek()
        if tail.kind != "eof":
            self.err(f"unexpected {_describe(tail)} after the protocol", tail)
        return name, roles, body

    def stmts(self, opener: Tok) -> list:
        self.enter(opener)
        out = []
        while self.lex.peek().text != "}" and self.lex.peek().kind != "eof":
            out.append(self.stmt())
        self.leave()
        return out

    def block(self) -> list:
        open_tok = self.expect("{")
        body = self.stmts(open_tok)
        self.expect("}")
        return body

    def stmt(self):
        tok = self.lex.peek()
        self.count += 1
        if self.count > MAX_STATEMENTS:
            self.err(f"protocols are limited to {MAX_STATEMENTS} statements", tok)
        if tok.kind != "ident":
            self.err(f"expected a statement but found {_describe(tok)}", tok)
        if tok.text == "choice":
            self.lex.next()
            self.expect("at")
            at = self.ident("a role name")
            blocks = [self.block()]
            while self.accept("or"):
                blocks.append(self.block())
            return _Choice(at.text, blocks, (tok.start, at.end))
        if tok.text == "rec":
            self.lex.next()
            name = self.ident("a recursion label")
            return _RecStmt(name.text, self.block(), (tok.start, name.end))
        if tok.text == "continue":
            self.lex.next()
            name = self.ident("a recursion label")
            self.expect(";")
            return _Continue(name.text, (tok.start, name.end))
        return self.message()

    def message(self) -> _Msg:
        label = self.ident("a message label")
        self.expect("(")
        var, refinement = DISCARD, TOP
        tok = self.lex.peek()
        if tok.kind == "ident":
            first = self.lex.next()
            if self.accept(":"):
                var = first.text
                self.sort()
            elif first.text not in SORTS:
                self.err(f"unknown sort '{first.text}'", first)
            if self.accept("{"):
                refinement = self.refinement()
        self.expect(")")
        self.expect("from")
        sender = self.ident("a sender role")
        self.expect("to")
        receiver = self.ident("a receiver role")
        end = self.expect(";")
        return _Msg(
            label.text, var, refinement, sender.text, receiver.text,
            (label.start, end.end), ((sender.start, sender.end), (receiver.start, receiver.end)),
        )

    def sort(self) -> str:
        tok = self.ident("a sort")
        if tok.text not in SORTS:
            self.err(f"unknown sort '{tok.text}'", tok)
        return tok.text


def _describe(tok: Tok) -> str:
    if tok.kind == "eof":
        return "end of input"
    return f"'{tok.text}'"


class _Lowering:
    """Turn statement lists into a global type and check scoping rules."""

    def __init__(self, roles: set[str]):
        self.roles = roles
        self.diags: list[Diagnostic] = []

    def error(self, span: tuple[int, int], message: str) -> None:
        self.diags.append(Diagnostic("error", span[0], span[1], message))

    def lower(self, stmts: list, tail, bound: tuple[str, ...]):
        if not stmts:
            return tail
        s, rest = stmts[0], stmts[1:]
        if isinstance(s, _Msg):
            for role, span in zip((s.sender, s.receiver), s.roles_span):
                if role not in self.roles:
                    self.error(span, f"role '{role}' is not declared")
            if s.sender == s.receiver:
                self.error(s.span, f"'{s.label}' is sent from {s.sender} to itself")
            cont = self.lower(rest, tail, bound)
            return Comm(s.sender, s.receiver, (Branch(s.label, s.var, s.refinement, cont),))
        if isinstance(s, _Continue):
            if s.name not in bound:
                self.error(s.span, f"'continue {s.name}' is not inside 'rec {s.name}'")
            if rest:
                self.error(s.span, "'continue' must be the last statement of its block")
            return RecVar(s.name)
        if isinstance(s, _RecStmt):
            if s.name in bound:
                self.error(s.span, f"recursion label '{s.name}' shadows an enclosing one")
            after = self.lower(rest, tail, bound)
            body = self.lower(s.body, after, bound + (s.name,))
            if not s.body:
                self.error(s.span, f"'rec {s.name}' has an empty body")
            return Rec(s.name, body)
        assert isinstance(s, _Choice)
        if s.at not in self.roles:
            self.error(s.span, f"role '{s.at}' is not declared")
        after = self.lower(rest, tail, bound)
        branches: list[Branch] = []
        receivers = set()
        for blk in s.blocks:
            lowered = self.lower(blk, after, bound)
            if not blk or not isinstance(lowered, Comm):
                self.error(s.span, f"every branch of 'choice at {s.at}' must start with a message")
                continue
            first = _first_span(blk)
            if lowered.sender != s.at:
                self.error(first, f"branch starts with a message from {lowered.sender}, not from {s.at}")
            receivers.add(lowered.receiver)
            branches.extend(lowered.branches)
        if len(receivers) > 1:
            self.error(s.span, f"branches of 'choice at {s.at}' go to different roles: " + ", ".join(sorted(receivers)))
        labels = [b.label for b in branches]
        dup = sorted({x for x in labels if labels.count(x) > 1})
        if dup:
            self.error(s.span, "duplicate labels in a choice: " + ", ".join(dup))
        if not branches:
            return END
        return Comm(s.at, min(receivers) if receivers else s.at, tuple(branches))


def _first_span(blk: list) -> tuple[int, int]:
    s = blk[0]
    return s.span


def _to_bytes(text: str, d: Diagnostic) -> Diagnostic:
    if text.isascii():
        return d
    def b(i: int) -> int:
        return len(text[:i].encode("utf-8", "surrogatepass"))
    return Diagnostic(d.severity, b(d.start), b(d.end), d.message)


def parse_protocol(text: str) -> ParseResult:
    p = _Parser(text)
    diags: list[Diagnostic] = []
    try:
        name, roles, body = p.protocol()
    except _SyntaxError as e:
        diags.append(Diagnostic("error", e.start, e.end, e.message))
        return ParseResult(None, _finish(text, p, diags))
    seen: set[str] = set()
    for r, tok in roles:
        if r in seen:
            diags.append(Diagnostic("error", tok.start, tok.end, f"role '{r}' declared twice"))
        seen.add(r)
    low = _Lowering(seen)
    g = low.lower(body, END, ())
    diags.extend(low.diags)
    if not diags:
        for msg in well_formedness_errors(g):
            diags.append(Diagnostic("error", 0, len(text), msg))
    ok = not any(d.severity == "error" for d in diags)
    return ParseResult(g if ok else None, _finish(text, p, diags), name, tuple(r for r, _ in roles))


def _finish(text: str, p: _Parser, diags: list[Diagnostic]) -> list[Diagnostic]:
    for start, end, msg in p.lex.comment_errors:
        diags.append(Diagnostic("error", start, end, msg))
    return [_to_bytes(text, d) for d in diags]


# ---------------------------------------------------------------------------
# ASCII types


class _TypeParser(_Parser):
    def type(self, local: bool = False):
        tok = self.lex.peek()
        self.enter(tok)
        try:
            return self._type(local)
        finally:
            self.leave()

    def _type(self, local: bool):
        tok = self.lex.next()
        if tok.kind != "ident":
            self.err(f"expected a type but found {_describe(tok)}", tok)
        if tok.text == "end":
            return END
        if tok.text == "rec":
            name = self.ident("a recursion variable")
            self.expect(".")
            return Rec(name.text, self.type(local))
        nxt = self.lex.peek()
        if nxt.text == "->":
            self.lex.next()
            receiver = self.ident("a receiver role")
            return Comm(tok.text, receiver.text, self.branches(local))
        if nxt.text in ("!", "?"):
            self.lex.next()
            bs = self.branches(True)
            return IntChoice(tok.text, bs) if nxt.text == "!" else ExtChoice(tok.text, bs)
        return RecVar(tok.text)

    def branches(self, local: bool) -> tuple[Branch, ...]:
        self.expect("{")
        out = [self.branch(local)]
        while self.accept(","):
            out.append(self.branch(local))
        self.expect("}")
        return tuple(out)

    def branch(self, local: bool) -> Branch:
        label = self.ident("a label")
        self.expect("(")
        var = self.ident("a payload variable").text
        self.expect(":")
        sort = self.sort()
        self.expect(")")
        refinement: Expr = TOP
        if self.accept("{"):
            refinement = self.refinement()
        self.expect(".")
        return Branch(label.text, var, refinement, self.type(local), sort)


def parse_type(text: str) -> ParseResult:
    """Parse the ASCII form of a global (or local) type."""
    p = _TypeParser(text)
    diags: list[Diagnostic] = []
    try:
        t = p.type()
        tail = p.lex.peek()
        if tail.kind != "eof":
            p.err(f"unexpected {_describe(tail)} after the type", tail)
    except _SyntaxError as e:
        diags.append(Diagnostic("error", e.start, e.end, e.message))
        return ParseResult(None, _finish(text, p, diags))
    for msg in well_formedness_errors(t):
        diags.append(Diagnostic("error", 0, len(text), msg))
    ok = not diags
    return ParseResult(t if ok else None, _finish(text, p, diags))


def parse(source: str | bytes) -> ParseResult:
    """Parse a protocol or an ASCII type; never raises on malformed input."""
    if isinstance(source, bytes):
        try:
            source = source.decode("utf-8")
        except UnicodeDecodeError as e:
            return ParseResult(None, [Diagnostic("error", e.start, e.end, "source is not valid UTF-8")])
    probe = Lexer(source)
    first = probe.peek()
    try:
        if first.kind == "ident" and first.text in ("global", "module", "import", "type"):
            return parse_protocol(source)
        return parse_type(source)
    except RecursionError:
        # The nesting limits normally fire first; this is a last resort for
        # inputs that combine deep protocols with deep refinements.
        return ParseResult(None, [Diagnostic("error", 0, len(source), "input is nested too deeply")])


def parse_global(source: str) -> GlobalType:
    """Like :func:`parse` but raise :class:`ProtocolError` on errors."""
    res = parse(source)
    if not res.ok:
        raise ProtocolError(res.diagnostics, source)
    return res.type


def load(path: str | FsPath) -> ParseResult:
    return parse(FsPath(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Emitters


def emit_type(t) -> str:
    """ASCII rendering that :func:`parse` maps back to ``t``."""
    return show(t)


def emit_dot(obj) -> str:
    """DOT for a type graph or an RCFSM."""
    from .automata import Rcfsm, Rcs, rcfsm_to_dot, rcs_to_dot
    from .localise import TypeGraph, type_graph_to_dot

    if isinstance(obj, TypeGraph):
        return type_graph_to_dot(obj)
    if isinstance(obj, Rcfsm):
        return rcfsm_to_dot(obj)
    if isinstance(obj, Rcs):
        return rcs_to_dot(obj)
    raise TypeError(f"cannot render {type(obj).__name__} as DOT")
