"""Concrete syntax: programs, hypersequents, terms, formulas, derivations.

The surface syntax is plain ASCII.  Types use `*` for the pair
connective, `-o` for functions (right associative, loosest), `+` and
`&` at one level between them, and `1` for the unit.  Terms use `*`
for the unit value, juxtaposition for application, the three-character
token `(x)` as the infix pair constructor, `<t, u>` for lazy pairs,
`\\x. t` for abstraction, and `~c` for the co-half of a channel pair.
A channel name consumes exactly one following atom as its argument.

Session-type sugar (`!T.S`, `?T.S`, `end`, `select{...}`, `offer{...}`)
is accepted wherever a type is expected and encoded away immediately,
as is the process sugar (`x!(u); t`, `x?(y); t`, `0`, and
`new xl, xr : S in t`) on terms.

Programs are `channel c : A ~> B` and `session S = ...` declarations
followed by a goal hypersequent (components separated by `||`).  `--`
starts a comment.  `#` is an ordinary name character, reserved in
practice for machine-made variables, so those survive a round trip
through the printer.  Derivations interchange as JSON with an explicit
conclusion at every node.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from amida import sessions
from amida.sessions import AtomS, End, Offer, Recv, Select, Send, SessionType
from amida.syntax import (
    App,
    Atom,
    Chan,
    ChannelId,
    Formula,
    Inl,
    Inr,
    Lambda,
    LetPattern,
    Lolli,
    Match,
    PPairLeft,
    PPairRight,
    PStar,
    PTensor,
    Pattern,
    Plus,
    Star,
    Tensor,
    Term,
    TensorIntro,
    Unit,
    Var,
    With,
    WithPair,
)
from amida.typecheck import RULES, Component, Derivation, Hypersequent


class ParseError(SyntaxError):
    """Surface syntax error with position and an expectation hint."""

    def __init__(self, line: int, column: int, expected: str):
        super().__init__(f"{line}:{column}: expected {expected}")
        self.line = line
        self.column = column
        self.expected = expected


class UnknownRule(Exception):
    """A derivation document names a rule that does not exist."""


class ArityMismatch(Exception):
    """A derivation node has the wrong number of premises for its rule."""


class MalformedSequent(Exception):
    """A derivation node's conclusion does not parse."""


# --- lexer --------------------------------------------------------------------

_KEYWORDS = frozenset({
    "let", "in", "case", "of", "inl", "inr", "new",
    "channel", "session", "goal", "end", "select", "offer",
})

_TWO_CHAR = ("||", "|-", "-o", "~>", "->")
_ONE_CHAR = "()<>,:;|*+&!?~=\\.{}"


@dataclass(frozen=True)
class _Tok:
    kind: str  # 'name', 'kw', 'num', punctuation literal, or 'eof'
    value: str
    line: int
    col: int


def _lex(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            i, line, col = i + 1, line + 1, 1
            continue
        if ch in " \t\r":
            i, col = i + 1, col + 1
            continue
        if text[i:i + 2] == "--":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if text[i:i + 3] == "(x)":
            toks.append(_Tok("(x)", "(x)", line, col))
            i, col = i + 3, col + 3
            continue
        two = text[i:i + 2]
        if two in _TWO_CHAR:
            toks.append(_Tok(two, two, line, col))
            i, col = i + 2, col + 2
            continue
        if ch.isalpha() or ch in "_#":
            j = i
            while j < n and (text[j].isalnum() or text[j] in "_'#"):
                j += 1
            word = text[i:j]
            kind = "kw" if word in _KEYWORDS else "name"
            toks.append(_Tok(kind, word, line, col))
            col += j - i
            i = j
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            toks.append(_Tok("num", text[i:j], line, col))
            col += j - i
            i = j
            continue
        if ch in _ONE_CHAR:
            toks.append(_Tok(ch, ch, line, col))
            i, col = i + 1, col + 1
            continue
        raise ParseError(line, col, f"a token (found {ch!r})")
    toks.append(_Tok("eof", "", line, col))
    return toks


# --- programs -------------------------------------------------------------------


@dataclass(frozen=True)
class Program:
    """A parsed source file.

    declared holds the channel declarations in source order as
    (base, argument type, result type); synthesized holds the channel
    pairs allocated while expanding `new`, in the same shape.  sessions
    maps declared protocol names.  goal is the hypersequent to work on.
    """

    declared: tuple[tuple[str, Formula, Formula], ...]
    synthesized: tuple[tuple[str, Formula, Formula], ...]
    sessions: tuple[tuple[str, SessionType], ...]
    goal: Hypersequent

    def channel_decls(self) -> dict[str, tuple[Formula, Formula]]:
        out = {base: (a, b) for base, a, b in self.declared}
        out.update({base: (a, b) for base, a, b in self.synthesized})
        return out


class _Parser:
    def __init__(self, toks: list[_Tok],
                 channels: frozenset[str] = frozenset(),
                 session_env: dict[str, SessionType] | None = None):
        self.toks = toks
        self.pos = 0
        self.sessions: dict[str, SessionType] = dict(session_env or {})
        self.declared: list[tuple[str, Formula, Formula]] = []
        self.synthesized: list[tuple[str, Formula, Formula]] = []
        # any base used through `~` anywhere counts as a channel
        promoted = set(channels)
        for a, b in zip(toks, toks[1:]):
            if a.kind == "~" and b.kind == "name":
                promoted.add(b.value)
        self.channel_bases = promoted

    # -- plumbing

    def peek(self, k: int = 0) -> _Tok:
        return self.toks[min(self.pos + k, len(self.toks) - 1)]

    def next(self) -> _Tok:
        t = self.toks[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def at(self, kind: str, value: str | None = None) -> bool:
        t = self.peek()
        return t.kind == kind and (value is None or t.value == value)

    def expect(self, kind: str, what: str | None = None) -> _Tok:
        if not self.at(kind):
            self.fail(what or f"'{kind}'")
        return self.next()

    def fail(self, expected: str) -> None:
        t = self.peek()
        raise ParseError(t.line, t.col, expected)

    def name(self, what: str = "a name") -> str:
        if not self.at("name"):
            self.fail(what)
        return self.next().value

    def binder(self) -> str:
        x = self.name("a variable to bind")
        if x in self.channel_bases:
            t = self.toks[self.pos - 1]
            raise ParseError(t.line, t.col,
                             f"a variable (but {x!r} is a channel)")
        return x

    # -- formulas and session types

    def formula(self) -> Formula:
        left = self.additive()
        if self.at("-o"):
            self.next()
            return Lolli(left, self.formula())
        return left

    def additive(self) -> Formula:
        left = self.tensor_formula()
        while self.at("+") or self.at("&"):
            ctor = Plus if self.next().kind == "+" else With
            left = ctor(left, self.tensor_formula())
        return left

    def tensor_formula(self) -> Formula:
        left = self.atom_formula()
        # `*` is the canonical pair connective; `(x)` is accepted as a
        # synonym so a formula can be read off a term unchanged
        if self.at("*") or self.at("(x)"):
            self.next()
            return Tensor(left, self.tensor_formula())
        return left

    def atom_formula(self) -> Formula:
        t = self.peek()
        if t.kind == "num" and t.value == "1":
            self.next()
            return Unit()
        if t.kind == "(":
            self.next()
            f = self.formula()
            self.expect(")")
            return f
        if t.kind in ("!", "?") or (t.kind == "kw"
                                    and t.value in ("end", "select", "offer")):
            return sessions.encode(self.session())
        if t.kind == "name":
            self.next()
            if t.value in self.sessions:
                return sessions.encode(self.sessions[t.value])
            return Atom(t.value)
        self.fail("a type")
        raise AssertionError

    def session(self) -> SessionType:
        t = self.peek()
        if t.kind == "!":
            self.next()
            payload = self.atom_formula()
            self.expect(".")
            return Send(payload, self.session())
        if t.kind == "?":
            self.next()
            payload = self.atom_formula()
            self.expect(".")
            return Recv(payload, self.session())
        if t.kind == "kw" and t.value == "end":
            self.next()
            return End()
        if t.kind == "kw" and t.value in ("select", "offer"):
            self.next()
            self.expect("{")
            branches = [self.branch()]
            while self.at(","):
                self.next()
                branches.append(self.branch())
            self.expect("}")
            ctor = Select if t.value == "select" else Offer
            return ctor(tuple(branches))
        if t.kind == "name":
            self.next()
            if t.value in self.sessions:
                return self.sessions[t.value]
            return AtomS(t.value)
        self.fail("a session type")
        raise AssertionError

    def branch(self) -> tuple[str, SessionType]:
        label = self.name("a branch label")
        self.expect(":")
        return label, self.session()

    # -- terms

    def term(self) -> Term:
        t = self.peek()
        if t.kind == "\\":
            self.next()
            x = self.binder()
            self.expect(".")
            return Lambda(x, self.term())
        if t.kind == "kw" and t.value == "let":
            self.next()
            pat = self.pattern()
            self.expect("=")
            scrutinee = self.term()
            self.keyword("in")
            return LetPattern(scrutinee, pat, self.term())
        if t.kind == "kw" and t.value == "case":
            self.next()
            scrutinee = self.term()
            self.keyword("of")
            self.keyword("inl")
            lv = self.binder()
            self.expect("->")
            left = self.term()
            self.expect("|")
            self.keyword("inr")
            rv = self.binder()
            self.expect("->")
            return Match(scrutinee, lv, left, rv, self.term())
        if t.kind == "kw" and t.value == "new":
            self.next()
            xl = self.binder()
            self.expect(",")
            xr = self.binder()
            self.expect(":")
            sty = self.session()
            self.keyword("in")
            body = self.term()
            return self.expand_new(xl, xr, sty, body, t)
        if (t.kind == "name" and t.value not in self.channel_bases
                and self.peek(1).kind in ("!", "?")):
            return self.process_sugar()
        return self.tensor_term()

    def keyword(self, word: str) -> None:
        if not (self.at("kw", word)):
            self.fail(f"'{word}'")
        self.next()

    def pattern(self) -> Pattern:
        if self.at("*"):
            self.next()
            return PStar()
        if self.at("<"):
            self.next()
            first = self.name("'_' or a variable")
            self.expect(",")
            if first == "_":
                y = self.binder()
                self.expect(">")
                return PPairRight(y)
            if first in self.channel_bases:
                t = self.toks[self.pos - 2]
                raise ParseError(t.line, t.col,
                                 f"a variable (but {first!r} is a channel)")
            if not self.at("name", "_"):
                self.fail("'_'")
            self.next()
            self.expect(">")
            return PPairLeft(first)
        x = self.binder()
        self.expect("(x)", "'(x)'")
        y = self.binder()
        return PTensor(x, y)

    def process_sugar(self) -> Term:
        x = self.name()
        t = self.next()  # '!' or '?'
        if t.kind == "!":
            self.expect("(")
            u = self.term()
            self.expect(")")
            self.expect(";")
            return sessions.expand_send(x, u, self.term())
        self.expect("(")
        y = self.binder()
        self.expect(")")
        self.expect(";")
        return sessions.expand_recv(x, y, self.term())

    def expand_new(self, xl: str, xr: str, sty: SessionType, body: Term,
                   tok: _Tok) -> Term:
        avoid = frozenset(self.channel_bases)
        try:
            r = sessions.realize(sty, avoid=avoid)
        except sessions.NotLinearSessionType:
            raise ParseError(tok.line, tok.col,
                             "a linear session type after 'new'") from None
        for base, (a, b) in r.channels:
            self.synthesized.append((base, a, b))
            self.channel_bases.add(base)
        return LetPattern(TensorIntro(r.left, r.right),
                          PTensor(xl, xr), body)

    def tensor_term(self) -> Term:
        left = self.application()
        if self.at("(x)"):
            self.next()
            return TensorIntro(left, self.tensor_term())
        return left

    _ATOM_STARTERS = ("name", "num", "(", "<", "~", "*")

    def starts_atom(self) -> bool:
        t = self.peek()
        if t.kind in ("kw",):
            return t.value in ("inl", "inr")
        return t.kind in self._ATOM_STARTERS

    def application(self) -> Term:
        t = self.atom_term()
        while self.starts_atom():
            t = App(t, self.atom_term())
        return t

    def atom_term(self) -> Term:
        t = self.peek()
        if t.kind == "*":
            self.next()
            return Star()
        if t.kind == "num" and t.value == "0":
            self.next()
            return Star()
        if t.kind == "~":
            self.next()
            base = self.name("a channel name")
            return self.channel_app(ChannelId(base, True), t)
        if t.kind == "name":
            self.next()
            if t.value in self.channel_bases:
                return self.channel_app(ChannelId(t.value, False), t)
            return Var(t.value)
        if t.kind == "kw" and t.value in ("inl", "inr"):
            self.next()
            body = self.atom_term()
            return Inl(body) if t.value == "inl" else Inr(body)
        if t.kind == "(":
            self.next()
            inner = self.term()
            self.expect(")")
            return inner
        if t.kind == "<":
            self.next()
            left = self.term()
            self.expect(",")
            right = self.term()
            self.expect(">")
            return WithPair(left, right)
        self.fail("a term")
        raise AssertionError

    def channel_app(self, c: ChannelId, tok: _Tok) -> Term:
        if not self.starts_atom():
            raise ParseError(tok.line, tok.col,
                             f"an argument for channel {c.base!r}")
        return Chan(c, self.atom_term())

    # -- hypersequents and programs

    def component(self) -> Component:
        ctx: list[tuple[str, Formula]] = []
        if not self.at("|-"):
            while True:
                x = self.name("a context variable or '|-'")
                self.expect(":")
                ctx.append((x, self.formula()))
                if self.at(","):
                    self.next()
                    continue
                break
        self.expect("|-")
        t = self.term()
        self.expect(":")
        return Component(tuple(ctx), t, self.formula())

    def hypersequent(self) -> Hypersequent:
        comps = [self.component()]
        while self.at("||"):
            self.next()
            comps.append(self.component())
        return Hypersequent(tuple(comps))

    def program(self) -> Program:
        while self.at("kw", "channel") or self.at("kw", "session"):
            if self.next().value == "channel":
                base = self.name("a channel name")
                self.expect(":")
                frm = self.formula()
                self.expect("~>")
                to = self.formula()
                if any(b == base for b, _, _ in self.declared):
                    t = self.peek()
                    raise ParseError(t.line, t.col,
                                     f"a fresh channel name, {base!r} is "
                                     "already declared")
                self.declared.append((base, frm, to))
                self.channel_bases.add(base)
            else:
                name = self.name("a session name")
                self.expect("=")
                self.sessions[name] = self.session()
        if self.at("kw", "goal"):
            self.next()
            self.expect(":")
        goal = self.hypersequent()
        self.expect("eof", "end of input")
        return Program(tuple(self.declared), tuple(self.synthesized),
                       tuple(self.sessions.items()), goal)


def _parser(text: str, channels=(), session_env=None) -> _Parser:
    return _Parser(_lex(text), frozenset(channels), session_env)


def parse_program(text: str) -> Program:
    return _parser(text).program()


def parse_hypersequent(text: str, channels=(),
                       session_env=None) -> Hypersequent:
    p = _parser(text, channels, session_env)
    h = p.hypersequent()
    p.expect("eof", "end of input")
    return h


def parse_term(text: str, channels=(), session_env=None) -> Term:
    p = _parser(text, channels, session_env)
    t = p.term()
    p.expect("eof", "end of input")
    return t


def parse_formula(text: str, session_env=None) -> Formula:
    p = _parser(text, session_env=session_env)
    f = p.formula()
    p.expect("eof", "end of input")
    return f


def parse_session(text: str, session_env=None) -> SessionType:
    p = _parser(text, session_env=session_env)
    s = p.session()
    p.expect("eof", "end of input")
    return s


# --- printer --------------------------------------------------------------------


def _wrap(s: str, yes: bool) -> str:
    return f"({s})" if yes else s


def show_formula(f: Formula, prec: int = 0) -> str:
    match f:
        case Unit():
            return "1"
        case Atom(name):
            return name
        case Lolli(a, b):
            return _wrap(f"{show_formula(a, 1)} -o {show_formula(b, 0)}",
                         prec > 0)
        case Plus(a, b):
            return _wrap(f"{show_formula(a, 1)} + {show_formula(b, 2)}",
                         prec > 1)
        case With(a, b):
            return _wrap(f"{show_formula(a, 1)} & {show_formula(b, 2)}",
                         prec > 1)
        case Tensor(a, b):
            return _wrap(f"{show_formula(a, 3)} * {show_formula(b, 2)}",
                         prec > 2)
    raise TypeError(f"not a formula: {f!r}")


def _show_pattern(p: Pattern) -> str:
    match p:
        case PStar():
            return "*"
        case PTensor(x, y):
            return f"{x} (x) {y}"
        case PPairLeft(x):
            return f"<{x}, _>"
        case PPairRight(y):
            return f"<_, {y}>"
    raise TypeError(f"not a pattern: {p!r}")


def show_term(t: Term, prec: int = 0) -> str:
    match t:
        case Star():
            return "*"
        case Var(name):
            return name
        case Lambda(x, body):
            return _wrap(f"\\{x}. {show_term(body, 0)}", prec > 0)
        case LetPattern(scrutinee, pat, body):
            s = (f"let {_show_pattern(pat)} = {show_term(scrutinee, 1)} "
                 f"in {show_term(body, 0)}")
            return _wrap(s, prec > 0)
        case Match(scrutinee, lv, left, rv, right):
            s = (f"case {show_term(scrutinee, 1)} of "
                 f"inl {lv} -> {show_term(left, 0)} "
                 f"| inr {rv} -> {show_term(right, 0)}")
            return _wrap(s, prec > 0)
        case TensorIntro(a, b):
            return _wrap(f"{show_term(a, 2)} (x) {show_term(b, 1)}",
                         prec > 1)
        case App(f, a):
            return _wrap(f"{show_term(f, 2)} {show_term(a, 3)}", prec > 2)
        case Chan(c, arg):
            head = f"~{c.base}" if c.co else c.base
            return _wrap(f"{head} {show_term(arg, 3)}", prec > 2)
        case WithPair(a, b):
            return f"<{show_term(a, 0)}, {show_term(b, 0)}>"
        case Inl(body):
            return _wrap(f"inl {show_term(body, 3)}", prec > 2)
        case Inr(body):
            return _wrap(f"inr {show_term(body, 3)}", prec > 2)
    raise TypeError(f"not a term: {t!r}")


def show_component(c: Component) -> str:
    ctx = ", ".join(f"{x} : {show_formula(f)}" for x, f in c.ctx)
    lhs = f"{ctx} |- " if ctx else "|- "
    return f"{lhs}{show_term(c.term)} : {show_formula(c.formula)}"


def show_hypersequent(h: Hypersequent) -> str:
    return " || ".join(show_component(c) for c in h.components)


_EXTRA_PRINTERS: dict[type, object] = {}


def register_printer(cls: type, fn) -> None:
    """Let other modules plug their own types into show()."""
    _EXTRA_PRINTERS[cls] = fn


def show(x) -> str:
    """Render any surface object back to its concrete syntax."""
    match x:
        case Hypersequent():
            return show_hypersequent(x)
        case Component():
            return show_component(x)
        case Derivation():
            return write_derivation(x)
        case Star() | Var() | Lambda() | LetPattern() | Match() \
                | TensorIntro() | App() | Chan() | WithPair() | Inl() | Inr():
            return show_term(x)
        case Unit() | Atom() | Lolli() | Plus() | With() | Tensor():
            return show_formula(x)
    for cls, fn in _EXTRA_PRINTERS.items():
        if isinstance(x, cls):
            return fn(x)
    raise TypeError(f"cannot print {type(x).__name__}")


# the natural name for show(); shadows the builtin only for who asks for it
print = show  # noqa: A001


# --- derivation interchange -------------------------------------------------------

_ARITY = {"Ax": 0, "1R": 0, "Merge": 2, "WithR": 2, "PlusL": 2}


def _node_to_dict(d: Derivation) -> dict:
    out: dict = {
        "rule": d.rule,
        "conclusion": show_hypersequent(d.conclusion),
        "premises": [_node_to_dict(p) for p in d.premises],
    }
    if d.channel is not None:
        out["channel"] = d.channel.base
    return out


def write_derivation(d: Derivation) -> str:
    return json.dumps(_node_to_dict(d), indent=1)


def _collect_channels(doc: object, acc: set[str]) -> None:
    if isinstance(doc, dict):
        c = doc.get("channel")
        if isinstance(c, str):
            acc.add(c.lstrip("~"))
        for p in doc.get("premises", ()):
            _collect_channels(p, acc)


def _node_from_dict(doc: object, channels: frozenset[str]) -> Derivation:
    if not isinstance(doc, dict) or "rule" not in doc:
        raise MalformedSequent("derivation nodes need a 'rule' field")
    rule = doc["rule"]
    if rule not in RULES:
        raise UnknownRule(f"no such rule: {rule!r}")
    premises = doc.get("premises", [])
    if not isinstance(premises, list):
        raise MalformedSequent("'premises' must be an array")
    want = _ARITY.get(rule, 1)
    if len(premises) != want:
        raise ArityMismatch(
            f"{rule} takes {want} premise(s), got {len(premises)}")
    if "conclusion" not in doc or not isinstance(doc["conclusion"], str):
        raise MalformedSequent("derivation nodes need a 'conclusion' string")
    try:
        conclusion = parse_hypersequent(doc["conclusion"], channels)
    except ParseError as e:
        raise MalformedSequent(f"bad conclusion: {e}") from None
    channel = None
    if "channel" in doc:
        raw = doc["channel"]
        if not isinstance(raw, str) or not raw.lstrip("~"):
            raise MalformedSequent("'channel' must name a channel")
        channel = ChannelId(raw.lstrip("~"), raw.startswith("~"))
    kids = tuple(_node_from_dict(p, channels) for p in premises)
    return Derivation(rule, conclusion, kids, channel)


def read_derivation(text: str) -> Derivation:
    """Parse the JSON interchange format for derivations."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise MalformedSequent(f"not JSON: {e}") from None
    bases: set[str] = set()
    _collect_channels(doc, bases)
    return _node_from_dict(doc, frozenset(bases))
