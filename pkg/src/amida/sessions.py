"""Session types as macros over formulas.

A session type names a two-party protocol.  Here each protocol is an
abbreviation for a plain formula: sending is a function type, receiving
is a pair type, internal choice is a with-chain, external choice is a
plus-chain, and the finished protocol is the unit.  The two endpoint
views of one protocol are dual session types, and a channel pair lets
two terms typed at dual views actually communicate.

This module provides the encoding, duals, the process-term sugar
(send, receive, nil, name restriction), synthesized realizer pairs,
copycat terms, and the macro typing rules for process terms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence, Union

from amida.syntax import (
    App,
    Atom,
    ChannelId,
    Formula,
    LetPattern,
    Lolli,
    Match,
    PPairLeft,
    PPairRight,
    PStar,
    PTensor,
    Plus,
    Star,
    Tensor,
    Term,
    TensorIntro,
    Unit,
    Var,
    With,
    channels_of,
    substitute,
)
from amida.typecheck import (
    Component,
    Derivation,
    Hypersequent,
    ax,
    cut,
    ee,
    ie,
    infer,
    lolli_l,
    lolli_r,
    merge,
    one_l,
    one_r,
    plus_l,
    plus_r0,
    plus_r1,
    sync,
    tensor_l,
    tensor_r,
    with_l0,
    with_l1,
    with_r,
)


class NotLinearSessionType(Exception):
    """The operation needs a session type with no atoms at the spine."""


class UninhabitedBranch(Exception):
    """A choice branch has no closed inhabitant, so no realizer exists."""


class SchemaMismatch(Exception):
    """The premises do not fit the process rule being applied."""


# --- session type grammar ----------------------------------------------------


@dataclass(frozen=True)
class End:
    """Finished protocol."""


@dataclass(frozen=True)
class AtomS:
    """An opaque protocol name.  Allowed in payloads, not on spines."""

    name: str


@dataclass(frozen=True)
class Send:
    """Output a payload, then continue as cont."""

    payload: Payload
    cont: SessionType


@dataclass(frozen=True)
class Recv:
    """Input a payload, then continue as cont."""

    payload: Payload
    cont: SessionType


@dataclass(frozen=True)
class Select:
    """Internal choice among labeled branches."""

    branches: tuple[tuple[str, SessionType], ...]


@dataclass(frozen=True)
class Offer:
    """External choice among labeled branches."""

    branches: tuple[tuple[str, SessionType], ...]


SessionType = Union[End, AtomS, Send, Recv, Select, Offer]
Payload = Union[SessionType, Formula]

_SESSION_NODES = (End, AtomS, Send, Recv, Select, Offer)


def is_session(x: object) -> bool:
    return isinstance(x, _SESSION_NODES)


def is_linear(s: SessionType) -> bool:
    """Spine check: atoms are excluded, payloads are unconstrained."""
    match s:
        case End():
            return True
        case AtomS(_):
            return False
        case Send(_, cont) | Recv(_, cont):
            return is_linear(cont)
        case Select(branches) | Offer(branches):
            return all(is_linear(b) for _, b in branches)
    return False


def _require_linear(s: SessionType) -> None:
    if not is_session(s):
        raise NotLinearSessionType(f"not a session type: {s!r}")
    if not is_linear(s):
        raise NotLinearSessionType(
            "session type has an atom at the spine, so it has no dual")


def _chain(ctor: Callable[[Formula, Formula], Formula],
           items: Sequence[Formula]) -> Formula:
    out = items[-1]
    for item in reversed(items[:-1]):
        out = ctor(item, out)
    return out


def _encode_payload(p: Payload) -> Formula:
    return encode(p) if is_session(p) else p


def encode(s: SessionType) -> Formula:
    """Translate a session type into the formula it abbreviates.

    The choice encodings look swapped at first sight: internal choice
    becomes a with-chain and external choice a plus-chain, because the
    formula types the channel rather than the process.  Chains nest to
    the right; labels are erased (injections are positional).
    """
    match s:
        case End():
            return Unit()
        case AtomS(name):
            return Atom(name)
        case Send(payload, cont):
            return Lolli(_encode_payload(payload), encode(cont))
        case Recv(payload, cont):
            return Tensor(_encode_payload(payload), encode(cont))
        case Select(branches):
            if not branches:
                raise ValueError("empty choice")
            return _chain(With, [encode(b) for _, b in branches])
        case Offer(branches):
            if not branches:
                raise ValueError("empty choice")
            return _chain(Plus, [encode(b) for _, b in branches])
    raise TypeError(f"not a session type: {s!r}")


def dual(s: SessionType) -> SessionType:
    """The partner's view: send and receive swap, choices swap."""
    _require_linear(s)
    return _dual(s)


def _dual(s: SessionType) -> SessionType:
    match s:
        case End():
            return End()
        case Send(payload, cont):
            return Recv(payload, _dual(cont))
        case Recv(payload, cont):
            return Send(payload, _dual(cont))
        case Select(branches):
            return Offer(tuple((l, _dual(b)) for l, b in branches))
        case Offer(branches):
            return Select(tuple((l, _dual(b)) for l, b in branches))
    raise NotLinearSessionType(f"no dual for {s!r}")


# --- process-term sugar -------------------------------------------------------

def expand_send(x: str, u: Term, t: Term) -> Term:
    """x!(u); t  sends u through x, then uses the continuation of x as x.

    Purely syntactic: the result is t with (x u) substituted for x.
    Substituting s for x afterwards therefore lands on the application
    head, which is why the sugar must be expanded before substitution.
    """
    return substitute(t, x, App(Var(x), u))


def expand_recv(x: str, y: str, t: Term) -> Term:
    """x?(y); t  receives y through x; the pattern rebinds x."""
    return LetPattern(Var(x), PTensor(y, x), t)


def expand_nil() -> Term:
    """0, the finished process."""
    return Star()


# --- closed inhabitants -------------------------------------------------------
#
# Choice realizers need closed terms of the branch encodings, because a
# with-pair can only be introduced on a standalone sequent.  A formula
# over unit-like payloads always has one; an atom never does.


def _inhabit(phi: Formula, fresh: Callable[[], str]) -> Derivation | None:
    match phi:
        case Unit():
            return one_r()
        case Atom(_):
            return None
        case Tensor(a, b):
            da = _inhabit(a, fresh)
            db = _inhabit(b, fresh)
            if da is None or db is None:
                return None
            return tensor_r(merge(da, db))
        case With(a, b):
            da = _inhabit(a, fresh)
            db = _inhabit(b, fresh)
            if da is None or db is None:
                return None
            return with_r(da, db)
        case Plus(a, b):
            da = _inhabit(a, fresh)
            if da is not None:
                return plus_r0(da, b)
            db = _inhabit(b, fresh)
            if db is not None:
                return plus_r1(db, a)
            return None
        case Lolli(a, b):
            db = _inhabit(b, fresh)
            if db is None:
                return None
            z = fresh()
            dz = _weaken(db, z, a, fresh)
            if dz is None:
                return None
            return lolli_r(dz)
    raise TypeError(f"not a formula: {phi!r}")


def _weaken(d: Derivation, z: str, phi: Formula,
            fresh: Callable[[], str]) -> Derivation | None:
    """Extend the last component's context with z:phi, consuming z."""
    match phi:
        case Unit():
            return one_l(d, z)
        case Atom(_):
            return None
        case Tensor(a, b):
            d1 = _weaken(d, fresh(), a, fresh)
            if d1 is None:
                return None
            d2 = _weaken(d1, fresh(), b, fresh)
            if d2 is None:
                return None
            return tensor_l(d2, z)
        case Plus(a, b):
            dl = _weaken(d, fresh(), a, fresh)
            dr = _weaken(d, fresh(), b, fresh)
            if dl is None or dr is None:
                return None
            return plus_l(dl, dr, z)
        case With(a, b):
            dl = _weaken(d, fresh(), a, fresh)
            if dl is not None:
                return with_l0(dl, z, b)
            dr = _weaken(d, fresh(), b, fresh)
            if dr is not None:
                return with_l1(dr, z, a)
            return None
        case Lolli(a, b):
            arg = _inhabit(a, fresh)
            if arg is None:
                return None
            zb = fresh()
            db = _weaken(d, zb, b, fresh)
            if db is None:
                return None
            db = _move_front(db, zb)
            dd = lolli_l(merge(arg, db), z)
            return _move_back(dd, z)
    raise TypeError(f"not a formula: {phi!r}")


def closed_inhabitant(phi: Formula) -> Derivation | None:
    """A standalone derivation of phi with no context, if one exists."""
    counter = iter(range(1, 1_000_000))
    return _inhabit(phi, lambda: f"w{next(counter)}")


# --- context plumbing helpers -------------------------------------------------


def _ctx_names(d: Derivation) -> list[str]:
    return [name for name, _ in d.conclusion.components[-1].ctx]


def _move_front(d: Derivation, name: str) -> Derivation:
    i = _ctx_names(d).index(name)
    while i > 0:
        d = ie(d, i - 1)
        i -= 1
    return d


def _move_back(d: Derivation, name: str) -> Derivation:
    names = _ctx_names(d)
    i = names.index(name)
    while i < len(names) - 1:
        d = ie(d, i)
        i += 1
    return d


def _sort_ctx(d: Derivation, order: Sequence[str]) -> Derivation:
    for k, name in enumerate(order):
        i = _ctx_names(d).index(name)
        while i > k:
            d = ie(d, i - 1)
            i -= 1
    return d


# --- realizers ----------------------------------------------------------------


@dataclass(frozen=True)
class Realized:
    """A synthesized endpoint pair for one session type.

    left and right are closed terms typed at the encoding and at the
    dual encoding; derivation proves both at once, as the two components
    of one hypersequent.  channels lists the channel pairs the terms
    use, as (base, (argument type, result type)) for the plain half.
    """

    left: Term
    right: Term
    derivation: Derivation
    channels: tuple[tuple[str, tuple[Formula, Formula]], ...]

    def channel_decls(self) -> dict[str, tuple[Formula, Formula]]:
        return dict(self.channels)


class _Synth:
    def __init__(self, prefix: str, start: int, avoid: frozenset[str]):
        self.prefix = prefix
        self.next = start
        self.avoid = avoid
        self.channels: list[tuple[str, tuple[Formula, Formula]]] = []
        self.nvar = 0
        self.nw = 0

    def fresh_chan(self, frm: Formula, to: Formula) -> str:
        while f"{self.prefix}{self.next}" in self.avoid:
            self.next += 1
        base = f"{self.prefix}{self.next}"
        self.next += 1
        self.channels.append((base, (frm, to)))
        return base

    def fresh_var(self) -> str:
        self.nvar += 1
        return f"x{self.nvar}"

    def fresh_w(self) -> str:
        self.nw += 1
        return f"w{self.nw}"

    def build(self, s: SessionType) -> Derivation:
        """Derive the two-component hypersequent for s and its dual."""
        match s:
            case End():
                return merge(one_r(), one_r())
            case Send(payload, cont):
                ih = self.build(cont)
                pay = _encode_payload(payload)
                base = self.fresh_chan(pay, encode(cont))
                x = self.fresh_var()
                d = merge(ax(x, pay), ih)
                d = ee(d, 1)
                d = ee(d, 0)
                d = sync(d, ChannelId(base, False))
                d = ee(d, 0)
                d = ee(d, 1)
                d = tensor_r(d)
                d = ee(d, 0)
                d = lolli_r(d)
                return ee(d, 0)
            case Recv(payload, cont):
                ih = self.build(cont)
                pay = _encode_payload(payload)
                base = self.fresh_chan(pay, encode(_dual(cont)))
                x = self.fresh_var()
                d = merge(ax(x, pay), ih)
                d = ee(d, 0)
                d = sync(d, ChannelId(base, False))
                d = ee(d, 0)
                d = ee(d, 1)
                d = tensor_r(d)
                d = ee(d, 0)
                return lolli_r(d)
            case Select(branches):
                return self.choice(branches, select=True)
            case Offer(branches):
                return self.choice(branches, select=False)
        raise NotLinearSessionType(f"no realizers for {s!r}")

    def choice(self, branches, select: bool) -> Derivation:
        """Choice realizers carry no channels across the pair boundary.

        A with-pair closes over a standalone sequent, so each tuple
        component must be a closed inhabitant of its branch encoding,
        and the opposite side injects one closed inhabitant into the
        plus-chain.
        """
        tuple_types = [encode(b) if select else encode(_dual(b))
                       for _, b in branches]
        inj_types = [encode(_dual(b)) if select else encode(b)
                     for _, b in branches]
        arms = []
        for (label, _), phi in zip(branches, tuple_types):
            inh = _inhabit(phi, self.fresh_w)
            if inh is None:
                raise UninhabitedBranch(
                    f"branch {label!r} encodes to an uninhabited formula")
            arms.append(inh)
        d_tuple = arms[-1]
        for inh in reversed(arms[:-1]):
            d_tuple = with_r(inh, d_tuple)
        d_inj = None
        for i, phi in enumerate(inj_types):
            inh = _inhabit(phi, self.fresh_w)
            if inh is not None:
                d_inj = self._inject(inh, inj_types, i)
                break
        if d_inj is None:
            raise UninhabitedBranch(
                "no branch of the choice has an inhabited opposite side")
        if select:
            return merge(d_tuple, d_inj)
        return merge(d_inj, d_tuple)

    def _inject(self, d: Derivation, types: list[Formula],
                i: int) -> Derivation:
        if len(types) == 1:
            return d
        if i == 0:
            return plus_r0(d, _chain(Plus, types[1:]))
        return plus_r1(self._inject(d, types[1:], i - 1), types[0])


def realize(s: SessionType, *, prefix: str = "c", start: int = 1,
            avoid: frozenset[str] = frozenset()) -> Realized:
    """Synthesize endpoint terms for s, with a checked derivation.

    Channel bases are prefix1, prefix2, ... skipping names in avoid, so
    callers embedding the result next to user channels stay collision
    free.
    """
    _require_linear(s)
    synth = _Synth(prefix, start, avoid)
    d = synth.build(s)
    left, right = (c.term for c in d.conclusion.components)
    return Realized(left, right, d, tuple(synth.channels))


def realizers(s: SessionType) -> tuple[Term, Term, Derivation]:
    r = realize(s)
    return r.left, r.right, r.derivation


def expand_new(x: str, s: SessionType, t: Term, *,
               prefix: str = "c", start: int = 1,
               avoid: frozenset[str] = frozenset()) -> Term:
    """new x : s in t  binds both endpoint views inside t.

    The body refers to the two ends as x#L and x#R ('#' keeps the
    injected names out of the surface namespace).  The expansion pattern
    matches the realizer pair against those names.
    """
    r = realize(s, prefix=prefix, start=start, avoid=avoid)
    return LetPattern(TensorIntro(r.left, r.right),
                      PTensor(x + "#L", x + "#R"), t)


def new_rule_admissible(premise: Derivation, x: str, s: SessionType, *,
                        prefix: str = "c", start: int = 1,
                        avoid: frozenset[str] = frozenset()) -> Derivation:
    """Derive the name-restriction expansion from its body's derivation.

    The premise must type the body with both endpoint views in the last
    component's context, as x#L : encode(s) and x#R : encode(dual(s)).
    The result types  let x#L (x) x#R = pair in body  by cutting the
    realizer pair against the body, so the conclusion's term equals the
    expand_new output for the same naming parameters.
    """
    xl, xr = x + "#L", x + "#R"
    last = premise.conclusion.components[-1]
    ctx = dict(last.ctx)
    if ctx.get(xl) != encode(s) or ctx.get(xr) != encode(_dual(s)):
        raise SchemaMismatch(
            f"last context must hold {xl} and {xr} at the two views of "
            "the session type")
    used = set(avoid)
    for comp in premise.conclusion.components:
        used.update(c.base for c in channels_of(comp.term))
    r = realize(s, prefix=prefix, start=start, avoid=frozenset(used))
    pair = tensor_r(r.derivation)
    names = _ctx_names(premise)
    d = _sort_ctx(premise, [n for n in names if n not in (xl, xr)]
                  + [xl, xr])
    d = tensor_l(d, "#nu")
    d = _move_front(d, "#nu")
    d = merge(pair, d)
    for i in range(len(d.conclusion.components) - 2):
        d = ee(d, i)
    return cut(d)


# --- copycat ------------------------------------------------------------------


def copycat(s: SessionType, x: str = "x",
            y: str = "y") -> tuple[Term, Derivation]:
    """A term forwarding between the two dual views of s.

    The result t is checked at  x:encode(s), y:encode(dual(s)) |- t:1.
    It uses no channels: each protocol step is matched by the dual step
    on the other variable, payloads flowing through directly.
    """
    _require_linear(s)
    counter = iter(range(1, 1_000_000))
    t = _copy(s, x, y, lambda: f"p{next(counter)}")
    goal = Hypersequent((Component(
        ((x, encode(s)), (y, encode(_dual(s)))), t, Unit()),))
    return t, infer(goal)


def _copy(s: SessionType, x: str, y: str,
          fresh: Callable[[], str]) -> Term:
    match s:
        case End():
            return LetPattern(Var(x), PStar(),
                              LetPattern(Var(y), PStar(), Star()))
        case Send(_, cont):
            p = fresh()
            body = _copy(cont, x, y, fresh)
            body = substitute(body, x, App(Var(x), Var(p)))
            return LetPattern(Var(y), PTensor(p, y), body)
        case Recv(_, cont):
            p = fresh()
            body = _copy(cont, x, y, fresh)
            body = substitute(body, y, App(Var(y), Var(p)))
            return LetPattern(Var(x), PTensor(p, x), body)
        case Select(branches):
            return _copy_choice([b for _, b in branches], x, y, fresh,
                                case_on=y, project=x)
        case Offer(branches):
            return _copy_choice([b for _, b in branches], x, y, fresh,
                                case_on=x, project=y)
    raise NotLinearSessionType(f"no copycat for {s!r}")


def _copy_choice(branches: list[SessionType], x: str, y: str,
                 fresh: Callable[[], str], case_on: str,
                 project: str) -> Term:
    if len(branches) == 1:
        return _copy(branches[0], x, y, fresh)
    head = LetPattern(Var(project), PPairLeft(project),
                      _copy(branches[0], x, y, fresh))
    rest = LetPattern(Var(project), PPairRight(project),
                      _copy_choice(branches[1:], x, y, fresh,
                                   case_on=case_on, project=project))
    return Match(Var(case_on), case_on, head, case_on, rest)


# --- process typing rules as macros -------------------------------------------


def process_rules_admissible(kind: str,
                             premises: Sequence[Derivation] = (), *,
                             x: str | None = None,
                             y: str | None = None) -> Derivation:
    """Expand one process typing rule into first-class rule applications.

    kind 'nil' takes no premises; 'end' consumes a fresh unit variable
    x; 'recv' rebinds channel x and payload y out of the last component;
    'send' feeds the last component (the payload producer) into the
    function variable x of the component before it.  For 'send' two
    premises may be given and are merged in order.
    """
    match kind:
        case "nil":
            if premises:
                raise SchemaMismatch("nil takes no premises")
            return one_r()
        case "end":
            (d,) = _expect(premises, 1, kind)
            if x is None:
                raise SchemaMismatch("end needs the variable name x")
            if x in _ctx_names(d):
                raise SchemaMismatch(f"{x!r} already occurs in the context")
            return one_l(d, x)
        case "recv":
            (d,) = _expect(premises, 1, kind)
            if x is None or y is None or x == y:
                raise SchemaMismatch("recv needs distinct names x and y")
            names = _ctx_names(d)
            if x not in names or y not in names:
                raise SchemaMismatch(
                    f"{x!r} and {y!r} must both occur in the last context")
            order = [n for n in names if n not in (x, y)] + [y, x]
            return tensor_l(_sort_ctx(d, order), x)
        case "send":
            if len(premises) == 2:
                d = merge(premises[0], premises[1])
            else:
                (d,) = _expect(premises, 1, kind)
            comps = d.conclusion.components
            if len(comps) < 2:
                raise SchemaMismatch(
                    "send needs a consumer and a producer component")
            if x is None:
                raise SchemaMismatch("send needs the channel name x")
            consumer = [name for name, _ in comps[-2].ctx]
            producer = [name for name, _ in comps[-1].ctx]
            if x not in consumer:
                raise SchemaMismatch(
                    f"{x!r} must occur in the consumer context")
            d = ee(d, len(comps) - 2)
            d = _move_front(d, x)
            d = lolli_l(d, x)
            gamma = [n for n in consumer if n != x]
            return _sort_ctx(d, gamma + producer + [x])
    raise SchemaMismatch(f"unknown process rule {kind!r}")


def _expect(premises: Sequence[Derivation], n: int,
            kind: str) -> Sequence[Derivation]:
    if len(premises) != n:
        raise SchemaMismatch(f"{kind} takes {n} premise(s), "
                             f"got {len(premises)}")
    return premises
