"""Hypersequent derivations: checking, inference, splitting.

A hypersequent is an ordered list of components `ctx |- term : formula`,
read conjunctively.  Derivations are trees of rule applications; the
checker validates each node against its rule schema locally and enforces
one global condition: every channel pair is introduced by exactly one
Sync node, whose premises never mention that pair.

`check_derivation` is the ground truth.  `infer` is an algorithmic
companion for the syntax-directed fragment: it treats each channel
application as a hole, derives the argument separately, introduces the
pair with one Sync, and stitches the pieces back together with Cut,
exchange and merge plumbing.  Terms that would need an essential cut of
some other shape are rejected as NotInFragment, never as Untypable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .syntax import (
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
    NonLinearSyntax,
    PPairLeft,
    PPairRight,
    PStar,
    PTensor,
    Pattern,
    Plus,
    Star,
    Tensor,
    TensorIntro,
    Term,
    Unit,
    Var,
    With,
    WithPair,
    alpha_eq,
    channels_of,
    free_variables,
    pattern_binds,
    substitute,
)


class Untypable(Exception):
    """The goal is outside the type system for a definite reason."""


class NotInFragment(Exception):
    """The term may be derivable, but only through a cut shape the
    algorithmic checker does not search for."""


class NotChannelDisjoint(Exception):
    """A split boundary separates a channel from its co-channel."""


# --- hypersequents -------------------------------------------------------


CtxEntry = tuple[str, Formula]


@dataclass(frozen=True)
class Component:
    ctx: tuple[CtxEntry, ...]
    term: Term
    formula: Formula


@dataclass(frozen=True)
class Hypersequent:
    components: tuple[Component, ...]

    def __len__(self) -> int:
        return len(self.components)


@dataclass(frozen=True)
class Derivation:
    rule: str
    conclusion: Hypersequent
    premises: tuple[Derivation, ...] = ()
    channel: ChannelId | None = None


@dataclass(frozen=True)
class RuleViolation:
    path: tuple[int, ...]
    reason: str


RULES = {
    "Ax", "Merge", "Cut", "IE", "EE", "1R", "1L", "TensorR", "TensorL",
    "LolliR", "LolliL", "WithR", "WithL0", "WithL1", "PlusR0", "PlusR1",
    "PlusL", "Sync",
}


def fmt_formula(f: Formula) -> str:
    match f:
        case Unit():
            return "1"
        case Atom(name):
            return name
        case Tensor(a, b):
            return f"({fmt_formula(a)} * {fmt_formula(b)})"
        case Lolli(a, b):
            return f"({fmt_formula(a)} -o {fmt_formula(b)})"
        case Plus(a, b):
            return f"({fmt_formula(a)} + {fmt_formula(b)})"
        case With(a, b):
            return f"({fmt_formula(a)} & {fmt_formula(b)})"
    return repr(f)


# --- node constructors ----------------------------------------------------
#
# Each constructor computes its conclusion from the premises, so
# derivations built through them are schema-correct by construction.
# check_derivation re-validates everything independently.


def ax(x: str, phi: Formula) -> Derivation:
    c = Component(((x, phi),), Var(x), phi)
    return Derivation("Ax", Hypersequent((c,)))


def one_r() -> Derivation:
    return Derivation("1R", Hypersequent((Component((), Star(), Unit()),)))


def merge(d1: Derivation, d2: Derivation) -> Derivation:
    comps = d1.conclusion.components + d2.conclusion.components
    return Derivation("Merge", Hypersequent(comps), (d1, d2))


def ee(d: Derivation, i: int) -> Derivation:
    comps = list(d.conclusion.components)
    comps[i], comps[i + 1] = comps[i + 1], comps[i]
    return Derivation("EE", Hypersequent(tuple(comps)), (d,))


def ie(d: Derivation, pos: int) -> Derivation:
    comps = list(d.conclusion.components)
    last = comps[-1]
    ctx = list(last.ctx)
    ctx[pos], ctx[pos + 1] = ctx[pos + 1], ctx[pos]
    comps[-1] = Component(tuple(ctx), last.term, last.formula)
    return Derivation("IE", Hypersequent(tuple(comps)), (d,))


def one_l(d: Derivation, z: str) -> Derivation:
    comps = list(d.conclusion.components)
    last = comps[-1]
    comps[-1] = Component(last.ctx + ((z, Unit()),),
                          LetPattern(Var(z), PStar(), last.term), last.formula)
    return Derivation("1L", Hypersequent(tuple(comps)), (d,))


def tensor_r(d: Derivation) -> Derivation:
    comps = list(d.conclusion.components)
    b = comps.pop()
    a = comps.pop()
    comps.append(Component(a.ctx + b.ctx, TensorIntro(a.term, b.term),
                           Tensor(a.formula, b.formula)))
    return Derivation("TensorR", Hypersequent(tuple(comps)), (d,))


def tensor_l(d: Derivation, z: str) -> Derivation:
    comps = list(d.conclusion.components)
    last = comps[-1]
    (x, phi), (y, psi) = last.ctx[-2], last.ctx[-1]
    comps[-1] = Component(last.ctx[:-2] + ((z, Tensor(phi, psi)),),
                          LetPattern(Var(z), PTensor(x, y), last.term),
                          last.formula)
    return Derivation("TensorL", Hypersequent(tuple(comps)), (d,))


def lolli_r(d: Derivation) -> Derivation:
    comps = list(d.conclusion.components)
    last = comps[-1]
    x, phi = last.ctx[-1]
    comps[-1] = Component(last.ctx[:-1], Lambda(x, last.term),
                          Lolli(phi, last.formula))
    return Derivation("LolliR", Hypersequent(tuple(comps)), (d,))


def lolli_l(d: Derivation, f: str) -> Derivation:
    comps = list(d.conclusion.components)
    cons = comps.pop()
    prod = comps.pop()
    x, psi = cons.ctx[0]
    comps.append(Component(
        prod.ctx + ((f, Lolli(prod.formula, psi)),) + cons.ctx[1:],
        substitute(cons.term, x, App(Var(f), prod.term)), cons.formula))
    return Derivation("LolliL", Hypersequent(tuple(comps)), (d,))


def cut(d: Derivation) -> Derivation:
    comps = list(d.conclusion.components)
    cons = comps.pop()
    prod = comps.pop()
    x, _ = cons.ctx[0]
    comps.append(Component(prod.ctx + cons.ctx[1:],
                           substitute(cons.term, x, prod.term), cons.formula))
    return Derivation("Cut", Hypersequent(tuple(comps)), (d,))


def sync(d: Derivation, c: ChannelId) -> Derivation:
    comps = list(d.conclusion.components)
    b = comps.pop()
    a = comps.pop()
    comps.append(Component(a.ctx, Chan(c, a.term), b.formula))
    comps.append(Component(b.ctx, Chan(c.dual(), b.term), a.formula))
    return Derivation("Sync", Hypersequent(tuple(comps)), (d,), channel=c)


def with_r(d1: Derivation, d2: Derivation) -> Derivation:
    a = d1.conclusion.components[0]
    b = d2.conclusion.components[0]
    c = Component(a.ctx, WithPair(a.term, b.term), With(a.formula, b.formula))
    return Derivation("WithR", Hypersequent((c,)), (d1, d2))


def with_l0(d: Derivation, z: str, psi: Formula) -> Derivation:
    comps = list(d.conclusion.components)
    last = comps[-1]
    x, phi = last.ctx[-1]
    comps[-1] = Component(last.ctx[:-1] + ((z, With(phi, psi)),),
                          LetPattern(Var(z), PPairLeft(x), last.term),
                          last.formula)
    return Derivation("WithL0", Hypersequent(tuple(comps)), (d,))


def with_l1(d: Derivation, z: str, phi: Formula) -> Derivation:
    comps = list(d.conclusion.components)
    last = comps[-1]
    y, psi = last.ctx[-1]
    comps[-1] = Component(last.ctx[:-1] + ((z, With(phi, psi)),),
                          LetPattern(Var(z), PPairRight(y), last.term),
                          last.formula)
    return Derivation("WithL1", Hypersequent(tuple(comps)), (d,))


def plus_r0(d: Derivation, psi: Formula) -> Derivation:
    comps = list(d.conclusion.components)
    last = comps[-1]
    comps[-1] = Component(last.ctx, Inl(last.term), Plus(last.formula, psi))
    return Derivation("PlusR0", Hypersequent(tuple(comps)), (d,))


def plus_r1(d: Derivation, phi: Formula) -> Derivation:
    comps = list(d.conclusion.components)
    last = comps[-1]
    comps[-1] = Component(last.ctx, Inr(last.term), Plus(phi, last.formula))
    return Derivation("PlusR1", Hypersequent(tuple(comps)), (d,))


def plus_l(d1: Derivation, d2: Derivation, z: str) -> Derivation:
    a = d1.conclusion.components[0]
    b = d2.conclusion.components[0]
    x, phi = a.ctx[-1]
    y, psi = b.ctx[-1]
    c = Component(a.ctx[:-1] + ((z, Plus(phi, psi)),),
                  Match(Var(z), x, a.term, y, b.term), a.formula)
    return Derivation("PlusL", Hypersequent((c,)), (d1, d2))


# --- the checker ----------------------------------------------------------


def check_derivation(d: Derivation) -> list[RuleViolation]:
    """Validate every node against its rule schema.  An empty list means
    the derivation is accepted and `d.conclusion` is derivable."""
    out: list[RuleViolation] = []
    sync_nodes: dict[str, list[tuple[int, ...]]] = {}

    def bad(path, reason):
        out.append(RuleViolation(path, reason))

    def comp_eq(a: Component, b: Component) -> bool:
        return (a.ctx == b.ctx and a.formula == b.formula
                and alpha_eq(a.term, b.term))

    def hyp_eq(a: Hypersequent, b: Hypersequent) -> bool:
        return len(a) == len(b) and all(
            comp_eq(x, y) for x, y in zip(a.components, b.components))

    def walk(node: Derivation, path: tuple[int, ...]) -> None:
        for i, p in enumerate(node.premises):
            walk(p, path + (i,))
        for comp in node.conclusion.components:
            names = [v for v, _ in comp.ctx]
            if len(set(names)) != len(names):
                bad(path, f"context repeats a variable: {names}")
        check_node(node, path)

    def expect_arity(node, path, n) -> bool:
        if len(node.premises) != n:
            bad(path, f"{node.rule} expects {n} premise(s), "
                      f"got {len(node.premises)}")
            return False
        return True

    def check_node(node: Derivation, path: tuple[int, ...]) -> None:
        concl = node.conclusion.components
        rule = node.rule
        if rule not in RULES:
            bad(path, f"unknown rule {rule!r}")
            return
        if rule in ("Ax", "1R"):
            if not expect_arity(node, path, 0):
                return
            if len(concl) != 1:
                bad(path, f"{rule} concludes a single component")
                return
            c = concl[0]
            if rule == "Ax":
                okc = (len(c.ctx) == 1 and c.term == Var(c.ctx[0][0])
                       and c.formula == c.ctx[0][1])
                if not okc:
                    bad(path, "Ax must be  x:A |- x : A")
            else:
                if c.ctx or c.term != Star() or c.formula != Unit():
                    bad(path, "1R must be  |- * : 1")
            return
        if rule == "Merge":
            if not expect_arity(node, path, 2):
                return
            want = (node.premises[0].conclusion.components
                    + node.premises[1].conclusion.components)
            if not hyp_eq(node.conclusion, Hypersequent(want)):
                bad(path, "Merge conclusion is not the concatenation of "
                          "its premises")
            return
        if rule == "WithR":
            if not expect_arity(node, path, 2):
                return
            p1, p2 = (p.conclusion for p in node.premises)
            if len(p1) != 1 or len(p2) != 1 or len(node.conclusion) != 1:
                bad(path, "WithR applies to singleton hypersequents only")
                return
            a, b = p1.components[0], p2.components[0]
            if a.ctx != b.ctx:
                bad(path, "WithR premises must share the same context")
                return
            if not hyp_eq(node.conclusion, with_r(*node.premises).conclusion):
                bad(path, "WithR conclusion mismatch")
            return
        if rule == "PlusL":
            if not expect_arity(node, path, 2):
                return
            p1, p2 = (p.conclusion for p in node.premises)
            if len(p1) != 1 or len(p2) != 1 or len(node.conclusion) != 1:
                bad(path, "PlusL applies to singleton hypersequents only")
                return
            a, b = p1.components[0], p2.components[0]
            if not a.ctx or not b.ctx:
                bad(path, "PlusL premises must bind the case variables last")
                return
            if a.ctx[:-1] != b.ctx[:-1] or a.formula != b.formula:
                bad(path, "PlusL premises must share context and result type")
                return
            c = concl[0]
            if not c.ctx:
                bad(path, "PlusL conclusion must end with the scrutinee")
                return
            z = c.ctx[-1][0]
            if not hyp_eq(node.conclusion,
                          plus_l(*node.premises, z).conclusion):
                bad(path, "PlusL conclusion mismatch")
            return

        # the remaining rules take exactly one premise
        if not expect_arity(node, path, 1):
            return
        prem = node.premises[0].conclusion.components

        def prefix_ok(k: int) -> bool:
            """The rule rewrites the last k premise components into one."""
            if len(prem) < k:
                bad(path, f"{rule} needs {k} component(s) to act on")
                return False
            if len(concl) != len(prem) - k + 1:
                bad(path, f"{rule} changes the component count wrongly")
                return False
            for a, b in zip(prem[:-k], concl[:-1]):
                if not comp_eq(a, b):
                    bad(path, f"{rule} may only modify the last component(s)")
                    return False
            return True

        match rule:
            case "IE":
                if len(concl) != len(prem) or not prem:
                    bad(path, "IE preserves the component count")
                    return
                for a, b in zip(prem[:-1], concl[:-1]):
                    if not comp_eq(a, b):
                        bad(path, "IE acts on the last component only")
                        return
                a, b = prem[-1], concl[-1]
                if a.formula != b.formula or not alpha_eq(a.term, b.term):
                    bad(path, "IE must keep term and formula")
                    return
                if len(a.ctx) != len(b.ctx):
                    bad(path, "IE preserves the context length")
                    return
                diffs = [i for i in range(len(a.ctx)) if a.ctx[i] != b.ctx[i]]
                if (len(diffs) != 2 or diffs[1] != diffs[0] + 1
                        or a.ctx[diffs[0]] != b.ctx[diffs[1]]
                        or a.ctx[diffs[1]] != b.ctx[diffs[0]]):
                    bad(path, "IE must swap two adjacent context entries")
                return
            case "EE":
                if len(concl) != len(prem):
                    bad(path, "EE preserves the component count")
                    return
                for i in range(len(prem) - 1):
                    swapped = list(prem)
                    swapped[i], swapped[i + 1] = swapped[i + 1], swapped[i]
                    if all(comp_eq(a, b) for a, b in zip(swapped, concl)):
                        return
                bad(path, "EE must swap two adjacent components")
                return
            case "1L":
                if not prefix_ok(1):
                    return
                c = concl[-1]
                if not c.ctx:
                    bad(path, "1L appends z:1 to the context")
                    return
                z = c.ctx[-1][0]
                if not comp_eq(c, one_l(node.premises[0], z)
                               .conclusion.components[-1]):
                    bad(path, "1L conclusion mismatch")
                return
            case "TensorR":
                if not prefix_ok(2):
                    return
                if not comp_eq(concl[-1], tensor_r(node.premises[0])
                               .conclusion.components[-1]):
                    bad(path, "TensorR conclusion mismatch")
                return
            case "TensorL":
                if not prefix_ok(1):
                    return
                if len(prem[-1].ctx) < 2:
                    bad(path, "TensorL needs the two bound variables last")
                    return
                c = concl[-1]
                if not c.ctx:
                    bad(path, "TensorL conclusion needs the scrutinee last")
                    return
                z = c.ctx[-1][0]
                if not comp_eq(c, tensor_l(node.premises[0], z)
                               .conclusion.components[-1]):
                    bad(path, "TensorL conclusion mismatch")
                return
            case "LolliR":
                if not prefix_ok(1):
                    return
                if not prem[-1].ctx:
                    bad(path, "LolliR needs the bound variable last")
                    return
                if not comp_eq(concl[-1], lolli_r(node.premises[0])
                               .conclusion.components[-1]):
                    bad(path, "LolliR conclusion mismatch")
                return
            case "LolliL":
                if not prefix_ok(2):
                    return
                if not prem[-1].ctx:
                    bad(path, "LolliL consumer needs x:psi first")
                    return
                prod = prem[-2]
                c = concl[-1]
                pos = len(prod.ctx)
                if pos >= len(c.ctx):
                    bad(path, "LolliL conclusion context too short")
                    return
                if not comp_eq(c, lolli_l(node.premises[0], c.ctx[pos][0])
                               .conclusion.components[-1]):
                    bad(path, "LolliL conclusion mismatch "
                              "(u[(f t)/x] checked up to alpha)")
                return
            case "Cut":
                if not prefix_ok(2):
                    return
                cons = prem[-1]
                prod = prem[-2]
                if not cons.ctx:
                    bad(path, "Cut consumer needs x:phi first in context")
                    return
                if cons.ctx[0][1] != prod.formula:
                    bad(path, "Cut formula mismatch between producer and x")
                    return
                if not comp_eq(concl[-1], cut(node.premises[0])
                               .conclusion.components[-1]):
                    bad(path, "Cut conclusion mismatch "
                              "(u[t/x] checked up to alpha)")
                return
            case "WithL0" | "WithL1":
                if not prefix_ok(1):
                    return
                if not prem[-1].ctx:
                    bad(path, f"{rule} needs the bound variable last")
                    return
                c = concl[-1]
                if not c.ctx or not isinstance(c.ctx[-1][1], With):
                    bad(path, f"{rule} conclusion needs z : phi & psi last")
                    return
                z = c.ctx[-1][0]
                w = c.ctx[-1][1]
                built = (with_l0(node.premises[0], z, w.right)
                         if rule == "WithL0"
                         else with_l1(node.premises[0], z, w.left))
                if not comp_eq(c, built.conclusion.components[-1]):
                    bad(path, f"{rule} conclusion mismatch")
                return
            case "PlusR0" | "PlusR1":
                if not prefix_ok(1):
                    return
                c = concl[-1]
                if not isinstance(c.formula, Plus):
                    bad(path, f"{rule} must conclude a sum type")
                    return
                built = (plus_r0(node.premises[0], c.formula.right)
                         if rule == "PlusR0"
                         else plus_r1(node.premises[0], c.formula.left))
                if not comp_eq(c, built.conclusion.components[-1]):
                    bad(path, f"{rule} conclusion mismatch")
                return
            case "Sync":
                if len(prem) < 2 or len(concl) != len(prem):
                    bad(path, "Sync rewrites the last two components")
                    return
                if any(not comp_eq(a, b)
                       for a, b in zip(prem[:-2], concl[:-2])):
                    bad(path, "Sync acts on the last two components only")
                    return
                t2 = concl[-2].term
                if not isinstance(t2, Chan):
                    bad(path,
                        "Sync conclusion terms must be channel applications")
                    return
                e = t2.channel
                if node.channel is not None and node.channel != e:
                    bad(path, "Sync channel tag disagrees with the terms")
                    return
                if not hyp_eq(node.conclusion,
                              sync(node.premises[0], e).conclusion):
                    bad(path, "Sync conclusion mismatch")
                    return
                base = e.base
                for comp in prem:
                    if any(ch.base == base for ch in channels_of(comp.term)):
                        bad(path, f"channel {base!r} already occurs in a "
                                  "Sync premise")
                sync_nodes.setdefault(base, []).append(path)
                return
        bad(path, f"unhandled rule {rule!r}")

    walk(d, ())
    for base, paths in sync_nodes.items():
        for p in paths[1:]:
            out.append(RuleViolation(
                p, f"channel pair {base!r} introduced by more than one Sync"))
    return out


# --- inference ------------------------------------------------------------


ChannelDecls = dict[str, tuple[Formula, Formula]]


def _chan_types(e: ChannelId, decls: ChannelDecls) -> tuple[Formula, Formula]:
    if e.base not in decls:
        raise Untypable(f"undeclared channel {e.base!r}")
    frm, to = decls[e.base]
    return (to, frm) if e.co else (frm, to)


def _spine(t: Term) -> tuple[Term, list[Term]]:
    args: list[Term] = []
    while isinstance(t, App):
        args.append(t.arg)
        t = t.fun
    args.reverse()
    return t, args


def _bind_pattern(p: Pattern, sty: Formula,
                  env: dict[str, Formula]) -> tuple[dict[str, Formula],
                                                    list[str]]:
    """Extend env with the pattern's variables; also return them in the
    order the left rules want them at the end of the context."""
    env2 = dict(env)
    match p, sty:
        case PStar(), Unit():
            return env2, []
        case PTensor(x, y), Tensor(phi, psi):
            env2[x] = phi
            env2[y] = psi
            return env2, [x, y]
        case PPairLeft(x), With(phi, _):
            env2[x] = phi
            return env2, [x]
        case PPairRight(y), With(_, psi):
            env2[y] = psi
            return env2, [y]
    raise Untypable(
        f"pattern does not match scrutinee type {fmt_formula(sty)}")


@dataclass
class _Task:
    hole: str
    chan: ChannelId
    arg: Term
    ctx: list[CtxEntry]
    frm: Formula
    to: Formula


@dataclass
class _State:
    """A derivation under construction plus one tag per component:
    the hole a pool component will fill, or None once it is plain."""

    deriv: Derivation | None = None
    slots: list[str | None] = field(default_factory=list)

    def append(self, leaf: Derivation) -> None:
        self.deriv = leaf if self.deriv is None else merge(self.deriv, leaf)
        self.slots.extend([None] * len(leaf.conclusion.components))

    def last(self) -> Component:
        return self.deriv.conclusion.components[-1]

    def swap(self, i: int) -> None:
        self.deriv = ee(self.deriv, i)
        self.slots[i], self.slots[i + 1] = self.slots[i + 1], self.slots[i]

    def ee_to_last(self, i: int) -> None:
        while i < len(self.slots) - 1:
            self.swap(i)
            i += 1

    def ee_to_second_last(self, i: int) -> None:
        while i < len(self.slots) - 2:
            self.swap(i)
            i += 1

    def ie_to_front(self, name: str) -> None:
        pos = [v for v, _ in self.last().ctx].index(name)
        for k in range(pos, 0, -1):
            self.deriv = ie(self.deriv, k - 1)

    def ie_to_back(self, name: str) -> None:
        ctx = self.last().ctx
        pos = [v for v, _ in ctx].index(name)
        for k in range(pos, len(ctx) - 1):
            self.deriv = ie(self.deriv, k)

    def ie_sort(self, order: list[str]) -> None:
        """Selection-sort the last component's context into `order`."""
        for target in range(len(order) - 1, -1, -1):
            names = [v for v, _ in self.last().ctx]
            pos = names.index(order[target])
            for k in range(pos, target):
                self.deriv = ie(self.deriv, k)


class _Infer:
    def __init__(self, decls: ChannelDecls):
        self.decls = decls
        self.counter = 0
        self.hole_types: dict[str, Formula] = {}

    def fresh(self, kind: str) -> str:
        self.counter += 1
        return f"#{kind}{self.counter}"

    def lookup(self, x: str, env: dict[str, Formula]) -> Formula:
        if x in env:
            return env[x]
        if x in self.hole_types:
            return self.hole_types[x]
        raise Untypable(f"unbound variable {x!r}")

    # -- pass 0: type checking and channel abstraction ------------------

    def strip(self, t: Term, expected: Formula, env: dict[str, Formula],
              tasks: list[_Task]) -> Term:
        """Check `t` against `expected` and return it with every channel
        application replaced by a typed hole variable, the argument
        recorded as a task.  With-pair and case arms are left alone and
        inferred as self-contained singletons during building."""
        match t:
            case Star():
                if expected != Unit():
                    raise Untypable(f"* against {fmt_formula(expected)}")
                return t
            case Var(x):
                if self.lookup(x, env) != expected:
                    raise Untypable(
                        f"variable {x!r} has type "
                        f"{fmt_formula(self.lookup(x, env))}, needed "
                        f"{fmt_formula(expected)}")
                return t
            case Chan(e, arg):
                frm, to = _chan_types(e, self.decls)
                if to != expected:
                    raise Untypable(
                        f"channel {e} returns {fmt_formula(to)}, needed "
                        f"{fmt_formula(expected)}")
                arg2 = self.strip(arg, frm, env, tasks)
                hole = self.fresh("h")
                self.hole_types[hole] = to
                order: list[str] = []
                for v in self.fv_order(arg2):
                    if v not in order:
                        order.append(v)
                ctx = [(v, self.lookup(v, env)) for v in order]
                tasks.append(_Task(hole, e, arg2, ctx, frm, to))
                return Var(hole)
            case Lambda(x, b):
                if not isinstance(expected, Lolli):
                    raise Untypable(f"lambda against {fmt_formula(expected)}")
                b2 = self.strip(b, expected.right, {**env, x: expected.left},
                                tasks)
                return Lambda(x, b2)
            case TensorIntro(l, r):
                if not isinstance(expected, Tensor):
                    raise Untypable(
                        f"tensor pair against {fmt_formula(expected)}")
                return TensorIntro(self.strip(l, expected.left, env, tasks),
                                   self.strip(r, expected.right, env, tasks))
            case Inl(b):
                if not isinstance(expected, Plus):
                    raise Untypable(f"inl against {fmt_formula(expected)}")
                return Inl(self.strip(b, expected.left, env, tasks))
            case Inr(b):
                if not isinstance(expected, Plus):
                    raise Untypable(f"inr against {fmt_formula(expected)}")
                return Inr(self.strip(b, expected.right, env, tasks))
            case App(_, _):
                head, args = _spine(t)
                if isinstance(head, Lambda):
                    raise NotInFragment(
                        "beta redex heads need a Cut this checker does not "
                        "search for")
                if isinstance(head, Chan):
                    head = self.strip(head, self.synth(head, env), env, tasks)
                if not isinstance(head, Var):
                    raise NotInFragment(
                        "application head must be a variable or a channel "
                        "application")
                return self.strip_spine(head, args, expected, env, tasks)
            case WithPair(_, _):
                if not isinstance(expected, With):
                    raise Untypable(
                        f"with pair against {fmt_formula(expected)}")
                return t
            case Match(s, x, l, y, r):
                sty = self.synth(s, env)
                if not isinstance(sty, Plus):
                    raise Untypable(
                        f"case scrutinee has type {fmt_formula(sty)}")
                s2 = self.strip(s, sty, env, tasks)
                return Match(s2, x, l, y, r)
            case LetPattern(s, p, b):
                sty = self.synth(s, env)
                s2 = self.strip(s, sty, env, tasks)
                env2, _ = _bind_pattern(p, sty, env)
                return LetPattern(s2, p, self.strip(b, expected, env2, tasks))
        raise Untypable(f"cannot type {t!r}")

    def strip_spine(self, head: Var, args: list[Term], expected: Formula,
                    env: dict[str, Formula], tasks: list[_Task]) -> Term:
        ty = self.lookup(head.name, env)
        out: Term = head
        for a in args:
            if not isinstance(ty, Lolli):
                raise Untypable(f"{head.name!r} applied too many times")
            out = App(out, self.strip(a, ty.left, env, tasks))
            ty = ty.right
        if ty != expected:
            raise Untypable(
                f"application yields {fmt_formula(ty)}, needed "
                f"{fmt_formula(expected)}")
        return out

    def synth(self, t: Term, env: dict[str, Formula]) -> Formula:
        match t:
            case Star():
                return Unit()
            case Var(x):
                return self.lookup(x, env)
            case Chan(e, _):
                return _chan_types(e, self.decls)[1]
            case TensorIntro(l, r):
                return Tensor(self.synth(l, env), self.synth(r, env))
            case App(_, _):
                head, args = _spine(t)
                ty = self.synth(head, env)
                for _ in args:
                    if not isinstance(ty, Lolli):
                        raise Untypable("over-applied head in scrutinee")
                    ty = ty.right
                return ty
        raise NotInFragment(
            "scrutinee must be built from variables, unit, channel "
            "applications and applications of those")

    def fv_order(self, t: Term) -> list[str]:
        """Free variables in first-occurrence order."""
        match t:
            case Star():
                return []
            case Var(x):
                return [x]
            case TensorIntro(l, r) | App(l, r) | WithPair(l, r):
                return self.fv_order(l) + self.fv_order(r)
            case Inl(b) | Inr(b) | Chan(_, b):
                return self.fv_order(b)
            case Lambda(x, b):
                return [v for v in self.fv_order(b) if v != x]
            case LetPattern(s, p, b):
                binds = set(pattern_binds(p))
                return self.fv_order(s) + [v for v in self.fv_order(b)
                                           if v not in binds]
            case Match(s, x, l, y, r):
                la = [v for v in self.fv_order(l) if v != x]
                ra = [v for v in self.fv_order(r) if v != y]
                return self.fv_order(s) + la + [v for v in ra if v not in la]
        raise TypeError(f"not a term: {t!r}")

    # -- building --------------------------------------------------------

    def build(self, t: Term, expected: Formula, env: dict[str, Formula],
              st: _State, holes: set[str]) -> None:
        """Extend st so its last component derives `t : expected`.

        `holes` names the pool components st still carries; a hole
        variable in `t` consumes its pool component.  When `holes` is
        empty (task arguments), hole variables are ordinary context
        variables.
        """
        match t:
            case Star():
                st.append(one_r())
            case Var(x) if x in holes:
                self.consume_hole(st, x, holes)
            case Var(x):
                st.append(ax(x, self.lookup(x, env)))
            case Lambda(x, b):
                assert isinstance(expected, Lolli)
                self.build(b, expected.right, {**env, x: expected.left},
                           st, holes)
                st.ie_to_back(x)
                st.deriv = lolli_r(st.deriv)
            case TensorIntro(l, r):
                assert isinstance(expected, Tensor)
                self.build(l, expected.left, env, st, holes)
                self.build(r, expected.right, env, st, holes)
                st.deriv = tensor_r(st.deriv)
                st.slots.pop()
            case Inl(b):
                assert isinstance(expected, Plus)
                self.build(b, expected.left, env, st, holes)
                st.deriv = plus_r0(st.deriv, expected.right)
            case Inr(b):
                assert isinstance(expected, Plus)
                self.build(b, expected.right, env, st, holes)
                st.deriv = plus_r1(st.deriv, expected.left)
            case App(_, _):
                head, args = _spine(t)
                assert isinstance(head, Var)
                self.build_spine(head.name, args, expected, env, st, holes)
            case WithPair(l, r):
                assert isinstance(expected, With)
                self.check_arm_channels(l)
                self.check_arm_channels(r)
                order: list[str] = []
                for v in self.fv_order(l):
                    if v not in order:
                        order.append(v)
                ctx = [(v, self.lookup(v, env)) for v in order]
                d1 = self.singleton(l, expected.left, ctx)
                d2 = self.singleton(r, expected.right, ctx)
                st.append(with_r(d1, d2))
            case Match(s, x, l, y, r):
                self.check_arm_channels(l)
                self.check_arm_channels(r)
                sty = self.synth(s, env)
                assert isinstance(sty, Plus)
                shared: list[str] = []
                for v in self.fv_order(l):
                    if v != x and v not in shared:
                        shared.append(v)
                ctx = [(v, self.lookup(v, env)) for v in shared]
                d1 = self.singleton(l, expected, ctx + [(x, sty.left)])
                d2 = self.singleton(r, expected, ctx + [(y, sty.right)])
                if isinstance(s, Var) and s.name not in holes:
                    st.append(plus_l(d1, d2, s.name))
                else:
                    z = self.fresh("z")
                    st.append(plus_l(d1, d2, z))
                    self.cut_scrutinee(s, sty, z, env, st, holes)
            case LetPattern(s, p, b):
                sty = self.synth(s, env)
                env2, last_vars = _bind_pattern(p, sty, env)
                self.build(b, expected, env2, st, holes)
                for v in last_vars:
                    st.ie_to_back(v)
                direct = isinstance(s, Var) and s.name not in holes
                z = s.name if direct else self.fresh("z")
                match p:
                    case PStar():
                        st.deriv = one_l(st.deriv, z)
                    case PTensor(_, _):
                        st.deriv = tensor_l(st.deriv, z)
                    case PPairLeft(_):
                        assert isinstance(sty, With)
                        st.deriv = with_l0(st.deriv, z, sty.right)
                    case PPairRight(_):
                        assert isinstance(sty, With)
                        st.deriv = with_l1(st.deriv, z, sty.left)
                if not direct:
                    self.cut_scrutinee(s, sty, z, env, st, holes)
            case _:
                raise NotInFragment(f"cannot build a derivation for {t!r}")

    def build_spine(self, head: str, args: list[Term], expected: Formula,
                    env: dict[str, Formula], st: _State,
                    holes: set[str]) -> None:
        ty = self.lookup(head, env)
        arg_types = []
        for _ in args:
            assert isinstance(ty, Lolli)
            arg_types.append(ty.left)
            ty = ty.right
        r = self.fresh("r")
        st.append(ax(r, expected))
        for i in range(len(args) - 1, -1, -1):
            self.build(args[i], arg_types[i], env, st, holes)
            st.swap(len(st.slots) - 2)
            f = head if i == 0 else self.fresh("g")
            st.deriv = lolli_l(st.deriv, f)
            st.slots.pop()
            if i > 0:
                st.ie_to_front(f)
        if head in holes:
            st.ie_to_front(head)
            self.cut_hole(st, head, holes)

    def check_arm_channels(self, t: Term) -> None:
        cnt = channels_of(t)
        for ch, n in cnt.items():
            if n != 1 or cnt.get(ch.dual(), 0) != 1:
                raise NotInFragment(
                    "channel pair crosses a with/case arm boundary")

    def consume_hole(self, st: _State, h: str, holes: set[str]) -> None:
        """The term is the bare hole: its pool component becomes the
        current component directly."""
        st.ee_to_last(st.slots.index(h))
        st.slots[-1] = None
        self.resolve_ctx_holes(st, holes)

    def cut_hole(self, st: _State, h: str, holes: set[str]) -> None:
        """Cut the pool producer of h into the last component, whose
        context must already start with h."""
        st.ee_to_second_last(st.slots.index(h))
        st.deriv = cut(st.deriv)
        st.slots.pop(-2)
        self.resolve_ctx_holes(st, holes)

    def resolve_ctx_holes(self, st: _State, holes: set[str]) -> None:
        while True:
            pending = [v for v, _ in st.last().ctx
                       if v in holes and v in st.slots]
            if not pending:
                return
            st.ie_to_front(pending[0])
            self.cut_hole(st, pending[0], holes)

    def cut_scrutinee(self, s: Term, sty: Formula, z: str,
                      env: dict[str, Formula], st: _State,
                      holes: set[str]) -> None:
        """The last component's context contains z; derive s and cut it
        in for z."""
        if isinstance(s, Var) and s.name in holes:
            st.ie_to_front(z)
            st.ee_to_second_last(st.slots.index(s.name))
            st.deriv = cut(st.deriv)
            st.slots.pop(-2)
            self.resolve_ctx_holes(st, holes)
            return
        self.build(s, sty, env, st, holes)
        st.swap(len(st.slots) - 2)
        st.slots.pop()
        st.ie_to_front(z)
        st.deriv = cut(st.deriv)
        self.resolve_ctx_holes(st, holes)

    # -- self-contained pieces -------------------------------------------

    def singleton(self, term: Term, goal_ty: Formula,
                  ctx: list[CtxEntry]) -> Derivation:
        goal = Hypersequent((Component(tuple(ctx), term, goal_ty),))
        return infer(goal, self.decls)

    def task_derivation(self, task: _Task) -> Derivation:
        env = dict(task.ctx)
        st = _State()
        self.build(task.arg, task.frm, env, st, set())
        assert len(st.slots) == 1
        st.ie_sort([v for v, _ in task.ctx])
        return st.deriv


def infer(goal: Hypersequent, decls: ChannelDecls | None = None) -> Derivation:
    """Derive `goal` in the syntax-directed fragment.

    Channel applications become holes whose arguments are derived
    separately, introduced pairwise by Sync, and cut back in.  Raises
    Untypable for definite type errors and NotInFragment when the goal
    would need a cut shape this algorithm does not search for.
    """
    decls = decls or {}
    inf = _Infer(decls)

    # linearity and channel accounting
    chan_count: dict[ChannelId, int] = {}
    for comp in goal.components:
        try:
            fv = free_variables(comp.term)
        except NonLinearSyntax as exc:
            raise Untypable(f"not linear: {exc}") from exc
        have = {v for v, _ in comp.ctx}
        if fv != have:
            raise Untypable(
                f"context mismatch: unused {sorted(have - fv)}, "
                f"unbound {sorted(fv - have)}")
        for ch, n in channels_of(comp.term).items():
            chan_count[ch] = chan_count.get(ch, 0) + n
    for ch, n in chan_count.items():
        if n != 1:
            raise Untypable(f"channel {ch} used {n} times")
        if chan_count.get(ch.dual(), 0) != 1:
            raise Untypable(f"channel {ch} has no matching {ch.dual()}")

    # pass 0: strip channel applications into holes and tasks
    tasks: list[_Task] = []
    skeletons: list[tuple[Term, Component]] = []
    for comp in goal.components:
        env = dict(comp.ctx)
        skeletons.append(
            (inf.strip(comp.term, comp.formula, env, tasks), comp))

    holes = {t.hole for t in tasks}
    by_base: dict[str, dict[bool, _Task]] = {}
    base_order: list[str] = []
    for task in tasks:
        if task.chan.base not in by_base:
            by_base[task.chan.base] = {}
            base_order.append(task.chan.base)
        by_base[task.chan.base][task.chan.co] = task

    # pool: derive every task argument, then Sync each pair
    st = _State()
    for base in base_order:
        plain = by_base[base].get(False)
        co = by_base[base].get(True)
        if plain is None or co is None:
            raise NotInFragment(
                "channel pair crosses a with/case arm boundary")
        for task in (plain, co):
            st.append(inf.task_derivation(task))
        st.deriv = sync(st.deriv, ChannelId(base, False))
        st.slots[-2] = plain.hole
        st.slots[-1] = co.hole

    # main skeletons, in goal order
    for skel, comp in skeletons:
        env = dict(comp.ctx)
        inf.build(skel, comp.formula, env, st, holes)

    assert st.deriv is not None
    assert all(s is None for s in st.slots), "pool not drained"
    assert len(st.slots) == len(goal.components)

    d = _sort_components(st.deriv, goal)
    bad = check_derivation(d)
    assert not bad, f"internal: produced an invalid derivation: {bad[:3]}"
    return d


def _sort_components(d: Derivation, goal: Hypersequent) -> Derivation:
    """EE/IE-plumb d's conclusion into the exact shape of goal."""
    n = len(goal.components)
    used = [False] * n
    perm: list[int] = []
    for c in d.conclusion.components:
        pick = None
        for j, g in enumerate(goal.components):
            if used[j]:
                continue
            if (frozenset(v for v, _ in c.ctx)
                    == frozenset(v for v, _ in g.ctx)
                    and c.formula == g.formula and alpha_eq(c.term, g.term)):
                pick = j
                break
        if pick is None:
            raise Untypable("derived components do not match the goal")
        used[pick] = True
        perm.append(pick)

    while True:
        swapped = False
        for i in range(n - 1):
            if perm[i] > perm[i + 1]:
                d = ee(d, i)
                perm[i], perm[i + 1] = perm[i + 1], perm[i]
                swapped = True
        if not swapped:
            break

    # rotate every component through the last slot, sorting its context
    want = list(goal.components)
    for _ in range(n):
        st = _State(deriv=d, slots=[None] * n)
        st.ie_sort([v for v, _ in want[-1].ctx])
        d = st.deriv
        if n > 1:
            for i in range(n - 1):
                d = ee(d, i)
            want = want[1:] + want[:1]
    return d


# --- split ---------------------------------------------------------------


L, R = 0, 1


def split(d: Derivation, boundary: int) -> tuple[Derivation, Derivation]:
    """Separate a derivation of O | O' into derivations of O and O'.

    `boundary` is the index of the first component of O'.  Raises
    NotChannelDisjoint when some channel pair has its halves on opposite
    sides of the boundary.
    """
    n = len(d.conclusion.components)
    if not 0 < boundary < n:
        raise ValueError("boundary must be strictly inside the hypersequent")
    left = d.conclusion.components[:boundary]
    right = d.conclusion.components[boundary:]
    lbases = {c.base for comp in left for c in channels_of(comp.term)}
    rbases = {c.base for comp in right for c in channels_of(comp.term)}
    for b in sorted(lbases & rbases):
        raise NotChannelDisjoint(f"channel pair {b!r} crosses the boundary")
    colors = [L] * boundary + [R] * (n - boundary)
    dl, dr = _split(d, colors)
    assert dl is not None and dr is not None
    return dl, dr


def _split(d: Derivation,
           colors: list[int]) -> tuple[Derivation | None, Derivation | None]:
    if len(set(colors)) == 1:
        return (d, None) if colors[0] == L else (None, d)

    def redo(side: int, parts, rebuild):
        dl, dr = parts
        return (rebuild(dl), dr) if side == L else (dl, rebuild(dr))

    rule = d.rule
    if rule == "Merge":
        k = len(d.premises[0].conclusion.components)
        l1, r1 = _split(d.premises[0], colors[:k])
        l2, r2 = _split(d.premises[1], colors[k:])

        def join(a, b):
            if a is None or b is None:
                return a if b is None else b
            return merge(a, b)

        return join(l1, l2), join(r1, r2)
    if rule == "EE":
        i = _ee_index(d)
        pcolors = list(colors)
        pcolors[i], pcolors[i + 1] = pcolors[i + 1], pcolors[i]
        parts = _split(d.premises[0], pcolors)
        if colors[i] == colors[i + 1]:
            side = colors[i]
            offset = sum(1 for c in pcolors[:i] if c == side)
            return redo(side, parts, lambda x: ee(x, offset))
        return parts
    if rule in ("IE", "1L", "TensorL", "LolliR", "WithL0", "WithL1",
                "PlusR0", "PlusR1"):
        parts = _split(d.premises[0], colors)
        return redo(colors[-1], parts, lambda x: _reapply_last(d, x))
    if rule in ("TensorR", "Cut", "LolliL"):
        parts = _split(d.premises[0], colors + [colors[-1]])
        return redo(colors[-1], parts, lambda x: _reapply_last(d, x))
    if rule == "Sync":
        if colors[-1] != colors[-2]:
            raise NotChannelDisjoint(
                f"Sync on {d.channel} straddles the boundary")
        parts = _split(d.premises[0], colors)
        chan = d.conclusion.components[-2].term.channel
        return redo(colors[-1], parts, lambda x: sync(x, chan))
    raise ValueError(f"cannot split across rule {rule!r}")


def _ee_index(d: Derivation) -> int:
    prem = d.premises[0].conclusion.components
    conc = d.conclusion.components
    for i in range(len(prem) - 1):
        if prem[i] != conc[i]:
            return i
    # No visible change: the exchanged components were equal, so any
    # adjacent equal pair is a consistent reading.
    for i in range(len(prem) - 1):
        if prem[i] == prem[i + 1]:
            return i
    return len(prem) - 2


def _reapply_last(d: Derivation, x: Derivation) -> Derivation:
    """Reapply d's rule, which acts on the last component(s), on top of x."""
    concl_last = d.conclusion.components[-1]
    match d.rule:
        case "IE":
            prem_ctx = d.premises[0].conclusion.components[-1].ctx
            pos = next(i for i in range(len(prem_ctx))
                       if prem_ctx[i] != concl_last.ctx[i])
            return ie(x, pos)
        case "1L":
            return one_l(x, concl_last.ctx[-1][0])
        case "TensorL":
            return tensor_l(x, concl_last.ctx[-1][0])
        case "LolliR":
            return lolli_r(x)
        case "WithL0":
            w = concl_last.ctx[-1][1]
            assert isinstance(w, With)
            return with_l0(x, concl_last.ctx[-1][0], w.right)
        case "WithL1":
            w = concl_last.ctx[-1][1]
            assert isinstance(w, With)
            return with_l1(x, concl_last.ctx[-1][0], w.left)
        case "PlusR0":
            assert isinstance(concl_last.formula, Plus)
            return plus_r0(x, concl_last.formula.right)
        case "PlusR1":
            assert isinstance(concl_last.formula, Plus)
            return plus_r1(x, concl_last.formula.left)
        case "TensorR":
            return tensor_r(x)
        case "Cut":
            return cut(x)
        case "LolliL":
            prod = d.premises[0].conclusion.components[-2]
            f = concl_last.ctx[len(prod.ctx)][0]
            return lolli_l(x, f)
    raise ValueError(d.rule)


# --- excluded middle -------------------------------------------------------


def excluded_middle_term(phi: Formula, base: str = "c") -> Derivation:
    """A derivation of  |- (c *) (x) (\\x. ~c x)  :  phi * (phi -o 1)."""
    d = merge(one_r(), ax("x", phi))
    d = sync(d, ChannelId(base, False))
    d = lolli_r(d)
    d = tensor_r(d)
    return d
