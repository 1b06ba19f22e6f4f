"""Terms, formulas and channel names for a linear lambda calculus.

Terms obey a linearity discipline: every variable is used exactly once,
with-pairs share their free variables between the two arms, and the two
arms of a case share everything except the bound variables.  The checks
live in `free_variables`, which doubles as the well-formedness judgment
for raw syntax.

Channel names come in mirror pairs: `c` and its co-channel `~c`.  They
are not binders; a channel application `c t` is just a term former and
the pairing discipline is enforced by the type checker and evaluator,
not here.  `channels_of` reports occurrences literally, including those
suspended under lambdas and with-pairs.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass


class NonLinearSyntax(Exception):
    """Raised when a term violates the linear variable discipline."""


# --- formulas ---------------------------------------------------------


class Formula:
    __slots__ = ()


@dataclass(frozen=True)
class Unit(Formula):
    __slots__ = ()


@dataclass(frozen=True)
class Atom(Formula):
    name: str


@dataclass(frozen=True)
class Tensor(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Lolli(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Plus(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class With(Formula):
    left: Formula
    right: Formula


# --- channels ---------------------------------------------------------


@dataclass(frozen=True)
class ChannelId:
    """A channel half.  `co` picks which half of the mirror pair."""

    base: str
    co: bool = False

    def dual(self) -> ChannelId:
        return ChannelId(self.base, not self.co)

    def __str__(self) -> str:
        return "~" + self.base if self.co else self.base


# --- patterns ---------------------------------------------------------


class Pattern:
    __slots__ = ()


@dataclass(frozen=True)
class PStar(Pattern):
    __slots__ = ()


@dataclass(frozen=True)
class PPairLeft(Pattern):
    name: str


@dataclass(frozen=True)
class PPairRight(Pattern):
    name: str


@dataclass(frozen=True)
class PTensor(Pattern):
    left: str
    right: str


def pattern_binds(p: Pattern) -> tuple[str, ...]:
    match p:
        case PStar():
            return ()
        case PPairLeft(x) | PPairRight(x):
            return (x,)
        case PTensor(x, y):
            return (x, y)
    raise TypeError(f"not a pattern: {p!r}")


# --- terms ------------------------------------------------------------


class Term:
    __slots__ = ()


@dataclass(frozen=True)
class Star(Term):
    __slots__ = ()


@dataclass(frozen=True)
class Var(Term):
    name: str


@dataclass(frozen=True)
class TensorIntro(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class App(Term):
    fun: Term
    arg: Term


@dataclass(frozen=True)
class WithPair(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class Inl(Term):
    body: Term


@dataclass(frozen=True)
class Inr(Term):
    body: Term


@dataclass(frozen=True)
class Lambda(Term):
    param: str
    body: Term


@dataclass(frozen=True)
class LetPattern(Term):
    scrutinee: Term
    pattern: Pattern
    body: Term


@dataclass(frozen=True)
class Match(Term):
    scrutinee: Term
    left_var: str
    left: Term
    right_var: str
    right: Term


@dataclass(frozen=True)
class Chan(Term):
    channel: ChannelId
    arg: Term


# A canonical form is a Term for which is_canonical holds; no separate
# class is needed because canonicity is a closure property, not a shape.
CanonicalForm = Term


# --- free variables and linearity --------------------------------------


def free_variables(t: Term) -> frozenset[str]:
    """Free variables of `t`, checking the linear discipline.

    Raises NonLinearSyntax if a variable would be duplicated or dropped:
    siblings of an application or tensor must not share variables, the
    arms of a with-pair must agree exactly, bound variables must occur
    in their scope, and case arms must agree outside their binders.
    """
    match t:
        case Star():
            return frozenset()
        case Var(x):
            return frozenset({x})
        case TensorIntro(l, r) | App(l, r):
            lv, rv = free_variables(l), free_variables(r)
            shared = lv & rv
            if shared:
                raise NonLinearSyntax(f"variables used twice: {sorted(shared)}")
            return lv | rv
        case WithPair(l, r):
            lv, rv = free_variables(l), free_variables(r)
            if lv != rv:
                raise NonLinearSyntax(
                    f"with-pair arms differ: {sorted(lv ^ rv)}")
            return lv
        case Inl(b) | Inr(b) | Chan(_, b):
            return free_variables(b)
        case Lambda(x, b):
            bv = free_variables(b)
            if x not in bv:
                raise NonLinearSyntax(f"unused binder {x!r}")
            return bv - {x}
        case LetPattern(s, p, b):
            binds = pattern_binds(p)
            if len(set(binds)) != len(binds):
                raise NonLinearSyntax(f"repeated pattern variable in {binds}")
            sv, bv = free_variables(s), free_variables(b)
            for x in binds:
                if x not in bv:
                    raise NonLinearSyntax(f"unused binder {x!r}")
            # a binder may shadow a scrutinee variable: the scrutinee
            # consumes the outer one, the pattern opens a fresh scope
            rest = bv - set(binds)
            shared = sv & rest
            if shared:
                raise NonLinearSyntax(f"variables used twice: {sorted(shared)}")
            return sv | rest
        case Match(s, x, l, y, r):
            sv = free_variables(s)
            lv, rv = free_variables(l), free_variables(r)
            if x not in lv:
                raise NonLinearSyntax(f"unused binder {x!r}")
            if y not in rv:
                raise NonLinearSyntax(f"unused binder {y!r}")
            lrest, rrest = lv - {x}, rv - {y}
            if lrest != rrest:
                raise NonLinearSyntax(
                    f"case arms differ: {sorted(lrest ^ rrest)}")
            if x in rrest or y in lrest:
                raise NonLinearSyntax("case binder leaks into the other arm")
            shared = sv & lrest
            if shared:
                raise NonLinearSyntax(f"variables used twice: {sorted(shared)}")
            return sv | lrest
    raise TypeError(f"not a term: {t!r}")


def free_vars_lax(t: Term) -> frozenset[str]:
    """Free variables without linearity checks.  Internal helper; total
    on every term shape, which substitution needs mid-rewrite."""
    match t:
        case Star():
            return frozenset()
        case Var(x):
            return frozenset({x})
        case TensorIntro(l, r) | App(l, r) | WithPair(l, r):
            return free_vars_lax(l) | free_vars_lax(r)
        case Inl(b) | Inr(b) | Chan(_, b):
            return free_vars_lax(b)
        case Lambda(x, b):
            return free_vars_lax(b) - {x}
        case LetPattern(s, p, b):
            return free_vars_lax(s) | (free_vars_lax(b) - set(pattern_binds(p)))
        case Match(s, x, l, y, r):
            return free_vars_lax(s) | (free_vars_lax(l) - {x}) | (free_vars_lax(r) - {y})
    raise TypeError(f"not a term: {t!r}")


# --- fresh names -------------------------------------------------------


def fresh_name(base: str, avoid: frozenset[str] | set[str]) -> str:
    """First name of the form base, base', base'', ... not in `avoid`."""
    name = base
    while name in avoid:
        name = name + "'"
    return name


# --- substitution -------------------------------------------------------


def substitute(t: Term, x: str, s: Term) -> Term:
    """Capture-avoiding substitution of `s` for the variable `x` in `t`.

    Total on all terms.  Callers in the linear fragment ensure x occurs
    exactly once in t, so no duplication of s can arise; the function
    itself only promises to rename binders of t away from the free
    variables of s.
    """
    sv = free_vars_lax(s)

    def go(t: Term) -> Term:
        match t:
            case Star():
                return t
            case Var(y):
                return s if y == x else t
            case TensorIntro(l, r):
                return TensorIntro(go(l), go(r))
            case App(f, a):
                return App(go(f), go(a))
            case WithPair(l, r):
                return WithPair(go(l), go(r))
            case Inl(b):
                return Inl(go(b))
            case Inr(b):
                return Inr(go(b))
            case Chan(c, b):
                return Chan(c, go(b))
            case Lambda(y, b):
                if y == x:
                    return t
                if y in sv and x in free_vars_lax(b):
                    y2 = fresh_name(y, sv | free_vars_lax(b) | {x})
                    b = substitute(b, y, Var(y2))
                    return Lambda(y2, go(b))
                return Lambda(y, go(b))
            case LetPattern(sc, p, b):
                sc2 = go(sc)
                binds = pattern_binds(p)
                if x in binds:
                    return LetPattern(sc2, p, b)
                if sv & set(binds) and x in free_vars_lax(b):
                    p, b = _rename_pattern(p, b, sv | free_vars_lax(b) | {x})
                return LetPattern(sc2, p, go(b))
            case Match(sc, y, l, z, r):
                sc2 = go(sc)
                if y != x:
                    if y in sv and x in free_vars_lax(l):
                        y2 = fresh_name(y, sv | free_vars_lax(l) | {x})
                        l = substitute(l, y, Var(y2))
                        y = y2
                    l = go(l)
                if z != x:
                    if z in sv and x in free_vars_lax(r):
                        z2 = fresh_name(z, sv | free_vars_lax(r) | {x})
                        r = substitute(r, z, Var(z2))
                        z = z2
                    r = go(r)
                return Match(sc2, y, l, z, r)
        raise TypeError(f"not a term: {t!r}")

    return go(t)


def _rename_pattern(p: Pattern, body: Term,
                    avoid: frozenset[str]) -> tuple[Pattern, Term]:
    """Rename the binders of a let pattern away from `avoid`."""
    match p:
        case PStar():
            return p, body
        case PPairLeft(x):
            x2 = fresh_name(x, avoid)
            return PPairLeft(x2), substitute(body, x, Var(x2))
        case PPairRight(x):
            x2 = fresh_name(x, avoid)
            return PPairRight(x2), substitute(body, x, Var(x2))
        case PTensor(x, y):
            x2 = fresh_name(x, avoid)
            body = substitute(body, x, Var(x2))
            y2 = fresh_name(y, avoid | {x2})
            body = substitute(body, y, Var(y2))
            return PTensor(x2, y2), body
    raise TypeError(f"not a pattern: {p!r}")


def substitute_many(t: Term, subs: dict[str, Term]) -> Term:
    """Simultaneous substitution, applied one variable at a time.

    Sound for the linear fragment because distinct substituted variables
    occur in disjoint positions and the replacements are closed against
    each other's names by freshening.
    """
    for x, s in subs.items():
        t = substitute(t, x, s)
    return t


# --- channel occurrences ------------------------------------------------


def channels_of(t: Term) -> Counter[ChannelId]:
    """Multiset of channel occurrences, counted literally.

    Occurrences under a lambda or inside with-pair arms count the same
    as exposed ones; suspension does not hide a channel half.
    """
    acc: Counter[ChannelId] = Counter()

    def go(t: Term) -> None:
        match t:
            case Star() | Var(_):
                pass
            case TensorIntro(l, r) | App(l, r) | WithPair(l, r):
                go(l)
                go(r)
            case Inl(b) | Inr(b) | Lambda(_, b):
                go(b)
            case Chan(c, b):
                acc[c] += 1
                go(b)
            case LetPattern(s, _, b):
                go(s)
                go(b)
            case Match(s, _, l, _, r):
                go(s)
                go(l)
                go(r)
            case _:
                raise TypeError(f"not a term: {t!r}")

    go(t)
    return acc


# --- canonical forms -----------------------------------------------------


def is_canonical(t: Term) -> bool:
    """Whether `t` is a result: star, lambda, with-pair, or a tensor or
    injection of further canonical forms.  Lambda and with-pair bodies
    are unevaluated, so any term is allowed beneath them."""
    match t:
        case Star() | Lambda(_, _) | WithPair(_, _):
            return True
        case TensorIntro(l, r):
            return is_canonical(l) and is_canonical(r)
        case Inl(b) | Inr(b):
            return is_canonical(b)
        case _:
            return False


# --- alpha equivalence ----------------------------------------------------


def alpha_eq(t: Term, u: Term) -> bool:
    """Structural equality up to renaming of bound variables.

    Free variables and channel names compare literally; `c` and `~c`
    are distinct.
    """

    def go(t: Term, u: Term, tmap: dict[str, str], umap: dict[str, str]) -> bool:
        match t, u:
            case Star(), Star():
                return True
            case Var(x), Var(y):
                return tmap.get(x, x) == umap.get(y, y)
            case TensorIntro(a, b), TensorIntro(c, d):
                return go(a, c, tmap, umap) and go(b, d, tmap, umap)
            case App(a, b), App(c, d):
                return go(a, c, tmap, umap) and go(b, d, tmap, umap)
            case WithPair(a, b), WithPair(c, d):
                return go(a, c, tmap, umap) and go(b, d, tmap, umap)
            case Inl(a), Inl(b):
                return go(a, b, tmap, umap)
            case Inr(a), Inr(b):
                return go(a, b, tmap, umap)
            case Chan(c, a), Chan(d, b):
                return c == d and go(a, b, tmap, umap)
            case Lambda(x, a), Lambda(y, b):
                n = f"#b{len(tmap)}"
                return go(a, b, {**tmap, x: n}, {**umap, y: n})
            case LetPattern(s1, p1, b1), LetPattern(s2, p2, b2):
                if type(p1) is not type(p2):
                    return False
                if not go(s1, s2, tmap, umap):
                    return False
                xs, ys = pattern_binds(p1), pattern_binds(p2)
                tm, um = dict(tmap), dict(umap)
                for i, (x, y) in enumerate(zip(xs, ys)):
                    n = f"#b{len(tmap)}.{i}"
                    tm[x] = n
                    um[y] = n
                return go(b1, b2, tm, um)
            case Match(s1, x1, l1, y1, r1), Match(s2, x2, l2, y2, r2):
                if not go(s1, s2, tmap, umap):
                    return False
                n = f"#b{len(tmap)}"
                return (go(l1, l2, {**tmap, x1: n}, {**umap, x2: n})
                        and go(r1, r2, {**tmap, y1: n}, {**umap, y2: n}))
            case _:
                return False

    return go(t, u, {}, {})


def term_key(t: Term) -> str:
    """A string key equal for alpha-equivalent terms.  Bound variables
    are numbered by binder depth; everything else prints literally."""

    parts: list[str] = []

    def go(t: Term, env: dict[str, str], depth: int) -> None:
        match t:
            case Star():
                parts.append("*")
            case Var(x):
                parts.append(env.get(x, x))
            case TensorIntro(l, r):
                parts.append("(tens ")
                go(l, env, depth)
                parts.append(" ")
                go(r, env, depth)
                parts.append(")")
            case App(f, a):
                parts.append("(app ")
                go(f, env, depth)
                parts.append(" ")
                go(a, env, depth)
                parts.append(")")
            case WithPair(l, r):
                parts.append("(with ")
                go(l, env, depth)
                parts.append(" ")
                go(r, env, depth)
                parts.append(")")
            case Inl(b):
                parts.append("(inl ")
                go(b, env, depth)
                parts.append(")")
            case Inr(b):
                parts.append("(inr ")
                go(b, env, depth)
                parts.append(")")
            case Chan(c, b):
                parts.append(f"({c} ")
                go(b, env, depth)
                parts.append(")")
            case Lambda(x, b):
                n = f"#{depth}"
                parts.append(f"(lam {n}. ")
                go(b, {**env, x: n}, depth + 1)
                parts.append(")")
            case LetPattern(s, p, b):
                xs = pattern_binds(p)
                names = [f"#{depth + i}" for i in range(len(xs))]
                tag = type(p).__name__
                parts.append(f"(let {tag} {' '.join(names)} = ")
                go(s, env, depth)
                parts.append(" in ")
                go(b, {**env, **dict(zip(xs, names))}, depth + len(xs))
                parts.append(")")
            case Match(s, x, l, y, r):
                n = f"#{depth}"
                parts.append("(case ")
                go(s, env, depth)
                parts.append(f" inl {n} -> ")
                go(l, {**env, x: n}, depth + 1)
                parts.append(f" inr {n} -> ")
                go(r, {**env, y: n}, depth + 1)
                parts.append(")")
            case _:
                raise TypeError(f"not a term: {t!r}")

    go(t, {}, 0)
    return "".join(parts)


# --- small constructors used all over the package -----------------------


def ign(scrutinees: list[Term] | tuple[Term, ...] | Term, body: Term) -> Term:
    """`ign t u` discards unit-valued t's in order:
    ign [t1, ..., tn] u = let * = t1 in ... let * = tn in u."""
    if isinstance(scrutinees, Term):
        scrutinees = [scrutinees]
    out = body
    for s in reversed(list(scrutinees)):
        out = LetPattern(s, PStar(), out)
    return out
