"""Evaluation of closed hypersequents: concurrent loci, channel rendezvous.

Each component of the input becomes a tree of loci, one locus per
judgment.  Compound terms spawn child loci for their subevaluations
(both halves of a pair at once, function and argument together, a
scrutinee before the destructuring body), so several redexes of one
component can be in flight at the same time, which is what the
rendezvous rule needs.  A channel application whose argument has
become a value parks.  A parked pair on dual halves fires when the
base appears nowhere else among the live judgments, and each side
then returns the other side's argument.

Lambdas, lazy pairs and the unit are values and are never entered.
Judgments that have produced a value stay visible: their values count
when scanning for stray occurrences of a base, matching the way
finished premises persist in an evaluation sequence.

With eval_subst on, a parked application whose dual half occurs
elsewhere in the same component is lifted out as a separate judgment
and replaced by a placeholder variable; the placeholder resolves when
the dual parks and the pair exchanges unconditionally.  This
implements the documented capture pattern (a co-channel applied
around a context containing the channel) and nothing stronger.  The
flag is experimental; type preservation is not asserted under it.

bigstep_oracle is an independent exhaustive search over the same
rules, used to cross-check evaluate at desk scale.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from amida.syntax import (
    App,
    Chan,
    ChannelId,
    Inl,
    Inr,
    Lambda,
    LetPattern,
    Match,
    PPairLeft,
    PPairRight,
    PStar,
    PTensor,
    Star,
    Term,
    TensorIntro,
    Var,
    WithPair,
    channels_of,
    free_vars_lax,
    is_canonical,
    substitute,
)


class FuelExhausted(Exception):
    """The step budget ran out before the machine settled."""


class StuckTerm(Exception):
    """An ill-typed redex (apply a non-lambda, destructure a non-pair)."""


class NoEnabledTransition(Exception):
    """step() was asked to advance a machine that cannot move."""


@dataclass(frozen=True)
class Values:
    values: tuple[Term, ...]
    trace: tuple[str, ...] = ()


@dataclass(frozen=True)
class Deadlock:
    wait_graph: tuple[tuple[int, ChannelId], ...]
    trace: tuple[str, ...] = ()


EvaluationResult = Values | Deadlock

_PROMISE = "#p"


def _bases(t: Term) -> set[str]:
    return {c.base for c in channels_of(t)}


def _halves(t: Term) -> set[ChannelId]:
    return set(channels_of(t))


def _is_axiom(t: Term) -> bool:
    """Terms that evaluate to themselves in a single leaf judgment.

    Pairs and injections are not included even when fully evaluated:
    they decompose into child judgments first, which is what makes a
    channel pair split across the two halves of a pair visible.
    """
    match t:
        case Star() | Lambda() | WithPair():
            return True
        case Var(name):
            return name.startswith(_PROMISE)
    return False


def _is_promise(t: Term) -> bool:
    """An unresolved rendezvous result standing in for a value."""
    return isinstance(t, Var) and t.name.startswith(_PROMISE)


def _split_pairs(terms: list[Term]) -> set[str]:
    """Bases whose two halves sit in different members of `terms`.

    Such a pair has been separated into sibling judgments, so the only
    way both sides can ever resolve is a rendezvous: the bases are
    recorded as obligations and checked once everything has a value.
    """
    hs = [_halves(t) for t in terms]
    out: set[str] = set()
    for i in range(len(hs)):
        for j in range(len(hs)):
            if i != j:
                out |= {h.base for h in hs[i] if h.dual() in hs[j]}
    return out


# --- continuation frames -----------------------------------------------
#
# A waiting locus holds one of these.  Terms stored inside a frame are
# pending judgments of the same rule instance (a destructuring body,
# the arms of a case), so they count as live channel occurrences.


@dataclass
class TensorJoin:
    pass


@dataclass
class InlJoin:
    pass


@dataclass
class InrJoin:
    pass


@dataclass
class ChanArg:
    chan: ChannelId


@dataclass
class AppJoin:
    pass


@dataclass
class IgnJoin:
    pass


@dataclass
class LetTensorJoin:
    left: str
    right: str
    body: Term


@dataclass
class ProjJoin:
    side: str  # 'left' or 'right'
    var: str
    body: Term
    projected: int | None = None  # child id once the projection spawns


@dataclass
class MatchJoin:
    left_var: str
    left: Term
    right_var: str
    right: Term


_Join = (TensorJoin | InlJoin | InrJoin | ChanArg | AppJoin | IgnJoin
         | LetTensorJoin | ProjJoin | MatchJoin)


@dataclass
class _Locus:
    id: int
    root: int
    parent: int | None
    kind: str  # 'run' | 'wait' | 'park' | 'done'
    control: Term | None = None
    join: _Join | None = None
    children: list[int] = field(default_factory=list)
    chan: ChannelId | None = None
    arg: Term | None = None
    value: Term | None = None
    lifted: bool = False
    promise: str | None = None


@dataclass(frozen=True)
class ComponentView:
    id: int
    status: str  # 'running' | 'blocked' | 'done'
    blocked_on: ChannelId | None
    value: Term | None
    holding: tuple[ChannelId, ...] = ()  # halves still present anywhere


@dataclass(frozen=True)
class MachineState:
    components: tuple[ComponentView, ...]
    rendezvous: tuple[tuple[ChannelId, int, Term], ...]
    steps: int
    waits: tuple[tuple[int, ChannelId], ...] = ()  # blocked positions, sorted


class Machine:
    """The stepping engine behind evaluate()."""

    def __init__(self, components, *, eval_subst: bool = False,
                 fuel: int = 100_000, seed: int = 0, trace: bool = False):
        self.eval_subst = eval_subst
        self.fuel = fuel
        self.tracing = trace
        self.trace: list[str] = []
        self.loci: dict[int, _Locus] = {}
        self.roots: list[int] = []
        self.next_id = 0
        self.next_promise = 0
        self.steps = 0
        self.required = _split_pairs(list(components))
        self.fired: set[str] = set()
        self.rng = random.Random(seed)
        for i, t in enumerate(components):
            lid = self._new(root=i, parent=None, kind="run", control=t)
            self.roots.append(lid)

    # -- plumbing

    def _new(self, **kw) -> int:
        lid = self.next_id
        self.next_id += 1
        self.loci[lid] = _Locus(id=lid, **kw)
        return lid

    def _tick(self) -> None:
        self.steps += 1
        if self.steps > self.fuel:
            raise FuelExhausted(f"no result after {self.fuel} steps")

    def _emit(self, root: int, rule: str, summary: str) -> None:
        if self.tracing:
            self.trace.append(f"{self.steps}\t{root}\t{rule}\t{summary}")

    def _spawn(self, parent: _Locus, terms: list[Term], join: _Join) -> None:
        self.required |= _split_pairs(terms)
        parent.kind = "wait"
        parent.control = None
        parent.join = join
        for t in terms:
            cid = self._new(root=parent.root, parent=parent.id,
                            kind="run", control=t)
            parent.children.append(cid)

    # -- one locus transition

    def _advance(self, loc: _Locus) -> None:
        t = loc.control
        self._tick()
        if _is_axiom(t):
            self._emit(loc.root, "value", _summ(t))
            self._finish(loc, t)
            return
        match t:
            case Var(name):
                raise StuckTerm(f"free variable {name!r}")
            case TensorIntro(a, b):
                self._emit(loc.root, "tensor", _summ(t))
                self._spawn(loc, [a, b], TensorJoin())
            case Inl(b):
                self._emit(loc.root, "inl", _summ(t))
                self._spawn(loc, [b], InlJoin())
            case Inr(b):
                self._emit(loc.root, "inr", _summ(t))
                self._spawn(loc, [b], InrJoin())
            case Chan(c, a):
                self._emit(loc.root, "chan-arg", _summ(t))
                self._spawn(loc, [a], ChanArg(c))
            case App(f, a):
                self._emit(loc.root, "app", _summ(t))
                self._spawn(loc, [f, a], AppJoin())
            case LetPattern(scrut, PStar(), body):
                self._emit(loc.root, "ign", _summ(t))
                self._spawn(loc, [scrut, body], IgnJoin())
            case LetPattern(scrut, PTensor(x, y), body):
                self._emit(loc.root, "let-tensor", _summ(t))
                self.required |= _split_pairs([scrut, body])
                self._spawn(loc, [scrut], LetTensorJoin(x, y, body))
            case LetPattern(scrut, PPairLeft(x), body):
                self._emit(loc.root, "proj-left", _summ(t))
                self.required |= _split_pairs([scrut, body])
                self._spawn(loc, [scrut], ProjJoin("left", x, body))
            case LetPattern(scrut, PPairRight(y), body):
                self._emit(loc.root, "proj-right", _summ(t))
                self.required |= _split_pairs([scrut, body])
                self._spawn(loc, [scrut], ProjJoin("right", y, body))
            case Match(scrut, lv, l, rv, r):
                self._emit(loc.root, "case", _summ(t))
                self._spawn(loc, [scrut], MatchJoin(lv, l, rv, r))
            case _:
                raise StuckTerm(f"cannot evaluate {_summ(t)}")

    # -- joins: a child finished, fold its value into the parent

    def _finish(self, loc: _Locus, value: Term) -> None:
        loc.kind = "done"
        loc.control = None
        loc.value = value
        if loc.parent is not None:
            self._notify(self.loci[loc.parent])

    def _child_values(self, loc: _Locus) -> list[Term] | None:
        vals = []
        for cid in loc.children:
            c = self.loci[cid]
            if c.kind != "done":
                return None
            vals.append(c.value)
        return vals

    def _notify(self, loc: _Locus) -> None:
        if loc.kind != "wait":
            return
        vals = self._child_values(loc)
        if vals is None:
            return
        join = loc.join
        match join:
            case TensorJoin():
                self._finish(loc, TensorIntro(vals[0], vals[1]))
            case InlJoin():
                self._finish(loc, Inl(vals[0]))
            case InrJoin():
                self._finish(loc, Inr(vals[0]))
            case ChanArg(c):
                loc.kind = "park"
                loc.chan = c
                loc.arg = vals[0]
            case AppJoin():
                fv, av = vals
                if _is_promise(fv):
                    return
                if not isinstance(fv, Lambda):
                    raise StuckTerm(f"applying a non-function {_summ(fv)}")
                loc.kind = "run"
                loc.join = None
                loc.children = []
                loc.control = substitute(fv.body, fv.param, av)
            case IgnJoin():
                if _is_promise(vals[0]):
                    return
                if vals[0] != Star():
                    raise StuckTerm("discarding a non-unit value")
                self._finish(loc, vals[1])
            case LetTensorJoin(x, y, body):
                v = vals[0]
                if _is_promise(v):
                    return
                if not isinstance(v, TensorIntro):
                    raise StuckTerm("splitting a non-pair value")
                loc.kind = "run"
                loc.join = None
                loc.children = []
                loc.control = substitute(
                    substitute(body, x, v.left), y, v.right)
            case ProjJoin(side, _, body, None):
                v = vals[0]
                if _is_promise(v):
                    return
                if not isinstance(v, WithPair):
                    raise StuckTerm("projecting from a non-pair value")
                picked = v.left if side == "left" else v.right
                self.required |= _split_pairs([picked, body])
                cid = self._new(root=loc.root, parent=loc.id,
                                kind="run", control=picked)
                loc.children.append(cid)
                join.projected = cid
            case ProjJoin(_, var, body, projected):
                loc.kind = "run"
                loc.join = None
                loc.children = []
                loc.control = substitute(body, var,
                                         self.loci[projected].value)
            case MatchJoin(lv, l, rv, r):
                if _is_promise(vals[0]):
                    return
                match vals[0]:
                    case Inl(inner):
                        self.required |= _split_pairs([vals[0], l])
                        next_term = substitute(l, lv, inner)
                    case Inr(inner):
                        self.required |= _split_pairs([vals[0], r])
                        next_term = substitute(r, rv, inner)
                    case _:
                        raise StuckTerm("matching on a non-injection")
                loc.kind = "run"
                loc.join = None
                loc.children = []
                loc.control = next_term

    # -- rendezvous

    def _contribution(self, loc: _Locus) -> set[str]:
        """Channel bases this locus keeps visible to side-condition scans."""
        out: set[str] = set()
        if loc.kind == "run":
            out |= _bases(loc.control)
        elif loc.kind == "done":
            out |= _bases(loc.value)
        elif loc.kind == "park":
            out.add(loc.chan.base)
            out |= _bases(loc.arg)
        match loc.join:
            case ChanArg(c) if loc.kind != "park":
                out.add(c.base)
            case LetTensorJoin(_, _, body):
                out |= _bases(body)
            case ProjJoin(_, _, body, _):
                out |= _bases(body)
            case MatchJoin(_, l, _, r):
                out |= _bases(l) | _bases(r)
        return out

    def _halves_of(self, loc: _Locus) -> set[ChannelId]:
        out: set[ChannelId] = set()
        for t in (loc.control, loc.arg, loc.value):
            if t is not None:
                out |= _halves(t)
        if loc.kind == "park":
            out.add(loc.chan)
        match loc.join:
            case ChanArg(c) if loc.kind != "park":
                out.add(c)
            case LetTensorJoin(_, _, body):
                out |= _halves(body)
            case ProjJoin(_, _, body, _):
                out |= _halves(body)
            case MatchJoin(_, l, _, r):
                out |= _halves(l) | _halves(r)
        return out

    def _fire_candidates(self) -> list[tuple[_Locus, _Locus]]:
        parked: dict[ChannelId, _Locus] = {}
        for loc in sorted(self.loci.values(), key=lambda l: l.id):
            if loc.kind == "park" and loc.chan not in parked:
                parked[loc.chan] = loc
        pairs = []
        for c in sorted(parked, key=lambda c: (c.base, c.co)):
            if not c.co and c.dual() in parked:
                pairs.append((parked[c], parked[c.dual()]))
        return pairs

    def _fire_legal(self, a: _Locus, b: _Locus) -> bool:
        base = a.chan.base
        if a.lifted or b.lifted:
            # the capture pattern exchanges within one component freely
            return a.root == b.root
        if base in _bases(a.arg) | _bases(b.arg):
            return False
        return not any(base in self._contribution(loc)
                       for loc in self.loci.values()
                       if loc.id not in (a.id, b.id))

    def _fire(self, a: _Locus, b: _Locus) -> None:
        self._tick()
        self.fired.add(a.chan.base)
        self._emit(a.root, "rendezvous", a.chan.base)
        for loc, result in ((a, b.arg), (b, a.arg)):
            loc.kind = "done"
            loc.chan = None
            loc.value = result
        a.arg = b.arg = None
        resolved = False
        for loc in (a, b):
            if loc.promise is not None:
                self._resolve(loc.promise, loc.value)
                resolved = True
        for loc in (a, b):
            if loc.parent is not None:
                self._notify(self.loci[loc.parent])
        if resolved:
            self._renotify()

    def _renotify(self) -> None:
        """Retry joins that stalled on a promise that may now be resolved."""
        for loc in list(self.loci.values()):
            if loc.kind == "wait" and loc.children:
                self._notify(loc)

    def _resolve(self, promise: str, value: Term) -> None:
        for loc in self.loci.values():
            if loc.control is not None:
                loc.control = substitute(loc.control, promise, value)
            if loc.arg is not None:
                loc.arg = substitute(loc.arg, promise, value)
            if loc.value is not None and loc.promise != promise:
                loc.value = substitute(loc.value, promise, value)
            match loc.join:
                case LetTensorJoin(_, _, body):
                    loc.join.body = substitute(body, promise, value)
                case ProjJoin(_, _, body, _):
                    loc.join.body = substitute(body, promise, value)
                case MatchJoin(_, l, _, r):
                    loc.join.left = substitute(l, promise, value)
                    loc.join.right = substitute(r, promise, value)

    # -- the capture pattern (eval_subst)

    def _lift_candidates(self) -> list[_Locus]:
        out = []
        for loc in sorted(self.loci.values(), key=lambda l: l.id):
            if loc.kind != "park" or loc.lifted:
                continue
            dual = loc.chan.dual()
            if any(other.id != loc.id and other.root == loc.root
                   and dual in self._halves_of(other)
                   for other in self.loci.values()):
                out.append(loc)
        return out

    def _lift(self, loc: _Locus) -> None:
        promise = f"{_PROMISE}{self.next_promise}"
        self.next_promise += 1
        self._emit(loc.root, "capture", f"{loc.chan} -> {promise}")
        self._new(root=loc.root, parent=None, kind="park",
                  chan=loc.chan, arg=loc.arg, lifted=True, promise=promise)
        loc.kind = "done"
        loc.chan = None
        loc.arg = None
        loc.value = Var(promise)
        if loc.parent is not None:
            self._notify(self.loci[loc.parent])

    # -- driving

    def _fire_all(self) -> bool:
        """Run every enabled rendezvous.  Keeps the table free of pairs."""
        any_fired = False
        progress = True
        while progress:
            progress = False
            for a, b in self._fire_candidates():
                if self._fire_legal(a, b):
                    self._fire(a, b)
                    any_fired = progress = True
                    break
        return any_fired

    def _leftmost_runnable(self, root_idx: int) -> _Locus:
        """First runnable locus in a left-to-right walk of the component.

        Children are visited in spawn order, which matches the premise
        order of the rules: function before argument, left before right.
        """
        stack = [self.loci[self.roots[root_idx]]]
        while stack:
            loc = stack.pop()
            if loc.kind == "run":
                return loc
            stack.extend(self.loci[c] for c in reversed(loc.children))
        raise AssertionError("no runnable locus in chosen component")

    def _transition(self, policy: int | None = None) -> None:
        if self._fire_all():
            return
        runnable = [l for l in self.loci.values() if l.kind == "run"]
        if runnable:
            rng = self.rng if policy is None else random.Random(policy)
            roots = sorted({l.root for l in runnable})
            pick = rng.choice(roots)
            loc = self._leftmost_runnable(pick)
            self._advance(loc)
            self._fire_all()
            return
        if self.eval_subst:
            lifts = self._lift_candidates()
            if lifts:
                self._tick()
                for loc in lifts:
                    self._lift(loc)
                self._fire_all()
                return
        raise NoEnabledTransition("all components blocked or done")

    def step(self, policy: int | None = None) -> MachineState:
        """One transition: a rendezvous, a locus advance, or a capture."""
        self._transition(policy)
        return self.state()

    def _waits(self) -> tuple[tuple[int, ChannelId], ...]:
        """Blocked positions: parks and pending applications.

        Sorted by component and channel, not by age, so the report does
        not depend on the schedule that led into the deadlock.
        """
        out = set()
        for loc in self.loci.values():
            if loc.kind == "park":
                out.add((loc.root, loc.chan))
            elif loc.kind == "wait" and isinstance(loc.join, ChanArg):
                out.add((loc.root, loc.join.chan))
        return tuple(sorted(out, key=lambda w: (w[0], w[1].base, w[1].co)))

    def state(self) -> MachineState:
        holding: dict[int, set[ChannelId]] = {i: set()
                                              for i in range(len(self.roots))}
        for loc in self.loci.values():
            holding[loc.root] |= self._halves_of(loc)
        comps = []
        for i, r in enumerate(self.roots):
            root = self.loci[r]
            held = tuple(sorted(holding[i], key=lambda c: (c.base, c.co)))
            if root.kind == "done":
                comps.append(ComponentView(i, "done", None, root.value, held))
                continue
            mine = [l for l in self.loci.values() if l.root == i]
            parked = [l for l in mine if l.kind == "park"]
            if parked and not any(l.kind == "run" for l in mine):
                comps.append(ComponentView(
                    i, "blocked", min(parked, key=lambda l: l.id).chan,
                    None, held))
            else:
                comps.append(ComponentView(i, "running", None, None, held))
        table = tuple((l.chan, l.root, l.arg)
                      for l in sorted(self.loci.values(), key=lambda l: l.id)
                      if l.kind == "park")
        return MachineState(tuple(comps), table, self.steps, self._waits())


def _summ(t: Term, limit: int = 48) -> str:
    from amida import parser
    s = parser.show_term(t)
    return s if len(s) <= limit else s[:limit - 3] + "..."


def step(m: Machine, policy: int | None = None) -> MachineState:
    return m.step(policy)


@dataclass(frozen=True)
class WaitGraph:
    """Why a machine is stuck: blocked positions and their dependencies."""

    blocked: tuple[tuple[int, ChannelId], ...]
    cycles: tuple[tuple[int, ...], ...]
    unmatched: tuple[ChannelId, ...]  # awaited halves that exist nowhere

    def __str__(self) -> str:
        lines = [f"component {i} blocked on {c}" for i, c in self.blocked]
        for c in self.unmatched:
            lines.append(f"channel {c.base}: {c.dual()} occurs nowhere")
        for cyc in self.cycles:
            lines.append(
                "cycle: " + " -> ".join(str(n) for n in cyc + (cyc[0],)))
        return "\n".join(lines)


def detect_deadlock(s: MachineState | Machine) -> WaitGraph:
    """Wait graph of a stuck machine: who waits on what, and why in vain."""
    if isinstance(s, Machine):
        s = s.state()
    holder: dict[ChannelId, int] = {}
    for comp in s.components:
        for h in comp.holding:
            holder.setdefault(h, comp.id)
    edges: dict[int, int] = {}
    unmatched = []
    for i, c in s.waits:
        dual = c.dual()
        if dual in holder:
            edges.setdefault(i, holder[dual])
        elif c not in unmatched:
            unmatched.append(c)
    cycles = []
    seen = set()
    for start in edges:
        path, cur = [start], edges.get(start)
        while cur is not None and cur not in path:
            path.append(cur)
            cur = edges.get(cur)
        if cur is not None:
            tail = tuple(path[path.index(cur):])
            key = frozenset(tail)
            if key not in seen:
                seen.add(key)
                cycles.append(tail)
    return WaitGraph(s.waits, tuple(cycles), tuple(unmatched))


def evaluate(components, *, eval_subst: bool = False, trace: bool = False,
             fuel: int = 100_000, seed: int = 0) -> EvaluationResult:
    """Run the components to values, or report how they deadlocked."""
    m = Machine(list(components), eval_subst=eval_subst, fuel=fuel,
                seed=seed, trace=trace)
    while True:
        try:
            m._transition()
        except NoEnabledTransition:
            break
    tr = tuple(m.trace)
    if not all(m.loci[r].kind == "done" for r in m.roots):
        return Deadlock(m._waits(), tr)
    values = tuple(m.loci[r].value for r in m.roots)
    unresolved = sorted({(l.root, l.chan) for l in m.loci.values()
                         if l.kind == "park" and l.lifted},
                        key=lambda w: (w[0], w[1].base, w[1].co))
    promised = any(x.startswith(_PROMISE)
                   for v in values for x in free_vars_lax(v))
    if unresolved or promised:
        return Deadlock(tuple(unresolved), tr)
    missing = sorted(m.required - m.fired)
    if missing:
        graph = set()
        for base in missing:
            for half in (ChannelId(base), ChannelId(base, True)):
                for i, v in enumerate(values):
                    if half in _halves(v):
                        graph.add((i, half))
                        break
        return Deadlock(tuple(sorted(
            graph, key=lambda w: (w[0], w[1].base, w[1].co))), tr)
    assert all(is_canonical(v) for v in values)
    return Values(values, tr)


# --- independent exhaustive oracle --------------------------------------
#
# A breadth-first search over judgment multisets.  Terms decompose into
# child judgments with explicit reconstruction nodes; channel
# applications whose argument has a value become offers; every order of
# legal rendezvous is explored.  Side conditions are read off the whole
# multiset, so persisted value judgments block fires exactly as the
# rules require.  Entry shapes:
#
#   ("pend", j, term)                      judgment not yet decomposed
#   ("ax", j, value)                       valued judgment (persists)
#   ("offer", j, half, arg_j, None)        channel application
#   ("lifted", j, half, arg_j, promise)    capture-lifted offer
#   ("node", j, recipe)                    rule instance being rebuilt


class _Dead(Exception):
    """This branch of the search cannot be completed."""


@dataclass(frozen=True)
class _Cfg:
    entries: tuple
    roots: tuple[int, ...]
    origin: tuple[int, ...]  # judgment id -> component index
    required: frozenset
    fired: frozenset
    next_j: int


def _entry_stored_terms(e) -> list[Term]:
    if e[0] in ("pend", "ax"):
        return [e[2]]
    if e[0] == "node":
        rec = e[2]
        if rec[0] in ("letT", "proj"):
            return [rec[4]]
        if rec[0] == "case":
            return [rec[3], rec[5]]
    return []


def _entry_halves(e) -> set[ChannelId]:
    out: set[ChannelId] = set()
    for t in _entry_stored_terms(e):
        out |= _halves(t)
    if e[0] in ("offer", "lifted"):
        out.add(e[2])
    return out


def _subst_entry(e, promise: str, v: Term):
    match e[0]:
        case "pend" | "ax":
            return (e[0], e[1], substitute(e[2], promise, v))
        case "node":
            rec = e[2]
            if rec[0] == "letT":
                rec = rec[:4] + (substitute(rec[4], promise, v),)
            elif rec[0] == "proj":
                rec = rec[:4] + (substitute(rec[4], promise, v), rec[5])
            elif rec[0] == "case":
                rec = (rec[0], rec[1], rec[2],
                       substitute(rec[3], promise, v), rec[4],
                       substitute(rec[5], promise, v))
            return ("node", e[1], rec)
    return e


class _Oracle:
    def __init__(self, components, fuel, eval_subst):
        self.fuel = fuel
        self.eval_subst = eval_subst
        self.results: set[tuple] = set()
        n = len(components)
        self.start = _Cfg(
            entries=tuple(("pend", j, t) for j, t in enumerate(components)),
            roots=tuple(range(n)),
            origin=tuple(range(n)),
            required=frozenset(_split_pairs(list(components))),
            fired=frozenset(),
            next_j=n,
        )

    def run(self) -> set[tuple]:
        try:
            start = self._saturate(self.start)
        except _Dead:
            return set()
        seen = {start}
        frontier = [start]
        expanded = 0
        while frontier:
            expanded += 1
            if expanded > self.fuel:
                raise FuelExhausted("oracle budget exceeded")
            cfg = frontier.pop()
            nexts = self._fires(cfg)
            if not nexts and self.eval_subst:
                nexts = self._lifts(cfg)
            if not nexts:
                self._harvest(cfg)
                continue
            for nxt in nexts:
                try:
                    nxt = self._saturate(nxt)
                except _Dead:
                    continue
                if nxt not in seen:
                    seen.add(nxt)
                    frontier.append(nxt)
        return self.results

    # deterministic decomposition and reconstruction, run to a fixed point
    def _saturate(self, cfg: _Cfg) -> _Cfg:
        entries = {e[1]: e for e in cfg.entries}
        origin = list(cfg.origin)
        required = set(cfg.required)
        counter = [cfg.next_j]

        def child(term: Term, root: int) -> int:
            cid = counter[0]
            counter[0] += 1
            entries[cid] = ("pend", cid, term)
            origin.append(root)
            return cid

        def decompose(j: int, t: Term) -> None:
            root = origin[j]
            match t:
                case TensorIntro(a, b):
                    required.update(_split_pairs([a, b]))
                    entries[j] = ("node", j,
                                  ("tensor", child(a, root), child(b, root)))
                case Inl(b):
                    entries[j] = ("node", j, ("inl", child(b, root)))
                case Inr(b):
                    entries[j] = ("node", j, ("inr", child(b, root)))
                case Chan(c, a):
                    entries[j] = ("offer", j, c, child(a, root), None)
                case App(f, a):
                    required.update(_split_pairs([f, a]))
                    entries[j] = ("node", j,
                                  ("app", child(f, root), child(a, root)))
                case LetPattern(s, PStar(), b):
                    required.update(_split_pairs([s, b]))
                    entries[j] = ("node", j,
                                  ("ign", child(s, root), child(b, root)))
                case LetPattern(s, PTensor(x, y), b):
                    required.update(_split_pairs([s, b]))
                    entries[j] = ("node", j,
                                  ("letT", child(s, root), x, y, b))
                case LetPattern(s, PPairLeft(x), b):
                    required.update(_split_pairs([s, b]))
                    entries[j] = ("node", j,
                                  ("proj", child(s, root), "left", x, b,
                                   None))
                case LetPattern(s, PPairRight(y), b):
                    required.update(_split_pairs([s, b]))
                    entries[j] = ("node", j,
                                  ("proj", child(s, root), "right", y, b,
                                   None))
                case Match(s, lv, l, rv, r):
                    entries[j] = ("node", j,
                                  ("case", child(s, root), lv, l, rv, r))
                case _:
                    raise _Dead

        def val(cid: int) -> Term | None:
            e = entries.get(cid)
            return e[2] if e is not None and e[0] == "ax" else None

        def reconstruct(j: int, rec) -> bool:
            root = origin[j]
            match rec:
                case ("tensor", a, b):
                    va, vb = val(a), val(b)
                    if va is not None and vb is not None:
                        entries[j] = ("ax", j, TensorIntro(va, vb))
                        return True
                case ("inl", a):
                    if (va := val(a)) is not None:
                        entries[j] = ("ax", j, Inl(va))
                        return True
                case ("inr", a):
                    if (va := val(a)) is not None:
                        entries[j] = ("ax", j, Inr(va))
                        return True
                case ("app", f, a):
                    vf, va = val(f), val(a)
                    if vf is not None and va is not None:
                        if _is_promise(vf):
                            return False
                        if not isinstance(vf, Lambda):
                            raise _Dead
                        entries[j] = ("pend", j,
                                      substitute(vf.body, vf.param, va))
                        return True
                case ("ign", s, b):
                    vs, vb = val(s), val(b)
                    if vs is not None and vb is not None:
                        if _is_promise(vs):
                            return False
                        if vs != Star():
                            raise _Dead
                        entries[j] = ("ax", j, vb)
                        return True
                case ("letT", s, x, y, b):
                    if (vs := val(s)) is not None:
                        if _is_promise(vs):
                            return False
                        if not isinstance(vs, TensorIntro):
                            raise _Dead
                        entries[j] = ("pend", j, substitute(
                            substitute(b, x, vs.left), y, vs.right))
                        return True
                case ("proj", s, side, var, b, None):
                    if (vs := val(s)) is not None:
                        if _is_promise(vs):
                            return False
                        if not isinstance(vs, WithPair):
                            raise _Dead
                        chosen = vs.left if side == "left" else vs.right
                        required.update(_split_pairs([chosen, b]))
                        entries[j] = ("node", j,
                                      ("proj", s, side, var, b,
                                       child(chosen, root)))
                        return True
                case ("proj", _, _, var, b, picked):
                    if (vp := val(picked)) is not None:
                        entries[j] = ("pend", j, substitute(b, var, vp))
                        return True
                case ("case", s, lv, l, rv, r):
                    if (vs := val(s)) is not None:
                        if _is_promise(vs):
                            return False
                        match vs:
                            case Inl(inner):
                                required.update(_split_pairs([vs, l]))
                                entries[j] = ("pend", j,
                                              substitute(l, lv, inner))
                            case Inr(inner):
                                required.update(_split_pairs([vs, r]))
                                entries[j] = ("pend", j,
                                              substitute(r, rv, inner))
                            case _:
                                raise _Dead
                        return True
            return False

        changed = True
        while changed:
            changed = False
            for j, e in list(entries.items()):
                if e[0] == "pend":
                    if _is_axiom(e[2]):
                        entries[j] = ("ax", j, e[2])
                    else:
                        decompose(j, e[2])
                    changed = True
                elif e[0] == "node":
                    changed = reconstruct(j, e[2]) or changed
        return _Cfg(tuple(sorted(entries.values(), key=lambda e: e[1])),
                    cfg.roots, tuple(origin), frozenset(required),
                    cfg.fired, counter[0])

    def _arg_value(self, entries, e) -> Term | None:
        arg = entries.get(e[3])
        return arg[2] if arg is not None and arg[0] == "ax" else None

    def _fires(self, cfg: _Cfg) -> list[_Cfg]:
        entries = {e[1]: e for e in cfg.entries}
        offers = [e for e in cfg.entries if e[0] in ("offer", "lifted")]
        out = []
        for e1 in offers:
            if e1[2].co:
                continue
            for e2 in offers:
                if e2[2] == e1[2].dual():
                    nxt = self._try_fire(cfg, entries, e1, e2)
                    if nxt is not None:
                        out.append(nxt)
        return out

    def _try_fire(self, cfg, entries, e1, e2) -> _Cfg | None:
        base = e1[2].base
        v1 = self._arg_value(entries, e1)
        v2 = self._arg_value(entries, e2)
        if v1 is None or v2 is None:
            return None
        lifted = e1[0] == "lifted" or e2[0] == "lifted"
        if lifted:
            if cfg.origin[e1[1]] != cfg.origin[e2[1]]:
                return None
        else:
            if base in _bases(v1) | _bases(v2):
                return None
            skip = {e1[1], e2[1], e1[3], e2[3]}
            for e in cfg.entries:
                if e[1] in skip:
                    continue
                if any(h.base == base for h in _entry_halves(e)):
                    return None
        new = dict(entries)
        new[e1[1]] = ("ax", e1[1], v2)
        new[e2[1]] = ("ax", e2[1], v1)
        entries_t = tuple(sorted(new.values(), key=lambda e: e[1]))
        for e, v in ((e1, v2), (e2, v1)):
            if e[0] == "lifted":
                entries_t = tuple(_subst_entry(x, e[4], v)
                                  for x in entries_t)
        return _Cfg(entries_t, cfg.roots, cfg.origin, cfg.required,
                    cfg.fired | {base}, cfg.next_j)

    def _lifts(self, cfg: _Cfg) -> list[_Cfg]:
        entries = {e[1]: e for e in cfg.entries}
        halves_by_root: dict[int, set[ChannelId]] = {}
        for e in cfg.entries:
            r = cfg.origin[e[1]]
            halves_by_root.setdefault(r, set()).update(_entry_halves(e))
        out = []
        for e in cfg.entries:
            if e[0] != "offer" or self._arg_value(entries, e) is None:
                continue
            root = cfg.origin[e[1]]
            if e[2].dual() not in halves_by_root.get(root, set()):
                continue
            promise = f"{_PROMISE}o{e[1]}"
            new = dict(entries)
            new[e[1]] = ("ax", e[1], Var(promise))
            side = cfg.next_j
            new[side] = ("lifted", side, e[2], e[3], promise)
            out.append(_Cfg(
                tuple(sorted(new.values(), key=lambda x: x[1])),
                cfg.roots, cfg.origin + (root,), cfg.required,
                cfg.fired, cfg.next_j + 1))
        return out

    def _harvest(self, cfg: _Cfg) -> None:
        if not cfg.required <= cfg.fired:
            return
        if any(e[0] != "ax" for e in cfg.entries):
            return
        entries = {e[1]: e for e in cfg.entries}
        values = []
        for r in cfg.roots:
            v = entries[r][2]
            if any(x.startswith(_PROMISE) for x in free_vars_lax(v)):
                return
            values.append(v)
        self.results.add(tuple(values))


def bigstep_oracle(components, fuel: int = 50_000,
                   eval_subst: bool = False) -> set[tuple]:
    """All derivable result tuples for the components, by exhaustive search.

    Desk scale only.  By determinacy the returned set has at most one
    element; an empty set means no evaluation exists.
    """
    return _Oracle(list(components), fuel, eval_subst).run()
