"""Polarized proof structures for the multiplicative fragment.

A formula over atoms, 1, tensor and lolli translates into a polarized
tree whose internal nodes are positive or negative connectives.  A net
decorates one or more such trees with axiom edges between atom leaves,
branch edges anchoring each bot leaf, and amida edges that splice two
up-edges so that paths cross without relabeling.  Correctness is a
path condition on the resulting directed graph; derivations translate
into nets, with each channel synchronization becoming one amida edge;
a normalization pass pushes amida edges up to just below the axiom
level, where they read as a lottery over the leaf wires.

An independent brute-force sequent prover for the same fragment is
included so provability and net existence can be compared.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from itertools import permutations, product

from .syntax import Atom, Formula, Lolli, Plus, Tensor, Unit, With
from .typecheck import Derivation


class NotMultiplicative(Exception):
    """The formula or derivation uses an additive connective."""


class NotCorrect(Exception):
    """The net fails the correctness conditions."""


class NotLayered(Exception):
    """The net's amida edges are not all directly below leaf level."""


class SearchBudgetExceeded(Exception):
    """Proof search gave up before exhausting the space."""


# --- polarized trees -------------------------------------------------------
#
# Labels.  A trailing "+" marks a positive node, "-" a negative one.
# Children are stored in translation order: "parr+" is (negative,
# positive) with the negative child dashed, "tensor-" is (positive,
# negative), and the homogeneous labels keep the formula's own order.

_POSITIVE = {"tensor+", "parr+", "atom+", "one+"}
_NEGATIVE = {"tensor-", "parr-", "atom-", "bot-"}
_LEAVES = {"atom+", "atom-", "one+", "bot-"}

# Mirror of each label under flipping the translation polarity.
_FLIP = {
    "tensor+": "parr-", "parr-": "tensor+",
    "parr+": "tensor-", "tensor-": "parr+",
    "atom+": "atom-", "atom-": "atom+",
    "one+": "bot-", "bot-": "one+",
}


@dataclass(frozen=True)
class PNode:
    id: int
    label: str
    atom: str | None = None
    children: tuple[int, ...] = ()
    dashed: int | None = None


@dataclass(frozen=True)
class PolarizedTree:
    """A forest of polarized nodes; ids are dense indices into nodes."""

    nodes: tuple[PNode, ...]
    roots: tuple[int, ...]


def _positive(label: str) -> bool:
    return label in _POSITIVE


class _Build:
    """Accumulates nodes and decorations while a net is assembled."""

    def __init__(self) -> None:
        self.nodes: list[PNode] = []
        self.axioms: list[tuple[int, int]] = []
        self.bots: list[tuple[int, int]] = []
        self.amida: list[tuple[int, int]] = []
        self.cuts: list[tuple[int, int]] = []

    def add(self, label: str, atom: str | None = None,
            children: tuple[int, ...] = (), dashed: int | None = None) -> int:
        i = len(self.nodes)
        self.nodes.append(PNode(i, label, atom, children, dashed))
        return i


def _polarize_into(b: _Build, phi: Formula, positive: bool) -> int:
    match phi:
        case Atom(name):
            return b.add("atom+" if positive else "atom-", atom=name)
        case Unit():
            return b.add("one+" if positive else "bot-")
        case Lolli(a, c):
            if positive:
                left = _polarize_into(b, a, False)
                right = _polarize_into(b, c, True)
                return b.add("parr+", children=(left, right), dashed=left)
            left = _polarize_into(b, a, True)
            right = _polarize_into(b, c, False)
            return b.add("tensor-", children=(left, right))
        case Tensor(a, c):
            left = _polarize_into(b, a, positive)
            right = _polarize_into(b, c, positive)
            label = "tensor+" if positive else "parr-"
            return b.add(label, children=(left, right))
        case Plus(_, _) | With(_, _):
            raise NotMultiplicative(f"additive connective in {phi!r}")
    raise NotMultiplicative(f"not a formula: {phi!r}")


def polarize(phi: Formula, positive: bool = True) -> PolarizedTree:
    """Translate a tensor/lolli/unit formula into its polarized tree."""
    b = _Build()
    root = _polarize_into(b, phi, positive)
    return PolarizedTree(tuple(b.nodes), (root,))


def fmt_tree(tree: PolarizedTree) -> str:
    """Render a forest; the dashed child of each parr+ is prefixed ~."""
    nodes = tree.nodes

    def go(i: int, dashed: bool) -> str:
        n = nodes[i]
        mark = "~" if dashed else ""
        if n.label in ("atom+", "atom-"):
            return f"{mark}{n.atom}{n.label[-1]}"
        if n.label == "one+":
            return f"{mark}1+"
        if n.label == "bot-":
            return f"{mark}bot-"
        a, c = n.children
        inner = f"{go(a, n.dashed == a)} {n.label} {go(c, n.dashed == c)}"
        return f"{mark}({inner})"

    return " | ".join(go(r, False) for r in tree.roots)


# --- nets ------------------------------------------------------------------
#
# Every positive node i has an up-edge, identified by i, running from
# its parent (or from an open stem if i is a root) up to i.  Negative
# non-dashed children contribute down-edges toward their parent.  Amida
# entries are ordered (edge, edge) pairs; the pair appended last sits
# lowest, and within a self-pair the second stub sits below the first.


@dataclass(frozen=True)
class Net:
    tree: PolarizedTree
    axioms: tuple[tuple[int, int], ...] = ()
    bots: tuple[tuple[int, int], ...] = ()
    amida: tuple[tuple[int, int], ...] = ()
    cuts: tuple[tuple[int, int], ...] = ()


@dataclass(frozen=True)
class Violation:
    condition: int
    witness: str


def _parent_map(tree: PolarizedTree) -> dict[int, tuple[int, bool]]:
    """child id -> (parent id, is dashed)."""
    out: dict[int, tuple[int, bool]] = {}
    for n in tree.nodes:
        for c in n.children:
            out[c] = (n.id, n.dashed == c)
    return out


def _mirror_shapes(nodes: tuple[PNode, ...], a: int, b: int) -> bool:
    na, nb = nodes[a], nodes[b]
    if _FLIP[na.label] != nb.label or na.atom != nb.atom:
        return False
    if len(na.children) != len(nb.children):
        return False
    return all(_mirror_shapes(nodes, x, y)
               for x, y in zip(na.children, nb.children))


def _validate(net: Net) -> None:
    tree = net.tree
    nodes = tree.nodes
    ids = range(len(nodes))
    if any(nodes[i].id != i for i in ids):
        raise ValueError("node ids must be dense indices")
    parents = _parent_map(tree)
    for n in nodes:
        if n.label not in _POSITIVE | _NEGATIVE:
            raise ValueError(f"unknown label {n.label!r}")
        if (n.atom is not None) != (n.label in ("atom+", "atom-")):
            raise ValueError(f"atom name mismatch on node {n.id}")
        if n.label in _LEAVES:
            if n.children:
                raise ValueError(f"leaf {n.id} has children")
            continue
        if len(n.children) != 2 or any(c not in ids for c in n.children):
            raise ValueError(f"node {n.id} needs two valid children")
        kinds = tuple(_positive(nodes[c].label) for c in n.children)
        want = {"tensor+": (True, True), "parr-": (False, False),
                "parr+": (False, True), "tensor-": (True, False)}[n.label]
        if kinds != want:
            raise ValueError(f"child polarities of node {n.id} are off")
        if n.label == "parr+":
            if n.dashed != n.children[0]:
                raise ValueError(f"parr+ {n.id} must dash its first child")
        elif n.dashed is not None:
            raise ValueError(f"node {n.id} cannot have a dashed child")
    seen: set[int] = set()
    hanging = [p for pair in net.cuts for p in pair]
    for r in list(tree.roots) + hanging:
        if r in parents:
            raise ValueError(f"root {r} has a parent")
        stack = [r]
        while stack:
            i = stack.pop()
            if i in seen:
                raise ValueError(f"node {i} is shared or revisited")
            seen.add(i)
            stack.extend(nodes[i].children)
    if seen != set(ids):
        raise ValueError("unreachable nodes present")
    for pos, neg in net.cuts:
        if not _positive(nodes[pos].label) or _positive(nodes[neg].label):
            raise ValueError("cut pair must be (positive, negative)")
        if not _mirror_shapes(nodes, pos, neg):
            raise ValueError("cut pair trees are not dual")
    for a, b in net.axioms:
        if nodes[a].label != "atom+" or nodes[b].label != "atom-":
            raise ValueError(f"axiom edge ({a}, {b}) must join atom+ to atom-")
    for bot, target in net.bots:
        if nodes[bot].label != "bot-" or target not in ids:
            raise ValueError(f"bad bot branch ({bot}, {target})")
    for e0, e1 in net.amida:
        for e in (e0, e1):
            if e not in ids or not _positive(nodes[e].label):
                raise ValueError(f"amida stub {e} is not an up-edge")


# Traversal states.  ("n", i) is presence at node i; ("e", e, k) is on
# up-edge e just above its k-th stub counted from the bottom.


def _stubs(net: Net) -> dict[int, list[tuple[int, int]]]:
    """Per-edge amida stubs, ordered bottom to top."""
    att: dict[int, list[tuple[int, int]]] = {}
    for k in range(len(net.amida) - 1, -1, -1):
        pair = net.amida[k]
        for side in (1, 0):
            att.setdefault(pair[side], []).append((k, side))
    return att


def _successors(net: Net) -> dict[tuple, tuple[tuple, ...]]:
    nodes = net.tree.nodes
    parents = _parent_map(net.tree)
    att = _stubs(net)
    axiom_of = {a: b for a, b in net.axioms}
    branch_of = {b: t for b, t in net.bots}
    enter_from = {neg: pos for pos, neg in net.cuts}

    def into_edge(e: int) -> tuple:
        return ("e", e, 0)

    succ: dict[tuple, tuple[tuple, ...]] = {}
    for n in nodes:
        out: list[tuple] = []
        for c in n.children:
            if _positive(nodes[c].label) and n.dashed != c:
                out.append(into_edge(c))
        if not _positive(n.label):
            link = parents.get(n.id)
            if link is not None and not link[1]:
                out.append(("n", link[0]))
        if n.label == "atom+" and n.id in axiom_of:
            out.append(("n", axiom_of[n.id]))
        if n.label == "bot-" and n.id in branch_of:
            out.append(("n", branch_of[n.id]))
        if n.id in enter_from:
            out.append(into_edge(enter_from[n.id]))
        succ[("n", n.id)] = tuple(out)
    for e in (i for i in range(len(nodes)) if _positive(nodes[i].label)):
        stubs = att.get(e, [])
        for k in range(len(stubs) + 1):
            if k < len(stubs):
                rung, side = stubs[k]
                other = net.amida[rung][1 - side]
                j = att[other].index((rung, 1 - side))
                nxt: tuple = ("e", other, j + 1)
            else:
                nxt = ("n", e)
            succ[("e", e, k)] = (nxt,)
    return succ


def _starts(net: Net) -> list[tuple]:
    nodes = net.tree.nodes
    return [("e", r, 0) for r in net.tree.roots
            if _positive(nodes[r].label)]


def _fmt_state(net: Net, state: tuple) -> str:
    nodes = net.tree.nodes
    if state[0] == "n":
        n = nodes[state[1]]
        tag = n.atom if n.atom else n.label
        return f"{tag}#{n.id}"
    return f"edge>{state[1]}@{state[2]}"


def _find_cycle(succ: dict[tuple, tuple[tuple, ...]]) -> list[tuple] | None:
    color: dict[tuple, int] = {}
    stack_path: list[tuple] = []

    def visit(root: tuple) -> list[tuple] | None:
        stack = [(root, iter(succ.get(root, ())))]
        color[root] = 1
        stack_path.append(root)
        while stack:
            state, it = stack[-1]
            advanced = False
            for nxt in it:
                c = color.get(nxt, 0)
                if c == 1:
                    return stack_path[stack_path.index(nxt):] + [nxt]
                if c == 0:
                    color[nxt] = 1
                    stack_path.append(nxt)
                    stack.append((nxt, iter(succ.get(nxt, ()))))
                    advanced = True
                    break
            if not advanced:
                color[state] = 2
                stack_path.pop()
                stack.pop()
        return None

    for s in list(succ):
        if color.get(s, 0) == 0:
            found = visit(s)
            if found is not None:
                return found
    return None


def _reach(succ: dict, starts: list[tuple],
           avoid: tuple | None = None) -> dict[tuple, tuple | None]:
    """BFS reachability; returns predecessor links for path recovery."""
    pred: dict[tuple, tuple | None] = {}
    queue = [s for s in starts if s != avoid]
    for s in queue:
        pred[s] = None
    while queue:
        nxt_queue: list[tuple] = []
        for s in queue:
            for t in succ.get(s, ()):
                if t == avoid or t in pred:
                    continue
                pred[t] = s
                nxt_queue.append(t)
        queue = nxt_queue
    return pred


def check_correct(net: Net) -> tuple[Violation, ...]:
    """Return the correctness violations of a well-formed net.

    An empty result means the net is correct: (1) atom leaves are
    perfectly matched by axiom edges and every bot leaf is anchored,
    (2) the rewired graph of up-edges, down-edges, axiom edges, branch
    edges and cut entries is acyclic, and (3) every path from the open
    roots that reaches the dashed child of a parr+ node passes through
    that node itself.
    """
    _validate(net)
    nodes = net.tree.nodes
    out: list[Violation] = []

    counts: dict[int, int] = {}
    for a, b in net.axioms:
        counts[a] = counts.get(a, 0) + 1
        counts[b] = counts.get(b, 0) + 1
        if nodes[a].atom != nodes[b].atom:
            out.append(Violation(1, f"axiom edge {a}-{b} mixes atom names"))
    branched = {b for b, _ in net.bots}
    for n in nodes:
        if n.label in ("atom+", "atom-") and counts.get(n.id, 0) != 1:
            out.append(Violation(
                1, f"atom leaf {n.atom}#{n.id} is on "
                   f"{counts.get(n.id, 0)} axiom edges"))
        if n.label == "bot-" and n.id not in branched:
            out.append(Violation(1, f"bot leaf #{n.id} has no branch"))
    if len(net.bots) != len(branched):
        out.append(Violation(1, "a bot leaf has more than one branch"))

    succ = _successors(net)
    cycle = _find_cycle(succ)
    if cycle is not None:
        trail = " -> ".join(_fmt_state(net, s) for s in cycle)
        out.append(Violation(2, f"cycle: {trail}"))

    starts = _starts(net)
    for n in nodes:
        if n.label != "parr+":
            continue
        pred = _reach(succ, starts, avoid=("n", n.id))
        target = ("n", n.dashed)
        if target in pred:
            path: list[tuple] = []
            cur: tuple | None = target
            while cur is not None:
                path.append(cur)
                cur = pred[cur]
            trail = " -> ".join(_fmt_state(net, s) for s in reversed(path))
            out.append(Violation(
                3, f"path reaches dashed child of node {n.id}: {trail}"))
    return tuple(out)


# --- enumeration -----------------------------------------------------------


def enumerate_essential_nets(phi: Formula):
    """Yield every axiom matching and bot anchoring over polarize(phi).

    Unbalanced atom occurrences make the stream empty.  The nets carry
    no amida edges; correctness is for the caller to check.
    """
    tree = polarize(phi)
    pos: dict[str, list[int]] = {}
    neg: dict[str, list[int]] = {}
    bots = [n.id for n in tree.nodes if n.label == "bot-"]
    for n in tree.nodes:
        if n.label == "atom+":
            pos.setdefault(n.atom, []).append(n.id)
        elif n.label == "atom-":
            neg.setdefault(n.atom, []).append(n.id)
    names = sorted(set(pos) | set(neg))
    if any(len(pos.get(a, ())) != len(neg.get(a, ())) for a in names):
        return
    per_name = [
        [tuple(zip(pos[a], perm)) for perm in permutations(neg[a])]
        for a in names if pos.get(a)
    ]
    targets = range(len(tree.nodes))
    for chosen in product(*per_name):
        axioms = tuple(pair for group in chosen for pair in group)
        for anchors in product(targets, repeat=len(bots)):
            yield Net(tree, axioms, tuple(zip(bots, anchors)), ())


def has_correct_essential_net(phi: Formula) -> bool:
    return any(not check_correct(n) for n in enumerate_essential_nets(phi))


# --- derivation translation ------------------------------------------------


def _link_mirror(b: _Build, neg: int, pos: int) -> None:
    """Add axiom edges and bot anchors between two dual leaf sets."""
    n, p = b.nodes[neg], b.nodes[pos]
    if n.label == "atom-" and p.label == "atom+":
        b.axioms.append((pos, neg))
    elif n.label == "atom+" and p.label == "atom-":
        b.axioms.append((neg, pos))
    elif n.label == "bot-":
        b.bots.append((neg, pos))
    elif p.label == "bot-":
        b.bots.append((pos, neg))
    else:
        for x, y in zip(n.children, p.children):
            _link_mirror(b, x, y)


_Layout = list[tuple[list[int], int]]


def _first_diff(a, bb) -> int:
    for i, (x, y) in enumerate(zip(a, bb)):
        if x != y:
            return i
    return 0


def _translate(b: _Build, d: Derivation) -> _Layout:
    rule = d.rule
    if rule in ("WithR", "WithL0", "WithL1", "PlusR0", "PlusR1", "PlusL"):
        raise NotMultiplicative(f"rule {rule} has no net translation")
    parts = [_translate(b, p) for p in d.premises]
    layout = parts[0] if parts else []

    match rule:
        case "Ax":
            comp = d.conclusion.components[0]
            neg = _polarize_into(b, comp.formula, False)
            pos = _polarize_into(b, comp.formula, True)
            _link_mirror(b, neg, pos)
            return [([neg], pos)]
        case "1R":
            return [([], b.add("one+"))]
        case "Merge":
            return parts[0] + parts[1]
        case "EE":
            prev = d.premises[0].conclusion.components
            i = _first_diff(prev, d.conclusion.components)
            layout[i], layout[i + 1] = layout[i + 1], layout[i]
        case "IE":
            prev = d.premises[0].conclusion.components[-1].ctx
            i = _first_diff(prev, d.conclusion.components[-1].ctx)
            ctx = layout[-1][0]
            ctx[i], ctx[i + 1] = ctx[i + 1], ctx[i]
        case "1L":
            ctx, goal = layout[-1]
            bot = b.add("bot-")
            b.bots.append((bot, goal))
            ctx.append(bot)
        case "TensorR":
            ctx2, g2 = layout.pop()
            ctx1, g1 = layout.pop()
            top = b.add("tensor+", children=(g1, g2))
            layout.append((ctx1 + ctx2, top))
        case "TensorL":
            ctx, goal = layout[-1]
            y = ctx.pop()
            x = ctx.pop()
            ctx.append(b.add("parr-", children=(x, y)))
        case "LolliR":
            ctx, goal = layout.pop()
            x = ctx.pop()
            layout.append((ctx, b.add("parr+", children=(x, goal), dashed=x)))
        case "LolliL":
            ctx2, g2 = layout.pop()
            ctx1, g1 = layout.pop()
            mid = b.add("tensor-", children=(g1, ctx2[0]))
            layout.append((ctx1 + [mid] + ctx2[1:], g2))
        case "Cut":
            ctx2, g2 = layout.pop()
            ctx1, g1 = layout.pop()
            b.cuts.append((g1, ctx2[0]))
            layout.append((ctx1 + ctx2[1:], g2))
        case "Sync":
            ctx2, g2 = layout.pop()
            ctx1, g1 = layout.pop()
            b.amida.append((g1, g2))
            layout.append((ctx1, g2))
            layout.append((ctx2, g1))
        case _:
            raise NotMultiplicative(f"unknown rule {rule}")
    return layout


def derivation_to_net(d: Derivation) -> Net:
    """Translate a derivation into a net over its conclusion forest.

    Each Sync becomes one amida edge between the stems of the two goal
    trees it exchanges; Cut keeps both trees in the net, joined by a
    cut entry; a non-atomic axiom expands into the matching dual trees
    with leaf-wise links.
    """
    b = _Build()
    layout = _translate(b, d)
    roots: list[int] = []
    for ctx, goal in layout:
        roots.extend(ctx)
        roots.append(goal)
    return Net(PolarizedTree(tuple(b.nodes), tuple(roots)),
               tuple(b.axioms), tuple(b.bots), tuple(b.amida),
               tuple(b.cuts))


# --- canonical form and export ---------------------------------------------


def canonicalize(net: Net) -> Net:
    """Relabel ids by forest preorder so isomorphic nets compare equal."""
    order: list[int] = []
    nodes = net.tree.nodes

    def walk(i: int) -> None:
        order.append(i)
        for c in nodes[i].children:
            walk(c)

    for r in net.tree.roots:
        walk(r)
    for pos, neg in net.cuts:
        walk(pos)
        walk(neg)
    ren = {old: new for new, old in enumerate(order)}
    new_nodes = [
        replace(nodes[old], id=ren[old],
                children=tuple(ren[c] for c in nodes[old].children),
                dashed=None if nodes[old].dashed is None
                else ren[nodes[old].dashed])
        for old in order
    ]
    return Net(
        PolarizedTree(tuple(new_nodes),
                      tuple(ren[r] for r in net.tree.roots)),
        tuple(sorted((ren[a], ren[b]) for a, b in net.axioms)),
        tuple(sorted((ren[a], ren[b]) for a, b in net.bots)),
        tuple((ren[a], ren[b]) for a, b in net.amida),
        tuple((ren[a], ren[b]) for a, b in net.cuts),
    )


def net_equal(a: Net, b: Net) -> bool:
    return canonicalize(a) == canonicalize(b)


def net_to_json(net: Net) -> str:
    data = {
        "nodes": [
            {"id": n.id, "label": n.label, "atom": n.atom,
             "children": list(n.children), "dashed": n.dashed}
            for n in net.tree.nodes
        ],
        "roots": list(net.tree.roots),
        "axioms": [list(p) for p in net.axioms],
        "bots": [list(p) for p in net.bots],
        "amida": [list(p) for p in net.amida],
        "cuts": [list(p) for p in net.cuts],
    }
    return json.dumps(data, indent=2, sort_keys=True)


def net_from_json(text: str) -> Net:
    data = json.loads(text)
    nodes = tuple(
        PNode(n["id"], n["label"], n.get("atom"),
              tuple(n.get("children", ())), n.get("dashed"))
        for n in data["nodes"]
    )
    net = Net(
        PolarizedTree(nodes, tuple(data["roots"])),
        tuple(tuple(p) for p in data.get("axioms", ())),
        tuple(tuple(p) for p in data.get("bots", ())),
        tuple(tuple(p) for p in data.get("amida", ())),
        tuple(tuple(p) for p in data.get("cuts", ())),
    )
    _validate(net)
    return net


def to_dot(net: Net) -> str:
    """Render the net for graphviz.

    Solid arrows follow the traversal orientation, dashed lines mark
    parr+ binders, dotted arrows are bot branches, gray arrows axiom
    edges, and bold red lines amida edges (drawn between the two child
    ends of the spliced up-edges).
    """
    nodes = net.tree.nodes
    lines = ["digraph net {", "  rankdir=BT;"]
    text = {"tensor+": "⊗+", "tensor-": "⊗-", "parr+": "⅋+",
            "parr-": "⅋-", "one+": "1+", "bot-": "⊥-"}
    for n in nodes:
        label = f"{n.atom}{n.label[-1]}" if n.atom else text[n.label]
        lines.append(f'  n{n.id} [label="{label}"];')
    for n in nodes:
        for c in n.children:
            if n.dashed == c:
                lines.append(f"  n{n.id} -> n{c} [style=dashed, dir=none];")
            elif _positive(nodes[c].label):
                lines.append(f"  n{n.id} -> n{c};")
            else:
                lines.append(f"  n{c} -> n{n.id};")
    for a, b in net.axioms:
        lines.append(f"  n{a} -> n{b} [color=gray, constraint=false];")
    for b, t in net.bots:
        lines.append(f"  n{b} -> n{t} [style=dotted, constraint=false];")
    for k, (e0, e1) in enumerate(net.amida):
        lines.append(
            f'  n{e0} -> n{e1} [color=red, style=bold, dir=none,'
            f' constraint=false, label="a{k}"];')
    for pos, neg in net.cuts:
        lines.append(f"  n{neg} -> n{pos} [color=blue, constraint=false];")
    lines.append("}")
    return "\n".join(lines)


# --- normalization ---------------------------------------------------------


def is_layered(net: Net) -> bool:
    """True when every amida stub sits on an edge topped by a leaf."""
    nodes = net.tree.nodes
    return all(nodes[e].label in ("atom+", "one+")
               for pair in net.amida for e in pair)


class _Mover:
    """Mutable view of a net while amida edges are pushed upward."""

    def __init__(self, net: Net) -> None:
        self.labels = [n.label for n in net.tree.nodes]
        self.atoms = [n.atom for n in net.tree.nodes]
        self.children = [list(n.children) for n in net.tree.nodes]
        self.dashed = [n.dashed for n in net.tree.nodes]
        self.roots = list(net.tree.roots)
        self.axioms = list(net.axioms)
        self.bots = list(net.bots)
        self.cuts = [list(p) for p in net.cuts]
        self.rungs = [list(p) for p in net.amida]
        self.order = {e: list(st) for e, st in _stubs(net).items()}
        self.parent = {}
        for i, cs in enumerate(self.children):
            for c in cs:
                self.parent[c] = i

    def add(self, label: str, children: list[int],
            dashed: int | None = None, atom: str | None = None) -> int:
        i = len(self.labels)
        self.labels.append(label)
        self.atoms.append(atom)
        self.children.append(children)
        self.dashed.append(dashed)
        for c in children:
            self.parent[c] = i
        return i

    def copy_tree(self, src: int, flip: bool) -> int:
        """Fresh copy of a subtree, mirrored across polarity if flip."""
        label = _FLIP[self.labels[src]] if flip else self.labels[src]
        kids = [self.copy_tree(c, flip) for c in self.children[src]]
        dash = kids[0] if label == "parr+" else None
        return self.add(label, kids, dash, atom=self.atoms[src])

    def link_mirror(self, a: int, b: int) -> None:
        """Axiom edges and bot anchors between two dual fresh trees."""
        la, lb = self.labels[a], self.labels[b]
        if la == "atom-" and lb == "atom+":
            self.axioms.append((b, a))
        elif la == "atom+":
            self.axioms.append((a, b))
        elif la == "bot-":
            self.bots.append((a, b))
        elif lb == "bot-":
            self.bots.append((b, a))
        else:
            for x, y in zip(self.children[a], self.children[b]):
                self.link_mirror(x, y)

    def splice_below(self, edge: int, new_top: int, keep: int,
                     holder: int | None) -> None:
        """Put new_top where edge used to hang (holder is the node that
        held it, None for a layout or cut root); the first keep stubs
        move down onto the fresh lower edge named by new_top."""
        if holder is not None:
            cs = self.children[holder]
            cs[cs.index(edge)] = new_top
            self.parent[new_top] = holder
        elif edge in self.roots:
            self.roots[self.roots.index(edge)] = new_top
        else:
            for pair in self.cuts:
                if pair[0] == edge:
                    pair[0] = new_top
        stubs = self.order.get(edge, [])
        lower, upper = stubs[:keep], stubs[keep:]
        for rung, side in lower:
            self.rungs[rung][side] = new_top
        self.order[new_top] = lower
        self.order[edge] = upper

    def mirror_pad(self, mid: int, unit: int) -> None:
        """Keep cut pairs dual after padding a wire inside one.

        If mid sits inside a cut's positive tree, the matching spot in
        the negative tree grows a parr- with a fresh bot anchored to
        the pad's unit wire, so the two trees mirror again.
        """
        path: list[int] = []
        node = mid
        while node in self.parent:
            up = self.parent[node]
            path.append(self.children[up].index(node))
            node = up
        for pair in self.cuts:
            if pair[0] == node:
                break
        else:
            return
        cur = pair[1]
        hold: int | None = None
        slot = 0
        for i in reversed(path):
            hold, slot = cur, i
            cur = self.children[cur][i]
        bot = self.add("bot-", [])
        midneg = self.add("parr-", [cur, bot])
        if hold is None:
            pair[1] = midneg
        else:
            self.children[hold][slot] = midneg
            self.parent[midneg] = hold
        self.bots.append((bot, unit))

    def freeze(self) -> Net:
        nodes = tuple(
            PNode(i, self.labels[i], self.atoms[i],
                  tuple(self.children[i]), self.dashed[i])
            for i in range(len(self.labels))
        )
        below: dict[int, set[int]] = {k: set() for k in range(len(self.rungs))}
        for stubs in self.order.values():
            for (a, _), (b, _) in zip(stubs, stubs[1:]):
                if a != b:
                    below[a].add(b)
        done: list[int] = []
        state = dict.fromkeys(below, 0)

        def visit(k: int) -> None:
            stack = [k]
            while stack:
                top = stack[-1]
                if state[top] == 0:
                    state[top] = 1
                    for b in below[top]:
                        if state[b] == 1 and b in stack:
                            raise RuntimeError("rung heights lost their order")
                        if state[b] == 0:
                            stack.append(b)
                else:
                    stack.pop()
                    if state[top] == 1:
                        state[top] = 2
                        done.append(top)

        for k in below:
            visit(k)
        amida = tuple(tuple(self.rungs[k]) for k in done)
        return Net(PolarizedTree(nodes, tuple(self.roots)),
                   tuple(self.axioms), tuple(self.bots), amida,
                   tuple(tuple(p) for p in self.cuts))


def push_amida_up(net: Net) -> Net:
    """Slide every amida edge up until it sits just below leaf level.

    A rung under a tensor+ splits the partner wire with a fresh unit
    factor: each tensor arm gets its own rung, one against the old
    partner wire and one against the dead unit wire, so the partner's
    end label picks up a harmless "... tensor+ 1+" pad.  A rung under
    a parr+ re-homes the bound (dashed) subtree behind a fresh cut,
    mirrored by a seat copy in the dashed slot and a probe copy on the
    cut's positive side, then pads the solid child edge the same way:
    the rung moves onto the solid wire while the pad's unit arm gets a
    second rung against the probe stem.  That crossing is one-way by
    height: flow branching off the pad passes the parr first and then
    reaches the probe, while flow exiting the cut crosses into the
    unit wire and stops, so the seat is only ever fed through its own
    parr.  Every move lands rungs on strictly smaller subtrees, so the
    loop terminates.  Correct input stays correct, and end labels are
    preserved up to the unit pads.
    """
    if check_correct(net):
        raise NotCorrect("refusing to normalize an incorrect net")
    if not net.amida:
        return net
    m = _Mover(net)

    def pick() -> tuple[int, int] | None:
        for e in sorted(m.order):
            if m.order[e] and m.labels[e] not in ("atom+", "one+"):
                return e, len(m.order[e]) - 1
        return None

    while True:
        chosen = pick()
        if chosen is None:
            break
        e, slot = chosen
        rung, side = m.order[e][slot]
        partner = m.rungs[rung][1 - side]
        at = m.order[partner].index((rung, 1 - side))
        m.order[e].pop(slot)
        m.order[partner].pop(at)
        if m.labels[e] == "parr+":
            bound, solid = m.children[e]
            seat = m.copy_tree(bound, flip=False)
            probe = m.copy_tree(bound, flip=True)
            m.link_mirror(seat, probe)
            m.children[e][0] = seat
            m.dashed[e] = seat
            m.parent[seat] = e
            del m.parent[bound]
            m.cuts.append([probe, bound])
            unit = m.add("one+", [])
            mid = m.add("tensor+", [solid, unit])
            m.splice_below(solid, mid, 0, e)
            m.mirror_pad(mid, unit)
            m.rungs[rung] = [solid, partner]
            m.order.setdefault(solid, []).insert(0, (rung, 0))
            m.order[partner].insert(at, (rung, 1))
            extra = len(m.rungs)
            m.rungs.append([probe, unit])
            m.order.setdefault(probe, []).insert(0, (extra, 0))
            m.order[unit] = [(extra, 1)]
        else:
            left, right = m.children[e]
            holder = m.parent.get(partner)
            unit = m.add("one+", [])
            mid = m.add("tensor+", [partner, unit])
            m.splice_below(partner, mid, at, holder)
            m.mirror_pad(mid, unit)
            m.rungs[rung] = [left, partner]
            m.order.setdefault(left, []).insert(0, (rung, 0))
            m.order[partner].insert(0, (rung, 1))
            extra = len(m.rungs)
            m.rungs.append([right, unit])
            m.order.setdefault(right, []).insert(0, (extra, 0))
            m.order[unit] = [(extra, 1)]
    return m.freeze()


# --- the lottery layer ------------------------------------------------------


@dataclass(frozen=True)
class Permutation:
    """A wire permutation; mapping[i] is the exit of wire i + 1.

    Applying the transpositions left to right to a token starting on
    any wire reproduces the mapping.
    """

    mapping: tuple[int, ...]
    transpositions: tuple[tuple[int, int], ...]


def lottery_permutation(net: Net) -> Permutation:
    """Read the amida edges of a layered net as a wire permutation."""
    if not is_layered(net):
        raise NotLayered("an amida stub sits below an internal node")
    nodes = net.tree.nodes
    wires: list[int] = []

    def walk(i: int) -> None:
        if nodes[i].label in ("atom+", "one+"):
            wires.append(i)
        for c in nodes[i].children:
            walk(c)

    for r in net.tree.roots:
        walk(r)
    for pos, neg in net.cuts:
        walk(pos)
        walk(neg)
    index = {e: i + 1 for i, e in enumerate(wires)}
    swaps: list[tuple[int, int]] = []
    for k in range(len(net.amida) - 1, -1, -1):
        e0, e1 = net.amida[k]
        if e0 == e1:
            raise NotLayered("a self-pair amida edge is not a lottery rung")
        a, b = index[e0], index[e1]
        swaps.append((a, b) if a < b else (b, a))
    mapping = list(range(1, len(wires) + 1))
    for a, b in swaps:
        for i, w in enumerate(mapping):
            if w == a:
                mapping[i] = b
            elif w == b:
                mapping[i] = a
    final = [0] * len(wires)
    for i, w in enumerate(mapping):
        final[i] = w
    return Permutation(tuple(final), tuple(swaps))


# --- sequent prover ---------------------------------------------------------
#
# An exhaustive cut-free backward search over two-sided sequents with
# multiset contexts.  All context splits are enumerated; memoization
# is sound because every rule strictly shrinks the sequent.

_ids: dict[Formula, int] = {}
_forms: list[Formula] = []
_table: dict[tuple[tuple[int, ...], int], bool] = {}


def _intern(phi: Formula) -> int:
    got = _ids.get(phi)
    if got is None:
        got = _ids[phi] = len(_forms)
        _forms.append(phi)
    return got


def _scan_multiplicative(phi: Formula) -> None:
    match phi:
        case Atom(_) | Unit():
            return
        case Tensor(a, b) | Lolli(a, b):
            _scan_multiplicative(a)
            _scan_multiplicative(b)
        case _:
            raise NotMultiplicative(f"additive connective in {phi!r}")


def _prove(ctx: tuple[int, ...], goal: int, budget: list[int]) -> bool:
    key = (ctx, goal)
    hit = _table.get(key)
    if hit is not None:
        return hit
    budget[0] -= 1
    if budget[0] < 0:
        raise SearchBudgetExceeded("proof search budget exhausted")

    g = _forms[goal]
    result = None
    if isinstance(g, Lolli):
        result = _prove(tuple(sorted(ctx + (_intern(g.left),))),
                        _intern(g.right), budget)
    if result is None:
        for i, f in enumerate(ctx):
            form = _forms[f]
            if isinstance(form, Unit):
                result = _prove(ctx[:i] + ctx[i + 1:], goal, budget)
                break
            if isinstance(form, Tensor):
                parts = (_intern(form.left), _intern(form.right))
                result = _prove(tuple(sorted(ctx[:i] + ctx[i + 1:] + parts)),
                                goal, budget)
                break
    if result is None:
        if isinstance(g, Atom):
            result = ctx == (goal,)
        elif isinstance(g, Unit):
            result = ctx == ()
        if result is not True and isinstance(g, Tensor):
            left, right = _intern(g.left), _intern(g.right)
            result = any(
                _prove(one, left, budget) and _prove(two, right, budget)
                for one, two in _splits(ctx))
        if result is not True:
            for i, f in enumerate(ctx):
                form = _forms[f]
                if not isinstance(form, Lolli):
                    continue
                rest = ctx[:i] + ctx[i + 1:]
                arg, res = _intern(form.left), _intern(form.right)
                if any(_prove(one, arg, budget)
                       and _prove(tuple(sorted(two + (res,))), goal, budget)
                       for one, two in _splits(rest)):
                    result = True
                    break
        if result is None:
            result = False
    _table[key] = result
    return result


def _splits(ctx: tuple[int, ...]):
    n = len(ctx)
    for mask in range(1 << n):
        one = tuple(ctx[i] for i in range(n) if mask >> i & 1)
        two = tuple(ctx[i] for i in range(n) if not mask >> i & 1)
        yield one, two


def imll_provable(phi: Formula, budget: int = 500_000) -> bool:
    """Decide the sequent ⊢ phi in the tensor/lolli/unit fragment."""
    _scan_multiplicative(phi)
    return _prove((), _intern(phi), [budget])
