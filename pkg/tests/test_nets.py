"""Polarized nets: correctness conditions, translation, lottery, prover."""

from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amida.nets import (
    Net,
    NotCorrect,
    NotLayered,
    NotMultiplicative,
    PNode,
    PolarizedTree,
    SearchBudgetExceeded,
    canonicalize,
    check_correct,
    derivation_to_net,
    enumerate_essential_nets,
    fmt_tree,
    has_correct_essential_net,
    imll_provable,
    is_layered,
    lottery_permutation,
    net_equal,
    net_from_json,
    net_to_json,
    polarize,
    push_amida_up,
    to_dot,
)
from amida.syntax import Atom, ChannelId, Lolli, Plus, Tensor, Unit, With
from amida.typecheck import (
    ax,
    check_derivation,
    cut,
    ee,
    ie,
    lolli_r,
    merge,
    one_l,
    one_r,
    plus_r0,
    sync,
    tensor_r,
)

X, Y, U1 = Atom("X"), Atom("Y"), Unit()
AMIDA = Tensor(Lolli(X, Y), Lolli(Y, X))


def depadded(tree):
    """Render a forest like fmt_tree but with unit factors erased.

    Pushing a rung past a tensor+ pads the partner wire with a fresh
    "... tensor+ 1+" wrapper (and pads can land on earlier pads), so
    label preservation is only expected up to unit factors.
    """
    nodes = tree.nodes

    def go(i, dashed):
        n = nodes[i]
        mark = "~" if dashed else ""
        if n.label in ("atom+", "atom-"):
            return f"{mark}{n.atom}{n.label[-1]}"
        if n.label == "one+":
            return f"{mark}1+"
        if n.label == "bot-":
            return f"{mark}bot-"
        a, c = n.children
        fa, fc = go(a, n.dashed == a), go(c, n.dashed == c)
        if n.label == "tensor+" and fc == "1+":
            return f"{mark}{fa}"
        if n.label == "tensor+" and fa == "1+":
            return f"{mark}{fc}"
        return f"{mark}({fa} {n.label} {fc})"

    return " | ".join(go(r, False) for r in tree.roots)


# --- polarization -----------------------------------------------------------


def test_polarize_amida_formula():
    assert fmt_tree(polarize(AMIDA)) == \
        "((~X- parr+ Y+) tensor+ (~Y- parr+ X+))"


def test_polarize_units_both_polarities():
    assert fmt_tree(polarize(U1)) == "1+"
    assert fmt_tree(polarize(U1, positive=False)) == "bot-"


def test_polarize_tensor_flips_to_parr():
    assert fmt_tree(polarize(Tensor(X, Y), positive=False)) == \
        "(X- parr- Y-)"
    assert fmt_tree(polarize(Lolli(X, Y), positive=False)) == \
        "(X+ tensor- Y-)"


def test_polarize_rejects_additives():
    with pytest.raises(NotMultiplicative):
        polarize(Plus(X, Y))
    with pytest.raises(NotMultiplicative):
        polarize(Lolli(With(X, Y), X))


_DUAL = {
    "tensor+": "parr-", "parr-": "tensor+", "parr+": "tensor-",
    "tensor-": "parr+", "atom+": "atom-", "atom-": "atom+",
    "one+": "bot-", "bot-": "one+",
}


def _mirrors(a: PolarizedTree, i: int, b: PolarizedTree, j: int) -> bool:
    na, nb = a.nodes[i], b.nodes[j]
    if _DUAL[na.label] != nb.label or na.atom != nb.atom:
        return False
    return all(_mirrors(a, x, b, y)
               for x, y in zip(na.children, nb.children))


@st.composite
def mult_formulas(draw, depth=2):
    if depth == 0 or draw(st.booleans()):
        return draw(st.sampled_from([X, Y, U1]))
    left = draw(mult_formulas(depth=depth - 1))
    right = draw(mult_formulas(depth=depth - 1))
    return draw(st.sampled_from([Tensor, Lolli]))(left, right)


@given(mult_formulas(depth=3))
@settings(max_examples=60)
def test_polarize_polarities_are_mirror_trees(phi):
    pos = polarize(phi)
    neg = polarize(phi, positive=False)
    assert _mirrors(pos, pos.roots[0], neg, neg.roots[0])


@given(mult_formulas(depth=3))
@settings(max_examples=60)
def test_polarize_dashes_exactly_the_parr_inputs(phi):
    tree = polarize(phi)
    for n in tree.nodes:
        if n.label == "parr+":
            assert n.dashed == n.children[0]
        else:
            assert n.dashed is None


# --- essential nets ---------------------------------------------------------


def test_amida_formula_has_one_net_failing_the_path_condition():
    nets = list(enumerate_essential_nets(AMIDA))
    assert len(nets) == 1
    violations = check_correct(nets[0])
    assert violations
    assert {v.condition for v in violations} == {3}


def test_componentwise_identities_have_a_correct_net():
    assert has_correct_essential_net(Tensor(Lolli(X, X), Lolli(Y, Y)))


def test_double_negation_elimination_has_no_correct_net():
    assert not has_correct_essential_net(
        Lolli(Lolli(Lolli(X, U1), U1), X))


def test_unbalanced_atoms_give_no_nets():
    assert list(enumerate_essential_nets(Tensor(X, X))) == []
    assert list(enumerate_essential_nets(Lolli(Y, X))) == []


def test_name_mismatch_is_a_matching_violation():
    tree = polarize(Lolli(X, Y))
    bad = Net(tree, axioms=((1, 0),))
    violations = check_correct(bad)
    assert [v.condition for v in violations] == [1]
    assert "mixes atom names" in violations[0].witness


def test_self_spliced_edge_is_a_cycle():
    tree = polarize(Lolli(X, X))
    net = Net(tree, axioms=((1, 0),), amida=((1, 1),))
    violations = check_correct(net)
    assert [v.condition for v in violations] == [2]
    assert "cycle" in violations[0].witness


# --- sequent prover ---------------------------------------------------------


def test_prover_on_plain_sequents():
    assert imll_provable(Lolli(X, X))
    assert imll_provable(Tensor(Lolli(X, X), Lolli(Y, Y)))
    assert not imll_provable(AMIDA)
    assert not imll_provable(X)
    assert not imll_provable(Lolli(X, Y))


def test_prover_on_unit_sequents():
    rows = [
        (U1, True),
        (Lolli(U1, U1), True),
        (Lolli(Lolli(U1, X), X), True),
        (Lolli(Lolli(Lolli(X, U1), U1), X), False),
        (Lolli(X, Tensor(X, U1)), True),
        (Lolli(Tensor(U1, X), X), True),
        (Lolli(X, U1), False),
    ]
    for phi, want in rows:
        assert imll_provable(phi) is want, phi


def test_prover_budget_can_run_out():
    fresh = Atom("BudgetProbe")
    big = Lolli(Tensor(fresh, fresh), Tensor(fresh, fresh))
    for k in range(4):
        big = Lolli(Tensor(big, fresh), Tensor(fresh, big))
    with pytest.raises(SearchBudgetExceeded):
        imll_provable(big, budget=3)


def test_prover_rejects_additives():
    with pytest.raises(NotMultiplicative):
        imll_provable(Plus(X, X))


def _all_formulas(depth, leaves):
    if depth == 0:
        yield from leaves
        return
    yield from leaves
    for k in range(depth):
        for a in _all_formulas(k, leaves):
            for b in _all_formulas(depth - 1 - k, leaves):
                yield Tensor(a, b)
                yield Lolli(a, b)


@pytest.mark.parametrize("leaves", [(X, Y), (X, U1)])
def test_net_existence_matches_provability(leaves):
    seen = set()
    for phi in _all_formulas(3, leaves):
        if phi in seen:
            continue
        seen.add(phi)
        assert imll_provable(phi) is has_correct_essential_net(phi), phi
    assert len(seen) == 714


# --- derivations to nets ----------------------------------------------------


def amida_axiom_derivation():
    d = sync(merge(ax("x", X), ax("y", Y)), ChannelId("c"))
    d = lolli_r(ee(d, 0))
    return tensor_r(lolli_r(ee(d, 0)))


def test_amida_axiom_derivation_net():
    d = amida_axiom_derivation()
    assert check_derivation(d) == []
    net = derivation_to_net(d)
    assert check_correct(net) == ()
    assert is_layered(net)
    assert len(net.amida) == 1
    assert fmt_tree(net.tree) == "((~X- parr+ Y+) tensor+ (~Y- parr+ X+))"


def test_amida_axiom_lottery_is_one_swap():
    net = derivation_to_net(amida_axiom_derivation())
    pushed = push_amida_up(net)
    assert net_equal(pushed, net)
    perm = lottery_permutation(pushed)
    assert perm.mapping == (2, 1)
    assert perm.transpositions == ((1, 2),)


def test_double_sync_cancels_out():
    d = sync(sync(merge(ax("x", X), ax("y", Y)), ChannelId("c")),
             ChannelId("d"))
    d = tensor_r(lolli_r(ee(lolli_r(ee(d, 0)), 0)))
    assert check_derivation(d) == []
    net = derivation_to_net(d)
    assert check_correct(net) == ()
    perm = lottery_permutation(push_amida_up(net))
    assert perm.transpositions == ((1, 2), (1, 2))
    assert perm.mapping == (1, 2)


def test_stacked_syncs_are_one_swap_each():
    d = merge(ax("x", X), ax("y", Y))
    for k in range(4):
        d = sync(d, ChannelId(f"c{k}"))
        done = tensor_r(lolli_r(ee(lolli_r(ee(d, 0)), 0)))
        assert check_derivation(done) == []
        perm = lottery_permutation(push_amida_up(derivation_to_net(done)))
        assert len(perm.transpositions) == k + 1
        assert perm.mapping == ((2, 1) if k % 2 == 0 else (1, 2))


def test_sync_on_function_goals_normalizes():
    d = sync(merge(lolli_r(ax("x", X)), lolli_r(ax("y", Y))),
             ChannelId("c"))
    d = tensor_r(d)
    assert check_derivation(d) == []
    net = derivation_to_net(d)
    assert check_correct(net) == ()
    assert not is_layered(net)
    with pytest.raises(NotLayered):
        lottery_permutation(net)
    pushed = push_amida_up(net)
    assert check_correct(pushed) == ()
    assert is_layered(pushed)
    assert depadded(pushed.tree) == fmt_tree(net.tree)
    assert len(lottery_permutation(pushed).transpositions) == 3


def test_sync_on_tensor_goal_normalizes():
    d = sync(merge(tensor_r(merge(ax("x", X), ax("y", Y))),
                   ax("z", Atom("Z"))), ChannelId("c"))
    d = tensor_r(d)
    assert check_derivation(d) == []
    net = derivation_to_net(d)
    assert check_correct(net) == ()
    pushed = push_amida_up(net)
    assert check_correct(pushed) == ()
    assert is_layered(pushed)
    assert depadded(pushed.tree) == fmt_tree(net.tree)
    assert len(lottery_permutation(pushed).transpositions) == 2


def test_cut_translation_keeps_both_trees():
    d = cut(merge(ax("a", Lolli(X, X)), ax("b", Lolli(X, X))))
    assert check_derivation(d) == []
    net = derivation_to_net(d)
    assert len(net.cuts) == 1
    assert check_correct(net) == ()


def test_unit_left_anchors_into_the_goal():
    d = lolli_r(one_l(lolli_r(ax("x", X)), "w"))
    assert check_derivation(d) == []
    net = derivation_to_net(d)
    assert len(net.bots) == 1
    assert check_correct(net) == ()


def test_one_right_is_a_bare_unit():
    net = derivation_to_net(one_r())
    assert fmt_tree(net.tree) == "1+"
    assert check_correct(net) == ()


def test_additive_derivations_have_no_net():
    d = plus_r0(ax("x", X), Y)
    assert check_derivation(d) == []
    with pytest.raises(NotMultiplicative):
        derivation_to_net(d)


def test_push_refuses_incorrect_nets():
    bad = next(iter(enumerate_essential_nets(AMIDA)))
    assert check_correct(bad)
    with pytest.raises(NotCorrect):
        push_amida_up(bad)


# --- canonical form and export ----------------------------------------------


def _amida_net_by_hand() -> Net:
    nodes = (
        PNode(0, "tensor+", children=(1, 4)),
        PNode(1, "parr+", children=(2, 3), dashed=2),
        PNode(2, "atom-", atom="X"),
        PNode(3, "atom+", atom="Y"),
        PNode(4, "parr+", children=(5, 6), dashed=5),
        PNode(5, "atom-", atom="Y"),
        PNode(6, "atom+", atom="X"),
    )
    return Net(PolarizedTree(nodes, (0,)),
               axioms=((6, 2), (3, 5)),
               amida=((6, 3),))


def test_ids_do_not_matter_for_equality():
    derived = derivation_to_net(amida_axiom_derivation())
    assert derived.tree.nodes != _amida_net_by_hand().tree.nodes
    assert net_equal(derived, _amida_net_by_hand())


def test_canonicalize_is_idempotent():
    net = canonicalize(derivation_to_net(amida_axiom_derivation()))
    assert canonicalize(net) == net


def test_json_round_trip():
    net = derivation_to_net(amida_axiom_derivation())
    assert net_from_json(net_to_json(net)) == net
    with_cuts = push_amida_up(derivation_to_net(
        tensor_r(sync(merge(lolli_r(ax("x", X)), lolli_r(ax("y", Y))),
                      ChannelId("c")))))
    assert net_from_json(net_to_json(with_cuts)) == with_cuts


def test_json_validates_on_load():
    import json

    data = json.loads(net_to_json(derivation_to_net(amida_axiom_derivation())))
    data["roots"] = [data["roots"][0] - 1]
    with pytest.raises(ValueError):
        net_from_json(json.dumps(data))


def test_dot_marks_every_edge_kind():
    d = cut(merge(ax("a", Lolli(X, U1)), ax("b", Lolli(X, U1))))
    net = derivation_to_net(d)
    dot = to_dot(net)
    assert "style=dashed" in dot and "color=gray" in dot
    assert "style=dotted" in dot and "color=blue" in dot
    amida = to_dot(derivation_to_net(amida_axiom_derivation()))
    assert "color=red" in amida


# --- randomized derivations -------------------------------------------------


@st.composite
def mult_derivations(draw, depth=3):
    counter = [0]

    def fresh(prefix: str) -> str:
        counter[0] += 1
        return f"{prefix}{counter[0]}"

    def build(depth: int):
        kinds = ["ax", "one_r"]
        if depth > 0:
            kinds += ["lolli_r", "tensor_r", "sync", "one_l",
                      "cut", "ee", "ie"]
        kind = draw(st.sampled_from(kinds))
        if kind == "ax":
            return ax(fresh("x"), draw(mult_formulas(depth=1)))
        if kind == "one_r":
            return one_r()
        if kind == "one_l":
            return one_l(build(depth - 1), fresh("w"))
        if kind == "lolli_r":
            d = build(depth - 1)
            if not d.conclusion.components[-1].ctx:
                d = one_l(d, fresh("w"))
            return lolli_r(d)
        if kind == "tensor_r":
            return tensor_r(merge(build(depth - 1), build(depth - 1)))
        if kind == "sync":
            return sync(merge(build(depth - 1), build(depth - 1)),
                        ChannelId(fresh("c")))
        if kind == "cut":
            d = build(depth - 1)
            used = d.conclusion.components[-1].formula
            return cut(merge(d, ax(fresh("a"), used)))
        d = build(depth - 1)
        if kind == "ee":
            n = len(d.conclusion.components)
            if n >= 2:
                return ee(d, draw(st.integers(0, n - 2)))
            return d
        ctx = d.conclusion.components[-1].ctx
        if len(ctx) >= 2:
            return ie(d, draw(st.integers(0, len(ctx) - 2)))
        return d

    return build(depth)


@given(mult_derivations())
@settings(max_examples=60, deadline=None)
def test_translated_derivations_are_correct(d):
    assert check_derivation(d) == []
    net = derivation_to_net(d)
    assert check_correct(net) == ()


@given(mult_derivations())
@settings(max_examples=60, deadline=None)
def test_pushing_preserves_correctness_and_labels(d):
    net = derivation_to_net(d)
    pushed = push_amida_up(net)
    assert check_correct(pushed) == ()
    assert is_layered(pushed)
    assert depadded(pushed.tree) == depadded(net.tree)
    perm = lottery_permutation(pushed)
    assert sorted(perm.mapping) == list(range(1, len(perm.mapping) + 1))


@given(mult_derivations())
@settings(max_examples=40, deadline=None)
def test_net_serialization_round_trips(d):
    net = derivation_to_net(d)
    assert net_from_json(net_to_json(net)) == net
    assert net_equal(net, canonicalize(net))
