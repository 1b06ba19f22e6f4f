"""Rule checker and inference tests.

Expected rule sequences for the fixed examples were worked out by hand
on paper from the rule schemas and frozen here; the checker and the
inference engine are implemented independently (infer validates its own
output through check_derivation, and these tests re-verify both).
"""

from __future__ import annotations

from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amida.syntax import (
    App,
    Atom,
    Chan,
    ChannelId,
    Inl,
    Inr,
    Lambda,
    LetPattern,
    Lolli,
    Match,
    PStar,
    PTensor,
    Plus,
    Star,
    Tensor,
    TensorIntro,
    Unit,
    Var,
    With,
    WithPair,
)
from amida.typecheck import (
    Component,
    Derivation,
    Hypersequent,
    NotChannelDisjoint,
    NotInFragment,
    Untypable,
    ax,
    check_derivation,
    excluded_middle_term,
    infer,
    lolli_r,
    merge,
    one_r,
    split,
    sync,
    tensor_r,
    check_derivation as check,
)

A, B = Atom("A"), Atom("B")
U1 = Unit()
Bool = Plus(U1, U1)


def rule_list(d: Derivation, keep_plumbing: bool = True) -> list[str]:
    out: list[str] = []

    def walk(n):
        for p in n.premises:
            walk(p)
        out.append(n.rule)

    walk(d)
    if keep_plumbing:
        return out
    return [r for r in out if r not in ("EE", "IE")]


def sync_count(d: Derivation) -> int:
    return rule_list(d).count("Sync")


# --- checker on hand-built derivations -------------------------------------


def test_axiom_leaf_checks():
    assert check(ax("x", A)) == []


def test_channel_swap_derivation():
    # |- c * : A  |  x:A |- ~c x : 1   built from 1R, Ax, Merge, Sync
    d = sync(merge(one_r(), ax("x", A)), ChannelId("c", False))
    assert check(d) == []
    comps = d.conclusion.components
    assert comps[0].term == Chan(ChannelId("c", False), Star())
    assert comps[0].formula == A
    assert comps[1].term == Chan(ChannelId("c", True), Var("x"))
    assert comps[1].formula == U1


def test_amida_axiom_constructed_by_hand():
    c = ChannelId("c", False)
    d = sync(merge(ax("x", A), ax("y", B)), c)
    d = lolli_r(d)
    # bring the first component last to abstract it too
    from amida.typecheck import ee

    d = ee(d, 0)
    d = lolli_r(d)
    d = ee(d, 0)
    d = tensor_r(d)
    assert check(d) == []
    goal = d.conclusion.components[0]
    assert goal.formula == Tensor(Lolli(A, B), Lolli(B, A))
    assert goal.term == TensorIntro(Lambda("x", Chan(c, Var("x"))),
                                    Lambda("y", Chan(c.dual(), Var("y"))))


def test_sync_conclusion_swapped_without_ee_is_rejected():
    d = sync(merge(one_r(), ax("x", A)), ChannelId("c", False))
    swapped = Hypersequent((d.conclusion.components[1],
                            d.conclusion.components[0]))
    bad = replace(d, conclusion=swapped, channel=None)
    viol = check(bad)
    assert viol and viol[0].path == ()


def test_sync_premise_mentioning_channel_is_rejected():
    c = ChannelId("c", False)
    inner = sync(merge(one_r(), ax("x", A)), c)
    # a second Sync on the same base whose premise already mentions c
    outer = sync(inner, c)
    viol = check(outer)
    assert any("already occurs" in v.reason for v in viol)
    assert any("more than one Sync" in v.reason for v in viol)


def test_duplicate_context_variable_is_rejected():
    comp = Component((("x", A), ("x", B)), TensorIntro(Var("x"), Var("x")),
                     Tensor(A, B))
    bad = Derivation("Ax", Hypersequent((comp,)))
    viol = check(bad)
    assert any("repeats" in v.reason for v in viol)


def test_cut_with_wrong_substitution_is_rejected():
    prod = ax("x", A)
    cons = ax("y", A)
    prem = merge(prod, cons)
    wrong = Derivation(
        "Cut",
        Hypersequent((Component((("x", A),), Var("y"), A),)),
        (prem,))
    viol = check(wrong)
    assert any("Cut" in v.reason for v in viol)


def test_violation_paths_point_at_the_node():
    inner = sync(merge(one_r(), ax("x", A)), ChannelId("c", False))
    broken_leaf = Derivation(
        "Ax", Hypersequent((Component((("x", A),), Var("x"), B),)))
    d = merge(inner, broken_leaf)
    viol = check(d)
    assert viol
    assert viol[0].path == (1,)


# --- inference: fixed examples ---------------------------------------------


def test_identity_inference():
    goal = Hypersequent((Component((), Lambda("x", Var("x")), Lolli(A, A)),))
    d = infer(goal)
    assert rule_list(d) == ["Ax", "LolliR"]
    assert d.conclusion == goal


def test_co_channel_cut_is_five_rules():
    c = ChannelId("c", False)
    goal = Hypersequent(
        (Component((("x", A),), Chan(c.dual(), Chan(c, Var("x"))), A),))
    d = infer(goal, {"c": (A, B)})
    assert rule_list(d) == ["Ax", "Ax", "Merge", "Sync", "Cut"]
    assert check(d) == []
    assert d.conclusion == goal


def test_amida_axiom_inference():
    c = ChannelId("c", False)
    t = TensorIntro(Lambda("x", Chan(c, Var("x"))),
                    Lambda("y", Chan(c.dual(), Var("y"))))
    goal = Hypersequent((Component((), t, Tensor(Lolli(A, B), Lolli(B, A))),))
    d = infer(goal, {"c": (A, B)})
    assert rule_list(d, keep_plumbing=False) == [
        "Ax", "Ax", "Merge", "Sync", "LolliR", "LolliR", "TensorR"]
    assert d.conclusion == goal
    assert sync_count(d) == 1


def test_inference_across_components():
    c = ChannelId("c", False)
    goal = Hypersequent((
        Component((), Chan(c, Inl(Star())), B),
        Component((("x", B),), Chan(c.dual(), Var("x")), Bool),
    ))
    d = infer(goal, {"c": (Bool, B)})
    assert check(d) == []
    assert d.conclusion == goal


def test_inference_additives():
    t = Match(Var("z"), "x", Inl(Var("x")), "y",
              Match(Var("y"), "a", Inr(Var("a")), "b", Inr(Var("b"))))
    goal = Hypersequent(
        (Component((("z", Plus(U1, Bool)),), t, Plus(U1, U1)),))
    d = infer(goal)
    assert check(d) == []
    assert d.conclusion == goal


def test_inference_with_projection():
    t = LetPattern(Var("s"), PTensor("f", "u"),
                   LetPattern(Var("u"), PStar(), App(Var("f"), Star())))
    goal = Hypersequent(
        (Component((("s", Tensor(Lolli(U1, B), U1)),), t, B),))
    d = infer(goal)
    assert check(d) == []
    assert d.conclusion == goal


def test_with_pair_shares_context():
    goal = Hypersequent((Component(
        (("x", A),),
        WithPair(TensorIntro(Var("x"), Star()), TensorIntro(Star(), Var("x"))),
        With(Tensor(A, U1), Tensor(U1, A))),))
    d = infer(goal)
    assert check(d) == []
    assert d.conclusion == goal


def test_beta_redex_is_not_in_fragment():
    goal = Hypersequent(
        (Component((), App(Lambda("x", Var("x")), Star()), U1),))
    with pytest.raises(NotInFragment):
        infer(goal)


def test_channel_across_case_arms_is_not_in_fragment():
    c = ChannelId("k", False)
    t = TensorIntro(
        Match(Var("z"), "x", Chan(c, Var("x")), "y", Var("y")),
        LetPattern(Chan(c.dual(), Star()), PStar(), Star()))
    goal = Hypersequent((Component((("z", Bool),), t, Tensor(U1, U1)),))
    with pytest.raises(NotInFragment):
        infer(goal, {"k": (U1, U1)})


def test_unmatched_channel_is_untypable():
    c = ChannelId("c", False)
    goal = Hypersequent((Component((), Chan(c, Star()), U1),))
    with pytest.raises(Untypable):
        infer(goal, {"c": (U1, U1)})


def test_type_error_is_untypable():
    goal = Hypersequent((Component((("x", A),), Var("x"), B),))
    with pytest.raises(Untypable):
        infer(goal)


# --- split ------------------------------------------------------------------


def test_split_of_merge_recovers_both_sides():
    d1 = infer(Hypersequent(
        (Component((), Lambda("x", Var("x")), Lolli(A, A)),)))
    d2 = infer(Hypersequent((Component((("y", B),), Var("y"), B),)))
    both = merge(d1, d2)
    left, right = split(both, 1)
    assert check(left) == [] and check(right) == []
    assert left.conclusion == d1.conclusion
    assert right.conclusion == d2.conclusion


def test_split_through_plumbing():
    c = ChannelId("c", False)
    inner = Hypersequent((
        Component((), Chan(c, Star()), U1),
        Component((), Chan(c.dual(), Star()), U1),
    ))
    d = infer(inner, {"c": (U1, U1)})
    outer = merge(d, infer(Hypersequent(
        (Component((), Star(), U1),))))
    left, right = split(outer, 2)
    assert check(left) == [] and check(right) == []
    assert len(left.conclusion) == 2
    assert len(right.conclusion) == 1


def test_split_across_sync_raises():
    c = ChannelId("c", False)
    goal = Hypersequent((
        Component((), Chan(c, Star()), U1),
        Component((), Chan(c.dual(), Star()), U1),
    ))
    d = infer(goal, {"c": (U1, U1)})
    with pytest.raises(NotChannelDisjoint):
        split(d, 1)


# --- excluded middle --------------------------------------------------------


@pytest.mark.parametrize("phi", [Atom("X"), U1, Tensor(Atom("X"), Atom("Y"))])
def test_excluded_middle(phi):
    d = excluded_middle_term(phi)
    assert check(d) == []
    comp = d.conclusion.components[0]
    assert comp.ctx == ()
    assert comp.formula == Tensor(phi, Lolli(phi, U1))
    assert rule_list(d) == ["1R", "Ax", "Merge", "Sync", "LolliR", "TensorR"]


# --- properties -------------------------------------------------------------


@st.composite
def formulas(draw, depth=2):
    if depth == 0:
        return draw(st.sampled_from([U1, Atom("X"), Atom("Y")]))
    kind = draw(st.sampled_from(["leaf", "tensor", "lolli", "plus", "with"]))
    if kind == "leaf":
        return draw(st.sampled_from([U1, Atom("X"), Atom("Y")]))
    l = draw(formulas(depth=depth - 1))
    r = draw(formulas(depth=depth - 1))
    return {"tensor": Tensor, "lolli": Lolli, "plus": Plus,
            "with": With}[kind](l, r)


@given(formulas())
@settings(max_examples=60)
def test_excluded_middle_any_formula(phi):
    d = excluded_middle_term(phi)
    assert check(d) == []
    assert d.conclusion.components[0].formula == Tensor(phi, Lolli(phi, U1))


@given(formulas(), formulas())
@settings(max_examples=60)
def test_tensor_swap_inference(phi, psi):
    t = Lambda("p", LetPattern(Var("p"), PTensor("x", "y"),
                               TensorIntro(Var("y"), Var("x"))))
    goal = Hypersequent(
        (Component((), t, Lolli(Tensor(phi, psi), Tensor(psi, phi))),))
    d = infer(goal)
    assert check(d) == []
    assert d.conclusion == goal


@given(formulas(), formulas())
@settings(max_examples=60)
def test_amida_axiom_any_types(phi, psi):
    c = ChannelId("c", False)
    t = TensorIntro(Lambda("x", Chan(c, Var("x"))),
                    Lambda("y", Chan(c.dual(), Var("y"))))
    goal = Hypersequent(
        (Component((), t, Tensor(Lolli(phi, psi), Lolli(psi, phi))),))
    d = infer(goal, {"c": (phi, psi)})
    assert check(d) == []
    assert d.conclusion == goal
    assert sync_count(d) == 1


@given(formulas(), formulas(), st.randoms())
@settings(max_examples=40)
def test_exchange_closure(phi, psi, rng):
    from amida.typecheck import ee, ie

    d1 = infer(Hypersequent((Component((("x", phi),), Var("x"), phi),)))
    t = Lambda("p", LetPattern(Var("p"), PTensor("a", "b"),
                               TensorIntro(Var("b"), Var("a"))))
    d2 = infer(Hypersequent(
        (Component((), t, Lolli(Tensor(phi, psi), Tensor(psi, phi))),)))
    d = merge(d1, d2)
    for _ in range(6):
        if rng.random() < 0.5:
            d = ee(d, rng.randrange(len(d.conclusion.components) - 1))
        else:
            ctx = d.conclusion.components[-1].ctx
            if len(ctx) >= 2:
                d = ie(d, rng.randrange(len(ctx) - 1))
    assert check(d) == []


@given(formulas(), formulas())
@settings(max_examples=40)
def test_split_inverts_merge(phi, psi):
    d1 = infer(Hypersequent((Component((("x", phi),), Var("x"), phi),)))
    d2 = infer(Hypersequent((Component((("y", psi),), Var("y"), psi),)))
    left, right = split(merge(d1, d2), 1)
    assert left.conclusion == d1.conclusion
    assert right.conclusion == d2.conclusion
    assert check(left) == [] and check(right) == []
