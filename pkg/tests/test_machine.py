"""Evaluator behaviour: rendezvous, deadlock reports, and the exhaustive oracle."""

from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st

from amida.machine import (
    Deadlock,
    FuelExhausted,
    Machine,
    NoEnabledTransition,
    StuckTerm,
    Values,
    bigstep_oracle,
    detect_deadlock,
    evaluate,
    step,
)
from amida.parser import parse_term
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
    TensorIntro,
    Var,
    WithPair,
    is_canonical,
)

CH = ("c", "d")
C = ChannelId("c", False)
CO = ChannelId("c", True)
D = ChannelId("d", False)
DO = ChannelId("d", True)


def t(source: str):
    return parse_term(source, channels=CH)


COMMPAIR = (
    "let xl (x) xr = (\\x. c x) (x) ((~c *) (x) *) in "
    "(let * = xl (inl *) in *) (x) "
    "(let z (x) w = xr in (let * = w in z))"
)

# Every row of this table is an independently derived outcome; the machine
# and the oracle are checked against it and against each other.
RUNS = {
    "unit": (["*"], False),
    "discard-chain": (["let * = c (inl *) in (let * = * in ~c *)"], False),
    "self-nested": (["c (~c (inl *))"], False),
    "self-nested-capture": (["c (~c (inl *))"], True),
    "pair": ([COMMPAIR], False),
    "pair-capture": ([COMMPAIR], True),
    "exchange": (["c *", "~c (inl *)"], False),
    "half-under-lambda": (["(\\x. c x) (inl *)", "~c *"], False),
    "crossed": (["c (d *)", "~d (~c *)"], False),
    "chain-of-three": (["c (d *)", "~c *", "~d *"], False),
    "split-tensor": (["(\\x. c x) (x) (\\y. ~c y)"], False),
    "tensor-redexes": (["(c *) (x) (~c *)"], False),
    "both-halves-suspended": (["\\z. ~c (c z)"], False),
    "capture-own-argument": (["(\\z. ~c z) (c *)"], True),
}


def run(name):
    sources, flag = RUNS[name]
    return evaluate([t(s) for s in sources], eval_subst=flag)


def drive(m: Machine) -> None:
    try:
        while True:
            m.step()
    except NoEnabledTransition:
        pass


# --- single components ------------------------------------------------------------


def test_unit_evaluates_to_itself():
    assert evaluate([Star()]) == Values((Star(),))


def test_unit_is_done_after_one_step():
    m = Machine([Star()])
    s = m.step()
    assert s.steps == 1
    assert s.components[0].status == "done"
    assert s.components[0].value == Star()


def test_suspended_halves_make_a_function_a_value():
    lam = t("\\z. ~c (c z)")
    assert evaluate([lam]) == Values((lam,))


def test_discard_chain_receives_across_nested_lets():
    assert run("discard-chain") == Values((Inl(Star()),))


def test_dual_redexes_inside_one_tensor_fire():
    assert run("tensor-redexes") == Values((t("* (x) *"),))


# --- exchanges between components --------------------------------------------------


def test_exchange_swaps_arguments_between_components():
    assert run("exchange") == Values((Inl(Star()), Star()))


def test_chain_of_three_components_settles():
    assert run("chain-of-three") == Values((Star(), Star(), Star()))


def test_step_fires_a_pending_rendezvous_first():
    m = Machine([t("c *"), t("~c (inl *)")])
    while any(l.kind == "run" for l in m.loci.values()):
        runnable = [l for l in m.loci.values() if l.kind == "run"]
        m._advance(min(runnable, key=lambda l: l.id))
    before = m.state()
    assert [c.status for c in before.components] == ["blocked", "blocked"]
    assert [c.blocked_on for c in before.components] == [C, CO]
    assert before.rendezvous == ((C, 0, Star()), (CO, 1, Inl(Star())))
    after = m.step()
    assert [c.status for c in after.components] == ["done", "done"]
    assert after.components[0].value == Inl(Star())
    assert after.components[1].value == Star()
    assert after.rendezvous == ()


def test_rendezvous_table_never_keeps_a_matched_pair():
    m = Machine([t("c *"), t("~c (inl *)")])
    try:
        while True:
            s = m.step()
            held = [ch for ch, _, _ in s.rendezvous]
            assert not any(ch.dual() in held for ch in held)
    except NoEnabledTransition:
        pass
    assert all(c.status == "done" for c in m.state().components)


def test_policy_picks_the_component_but_not_the_outcome():
    expected = (Inl(Star()), TensorIntro(Inr(Star()), Star()))
    for policy in range(8):
        m = Machine([
            t("(\\x. x) (inl *)"),
            t("let a (x) b = * (x) inr * in b (x) a"),
        ])
        try:
            while True:
                step(m, policy)
        except NoEnabledTransition:
            pass
        assert tuple(c.value for c in m.state().components) == expected


def test_result_is_independent_of_the_schedule_seed():
    for name, (sources, flag) in RUNS.items():
        comps = [t(s) for s in sources]
        base = evaluate(comps, eval_subst=flag, seed=0)
        for seed in range(1, 100):
            assert evaluate(comps, eval_subst=flag, seed=seed) == base, name


# --- deadlocks and their reports ----------------------------------------------------


def test_nested_self_communication_deadlocks():
    r = run("self-nested")
    assert isinstance(r, Deadlock)
    assert r.wait_graph == ((0, C), (0, CO))


def test_self_cycle_report():
    m = Machine([t("c (~c (inl *))")])
    drive(m)
    g = detect_deadlock(m)
    assert g.blocked == ((0, C), (0, CO))
    assert g.cycles == ((0,),)
    assert g.unmatched == ()
    assert str(g) == (
        "component 0 blocked on c\n"
        "component 0 blocked on ~c\n"
        "cycle: 0 -> 0"
    )


def test_crossed_channels_deadlock_with_a_cycle():
    r = run("crossed")
    assert isinstance(r, Deadlock)
    m = Machine([t("c (d *)"), t("~d (~c *)")])
    drive(m)
    g = detect_deadlock(m.state())
    assert g.blocked == ((0, C), (0, D), (1, CO), (1, DO))
    assert g.cycles == ((0, 1),)
    assert str(g) == (
        "component 0 blocked on c\n"
        "component 0 blocked on d\n"
        "component 1 blocked on ~c\n"
        "component 1 blocked on ~d\n"
        "cycle: 0 -> 1 -> 0"
    )


def test_missing_partner_is_reported_unmatched():
    m = Machine([t("c *")])
    drive(m)
    g = detect_deadlock(m)
    assert g.blocked == ((0, C),)
    assert g.cycles == ()
    assert g.unmatched == (C,)
    assert str(g) == (
        "component 0 blocked on c\n"
        "channel c: ~c occurs nowhere"
    )


def test_occurrence_check_counts_finished_judgments():
    r = run("half-under-lambda")
    assert isinstance(r, Deadlock)
    assert r.wait_graph == ((0, C), (1, CO))


def test_pair_split_across_a_tensor_must_fire():
    r = run("split-tensor")
    assert isinstance(r, Deadlock)
    assert r.wait_graph == ((0, C), (0, CO))


# --- continuation capture -----------------------------------------------------------


def test_nested_self_communication_succeeds_with_capture():
    assert run("self-nested-capture") == Values((Inl(Star()),))


def test_communicating_pair_needs_capture():
    r = run("pair")
    assert isinstance(r, Deadlock)
    assert r.wait_graph == ((0, CO),)


def test_communicating_pair_evaluates_with_capture():
    assert run("pair-capture") == Values((t("* (x) inl *"),))


def test_function_capture_feeds_its_own_argument():
    assert isinstance(evaluate([t("(\\z. ~c z) (c *)")]), Deadlock)
    assert run("capture-own-argument") == Values((Star(),))


# --- errors -------------------------------------------------------------------------


@pytest.mark.parametrize("source, message", [
    ("* *", "applying a non-function"),
    ("let * = inl * in *", "discarding a non-unit"),
    ("let a (x) b = \\x. x in a (x) b", "splitting a non-pair"),
    ("let <a, _> = * in a", "projecting from a non-pair"),
    ("case * of inl a -> a | inr b -> b", "matching on a non-injection"),
    ("x", "free variable"),
])
def test_ill_shaped_redexes_raise_stuck(source, message):
    with pytest.raises(StuckTerm, match=message):
        evaluate([t(source)])


def test_fuel_limit_raises():
    with pytest.raises(FuelExhausted):
        evaluate([t(RUNS["discard-chain"][0][0])], fuel=2)


def test_step_on_a_finished_machine_raises():
    m = Machine([Star()])
    m.step()
    with pytest.raises(NoEnabledTransition):
        m.step()


def test_step_on_a_deadlocked_machine_raises():
    m = Machine([t("c *")])
    drive(m)
    with pytest.raises(NoEnabledTransition):
        m.step()


# --- traces -------------------------------------------------------------------------


def test_trace_lines_are_tab_separated_and_ordered():
    r = evaluate([t("c *"), t("~c (inl *)")], trace=True)
    assert isinstance(r, Values)
    counts = []
    for line in r.trace:
        count, comp, rule, summary = line.split("\t")
        counts.append(int(count))
        assert comp in ("0", "1")
        assert rule
        assert summary
    assert counts == sorted(counts)
    assert r.trace == (
        "1\t1\tchan-arg\t~c (inl *)",
        "2\t1\tinl\tinl *",
        "3\t0\tchan-arg\tc *",
        "4\t1\tvalue\t*",
        "5\t0\tvalue\t*",
        "6\t0\trendezvous\tc",
    )


def test_trace_marks_captures():
    r = evaluate([t("c (~c (inl *))")], eval_subst=True, trace=True)
    assert isinstance(r, Values)
    assert any(line.split("\t")[2] == "capture" for line in r.trace)


def test_deadlock_results_carry_a_trace_too():
    r = evaluate([t("c *")], trace=True)
    assert isinstance(r, Deadlock)
    assert any(line.split("\t")[2] == "chan-arg" for line in r.trace)


# --- the exhaustive oracle ----------------------------------------------------------


def test_oracle_unit():
    assert bigstep_oracle([Star()]) == {(Star(),)}


def test_oracle_exchange():
    comps = [t(s) for s in RUNS["exchange"][0]]
    assert bigstep_oracle(comps) == {(Inl(Star()), Star())}


def test_oracle_communicating_pair_with_capture():
    got = bigstep_oracle([t(COMMPAIR)], eval_subst=True)
    assert got == {(t("* (x) inl *"),)}


def test_oracle_is_empty_exactly_when_nothing_evaluates():
    assert bigstep_oracle([t("c (~c (inl *))")]) == set()
    assert bigstep_oracle([t(COMMPAIR)]) == set()


@pytest.mark.parametrize("name", sorted(RUNS))
def test_oracle_agrees_with_the_machine(name):
    sources, flag = RUNS[name]
    comps = [t(s) for s in sources]
    got = evaluate(comps, eval_subst=flag)
    derivable = bigstep_oracle(comps, eval_subst=flag)
    if isinstance(got, Values):
        assert derivable == {got.values}
        assert all(is_canonical(v) for v in got.values)
    else:
        assert derivable == set()


# --- random programs ----------------------------------------------------------------

_VALUES = st.recursive(
    st.sampled_from([Star(), Lambda("w", Var("w"))]),
    lambda v: st.one_of(
        st.tuples(v, v).map(lambda p: TensorIntro(*p)),
        v.map(Inl),
        v.map(Inr),
    ),
    max_leaves=4,
)


def _wrap(pair):
    term, value = pair
    return st.sampled_from([
        (LetPattern(Star(), PStar(), term), value),
        (App(Lambda("f", Var("f")), term), value),
        (LetPattern(TensorIntro(term, Star()), PTensor("a", "b"),
                    TensorIntro(Var("b"), Var("a"))),
         TensorIntro(Star(), value)),
        (Match(Inl(term), "l", Var("l"), "r", Var("r")), value),
        (Match(Inr(term), "l", Var("l"), "r", Var("r")), value),
        (LetPattern(WithPair(term, Star()), PPairLeft("p"), Var("p")), value),
        (LetPattern(WithPair(Star(), term), PPairRight("q"), Var("q")), value),
        (TensorIntro(term, Star()), TensorIntro(value, Star())),
        (Inr(term), Inr(value)),
    ])


_PROGRAMS = st.recursive(
    _VALUES.map(lambda v: (v, v)),
    lambda inner: inner.flatmap(_wrap),
    max_leaves=6,
)


@given(_PROGRAMS)
@settings(max_examples=60, deadline=None)
def test_quiet_programs_reach_their_predicted_value(pair):
    term, value = pair
    r = evaluate([term])
    assert r == Values((value,))
    assert is_canonical(value)
    assert bigstep_oracle([term]) == {(value,)}


@given(_PROGRAMS, st.integers(min_value=0, max_value=2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_channels_carry_computed_values(pair, seed):
    term, value = pair
    r = evaluate([Chan(C, term), Chan(CO, Star())], seed=seed)
    assert r == Values((Star(), value))
