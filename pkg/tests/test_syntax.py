from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from amida.syntax import (
    App,
    Chan,
    ChannelId,
    Inl,
    Inr,
    Lambda,
    LetPattern,
    Match,
    NonLinearSyntax,
    PPairLeft,
    PStar,
    PTensor,
    Star,
    TensorIntro,
    Term,
    Var,
    WithPair,
    alpha_eq,
    channels_of,
    free_variables,
    ign,
    is_canonical,
    substitute,
    term_key,
)


def v(name: str) -> Var:
    return Var(name)


def test_free_variables_tensor():
    assert free_variables(TensorIntro(v("x"), v("y"))) == {"x", "y"}


def test_free_variables_rejects_duplicate_use():
    with pytest.raises(NonLinearSyntax):
        free_variables(TensorIntro(v("x"), v("x")))
    with pytest.raises(NonLinearSyntax):
        free_variables(App(v("f"), v("f")))


def test_free_variables_rejects_unused_binder():
    with pytest.raises(NonLinearSyntax):
        free_variables(Lambda("x", Star()))


def test_with_pair_arms_must_agree():
    assert free_variables(WithPair(v("x"), v("x"))) == {"x"}
    with pytest.raises(NonLinearSyntax):
        free_variables(WithPair(v("x"), v("y")))


def test_match_arms_agree_outside_binders():
    t = Match(v("z"), "x", TensorIntro(v("x"), v("w")),
              "y", TensorIntro(v("y"), v("w")))
    assert free_variables(t) == {"z", "w"}
    bad = Match(v("z"), "x", v("x"), "y", TensorIntro(v("y"), v("w")))
    with pytest.raises(NonLinearSyntax):
        free_variables(bad)


def test_let_pattern_scoping():
    t = LetPattern(v("p"), PTensor("a", "b"), TensorIntro(v("a"), v("b")))
    assert free_variables(t) == {"p"}
    with pytest.raises(NonLinearSyntax):
        free_variables(LetPattern(v("p"), PTensor("a", "a"), v("a")))
    with pytest.raises(NonLinearSyntax):
        free_variables(LetPattern(v("p"), PTensor("a", "b"), v("a")))


def test_substitute_renames_captured_binder():
    t = Lambda("y", TensorIntro(v("x"), v("y")))
    out = substitute(t, "x", v("y"))
    assert out == Lambda("y'", TensorIntro(v("y"), v("y'")))
    assert alpha_eq(out, Lambda("q", TensorIntro(v("y"), v("q"))))


def test_substitute_under_pattern_binders():
    t = LetPattern(v("s"), PTensor("a", "b"),
                   TensorIntro(v("a"), TensorIntro(v("b"), v("x"))))
    out = substitute(t, "x", TensorIntro(v("a"), v("c")))
    assert free_variables(out) == {"s", "a", "c"}
    # the pattern's own `a` moved out of the way
    assert isinstance(out, LetPattern)
    assert out.pattern != PTensor("a", "b")


def test_channels_count_both_halves():
    c = ChannelId("c")
    t = Chan(c.dual(), Chan(c, v("x")))
    assert channels_of(t) == {c: 1, c.dual(): 1}
    assert c.dual().dual() == c
    assert c.dual() != c


def test_channels_counted_under_binders():
    c = ChannelId("c")
    t = Lambda("x", Chan(c, v("x")))
    assert channels_of(t) == {c: 1}


def test_is_canonical():
    assert is_canonical(Star())
    assert is_canonical(Lambda("x", v("x")))
    assert is_canonical(WithPair(v("x"), v("x")))
    assert is_canonical(TensorIntro(Star(), Inl(Star())))
    assert not is_canonical(v("x"))
    assert not is_canonical(App(Lambda("x", v("x")), Star()))
    assert not is_canonical(Chan(ChannelId("c"), Star()))
    assert not is_canonical(Inr(Chan(ChannelId("c"), Star())))
    # suspended channels do not break canonicity
    assert is_canonical(Lambda("x", Chan(ChannelId("c"), v("x"))))


def test_alpha_eq_binders_and_channels():
    assert alpha_eq(Lambda("x", v("x")), Lambda("y", v("y")))
    assert not alpha_eq(v("x"), v("y"))
    c = ChannelId("c")
    assert not alpha_eq(Chan(c, Star()), Chan(c.dual(), Star()))
    assert alpha_eq(
        Match(v("z"), "a", Inl(v("a")), "b", Inr(v("b"))),
        Match(v("z"), "p", Inl(v("p")), "q", Inr(v("q"))),
    )
    assert not alpha_eq(
        Match(v("z"), "a", Inl(v("a")), "b", Inr(v("b"))),
        Match(v("z"), "a", Inl(v("a")), "b", Inl(v("b"))),
    )


def test_ign_builds_nested_lets():
    t = ign([v("a"), v("b")], Star())
    assert t == LetPattern(v("a"), PStar(), LetPattern(v("b"), PStar(), Star()))
    assert ign([], v("x")) == v("x")


# --- random linear terms -------------------------------------------------

NAMES = [f"v{i}" for i in range(12)]


def linear_term(draw, fvs: tuple[str, ...], depth: int) -> Term:
    opts: list[str] = []
    if not fvs:
        opts.append("star")
    if len(fvs) == 1:
        opts.append("var")
    if len(fvs) >= 2:
        opts.append("spill")
    if depth > 0:
        opts += ["lam", "tensor", "app", "with", "inl", "letstar", "letpair", "match"]
    kind = draw(st.sampled_from(opts))
    fresh = [n for n in NAMES if n not in fvs]
    match kind:
        case "star":
            return Star()
        case "var":
            return Var(fvs[0])
        case "spill":
            out: Term = Var(fvs[-1])
            for name in reversed(fvs[:-1]):
                out = TensorIntro(Var(name), out)
            return out
        case "lam":
            x = fresh[0]
            return Lambda(x, linear_term(draw, fvs + (x,), depth - 1))
        case "inl":
            return Inl(linear_term(draw, fvs, depth - 1))
        case "with":
            return WithPair(linear_term(draw, fvs, depth - 1),
                            linear_term(draw, fvs, depth - 1))
        case "tensor" | "app":
            cut = draw(st.integers(0, len(fvs)))
            l = linear_term(draw, fvs[:cut], depth - 1)
            r = linear_term(draw, fvs[cut:], depth - 1)
            return TensorIntro(l, r) if kind == "tensor" else App(l, r)
        case "letstar":
            cut = draw(st.integers(0, len(fvs)))
            return LetPattern(linear_term(draw, fvs[:cut], depth - 1), PStar(),
                              linear_term(draw, fvs[cut:], depth - 1))
        case "letpair":
            cut = draw(st.integers(0, len(fvs)))
            a, b = fresh[0], fresh[1]
            return LetPattern(linear_term(draw, fvs[:cut], depth - 1),
                              PTensor(a, b),
                              linear_term(draw, fvs[cut:] + (a, b), depth - 1))
        case "match":
            cut = draw(st.integers(0, len(fvs)))
            x, y = fresh[0], fresh[1]
            return Match(linear_term(draw, fvs[:cut], depth - 1),
                         x, linear_term(draw, fvs[cut:] + (x,), depth - 1),
                         y, linear_term(draw, fvs[cut:] + (y,), depth - 1))
    raise AssertionError(kind)


@st.composite
def linear_terms(draw, free: tuple[str, ...] = ()):
    return linear_term(draw, free, draw(st.integers(0, 4)))


@given(linear_terms(free=("u", "w")))
def test_generated_terms_are_linear(t):
    assert free_variables(t) == {"u", "w"}


@given(linear_terms(free=("u",)))
def test_substitution_free_variable_equation(t):
    s = TensorIntro(Var("p"), Var("q"))
    out = substitute(t, "u", s)
    assert free_variables(out) == {"p", "q"}


@given(linear_terms(free=("u",)))
def test_substitution_identity(t):
    assert alpha_eq(substitute(t, "u", Var("u")), t)


@given(linear_terms())
def test_term_key_respects_alpha(t):
    assert alpha_eq(t, t)
    assert term_key(t) == term_key(t)
    out = substitute(Lambda("zz", TensorIntro(Var("zz"), t)), "nope", Star())
    assert isinstance(out, Lambda)
