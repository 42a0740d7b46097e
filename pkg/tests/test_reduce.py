import numpy as np
import pytest

from cli import random_word_term
from core import (
    Abs,
    App,
    Const,
    Var,
    alpha_equal,
    children,
    fill,
    parse_term,
    parse_tree,
    subst,
    term_to_tree,
    with_children,
)
from errors import NoTreeReachable
from grammar import Grammar, parse_grammar, start_term
from reduce import (
    LEFT,
    RIGHT,
    cbn_step,
    decisions_for,
    enumerate_language,
    is_linear,
    is_linear_pair,
    normalize,
    run_with_decisions,
    stratified_reduce,
    tree_of,
)

PI_1 = parse_tree("(a e e)")
PI_2 = parse_tree("(a (a e e) (a e e))")


def test_beta_step():
    assert cbn_step(parse_term("(app (lam (x o) x) e)")) == {Const("e")}


def test_choice_step_has_both_reducts():
    assert cbn_step(parse_term("(+ e (a e))")) == {Const("e"), parse_term("(a e)")}


def test_tree_of():
    assert tree_of(parse_term("(app (lam (x o) (a x x)) e)")) == PI_1
    t = parse_term("(app (lam (f (-> o o)) (app f (app f e))) (lam (x o) (a x x)))")
    assert tree_of(t) == PI_2


def test_non_monotone_order1_pair(order1_triple):
    C, D, t, _ = order1_triple
    assert tree_of(fill(C, t)) == parse_tree("(a (a e))")
    assert tree_of(fill(C, fill(D, t))) == parse_tree("(a e)")


def test_linearity():
    assert is_linear("x", parse_term("x", bound=["x"]))
    assert not is_linear("x", parse_term("(app (lam (y o) e) x)", bound=["x"]))
    assert not is_linear("x", parse_term("(a x x)", bound=["x"]))


def test_linear_pair(order1_triple):
    C, D, _, _ = order1_triple
    report = is_linear_pair(C, D, probe_depth=3)
    assert report.ok
    erasing = parse_term("(app (lam (x o) e) [])")
    assert not is_linear_pair(parse_term("[]"), erasing, probe_depth=2)


def test_enumeration_of_choices():
    found = enumerate_language(parse_term("(+ e (a e))"))
    assert found.trees == {parse_tree("e"), parse_tree("(a e)")}
    assert not found.truncated


def test_g2_enumeration_within_16_nodes(g2):
    found = enumerate_language(start_term(g2), 16, equations=g2.equations)
    assert [t.size for t in found.by_size()] == [3, 7]
    assert found.by_size() == [PI_1, PI_2]


def test_decisions_reach_target(g2):
    assert decisions_for(start_term(g2), PI_2, g2.equations) == (RIGHT, LEFT)
    assert decisions_for(start_term(g2), PI_1, g2.equations) == (LEFT,)


def test_unreachable_target(g2):
    with pytest.raises(NoTreeReachable):
        decisions_for(start_term(g2), parse_tree("(a e (a e e))"), g2.equations)


def test_stratified_trace_ends_in_target(g2):
    trace = stratified_reduce(start_term(g2), g2, target=PI_2)
    assert trace.tree() == PI_2
    assert trace.decisions == (RIGHT, LEFT)
    assert trace.steps[0].kind == "unfold"
    assert trace.to_text().splitlines()[0].strip().startswith("0")


G2_TRACE = [
    ("unfold", "(R A)"),
    ("unfold", "((lam (f (-> o o)) (+ (f e) (R (T f)))) A)"),
    ("beta-2", "(+ (A e) (R (T A)))"),
    ("choice-right", "(R (T A))"),
    ("unfold", "((lam (f (-> o o)) (+ (f e) (R (T f)))) (T A))"),
    ("beta-2", "(+ (T A e) (R (T (T A))))"),
    ("choice-left", "(T A e)"),
    ("unfold", "((lam (f (-> o o)) (x o) (f (f x))) A e)"),
    ("beta-2", "((lam (x o) (A (A x))) e)"),
    ("beta-1", "(A (A e))"),
    ("unfold", "(A ((lam (x o) (a x x)) e))"),
    ("beta-1", "(A (a e e))"),
    ("unfold", "((lam (x o) (a x x)) (a e e))"),
    ("beta-1", "(a (a e e) (a e e))"),
]


def test_g2_trace_runs_order_blocks_in_sequence(g2):
    trace = stratified_reduce(start_term(g2), g2, target=PI_2)
    nonterminals = tuple(g2.nt_types)
    assert [step.tag for step in trace.steps] == [tag for tag, _ in G2_TRACE]
    for step, (_, text) in zip(trace.steps, G2_TRACE):
        assert alpha_equal(step.after, parse_term(text, g2.alphabet, nonterminals=nonterminals)), text
    assert [step.level for step in trace.steps] == [2] * 9 + [1] * 5
    assert trace.top_level == 2


def test_order2_redex_is_contracted_first(g2):
    t = parse_term("(app (lam (f (-> o o)) (app f (app f e))) (lam (x o) (a x x)))")
    closed = Grammar(g2.alphabet, {}, (), "S", "closed-term")
    trace = stratified_reduce(t, closed, decisions=())
    assert [step.tag for step in trace.steps] == ["beta-2", "beta-1", "beta-1"]
    assert alpha_equal(trace.steps[0].after, parse_term("(app (lam (x o) (a x x)) (app (lam (x o) (a x x)) e))"))
    assert alpha_equal(trace.steps[1].after, parse_term("(app (lam (x o) (a x x)) (a e e))"))
    assert trace.tree() == PI_2


# ==========================
# PROPERTIES
# ==========================

def innermost_normal(t):
    """Applicative-order normal form: arguments and bodies before the redex"""
    if isinstance(t, Abs):
        return Abs(t.var, t.vtype, innermost_normal(t.body))
    t = with_children(t, [innermost_normal(c) for _, c in children(t)])
    if isinstance(t, App) and isinstance(t.fun, Abs):
        return innermost_normal(subst(t.fun.body, t.fun.var, t.arg))
    return t


def open_leaves(rng, t, name="w"):
    if t == Const("e"):
        return Var(name) if rng.integers(2) else t
    kids = children(t)
    if not kids:
        return t
    return with_children(t, [open_leaves(rng, c, name) for _, c in kids])


def naive_language(t, equations):
    """Every tree reachable by call-by-name steps, without memoization"""
    if t.is_tree:
        return {term_to_tree(t)}
    found = set()
    for s in cbn_step(t, equations):
        found |= naive_language(s, equations)
    return found


FINITE_ORDER2 = """
terminal a 2.
terminal b 1.
terminal e 0.

nonterminal S : o.
nonterminal F : (o -> o) -> o.
nonterminal G : o -> o.

S -> F G.
S -> G e.
F f -> f (f e).
F f -> a (f e) e.
G x -> b x.
G x -> a x x.

start S.
"""


def test_reduction_order_does_not_change_the_tree():
    rng = np.random.default_rng(7)
    for _ in range(60):
        t = random_word_term(rng, 6)
        assert term_to_tree(innermost_normal(t)) == tree_of(t)


def test_substitution_commutes_with_normalization():
    rng = np.random.default_rng(11)
    s = parse_term("(a (b e))")
    for _ in range(40):
        t = open_leaves(rng, random_word_term(rng, 5))
        assert tree_of(subst(t, "w", s)) == tree_of(subst(normalize(t), "w", s))


@pytest.mark.parametrize("source", ["finite", "order2"])
def test_enumeration_matches_unmemoized_search(source, finite):
    grammar = finite if source == "finite" else parse_grammar(FINITE_ORDER2, name="finite-order2")
    start = start_term(grammar)
    expected = naive_language(start, grammar.equations)
    found = enumerate_language(start, 20, equations=grammar.equations)
    assert not found.truncated
    assert found.trees == expected
    if source == "order2":
        assert len(expected) == 10


@pytest.mark.parametrize("name", ["g2", "finite"])
def test_stratified_and_plain_runs_agree(name, request):
    grammar = request.getfixturevalue(name)
    start = start_term(grammar)
    found = enumerate_language(start, 16, equations=grammar.equations)
    assert found.order
    for tree in found.order:
        decisions = found.decisions[tree]
        assert tree_of(run_with_decisions(start, decisions, grammar.equations)) == tree
        assert stratified_reduce(start, grammar, decisions=decisions).tree() == tree
