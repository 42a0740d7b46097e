import pytest

from config import Config
from core import O, arrow, fill, iterate_context, order_of_term, parse_term, parse_tree, parse_type, type_check
from errors import NonWordAlphabet, RefinementSpaceTooLarge
from grammar import leaves, word_of
from lower import (
    FST_O,
    IArrow,
    balanced,
    first_refinement_count,
    first_transform,
    lower_triple,
    preprocess,
    remove_eps,
    second_refinement_count,
    second_transform_closed,
    unbalanced,
)
from reduce import is_linear_pair, tree_of


def test_remove_eps():
    assert remove_eps("aeb") == ("a", "b")
    assert remove_eps("") == ()
    assert remove_eps("eee") == ()


def test_refinement_counts():
    assert first_refinement_count(O) == 1
    assert first_refinement_count(arrow(O, O)) == 2
    assert first_refinement_count(arrow(O, O, O)) == 3
    assert first_refinement_count(parse_type("(-> (-> o o o) (-> o o o) (-> o o o) o)")) == 256
    assert second_refinement_count(O) == 2
    assert second_refinement_count(arrow(O, O)) == 8


def test_refinement_cap():
    with pytest.raises(RefinementSpaceTooLarge):
        first_refinement_count(parse_type("(-> (-> o o o) (-> o o o) (-> o o o) o)"), cap=100)


def test_balance_of_refinements():
    assert unbalanced(FST_O)
    assert not balanced(FST_O)
    ident = IArrow((FST_O,), FST_O, arrow(O, O))
    assert not unbalanced(ident)
    assert balanced(ident)


WORD_TERMS = [
    "e",
    "(a (b e))",
    "(app (lam (x o) x) (a e))",
    "(app (lam (f (-> o o)) (y o) (a (app f y))) (lam (z o) (b z)) e)",
]


@pytest.mark.parametrize("source", WORD_TERMS)
def test_first_transformation_keeps_the_word(source):
    t = parse_term(source)
    out = tree_of(first_transform([], t))
    assert remove_eps(leaves(out)) == word_of(tree_of(t))


@pytest.mark.parametrize("source", WORD_TERMS)
def test_first_transformation_lowers_the_order(source):
    t = parse_term(source)
    n = order_of_term({}, t)[0]
    assert order_of_term({}, first_transform([], t))[0] <= max(n - 1, 0)


def test_first_transformation_of_a_word():
    out = tree_of(first_transform([], parse_term("(a (b e))")))
    assert out.label == "br"
    assert leaves(out) == ("a", "b", "e")


def test_first_transformation_needs_a_word_alphabet():
    with pytest.raises(NonWordAlphabet):
        first_transform([], parse_term("(br e e)"))


def test_second_transformation():
    assert tree_of(second_transform_closed(parse_term("e"))) == parse_tree("e")
    assert tree_of(second_transform_closed(parse_term("(br a e)"))) == parse_tree("a")
    assert tree_of(second_transform_closed(parse_term("(br a b)"))) == parse_tree("(br a b)")


def test_preprocessing_removes_ground_binders_of_high_order_functions():
    t = parse_term("(lam (x o) (f (-> o o)) (app f x))")
    assert type_check({}, preprocess(t)) == parse_type("(-> (-> o o) (-> o o) o)")
    order1 = parse_term("(lam (x o) (a x))")
    assert preprocess(order1) == order1


def _check_lowered(C, D, t, lowered, rounds=3):
    for i in range(rounds):
        word = word_of(tree_of(fill(C, iterate_context(D, lowered.c * i + lowered.d, t))))
        assert remove_eps(leaves(tree_of(lowered.iterate(i)))) == word


def test_lowering_the_order1_triple(order1_triple):
    C, D, t, _ = order1_triple
    lowered = lower_triple(C, D, t)
    assert lowered.c >= 1
    _check_lowered(C, D, t, lowered)


def test_lowering_the_parity_triple(parity_triple):
    C, D, t, _ = parity_triple
    lowered = lower_triple(C, D, t, Config())
    assert lowered.c >= 1
    _check_lowered(C, D, t, lowered)
    G, H, u, c, d = lowered
    assert (c, d) == (lowered.c, lowered.d)


@pytest.mark.parametrize("name", ["order1_triple", "parity_triple"])
def test_lowered_triple_is_linear_and_one_order_less(name, request):
    C, D, t, _ = request.getfixturevalue(name)
    n = order_of_term({}, fill(C, iterate_context(D, 1, t)))[0]
    lowered = lower_triple(C, D, t)
    assert is_linear_pair(lowered.G, lowered.H, probe_depth=3)
    for i in range(3):
        assert order_of_term({}, lowered.iterate(i))[0] <= max(n - 1, 0)
