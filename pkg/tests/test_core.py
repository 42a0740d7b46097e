import pytest

from core import (
    O,
    Const,
    RankedAlphabet,
    Tree,
    Var,
    alpha_equal,
    arrow,
    fill,
    format_type,
    iterate_context,
    order_of_term,
    parse_term,
    parse_tree,
    parse_type,
    size,
    subst,
    type_check,
    type_order,
)
from errors import ArityMismatch, GrammarSyntaxError, TypeMismatch, UnboundVariable


def test_identity_has_type_o_to_o():
    assert type_check({}, parse_term("(lam (x o) x)")) == arrow(O, O)


def test_redex_order_and_external_order():
    t = parse_term("(app (lam (x o) x) e)")
    assert type_check({}, t) == O
    assert order_of_term({}, t) == (1, 0)
    assert order_of_term({}, parse_term("e")) == (0, 0)
    assert order_of_term({}, parse_term("(lam (f (-> o o)) (app f e))")) == (2, 2)


def test_partially_applied_terminal_is_rejected():
    alphabet = RankedAlphabet({"a": 2, "e": 0})
    with pytest.raises(ArityMismatch):
        type_check({}, Const("a"), alphabet=alphabet)


def test_unbound_variable():
    with pytest.raises(UnboundVariable):
        type_check({}, Var("x"))


def test_hole_needs_a_declared_type():
    with pytest.raises(TypeMismatch):
        type_check({}, parse_term("(app [] e)"))
    assert type_check({}, parse_term("(app [] e)"), hole_type=arrow(O, O)) == O


def test_sizes():
    assert size(Var("x")) == 1
    assert size(parse_term("(a e e)")) == 3
    assert size(parse_term("(lam (x o) x)")) == 2
    assert size(parse_term("(lam (x o) [])")) == 1


def test_fill_captures():
    filled = fill(parse_term("(lam (x o) [])"), Var("x"))
    assert alpha_equal(filled, parse_term("(lam (y o) y)"))
    assert fill(parse_term("[]"), parse_term("e")) == Const("e")


def test_iterate_context():
    d = parse_term("(a [])")
    assert iterate_context(d, 3, Const("e")) == parse_term("(a (a (a e)))")
    assert iterate_context(d, 0, Const("e")) == Const("e")


def test_substitution_avoids_capture():
    t = subst(parse_term("(lam (y o) (a x y))"), "x", Var("y"))
    assert t.free_vars == frozenset({"y"})
    assert not alpha_equal(t, parse_term("(lam (y o) (a y y))"))


def test_alpha_equality():
    assert alpha_equal(parse_term("(lam (x o) (y o) x)"), parse_term("(lam (u o) (v o) u)"))
    assert not alpha_equal(parse_term("(lam (x o) (y o) x)"), parse_term("(lam (u o) (v o) v)"))


def test_types():
    kappa = parse_type("(-> o o o)")
    assert kappa == arrow(O, O, O)
    assert format_type(kappa) == "(-> o (-> o o))"
    assert type_order(parse_type("(-> (-> o o) o)")) == 2
    assert type_order(O) == 0


def test_trees():
    pi2 = parse_tree("(a (a e e) (a e e))")
    assert pi2.size == 7
    assert pi2.depth == 3
    assert str(pi2) == "(a (a e e) (a e e))"


def test_malformed_sexpr():
    with pytest.raises(GrammarSyntaxError):
        parse_term("(lam (x o) x")
    with pytest.raises(GrammarSyntaxError):
        parse_type("(=> o o)")


def test_derived_attributes_of_deep_terms():
    t = Const("e")
    for _ in range(50_000):
        t = Const("a", (t,))
    assert t.is_tree
    assert t.size == 50_001
    assert not t.has_choice
    assert t.holes == 0
    assert t.free_vars == frozenset()


def test_deep_trees_hash_and_compare():
    def chain(n):
        tree = Tree("e")
        for _ in range(n):
            tree = Tree("a", (tree,))
        return tree

    left, right = chain(50_000), chain(50_000)
    assert left.depth == 50_001
    assert left.size == 50_001
    assert hash(left) == hash(right)
    assert left == right
    assert left != chain(49_999)
