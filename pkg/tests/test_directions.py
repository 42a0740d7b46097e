import pytest

from core import Const, Var, parse_term, parse_tree
from directions import (
    annotate_deepest,
    annotate_grammar,
    annotate_term,
    cp,
    decisions_towards,
    directed,
    parse_directed_tree,
    path_project,
    plen,
    project_term,
    rmd,
    split_direction,
)
from embed import hom_embed
from errors import ArityMismatch, GrammarSyntaxError
from reduce import run_with_decisions, tree_of

D = parse_directed_tree


def test_direction_names():
    assert directed("a", 2) == "a<2>"
    assert split_direction("a<2>") == ("a", 2)
    assert split_direction("a") == ("a", None)


def test_path_length():
    assert plen(D("a<0>")) == 1
    assert plen(D("(a<1> b<0> c<0>)")) == 2
    assert plen(D("(a<1> (a<1> (a<1> e<0> e<0>) e<0>) e<0>)")) == 4


def test_direction_beyond_arity():
    with pytest.raises(ArityMismatch):
        D("(a<3> e<0> e<0>)")
    with pytest.raises(GrammarSyntaxError):
        D("(a e e)")


def test_remove_directions():
    assert rmd(D("(a<2> e<0> e<0>)")) == parse_tree("(a e e)")


def test_deepest_annotation_follows_depth():
    tree = parse_tree("(a (a e e) (a (a e e) e))")
    annotated = annotate_deepest(tree)
    assert rmd(annotated) == tree
    assert plen(annotated) == tree.depth


def test_removal_keeps_embeddings():
    small = D("(a<1> e<0> e<0>)")
    big = D("(a<2> e<0> (a<1> e<0> e<0>))")
    assert hom_embed(small, big)
    assert hom_embed(rmd(small), rmd(big))


def test_annotated_rule_body():
    body = parse_term("(a x x)", bound=["x"])
    assert annotate_term(body) == parse_term("(+ (a<1> x x) (a<2> x x))", bound=["x"])
    assert annotate_term(Const("e")) == Const("e<0>")


def test_path_projection():
    assert project_term(parse_term("(a<1> x y)", bound=["x", "y"])) == Const("a.1", (Var("x"),))
    assert project_term(Const("a<0>")) == Const("e")
    g, h, u = path_project(parse_term("(a<2> e<0> [])"), parse_term("[]"), Const("b<0>"))
    assert g == parse_term("(a.2 [])")
    assert u == Const("e")


def test_selected_path_word():
    assert cp(D("a<0>")) == parse_tree("e")
    assert cp(D("(a<2> e<0> b<0>)")) == parse_tree("(a.2 e)")


def test_choices_towards_a_directed_target():
    plain = parse_term("(app (lam (x o) (a x x)) (a e e))")
    target = annotate_deepest(tree_of(plain))
    annotated = annotate_term(plain)
    decisions = decisions_towards(annotated, target)
    assert tree_of(run_with_decisions(annotated, decisions)) == target


def test_annotated_grammar_keeps_its_language(g2):
    directed_g2 = annotate_grammar(g2)
    assert directed_g2.nt_types == g2.nt_types
    assert directed_g2.alphabet.arity("a<1>") == 2
    assert directed_g2.alphabet.arity("e<0>") == 0
