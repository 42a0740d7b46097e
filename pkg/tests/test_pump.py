import json

import pytest

from config import Config
from core import fill, iterate_context, parse_tree
from directions import cp, path_project, plen, rmd
from embed import word_strict_subseq
from errors import ChainViolation, FiniteLanguageSuspected, GrammarSyntaxError
from flagtypes import find_pumpable, find_pumpable_directed
from grammar import word_of
from pump import (
    SATURATED,
    exp_tower,
    format_bound,
    order_induction,
    parse_triple,
    pump_grammar,
    pump_triple,
    pump_word_grammar,
    verify_chain,
)
from reduce import tree_of


def test_exp_tower():
    assert exp_tower(0, 5) == 5
    assert exp_tower(1, 3) == 8
    assert exp_tower(2, 3) == 256
    assert exp_tower(3, 10) == SATURATED
    assert exp_tower(1, 100) == SATURATED
    assert format_bound(SATURATED) == "saturated"


def test_order1_counterexample(order1_triple, config):
    C, D, t, _ = order1_triple
    cert = pump_triple(C, D, t, 1, config.override(prefix=3))
    assert (cert.j, cert.k) == (1, 1)
    assert cert.trees == [parse_tree("(a e)"), parse_tree("(a (a e))"), parse_tree("(a (a (a e)))")]


def test_parity_counterexample(parity_triple, config):
    C, D, t, kappa = parity_triple
    cert = pump_triple(C, D, t, 2, config)
    assert (cert.j, cert.k) == (0, 2)
    assert [tree.size for tree in cert.trees] == [3, 5, 7, 9]
    assert cert.step_table()["forward"].iloc[:-1].all()


def test_chain_violation_reports_the_step(order1_triple, config):
    C, D, t, _ = order1_triple
    with pytest.raises(ChainViolation) as raised:
        verify_chain(C, D, t, 0, 1, 3, 1, config=config)
    assert raised.value.index == 0


def test_induction_pair_is_tightened(order1_triple, config):
    C, D, t, _ = order1_triple
    result = order_induction(C, D, t, 1, config)
    assert (result.j, result.k) == (1, 1)
    if result.derived is not None:
        assert result.derived[0] >= result.j
        assert result.derived[1] >= result.k


def test_g2_chain(g2, config):
    cert = pump_grammar(g2, config.override(prefix=3))
    assert (cert.j, cert.k) == (0, 1)
    assert [tree.size for tree in cert.trees] == [7, 31, 511]
    assert cert.trees[0] == parse_tree("(a (a e e) (a e e))")
    assert all(step.member for step in cert.steps)
    assert cert.grammar == "g2"
    json.dumps(cert.to_dict(), default=str)


def test_finite_language_is_not_pumped(finite, config):
    with pytest.raises(FiniteLanguageSuspected):
        pump_grammar(finite, config)


def test_certificate_text(order1_triple, config):
    C, D, t, _ = order1_triple
    cert = pump_triple(C, D, t, 1, config.override(prefix=3), name="counter_order1")
    text = cert.to_text()
    assert "offset j = 1, period k = 1" in text
    assert list(cert.step_table().columns) == ["i", "exponent", "size", "bound", "forward", "backward", "member"]


def test_malformed_triple():
    with pytest.raises(GrammarSyntaxError):
        parse_triple("(triple o e)")
    with pytest.raises(GrammarSyntaxError):
        parse_triple("(triple (-> o o) [] (a []) e)")


@pytest.mark.slow
def test_word_chain_of_powers_of_two(pow2_words, config):
    cert = pump_word_grammar(pow2_words, config)
    assert cert.kind == "word"
    lengths = [len(w) for w in cert.words]
    assert all(n & (n - 1) == 0 for n in lengths)
    assert all(word_strict_subseq(a, b) for a, b in zip(cert.words, cert.words[1:]))
    for step in cert.steps:
        assert step.size <= step.bound
    assert all(step.member for step in cert.steps[:3])


def test_chain_member_outside_the_language(order1_triple, finite, config):
    C, D, t, _ = order1_triple
    with pytest.raises(ChainViolation) as raised:
        verify_chain(C, D, t, 1, 1, 3, 1, grammar=finite, config=config)
    assert raised.value.index == 2


def test_chain_members_are_rechecked(order1_triple, counter_order1, config):
    C, D, t, _ = order1_triple
    cert = verify_chain(C, D, t, 1, 1, 3, 1, grammar=counter_order1, config=config)
    assert [step.member for step in cert.steps] == [True, True, True]


def _check_directed_path(C, D, t, config, rounds):
    directed_triple = find_pumpable_directed(C, D, t, config)
    p, q = directed_triple.p, directed_triple.q
    gp, hp, up = path_project(directed_triple.G, directed_triple.H, directed_triple.u)
    plens = []
    for i in range(rounds):
        tree = tree_of(directed_triple.iterate(i))
        assert rmd(tree) == tree_of(fill(C, iterate_context(D, q + i * p, t)))
        path = tree_of(fill(gp, iterate_context(hp, i, up)))
        assert plen(tree) == len(word_of(path)) + 1
        assert cp(tree) == path
        plens.append(plen(tree))
    tail = plens[1:]
    assert all(a < b for a, b in zip(tail, tail[1:]))


@pytest.mark.parametrize("name", ["order1_triple", "parity_triple"])
def test_directed_path_of_a_triple(name, request, config):
    C, D, t, _ = request.getfixturevalue(name)
    _check_directed_path(C, D, t, config, 4)


@pytest.mark.slow
def test_directed_path_of_g2(g2, config):
    triple = find_pumpable(g2, config)
    _check_directed_path(triple.C, triple.D, triple.t, config, 3)
