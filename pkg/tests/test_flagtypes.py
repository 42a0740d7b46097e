import pytest

from core import HOLE, RankedAlphabet, alpha_equal, parse_term, parse_tree
from directions import parse_directed_tree, plen, rmd
from errors import BudgetExhausted, NotAReduct, OutOfRangeFlag, ZeroCounter
from flagtypes import (
    build_root_derivation,
    check_derivation,
    comp_n,
    derive_tree,
    find_pumpable,
    find_pumpable_directed,
    increase_order,
    markers_of,
    pump,
    subject_expand,
    verify_soundness,
)
from grammar import start_term
from pump import exp_tower
from reduce import stratified_reduce, tree_of

PI_2 = parse_tree("(a (a e e) (a e e))")


def test_comp_values():
    assert comp_n([({0}, 0), ({0}, 0)], {0}, 1) == (frozenset(), 2)
    assert comp_n([({0}, 0)], {0}, 1) == (frozenset(), 1)


def test_comp_without_markers_is_union_and_sum():
    assert comp_n([({0}, 1), ({1}, 2)], set(), 2) == (frozenset({0, 1}), 3)


def test_comp_carries_flags_up():
    flags, counter = comp_n([({0}, 0), ({0}, 0)], {0}, 2)
    assert flags == frozenset({1})
    assert counter == 0


def test_comp_rejects_out_of_range_levels():
    with pytest.raises(OutOfRangeFlag):
        comp_n([({1}, 0)], set(), 1)
    with pytest.raises(OutOfRangeFlag):
        comp_n([({0}, 0)], {3}, 2)


def test_marked_tree_counter():
    d = derive_tree(PI_2)
    assert d.level == 1
    assert d.counter == 5
    assert d.type.markers == frozenset({0})
    assert not d.type.flags
    assert check_derivation(d).ok


def test_unmarked_tree_has_zero_counter():
    d = derive_tree(PI_2, marked=False)
    assert d.counter == 0
    assert d.type.flags == frozenset({0})
    with pytest.raises(ZeroCounter):
        increase_order(d)


def test_increase_order_bounds_the_old_counter():
    d = derive_tree(PI_2)
    raised = increase_order(d)
    assert raised.level == 2
    assert 2 ** raised.counter >= d.counter
    assert raised.type.markers == frozenset({0, 1})
    assert check_derivation(raised).ok


def test_g2_root_derivation(g2):
    trace = stratified_reduce(start_term(g2), g2, target=PI_2)
    d = build_root_derivation(g2, PI_2, trace)
    assert d.level == 2
    assert d.counter == 3
    assert not d.type.flags
    assert d.type.markers == frozenset({0, 1})
    assert check_derivation(d, g2.equations).ok
    tree, ok = verify_soundness(d, g2)
    assert tree == PI_2
    assert ok
    assert d.counter <= tree.size
    assert exp_tower(2, d.counter) >= tree.size


def test_pumped_derivations(g2):
    triple = find_pumpable(g2)
    c1, c2, c3 = triple.costs
    assert c2 > 0
    sizes = []
    for k in range(3):
        d = pump(triple, k)
        assert check_derivation(d, g2.equations).ok
        assert d.counter == c1 + k * c2 + c3
        tree = tree_of(triple.iterate(k))
        assert tree_of(d.output) == tree
        sizes.append(tree.size)
    assert sizes == sorted(set(sizes))


def test_directed_leaf_counter():
    d = derive_tree(parse_directed_tree("e<0>"), directed=True)
    assert d.counter == 1
    assert check_derivation(d, directed=True).ok


def test_directed_counter_follows_the_path():
    tree = parse_directed_tree("(a<2> e<0> (a<1> e<0> e<0>))")
    d = derive_tree(tree, directed=True)
    assert check_derivation(d, directed=True).ok
    assert 0 < d.counter <= 2 * plen(tree)
    assert (d.counter, plen(tree)) == (5, 3)


def test_subject_expand_keeps_the_counter(g2):
    trace = stratified_reduce(start_term(g2), g2, target=PI_2)
    step = trace.steps[-1]
    d = derive_tree(PI_2)
    while d.level < step.level:
        d = increase_order(d)
    expanded = subject_expand(d, step)
    assert expanded.counter == d.counter
    assert alpha_equal(expanded.subject, step.before)
    assert check_derivation(expanded, g2.equations).ok


def test_subject_expand_rejects_a_foreign_step(g2):
    trace = stratified_reduce(start_term(g2), g2, target=PI_2)
    with pytest.raises(NotAReduct):
        subject_expand(derive_tree(PI_2), trace.steps[0])


def test_directed_triple_for_g2(g2, config):
    triple = find_pumpable(g2, config)
    directed_triple = find_pumpable_directed(triple.C, triple.D, triple.t, config)
    assert directed_triple.p >= 1
    assert 0 <= directed_triple.q
    for k in range(3):
        got = tree_of(directed_triple.iterate(k))
        n = directed_triple.p * k + directed_triple.q
        assert rmd(got) == tree_of(triple.iterate(n))
    plens = directed_triple.plens[1:]
    assert all(a < b for a, b in zip(plens, plens[1:]))


def test_identity_context_has_no_directed_triple(config):
    with pytest.raises(BudgetExhausted):
        find_pumpable_directed(HOLE, HOLE, parse_term("(a e e)", RankedAlphabet({"a": 2, "e": 0})), config)


def _marker_problems(d):
    for node in d.nodes():
        n = node.level
        if node.counter > 0 and node.type.order <= n - 1 and (n - 1) not in node.type.markers:
            yield node, "positive counter without marker n-1"
        if not markers_of(node.env) <= node.type.markers:
            yield node, "environment markers outside the judgment"


def test_marker_conditions_hold_at_every_node(g2):
    trace = stratified_reduce(start_term(g2), g2, target=PI_2)
    root = build_root_derivation(g2, PI_2, trace)
    assert list(_marker_problems(root)) == []
    triple = find_pumpable(g2)
    for k in range(4):
        assert list(_marker_problems(pump(triple, k))) == []


def test_expansion_replays_the_whole_trace(g2):
    trace = stratified_reduce(start_term(g2), g2, target=PI_2)
    d = derive_tree(PI_2)
    for step in reversed(trace.steps):
        while d.level < step.level:
            d = increase_order(d)
        expanded = subject_expand(d, step)
        assert expanded.counter == d.counter
        assert alpha_equal(expanded.subject, step.before)
        assert check_derivation(expanded, g2.equations).ok
        d = expanded
    assert alpha_equal(d.subject, start_term(g2))


@pytest.mark.slow
def test_pumped_derivations_stay_valid(g2):
    triple = find_pumpable(g2)
    c1, c2, c3 = triple.costs
    for k in range(6):
        d = pump(triple, k)
        assert check_derivation(d, g2.equations).ok
        assert d.counter == c1 + k * c2 + c3
