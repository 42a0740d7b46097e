import numpy as np
import pytest

from cli import oracle_embed, random_tree
from core import O, App, Const, Tree, Var, lam, parse_term, parse_tree, parse_type, tree_to_term
from embed import (
    Order2Type,
    canonical_terms,
    canonical_union,
    find_embedded_pair,
    hom_embed,
    order2_find_period,
    order2_le,
    strict_embed,
    word_strict_subseq,
    word_subseq,
)
from errors import OrderTooHigh
from flagtypes import find_pumpable
from grammar import leaves
from reduce import tree_of

T = parse_tree


def test_embedding_examples():
    assert hom_embed(T("(br a b)"), T("(br (br a c) b)"))
    assert hom_embed(T("(a (a e e) (a e e))"), T("(a (a e e) (a e e))"))
    assert not hom_embed(T("(a e)"), T("(b e)"))


def test_strict_embedding():
    assert strict_embed(T("(a e)"), T("(a (a e))"))
    assert not strict_embed(T("(a e)"), T("(a e)"))
    assert strict_embed(T("(br a b)"), T("(br (br a e) b)"))


def test_leaves_of_a_strict_pair_with_e():
    small, big = T("(br a b)"), T("(br (br a e) b)")
    assert word_strict_subseq(leaves(small), leaves(big))


def test_subsequences():
    assert word_subseq("ab", "aeb")
    assert word_subseq("", "abc")
    assert not word_subseq("ba", "ab")
    assert not word_strict_subseq("ab", "ab")


def test_find_embedded_pair():
    assert find_embedded_pair([T("(a e)"), T("(b e)"), T("(a (a e))")]) == (0, 2)
    assert find_embedded_pair([T("e")]) is None


def test_canonical_sets():
    assert len(canonical_terms("a", 2, 2)) == 1
    assert len(canonical_terms("a", 0, 2)) == 1
    assert len(canonical_terms("a", 2, 4)) == 6
    assert len(canonical_union({0: "c0", 1: "c1", 2: "c2"}, 2)) == 4


def test_order2_type_shapes():
    assert Order2Type.from_simple_type(parse_type("(-> (-> o o o) (-> o o) o)")).shapes == (2, 1)
    with pytest.raises(OrderTooHigh):
        Order2Type.from_simple_type(parse_type("(-> (-> (-> o o) o) o)"))


def test_order2_comparison():
    kappa = parse_type("(-> (-> o o) o)")
    t = parse_term("(lam (f (-> o o)) (app f e))")
    t2 = parse_term("(lam (f (-> o o)) (app f (a e)))")
    assert order2_le(t, t, kappa)
    assert order2_le(t, t2, kappa)

    kappa2 = parse_type("(-> (-> o o o) o)")
    s = parse_term("(lam (f (-> o o o)) (app f e e))")
    s2 = parse_term("(lam (f (-> o o o)) (app f e (a e)))")
    assert order2_le(s, s2, kappa2)
    assert not order2_le(s2, s, kappa2)


def test_identity_iteration_has_period_one():
    kappa = parse_type("(-> (-> o o) o)")
    u = parse_term("(lam (f (-> o o)) (app f e))")
    assert order2_find_period(parse_term("[]"), u, kappa) == (0, 1)


def test_parity_iteration_has_period_two(parity_triple):
    _, D, t, kappa = parity_triple
    assert order2_find_period(D, t, kappa) == (0, 2)


ALPHABET = {"a": 2, "b": 1, "e": 0}


def all_trees(max_size):
    """Every tree over ALPHABET with at most max_size nodes"""
    by_size = {}
    for n in range(1, max_size + 1):
        found = []
        for label, arity in sorted(ALPHABET.items()):
            if arity == 0 and n == 1:
                found.append(Tree(label))
            elif arity == 1 and n > 1:
                found.extend(Tree(label, (c,)) for c in by_size[n - 1])
            elif arity == 2 and n > 2:
                for k in range(1, n - 1):
                    found.extend(Tree(label, (l, r)) for l in by_size[k] for r in by_size[n - 1 - k])
        by_size[n] = found
    return [tree for n in sorted(by_size) for tree in by_size[n]]


def test_all_trees_counts():
    assert len(all_trees(4)) == 1 + 1 + 2 + 4


def test_agrees_with_node_map_search():
    smalls, bigs = all_trees(5), all_trees(8)
    for small in smalls:
        for big in bigs:
            assert hom_embed(small, big) == oracle_embed(small, big), (small, big)


def test_node_map_search_examples():
    assert oracle_embed(parse_tree("(a e e)"), parse_tree("(b (a (b e) e))"))
    assert not oracle_embed(parse_tree("(a (b e) e)"), parse_tree("(a e (b e))"))
    assert not oracle_embed(parse_tree("(a e e)"), parse_tree("(b e)"))


def test_reflexive_and_transitive_on_random_trees():
    rng = np.random.default_rng(11)
    for _ in range(200):
        a, b, c = (random_tree(rng, 6) for _ in range(3))
        assert hom_embed(a, a)
        if hom_embed(a, b) and hom_embed(b, c):
            assert hom_embed(a, c)


@pytest.mark.slow
def test_node_map_search_on_all_small_pairs():
    trees = all_trees(8)
    for small in trees:
        for big in trees:
            if small.size <= big.size:
                assert hom_embed(small, big) == oracle_embed(small, big), (small, big)


BR_ALPHABET = {"br": 2, "c": 0, "d": 0}


def positions(tree, path=()):
    yield path
    for i, c in enumerate(tree.children):
        yield from positions(c, path + (i,))


def graft(tree, path, wrap):
    if not path:
        return wrap(tree)
    kids = list(tree.children)
    kids[path[0]] = graft(kids[path[0]], path[1:], wrap)
    return Tree(tree.label, tuple(kids))


def insert_node(rng, tree, binary="a", unary="b", leaf="e"):
    """Put a new node above a random subtree"""
    paths = list(positions(tree))
    path = paths[rng.integers(len(paths))]
    roll = rng.integers(3) if unary else 1 + rng.integers(2)
    if roll == 0:
        return graft(tree, path, lambda sub: Tree(unary, (sub,)))
    if roll == 1:
        return graft(tree, path, lambda sub: Tree(binary, (sub, Tree(leaf))))
    return graft(tree, path, lambda sub: Tree(binary, (Tree(leaf), sub)))


def unary_function(tree):
    """λx. tree with the x leaves read as the bound variable"""
    def term(node):
        if node.label == "x":
            return Var("x")
        return Const(node.label, tuple(term(c) for c in node.children))

    return lam([("x", O)], term(tree))


def test_inserting_nodes_gives_strictly_larger_trees():
    rng = np.random.default_rng(3)
    for _ in range(100):
        small = random_tree(rng, 8)
        big = small
        for _ in range(int(rng.integers(1, 4))):
            big = insert_node(rng, big)
        assert hom_embed(small, big)
        assert strict_embed(small, big)


def test_strict_embedding_of_br_trees_is_strict_on_leaves():
    rng = np.random.default_rng(5)
    for _ in range(100):
        small = random_tree(rng, 7, BR_ALPHABET)
        big = insert_node(rng, small, binary="br", unary=None, leaf="c" if rng.integers(2) else "d")
        assert strict_embed(small, big)
        assert word_strict_subseq(leaves(small), leaves(big))
    for _ in range(300):
        small, big = random_tree(rng, 7, BR_ALPHABET), random_tree(rng, 11, BR_ALPHABET)
        if strict_embed(small, big):
            assert word_strict_subseq(leaves(small), leaves(big))


def test_order2_comparison_is_a_preorder():
    rng = np.random.default_rng(13)
    kappa = parse_type("(-> o o)")
    alphabet = {"a": 2, "b": 1, "e": 0, "x": 0}
    bodies = []
    for _ in range(5):
        body = random_tree(rng, 6, alphabet)
        bodies += [body, insert_node(rng, body)]
    terms = [unary_function(body) for body in bodies]
    le = [[order2_le(s, t, kappa) for t in terms] for s in terms]
    for i in range(len(terms)):
        assert le[i][i]
    for i in range(0, len(terms), 2):
        assert le[i][i + 1]
    n = len(terms)
    for i in range(n):
        for j in range(n):
            for k in range(n):
                if le[i][j] and le[j][k]:
                    assert le[i][k]


def test_order2_comparison_is_closed_under_application():
    rng = np.random.default_rng(17)
    kappa = parse_type("(-> o o)")
    alphabet = {"a": 2, "b": 1, "e": 0, "x": 0}
    for _ in range(40):
        body = random_tree(rng, 6, alphabet)
        f, g = unary_function(body), unary_function(insert_node(rng, body))
        s = random_tree(rng, 5)
        s2 = insert_node(rng, s)
        assert order2_le(f, g, kappa)
        assert hom_embed(tree_of(App(f, tree_to_term(s))), tree_of(App(g, tree_to_term(s2))))


def test_g2_iterates_have_period_one(g2):
    triple = find_pumpable(g2)
    assert order2_find_period(triple.D, triple.t, triple.hole_type) == (0, 1)
