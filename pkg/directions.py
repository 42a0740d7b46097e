"""
Direction annotations.

A directed terminal `a<i>` marks child i of an a-node as the continuation
of a distinguished root-to-leaf path; `a<0>` ends the path. Directed names
are ordinary terminal names, so every tree and term operation applies to
them unchanged.
"""
import itertools
import logging
import re
from typing import Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

from core import (
    Abs,
    Choice,
    Const,
    Path,
    RankedAlphabet,
    Term,
    Tree,
    children,
    choice_of,
    parse_tree,
    with_children,
)
from errors import ArityMismatch, GrammarSyntaxError, NoTreeReachable
from grammar import Grammar, Rule
from reduce import DEFAULT_FUEL, LEFT, RIGHT, run_guided

logger = logging.getLogger(__name__)

_DIRECTED = re.compile(r"^(?P<base>.+)<(?P<direction>\d+)>$")

# Separator of the unary terminals emitted by path projection
PATH_SEPARATOR = "."
EPSILON = "e"


def directed(name: str, i: int) -> str:
    return f"{name}<{i}>"


def split_direction(label: str) -> Tuple[str, Optional[int]]:
    """`a<2>` -> ("a", 2); undirected labels give (label, None)"""
    match = _DIRECTED.match(label)
    if match is None:
        return label, None
    return match["base"], int(match["direction"])


def direction_of(label: str) -> int:
    base, i = split_direction(label)
    if i is None:
        raise GrammarSyntaxError(f"Terminal '{label}' carries no direction")
    return i


def path_terminal(name: str, i: int) -> str:
    return f"{name}{PATH_SEPARATOR}{i}"


# ==========================
# DIRECTED TREES
# ==========================

def validate_directed(tree: Tree) -> Tree:
    """Check every node has a direction within its arity"""
    stack = [tree]
    while stack:
        node = stack.pop()
        i = direction_of(node.label)
        if i > len(node.children):
            raise ArityMismatch(
                f"Direction {i} exceeds the {len(node.children)} children of '{node.label}'"
            )
        stack.extend(node.children)
    return tree


def parse_directed_tree(text: str) -> Tree:
    return validate_directed(parse_tree(text))


def plen(tree: Tree) -> int:
    """Number of nodes on the path selected by the directions"""
    n = 1
    i = direction_of(tree.label)
    while i:
        tree = tree.children[i - 1]
        n += 1
        i = direction_of(tree.label)
    return n


def rmd(tree: Tree) -> Tree:
    """Remove direction annotations"""
    memo: Dict[int, Tuple[Tree, Tree]] = {}

    def strip(node: Tree) -> Tree:
        hit = memo.get(id(node))
        if hit is not None:
            return hit[1]
        out = Tree(split_direction(node.label)[0], tuple(strip(c) for c in node.children))
        memo[id(node)] = (node, out)
        return out

    return strip(tree)


def rmd_term(t: Term) -> Term:
    if isinstance(t, Const):
        return Const(split_direction(t.name)[0], tuple(rmd_term(a) for a in t.args))
    kids = children(t)
    if not kids:
        return t
    return with_children(t, [rmd_term(c) for _, c in kids])


def annotate_tree(tree: Tree, pick: Callable[[Tree], int]) -> Tree:
    """Annotate every node with the direction pick(node) chooses for it"""
    memo: Dict[int, Tuple[Tree, Tree]] = {}

    def walk(node: Tree) -> Tree:
        hit = memo.get(id(node))
        if hit is not None:
            return hit[1]
        out = Tree(directed(node.label, pick(node)), tuple(walk(c) for c in node.children))
        memo[id(node)] = (node, out)
        return out

    return walk(tree)


def deepest_child(node: Tree) -> int:
    """Index (from 1) of the deepest child, rightmost among ties; 0 for leaves"""
    best, depth = 0, 0
    for i, c in enumerate(node.children, 1):
        if c.depth >= depth:
            best, depth = i, c.depth
    return best


def annotate_deepest(tree: Tree) -> Tree:
    """Direct every node to its deepest child, so plen equals the depth"""
    return annotate_tree(tree, deepest_child)


def cp(tree: Tree) -> Tree:
    """Word tree of the path terminals along the selected path"""
    labels = []
    node = tree
    while True:
        base, i = split_direction(node.label)
        if i is None:
            raise GrammarSyntaxError(f"Terminal '{node.label}' carries no direction")
        if i == 0:
            break
        labels.append(path_terminal(base, i))
        node = node.children[i - 1]
    out = Tree(EPSILON)
    for label in reversed(labels):
        out = Tree(label, (out,))
    return out


# ==========================
# DIRECTED TERMS AND GRAMMARS
# ==========================

def directed_alphabet(alphabet: RankedAlphabet) -> RankedAlphabet:
    arities = {}
    for name, k in alphabet.arities.items():
        if k == 0:
            arities[directed(name, 0)] = 0
        for i in range(1, k + 1):
            arities[directed(name, i)] = k
    return RankedAlphabet(arities)


def annotate_term(t: Term) -> Term:
    """Replace every terminal application by the choice over its directions"""
    if isinstance(t, Const):
        args = tuple(annotate_term(a) for a in t.args)
        if not args:
            return Const(directed(t.name, 0))
        return choice_of([Const(directed(t.name, i), args) for i in range(1, len(args) + 1)])
    kids = children(t)
    if not kids:
        return t
    return with_children(t, [annotate_term(c) for _, c in kids])


def annotate_grammar(grammar: Grammar) -> Grammar:
    rules = tuple(
        Rule(r.lhs, r.params, annotate_term(r.body), r.location) for r in grammar.rules
    )
    logger.info(f"Annotated {len(rules)} rules of {grammar.name} with directions")
    return Grammar(
        directed_alphabet(grammar.alphabet),
        grammar.nt_types,
        rules,
        grammar.start,
        f"{grammar.name}-directed",
    )


def _tree_label_at(target: Tree, path: Path) -> Optional[str]:
    node = target
    for i in path:
        if i >= len(node.children):
            return None
        node = node.children[i]
    return node.label


def decisions_towards(
    t: Term,
    target: Tree,
    equations: Optional[Mapping[str, Term]] = None,
    fuel=DEFAULT_FUEL,
) -> Tuple[str, ...]:
    """
    Choice resolutions making an annotated term evaluate to the directed tree target.

    Every head choice of an annotated term sits at a tree position (a path
    through terminal arguments only) and picks between directed versions of
    one terminal, so each choice is resolved by the label target carries at
    that position.
    """

    def choose(term: Term, path: Path) -> str:
        choice = term
        for i in path:
            choice = dict(children(choice))[i]
        want = _tree_label_at(target, path)
        left = choice.left
        if isinstance(left, Const) and left.name == want:
            return LEFT
        if isinstance(choice.right, Choice) or (isinstance(choice.right, Const) and choice.right.name == want):
            return RIGHT
        raise NoTreeReachable(f"No alternative yields '{want}' at position {path}")

    final, decisions = run_guided(t, choose, equations, fuel)
    logger.debug(f"Resolved {len(decisions)} direction choices")
    return decisions


# ==========================
# OCCURRENCE ANNOTATION
# ==========================

_OCCURRENCE = "@"


def tag_occurrences(terms: Sequence[Term]) -> Tuple[List[Term], List[Tuple[str, int]]]:
    """
    Give every terminal occurrence of terms a distinct name `a@n`.

    Returns:
        The tagged terms and, per occurrence number, (terminal, arity)
    """
    table: List[Tuple[str, int]] = []

    def walk(t: Term) -> Term:
        if isinstance(t, Const):
            args = tuple(walk(a) for a in t.args)
            table.append((t.name, len(args)))
            return Const(f"{t.name}{_OCCURRENCE}{len(table) - 1}", args)
        kids = children(t)
        if not kids:
            return t
        return with_children(t, [walk(c) for _, c in kids])

    return [walk(t) for t in terms], table


def occurrence_of(label: str) -> int:
    return int(label.rsplit(_OCCURRENCE, 1)[1])


def occurrence_directions(table: Sequence[Tuple[str, int]]) -> Iterator[Tuple[int, ...]]:
    """All direction assignments: 1..k for k-ary occurrences, 0 for nullary ones"""
    ranges = [range(1, k + 1) if k else range(0, 1) for _, k in table]
    return itertools.product(*ranges)


def tagged_plen(tree: Tree, assignment: Sequence[int]) -> int:
    """plen of a tree over tagged names under a direction assignment"""
    n = 1
    i = assignment[occurrence_of(tree.label)]
    while i:
        tree = tree.children[i - 1]
        n += 1
        i = assignment[occurrence_of(tree.label)]
    return n


def apply_directions(t: Term, table: Sequence[Tuple[str, int]], assignment: Sequence[int]) -> Term:
    """Turn a tagged term into a directed one"""
    if isinstance(t, Const):
        k = occurrence_of(t.name)
        return Const(directed(table[k][0], assignment[k]), tuple(apply_directions(a, table, assignment) for a in t.args))
    kids = children(t)
    if not kids:
        return t
    return with_children(t, [apply_directions(c, table, assignment) for _, c in kids])


# ==========================
# PATH PROJECTION
# ==========================

def project_term(t: Term) -> Term:
    """Keep only the directed argument of each terminal, as a unary path terminal"""
    if isinstance(t, Const):
        base, i = split_direction(t.name)
        if i is None:
            raise GrammarSyntaxError(f"Terminal '{t.name}' carries no direction")
        if i == 0:
            return Const(EPSILON)
        return Const(path_terminal(base, i), (project_term(t.args[i - 1]),))
    if isinstance(t, Abs):
        return Abs(t.var, t.vtype, project_term(t.body))
    kids = children(t)
    if not kids:
        return t
    return with_children(t, [project_term(c) for _, c in kids])


def path_project(g: Term, h: Term, u: Term) -> Tuple[Term, Term, Term]:
    return project_term(g), project_term(h), project_term(u)


def path_alphabet(alphabet: RankedAlphabet) -> RankedAlphabet:
    """Word alphabet of the path terminals of a directed alphabet"""
    arities = {EPSILON: 0}
    for name in alphabet.arities:
        base, i = split_direction(name)
        if i:
            arities[path_terminal(base, i)] = 1
    return RankedAlphabet(arities)
