"""
Homeomorphic embedding on trees and words, embedded-pair scanning, the
canonical argument sets and the exact comparator for order-2 tree functions.
"""
import itertools
import logging
from dataclasses import dataclass
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

from scipy.special import comb

from config import Config
from core import (
    O,
    Arrow,
    Const,
    SimpleType,
    Term,
    Tree,
    Var,
    app,
    ground_function,
    fill,
    lam,
    split_arrow,
    type_order,
)
from errors import BudgetExhausted, InvariantViolation, OrderTooHigh
from reduce import DEFAULT_FUEL, tree_of

logger = logging.getLogger(__name__)

# Reserved namespace for the comparator's argument terminals
ARG_PREFIX = "$arg"


# ==========================
# TREES AND WORDS
# ==========================

def hom_embed(small: Tree, big: Tree) -> bool:
    """
    small ⊴ big: same-root pointwise embedding, or embedding into a child.

    Memoized over pairs of structurally distinct subtrees, so heavily shared
    trees (complete binary trees, say) cost far less than |small|·|big|.
    """
    memo: Dict[Tuple[Tree, Tree], bool] = {}

    def embeds(p: Tree, q: Tree) -> bool:
        key = (p, q)
        if key in memo:
            return memo[key]
        result = False
        if p.size <= q.size:
            if p.label == q.label and len(p.children) == len(q.children):
                result = all(embeds(a, b) for a, b in zip(p.children, q.children))
            if not result:
                result = any(embeds(p, c) for c in q.children)
        memo[key] = result
        return result

    return embeds(small, big)


def strict_embed(small: Tree, big: Tree) -> bool:
    return hom_embed(small, big) and not hom_embed(big, small)


def word_subseq(w: Sequence[str], w2: Sequence[str]) -> bool:
    """Scattered subsequence test"""
    it = iter(w2)
    return all(any(a == b for b in it) for a in w)


def word_strict_subseq(w: Sequence[str], w2: Sequence[str]) -> bool:
    return word_subseq(w, w2) and not word_subseq(w2, w)


def find_embedded_pair(seq: Sequence[Tree]) -> Optional[Tuple[int, int]]:
    """First (i, j) with i < j and seq[i] ⊴ seq[j], scanning j then i ascending"""
    for j in range(1, len(seq)):
        for i in range(j):
            if hom_embed(seq[i], seq[j]):
                return i, j
    return None


# ==========================
# CANONICAL ARGUMENT TERMS
# ==========================

def _binders(k: int) -> List[str]:
    return [f"x{i}" for i in range(1, k + 1)]


def canonical_terms(a: str, arity: int, k: int) -> List[Term]:
    """
    All terms \\x1..xk. a x_i1 .. x_il with i1 < .. < il.

    Returns:
        C(k, arity) closed terms of type o^k -> o
    """
    if arity > k:
        return []
    names = _binders(k)
    terms = [
        lam([(x, O) for x in names], Const(a, tuple(Var(x) for x in chosen)))
        for chosen in itertools.combinations(names, arity)
    ]
    if len(terms) != comb(k, arity, exact=True):
        raise InvariantViolation(f"Canonical set for {a} has {len(terms)} members")
    return terms


def slot_terminal(slot: int, arity: int) -> str:
    return f"{ARG_PREFIX}_{slot}_{arity}"


def canonical_union(family: Mapping[int, str], k: int) -> List[Term]:
    """Union of the canonical sets of family[j] (a terminal of arity j) for j <= k"""
    union = []
    for j in range(k + 1):
        union.extend(canonical_terms(family[j], j, k))
    return union


@dataclass(frozen=True)
class Order2Type:
    """(o^k1 -> o) -> ... -> (o^km -> o) -> o"""
    shapes: Tuple[int, ...]

    @classmethod
    def from_simple_type(cls, kappa: SimpleType) -> "Order2Type":
        domains, result = split_arrow(kappa)
        shapes = []
        for d in domains:
            args, res = split_arrow(d)
            if any(a != O for a in args):
                raise OrderTooHigh(f"Type {kappa} has order {type_order(kappa)} > 2")
            shapes.append(len(args))
        return cls(tuple(shapes))

    def to_simple_type(self) -> SimpleType:
        kappa: SimpleType = O
        for k in reversed(self.shapes):
            kappa = Arrow(ground_function(k), kappa)
        return kappa

    def __str__(self):
        return str(self.to_simple_type())


def argument_tuples(kappa: Order2Type) -> Iterator[Tuple[Term, ...]]:
    """Every tuple of canonical arguments, with fresh terminals per slot"""
    pools = []
    for slot, k in enumerate(kappa.shapes):
        family = {j: slot_terminal(slot, j) for j in range(k + 1)}
        pools.append(canonical_union(family, k))
    return itertools.product(*pools)


def order2_le(t: Term, t2: Term, kappa, fuel: int = DEFAULT_FUEL) -> bool:
    """
    t ⊴κ t2 for closed choice-free terms of an order <= 2 type.

    Decided by comparing tree(t u1..um) ⊴ tree(t2 u1..um) on every tuple of
    canonical arguments.
    """
    shape = kappa if isinstance(kappa, Order2Type) else Order2Type.from_simple_type(kappa)
    for args in argument_tuples(shape):
        if not hom_embed(tree_of(app(t, *args), fuel=fuel), tree_of(app(t2, *args), fuel=fuel)):
            return False
    return True


def order2_find_period(
    h: Term,
    u: Term,
    kappa,
    budget: int = Config.period_budget,
    fuel: int = DEFAULT_FUEL,
) -> Tuple[int, int]:
    """
    Least (offset i, period j) with H^i[u] ⊴κ H^(i+j)[u].

    Pairs are tried by i+j ascending, then i ascending.

    Raises:
        BudgetExhausted: No pair with i+j <= budget; at order <= 2 such a pair
            always exists, so this signals a fault or a too small budget
    """
    shape = kappa if isinstance(kappa, Order2Type) else Order2Type.from_simple_type(kappa)
    iterates = [u]
    for total in range(1, budget + 1):
        iterates.append(fill(h, iterates[-1]))
        for i in range(total):
            if order2_le(iterates[i], iterates[total], shape, fuel):
                logger.info(f"✓ Period found: offset {i}, period {total - i}")
                return i, total - i
    raise BudgetExhausted(f"No embedded iterate pair up to index {budget}", stage="period")
