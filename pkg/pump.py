"""
Pumping pipeline: from a grammar to a verified chain

    tree(C[D^j[t]]) ⊲ tree(C[D^(j+k)[t]]) ⊲ tree(C[D^(j+2k)[t]]) ⊲ ...

with every member in the language and |tree(C[D^(j+ik)[t]])| <= exp_n(ci+d).
The offset and period come from the order induction (directed annotation,
path projection, lowering, recursion, periodicity) and are then tightened to
the least pair whose chain prefix verifies.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple, Union

import pandas as pd

from config import Config
from core import (
    SimpleType,
    Term,
    Tree,
    alpha_equal,
    fill,
    format_tree,
    iterate_context,
    pretty,
    read_sexpr,
    sexpr_to_type,
    sexpr_to_term,
    size,
    type_check,
    type_order,
)
from directions import path_project
from embed import hom_embed, order2_find_period, strict_embed, word_strict_subseq
from errors import (
    BudgetExhausted,
    ChainViolation,
    FiniteLanguageSuspected,
    GrammarSyntaxError,
    InvariantViolation,
    ToolkitError,
)
from flagtypes import find_pumpable, find_pumpable_directed
from grammar import Grammar, Word, format_word, language, start_term, word_of
from lower import lower_triple
from reduce import enumerate_language, tree_of

logger = logging.getLogger(__name__)

SATURATED = math.inf
CERTIFIED = "certified-order<=2"
CONJECTURAL = "conjectural"

Bound = Union[int, float]


def exp_tower(n: int, x: int, bits: int = Config.saturation_bits) -> Bound:
    """exp_0(x) = x, exp_(n+1)(x) = 2^exp_n(x); SATURATED once above 2^bits"""
    value: Bound = x
    for _ in range(n):
        if value >= bits:
            return SATURATED
        value = 2 ** value
    return value


def format_bound(bound: Bound) -> str:
    return "saturated" if bound == SATURATED else str(bound)


def _checked(value: int, what: str) -> int:
    if value >= 2 ** 63:
        raise BudgetExhausted(f"{what} overflows 64 bits", stage="arithmetic")
    return value


# ==========================
# CERTIFICATES
# ==========================

@dataclass
class ChainStep:
    i: int
    exponent: int
    size: int
    bound: Bound
    forward: Optional[bool] = None
    backward: Optional[bool] = None
    member: Optional[bool] = None
    word: Optional[str] = None


@dataclass
class PumpChainCertificate:
    C: Term
    D: Term
    t: Term
    j: int
    k: int
    prefix: int
    order: int
    c: int
    d: int
    confidence: str
    steps: List[ChainStep] = field(default_factory=list)
    derived: Optional[Tuple[int, int]] = None
    route: str = "induction"
    grammar: Optional[str] = None
    kind: str = "tree"
    trees: List[Tree] = field(default_factory=list)
    words: List[Word] = field(default_factory=list)

    def step_table(self) -> pd.DataFrame:
        rows = []
        for s in self.steps:
            row = {
                "i": s.i,
                "exponent": s.exponent,
                "size": s.size,
                "bound": format_bound(s.bound),
                "forward": s.forward,
                "backward": s.backward,
                "member": s.member,
            }
            if self.kind == "word":
                row["word"] = s.word
            rows.append(row)
        return pd.DataFrame(rows)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "grammar": self.grammar,
            "kind": self.kind,
            "C": pretty(self.C),
            "D": pretty(self.D),
            "t": pretty(self.t),
            "j": self.j,
            "k": self.k,
            "derived": list(self.derived) if self.derived else None,
            "c": self.c,
            "d": self.d,
            "order": self.order,
            "prefix": self.prefix,
            "confidence": self.confidence,
            "route": self.route,
            "steps": self.step_table().to_dict(orient="records"),
        }

    def to_text(self) -> str:
        lines = [
            f"C = {pretty(self.C)}",
            f"D = {pretty(self.D)}",
            f"t = {pretty(self.t)}",
            f"offset j = {self.j}, period k = {self.k}"
            + (f" (derived j = {self.derived[0]}, k = {self.derived[1]})" if self.derived else " (scanned)"),
            f"c = {self.c}, d = {self.d}, order {self.order}, {self.confidence}",
        ]
        if self.kind == "word":
            chain = " ⊲ ".join(format_word(w) for w in self.words)
        else:
            chain = " ⊲ ".join(format_tree(tree) for tree in self.trees)
        lines.append(f"chain: {chain} ⊲ ...")
        lines.append(self.step_table().to_string(index=False))
        return "\n".join(lines)


# ==========================
# CHAINS
# ==========================

class _Chain:
    """Trees tree(C[D^m[t]]), evaluated once per exponent"""

    def __init__(self, C: Term, D: Term, t: Term, fuel: int):
        self.C, self.D, self.t = C, D, t
        self.fuel = fuel
        self.memo: Dict[int, Tree] = {}

    def __getitem__(self, m: int) -> Tree:
        if m not in self.memo:
            self.memo[m] = tree_of(fill(self.C, iterate_context(self.D, m, self.t)), fuel=self.fuel)
        return self.memo[m]

    def strict(self, j: int, k: int, length: int) -> bool:
        return all(strict_embed(self[j + i * k], self[j + (i + 1) * k]) for i in range(length - 1))


def _member(grammar: Grammar, tree: Tree, config: Config) -> Optional[bool]:
    """Whether tree is in the language; None when the enumeration budget ran out first"""
    found = enumerate_language(start_term(grammar), tree.size, config.enum_steps, grammar.equations)
    if tree in found:
        return True
    if found.truncated:
        logger.warning(f"Membership of a tree of size {tree.size} undecided after {found.steps} steps")
        return None
    return False


def _check_member(grammar: Grammar, step: "ChainStep", tree: Tree, config: Config):
    step.member = _member(grammar, tree, config)
    if step.member is False:
        raise ChainViolation(f"chain member {step.i} is not in the language of {grammar.name}", step.i)


def verify_chain(
    C: Term,
    D: Term,
    t: Term,
    j: int,
    k: int,
    length: int,
    n: int,
    grammar: Optional[Grammar] = None,
    config: Config = Config(),
) -> PumpChainCertificate:
    """
    Check length chain members for strictness and the size bound.

    With c = k|D| and d = |C| + j|D| + |t|, member i must strictly embed
    into member i+1 and have at most exp_n(ci+d) nodes. Membership of the
    first three members is re-checked when a grammar is given.

    Raises:
        ChainViolation: The first failing step
    """
    c = _checked(k * size(D), "c")
    d = _checked(size(C) + j * size(D) + size(t), "d")
    chain = _Chain(C, D, t, config.fuel)
    steps = []
    for i in range(length):
        tree = chain[j + i * k]
        bound = exp_tower(n, c * i + d, config.saturation_bits)
        step = ChainStep(i, j + i * k, tree.size, bound)
        if tree.size > bound:
            raise ChainViolation(f"size {tree.size} exceeds exp_{n}({c * i + d}) = {bound}", i)
        if i + 1 < length:
            following = chain[j + (i + 1) * k]
            step.forward = hom_embed(tree, following)
            step.backward = hom_embed(following, tree)
            if not step.forward or step.backward:
                raise ChainViolation(
                    f"tree(C[D^{j + i * k}[t]]) does not strictly embed into tree(C[D^{j + (i + 1) * k}[t]])", i
                )
        if grammar is not None and i < 3:
            _check_member(grammar, step, tree, config)
        steps.append(step)
        logger.debug(f"Chain step {i}: size {tree.size}, bound {format_bound(bound)}")
    confidence = CERTIFIED if n <= 2 else CONJECTURAL
    logger.info(f"✓ Chain prefix of length {length} verified for j={j}, k={k}")
    return PumpChainCertificate(
        C, D, t, j, k, length, n, c, d, confidence, steps,
        trees=[chain[j + i * k] for i in range(length)],
    )


# ==========================
# ORDER INDUCTION
# ==========================

@dataclass
class InductionResult:
    j: int
    k: int
    derived: Optional[Tuple[int, int]]
    confidence: str
    route: str


def _scan(chain: _Chain, config: Config, max_j: Optional[int] = None, max_k: Optional[int] = None) -> Tuple[int, int]:
    """Least (k, then j) whose chain prefix is strictly increasing"""
    max_j = config.period_budget if max_j is None else max_j
    max_k = config.period_budget if max_k is None else max_k
    for k in range(1, max_k + 1):
        for j in range(max_j + 1):
            if chain.strict(j, k, config.prefix):
                return j, k
    raise BudgetExhausted(f"No strictly increasing chain with j <= {max_j}, k <= {max_k}", stage="scan")


def _period(H: Term, u: Term, config: Config) -> Tuple[int, int, bool]:
    """(offset, period, certified) of the iterates H^i[u]"""
    kappa = type_check({}, u)
    if type_order(kappa) <= 2:
        i, j = order2_find_period(H, u, kappa, config.period_budget, config.fuel)
        return i, j, True
    # Above order 2 only the first iterates of the chain are compared
    iterates = [u]
    for total in range(1, config.period_budget + 1):
        iterates.append(fill(H, iterates[-1]))
        for i in range(total):
            if alpha_equal(iterates[i], iterates[total]):
                return i, total - i, False
    raise BudgetExhausted(f"No repeated iterate of a type of order {type_order(kappa)}", stage="period")


def _derive_pair(C: Term, D: Term, t: Term, n: int, config: Config, depth: int) -> Tuple[int, int, bool]:
    """Offset and period by the induction on the order"""
    if n <= 0:
        j, k = _scan(_Chain(C, D, t, config.fuel), config)
        return j, k, True
    logger.info(f"{'  ' * depth}Order {n}: direction annotation")
    directed = find_pumpable_directed(C, D, t, config)
    j0, k0 = directed.q, directed.p
    gp, hp, up = path_project(directed.G, directed.H, directed.u)
    logger.info(f"{'  ' * depth}Order {n}: lowering the projected path (route {directed.route}, p={k0}, q={j0})")
    lowered = lower_triple(gp, hp, up, config)
    j1, k1, certified = _derive_pair(lowered.G, lowered.H, lowered.u, n - 1, config, depth + 1)
    j1p = _checked(lowered.c * j1 + lowered.d, "j'")
    k1p = _checked(lowered.c * k1, "k'")
    j2, k2, periodic = _period(directed.H, directed.u, config)
    j3 = j1p + k1p * math.ceil(max(0, j2 - j1p) / k1p)
    k3 = _checked(math.lcm(k1p, k2), "lcm")
    j = _checked(j0 + k0 * j3, "j")
    k = _checked(k0 * k3, "k")
    logger.info(f"{'  ' * depth}✓ Order {n}: j={j}, k={k}")
    return j, k, certified and periodic


def order_induction(C: Term, D: Term, t: Term, n: int, config: Config = Config()) -> InductionResult:
    """
    Offset j and period k with tree(C[D^(j+ik)[t]]) strictly increasing.

    The pair derived by the induction is tightened to the least (k, then j)
    pair below it whose prefix verifies. When a stage of the induction runs
    out of budget the pair is found by a bounded scan instead and the result
    is marked conjectural.
    """
    chain = _Chain(C, D, t, config.fuel)
    try:
        j, k, certified = _derive_pair(C, D, t, n, config, 0)
    except (ToolkitError, RecursionError) as e:
        if isinstance(e, InvariantViolation):
            raise
        logger.warning(f"Order induction stopped ({e}); scanning for a chain instead")
        j, k = _scan(chain, config)
        return InductionResult(j, k, None, CONJECTURAL, "scan")
    if not chain.strict(j, k, config.prefix):
        raise ChainViolation(f"Derived pair j={j}, k={k} does not give a strictly increasing prefix", 0)
    tight_j, tight_k = _scan(chain, config, max_j=j, max_k=k)
    confidence = CERTIFIED if certified and n <= 2 else CONJECTURAL
    return InductionResult(tight_j, tight_k, (j, k), confidence, "induction")


# ==========================
# GRAMMARS
# ==========================

def _require_infinite(grammar: Grammar, config: Config) -> None:
    members = language(grammar, max_tree_size=config.pump_tree_cap, max_steps=config.enum_steps)
    if not members.truncated and members.pruned == 0:
        raise FiniteLanguageSuspected(
            f"Enumeration of {grammar.name} completed with {len(members)} trees; the language looks finite"
        )


def pump_grammar(grammar: Grammar, config: Config = Config()) -> PumpChainCertificate:
    """
    Certificate of an infinite strictly increasing chain in the language.

    Raises:
        FiniteLanguageSuspected: The language enumerates completely
        BudgetExhausted: No pumpable derivation within the budgets
    """
    logger.info("=" * 60)
    logger.info(f"Pumping {grammar.name} ({grammar.summary()})")
    logger.info("=" * 60)
    _require_infinite(grammar, config)
    triple = find_pumpable(grammar, config)
    result = order_induction(triple.C, triple.D, triple.t, grammar.order, config)
    cert = verify_chain(triple.C, triple.D, triple.t, result.j, result.k, config.prefix, grammar.order, grammar, config)
    cert.derived, cert.route, cert.grammar = result.derived, result.route, grammar.name
    if result.confidence == CONJECTURAL:
        cert.confidence = CONJECTURAL
    logger.info(f"✓ {grammar.name}: j={cert.j}, k={cert.k}, {cert.confidence}")
    return cert


def pump_triple(C: Term, D: Term, t: Term, n: int, config: Config = Config(), name: Optional[str] = None) -> PumpChainCertificate:
    """Certificate for a given triple, without a grammar to check membership against"""
    result = order_induction(C, D, t, n, config)
    cert = verify_chain(C, D, t, result.j, result.k, config.prefix, n, None, config)
    cert.derived, cert.route, cert.grammar = result.derived, result.route, name
    if result.confidence == CONJECTURAL:
        cert.confidence = CONJECTURAL
    return cert


def pump_word_grammar(grammar: Grammar, config: Config = Config()) -> PumpChainCertificate:
    """
    Chain of words w_0 < w_1 < ... under scattered subsequence with |w_i| <= exp_(n-1)(ci+d).

    The pump triple is lowered once; the lowered tree triple is pumped at
    order n-1 and its offset and period are mapped back.
    """
    logger.info("=" * 60)
    logger.info(f"Pumping word grammar {grammar.name} ({grammar.summary()})")
    logger.info("=" * 60)
    if not grammar.is_word():
        raise GrammarSyntaxError(f"Grammar '{grammar.name}' is not over a word alphabet")
    _require_infinite(grammar, config)
    triple = find_pumpable(grammar, config)
    C, D, t = triple.C, triple.D, triple.t
    n = max(grammar.order, 1)
    derived = None
    confidence = CERTIFIED if n <= 3 else CONJECTURAL
    route = "lowering"
    try:
        lowered = lower_triple(C, D, t, config)
        inner = order_induction(lowered.G, lowered.H, lowered.u, n - 1, config)
        j = lowered.c * inner.j + lowered.d
        k = lowered.c * inner.k
        derived = (j, k)
        if inner.confidence == CONJECTURAL:
            confidence = CONJECTURAL
    except (BudgetExhausted, RecursionError) as e:
        logger.warning(f"Lowering stopped ({e}); scanning the word chain instead")
        j = k = None
        route = "scan"
        confidence = CONJECTURAL

    trees: Dict[int, Tree] = {}
    memo: Dict[int, Word] = {}

    def tree(m: int) -> Tree:
        if m not in trees:
            trees[m] = tree_of(fill(C, iterate_context(D, m, t)), fuel=config.fuel)
        return trees[m]

    def word(m: int) -> Word:
        if m not in memo:
            memo[m] = word_of(tree(m))
        return memo[m]

    def strict(j: int, k: int) -> bool:
        return all(word_strict_subseq(word(j + i * k), word(j + (i + 1) * k)) for i in range(config.prefix - 1))

    max_j = j if j is not None else config.period_budget
    max_k = k if k is not None else config.period_budget
    found = next(
        ((jj, kk) for kk in range(1, max_k + 1) for jj in range(max_j + 1) if strict(jj, kk)),
        None,
    )
    if found is None:
        raise BudgetExhausted("No strictly increasing word chain", stage="scan")
    j, k = found

    c = _checked(k * size(D), "c")
    d = _checked(size(C) + j * size(D) + size(t), "d")
    steps = []
    for i in range(config.prefix):
        w = word(j + i * k)
        bound = exp_tower(n - 1, c * i + d, config.saturation_bits)
        if len(w) > bound:
            raise ChainViolation(f"|w| = {len(w)} exceeds exp_{n - 1}({c * i + d})", i)
        step = ChainStep(i, j + i * k, len(w), bound, word=format_word(w))
        if i + 1 < config.prefix:
            step.forward = True
            step.backward = False
        if i < 3:
            _check_member(grammar, step, tree(j + i * k), config)
        steps.append(step)
    cert = PumpChainCertificate(
        C, D, t, j, k, config.prefix, n, c, d, confidence, steps,
        derived=derived, route=route, grammar=grammar.name, kind="word",
        words=[word(j + i * k) for i in range(config.prefix)],
    )
    logger.info(f"✓ {grammar.name}: word chain with j={j}, k={k}")
    return cert


# ==========================
# TRIPLE FILES
# ==========================

def parse_triple(text: str) -> Tuple[Term, Term, Term, SimpleType]:
    """
    Read `(triple <hole-type> C D t)`.

    Returns:
        (C, D, t, hole type)
    """
    x = read_sexpr(text)
    if not (isinstance(x, list) and len(x) == 5 and x[0] == "triple"):
        raise GrammarSyntaxError("Expected (triple <hole-type> C D t)")
    hole_type = sexpr_to_type(x[1])
    C, D, t = (sexpr_to_term(part) for part in x[2:])
    if type_check({}, t) != hole_type:
        raise GrammarSyntaxError(f"t has type {type_check({}, t)}, expected {hole_type}")
    type_check({}, C, hole_type=hole_type)
    type_check({}, D, hole_type=hole_type)
    return C, D, t, hole_type


