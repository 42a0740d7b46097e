"""
Reduction engine: call-by-name steps, normalization, bounded language
enumeration, linearity probing and the order-stratified reduction used to
build type derivations backwards.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Dict, List, Mapping, Optional, Sequence, Set, Tuple

from config import Config
from core import (
    Abs,
    App,
    Arrow,
    BetaParts,
    Choice,
    Const,
    NT,
    Path,
    SimpleType,
    Term,
    Tree,
    Var,
    beta_parts,
    binders_along,
    canonical,
    fill,
    iterate_context,
    order_of_term,
    pretty,
    replace_at,
    spine,
    subst,
    subterm_at,
    term_to_tree,
    type_check,
    type_order,
    with_children,
    children,
    O,
)
from errors import FuelExhausted, MissingRules, NoTreeReachable, NotGround, Stuck

if TYPE_CHECKING:
    from grammar import Grammar

logger = logging.getLogger(__name__)

DEFAULT_FUEL = Config.fuel
DEFAULT_MAX_TREE_SIZE = Config.max_tree_size
DEFAULT_ENUM_STEPS = Config.enum_steps

LEFT, RIGHT = "L", "R"


class _Fuel:
    """Shared step budget; every beta, unfold and choice costs one unit"""

    def __init__(self, limit: int):
        self.limit = limit
        self.used = 0

    def tick(self):
        self.used += 1
        if self.used > self.limit:
            raise FuelExhausted(f"Reduction exceeded the budget of {self.limit} steps")


def _as_fuel(fuel) -> _Fuel:
    return fuel if isinstance(fuel, _Fuel) else _Fuel(fuel)


# ==========================
# CALL-BY-NAME STEPS
# ==========================

@dataclass(frozen=True)
class Redex:
    kind: str  # "beta" | "unfold" | "choice"
    path: Path


def head_redex(t: Term) -> Optional[Redex]:
    """
    Locate the redex in call-by-name evaluation position.

    Evaluation contexts are E ::= [] t1..tk | a p1..pi E t1..tk, where the
    p's are already trees. Returns None on normal forms (trees and E[x]).
    """
    path: Path = ()
    while True:
        head, args = spine(t)
        if isinstance(head, Abs):
            if not args:
                return None
            return Redex("beta", path + (0,) * (len(args) - 1))
        if isinstance(head, NT):
            return Redex("unfold", path + (0,) * len(args))
        if isinstance(head, Choice):
            return Redex("choice", path + (0,) * len(args))
        if isinstance(head, Const):
            base = path + (0,) * len(args)
            for i, a in enumerate(head.args):
                if not a.is_tree:
                    t, path = a, base + (i,)
                    break
            else:
                return None
            continue
        return None


def _beta_at(t: Term, path: Path) -> Tuple[Term, BetaParts]:
    parts = beta_parts(subterm_at(t, path))
    return replace_at(t, path, parts.reduct), parts


def _unfold_at(t: Term, path: Path, equations: Optional[Mapping[str, Term]]) -> Term:
    nt = subterm_at(t, path)
    if equations is None or nt.name not in equations:
        raise MissingRules(f"No rules for nonterminal '{nt.name}'")
    return replace_at(t, path, equations[nt.name])


def _choose_at(t: Term, path: Path, side: str) -> Term:
    choice = subterm_at(t, path)
    return replace_at(t, path, choice.left if side == LEFT else choice.right)


def cbn_step(t: Term, equations: Optional[Mapping[str, Term]] = None) -> Set[Term]:
    """All one-step call-by-name reducts of a ground term"""
    if isinstance(t, Abs):
        raise NotGround(f"Term is a function, not ground: {pretty(t)}")
    redex = head_redex(t)
    if redex is None:
        return set()
    if redex.kind == "beta":
        return {_beta_at(t, redex.path)[0]}
    if redex.kind == "unfold":
        return {_unfold_at(t, redex.path, equations)}
    return {_choose_at(t, redex.path, LEFT), _choose_at(t, redex.path, RIGHT)}


def run_guided(
    t: Term,
    chooser: Callable[[Term, Path], str],
    equations: Optional[Mapping[str, Term]] = None,
    fuel=DEFAULT_FUEL,
) -> Tuple[Term, Tuple[str, ...]]:
    """
    Call-by-name run asking chooser(term, path) to resolve each head choice.

    Returns:
        The normal form reached and the decisions taken, in order
    """
    budget = _as_fuel(fuel)
    taken: List[str] = []
    while True:
        if isinstance(t, Abs):
            raise NotGround(f"Term is a function, not ground: {pretty(t)}")
        redex = head_redex(t)
        if redex is None:
            return t, tuple(taken)
        budget.tick()
        if redex.kind == "beta":
            t = _beta_at(t, redex.path)[0]
        elif redex.kind == "unfold":
            t = _unfold_at(t, redex.path, equations)
        else:
            side = chooser(t, redex.path)
            taken.append(side)
            t = _choose_at(t, redex.path, side)


def run_with_decisions(
    t: Term,
    decisions: Sequence[str],
    equations: Optional[Mapping[str, Term]] = None,
    fuel: int = DEFAULT_FUEL,
) -> Term:
    """Plain call-by-name run resolving head choices from the decision list"""
    pending = list(decisions)

    def next_decision(term: Term, path: Path) -> str:
        if not pending:
            raise NoTreeReachable("Decision list exhausted before reaching a tree")
        return pending.pop(0)

    return run_guided(t, next_decision, equations, fuel)[0]


def beta_sequence(t: Term, fuel=DEFAULT_FUEL) -> Tuple[Term, List[Tuple[Path, BetaParts]]]:
    """
    Call-by-name beta steps taking a closed, ground, pure lambda-term to its tree.

    Returns:
        The tree term and each contracted redex as (path, parts), in order
    """
    budget = _as_fuel(fuel)
    steps: List[Tuple[Path, BetaParts]] = []
    while True:
        redex = head_redex(t)
        if redex is None:
            if not t.is_tree:
                raise Stuck(f"Term is stuck: {pretty(t)}")
            return t, steps
        if redex.kind != "beta":
            raise Stuck(f"Expected a pure lambda-term, found a {redex.kind} redex")
        budget.tick()
        t, parts = _beta_at(t, redex.path)
        steps.append((redex.path, parts))


# ==========================
# NORMALIZATION
# ==========================

def normalize(t: Term, equations: Optional[Mapping[str, Term]] = None, fuel=DEFAULT_FUEL) -> Term:
    """Normal-order beta normal form, unfolding nonterminals when equations are given"""
    return _normalize(t, equations, _as_fuel(fuel), {})


def _normalize(t: Term, equations, fuel: _Fuel, memo: Dict[int, Tuple[Term, Term]]) -> Term:
    # Substitution shares argument objects, so closed subterms are normalized once
    closed = not t.free_vars
    if closed:
        hit = memo.get(id(t))
        if hit is not None:
            return hit[1]
    result = _normalize_spine(t, equations, fuel, memo)
    if closed:
        memo[id(t)] = (t, result)
    return result


def _normalize_spine(t: Term, equations, fuel: _Fuel, memo) -> Term:
    head, args = spine(t)
    while True:
        if isinstance(head, Abs) and args:
            fuel.tick()
            head, more = spine(subst(head.body, head.var, args[0]))
            args = more + args[1:]
        elif isinstance(head, NT) and equations is not None and head.name in equations:
            fuel.tick()
            head, more = spine(equations[head.name])
            args = more + args
        else:
            break
    if isinstance(head, Abs):
        return Abs(head.var, head.vtype, _normalize(head.body, equations, fuel, memo))
    if isinstance(head, Const):
        return Const(head.name, tuple(_normalize(a, equations, fuel, memo) for a in head.args))
    if isinstance(head, Choice):
        head = Choice(_normalize(head.left, equations, fuel, memo), _normalize(head.right, equations, fuel, memo))
    result = head
    for a in args:
        result = App(result, _normalize(a, equations, fuel, memo))
    return result


def tree_of(t: Term, equations: Optional[Mapping[str, Term]] = None, fuel=DEFAULT_FUEL) -> Tree:
    """The unique tree of a closed, ground, choice-free term"""
    nf = normalize(t, equations, fuel)
    if nf.has_choice:
        raise Stuck(f"Choice left in normal form: {pretty(nf)}")
    return term_to_tree(nf)


def count_occurrences(t: Term, x: str) -> int:
    if isinstance(t, Var):
        return int(t.name == x)
    if isinstance(t, Abs) and t.var == x:
        return 0
    return sum(count_occurrences(c, x) for _, c in children(t))


def is_linear(x: str, t: Term, equations: Optional[Mapping[str, Term]] = None, fuel=DEFAULT_FUEL) -> bool:
    """x occurs exactly once in the normal form of t"""
    return count_occurrences(normalize(t, equations, fuel), x) == 1


@dataclass(frozen=True)
class LinearityReport:
    ok: bool
    probed: int
    failed_at: Optional[int] = None

    def __bool__(self):
        return self.ok


PROBE_VARIABLE = "$x"


def is_linear_pair(
    c: Term,
    d: Term,
    probe_depth: int = Config.probe_depth,
    equations: Optional[Mapping[str, Term]] = None,
    fuel=DEFAULT_FUEL,
) -> LinearityReport:
    """Check linearity of x |- C[D^i[x]] for i = 0..probe_depth"""
    probe = Var(PROBE_VARIABLE)
    for i in range(probe_depth + 1):
        if not is_linear(PROBE_VARIABLE, fill(c, iterate_context(d, i, probe)), equations, fuel):
            logger.debug(f"Linearity fails at depth {i}")
            return LinearityReport(False, probe_depth, i)
    return LinearityReport(True, probe_depth)


# ==========================
# LANGUAGE ENUMERATION
# ==========================

@dataclass
class Enumeration:
    """Trees found by a bounded breadth-first exploration"""
    order: List[Tree] = field(default_factory=list)
    decisions: Dict[Tree, Tuple[str, ...]] = field(default_factory=dict)
    truncated: bool = False
    steps: int = 0
    pruned: int = 0

    @property
    def trees(self) -> frozenset:
        return frozenset(self.order)

    def __contains__(self, tree: Tree) -> bool:
        return tree in self.decisions

    def __len__(self):
        return len(self.order)

    def by_size(self) -> List[Tree]:
        return sorted(self.order, key=lambda tree: (tree.size, str(tree)))


def _prefix_size(t: Term) -> int:
    """Nodes of the already evaluated tree prefix; a lower bound for any reachable tree"""
    if isinstance(t, Const):
        return 1 + sum(_prefix_size(a) for a in t.args)
    return 0


def enumerate_language(
    t: Term,
    max_tree_size: int = DEFAULT_MAX_TREE_SIZE,
    max_steps: int = DEFAULT_ENUM_STEPS,
    equations: Optional[Mapping[str, Term]] = None,
) -> Enumeration:
    """
    Collect the trees reachable from t within the budgets.

    States are explored breadth-first and only branch at choices in head
    position; each branching state is memoized by its alpha-canonical form.
    Hitting the step budget sets `truncated`; states whose evaluated prefix
    already exceeds max_tree_size are pruned.
    """
    result = Enumeration()
    queue = deque([(t, ())])
    seen: Set[Term] = set()

    while queue:
        term, decisions = queue.popleft()
        redex = None
        while True:
            if _prefix_size(term) > max_tree_size:
                result.pruned += 1
                term = None
                break
            if isinstance(term, Abs):
                term = None
                break
            redex = head_redex(term)
            if redex is None or redex.kind == "choice":
                break
            if result.steps >= max_steps:
                result.truncated = True
                break
            result.steps += 1
            if redex.kind == "beta":
                term = _beta_at(term, redex.path)[0]
                continue
            try:
                term = _unfold_at(term, redex.path, equations)
            except MissingRules:
                # A nonterminal without rules generates nothing
                term = None
                break
        if result.truncated:
            break
        if term is None:
            continue
        if redex is None:
            if term.is_tree:
                tree = term_to_tree(term)
                if tree.size <= max_tree_size and tree not in result.decisions:
                    result.decisions[tree] = decisions
                    result.order.append(tree)
                    logger.debug(f"Found tree of size {tree.size} after {result.steps} steps")
            continue
        key = canonical(term)
        if key in seen:
            continue
        seen.add(key)
        queue.append((_choose_at(term, redex.path, LEFT), decisions + (LEFT,)))
        queue.append((_choose_at(term, redex.path, RIGHT), decisions + (RIGHT,)))

    logger.info(
        f"Enumeration: {len(result.order)} trees, {result.steps} steps"
        + (" (truncated)" if result.truncated else "")
    )
    return result


def decisions_for(
    t: Term,
    target: Optional[Tree] = None,
    equations: Optional[Mapping[str, Term]] = None,
    max_tree_size: int = DEFAULT_MAX_TREE_SIZE,
    max_steps: int = DEFAULT_ENUM_STEPS,
) -> Tuple[str, ...]:
    """Choice resolutions reaching target, or the first tree found when target is None"""
    bound = target.size if target is not None else max_tree_size
    found = enumerate_language(t, bound, max_steps, equations)
    if target is None:
        if not found.order:
            raise NoTreeReachable("No tree reachable within the budgets")
        return found.decisions[found.order[0]]
    if target not in found:
        raise NoTreeReachable(f"Tree {target} is not reachable within the budgets")
    return found.decisions[target]


# ==========================
# STRATIFIED REDUCTION
# ==========================

@dataclass(frozen=True)
class Step:
    kind: str  # "beta" | "unfold" | "choice"
    path: Path
    level: int
    before: Term
    after: Term
    order: int = 0
    parts: Optional[BetaParts] = None
    side: Optional[str] = None

    @property
    def tag(self) -> str:
        if self.kind == "beta":
            return f"beta-{self.order}"
        if self.kind == "unfold":
            return "unfold"
        return "choice-left" if self.side == LEFT else "choice-right"


@dataclass
class ReductionTrace:
    start: Term
    steps: List[Step] = field(default_factory=list)
    top_level: int = 1

    @property
    def final(self) -> Term:
        return self.steps[-1].after if self.steps else self.start

    @property
    def terms(self) -> List[Term]:
        return [self.start] + [s.after for s in self.steps]

    @property
    def decisions(self) -> Tuple[str, ...]:
        return tuple(s.side for s in self.steps if s.kind == "choice")

    def tree(self) -> Tree:
        return term_to_tree(self.final)

    def to_text(self, width: int = 100) -> str:
        lines = [f"{0:4d}  {'start':<14}{_clip(pretty(self.start), width)}"]
        for i, step in enumerate(self.steps, 1):
            lines.append(f"{i:4d}  {step.tag:<14}{_clip(pretty(step.after), width)}")
        return "\n".join(lines)


def _clip(text: str, width: int) -> str:
    return text if len(text) <= width else text[: width - 3] + "..."


@dataclass(frozen=True)
class _Item:
    kind: str  # "beta" | "unfold"
    path: Path
    order: int
    closed: bool
    under_choice: bool


def _scan(t, env, path, nt_types, under_choice, fun_pos, out) -> SimpleType:
    """Type t while listing its redexes in right-to-left post-order"""
    if isinstance(t, Var):
        return env[t.name]
    if isinstance(t, NT):
        kappa = nt_types[t.name]
        if not fun_pos:
            out.append(_Item("unfold", path, type_order(kappa), True, under_choice))
        return kappa
    if isinstance(t, Const):
        for i in reversed(range(len(t.args))):
            _scan(t.args[i], env, path + (i,), nt_types, under_choice, False, out)
        return O
    if isinstance(t, Choice):
        _scan(t.right, env, path + (1,), nt_types, True, False, out)
        _scan(t.left, env, path + (0,), nt_types, True, False, out)
        return O
    if isinstance(t, Abs):
        body = _scan(t.body, {**env, t.var: t.vtype}, path + (0,), nt_types, under_choice, False, out)
        return Arrow(t.vtype, body)
    if isinstance(t, App):
        _scan(t.arg, env, path + (1,), nt_types, under_choice, False, out)
        fun = _scan(t.fun, env, path + (0,), nt_types, under_choice, True, out)
        if isinstance(t.fun, Abs):
            out.append(_Item("beta", path, type_order(fun), not t.free_vars, under_choice))
        if not fun_pos:
            head, args = spine(t)
            if isinstance(head, NT):
                # An applied nonterminal is ordered as its whole application
                out.append(
                    _Item("unfold", path + (0,) * len(args), type_order(nt_types[head.name]),
                          not t.free_vars, under_choice)
                )
        return fun.codomain
    raise Stuck("Hole in a term under reduction")


class _Stratifier:
    """Replays a choice-resolved reduction in blocks of decreasing order"""

    def __init__(self, equations, nt_types, decisions, fuel: _Fuel):
        self.equations = equations
        self.nt_types = nt_types
        self.pending = list(decisions)
        self.fuel = fuel
        self.steps: List[Step] = []

    # -- single steps -------------------------------------------------------

    def _record(self, step: Step) -> Term:
        logger.debug(f"[{step.level}] {step.tag:<13} {pretty(step.after)}")
        self.steps.append(step)
        return step.after

    def beta(self, t: Term, path: Path, level: int, order: int) -> Term:
        after, parts = _beta_at(t, path)
        return self._record(Step("beta", path, level, t, after, order, parts))

    def unfold(self, t: Term, path: Path, level: int) -> Term:
        nt = subterm_at(t, path)
        after = _unfold_at(t, path, self.equations)
        return self._record(Step("unfold", path, level, t, after, type_order(self.nt_types[nt.name])))

    def choose(self, t: Term, path: Path, level: int) -> Term:
        if not self.pending:
            raise NoTreeReachable("Decision list exhausted before reaching a tree")
        side = self.pending.pop(0)
        return self._record(Step("choice", path, level, t, _choose_at(t, path, side), side=side))

    def beta_order(self, t: Term, path: Path) -> int:
        env = dict(binders_along(t, path))
        return type_order(type_check(env, subterm_at(t, path).fun, self.nt_types))

    def items(self, t: Term) -> List[_Item]:
        out: List[_Item] = []
        _scan(t, {}, (), self.nt_types, False, False, out)
        return out

    # -- levels -------------------------------------------------------------

    def upper_level(self, t: Term, level: int) -> Term:
        while True:
            self.fuel.tick()
            redex = head_redex(t)
            if redex is not None:
                if redex.kind == "unfold":
                    t = self.unfold(t, redex.path, level)
                    continue
                if redex.kind == "choice":
                    t = self.choose(t, redex.path, level)
                    continue
                order = self.beta_order(t, redex.path)
                if order >= level:
                    t = self.beta(t, redex.path, level, order)
                    continue
            betas = [i for i in self.items(t) if i.kind == "beta" and i.order == level]
            if betas:
                t = self.beta(t, betas[0].path, level, level)
                continue
            tag = self.next_high_unfold(t, level)
            if tag is not None:
                t = self.unfold(t, tag, level)
                continue
            return t

    def lowest_level(self, t: Term) -> Term:
        while True:
            self.fuel.tick()
            redex = head_redex(t)
            if redex is not None and redex.kind == "choice":
                t = self.choose(t, redex.path, 1)
                continue
            ready = [i for i in self.items(t) if i.order == 1 and i.closed and not i.under_choice]
            if ready:
                item = ready[0]
                if item.kind == "beta":
                    t = self.beta(t, item.path, 1, 1)
                else:
                    t = self.unfold(t, item.path, 1)
                continue
            if redex is None:
                return t
            if redex.kind == "beta":
                t = self.beta(t, redex.path, 1, self.beta_order(t, redex.path))
            else:
                t = self.unfold(t, redex.path, 1)

    def next_high_unfold(self, t: Term, level: int) -> Optional[Path]:
        """
        Path of the nonterminal occurrence of t whose unfolding first leads
        a call-by-name run to unfold a nonterminal of order >= level.
        """
        s = _tag_nonterminals(t, ())
        pending = list(self.pending)
        while True:
            self.fuel.tick()
            if isinstance(s, Abs):
                return None
            redex = head_redex(s)
            if redex is None:
                return None
            if redex.kind == "beta":
                s = _beta_at(s, redex.path)[0]
            elif redex.kind == "choice":
                if not pending:
                    return None
                s = _choose_at(s, redex.path, pending.pop(0))
            else:
                nt = subterm_at(s, redex.path)
                if type_order(self.nt_types[nt.name]) >= level:
                    return nt.tag
                if nt.name not in self.equations:
                    raise MissingRules(f"No rules for nonterminal '{nt.name}'")
                s = replace_at(s, redex.path, _retag(self.equations[nt.name], nt.tag))


def _tag_nonterminals(t: Term, path: Path) -> Term:
    if isinstance(t, NT):
        return NT(t.name, tag=path)
    kids = children(t)
    if not kids:
        return t
    return with_children(t, [_tag_nonterminals(c, path + (i,)) for i, c in kids])


def _retag(t: Term, tag: Path) -> Term:
    if isinstance(t, NT):
        return NT(t.name, tag=tag)
    kids = children(t)
    if not kids:
        return t
    return with_children(t, [_retag(c, tag) for _, c in kids])


def stratified_reduce(
    t: Term,
    grammar: "Grammar",
    decisions: Optional[Sequence[str]] = None,
    target: Optional[Tree] = None,
    fuel: int = DEFAULT_FUEL,
    max_steps: int = DEFAULT_ENUM_STEPS,
) -> ReductionTrace:
    """
    Reduce t to a tree in blocks of decreasing order.

    Above order 1 the reduction is head-driven: nonterminals and choices in
    head position and betas of the current order or higher are contracted
    first, then the rightmost innermost beta of the current order, then the
    nonterminal whose unfolding a call-by-name run would reach first among
    those of the current order or higher. At order 1 the rightmost innermost
    closed redex outside any choice is contracted, where an application of
    an order-1 nonterminal counts as a redex.

    Choices are resolved from decisions; without them the decisions of
    target (or of the first tree found) are computed by enumeration.

    Raises:
        FuelExhausted, NoTreeReachable
    """
    equations = grammar.equations
    if decisions is None:
        decisions = decisions_for(t, target, equations, max_steps=max_steps)
    top = max(1, grammar.order, order_of_term({}, t, grammar.nt_types)[0])
    for body in equations.values():
        top = max(top, order_of_term({}, body, grammar.nt_types)[0])

    logger.info(f"Stratified reduction from order {top} with {len(decisions)} decisions")
    runner = _Stratifier(equations, grammar.nt_types, decisions, _Fuel(fuel))
    current = t
    for level in range(top, 1, -1):
        current = runner.upper_level(current, level)
    current = runner.lowest_level(current)
    if not current.is_tree:
        raise NoTreeReachable(f"Reduction stopped at a non-tree: {pretty(current)}")
    if runner.pending:
        logger.debug(f"{len(runner.pending)} unused decisions")
    trace = ReductionTrace(t, runner.steps, top)
    logger.info(f"✓ Stratified trace with {len(trace.steps)} steps reaches {trace.tree()}")
    return trace
