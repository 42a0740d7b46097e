"""
Intersection types with flags and markers.

A derivation Θ ⊢n t : (F, M, ρ) ▷ c ⇒ s types a grammar term t at level n
and produces a lambda-term s that simulates it; the counter c tallies the
flags raised at the top level. Derivations are built backwards from a tree
along a stratified reduction, raised from level to level, and searched for
a repeated nonterminal judgment whose counter strictly grows, which yields a
pump triple (C, D, t).
"""
import logging
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

from config import Config
from core import (
    HOLE,
    O,
    Abs,
    App,
    Arrow,
    Choice,
    Const,
    Ground,
    NT,
    Path,
    RankedAlphabet,
    SimpleType,
    Term,
    Tree,
    Var,
    alpha_equal,
    app,
    arrow,
    children,
    fill,
    iterate_context,
    lam,
    pretty,
    replace_at,
    subterm_at,
    type_order,
    with_children,
)
from directions import (
    annotate_deepest,
    annotate_term,
    apply_directions,
    decisions_towards,
    direction_of,
    occurrence_directions,
    plen,
    rmd,
    split_direction,
    tag_occurrences,
    tagged_plen,
)
from errors import (
    BudgetExhausted,
    FuelExhausted,
    InvariantViolation,
    NoTreeReachable,
    NotAReduct,
    OutOfRangeFlag,
    ToolkitError,
    ZeroCounter,
)
from grammar import Grammar, language, start_term
from reduce import LEFT, ReductionTrace, Step, decisions_for, is_linear_pair, stratified_reduce, tree_of

logger = logging.getLogger(__name__)

WEAK, MARK, VAR, CHOICE, ABS, APP, CONST, UNFOLD = "Weak", "Mark", "Var", "Choice", "Abs", "App", "Const", "NT"


# ==========================
# FLAG TYPES
# ==========================

@dataclass(frozen=True)
class RawArrow:
    """ι -> ρ; args is the sorted intersection ι, domain its simple type"""
    args: Tuple["FlagType", ...]
    ret: "RawType"
    domain: SimpleType


RawType = Union[Ground, RawArrow]


@dataclass(frozen=True)
class FlagType:
    flags: FrozenSet[int]
    markers: FrozenSet[int]
    raw: RawType = O

    @cached_property
    def simple(self) -> SimpleType:
        return raw_simple(self.raw)

    @cached_property
    def order(self) -> int:
        return type_order(self.simple)

    def __str__(self):
        return format_flagtype(self)


def ground(flags: Iterable[int] = (), markers: Iterable[int] = ()) -> FlagType:
    return FlagType(frozenset(flags), frozenset(markers), O)


def raw_simple(raw: RawType) -> SimpleType:
    if isinstance(raw, RawArrow):
        return Arrow(raw.domain, raw_simple(raw.ret))
    return O


@lru_cache(maxsize=None)
def flag_key(tau: FlagType) -> tuple:
    """Canonical total order: sorted flags, then sorted markers, then the raw type"""
    return tuple(sorted(tau.flags)), tuple(sorted(tau.markers)), raw_key(tau.raw)


@lru_cache(maxsize=None)
def raw_key(raw: RawType) -> tuple:
    if isinstance(raw, RawArrow):
        return 1, tuple(flag_key(a) for a in raw.args), raw_key(raw.ret), str(raw.domain)
    return (0,)


def sort_types(types: Iterable[FlagType]) -> Tuple[FlagType, ...]:
    return tuple(sorted(set(types), key=flag_key))


def format_flags(levels: Iterable[int]) -> str:
    return "{" + ",".join(str(i) for i in sorted(levels)) + "}"


def format_raw(raw: RawType) -> str:
    if isinstance(raw, RawArrow):
        return "{" + ", ".join(format_flagtype(a) for a in raw.args) + "}->" + format_raw(raw.ret)
    return "o"


def format_flagtype(tau: FlagType) -> str:
    return f"({format_flags(tau.flags)},{format_flags(tau.markers)},{format_raw(tau.raw)})"


Env = FrozenSet[Tuple[str, FlagType]]


def markers_of(env: Env) -> FrozenSet[int]:
    return frozenset().union(*(tau.markers for _, tau in env))


def format_env(env: Env) -> str:
    if not env:
        return "{}"
    return ", ".join(f"{x}:{format_flagtype(tau)}" for x, tau in sorted(env, key=lambda b: (b[0], flag_key(b[1]))))


# Output variables carry a per-type tag so that x at different types stays apart
_TYPE_TAGS: Dict[FlagType, int] = {}


def output_name(x: str, tau: FlagType) -> str:
    tag = _TYPE_TAGS.setdefault(tau, len(_TYPE_TAGS))
    return f"{x}#{tag}"


@lru_cache(maxsize=None)
def output_type(tau: FlagType) -> SimpleType:
    return _raw_output_type(tau.raw)


def _raw_output_type(raw: RawType) -> SimpleType:
    if isinstance(raw, RawArrow):
        return arrow(*[output_type(a) for a in raw.args], _raw_output_type(raw.ret))
    return O


# ==========================
# FLAG COMPOSITION
# ==========================

def comp_n(
    items: Sequence[Tuple[Iterable[int], int]],
    markers: Iterable[int],
    n: int,
) -> Tuple[FrozenSet[int], int]:
    """
    Combine flag sets and counters under a marker set at level n.

    A flag at level l that meets a marker at l is carried one level up;
    carried flags that leave level n-1 are added to the counter.

    Args:
        items: multiset of (flags, counter) pairs; duplicates count twice
        markers: marker set M
        n: level

    Returns:
        (F, c)

    Raises:
        OutOfRangeFlag: A flag or marker is not below n
    """
    markers = frozenset(markers)
    flag_sets = [frozenset(f) for f, _ in items]
    for levels in flag_sets + [markers]:
        bad = [i for i in levels if not 0 <= i < n]
        if bad:
            raise OutOfRangeFlag(f"Levels {sorted(bad)} out of range for n={n}")

    flags = set()
    carried = 0
    previous = 0
    for level in range(n + 1):
        carried = previous if level > 0 and (level - 1) in markers else 0
        if level == n:
            break
        current = carried + sum(1 for f in flag_sets if level in f)
        if current > 0 and level not in markers:
            flags.add(level)
        previous = current
    return frozenset(flags), carried + sum(c for _, c in items)


# ==========================
# DERIVATIONS
# ==========================

@dataclass(frozen=True, eq=False)
class Derivation:
    rule: str
    env: Env
    subject: Term
    type: FlagType
    counter: int
    output: Term
    children: Tuple["Derivation", ...]
    level: int
    # Var: its type; Weak: (x, type); Mark: added markers; Choice: side
    info: object = None

    @property
    def judgment(self) -> Tuple[Env, str, FlagType]:
        name = self.subject.name if isinstance(self.subject, NT) else pretty(self.subject)
        return self.env, name, self.type

    def nodes(self) -> Iterator["Derivation"]:
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    @property
    def size(self) -> int:
        return sum(1 for _ in self.nodes())

    def __repr__(self):
        return f"<Derivation {self.rule} level={self.level} c={self.counter} type={format_flagtype(self.type)}>"


def _union_env(kids: Sequence[Derivation]) -> Env:
    return frozenset().union(*(d.env for d in kids))


def _assemble(rule: str, subject: Term, kids: Sequence[Derivation], level: int, info=None) -> Derivation:
    """Node for rule over kids, with env, type, counter and output computed"""
    kids = tuple(kids)
    if rule == VAR:
        tau = info
        return Derivation(VAR, frozenset([(subject.name, tau)]), subject, tau, 0,
                          Var(output_name(subject.name, tau)), (), level, tau)
    if rule == WEAK:
        x, tau = info
        d = kids[0]
        return Derivation(WEAK, d.env | {(x, tau)}, d.subject, d.type, d.counter, d.output, kids, level, info)
    if rule == MARK:
        d = kids[0]
        added = frozenset(info)
        markers = added | d.type.markers
        flags, c = comp_n([(d.type.flags, d.counter)], markers, level)
        return Derivation(MARK, d.env, d.subject, FlagType(flags, markers, d.type.raw), c, d.output, kids, level, added)
    if rule in (CHOICE, UNFOLD):
        d = kids[0]
        return Derivation(rule, d.env, subject, d.type, d.counter, d.output, kids, level, info)
    if rule == ABS:
        d = kids[0]
        x = subject.var
        iota = sort_types(tau for y, tau in d.env if y == x)
        hidden = frozenset().union(*(tau.markers for tau in iota))
        tau = FlagType(d.type.flags, d.type.markers - hidden, RawArrow(iota, d.type.raw, subject.vtype))
        output = lam([(output_name(x, s), output_type(s)) for s in iota], d.output)
        return Derivation(ABS, frozenset(b for b in d.env if b[0] != x), subject, tau, d.counter, output, kids, level)
    if rule == APP:
        fun, args = kids[0], kids[1:]
        if not isinstance(fun.type.raw, RawArrow):
            raise InvariantViolation(f"Applied derivation has ground type: {pretty(fun.subject)}")
        ell = fun.type.order
        markers = fun.type.markers.union(*(a.type.markers for a in args))
        items = [(fun.type.flags, fun.counter)] + [
            (frozenset(f for f in a.type.flags if f >= ell), a.counter) for a in args
        ]
        flags, c = comp_n(items, markers, level)
        output = app(fun.output, *(a.output for a in args))
        return Derivation(APP, _union_env(kids), subject, FlagType(flags, markers, fun.type.raw.ret), c, output, kids, level)
    if rule == CONST:
        markers = frozenset().union(*(d.type.markers for d in kids))
        items = [(frozenset([0]), 0)] + [(d.type.flags, d.counter) for d in kids]
        flags, c = comp_n(items, markers, level)
        output = Const(subject.name, tuple(d.output for d in kids))
        return Derivation(CONST, _union_env(kids), subject, FlagType(flags, markers, O), c, output, kids, level)
    raise InvariantViolation(f"Unknown rule {rule}")


def var_derivation(x: str, tau: FlagType, level: int) -> Derivation:
    return _assemble(VAR, Var(x), (), level, tau)


def mark(d: Derivation, added: Iterable[int]) -> Derivation:
    return _assemble(MARK, d.subject, (d,), d.level, frozenset(added))


# ==========================
# CHECKING
# ==========================

@dataclass(frozen=True)
class DerivationCheck:
    ok: bool
    node: Optional[Derivation] = None
    reason: str = ""

    def __bool__(self):
        return self.ok


def _well_formed(tau: FlagType, bound: int) -> Optional[str]:
    if tau.flags & tau.markers:
        return f"flags and markers overlap in {format_flagtype(tau)}"
    if any(not 0 <= i < bound for i in tau.flags | tau.markers):
        return f"levels of {format_flagtype(tau)} not below {bound}"
    raw = tau.raw
    while isinstance(raw, RawArrow):
        inner = type_order(raw_simple(raw))
        if list(raw.args) != sorted(set(raw.args), key=flag_key):
            return f"intersection not sorted in {format_flagtype(tau)}"
        for a in raw.args:
            problem = _well_formed(a, inner)
            if problem:
                return problem
        raw = raw.ret
    return None


def _child_subjects(subject: Term) -> Dict[int, Term]:
    return dict(children(subject))


def _problems(node: Derivation, equations: Mapping[str, Term], directed: bool) -> Optional[str]:
    n = node.level
    if n < 1:
        return "level must be positive"
    problem = _well_formed(node.type, n)
    if problem:
        return problem
    if node.type.order > n:
        return f"external order {node.type.order} exceeds level {n}"
    seen: Dict[Tuple[str, FlagType], FrozenSet[int]] = {}
    for x, tau in node.env:
        if tau.order > n - 1:
            return f"binding {x} has order {tau.order} above {n - 1}"
        problem = _well_formed(tau, n)
        if problem:
            return problem
        for other, ms in seen.items():
            if ms & tau.markers:
                return f"marker sets of {other[0]} and {x} intersect"
        seen[(x, tau)] = tau.markers
    if node.counter > 0 and node.type.order <= n - 1 and (n - 1) not in node.type.markers:
        return "positive counter without top marker"
    if not markers_of(node.env) <= node.type.markers:
        return "environment markers missing from the judgment"

    rule, kids, subject = node.rule, node.children, node.subject
    if rule == VAR:
        if not isinstance(subject, Var) or kids:
            return "Var rule on a non-variable"
    elif rule == WEAK:
        if node.info[1].markers:
            return "weakened binding carries markers"
    elif rule == MARK:
        added = node.info
        child = kids[0]
        if any(not child.type.order <= i < n for i in added):
            return f"markers {format_flags(added)} outside [{child.type.order}, {n})"
        if added & child.type.markers:
            return "added markers already present"
        if directed and 0 in added:
            if not (isinstance(subject, Const) and split_direction(subject.name)[1] == 0):
                return "marker 0 placed off a direction-0 terminal"
    elif rule == CHOICE:
        if not isinstance(subject, Choice):
            return "Choice rule on a non-choice"
        side = subject.left if node.info == LEFT else subject.right
        if not alpha_equal(side, kids[0].subject):
            return "chosen side differs from the premise subject"
    elif rule == ABS:
        if not isinstance(subject, Abs) or not alpha_equal(subject.body, kids[0].subject):
            return "Abs premise subject mismatch"
    elif rule == APP:
        if not isinstance(subject, App) or not alpha_equal(subject.fun, kids[0].subject):
            return "App premise subject mismatch"
        fun_type = kids[0].type.raw
        if not isinstance(fun_type, RawArrow):
            return "applied term has ground type"
        if len(fun_type.args) != len(kids) - 1:
            return f"{len(kids) - 1} argument derivations for {len(fun_type.args)} argument types"
        ell = kids[0].type.order
        for want, d in zip(fun_type.args, kids[1:]):
            if not alpha_equal(subject.arg, d.subject):
                return "App argument subject mismatch"
            got = FlagType(
                frozenset(f for f in d.type.flags if f < ell),
                frozenset(m for m in d.type.markers if m < ell),
                d.type.raw,
            )
            if got != want:
                return f"argument type {format_flagtype(d.type)} does not restrict to {format_flagtype(want)}"
    elif rule == CONST:
        if not isinstance(subject, Const) or len(subject.args) != len(kids):
            return "Const premise count mismatch"
        if any(d.type.raw != O for d in kids):
            return "terminal argument of non-ground type"
        if any(not alpha_equal(a, d.subject) for a, d in zip(subject.args, kids)):
            return "Const argument subject mismatch"
        if directed:
            i = direction_of(subject.name)
            if any(0 in d.type.markers for j, d in enumerate(kids, 1) if j != i):
                return "marker 0 routed off the direction"
    elif rule == UNFOLD:
        if not isinstance(subject, NT) or subject.name not in equations:
            return "unfold of an unknown nonterminal"
        if not alpha_equal(equations[subject.name], kids[0].subject):
            return "unfold premise is not the equation body"

    if rule in (APP, CONST):
        owners: Dict[Tuple[str, FlagType], int] = {}
        for i, d in enumerate(kids):
            for binding in d.env:
                if binding in owners and owners[binding] != i and binding[1].markers:
                    return f"binding {binding[0]} with markers shared between premises"
                owners.setdefault(binding, i)

    try:
        expected = _assemble(rule, subject, kids, n, node.info)
    except ToolkitError as e:
        return str(e)
    if expected.type != node.type:
        return f"type {format_flagtype(node.type)} should be {format_flagtype(expected.type)}"
    if expected.counter != node.counter:
        return f"counter {node.counter} should be {expected.counter}"
    if expected.env != node.env:
        return "environment mismatch"
    if expected.output != node.output:
        return "output term mismatch"
    return None


def check_derivation(
    d: Derivation,
    equations: Optional[Mapping[str, Term]] = None,
    directed: bool = False,
) -> DerivationCheck:
    """Validate every node; the first violation found is reported"""
    equations = equations or {}
    for node in d.nodes():
        problem = _problems(node, equations, directed)
        if problem:
            logger.debug(f"Invalid {node!r}: {problem}")
            return DerivationCheck(False, node, problem)
    return DerivationCheck(True)


def format_derivation(d: Derivation, width: int = 80) -> str:
    """One judgment per line, children indented below their conclusion"""
    lines = []

    def clip(text: str) -> str:
        return text if len(text) <= width else text[: width - 3] + "..."

    def walk(node: Derivation, depth: int):
        lines.append(
            f"{'  ' * depth}[{node.rule}] {format_env(node.env)} |- {clip(pretty(node.subject))}"
            f" : {format_flagtype(node.type)} |> {node.counter} => {clip(pretty(node.output))}"
        )
        for child in node.children:
            walk(child, depth + 1)

    walk(d, 0)
    return "\n".join(lines)


# ==========================
# TREES
# ==========================

def derive_tree(tree: Tree, marked: bool = True, directed: bool = False) -> Derivation:
    """
    Level-1 derivation of a tree.

    Unmarked trees get ({0}, ∅, o) ▷ 0. A marked tree gets (∅, {0}, o) with
    the marker routed to a leaf: through the costliest child (rightmost on
    ties), or through the annotated direction when directed.
    """
    plain_memo: Dict[int, Tuple[Tree, Derivation]] = {}
    cost_memo: Dict[int, int] = {}

    def plain(node: Tree) -> Derivation:
        hit = plain_memo.get(id(node))
        if hit is not None:
            return hit[1]
        kids = [plain(c) for c in node.children]
        d = _assemble(CONST, Const(node.label, tuple(k.subject for k in kids)), kids, 1)
        plain_memo[id(node)] = (node, d)
        return d

    def cost(node: Tree) -> int:
        if id(node) not in cost_memo:
            cost_memo[id(node)] = 1 if not node.children else len(node.children) + max(cost(c) for c in node.children)
        return cost_memo[id(node)]

    def routed(node: Tree) -> Derivation:
        if directed:
            j = direction_of(node.label) - 1
        elif node.children:
            costs = [cost(c) for c in node.children]
            j = max(i for i, c in enumerate(costs) if c == max(costs))
        else:
            j = -1
        if j < 0:
            return mark(plain(node), {0})
        kids = [routed(c) if i == j else plain(c) for i, c in enumerate(node.children)]
        return _assemble(CONST, Const(node.label, tuple(k.subject for k in kids)), kids, 1)

    return routed(tree) if marked else plain(tree)


# ==========================
# SUBJECT EXPANSION
# ==========================

def _slots(node: Derivation, step: int) -> List[int]:
    """Premises whose subject sits at child position step of the node's subject"""
    rule = node.rule
    if rule == ABS:
        return [0] if step == 0 else []
    if rule == APP:
        return [0] if step == 0 else list(range(1, len(node.children)))
    if rule == CONST:
        return [step]
    if rule == CHOICE:
        return [0] if step == (0 if node.info == LEFT else 1) else []
    raise NotAReduct(f"Position below a {rule} node")


def _edit(d: Derivation, path: Path, fn, literal: Term) -> Derivation:
    """
    Apply fn to the topmost derivations at term position path.

    Parts of the subject not covered by any premise only get their subject
    updated to literal.
    """
    if not path:
        return fn(d)
    if d.rule in (MARK, WEAK):
        kid = _edit(d.children[0], path, fn, literal)
        return _assemble(d.rule, kid.subject, (kid,), d.level, d.info)
    step, rest = path[0], path[1:]
    idxs = _slots(d, step)
    kids = list(d.children)
    for i in idxs:
        kids[i] = _edit(kids[i], rest, fn, literal)
    if idxs:
        sub = kids[idxs[0]].subject
    else:
        sub = replace_at(_child_subjects(d.subject)[step], rest, literal)
    return _assemble(d.rule, replace_at(d.subject, (step,), sub), kids, d.level, d.info)


def _desubstitute(node: Derivation, body: Term, x: str, found: Dict[FlagType, Derivation]) -> Derivation:
    """Split a derivation of [s/x]body into one of body plus derivations for s"""
    if isinstance(body, Var) and body.name == x:
        known = found.get(node.type)
        if known is None or node.counter > known.counter:
            found[node.type] = node
        return var_derivation(x, node.type, node.level)
    if x not in body.free_vars:
        return node
    if node.rule in (MARK, WEAK):
        kid = _desubstitute(node.children[0], body, x, found)
        return _assemble(node.rule, kid.subject, (kid,), node.level, node.info)
    kids = list(node.children)
    subs = []
    for step, sub in children(body):
        idxs = _slots(node, step)
        for i in idxs:
            kids[i] = _desubstitute(kids[i], sub, x, found)
        subs.append(kids[idxs[0]].subject if idxs else sub)
    return _assemble(node.rule, with_children(node.subject, subs), kids, node.level, node.info)


def _expand_beta(node: Derivation, step: Step) -> Derivation:
    parts = step.parts
    found: Dict[FlagType, Derivation] = {}
    body = _desubstitute(node, parts.body, parts.var, found)
    fun = _assemble(ABS, Abs(parts.var, parts.vtype, body.subject), (body,), node.level)
    args = [found[tau] for tau in fun.type.raw.args]
    arg_subject = args[0].subject if args else parts.arg
    return _assemble(APP, App(fun.subject, arg_subject), [fun] + args, node.level)


def _expand(d: Derivation, step: Step) -> Derivation:
    before = subterm_at(step.before, step.path)
    if step.kind == "beta":
        fn = lambda node: _expand_beta(node, step)
    elif step.kind == "unfold":
        fn = lambda node: _assemble(UNFOLD, before, (node,), node.level)
    elif step.kind == "choice":
        def fn(node):
            subject = Choice(node.subject, before.right) if step.side == LEFT else Choice(before.left, node.subject)
            return _assemble(CHOICE, subject, (node,), node.level, step.side)
    else:
        raise NotAReduct(f"Unknown step kind {step.kind}")
    return _edit(d, step.path, fn, before)


def subject_expand(d: Derivation, step: Step) -> Derivation:
    """
    Derivation for the term before a reduction step, from one for the term after it.

    The counter is preserved.

    Raises:
        NotAReduct: d does not derive the result of step
    """
    if not alpha_equal(d.subject, step.after):
        raise NotAReduct("Derivation subject is not the reduct of the step")
    expanded = _expand(d, step)
    if expanded.counter != d.counter:
        raise InvariantViolation(f"Expansion changed the counter from {d.counter} to {expanded.counter}")
    return expanded


# ==========================
# RAISING THE LEVEL
# ==========================

def _lift(d: Derivation) -> Derivation:
    """Same derivation one level up: counter 0, flag n added when the counter was positive"""
    kids = [_lift(k) for k in d.children]
    return _assemble(d.rule, d.subject, kids, d.level + 1, d.info)


def _raise(d: Derivation) -> Derivation:
    n = d.level
    if d.rule == MARK and d.children[0].counter == 0:
        return _assemble(MARK, d.subject, (_lift(d.children[0]),), n + 1, d.info | {n})
    if d.counter <= 2:
        return mark(_lift(d), {n})
    if d.rule in (MARK, WEAK, ABS, CHOICE, UNFOLD):
        kid = _raise(d.children[0])
        return _assemble(d.rule, kid.subject if d.rule in (MARK, WEAK) else d.subject, (kid,), n + 1, d.info)
    if d.rule in (APP, CONST):
        counters = [k.counter for k in d.children]
        if not any(counters):
            # The carried flag comes from a premise marked at n-1
            j = max(i for i, k in enumerate(d.children) if (n - 1) in k.type.markers)
            kids = [mark(_lift(k), {n}) if i == j else _lift(k) for i, k in enumerate(d.children)]
        else:
            top = max(counters)
            j = max(i for i, c in enumerate(counters) if c == top)
            kids = [_raise(k) if i == j else _lift(k) for i, k in enumerate(d.children)]
        return _assemble(d.rule, d.subject, kids, n + 1, d.info)
    raise InvariantViolation(f"Cannot raise a {d.rule} node with counter {d.counter}")


def increase_order(d: Derivation) -> Derivation:
    """
    Derivation one level up with marker n added and counter c, 2^c >= c'.

    Raises:
        ZeroCounter: The counter is 0
    """
    if d.counter == 0:
        raise ZeroCounter("Cannot raise a derivation whose counter is 0")
    raised = _raise(d)
    if 2 ** raised.counter < d.counter:
        raise InvariantViolation(f"Raised counter {raised.counter} too small for {d.counter}")
    logger.debug(f"Raised to level {raised.level}: counter {d.counter} -> {raised.counter}")
    return raised


# ==========================
# ROOT DERIVATIONS
# ==========================

def build_root_derivation(
    grammar: Grammar,
    tree: Tree,
    trace: ReductionTrace,
    directed: bool = False,
) -> Derivation:
    """
    Derivation of ∅ ⊢n S : (∅, {0..n-1}, o) ▷ c ⇒ s for a stratified trace to tree.

    Starts from the marked level-1 derivation of the tree, expands backwards
    through every step and raises the level whenever the steps cross into a
    higher block.
    """
    d = derive_tree(tree, marked=True, directed=directed)
    for step in reversed(trace.steps):
        while d.level < step.level:
            d = increase_order(d)
        d = _expand(d, step)
    top = max(grammar.order, trace.top_level, 1)
    while d.level < top:
        d = increase_order(d)
    if not alpha_equal(d.subject, trace.start):
        raise InvariantViolation("Expanded derivation does not derive the start term")
    logger.debug(f"Root derivation: level {d.level}, counter {d.counter}, {d.size} nodes")
    return d


def shrink(d: Derivation) -> Derivation:
    """Replace each unfold node by its deepest unfold descendant with the same judgment and counter"""

    def deepest_twin(node: Derivation) -> Optional[Derivation]:
        key = (node.env, node.subject, node.type, node.counter)
        best, best_depth = None, 0
        stack = [(k, 1) for k in node.children]
        while stack:
            current, depth = stack.pop()
            if current.rule == UNFOLD and (current.env, current.subject, current.type, current.counter) == key:
                if depth > best_depth:
                    best, best_depth = current, depth
            stack.extend((k, depth + 1) for k in current.children)
        return best

    def walk(node: Derivation) -> Derivation:
        if node.rule == UNFOLD:
            twin = deepest_twin(node)
            if twin is not None:
                logger.debug(f"Shrinking repeated judgment of {node.subject.name}")
                return walk(twin)
        if not node.children:
            return node
        kids = [walk(k) for k in node.children]
        if all(a is b for a, b in zip(kids, node.children)):
            return node
        return _assemble(node.rule, node.subject, kids, node.level, node.info)

    return walk(d)


def verify_soundness(
    d: Derivation,
    grammar: Optional[Grammar] = None,
    directed: bool = False,
    config: Config = Config(),
) -> Tuple[Tree, bool]:
    """
    Evaluate the output of a root derivation and check it against its counter.

    The tree must be in the grammar's language (checked by bounded search when
    a grammar is given) and bound the counter: c <= |tree|, or for directed
    derivations c <= r * plen(tree) with r the largest arity on the path.
    """
    tree = tree_of(d.output, fuel=config.fuel)
    if directed:
        arity = max((len(node.children) for node in _path_nodes(tree)), default=0)
        bounded = d.counter <= max(arity, 1) * plen(tree)
    else:
        bounded = d.counter <= tree.size
    member = True
    if grammar is not None:
        try:
            decisions_for(start_term(grammar), tree, grammar.equations, max_steps=config.enum_steps)
        except NoTreeReachable:
            member = False
    if not bounded:
        logger.warning(f"Counter {d.counter} exceeds the bound for a tree of size {tree.size}")
    return tree, bounded and member


def _path_nodes(tree: Tree) -> Iterator[Tree]:
    node = tree
    while True:
        yield node
        i = direction_of(node.label)
        if i == 0:
            return
        node = node.children[i - 1]


# ==========================
# PUMPING
# ==========================

@dataclass
class PumpTriple:
    """Contexts C, D and term t with every tree(C[D^k[t]]) in the language"""
    C: Term
    D: Term
    t: Term
    order: int
    hole_type: SimpleType
    costs: Tuple[int, int, int]
    nonterminal: str
    judgment: FlagType
    root: Derivation
    outer: Tuple[int, ...]
    inner: Tuple[int, ...]
    source: Optional[Tree] = None

    def iterate(self, k: int) -> Term:
        return fill(self.C, iterate_context(self.D, k, self.t))

    def summary(self) -> str:
        c1, c2, c3 = self.costs
        return (
            f"C = {pretty(self.C)}\nD = {pretty(self.D)}\nt = {pretty(self.t)}\n"
            f"nonterminal {self.nonterminal} : {format_flagtype(self.judgment)}, costs c1={c1} c2={c2} c3={c3}"
        )


def _output_offset(node: Derivation, i: int) -> Path:
    """Position of premise i's output inside the node's output"""
    if node.rule == ABS:
        return (0,) * len(node.type.raw.args)
    if node.rule == APP:
        k = len(node.children) - 1
        return (0,) * k if i == 0 else (0,) * (k - i) + (1,)
    if node.rule == CONST:
        return (i,)
    return ()


def _node_at(d: Derivation, path: Sequence[int]) -> Derivation:
    for i in path:
        d = d.children[i]
    return d


def _output_path(d: Derivation, path: Sequence[int]) -> Path:
    out: Path = ()
    for i in path:
        out += _output_offset(d, i)
        d = d.children[i]
    return out


def _replace_node(d: Derivation, path: Sequence[int], new: Derivation) -> Derivation:
    if not path:
        return new
    kids = list(d.children)
    kids[path[0]] = _replace_node(kids[path[0]], path[1:], new)
    return _assemble(d.rule, d.subject, kids, d.level, d.info)


@dataclass(frozen=True)
class _Candidate:
    outer: Tuple[int, ...]
    inner: Tuple[int, ...]
    witnesses: int


def _pumpable_pairs(root: Derivation, select) -> List[_Candidate]:
    """
    Ancestor/descendant pairs with equal keys and counters c_outer > c_inner > 0.

    select(node, position) gives a node's key, or None to skip it. Pairs with
    a third node of the same key on their branch come first, then outermost.
    """
    found: List[_Candidate] = []
    stack: List[Tuple[object, int, Tuple[int, ...]]] = []

    def walk(node: Derivation, path: Tuple[int, ...], position: Path):
        key = select(node, position) if node.counter > 0 else None
        if key is not None:
            same = [(c, p) for k, c, p in stack if k == key]
            for c, p in same:
                if c > node.counter:
                    found.append(_Candidate(p, path[len(p):], len(same) + 1))
            stack.append((key, node.counter, path))
        for i, child in enumerate(node.children):
            walk(child, path + (i,), position + _term_offset(node, i))
        if key is not None:
            stack.pop()

    walk(root, (), ())
    found.sort(key=lambda c: (c.witnesses < 3, len(c.outer), len(c.inner)))
    return found


def _term_offset(node: Derivation, i: int) -> Path:
    """Position of premise i's subject inside the node's subject"""
    if node.rule == ABS:
        return (0,)
    if node.rule == APP:
        return (0,) if i == 0 else (1,)
    if node.rule == CONST:
        return (i,)
    if node.rule == CHOICE:
        return (0,) if node.info == LEFT else (1,)
    return ()


def _triple_from(root: Derivation, candidate: _Candidate, source: Optional[Tree]) -> PumpTriple:
    outer = _node_at(root, candidate.outer)
    inner = _node_at(outer, candidate.inner)
    c_path = _output_path(root, candidate.outer)
    d_path = _output_path(outer, candidate.inner)
    name = outer.subject.name if isinstance(outer.subject, NT) else pretty(outer.subject)
    return PumpTriple(
        C=replace_at(root.output, c_path, HOLE),
        D=replace_at(outer.output, d_path, HOLE),
        t=inner.output,
        order=root.level,
        hole_type=output_type(inner.type),
        costs=(inner.counter, outer.counter - inner.counter, root.counter - outer.counter),
        nonterminal=name,
        judgment=inner.type,
        root=root,
        outer=candidate.outer,
        inner=candidate.inner,
        source=source,
    )


def pump(triple: PumpTriple, k: int) -> Derivation:
    """Root derivation with the segment between the two judgments repeated k times"""
    outer = _node_at(triple.root, triple.outer)
    segment = _node_at(outer, triple.inner)
    for _ in range(k):
        segment = _replace_node(outer, triple.inner, segment)
    return _replace_node(triple.root, triple.outer, segment)


def _size_schedule(cap: int) -> List[int]:
    sizes, size = [], 8
    while size < cap:
        sizes.append(size)
        size *= 4
    return sizes + [cap]


def find_pumpable(grammar: Grammar, config: Config = Config()) -> PumpTriple:
    """
    Search language members by size for a pumpable root derivation.

    Raises:
        BudgetExhausted: No linear pump triple among the candidates tried
    """
    tried: set = set()
    largest = 0
    for cap in _size_schedule(config.pump_tree_cap):
        members = language(grammar, max_tree_size=cap, max_steps=config.enum_steps)
        for tree in members.by_size():
            if tree in tried:
                continue
            if len(tried) >= config.candidate_cap:
                break
            tried.add(tree)
            largest = max(largest, tree.size)
            logger.debug(f"Trying candidate tree of size {tree.size}")
            try:
                trace = stratified_reduce(
                    start_term(grammar), grammar, decisions=members.decisions[tree], fuel=config.fuel
                )
                root = shrink(build_root_derivation(grammar, tree, trace))
            except FuelExhausted:
                logger.debug(f"Fuel exhausted on a tree of size {tree.size}")
                continue
            select = lambda node, position: (node.env, node.subject, node.type) if node.rule == UNFOLD else None
            for candidate in _pumpable_pairs(root, select):
                triple = _triple_from(root, candidate, tree)
                if is_linear_pair(triple.C, triple.D, config.probe_depth, fuel=config.fuel):
                    logger.info(f"✓ Pumpable derivation found on a tree of size {tree.size}")
                    return triple
                logger.debug("Candidate pair rejected: contexts not linear")
        if len(tried) >= config.candidate_cap:
            break
    raise BudgetExhausted(f"No pumpable derivation among {len(tried)} trees up to size {largest}", stage="pumpable")


# ==========================
# DIRECTED PUMPING
# ==========================

@dataclass
class DirectedTriple:
    """Direction-annotated G, H, u with rmd(tree(G[H^k[u]])) = tree(C[D^(pk+q)[t]])"""
    G: Term
    H: Term
    u: Term
    p: int
    q: int
    route: str
    plens: Tuple[int, ...] = ()

    def iterate(self, k: int) -> Term:
        return fill(self.G, iterate_context(self.H, k, self.u))


def _term_alphabet(t: Term) -> RankedAlphabet:
    arities: Dict[str, int] = {}
    stack = [t]
    while stack:
        s = stack.pop()
        if isinstance(s, Const):
            arities[s.name] = len(s.args)
        stack.extend(c for _, c in children(s))
    return RankedAlphabet(arities)


def _grows(values: Sequence[int]) -> bool:
    tail = values[1:]
    return len(tail) >= 2 and all(a < b for a, b in zip(tail, tail[1:]))


def _check_directed(C, D, t, triple: DirectedTriple, config: Config) -> bool:
    plens = []
    for k in range(config.prefix + 1):
        got = tree_of(triple.iterate(k), fuel=config.fuel)
        want = tree_of(fill(C, iterate_context(D, triple.p * k + triple.q, t)), fuel=config.fuel)
        if rmd(got) != want:
            logger.debug(f"Directed candidate fails at k={k}")
            return False
        plens.append(plen(got))
    triple.plens = tuple(plens)
    return _grows(plens)


def _directed_by_derivation(C: Term, D: Term, t: Term, config: Config) -> Optional[DirectedTriple]:
    annotated_d = annotate_term(D)
    annotated_t = annotate_term(t)
    for depth in range(2, config.prefix + 2):
        plain = fill(C, iterate_context(D, depth, t))
        target = annotate_deepest(tree_of(plain, fuel=config.fuel))
        subject = annotate_term(plain)
        decisions = decisions_towards(subject, target, fuel=config.fuel)
        grammar = Grammar(_term_alphabet(subject), {}, (), "S", "directed-triple")
        trace = stratified_reduce(subject, grammar, decisions=decisions, fuel=config.fuel)
        root = build_root_derivation(grammar, target, trace, directed=True)
        iterates = {}
        for i in range(depth + 1):
            s = iterate_context(annotated_d, i, annotated_t)
            iterates.setdefault(s.size, []).append((i, s))

        def select(node, position):
            for i, s in iterates.get(node.subject.size, ()):
                if alpha_equal(node.subject, s):
                    return (node.env, node.type)
            return None

        def index_of(node) -> int:
            for i, s in iterates.get(node.subject.size, ()):
                if alpha_equal(node.subject, s):
                    return i
            raise InvariantViolation("Selected node is not an iterate")

        for candidate in _pumpable_pairs(root, select):
            outer = _node_at(root, candidate.outer)
            inner = _node_at(outer, candidate.inner)
            p = index_of(outer) - index_of(inner)
            if p <= 0:
                continue
            cut = _triple_from(root, candidate, None)
            triple = DirectedTriple(cut.C, cut.D, cut.t, p, depth - p, "derivation")
            if not is_linear_pair(cut.C, cut.D, config.probe_depth, fuel=config.fuel):
                continue
            if _check_directed(C, D, t, triple, config):
                logger.info(f"✓ Directed triple from a derivation at depth {depth}: p={p}, q={triple.q}")
                return triple
    return None


def _directed_by_occurrences(C: Term, D: Term, t: Term, config: Config) -> Optional[DirectedTriple]:
    """Try direction assignments per terminal occurrence of C, D^p and t"""
    tried = 0
    for p in range(1, 3):
        for q in range(p):
            g, h, u = fill(C, iterate_context(D, q, HOLE)), iterate_context(D, p, HOLE), t
            (tg, th, tu), table = tag_occurrences([g, h, u])
            trees = [tree_of(fill(tg, iterate_context(th, k, tu)), fuel=config.fuel) for k in range(config.prefix + 1)]
            for assignment in occurrence_directions(table):
                tried += 1
                if tried > config.direction_budget:
                    return None
                plens = [tagged_plen(tree, assignment) for tree in trees]
                if not _grows(plens):
                    continue
                triple = DirectedTriple(
                    apply_directions(tg, table, assignment),
                    apply_directions(th, table, assignment),
                    apply_directions(tu, table, assignment),
                    p,
                    q,
                    "occurrence",
                )
                if _check_directed(C, D, t, triple, config):
                    logger.info(f"✓ Directed triple by occurrence annotation: p={p}, q={q}")
                    return triple
    return None


def find_pumpable_directed(C: Term, D: Term, t: Term, config: Config = Config()) -> DirectedTriple:
    """
    Direction-annotated (G, H, u, p, q) whose selected path grows with k.

    First cuts a directed derivation of C[D^K[t]] at two iterates of D
    with the same judgment and growing counters, then falls back to
    annotating the terminal occurrences of C, D and t directly. Both are
    checked on the configured prefix.

    Raises:
        BudgetExhausted: Neither route produced a growing directed triple
    """
    try:
        found = _directed_by_derivation(C, D, t, config)
    except (ToolkitError, RecursionError) as e:
        logger.debug(f"Derivation route failed: {e}")
        found = None
    if found is None:
        found = _directed_by_occurrences(C, D, t, config)
    if found is None:
        raise BudgetExhausted("No direction annotation makes the selected path grow", stage="directions")
    return found
