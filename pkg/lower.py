"""
Order-lowering transformations.

The first transformation turns a term over a word alphabet into a term of
one order less over the br alphabet whose tree has the word as its frontier
(up to e). The second removes the e leaves. Both are driven by intersection
type derivations; lower_triple uses them to turn a linear pump triple of
order n into one of order n-1.
"""
import itertools
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

from config import Config
from core import (
    HOLE,
    O,
    Abs,
    App,
    Arrow,
    Const,
    NT,
    Path,
    SimpleType,
    Term,
    Var,
    alpha_equal,
    app,
    arrow,
    children,
    fill,
    fresh_name,
    iterate_context,
    lam,
    pretty,
    replace_at,
    subst,
    type_check,
    type_order,
    with_children,
)
from errors import (
    BudgetExhausted,
    InvariantViolation,
    NoDerivation,
    NonWordAlphabet,
    NotAReduct,
    NotBrAlphabet,
    RefinementSpaceTooLarge,
)
from grammar import Word, leaves, word_of
from reduce import DEFAULT_FUEL, beta_sequence, count_occurrences, is_linear_pair, tree_of

logger = logging.getLogger(__name__)

EPSILON = "e"
BR = "br"

VAR, CONST0, CONST1, CONST2 = "Var", "Const0", "Const1", "Const2"
APP, APP1, APP2 = "App", "App1", "App2"
ABS, ABS1, ABS2 = "Abs", "Abs1", "Abs2"


# ==========================
# REFINEMENT TYPES
# ==========================

@dataclass(frozen=True)
class Base:
    name: str

    def __str__(self):
        return self.name


# o of the first system; o0 and o+ of the second
FST_O = Base("o")
EMPTY = Base("o0")
PLUS = Base("o+")


@dataclass(frozen=True)
class IArrow:
    args: Tuple["RType", ...]
    ret: "RType"
    domain: SimpleType

    def __str__(self):
        return format_rtype(self)


RType = Union[Base, IArrow]


@lru_cache(maxsize=None)
def rtype_key(ty: RType) -> tuple:
    if isinstance(ty, IArrow):
        return 1, tuple(rtype_key(a) for a in ty.args), rtype_key(ty.ret), str(ty.domain)
    return 0, ty.name


def sort_rtypes(types: Iterable[RType]) -> Tuple[RType, ...]:
    return tuple(sorted(set(types), key=rtype_key))


def simple_of(ty: RType) -> SimpleType:
    if isinstance(ty, IArrow):
        return Arrow(ty.domain, simple_of(ty.ret))
    return O


def format_rtype(ty: RType) -> str:
    if isinstance(ty, IArrow):
        args = " & ".join(format_rtype(a) for a in ty.args) or "T"
        return f"({args} -> {format_rtype(ty.ret)})"
    return ty.name


def unbalanced(ty: RType) -> bool:
    if isinstance(ty, IArrow):
        return balanced_intersection(ty.args) and unbalanced(ty.ret)
    return ty == FST_O


def balanced(ty: RType) -> bool:
    if isinstance(ty, IArrow):
        if unbalanced_intersection(ty.args):
            return unbalanced(ty.ret)
        return balanced_intersection(ty.args) and balanced(ty.ret)
    return False


def balanced_intersection(args: Sequence[RType]) -> bool:
    return all(balanced(a) for a in args)


def unbalanced_intersection(args: Sequence[RType]) -> bool:
    """Exactly one unbalanced component, the others balanced"""
    flags = [unbalanced(a) for a in args]
    return flags.count(True) == 1 and all(unbalanced(a) or balanced(a) for a in args)


_HUGE = 2 ** 64


def _subsets(n: int) -> int:
    return 2 ** n if n < 64 else _HUGE


@lru_cache(maxsize=None)
def _first_counts(kappa: SimpleType) -> Tuple[int, int]:
    if not isinstance(kappa, Arrow):
        return 1, 0
    u1, b1 = _first_counts(kappa.domain)
    u2, b2 = _first_counts(kappa.codomain)
    return min(_subsets(b1) * u2, _HUGE), min(u1 * _subsets(b1) * u2 + _subsets(b1) * b2, _HUGE)


def first_refinement_count(kappa: SimpleType, cap: Optional[int] = None) -> int:
    """Number of well-formed first-system refinements of kappa"""
    u, b = _first_counts(kappa)
    total = u + b
    if cap is not None and total > cap:
        raise RefinementSpaceTooLarge(f"{kappa} has more than {cap} first-system refinements")
    return total


@lru_cache(maxsize=None)
def _second_count(kappa: SimpleType) -> int:
    if not isinstance(kappa, Arrow):
        return 2
    return min(_subsets(_second_count(kappa.domain)) * _second_count(kappa.codomain), _HUGE)


def second_refinement_count(kappa: SimpleType, cap: Optional[int] = None) -> int:
    """Number of second-system refinements of kappa"""
    total = _second_count(kappa)
    if cap is not None and total > cap:
        raise RefinementSpaceTooLarge(f"{kappa} has more than {cap} second-system refinements")
    return total


def _powerset(items: Sequence[RType], width: int) -> Iterator[Tuple[RType, ...]]:
    for k in range(min(len(items), width) + 1):
        yield from itertools.combinations(items, k)


# ==========================
# DERIVATIONS
# ==========================

REnv = FrozenSet[Tuple[str, RType]]


@dataclass(frozen=True, eq=False)
class RNode:
    rule: str
    env: REnv
    subject: Term
    type: RType
    output: Term
    children: Tuple["RNode", ...] = ()
    info: object = None

    def nodes(self) -> Iterator["RNode"]:
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def __repr__(self):
        return f"<RNode {self.rule} : {format_rtype(self.type)}>"


_TAGS: Dict[RType, int] = {}


def output_var(x: str, ty: RType) -> str:
    tag = _TAGS.setdefault(ty, len(_TAGS))
    return f"{x}#{tag}"


def _kind(rule: str) -> str:
    if rule.startswith(APP):
        return APP
    if rule.startswith(ABS):
        return ABS
    return rule


def _union(kids: Sequence[RNode]) -> REnv:
    return frozenset().union(*(k.env for k in kids))


class _System:
    """A type-directed transformation: typing rules plus the image they emit"""
    name = "system"

    def out_type(self, ty: RType) -> SimpleType:
        raise NotImplementedError

    def refinements(self, kappa: SimpleType, config: Config) -> List[RType]:
        raise NotImplementedError

    def count(self, kappa: SimpleType, cap: Optional[int] = None) -> int:
        raise NotImplementedError

    def intersection_ok(self, args: Sequence[RType], ret: RType) -> bool:
        return True

    def union_ok(self, kids: Sequence[RNode]) -> bool:
        return True

    def const(self, subject: Const, kids: Sequence[RNode]) -> RNode:
        raise NotImplementedError

    def const_premises(self, subject: Const, ty: RType) -> Iterator[Tuple[RType, ...]]:
        """Premise types from which the constant rule can conclude ty"""
        raise NotImplementedError

    def derive_normal(self, t: Term) -> RNode:
        raise NotImplementedError

    def abs_rule(self, iota: Tuple[RType, ...]) -> str:
        return ABS

    def abs_output(self, x: str, iota: Tuple[RType, ...], body: Term) -> Term:
        return lam([(output_var(x, s), self.out_type(s)) for s in iota], body)

    def app_output(self, fun: RNode, args: Sequence[RNode]) -> Tuple[str, Term]:
        return APP, app(fun.output, *(a.output for a in args))

    def assemble(self, kind: str, subject: Term, kids: Sequence[RNode], info=None) -> RNode:
        kids = tuple(kids)
        if kind == VAR:
            return RNode(VAR, frozenset([(subject.name, info)]), subject, info, Var(output_var(subject.name, info)), (), info)
        if kind == ABS:
            body = kids[0]
            x = subject.var
            iota = sort_rtypes(ty for y, ty in body.env if y == x)
            rule = self.abs_rule(iota)
            env = frozenset(b for b in body.env if b[0] != x)
            return RNode(rule, env, subject, IArrow(iota, body.type, subject.vtype), self.abs_output(x, iota, body.output), kids)
        if kind == APP:
            fun, args = kids[0], kids[1:]
            if not isinstance(fun.type, IArrow) or len(fun.type.args) != len(args):
                raise NoDerivation(f"Cannot apply {pretty(fun.subject)} at {format_rtype(fun.type)}")
            rule, output = self.app_output(fun, args)
            return RNode(rule, _union(kids), subject, fun.type.ret, output, kids)
        return self.const(subject, kids)


class FirstSystem(_System):
    """Word alphabet to br alphabet; unbalanced bindings are linear"""
    name = "first"

    def out_type(self, ty: RType) -> SimpleType:
        if type_order(simple_of(ty)) <= 1:
            return O
        return arrow(*[self.out_type(a) for a in ty.args], self.out_type(ty.ret))

    def count(self, kappa: SimpleType, cap: Optional[int] = None) -> int:
        return first_refinement_count(kappa, cap)

    def refinements(self, kappa: SimpleType, config: Config) -> List[RType]:
        self.count(kappa, config.refinement_cap)
        return [ty for ty in _first_refinements(kappa, config.intersection_width)]

    def intersection_ok(self, args: Sequence[RType], ret: RType) -> bool:
        if FST_O in args and len(args) > 1:
            return False
        if unbalanced_intersection(args):
            return unbalanced(ret)
        return balanced_intersection(args)

    def union_ok(self, kids: Sequence[RNode]) -> bool:
        seen = set()
        for k in kids:
            for binding in k.env:
                if binding in seen and not balanced(binding[1]):
                    return False
            seen |= k.env
        return True

    def abs_rule(self, iota: Tuple[RType, ...]) -> str:
        if iota == (FST_O,):
            return ABS2
        if FST_O in iota:
            raise NoDerivation("Ground binding used alongside other types")
        return ABS1

    def abs_output(self, x: str, iota: Tuple[RType, ...], body: Term) -> Term:
        if iota == (FST_O,):
            return subst(body, output_var(x, FST_O), Const(EPSILON))
        return super().abs_output(x, iota, body)

    def app_output(self, fun: RNode, args: Sequence[RNode]) -> Tuple[str, Term]:
        if fun.type.args == (FST_O,):
            return APP2, Const(BR, (fun.output, args[0].output))
        return APP1, app(fun.output, *(a.output for a in args))

    def const(self, subject: Const, kids: Sequence[RNode]) -> RNode:
        if subject.name == EPSILON and not subject.args:
            return RNode(CONST0, frozenset(), subject, FST_O, Const(EPSILON))
        if len(subject.args) == 1:
            (d,) = kids
            if d.type != FST_O:
                raise NoDerivation(f"Argument of '{subject.name}' typed {format_rtype(d.type)}")
            return RNode(CONST1, d.env, subject, FST_O, Const(BR, (Const(subject.name), d.output)), tuple(kids))
        raise NonWordAlphabet(f"Terminal '{subject.name}' of arity {len(subject.args)} in a word term")

    def const_premises(self, subject: Const, ty: RType) -> Iterator[Tuple[RType, ...]]:
        if ty == FST_O:
            yield (FST_O,) * len(subject.args)

    def derive_normal(self, t: Term) -> RNode:
        """a1(...(an e)...) at o, emitting br a1 (... (br an e))"""
        if not isinstance(t, Const):
            raise NonWordAlphabet(f"Not a word tree: {pretty(t)}")
        return self.const(t, [self.derive_normal(a) for a in t.args])


class SecondSystem(_System):
    """br alphabet to e-free br alphabet"""
    name = "second"

    def out_type(self, ty: RType) -> SimpleType:
        if isinstance(ty, IArrow):
            return arrow(*[self.out_type(a) for a in ty.args], self.out_type(ty.ret))
        return O

    def count(self, kappa: SimpleType, cap: Optional[int] = None) -> int:
        return second_refinement_count(kappa, cap)

    def refinements(self, kappa: SimpleType, config: Config) -> List[RType]:
        self.count(kappa, config.refinement_cap)
        return list(_second_refinements(kappa, config.intersection_width))

    def const(self, subject: Const, kids: Sequence[RNode]) -> RNode:
        kids = tuple(kids)
        if subject.name == EPSILON and not subject.args:
            return RNode(CONST0, frozenset(), subject, EMPTY, Const(EPSILON))
        if not subject.args:
            return RNode(CONST1, frozenset(), subject, PLUS, Const(subject.name))
        if subject.name == BR and len(kids) == 2:
            d0, d1 = kids
            if d0.type == PLUS and d1.type == PLUS:
                return RNode(CONST2, _union(kids), subject, PLUS, Const(BR, (d0.output, d1.output)), kids)
            if d0.type == PLUS and d1.type == EMPTY:
                return RNode(CONST2, d0.env, subject, PLUS, d0.output, kids, 0)
            if d0.type == EMPTY and d1.type == PLUS:
                return RNode(CONST2, d1.env, subject, PLUS, d1.output, kids, 1)
            if d0.type == EMPTY and d1.type == EMPTY:
                return RNode(CONST2, frozenset(), subject, EMPTY, Const(EPSILON), kids)
            raise NoDerivation("br applied to non-ground premises")
        raise NotBrAlphabet(f"Terminal '{subject.name}' of arity {len(subject.args)} in a br term")

    def const_premises(self, subject: Const, ty: RType) -> Iterator[Tuple[RType, ...]]:
        if subject.name != BR or len(subject.args) != 2:
            return
        if ty == PLUS:
            yield from ((PLUS, PLUS), (PLUS, EMPTY), (EMPTY, PLUS))
        elif ty == EMPTY:
            yield EMPTY, EMPTY

    def derive_normal(self, t: Term) -> RNode:
        if not isinstance(t, Const):
            raise NotBrAlphabet(f"Not a br tree: {pretty(t)}")
        return self.const(t, [self.derive_normal(a) for a in t.args])


FIRST = FirstSystem()
SECOND = SecondSystem()


def _first_refinements(kappa: SimpleType, width: int) -> List[RType]:
    if not isinstance(kappa, Arrow):
        return [FST_O]
    doms = _first_refinements(kappa.domain, width)
    rets = _first_refinements(kappa.codomain, width)
    found = []
    for iota in _powerset(doms, width):
        for ret in rets:
            if FIRST.intersection_ok(iota, ret):
                found.append(IArrow(iota, ret, kappa.domain))
    return found


def _second_refinements(kappa: SimpleType, width: int) -> List[RType]:
    if not isinstance(kappa, Arrow):
        return [EMPTY, PLUS]
    doms = _second_refinements(kappa.domain, width)
    rets = _second_refinements(kappa.codomain, width)
    return [IArrow(iota, ret, kappa.domain) for iota in _powerset(doms, width) for ret in rets]


# ==========================
# SUBJECT EXPANSION
# ==========================

def _slots(node: RNode, step: int) -> List[int]:
    kind = _kind(node.rule)
    if kind == ABS:
        return [0] if step == 0 else []
    if kind == APP:
        return [0] if step == 0 else list(range(1, len(node.children)))
    if node.rule in (CONST1, CONST2) and node.children:
        return [step]
    raise NotAReduct(f"Position below a {node.rule} node")


def _rebuild(system: _System, node: RNode, subject: Term, kids: Sequence[RNode]) -> RNode:
    return system.assemble(_kind(node.rule), subject, kids, node.info)


def _desubstitute(system: _System, node: RNode, body: Term, x: str, found: Dict[RType, RNode]) -> RNode:
    """Split a derivation of [s/x]body into one of body plus derivations for s"""
    if isinstance(body, Var) and body.name == x:
        found.setdefault(node.type, node)
        return system.assemble(VAR, Var(x), (), node.type)
    if x not in body.free_vars:
        return node
    kids = list(node.children)
    subs = []
    for step, sub in children(body):
        idxs = _slots(node, step)
        for i in idxs:
            kids[i] = _desubstitute(system, kids[i], sub, x, found)
        subs.append(kids[idxs[0]].subject if idxs else sub)
    return _rebuild(system, node, with_children(node.subject, subs), kids)


def _edit(system: _System, d: RNode, path: Path, fn, literal: Term) -> RNode:
    if not path:
        return fn(d)
    step, rest = path[0], path[1:]
    idxs = _slots(d, step)
    kids = list(d.children)
    for i in idxs:
        kids[i] = _edit(system, kids[i], rest, fn, literal)
    if idxs:
        sub = kids[idxs[0]].subject
    else:
        sub = replace_at(dict(children(d.subject))[step], rest, literal)
    return _rebuild(system, d, replace_at(d.subject, (step,), sub), kids)


def _expand(system: _System, d: RNode, path: Path, parts) -> RNode:
    redex = App(Abs(parts.var, parts.vtype, parts.body), parts.arg)

    def fn(node: RNode) -> RNode:
        found: Dict[RType, RNode] = {}
        body = _desubstitute(system, node, parts.body, parts.var, found)
        fun = system.assemble(ABS, Abs(parts.var, parts.vtype, body.subject), (body,))
        args = [found[ty] for ty in fun.type.args]
        return system.assemble(APP, App(fun.subject, args[0].subject if args else parts.arg), [fun] + args)

    return _edit(system, d, path, fn, redex)


def derive_closed(system: _System, t: Term, fuel=DEFAULT_FUEL) -> RNode:
    """
    Derivation of a closed ground pure term at its ground refinement.

    Reduces t to its tree, types the tree directly and expands the
    derivation back through every beta step.
    """
    tree_term, steps = beta_sequence(t, fuel)
    d = system.derive_normal(tree_term)
    for path, parts in reversed(steps):
        d = _expand(system, d, path, parts)
    if not alpha_equal(d.subject, t):
        raise InvariantViolation("Expanded refinement derivation does not derive the input")
    logger.debug(f"{system.name} derivation through {len(steps)} beta steps")
    return d


# ==========================
# DERIVATION SEARCH
# ==========================

class _Search:
    """Bottom-up derivation search memoized on (term, type, environment)"""

    def __init__(self, system: _System, config: Config):
        self.system = system
        self.config = config
        self.memo: Dict[tuple, Optional[RNode]] = {}
        self.tried = 0

    def derive(self, env: Mapping[str, Tuple[RType, ...]], simple_env: Mapping[str, SimpleType], t: Term, ty: RType) -> Optional[RNode]:
        key = (t, ty, tuple(sorted((x, tuple(rtype_key(a) for a in v)) for x, v in env.items() if x in t.free_vars)))
        if key in self.memo:
            return self.memo[key]
        self.memo[key] = None
        result = self._derive(env, simple_env, t, ty)
        self.memo[key] = result
        return result

    def _derive(self, env, simple_env, t: Term, ty: RType) -> Optional[RNode]:
        system = self.system
        if isinstance(t, Var):
            return system.assemble(VAR, t, (), ty) if ty in env.get(t.name, ()) else None
        if isinstance(t, Const):
            for premises in system.const_premises(t, ty):
                kids = [self.derive(env, simple_env, a, p) for a, p in zip(t.args, premises)]
                if all(k is not None for k in kids) and system.union_ok(kids):
                    node = system.const(t, kids)
                    if node.type == ty:
                        return node
            if not t.args:
                try:
                    node = system.const(t, [])
                except NoDerivation:
                    return None
                return node if node.type == ty else None
            return None
        if isinstance(t, Abs):
            if not isinstance(ty, IArrow) or ty.domain != t.vtype:
                return None
            inner = {**env, t.var: ty.args}
            body = self.derive(inner, {**simple_env, t.var: t.vtype}, t.body, ty.ret)
            if body is None:
                return None
            used = sort_rtypes(s for y, s in body.env if y == t.var)
            if used != ty.args:
                return None
            try:
                return system.assemble(ABS, t, (body,))
            except NoDerivation:
                return None
        if isinstance(t, App):
            kappa = type_check(simple_env, t.arg)
            for iota in _powerset(system.refinements(kappa, self.config), self.config.intersection_width):
                self.tried += 1
                if self.tried > self.config.refinement_cap:
                    raise RefinementSpaceTooLarge(f"Derivation search tried more than {self.config.refinement_cap} intersections")
                iota = sort_rtypes(iota)
                if not system.intersection_ok(iota, ty):
                    continue
                fun = self.derive(env, simple_env, t.fun, IArrow(iota, ty, kappa))
                if fun is None:
                    continue
                args = [self.derive(env, simple_env, t.arg, s) for s in iota]
                if any(a is None for a in args):
                    continue
                kids = [fun] + args
                if system.union_ok(kids):
                    return system.assemble(APP, t, kids)
            return None
        return None


def _transform(
    system: _System,
    env: Iterable[Tuple[str, RType]],
    t: Term,
    ty: RType,
    config: Config,
) -> RNode:
    if t.has_choice or any(isinstance(s, (NT,)) for s in _subterms(t)):
        raise NoDerivation("Transformations apply to choice-free lambda-terms")
    bindings: Dict[str, List[RType]] = {}
    for x, s in env:
        bindings.setdefault(x, []).append(s)
    if not t.free_vars and ty in (FST_O, PLUS, EMPTY) and type_check({}, t) == O:
        d = derive_closed(system, t, config.fuel)
        if d.type == ty:
            return d
        raise NoDerivation(f"Term derives {format_rtype(d.type)}, not {format_rtype(ty)}")
    search = _Search(system, config)
    simple_env = {x: simple_of(v[0]) for x, v in bindings.items()}
    found = search.derive({x: tuple(v) for x, v in bindings.items()}, simple_env, t, ty)
    if found is None:
        raise NoDerivation(f"No {system.name} transformation of {pretty(t)} at {format_rtype(ty)}")
    return found


def _subterms(t: Term) -> Iterator[Term]:
    stack = [t]
    while stack:
        s = stack.pop()
        yield s
        stack.extend(c for _, c in children(s))


def first_derivation(t: Term, ty: RType = FST_O, env: Iterable[Tuple[str, RType]] = (), config: Config = Config()) -> RNode:
    return _transform(FIRST, env, t, ty, config)


def second_derivation(t: Term, ty: RType = PLUS, env: Iterable[Tuple[str, RType]] = (), config: Config = Config()) -> RNode:
    return _transform(SECOND, env, t, ty, config)


def first_transform(env: Iterable[Tuple[str, RType]], t: Term, ty: RType = FST_O, config: Config = Config()) -> Term:
    """
    Image of t under the first transformation at refinement ty.

    Raises:
        NoDerivation: t has no derivation at ty
        NonWordAlphabet: t uses a terminal that is neither e nor unary
    """
    return first_derivation(t, ty, env, config).output


def second_transform(env: Iterable[Tuple[str, RType]], t: Term, ty: RType = PLUS, config: Config = Config()) -> Term:
    """
    Image of t under the second transformation at refinement ty.

    Raises:
        NoDerivation: t has no derivation at ty
    """
    return second_derivation(t, ty, env, config).output


def second_transform_closed(t: Term, config: Config = Config()) -> Term:
    """Image of a closed ground br term at whichever of o+ and o0 it has"""
    return derive_closed(SECOND, t, config.fuel).output


def remove_eps(word: Sequence[str]) -> Word:
    return tuple(a for a in word if a != EPSILON)


# ==========================
# PREPROCESSING
# ==========================

def pre_type(kappa: SimpleType) -> SimpleType:
    """o -> k' with order(k') > 1 becomes (o -> o) -> k'"""
    if not isinstance(kappa, Arrow):
        return O
    if kappa.domain == O and type_order(kappa.codomain) > 1:
        return Arrow(Arrow(O, O), pre_type(kappa.codomain))
    return Arrow(pre_type(kappa.domain), pre_type(kappa.codomain))


def preprocess(t: Term, env: Optional[Mapping[str, SimpleType]] = None, hole_type: Optional[SimpleType] = None) -> Term:
    """
    Rewrite t so that no subterm has a type o -> k' with order(k') > 1.

    Ground binders at such types take a unary function and apply it to e;
    ground arguments at such positions are wrapped as (λx y. x) s.
    Order, language and linearity are unchanged.
    """
    return _preprocess(t, dict(env or {}), hole_type)


def _preprocess(t: Term, env: Dict[str, SimpleType], hole_type: Optional[SimpleType]) -> Term:
    if isinstance(t, Abs):
        body_type = type_check({**env, t.var: t.vtype}, t.body, hole_type=hole_type)
        if t.vtype == O and type_order(body_type) > 1:
            x = fresh_name(t.var)
            body = subst(t.body, t.var, App(Var(x), Const(EPSILON)))
            return Abs(x, Arrow(O, O), _preprocess(body, {**env, x: Arrow(O, O)}, hole_type))
        return Abs(t.var, pre_type(t.vtype), _preprocess(t.body, {**env, t.var: t.vtype}, hole_type))
    if isinstance(t, App):
        fun_type = type_check(env, t.fun, hole_type=hole_type)
        fun = _preprocess(t.fun, env, hole_type)
        arg = _preprocess(t.arg, env, hole_type)
        if fun_type.domain == O and type_order(fun_type.codomain) > 1:
            x, y = fresh_name("x"), fresh_name("y")
            arg = App(lam([(x, O), (y, O)], Var(x)), arg)
        return App(fun, arg)
    kids = children(t)
    if not kids:
        return t
    return with_children(t, [_preprocess(c, env, hole_type) for _, c in kids])


# ==========================
# LOWERING PUMP TRIPLES
# ==========================

@dataclass
class LoweredTriple:
    """G, H, u with word(tree(C[D^(ci+d)[t]])) = leaves(tree(G[H^i[u]])) up to e"""
    G: Term
    H: Term
    u: Term
    c: int
    d: int
    hole_type: SimpleType
    stages: Tuple[Tuple[int, int], ...] = ()

    def iterate(self, i: int) -> Term:
        return fill(self.G, iterate_context(self.H, i, self.u))

    def __iter__(self):
        return iter((self.G, self.H, self.u, self.c, self.d))


def _hole_for(output: Term, name: str) -> Term:
    n = count_occurrences(output, name)
    if n != 1:
        raise InvariantViolation(f"Hole variable occurs {n} times in a lowered context")
    return subst(output, name, HOLE)


def _only(found: Dict[RType, RNode], where: str) -> Tuple[RType, RNode]:
    if not found:
        raise BudgetExhausted(f"The iterated part is erased {where}", stage="lower")
    if len(found) > 1:
        raise InvariantViolation(f"{len(found)} refinements for a linear hole {where}")
    return next(iter(found.items()))


def _lower_once(system: _System, C: Term, D: Term, t: Term, kappa: SimpleType, config: Config) -> LoweredTriple:
    j0 = system.count(kappa, config.refinement_cap)
    z = fresh_name("$z")
    for J in range(1, j0 + 2):
        full = derive_closed(system, fill(C, iterate_context(D, J, t)), config.fuel)
        derivs: Dict[int, RNode] = {}
        seen: Dict[RType, int] = {}
        node, context = full, C
        repeat = None
        for i in range(J, -1, -1):
            found: Dict[RType, RNode] = {}
            _desubstitute(system, node, fill(context, Var(z)), z, found)
            ty, node = _only(found, f"at depth {i}")
            derivs[i] = node
            if ty in seen:
                repeat = (i, seen[ty], ty)
                break
            seen[ty] = i
            context = D
        if repeat is None:
            continue

        i1, i2, ty = repeat
        found = {}
        g = _desubstitute(system, full, fill(C, iterate_context(D, J - i2, Var(z))), z, found)
        if _only(found, "in G")[0] != ty:
            raise InvariantViolation("Refinement at the cut of G changed")
        found = {}
        h = _desubstitute(system, derivs[i2], iterate_context(D, i2 - i1, Var(z)), z, found)
        if _only(found, "in H")[0] != ty:
            raise InvariantViolation("Refinement at the cut of H changed")
        c = i2 - i1
        logger.info(f"✓ {system.name} transformation: refinement {format_rtype(ty)} repeats at {i1} and {i2} (J={J})")
        return LoweredTriple(
            G=_hole_for(g.output, output_var(z, ty)),
            H=_hole_for(h.output, output_var(z, ty)),
            u=derivs[i1].output,
            c=c,
            d=J - c,
            hole_type=system.out_type(ty),
            stages=((c, J - c),),
        )
    raise BudgetExhausted(f"No repeated refinement within {j0 + 1} iterations", stage="lower")


def lower_triple(C: Term, D: Term, t: Term, config: Config = Config()) -> LoweredTriple:
    """
    Lower a linear word-alphabet pump triple by one order.

    Applies the first transformation (cutting at a repeated refinement of
    the iterated part), then the second on the result; the two periods
    compose as c = c1*c2, d = c1*d2 + d1. The correspondence is checked on
    i = 0, 1, 2.

    Raises:
        BudgetExhausted, RefinementSpaceTooLarge, InvariantViolation
    """
    kappa = type_check({}, t)
    pc, pd, pt = preprocess(C, hole_type=kappa), preprocess(D, hole_type=kappa), preprocess(t)
    first = _lower_once(FIRST, pc, pd, pt, pre_type(kappa), config)
    second = _lower_once(SECOND, first.G, first.H, first.u, first.hole_type, config)
    lowered = LoweredTriple(
        G=second.G,
        H=second.H,
        u=second.u,
        c=first.c * second.c,
        d=first.c * second.d + first.d,
        hole_type=second.hole_type,
        stages=first.stages + second.stages,
    )
    if not is_linear_pair(lowered.G, lowered.H, config.probe_depth, fuel=config.fuel):
        raise InvariantViolation("Lowered contexts are not linear")
    for i in range(3):
        want = word_of(tree_of(fill(C, iterate_context(D, lowered.c * i + lowered.d, t)), fuel=config.fuel))
        got = remove_eps(leaves(tree_of(lowered.iterate(i), fuel=config.fuel)))
        if want != got:
            raise InvariantViolation(f"Lowered triple disagrees at i={i}: {want} vs {got}")
    logger.info(f"✓ Lowered to order {type_order(lowered.hole_type)} hole with c={lowered.c}, d={lowered.d}")
    return lowered
