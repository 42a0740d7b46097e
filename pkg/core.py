"""
Core syntax of the toolkit.

Simple types, lambda-terms over a ranked alphabet of terminals with binary
choice and nonterminals, ranked trees, single-hole contexts, substitution,
alpha-equivalence, typing, order and size computations, and the
S-expression exchange format.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from functools import cached_property, lru_cache, reduce as fold
from typing import Any, Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import lark

from errors import (
    ApplicationMismatch,
    ArityMismatch,
    ChoiceNotGround,
    GrammarSyntaxError,
    Stuck,
    TypeMismatch,
    UnboundVariable,
)

logger = logging.getLogger(__name__)


# ==========================
# SIMPLE TYPES
# ==========================

@dataclass(frozen=True)
class Ground:
    def __str__(self):
        return "o"


@dataclass(frozen=True)
class Arrow:
    domain: "SimpleType"
    codomain: "SimpleType"

    def __str__(self):
        left = str(self.domain)
        if isinstance(self.domain, Arrow):
            left = f"({left})"
        return f"{left} -> {self.codomain}"


SimpleType = Union[Ground, Arrow]
O = Ground()


def arrow(*types: SimpleType) -> SimpleType:
    """Right-nested arrow: arrow(k1, k2, k3) = k1 -> (k2 -> k3)"""
    if not types:
        raise ValueError("arrow() needs at least one type")
    return fold(lambda acc, k: Arrow(k, acc), reversed(types[:-1]), types[-1])


def ground_function(arity: int) -> SimpleType:
    """The type o^arity -> o"""
    return arrow(*([O] * arity), O)


@lru_cache(maxsize=None)
def type_order(kappa: SimpleType) -> int:
    if isinstance(kappa, Ground):
        return 0
    return max(type_order(kappa.domain) + 1, type_order(kappa.codomain))


def split_arrow(kappa: SimpleType) -> Tuple[List[SimpleType], SimpleType]:
    args = []
    while isinstance(kappa, Arrow):
        args.append(kappa.domain)
        kappa = kappa.codomain
    return args, kappa


# ==========================
# RANKED ALPHABETS
# ==========================

@dataclass(frozen=True)
class RankedAlphabet:
    arities: Mapping[str, int]

    def __contains__(self, name: str) -> bool:
        return name in self.arities

    def __iter__(self):
        return iter(sorted(self.arities))

    def arity(self, name: str) -> int:
        try:
            return self.arities[name]
        except KeyError:
            raise ArityMismatch(f"Unknown terminal '{name}'")

    def is_word(self) -> bool:
        """Contains nullary e and every other terminal is unary"""
        if self.arities.get("e") != 0:
            return False
        return all(k == 1 for a, k in self.arities.items() if a != "e")

    def is_br(self) -> bool:
        """Contains binary br, nullary e, every other terminal nullary"""
        if self.arities.get("br") != 2 or self.arities.get("e") != 0:
            return False
        return all(k == 0 for a, k in self.arities.items() if a != "br")

    def union(self, other: "RankedAlphabet") -> "RankedAlphabet":
        merged = dict(self.arities)
        for name, k in other.arities.items():
            if merged.get(name, k) != k:
                raise ArityMismatch(f"Terminal '{name}' used with arities {merged[name]} and {k}")
            merged[name] = k
        return RankedAlphabet(merged)


# ==========================
# TERMS
# ==========================

class _TermMixin:
    """Derived, cached attributes shared by all term constructors"""

    @cached_property
    def free_vars(self) -> frozenset:
        return _bottom_up(self, "free_vars", _free_vars)

    @cached_property
    def size(self) -> int:
        return _bottom_up(self, "size", _size)

    @cached_property
    def is_tree(self) -> bool:
        return _bottom_up(self, "is_tree", lambda t: isinstance(t, Const) and all(a.is_tree for a in t.args))

    @cached_property
    def has_choice(self) -> bool:
        return _bottom_up(self, "has_choice", lambda t: isinstance(t, Choice) or any(c.has_choice for _, c in children(t)))

    @cached_property
    def holes(self) -> int:
        return _bottom_up(self, "holes", lambda t: 1 if isinstance(t, Hole) else sum(c.holes for _, c in children(t)))

    def __str__(self):
        return pretty(self)


@dataclass(frozen=True)
class Var(_TermMixin):
    name: str


@dataclass(frozen=True)
class Const(_TermMixin):
    name: str
    args: Tuple["Term", ...] = ()


@dataclass(frozen=True)
class App(_TermMixin):
    fun: "Term"
    arg: "Term"


@dataclass(frozen=True)
class Abs(_TermMixin):
    var: str
    vtype: SimpleType
    body: "Term"


@dataclass(frozen=True)
class Choice(_TermMixin):
    left: "Term"
    right: "Term"


@dataclass(frozen=True)
class NT(_TermMixin):
    name: str
    # Provenance marker used while simulating reductions; ignored by equality
    tag: Optional[Tuple[int, ...]] = field(default=None, compare=False)


@dataclass(frozen=True)
class Hole(_TermMixin):
    pass


Term = Union[Var, Const, App, Abs, Choice, NT, Hole]
HOLE = Hole()


def _bottom_up(t, name: str, compute: Callable[[Any], Any], kids: Callable[[Any], Sequence] = None) -> Any:
    """
    Fill the per-node cache of a derived attribute, deepest subterms first.

    compute(node) may read the attribute of the node's children; they are
    always cached by then, so deep terms never recurse.
    """
    stack = [(t, False)]
    while stack:
        node, ready = stack.pop()
        if name in node.__dict__:
            continue
        if ready:
            node.__dict__[name] = compute(node)
            continue
        stack.append((node, True))
        below = kids(node) if kids else [c for _, c in children(node)]
        stack.extend((c, False) for c in below if name not in c.__dict__)
    return t.__dict__[name]


def _free_vars(t: Term) -> frozenset:
    if isinstance(t, Var):
        return frozenset([t.name])
    if isinstance(t, Abs):
        return t.body.free_vars - {t.var}
    result = frozenset()
    for _, c in children(t):
        result |= c.free_vars
    return result


def _size(t: Term) -> int:
    if isinstance(t, Hole):
        return 0
    if isinstance(t, (Var, NT)):
        return 1
    if isinstance(t, Const):
        return 1 + sum(a.size for a in t.args)
    return 1 + sum(c.size for _, c in children(t))


def size(t: Term) -> int:
    """|t| for terms and contexts (the hole counts 0)"""
    return t.size


def children(t: Term) -> List[Tuple[int, Term]]:
    """Immediate subterms with their position index"""
    if isinstance(t, App):
        return [(0, t.fun), (1, t.arg)]
    if isinstance(t, Abs):
        return [(0, t.body)]
    if isinstance(t, Choice):
        return [(0, t.left), (1, t.right)]
    if isinstance(t, Const):
        return list(enumerate(t.args))
    return []


def with_children(t: Term, new: Sequence[Term]) -> Term:
    if isinstance(t, App):
        return App(new[0], new[1])
    if isinstance(t, Abs):
        return Abs(t.var, t.vtype, new[0])
    if isinstance(t, Choice):
        return Choice(new[0], new[1])
    if isinstance(t, Const):
        return Const(t.name, tuple(new))
    return t


def app(head: Term, *args: Term) -> Term:
    return fold(App, args, head)


def lam(binders: Sequence[Tuple[str, SimpleType]], body: Term) -> Term:
    for name, kappa in reversed(binders):
        body = Abs(name, kappa, body)
    return body


def spine(t: Term) -> Tuple[Term, List[Term]]:
    """Decompose t = h t1 ... tk into (h, [t1, ..., tk])"""
    args = []
    while isinstance(t, App):
        args.append(t.arg)
        t = t.fun
    args.reverse()
    return t, args


def choice_of(alternatives: Sequence[Term]) -> Term:
    """Right-nested binary choice over a non-empty list"""
    if not alternatives:
        raise ValueError("choice_of() needs at least one alternative")
    return fold(lambda acc, t: Choice(t, acc), reversed(alternatives[:-1]), alternatives[-1])


# ==========================
# POSITIONS
# ==========================

Path = Tuple[int, ...]


def subterm_at(t: Term, path: Path) -> Term:
    for i in path:
        t = dict(children(t))[i]
    return t


def replace_at(t: Term, path: Path, new: Term) -> Term:
    if not path:
        return new
    kids = [c for _, c in children(t)]
    kids[path[0]] = replace_at(kids[path[0]], path[1:], new)
    return with_children(t, kids)


def binders_along(t: Term, path: Path) -> List[Tuple[str, SimpleType]]:
    """Lambda binders enclosing the position path, outermost first"""
    found = []
    for i in path:
        if isinstance(t, Abs):
            found.append((t.var, t.vtype))
        t = dict(children(t))[i]
    return found


# ==========================
# NAMES AND SUBSTITUTION
# ==========================

_fresh_counter = itertools.count(1)


def fresh_name(base: str) -> str:
    return f"{base.split('~')[0]}~{next(_fresh_counter)}"


def rename_names(t: Term, mapping: Mapping[str, str]) -> Term:
    """Rename every occurrence (binding and bound) of the names in mapping"""
    if not mapping:
        return t
    if isinstance(t, Var):
        return Var(mapping.get(t.name, t.name))
    if isinstance(t, Abs):
        return Abs(mapping.get(t.var, t.var), t.vtype, rename_names(t.body, mapping))
    kids = children(t)
    if not kids:
        return t
    return with_children(t, [rename_names(c, mapping) for _, c in kids])


def _naive_subst(t: Term, x: str, s: Term) -> Term:
    if x not in t.free_vars:
        return t
    if isinstance(t, Var):
        return s
    if isinstance(t, Abs):
        return Abs(t.var, t.vtype, _naive_subst(t.body, x, s))
    return with_children(t, [_naive_subst(c, x, s) for _, c in children(t)])


def rename_binders(t: Term, avoid: frozenset) -> Term:
    """Rename the binders of t whose names occur in avoid"""
    if isinstance(t, Abs):
        body = rename_binders(t.body, avoid)
        if t.var in avoid:
            new = fresh_name(t.var)
            return Abs(new, t.vtype, _naive_subst(body, t.var, Var(new)))
        return Abs(t.var, t.vtype, body)
    kids = children(t)
    if not kids:
        return t
    return with_children(t, [rename_binders(c, avoid) for _, c in kids])


def subst(t: Term, x: str, s: Term) -> Term:
    """Capture-avoiding [s/x]t"""
    if x not in t.free_vars:
        return t
    return _naive_subst(rename_binders(t, s.free_vars), x, s)


@dataclass(frozen=True)
class BetaParts:
    """A beta-redex split so that naive substitution yields the reduct"""
    var: str
    vtype: SimpleType
    body: Term
    arg: Term
    reduct: Term


def beta_parts(redex: Term) -> BetaParts:
    if not (isinstance(redex, App) and isinstance(redex.fun, Abs)):
        raise TypeMismatch(f"Not a beta-redex: {pretty(redex)}")
    fun, arg = redex.fun, redex.arg
    var, body = fun.var, fun.body
    if var in arg.free_vars:
        new = fresh_name(var)
        body = _naive_subst(body, var, Var(new))
        var = new
    body = rename_binders(body, arg.free_vars)
    return BetaParts(var, fun.vtype, body, arg, _naive_subst(body, var, arg))


def fill(context: Term, t: Term) -> Term:
    """Capturing replacement of the hole of context by t"""
    if isinstance(context, Hole):
        return t
    if not context.holes:
        return context
    return with_children(context, [fill(c, t) for _, c in children(context)])


def iterate_context(d: Term, k: int, t: Term) -> Term:
    """D^k[t]"""
    for _ in range(k):
        t = fill(d, t)
    return t


def hole_path(context: Term) -> Path:
    if isinstance(context, Hole):
        return ()
    for i, c in children(context):
        if c.holes:
            return (i,) + hole_path(c)
    raise TypeMismatch("Term has no hole")


# ==========================
# ALPHA-EQUIVALENCE
# ==========================

def canonical(t: Term) -> Term:
    """Rename bound variables by binding depth; alpha-equivalent terms coincide"""
    return _canonical(t, {}, 0)


def _canonical(t: Term, mapping: Dict[str, str], depth: int) -> Term:
    if isinstance(t, Var):
        return Var(mapping.get(t.name, t.name))
    if isinstance(t, Abs):
        name = f"%{depth}"
        return Abs(name, t.vtype, _canonical(t.body, {**mapping, t.var: name}, depth + 1))
    kids = children(t)
    if not kids:
        return t
    return with_children(t, [_canonical(c, mapping, depth) for _, c in kids])


def alpha_equal(s: Term, t: Term) -> bool:
    return s == t or canonical(s) == canonical(t)


def alpha_rename_map(src: Term, dst: Term) -> Optional[Dict[str, str]]:
    """Binder renaming turning src into dst, or None when they are not alpha-equivalent"""
    mapping: Dict[str, str] = {}

    def walk(a: Term, b: Term, scope: Dict[str, str]) -> bool:
        if type(a) is not type(b):
            return False
        if isinstance(a, Var):
            return scope.get(a.name, a.name) == b.name
        if isinstance(a, Abs):
            if a.vtype != b.vtype:
                return False
            if a.var != b.var:
                if mapping.setdefault(a.var, b.var) != b.var:
                    return False
            return walk(a.body, b.body, {**scope, a.var: b.var})
        if isinstance(a, (Const, NT)) and a.name != b.name:
            return False
        ka, kb = children(a), children(b)
        return len(ka) == len(kb) and all(walk(x, y, scope) for (_, x), (_, y) in zip(ka, kb))

    return mapping if walk(src, dst, {}) else None


# ==========================
# TYPING
# ==========================

TypeEnv = Mapping[str, SimpleType]


def type_check(
    env: TypeEnv,
    t: Term,
    nt_types: Optional[Mapping[str, SimpleType]] = None,
    alphabet: Optional[RankedAlphabet] = None,
    hole_type: Optional[SimpleType] = None,
) -> SimpleType:
    """
    Compute the unique simple type of t.

    Raises:
        UnboundVariable, ArityMismatch, ChoiceNotGround, ApplicationMismatch,
        TypeMismatch (hole without a declared type)
    """
    if isinstance(t, Var):
        if t.name not in env:
            raise UnboundVariable(f"Unbound variable '{t.name}'")
        return env[t.name]
    if isinstance(t, Const):
        if alphabet is not None and alphabet.arity(t.name) != len(t.args):
            raise ArityMismatch(
                f"Terminal '{t.name}' has arity {alphabet.arity(t.name)} but is applied to {len(t.args)} arguments"
            )
        for a in t.args:
            if type_check(env, a, nt_types, alphabet, hole_type) != O:
                raise ApplicationMismatch(f"Terminal '{t.name}' applied to a non-ground argument")
        return O
    if isinstance(t, App):
        fun = type_check(env, t.fun, nt_types, alphabet, hole_type)
        arg = type_check(env, t.arg, nt_types, alphabet, hole_type)
        if not isinstance(fun, Arrow) or fun.domain != arg:
            raise ApplicationMismatch(f"Cannot apply {fun} to {arg} in {pretty(t)}")
        return fun.codomain
    if isinstance(t, Abs):
        return Arrow(t.vtype, type_check({**env, t.var: t.vtype}, t.body, nt_types, alphabet, hole_type))
    if isinstance(t, Choice):
        left = type_check(env, t.left, nt_types, alphabet, hole_type)
        right = type_check(env, t.right, nt_types, alphabet, hole_type)
        if left != O or right != O:
            raise ChoiceNotGround(f"Choice between {left} and {right}")
        return O
    if isinstance(t, NT):
        if nt_types is None or t.name not in nt_types:
            raise UnboundVariable(f"Unknown nonterminal '{t.name}'")
        return nt_types[t.name]
    if hole_type is None:
        raise TypeMismatch("Hole without a declared type")
    return hole_type


def _subterm_types(env, t, nt_types, alphabet, hole_type) -> Iterator[SimpleType]:
    yield type_check(env, t, nt_types, alphabet, hole_type)
    if isinstance(t, Abs):
        yield from _subterm_types({**env, t.var: t.vtype}, t.body, nt_types, alphabet, hole_type)
        return
    for _, c in children(t):
        yield from _subterm_types(env, c, nt_types, alphabet, hole_type)


def order_of_term(
    env: TypeEnv,
    t: Term,
    nt_types: Optional[Mapping[str, SimpleType]] = None,
    alphabet: Optional[RankedAlphabet] = None,
    hole_type: Optional[SimpleType] = None,
) -> Tuple[int, int]:
    """(internal order, external order) of t"""
    external = type_order(type_check(env, t, nt_types, alphabet, hole_type))
    internal = max(type_order(k) for k in _subterm_types(env, t, nt_types, alphabet, hole_type))
    return internal, external


def eorder(env: TypeEnv, t: Term, nt_types: Optional[Mapping[str, SimpleType]] = None) -> int:
    return type_order(type_check(env, t, nt_types))


# ==========================
# TREES
# ==========================

@dataclass(frozen=True)
class Tree:
    label: str
    children: Tuple["Tree", ...] = ()

    # Trees built by evaluation share subtrees heavily; hashing is cached per node
    @cached_property
    def _hash(self) -> int:
        return _bottom_up(self, "_hash", lambda n: hash((n.label, tuple(c._hash for c in n.children))), _tree_children)

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        if not isinstance(other, Tree):
            return NotImplemented
        pairs = [(self, other)]
        while pairs:
            a, b = pairs.pop()
            if a is b:
                continue
            if a._hash != b._hash or a.label != b.label or len(a.children) != len(b.children):
                return False
            pairs.extend(zip(a.children, b.children))
        return True

    @cached_property
    def size(self) -> int:
        return _bottom_up(self, "size", lambda n: 1 + sum(c.size for c in n.children), _tree_children)

    @cached_property
    def depth(self) -> int:
        return _bottom_up(self, "depth", lambda n: 1 + max((c.depth for c in n.children), default=0), _tree_children)

    def __str__(self):
        return format_tree(self)

def _tree_children(node: "Tree") -> Tuple["Tree", ...]:
    return node.children


def tree_to_term(tree: Tree) -> Term:
    return Const(tree.label, tuple(tree_to_term(c) for c in tree.children))


def term_to_tree(t: Term) -> Tree:
    if not t.is_tree:
        raise Stuck(f"Not a tree: {pretty(t)}")
    return _to_tree(t, {})


def _to_tree(t: Const, shared: Dict[int, Tuple[Const, Tree]]) -> Tree:
    hit = shared.get(id(t))
    if hit is not None:
        return hit[1]
    tree = Tree(t.name, tuple(_to_tree(a, shared) for a in t.args))
    shared[id(t)] = (t, tree)
    return tree


def tree_alphabet(tree: Tree) -> RankedAlphabet:
    found: Dict[str, int] = {}
    stack = [tree]
    while stack:
        node = stack.pop()
        found[node.label] = len(node.children)
        stack.extend(node.children)
    return RankedAlphabet(found)


def word_tree(word: Sequence[str]) -> Tree:
    """a1(a2(...(an e)...))"""
    tree = Tree("e")
    for a in reversed(word):
        tree = Tree(a, (tree,))
    return tree


# ==========================
# PRINTING
# ==========================

def _atomic(t: Term) -> str:
    text = pretty(t)
    if isinstance(t, (Var, NT, Hole)) or (isinstance(t, Const) and not t.args):
        return text
    return f"({text})"


def pretty(t: Term) -> str:
    """Lambda notation: \\x y. a x (f y) + e"""
    if isinstance(t, (Var, NT)):
        return t.name
    if isinstance(t, Hole):
        return "[]"
    if isinstance(t, Const):
        return " ".join([t.name] + [_atomic(a) for a in t.args])
    if isinstance(t, Abs):
        names = []
        while isinstance(t, Abs):
            names.append(t.var)
            t = t.body
        return f"\\{' '.join(names)}. {pretty(t)}"
    if isinstance(t, Choice):
        left = pretty(t.left)
        if isinstance(t.left, (Choice, Abs)):
            left = f"({left})"
        return f"{left} + {pretty(t.right)}"
    head, args = spine(t)
    return " ".join([_atomic(head)] + [_atomic(a) for a in args])


def format_type(kappa: SimpleType) -> str:
    if isinstance(kappa, Ground):
        return "o"
    return f"(-> {format_type(kappa.domain)} {format_type(kappa.codomain)})"


def format_term(t: Term) -> str:
    """S-expression form of a term or context"""
    if isinstance(t, (Var, NT)):
        return t.name
    if isinstance(t, Hole):
        return "[]"
    if isinstance(t, Const):
        if not t.args:
            return t.name
        return f"({t.name} {' '.join(format_term(a) for a in t.args)})"
    if isinstance(t, App):
        return f"(app {format_term(t.fun)} {format_term(t.arg)})"
    if isinstance(t, Abs):
        return f"(lam ({t.var} {format_type(t.vtype)}) {format_term(t.body)})"
    return f"(+ {format_term(t.left)} {format_term(t.right)})"


def format_tree(tree: Tree) -> str:
    if not tree.children:
        return tree.label
    return f"({tree.label} {' '.join(format_tree(c) for c in tree.children)})"


# ==========================
# S-EXPRESSION READER
# ==========================

_SEXPR_GRAMMAR = r"""
    ?start: sexpr
    ?sexpr: atom | list
    list: "(" sexpr* ")"
    atom: ATOM
    ATOM: /[^\s()]+/
    COMMENT: /;[^\n]*/
    %import common.WS
    %ignore WS
    %ignore COMMENT
"""


class _SexprTransformer(lark.Transformer):
    def list(self, items):
        return list(items)

    def atom(self, items):
        return str(items[0])


_sexpr_parser = lark.Lark(_SEXPR_GRAMMAR, parser="lalr")


def read_sexpr(text: str):
    """Parse text into nested Python lists of atom strings"""
    try:
        return _SexprTransformer().transform(_sexpr_parser.parse(text))
    except lark.exceptions.LarkError as e:
        raise GrammarSyntaxError(f"Malformed S-expression: {e}")


def sexpr_to_type(x) -> SimpleType:
    if x == "o":
        return O
    if isinstance(x, list) and len(x) >= 3 and x[0] == "->":
        return arrow(*[sexpr_to_type(k) for k in x[1:]])
    raise GrammarSyntaxError(f"Malformed type: {x}")


def parse_type(text: str) -> SimpleType:
    return sexpr_to_type(read_sexpr(text))


def sexpr_to_term(
    x,
    bound: frozenset = frozenset(),
    alphabet: Optional[RankedAlphabet] = None,
    nonterminals: frozenset = frozenset(),
) -> Term:
    """
    Convert an S-expression into a term.

    Atoms resolve to bound variables first, then declared nonterminals (or
    capitalised names when none are declared), then terminals.
    """
    def resolve(atom: str) -> Term:
        if atom == "[]":
            return HOLE
        if atom in bound:
            return Var(atom)
        if atom in nonterminals or (not nonterminals and atom[:1].isupper()):
            return NT(atom)
        if alphabet is not None and atom not in alphabet:
            return Var(atom)
        return Const(atom)

    if isinstance(x, str):
        return resolve(x)
    if not x:
        raise GrammarSyntaxError("Empty list in term")
    head = x[0]
    rec = lambda y, b=bound: sexpr_to_term(y, b, alphabet, nonterminals)
    if head == "lam":
        if len(x) < 3:
            raise GrammarSyntaxError(f"Malformed lambda: {x}")
        binders = []
        scope = bound
        for b in x[1:-1]:
            if not (isinstance(b, list) and len(b) == 2 and isinstance(b[0], str)):
                raise GrammarSyntaxError(f"Malformed binder: {b}")
            binders.append((b[0], sexpr_to_type(b[1])))
            scope = scope | {b[0]}
        return lam(binders, rec(x[-1], scope))
    if head == "app":
        if len(x) < 3:
            raise GrammarSyntaxError(f"Malformed application: {x}")
        return app(rec(x[1]), *[rec(a) for a in x[2:]])
    if head == "+":
        if len(x) < 3:
            raise GrammarSyntaxError(f"Malformed choice: {x}")
        return choice_of([rec(a) for a in x[1:]])
    if isinstance(head, str):
        target = resolve(head)
        if isinstance(target, Const):
            return Const(head, tuple(rec(a) for a in x[1:]))
        return app(target, *[rec(a) for a in x[1:]])
    return app(rec(head), *[rec(a) for a in x[1:]])


def parse_term(
    text: str,
    alphabet: Optional[RankedAlphabet] = None,
    bound: Sequence[str] = (),
    nonterminals: Sequence[str] = (),
) -> Term:
    return sexpr_to_term(read_sexpr(text), frozenset(bound), alphabet, frozenset(nonterminals))


def sexpr_to_tree(x) -> Tree:
    if isinstance(x, str):
        return Tree(x)
    if not x or not isinstance(x[0], str):
        raise GrammarSyntaxError(f"Malformed tree: {x}")
    return Tree(x[0], tuple(sexpr_to_tree(c) for c in x[1:]))


def parse_tree(text: str) -> Tree:
    return sexpr_to_tree(read_sexpr(text))
