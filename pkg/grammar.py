"""
Higher-order grammars: parsing and validation of the source format,
equation form, language enumeration, and word / frontier views of trees.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Mapping, Optional, Sequence, Set, Tuple

from lark import Lark, Transformer, v_args
from lark.exceptions import LarkError, UnexpectedInput

from config import Config
from core import (
    O,
    Abs,
    App,
    Arrow,
    Choice,
    Const,
    NT,
    RankedAlphabet,
    SimpleType,
    Term,
    Tree,
    Var,
    app,
    choice_of,
    fresh_name,
    lam,
    spine,
    split_arrow,
    subst,
    type_check,
    type_order,
)
from errors import (
    GrammarSyntaxError,
    GrammarTypeError,
    MissingRules,
    NotBrAlphabet,
    NotWordShaped,
    ToolkitError,
)
from reduce import Enumeration, enumerate_language

logger = logging.getLogger(__name__)

Word = Tuple[str, ...]

_parser = Lark.open("hog.lark", rel_to=__file__, parser="lalr", propagate_positions=True)


# ==========================
# GRAMMAR DATA
# ==========================

@dataclass(frozen=True)
class Rule:
    lhs: str
    params: Tuple[Tuple[str, SimpleType], ...]
    body: Term
    location: Optional[str] = None


@dataclass(frozen=True)
class Grammar:
    alphabet: RankedAlphabet
    nt_types: Mapping[str, SimpleType]
    rules: Tuple[Rule, ...]
    start: str
    name: str = "grammar"

    @cached_property
    def order(self) -> int:
        return max((type_order(k) for k in self.nt_types.values()), default=0)

    @cached_property
    def equations(self) -> Dict[str, Term]:
        """Equation form of every nonterminal that has rules"""
        return grammar_as_equations(self, strict=False)

    def rules_for(self, nonterminal: str) -> List[Rule]:
        return [r for r in self.rules if r.lhs == nonterminal]

    def is_word(self) -> bool:
        return self.alphabet.is_word()

    def summary(self) -> str:
        return f"order {self.order}, {len(self.rules)} rules"

    def __repr__(self):
        return f"<Grammar(name='{self.name}', {self.summary()})>"


# ==========================
# PARSING
# ==========================

class _SourceTransformer(Transformer):
    def start(self, items):
        return list(items)

    @v_args(meta=True)
    def terminal_decl(self, meta, items):
        return ("terminal", str(items[0]), int(items[1]), meta.line)

    @v_args(meta=True)
    def nonterminal_decl(self, meta, items):
        return ("nonterminal", str(items[0]), items[1], meta.line)

    @v_args(meta=True)
    def start_decl(self, meta, items):
        return ("start", str(items[0]), meta.line)

    @v_args(meta=True)
    def rule(self, meta, items):
        return ("rule", str(items[0]), [str(p) for p in items[1:-1]], items[-1], meta.line)

    def arrow_type(self, items):
        return Arrow(items[0], items[1])

    def ground_type(self, items):
        return O

    def choice(self, items):
        return ("choice", items[0], items[1])

    def lam(self, items):
        return ("lam", list(items[:-1]), items[-1])

    def plain_binder(self, items):
        return (str(items[0]), None)

    def typed_binder(self, items):
        return (str(items[0]), items[1])

    def application(self, items):
        return ("app", items[0], items[1])

    def name(self, items):
        return ("name", str(items[0]))


class _Elaborator:
    """Bidirectional conversion of parsed expressions into typed terms"""

    def __init__(self, alphabet: RankedAlphabet, nt_types: Mapping[str, SimpleType], location: str):
        self.alphabet = alphabet
        self.nt_types = nt_types
        self.location = location

    def fail(self, message: str):
        raise GrammarTypeError(message, self.location)

    def check(self, raw, env: Dict[str, SimpleType], expected: SimpleType) -> Term:
        if raw[0] == "lam":
            binders, body = raw[1], raw[2]
            scoped = dict(env)
            typed = []
            for var, annotation in binders:
                if not isinstance(expected, Arrow):
                    self.fail(f"Lambda binder '{var}' where type {expected} is expected")
                if annotation is not None and annotation != expected.domain:
                    self.fail(f"Binder '{var}' annotated {annotation} but {expected.domain} is expected")
                typed.append((var, expected.domain))
                scoped[var] = expected.domain
                expected = expected.codomain
            return lam(typed, self.check(body, scoped, expected))
        if raw[0] == "choice":
            if expected != O:
                self.fail(f"Choice used at type {expected}")
            return Choice(self.check(raw[1], env, O), self.check(raw[2], env, O))
        term, actual = self.synth(raw, env)
        if actual != expected:
            self.fail(f"Expected type {expected} but found {actual}")
        return term

    def synth(self, raw, env: Dict[str, SimpleType]) -> Tuple[Term, SimpleType]:
        kind = raw[0]
        if kind == "choice":
            return self.check(raw, env, O), O
        if kind == "lam":
            binders, body = raw[1], raw[2]
            missing = [v for v, k in binders if k is None]
            if missing:
                self.fail(f"Cannot infer the type of binder '{missing[0]}'; annotate it as ({missing[0]} : type)")
            scoped = {**env, **{v: k for v, k in binders}}
            term, result = self.synth(body, scoped)
            kinds = [k for _, k in binders]
            return lam(list(binders), term), _arrow_from(kinds, result)

        # applications and names
        head, args = _raw_spine(raw)
        if head[0] == "name" and head[1] not in env and head[1] not in self.nt_types:
            return self.terminal(head[1], args, env)
        if head[0] == "lam":
            return self.applied_lambda(head, args, env)
        fun, kappa = self.atom(head, env)
        for a in args:
            if not isinstance(kappa, Arrow):
                self.fail(f"Too many arguments: cannot apply a term of type {kappa}")
            fun = App(fun, self.check(a, env, kappa.domain))
            kappa = kappa.codomain
        return fun, kappa

    def atom(self, raw, env) -> Tuple[Term, SimpleType]:
        if raw[0] != "name":
            return self.synth(raw, env)
        name = raw[1]
        if name in env:
            return Var(name), env[name]
        if name in self.nt_types:
            return NT(name), self.nt_types[name]
        return self.terminal(name, [], env)

    def terminal(self, name: str, args, env) -> Tuple[Term, SimpleType]:
        if name not in self.alphabet:
            self.fail(f"Unknown name '{name}'")
        arity = self.alphabet.arity(name)
        if len(args) > arity:
            self.fail(f"Terminal '{name}' has arity {arity} but is applied to {len(args)} arguments")
        given = [self.check(a, env, O) for a in args]
        extra = [fresh_name("y") for _ in range(arity - len(given))]
        body = Const(name, tuple(given + [Var(y) for y in extra]))
        return lam([(y, O) for y in extra], body), _arrow_from([O] * len(extra), O)

    def applied_lambda(self, head, args, env) -> Tuple[Term, SimpleType]:
        binders, body = head[1], head[2]
        synthesized = [self.synth(a, env) for a in args]
        typed = []
        for i, (var, annotation) in enumerate(binders):
            if i < len(synthesized):
                kappa = synthesized[i][1]
                if annotation is not None and annotation != kappa:
                    self.fail(f"Binder '{var}' annotated {annotation} but applied to {kappa}")
            elif annotation is None:
                self.fail(f"Cannot infer the type of binder '{var}'; annotate it as ({var} : type)")
            else:
                kappa = annotation
            typed.append((var, kappa))
        fun, kappa = self.synth(("lam", typed, body), env)
        for (arg, arg_type) in synthesized:
            if not isinstance(kappa, Arrow) or kappa.domain != arg_type:
                self.fail(f"Cannot apply a term of type {kappa} to {arg_type}")
            fun = App(fun, arg)
            kappa = kappa.codomain
        return fun, kappa


def _raw_spine(raw):
    args = []
    while raw[0] == "app":
        args.append(raw[2])
        raw = raw[1]
    args.reverse()
    return raw, args


def _arrow_from(domains: Sequence[SimpleType], result: SimpleType) -> SimpleType:
    for kappa in reversed(domains):
        result = Arrow(kappa, result)
    return result


def parse_grammar(text: str, name: str = "grammar") -> Grammar:
    """
    Parse and validate grammar source text.

    Args:
        text: Source in the line-oriented grammar format
        name: Label used in reports and the run ledger

    Returns:
        Validated Grammar

    Raises:
        GrammarSyntaxError: Malformed source or missing start declaration
        GrammarTypeError: Ill-typed rule, undeclared name, start not of type o
    """
    try:
        statements = _SourceTransformer().transform(_parser.parse(text))
    except UnexpectedInput as e:
        raise GrammarSyntaxError(f"line {e.line}, column {e.column}: unexpected input")
    except LarkError as e:
        raise GrammarSyntaxError(str(e))
    return build_grammar(statements, name)


def build_grammar(statements, name: str = "grammar") -> Grammar:
    arities: Dict[str, int] = {}
    nt_types: Dict[str, SimpleType] = {}
    start = None
    raw_rules = []
    for stmt in statements:
        kind, line = stmt[0], stmt[-1]
        where = f"line {line}"
        if kind == "terminal":
            if stmt[1] in arities or stmt[1] in nt_types:
                raise GrammarTypeError(f"Duplicate declaration of '{stmt[1]}'", where)
            arities[stmt[1]] = stmt[2]
        elif kind == "nonterminal":
            if stmt[1] in nt_types or stmt[1] in arities:
                raise GrammarTypeError(f"Duplicate declaration of '{stmt[1]}'", where)
            nt_types[stmt[1]] = stmt[2]
        elif kind == "start":
            if start is not None:
                raise GrammarSyntaxError(f"{where}: start symbol declared twice")
            start = (stmt[1], where)
        else:
            raw_rules.append(stmt)

    if start is None:
        raise GrammarSyntaxError("Missing 'start' declaration")
    start_name, where = start
    if start_name not in nt_types:
        raise GrammarTypeError(f"Start symbol '{start_name}' is not a declared nonterminal", where)
    if nt_types[start_name] != O:
        raise GrammarTypeError(f"Start symbol '{start_name}' has type {nt_types[start_name]}, expected o", where)

    alphabet = RankedAlphabet(arities)
    rules = []
    for _, lhs, params, body, line in raw_rules:
        where = f"line {line}"
        if lhs not in nt_types:
            raise GrammarTypeError(f"Rule for undeclared nonterminal '{lhs}'", where)
        if len(set(params)) != len(params):
            raise GrammarTypeError(f"Repeated parameter in rule for '{lhs}'", where)
        domains, _ = split_arrow(nt_types[lhs])
        if len(params) > len(domains):
            raise GrammarTypeError(f"Nonterminal '{lhs}' takes {len(domains)} arguments, rule has {len(params)}", where)
        kappa = nt_types[lhs]
        env: Dict[str, SimpleType] = {}
        typed_params = []
        for p in params:
            env[p] = kappa.domain
            typed_params.append((p, kappa.domain))
            kappa = kappa.codomain
        term = _Elaborator(alphabet, nt_types, where).check(body, env, kappa)
        rules.append(Rule(lhs, tuple(typed_params), term, where))

    grammar = Grammar(alphabet, dict(nt_types), tuple(rules), start_name, name)
    logger.info(f"Parsed grammar '{name}': {grammar.summary()}")
    return grammar


def validate_grammar(grammar: Grammar) -> None:
    """Re-check every rule body of a programmatically built grammar"""
    for rule in grammar.rules:
        kappa = grammar.nt_types.get(rule.lhs)
        if kappa is None:
            raise GrammarTypeError(f"Rule for undeclared nonterminal '{rule.lhs}'", rule.location)
        env = {}
        for p, k in rule.params:
            if not isinstance(kappa, Arrow) or kappa.domain != k:
                raise GrammarTypeError(f"Parameter '{p}' does not match the type of '{rule.lhs}'", rule.location)
            env[p] = k
            kappa = kappa.codomain
        try:
            actual = type_check(env, rule.body, grammar.nt_types, grammar.alphabet)
        except ToolkitError as e:
            raise GrammarTypeError(str(e), rule.location)
        if actual != kappa:
            raise GrammarTypeError(f"Rule body has type {actual}, expected {kappa}", rule.location)


# ==========================
# EQUATIONS AND LANGUAGES
# ==========================

def _full_arity(rule: Rule, kappa: SimpleType) -> Tuple[List[Tuple[str, SimpleType]], Term]:
    """Eta-expand a rule so it binds every argument of its nonterminal"""
    domains, _ = split_arrow(kappa)
    params = list(rule.params)
    body = rule.body
    for k in domains[len(params):]:
        y = fresh_name("y")
        params.append((y, k))
        body = App(body, Var(y))
    return params, body


def grammar_as_equations(grammar: Grammar, strict: bool = True) -> Dict[str, Term]:
    """
    One equation A = \\x1..xk.(t1 + ... + tp) per nonterminal.

    Raises:
        MissingRules: A nonterminal has no rules (only when strict)
    """
    equations: Dict[str, Term] = {}
    for nonterminal, kappa in grammar.nt_types.items():
        rules = grammar.rules_for(nonterminal)
        if not rules:
            if strict:
                raise MissingRules(f"Nonterminal '{nonterminal}' has no rules")
            continue
        params, first = _full_arity(rules[0], kappa)
        bodies = [first]
        for rule in rules[1:]:
            other_params, body = _full_arity(rule, kappa)
            # Rename through fresh names so swapped parameter lists cannot collide
            staged = [(old, fresh_name(old)) for old, _ in other_params]
            for old, tmp in staged:
                body = subst(body, old, Var(tmp))
            for (_, tmp), (new, _) in zip(staged, params):
                body = subst(body, tmp, Var(new))
            bodies.append(body)
        equations[nonterminal] = lam(params, choice_of(bodies))
    return equations


def start_term(grammar: Grammar) -> Term:
    return NT(grammar.start)


def language(
    grammar: Grammar,
    max_tree_size: int = Config.max_tree_size,
    max_steps: int = Config.enum_steps,
) -> Enumeration:
    """Trees of L(G) within the budgets"""
    return enumerate_language(start_term(grammar), max_tree_size, max_steps, grammar.equations)


# ==========================
# WORDS AND FRONTIERS
# ==========================

def word_of(tree: Tree) -> Word:
    """a1(...(an e)...) -> a1...an"""
    word = []
    while tree.children:
        if len(tree.children) != 1:
            raise NotWordShaped(f"Node '{tree.label}' has {len(tree.children)} children")
        word.append(tree.label)
        tree = tree.children[0]
    if tree.label != "e":
        raise NotWordShaped(f"Word tree ends in '{tree.label}' instead of e")
    return tuple(word)


def leaves(tree: Tree) -> Word:
    """Frontier of the tree, left to right"""
    found = []
    stack = [tree]
    while stack:
        node = stack.pop()
        if not node.children:
            found.append(node.label)
        else:
            stack.extend(reversed(node.children))
    return tuple(found)


def format_word(word: Sequence[str]) -> str:
    if not word:
        return "ε"
    if all(len(a) == 1 for a in word):
        return "".join(word)
    return " ".join(word)


def parse_word(text: str) -> Word:
    """'ab' -> (a, b); space-separated symbols when spaces are present"""
    text = text.strip()
    if text in ("", "ε"):
        return ()
    return tuple(text.split()) if " " in text else tuple(text)


def frontier_language_eps(
    grammar: Grammar,
    max_tree_size: int = Config.max_tree_size,
    max_steps: int = Config.enum_steps,
) -> Set[Word]:
    """Frontier words of L(G) with the bare tree e read as the empty word"""
    if not grammar.alphabet.is_br():
        raise NotBrAlphabet(f"Grammar '{grammar.name}' is not over a br alphabet")
    words = set()
    for tree in language(grammar, max_tree_size, max_steps).order:
        words.add(() if tree == Tree("e") else leaves(tree))
    return words


# ==========================
# PRINTING
# ==========================

def format_source_term(t: Term) -> str:
    """Term in the grammar source syntax, with annotated binders"""
    if isinstance(t, Var):
        return _ident(t.name)
    if isinstance(t, NT):
        return t.name
    if isinstance(t, Const):
        return " ".join([t.name] + [_source_atom(a) for a in t.args])
    if isinstance(t, Abs):
        binders = []
        while isinstance(t, Abs):
            binders.append(f"({_ident(t.var)} : {t.vtype})")
            t = t.body
        return f"\\{' '.join(binders)}. {format_source_term(t)}"
    if isinstance(t, Choice):
        left = format_source_term(t.left)
        if isinstance(t.left, (Choice, Abs)):
            left = f"({left})"
        return f"{left} + {format_source_term(t.right)}"
    head, args = spine(t)
    return " ".join([_source_atom(head)] + [_source_atom(a) for a in args])


def _ident(name: str) -> str:
    """Generated variable names (x~3, %0) spelled as source identifiers"""
    return name.replace("~", "_").replace("%", "v")


def _source_atom(t: Term) -> str:
    text = format_source_term(t)
    if isinstance(t, (Var, NT)) or (isinstance(t, Const) and not t.args):
        return text
    return f"({text})"


def format_grammar(grammar: Grammar) -> str:
    lines = [f"# {grammar.name}"]
    for a in grammar.alphabet:
        lines.append(f"terminal {a} {grammar.alphabet.arity(a)}.")
    for nonterminal, kappa in grammar.nt_types.items():
        lines.append(f"nonterminal {nonterminal} : {kappa}.")
    for rule in grammar.rules:
        params = " ".join(_ident(p) for p, _ in rule.params)
        lhs = f"{rule.lhs} {params}".strip()
        lines.append(f"{lhs} -> {format_source_term(rule.body)}.")
    lines.append(f"start {grammar.start}.")
    return "\n".join(lines) + "\n"
