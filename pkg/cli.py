"""
Command-line front end.

    hog check grammars/g2.hog
    hog enum grammars/g2.hog --max-size 16
    hog pump grammars/g2.hog --prefix 3 --record
    hog pump --triple grammars/counter_parity.triple

Exit codes: 0 success, 1 user error, 2 budget exhaustion, 3 internal
invariant violation.
"""
import argparse
import json
import logging
import os
import sys
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config import Config, raise_recursion_limit
from core import O, Const, Term, Tree, Var, app, arrow, format_tree, lam, pretty, type_order
from data_loader import get_grammar, grammar_name, load_term, load_tree, load_triple, load_type
from embed import hom_embed, order2_le, strict_embed, word_strict_subseq, word_subseq
from errors import InvariantViolation, ToolkitError
from flagtypes import (
    build_root_derivation,
    check_derivation,
    comp_n,
    find_pumpable,
    format_derivation,
    verify_soundness,
)
from grammar import language, leaves, parse_word, start_term, word_of
from lower import first_transform, lower_triple, remove_eps
from pump import pump_grammar, pump_triple, pump_word_grammar
from reduce import LEFT, RIGHT, stratified_reduce, tree_of

logger = logging.getLogger(__name__)

LOG_LEVEL_ENV_VAR = "HOG_LOG_LEVEL"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def emit(data: Dict[str, Any], text: str, config: Config):
    if config.output_format == "structured":
        print(json.dumps(data, indent=2, default=str))
    else:
        print(text)


def enumeration_frame(trees: Sequence[Tree]) -> pd.DataFrame:
    return pd.DataFrame(
        [{"tree": format_tree(t), "size": t.size, "depth": t.depth} for t in trees],
        columns=["tree", "size", "depth"],
    )


def parse_choices(text: Optional[str]) -> Optional[Tuple[str, ...]]:
    if text is None:
        return None
    choices = tuple(text.strip().upper())
    if any(c not in (LEFT, RIGHT) for c in choices):
        raise ToolkitError(f"Choices must be a string over {LEFT}{RIGHT}, got '{text}'")
    return choices


# ==========================
# SUBCOMMANDS
# ==========================

def cmd_check(args, config: Config) -> int:
    grammar = get_grammar(args.grammar)
    emit(
        {"grammar": grammar.name, "order": grammar.order, "rules": len(grammar.rules), "word": grammar.is_word()},
        grammar.summary(),
        config,
    )
    return 0


def cmd_enum(args, config: Config) -> int:
    grammar = get_grammar(args.grammar)
    found = language(grammar, max_tree_size=config.max_tree_size, max_steps=config.enum_steps)
    frame = enumeration_frame(found.by_size())
    marker = "truncated" if found.truncated else ("pruned" if found.pruned else "complete")
    emit(
        {"grammar": grammar.name, "status": marker, "trees": frame.to_dict(orient="records")},
        f"{frame.to_string(index=False) if len(frame) else '(no trees)'}\n[{marker}: {len(frame)} trees]",
        config,
    )
    return 0


def cmd_embed(args, config: Config) -> int:
    if args.words:
        w1, w2 = parse_word(args.first), parse_word(args.second)
        verdict = word_strict_subseq(w1, w2) if args.strict else word_subseq(w1, w2)
    else:
        t1, t2 = load_tree(args.first), load_tree(args.second)
        verdict = strict_embed(t1, t2) if args.strict else hom_embed(t1, t2)
    text = ("strictly embeds" if args.strict else "embeds") if verdict else ("not strict" if args.strict else "does not embed")
    emit({"strict": args.strict, "words": args.words, "embeds": verdict}, text, config)
    return 0


def _record(cert, config: Config):
    from db import get_db, init_db
    from models import PumpRun

    init_db(config.database_url)
    with get_db() as db:
        run = PumpRun.from_certificate(cert)
        db.add(run)
        db.flush()
        logger.info(f"✓ Recorded pump run {run.id}")


def cmd_pump(args, config: Config) -> int:
    if args.triple:
        C, D, t, kappa = load_triple(args.triple)
        cert = pump_triple(C, D, t, args.order or max(type_order(kappa), 1), config, name=grammar_name(args.triple))
    else:
        grammar = get_grammar(args.grammar)
        cert = pump_word_grammar(grammar, config) if args.words else pump_grammar(grammar, config)
    if args.record:
        _record(cert, config)
    emit(cert.to_dict(), cert.to_text(), config)
    return 0


def cmd_lower(args, config: Config) -> int:
    if args.triple:
        C, D, t, _ = load_triple(args.triple)
    else:
        triple = find_pumpable(get_grammar(args.grammar), config)
        C, D, t = triple.C, triple.D, triple.t
    lowered = lower_triple(C, D, t, config)
    trees = [tree_of(lowered.iterate(i), fuel=config.fuel) for i in range(3)]
    data = {
        "G": pretty(lowered.G),
        "H": pretty(lowered.H),
        "u": pretty(lowered.u),
        "c": lowered.c,
        "d": lowered.d,
        "stages": [list(s) for s in lowered.stages],
        "trees": [format_tree(tree) for tree in trees],
    }
    text = "\n".join(
        [f"G = {data['G']}", f"H = {data['H']}", f"u = {data['u']}", f"c = {lowered.c}, d = {lowered.d}"]
        + [f"tree(G[H^{i}[u]]) = {s}" for i, s in enumerate(data["trees"])]
    )
    emit(data, text, config)
    return 0


def cmd_order2_compare(args, config: Config) -> int:
    t1, t2 = load_term(args.first), load_term(args.second)
    kappa = load_type(args.type)
    verdict = order2_le(t1, t2, kappa, fuel=config.fuel)
    emit({"type": str(kappa), "le": verdict}, "⊴" if verdict else "not ⊴", config)
    return 0


def cmd_trace(args, config: Config) -> int:
    grammar = get_grammar(args.grammar)
    trace = stratified_reduce(
        start_term(grammar), grammar, parse_choices(args.choices), fuel=config.fuel, max_steps=config.enum_steps
    )
    tree = trace.tree()
    emit(
        {
            "steps": [{"tag": s.tag, "term": pretty(s.after)} for s in trace.steps],
            "tree": format_tree(tree),
            "choices": "".join(trace.decisions),
        },
        f"{trace.to_text()}\n=> {format_tree(tree)}",
        config,
    )
    return 0


def cmd_derive(args, config: Config) -> int:
    grammar = get_grammar(args.grammar)
    trace = stratified_reduce(
        start_term(grammar), grammar, parse_choices(args.choices), fuel=config.fuel, max_steps=config.enum_steps
    )
    tree = trace.tree()
    d = build_root_derivation(grammar, tree, trace)
    check = check_derivation(d, grammar.equations)
    output, sound = verify_soundness(d, grammar, config=config)
    data = {
        "tree": format_tree(tree),
        "size": tree.size,
        "counter": d.counter,
        "level": d.level,
        "well_formed": check.ok,
        "sound": sound and output == tree,
    }
    text = (
        f"{format_derivation(d)}\n"
        f"c = {d.counter}, |π| = {tree.size}, "
        f"derivation {'valid' if check.ok else 'INVALID: ' + check.reason}, "
        f"soundness {'holds' if data['sound'] else 'FAILS'}"
    )
    emit(data, text, config)
    return 0 if check.ok and data["sound"] else 3


def cmd_history(args, config: Config) -> int:
    from db import get_db, init_db
    from models import PumpRun

    init_db(config.database_url)
    with get_db() as db:
        runs = db.query(PumpRun).order_by(PumpRun.id.desc()).limit(args.limit).all()
        frame = pd.DataFrame([r.summary() for r in runs])
    emit(
        {"runs": frame.to_dict(orient="records")},
        frame.to_string(index=False) if len(frame) else "(no recorded runs)",
        config,
    )
    return 0


# ==========================
# SELF-TEST
# ==========================

SELFTEST_ALPHABET = {"a": 2, "b": 1, "e": 0}


def random_tree(rng: np.random.Generator, max_size: int, alphabet: Dict[str, int] = SELFTEST_ALPHABET) -> Tree:
    """Random tree of at most max_size nodes"""
    labels = sorted(alphabet)

    def grow(budget: int) -> Tuple[Tree, int]:
        choices = [a for a in labels if 1 + alphabet[a] <= budget]
        label = choices[rng.integers(len(choices))]
        used, kids = 1, []
        for _ in range(alphabet[label]):
            kid, n = grow(budget - used - (alphabet[label] - len(kids) - 1))
            kids.append(kid)
            used += n
        return Tree(label, tuple(kids)), used

    return grow(max_size)[0]


def oracle_embed(small: Tree, big: Tree) -> bool:
    """
    Brute-force embedding by search over node maps.

    Looks for an injective map f from the positions of small to the
    positions of big that keeps labels, and sends child i of u below
    child i of f(u), so ancestors map to ancestors. Nodes of small are
    placed in preorder, each checked against its parent's image only.
    """
    def positions(t: Tree) -> List[Tuple[Tuple[int, ...], Tree]]:
        out, stack = [], [((), t)]
        while stack:
            path, node = stack.pop()
            out.append((path, node))
            stack.extend((path + (i,), c) for i, c in reversed(list(enumerate(node.children))))
        return out

    pattern = positions(small)
    targets = positions(big)
    index = {path: n for n, (path, _) in enumerate(pattern)}
    image: List[Tuple[int, ...]] = []
    used: set = set()

    def below(path: Tuple[int, ...], prefix: Tuple[int, ...]) -> bool:
        return path[: len(prefix)] == prefix

    def place(n: int) -> bool:
        if n == len(pattern):
            return True
        path, node = pattern[n]
        for target, candidate in targets:
            if target in used or candidate.label != node.label:
                continue
            if path and not below(target, image[index[path[:-1]]] + (path[-1],)):
                continue
            image.append(target)
            used.add(target)
            if place(n + 1):
                return True
            image.pop()
            used.discard(target)
        return False

    return place(0)


def random_word_term(rng: np.random.Generator, depth: int) -> Term:
    """Closed ground term over {a, b, e} with beta-redexes"""
    roll = rng.integers(4) if depth > 0 else 0
    if roll == 0:
        return Const("e")
    if roll == 1:
        return Const("a", (random_word_term(rng, depth - 1),))
    if roll == 2:
        return app(lam([("x", O)], Const("b", (Var("x"),))), random_word_term(rng, depth - 1))
    body = Const("a", (app(Var("f"), Var("y")),))
    return app(
        lam([("f", arrow(O, O)), ("y", O)], body),
        lam([("z", O)], Const("b", (Var("z"),))),
        random_word_term(rng, depth - 1),
    )


def cmd_selftest(args, config: Config) -> int:
    rng = np.random.default_rng(config.seed)
    rows = []

    disagreements = 0
    for _ in range(args.samples):
        s, t = random_tree(rng, 6), random_tree(rng, 9)
        if hom_embed(s, t) != oracle_embed(s, t):
            disagreements += 1
            logger.error(f"Embedding disagreement on {format_tree(s)} / {format_tree(t)}")
    rows.append({"check": "embedding oracle", "cases": args.samples, "failures": disagreements})

    comp_failures = 0
    for _ in range(args.samples):
        n = int(rng.integers(1, 4))
        items = [(set(int(x) for x in rng.integers(0, n, size=2)), int(rng.integers(0, 3))) for _ in range(3)]
        flags, counter = comp_n(items, set(), n)
        if flags != frozenset().union(*[f for f, _ in items]) or counter != sum(c for _, c in items):
            comp_failures += 1
    rows.append({"check": "Comp_n without markers", "cases": args.samples, "failures": comp_failures})

    word_failures = 0
    for _ in range(args.samples):
        t = random_word_term(rng, 5)
        expected = word_of(tree_of(t, fuel=config.fuel))
        got = remove_eps(leaves(tree_of(first_transform([], t, config=config), fuel=config.fuel)))
        if expected != got:
            word_failures += 1
            logger.error(f"First transformation mismatch on {pretty(t)}")
    rows.append({"check": "first transformation words", "cases": args.samples, "failures": word_failures})

    for location in args.grammars:
        grammar = get_grammar(location)
        found = language(grammar, max_tree_size=config.max_tree_size, max_steps=config.enum_steps)
        failures = 0
        for tree in found.by_size()[: args.grammar_samples]:
            trace = stratified_reduce(start_term(grammar), grammar, target=tree, fuel=config.fuel)
            d = build_root_derivation(grammar, tree, trace)
            if not check_derivation(d, grammar.equations) or not verify_soundness(d, grammar, config=config)[1]:
                failures += 1
        rows.append({"check": f"soundness on {grammar.name}", "cases": min(len(found), args.grammar_samples), "failures": failures})

    frame = pd.DataFrame(rows)
    emit({"seed": config.seed, "checks": frame.to_dict(orient="records")}, frame.to_string(index=False), config)
    return 0 if frame["failures"].sum() == 0 else 3


# ==========================
# ENTRY POINT
# ==========================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hog", description="Pumping toolkit for higher-order grammars")
    parser.add_argument("--config", help="JSON config file (defaults to $HOG_CONFIG)")
    parser.add_argument("--fuel", type=int)
    parser.add_argument("--max-tree-size", type=int)
    parser.add_argument("--probe-depth", type=int)
    parser.add_argument("--prefix", type=int)
    parser.add_argument("--format", dest="output_format", choices=["text", "structured"])
    parser.add_argument("--seed", type=int)
    parser.add_argument("--log-level", default=os.environ.get(LOG_LEVEL_ENV_VAR, "WARNING"))
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="parse and type-check a grammar")
    p.add_argument("grammar")
    p.set_defaults(handler=cmd_check)

    p = sub.add_parser("enum", help="list the trees of a grammar within the size cap")
    p.add_argument("grammar")
    p.add_argument("--max-size", dest="max_size", type=int)
    p.set_defaults(handler=cmd_enum)

    p = sub.add_parser("embed", help="decide homeomorphic embedding")
    p.add_argument("first", help="tree file (or word with --words)")
    p.add_argument("second")
    p.add_argument("--strict", action="store_true")
    p.add_argument("--words", action="store_true")
    p.set_defaults(handler=cmd_embed)

    p = sub.add_parser("pump", help="certify a strictly increasing chain")
    p.add_argument("grammar", nargs="?")
    p.add_argument("--triple", help="pump a (triple ...) file instead of a grammar")
    p.add_argument("--order", type=int, help="order used with --triple (defaults to the hole type order)")
    p.add_argument("--words", action="store_true", help="word chain for a word grammar")
    p.add_argument("--record", action="store_true", help="store the certificate in the run ledger")
    p.set_defaults(handler=cmd_pump)

    p = sub.add_parser("lower", help="lower a pump triple by one order")
    p.add_argument("grammar", nargs="?")
    p.add_argument("--triple")
    p.set_defaults(handler=cmd_lower)

    p = sub.add_parser("order2-compare", help="decide t ⊴κ t' at an order <= 2 type")
    p.add_argument("first")
    p.add_argument("second")
    p.add_argument("type", help="type such as '(-> (-> o o) o)'")
    p.set_defaults(handler=cmd_order2_compare)

    for name, handler, help_text in (
        ("trace", cmd_trace, "print the stratified reduction trace"),
        ("derive", cmd_derive, "dump the root derivation"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("grammar")
        p.add_argument("--choices", help="choice resolutions, a string over LR")
        p.set_defaults(handler=handler)

    p = sub.add_parser("selftest", help="randomized property checks")
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--grammar-samples", type=int, default=3)
    p.add_argument("grammars", nargs="*", default=[])
    p.set_defaults(handler=cmd_selftest)

    p = sub.add_parser("history", help="list recorded pump runs")
    p.add_argument("--limit", type=int, default=20)
    p.set_defaults(handler=cmd_history)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format=LOG_FORMAT)
    raise_recursion_limit()

    try:
        config = Config.load(args.config).override(
            fuel=args.fuel,
            max_tree_size=getattr(args, "max_size", None) or args.max_tree_size,
            probe_depth=args.probe_depth,
            prefix=args.prefix,
            output_format=args.output_format,
            seed=args.seed,
        )
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1

    if args.command in ("pump", "lower") and not (args.grammar or args.triple):
        parser.error(f"{args.command} needs a grammar file or --triple")

    try:
        return args.handler(args, config)
    except ToolkitError as e:
        logger.error(f"{type(e).__name__}: {e}", exc_info=logger.isEnabledFor(logging.DEBUG))
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.error(f"Internal failure: {type(e).__name__}: {e}", exc_info=True)
        print(f"error: internal {type(e).__name__}: {e}", file=sys.stderr)
        return InvariantViolation.exit_code


if __name__ == "__main__":
    sys.exit(main())
