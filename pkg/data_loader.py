"""
Loading of grammars, trees, terms and triples from files or URLs.
Parsed grammars are cached per location so repeated subcommands in one
process (the self-test, the test-suite) parse each file once.
"""
import logging
import os
from typing import Dict, Tuple

from core import SimpleType, Term, Tree, parse_term, parse_tree, parse_type
from errors import ToolkitError
from grammar import Grammar, parse_grammar
from pump import parse_triple
from source_loader import is_url, load_source

logger = logging.getLogger(__name__)

# Global cache of parsed grammars, keyed by location
_grammar_cache: Dict[str, Grammar] = {}


def read_text(location: str) -> str:
    """Source text of a local path or http(s) URL"""
    if is_url(location):
        return load_source(location)
    try:
        with open(location, encoding="utf-8") as f:
            return f.read()
    except FileNotFoundError:
        logger.error(f"ERROR: File not found at {location}")
        raise ToolkitError(f"File not found: {location}")
    except OSError as e:
        raise ToolkitError(f"Cannot read {location}: {e}")


def grammar_name(location: str) -> str:
    base = location.rstrip("/").rsplit("/", 1)[-1]
    return os.path.splitext(base)[0] or "grammar"


def get_grammar(location: str) -> Grammar:
    """
    Returns the cached grammar parsed from location.

    On first call the source is read, parsed and validated; subsequent
    calls return the cached instance.

    Raises:
        ToolkitError: Missing file, failed download, or a grammar error
    """
    if location not in _grammar_cache:
        logger.info("=" * 60)
        logger.info(f"Loading grammar from {location}")
        logger.info("=" * 60)
        grammar = parse_grammar(read_text(location), name=grammar_name(location))
        _grammar_cache[location] = grammar
        logger.info(f"✓ Grammar {grammar.name} loaded ({grammar.summary()})")
    return _grammar_cache[location]


def reset_grammar_cache():
    """Clear the cache; the next get_grammar call re-reads the source"""
    _grammar_cache.clear()
    logger.info("Grammar cache cleared")


def is_grammar_cached(location: str) -> bool:
    return location in _grammar_cache


def load_tree(location: str) -> Tree:
    return parse_tree(read_text(location))


def load_term(location: str) -> Term:
    return parse_term(read_text(location))


def load_type(text: str) -> SimpleType:
    return parse_type(text)


def load_triple(location: str) -> Tuple[Term, Term, Term, SimpleType]:
    """(C, D, t, hole type) from a `(triple ...)` file"""
    return parse_triple(read_text(location))
