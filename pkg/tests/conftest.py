import os

import pytest

from config import Config, raise_recursion_limit
from core import parse_term
from grammar import parse_grammar
from pump import parse_triple

raise_recursion_limit()

GRAMMAR_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "grammars")


def grammar_path(name: str) -> str:
    return os.path.join(GRAMMAR_DIR, name)


def read_grammar(name: str):
    with open(grammar_path(f"{name}.hog"), encoding="utf-8") as f:
        return parse_grammar(f.read(), name=name)


def read_triple(name: str):
    with open(grammar_path(f"{name}.triple"), encoding="utf-8") as f:
        return parse_triple(f.read())


@pytest.fixture
def config():
    return Config()


@pytest.fixture(scope="session")
def g2():
    return read_grammar("g2")


@pytest.fixture(scope="session")
def astar():
    return read_grammar("astar")


@pytest.fixture(scope="session")
def pow2_words():
    return read_grammar("pow2_words")


@pytest.fixture(scope="session")
def finite():
    return read_grammar("finite")


@pytest.fixture(scope="session")
def counter_order1():
    return read_grammar("counter_order1")


@pytest.fixture(scope="session")
def counter_parity():
    return read_grammar("counter_parity")


@pytest.fixture(scope="session")
def order1_triple():
    return read_triple("counter_order1")


@pytest.fixture(scope="session")
def parity_triple():
    return read_triple("counter_parity")


@pytest.fixture
def term():
    """Parse an S-expression term"""
    return parse_term
