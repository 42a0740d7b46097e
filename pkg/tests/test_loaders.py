import os

import pytest
import requests

import data_loader
import source_loader
from db import get_db, init_db
from errors import ToolkitError
from models import PumpRun

GRAMMAR_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "grammars")


def grammar_path(name):
    return os.path.join(GRAMMAR_DIR, name)


class FakeResponse:
    def __init__(self, text="", status=200):
        self.text = text
        self.status_code = status
        self.headers = {"content-length": str(len(text))}

    def raise_for_status(self):
        if self.status_code >= 400:
            raise requests.exceptions.HTTPError(f"{self.status_code} error")


@pytest.fixture(autouse=True)
def fresh_cache():
    data_loader.reset_grammar_cache()
    yield
    data_loader.reset_grammar_cache()


def test_grammar_is_cached():
    path = grammar_path("g2.hog")
    assert not data_loader.is_grammar_cached(path)
    first = data_loader.get_grammar(path)
    assert data_loader.is_grammar_cached(path)
    assert data_loader.get_grammar(path) is first
    assert first.name == "g2"


def test_missing_file():
    with pytest.raises(ToolkitError):
        data_loader.get_grammar(grammar_path("missing.hog"))


def test_triple_file():
    C, D, t, kappa = data_loader.load_triple(grammar_path("counter_order1.triple"))
    assert str(kappa) == "o -> o"


def test_grammar_from_url(monkeypatch):
    with open(grammar_path("astar.hog"), encoding="utf-8") as f:
        source = f.read()
    calls = []

    def fake_get(url, timeout):
        calls.append(url)
        return FakeResponse(source)

    monkeypatch.setattr(source_loader.requests, "get", fake_get)
    url = "https://example.org/grammars/astar.hog"
    grammar = data_loader.get_grammar(url)
    data_loader.get_grammar(url)
    assert grammar.name == "astar"
    assert calls == [url]


def test_http_errors_become_toolkit_errors(monkeypatch):
    monkeypatch.setattr(source_loader.requests, "get", lambda url, timeout: FakeResponse(status=404))
    with pytest.raises(ToolkitError, match="refused"):
        source_loader.load_source("https://example.org/none.hog")


def test_timeouts_become_toolkit_errors(monkeypatch):
    def slow(url, timeout):
        raise requests.exceptions.Timeout()

    monkeypatch.setattr(source_loader.requests, "get", slow)
    with pytest.raises(ToolkitError, match="timed out"):
        source_loader.load_source("https://example.org/slow.hog")


def test_run_ledger(tmp_path, order1_triple):
    from pump import pump_triple
    from config import Config

    init_db(f"sqlite:///{tmp_path / 'runs.db'}")
    C, D, t, _ = order1_triple
    cert = pump_triple(C, D, t, 1, Config(prefix=3), name="counter_order1")
    with get_db() as db:
        db.add(PumpRun.from_certificate(cert))
    with get_db() as db:
        runs = db.query(PumpRun).all()
        assert len(runs) == 1
        assert runs[0].summary()["j"] == 1
        assert runs[0].grammar == "counter_order1"
