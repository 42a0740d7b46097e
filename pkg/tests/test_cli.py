import json
import os

import pytest

import cli
import data_loader
from cli import main, parse_choices
from errors import ToolkitError

GRAMMAR_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "grammars")


def grammar(name):
    return os.path.join(GRAMMAR_DIR, name)


@pytest.fixture(autouse=True)
def fresh_cache():
    data_loader.reset_grammar_cache()


def test_check(capsys):
    assert main(["check", grammar("g2.hog")]) == 0
    assert capsys.readouterr().out.strip() == "order 2, 5 rules"


def test_check_reports_syntax_errors(tmp_path, capsys):
    path = tmp_path / "empty.hog"
    path.write_text("")
    assert main(["check", str(path)]) == 1
    assert "GrammarSyntaxError" in capsys.readouterr().err


def test_enum_structured(capsys):
    assert main(["--format", "structured", "enum", grammar("g2.hog"), "--max-size", "16"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert [row["size"] for row in data["trees"]] == [3, 7]
    assert data["status"] in ("pruned", "truncated")


def test_enum_of_a_finite_language(capsys):
    assert main(["enum", grammar("finite.hog")]) == 0
    assert "[complete: 3 trees]" in capsys.readouterr().out


def test_embed(tmp_path, capsys):
    small, big = tmp_path / "small.tree", tmp_path / "big.tree"
    small.write_text("(br a b)")
    big.write_text("(br (br a c) b)")
    assert main(["embed", str(small), str(big)]) == 0
    assert capsys.readouterr().out.strip() == "embeds"
    assert main(["embed", str(small), str(small), "--strict"]) == 0
    assert capsys.readouterr().out.strip() == "not strict"
    assert main(["embed", "ab", "aeb", "--words"]) == 0
    assert capsys.readouterr().out.strip() == "embeds"


def test_order2_compare(tmp_path, capsys):
    t1, t2 = tmp_path / "t1.term", tmp_path / "t2.term"
    t1.write_text("(lam (f (-> o o)) (app f e))")
    t2.write_text("(lam (f (-> o o)) (app f (a e)))")
    assert main(["order2-compare", str(t1), str(t2), "(-> (-> o o) o)"]) == 0
    assert capsys.readouterr().out.strip() == "⊴"


def test_pump_triple_structured(capsys):
    code = main(["--format", "structured", "--prefix", "3", "pump", "--triple", grammar("counter_order1.triple")])
    assert code == 0
    data = json.loads(capsys.readouterr().out)
    assert (data["j"], data["k"]) == (1, 1)
    assert len(data["steps"]) == 3


def test_lower_triple_structured(capsys):
    assert main(["--format", "structured", "lower", "--triple", grammar("counter_parity.triple")]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["c"] >= 1
    assert len(data["trees"]) == 3
    assert {"G", "H", "u", "stages"} <= set(data)


def test_pump_finite_language_exit_code():
    assert main(["pump", grammar("finite.hog")]) == 2


def test_pump_needs_an_input():
    with pytest.raises(SystemExit):
        main(["pump"])


def test_trace(capsys):
    assert main(["trace", grammar("g2.hog"), "--choices", "RL"]) == 0
    assert capsys.readouterr().out.strip().endswith("=> (a (a e e) (a e e))")


def test_derive(capsys):
    assert main(["--format", "structured", "derive", grammar("g2.hog"), "--choices", "RL"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["counter"] == 3
    assert data["well_formed"] and data["sound"]


def test_record_and_history(tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"database_url": f"sqlite:///{tmp_path / 'runs.db'}"}))
    args = ["--config", str(config), "--prefix", "3"]
    assert main(args + ["pump", "--triple", grammar("counter_order1.triple"), "--record"]) == 0
    capsys.readouterr()
    assert main(args + ["--format", "structured", "history"]) == 0
    runs = json.loads(capsys.readouterr().out)["runs"]
    assert len(runs) == 1
    assert runs[0]["grammar"] == "counter_order1"


def test_invalid_config(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"fuel": 0}))
    assert main(["--config", str(config), "check", grammar("g2.hog")]) == 1


def test_choices():
    assert parse_choices("rl") == ("R", "L")
    assert parse_choices(None) is None
    with pytest.raises(ToolkitError):
        parse_choices("RX")


def test_selftest(capsys):
    assert main(["--seed", "1", "selftest", "--samples", "20", grammar("g2.hog")]) == 0
    assert "embedding oracle" in capsys.readouterr().out


def test_internal_failure_exit_code(monkeypatch, capsys):
    def overflow(args, config):
        raise RecursionError("maximum recursion depth exceeded")

    monkeypatch.setattr(cli, "cmd_check", overflow)
    assert main(["check", grammar("g2.hog")]) == 3
    assert "internal RecursionError" in capsys.readouterr().err
