import json

import pytest

from popbench.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_simulate_binary_example(capsys):
    code, out, _ = run_cli(capsys, "simulate", "--example", "binary",
                           "-n", "22", "--seed", "3")
    assert code == 0
    lines = out.splitlines()
    assert "19 0|" in lines
    assert sum(1 for l in lines if l.startswith("1 1|")) == 1
    assert "1 2|P" in lines and "1 4|P" in lines
    assert lines[-1].startswith("verdict=1 steps=") and lines[-1].endswith("seed=3")


def test_simulate_predicate_accept_and_reject(capsys):
    code, out, _ = run_cli(capsys, "simulate", "--predicate", "even",
                           "--input", "x=4", "--pad", "66", "--seed", "7")
    assert code == 0 and out.splitlines()[-1].startswith("verdict=1")
    code, out, _ = run_cli(capsys, "simulate", "--predicate", "even",
                           "--input", "x=5", "--pad", "65", "--seed", "7")
    assert code == 0 and out.splitlines()[-1].startswith("verdict=0")


def test_simulate_refuses_below_minimum_population(capsys):
    code, _out, err = run_cli(capsys, "simulate", "--predicate", "even",
                              "--input", "x=5", "--pad", "10", "--seed", "1")
    assert code == 4 and "n0=" in err


def test_simulate_program_file(tmp_path, capsys):
    from popbench.programs import LIBRARY
    path = tmp_path / "even.cm"
    path.write_text(LIBRARY["even"].source)
    code, out, _ = run_cli(capsys, "simulate", "--program", str(path),
                           "--input", "x=4", "--pad", "66", "--seed", "2")
    assert code == 0 and out.splitlines()[-1].startswith("verdict=1")


def test_simulate_trace_file(tmp_path, capsys):
    trace_path = tmp_path / "trace.jsonl"
    code, _out, _ = run_cli(capsys, "simulate", "--example", "binary",
                            "-n", "9", "--seed", "1", "--trace", str(trace_path))
    assert code == 0
    lines = trace_path.read_text().splitlines()
    head = json.loads(lines[0])
    assert head["record"] == "header" and head["seed"] == 1


def test_check_majority_fixture(capsys):
    code, out, _ = run_cli(capsys, "check", "--fixture", "majority4",
                           "--input", "a=2,b=1")
    assert code == 0 and out.splitlines()[-1] == "decision=1"
    code, out, _ = run_cli(capsys, "check", "--fixture", "majority4",
                           "--input", "a=1,b=2")
    assert code == 0 and out.splitlines()[-1] == "decision=0"
    code, out, _ = run_cli(capsys, "check", "--fixture", "majority4",
                           "--input", "a=2,b=2")
    assert code == 3 and out.splitlines()[-1] == "decision=ill-specified"


def test_check_binary_example(capsys):
    code, out, _ = run_cli(capsys, "check", "--example", "binary", "-n", "5")
    assert code == 0
    assert out.splitlines()[-1] == "decision=1"


def test_check_refuses_singleton(capsys):
    code, _out, err = run_cli(capsys, "check", "--example", "binary", "-n", "1")
    assert code == 4 and "refusal" in err


def test_check_truncation_exit_code(capsys):
    code, _out, err = run_cli(capsys, "check", "--example", "binary",
                              "-n", "8", "--node-budget", "3")
    assert code == 2 and "truncated" in err


def test_oracle_accept_reject_and_p1(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "oracle", "--predicate", "even",
                           "--input", "x=6")
    assert code == 0 and out.strip() == "accept"
    code, out, _ = run_cli(capsys, "oracle", "--predicate", "even",
                           "--input", "x=7", "--trace")
    assert code == 0
    assert out.splitlines()[0] == "reject"
    assert out.splitlines()[1].startswith("path=1,")
    from popbench.programs import BAD_DEC
    bad = tmp_path / "bad-dec.cm"
    bad.write_text(BAD_DEC)
    code, _out, err = run_cli(capsys, "oracle", "--program", str(bad),
                              "--input", "x=0")
    assert code == 4 and "P1" in err


def test_compile_dump_is_deterministic_and_complete(capsys):
    args = ("compile", "--predicate", "even", "--beta", "2", "-n", "256",
            "--dump")
    code, out1, _ = run_cli(capsys, *args)
    assert code == 0
    code, out2, _ = run_cli(capsys, *args)
    assert out1 == out2
    for family in ("counter.", "leader.", "clear.", "swap.", "incr.",
                   "loop.", "reset.", "cleanup.", "dist.", "detect.",
                   "dig-incr.", "dig-decr.", "input.", "cm-incr.",
                   "cm-decr.", "output.", "go."):
        assert family in out1
    # the initialisation lines render in a stable text form
    assert "counter.1: (i Ctr:1 N:1),(i Ctr:1 N:1) -> (i+1),(i N:0)" in out1


def test_compile_capacity_warning(capsys):
    code, out, _ = run_cli(capsys, "compile", "--predicate", "even",
                           "-n", "16")
    assert code == 0
    assert "capacity=insufficient" in out
    assert "minimum viable population" in out


def test_unknown_symbol_is_input_error(capsys):
    code, _out, err = run_cli(capsys, "simulate", "--fixture", "majority4",
                              "--input", "a=2,z=1")
    assert code == 4 and "z" in err
