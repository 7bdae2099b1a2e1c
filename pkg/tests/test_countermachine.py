import pytest

from popbench.countermachine import (
    CMConfig, CMFault, CMParseError, CMVerdict, Instruction,
    check_p1, cm_decides, cm_step, format_program, instruction_path,
    is_normalized, normalize, parse_program, with_restart,
)
from popbench.programs import BAD_DEC, LIBRARY


def test_parse_inc_line():
    p = parse_program("registers: 4 inputs: 1\n1: INC r1 -> 1 | 1\n")
    assert p.instructions == (Instruction("INC", 1, 1, 1),)
    assert p.n_registers == 4 and p.n_inputs == 1


def test_parse_dec_line_labels_either_order():
    p = parse_program("registers: 4 inputs: 1\n"
                      "1: DEC r1 ? z:2 nz:1\n"
                      "2: DEC r1 ? nz:1 z:2\n")
    # s0 is always the zero branch regardless of label order
    assert p.instructions[0] == Instruction("DEC", 1, 2, 1)
    assert p.instructions[1] == Instruction("DEC", 1, 2, 1)


def test_parse_register_out_of_range():
    with pytest.raises(CMParseError) as exc:
        parse_program("registers: 4 inputs: 1\n1: INC r9 -> 1 | 1\n")
    assert any("out of range" in e for e in exc.value.errors)


def test_parse_dangling_target_and_bad_header():
    with pytest.raises(CMParseError):
        parse_program("registers: 4 inputs: 1\n1: INC r1 -> 3 | 1\n")
    with pytest.raises(CMParseError):
        parse_program("registers: 5 inputs: 1\n1: INC r1 -> 1 | 1\n")


def test_format_round_trip():
    src = LIBRARY["geq"].source
    p = parse_program(src)
    assert parse_program(format_program(p)) == p


def test_cm_step_inc_choice():
    p = parse_program("registers: 4 inputs: 1\n"
                      "1: INC r1 -> 3 | 5\n"
                      "2: INC r4 -> 2 | 2\n"
                      "3: INC r4 -> 3 | 3\n"
                      "4: INC r4 -> 4 | 4\n"
                      "5: INC r4 -> 5 | 5\n")
    cfg = CMConfig(ip=1, regs=(0, 0, 0, 0))
    bounds = (8, 8, 8, 8)
    assert cm_step(p, cfg, 1, bounds) == CMConfig(ip=5, regs=(1, 0, 0, 0))
    assert cm_step(p, cfg, 0, bounds) == CMConfig(ip=3, regs=(1, 0, 0, 0))


def test_cm_step_dec_branches_on_result():
    p = parse_program("registers: 4 inputs: 1\n"
                      "1: DEC r1 ? z:5 nz:3\n"
                      "2: INC r4 -> 2 | 2\n"
                      "3: INC r4 -> 3 | 3\n"
                      "4: INC r4 -> 4 | 4\n"
                      "5: INC r4 -> 5 | 5\n")
    bounds = (8, 8, 8, 8)
    assert cm_step(p, CMConfig(1, (1, 0, 0, 0)), 0, bounds) == \
        CMConfig(ip=5, regs=(0, 0, 0, 0))
    assert cm_step(p, CMConfig(1, (2, 0, 0, 0)), 0, bounds) == \
        CMConfig(ip=3, regs=(1, 0, 0, 0))
    with pytest.raises(CMFault):
        cm_step(p, CMConfig(1, (0, 0, 0, 0)), 0, bounds)


def test_cm_step_overflow_is_p1_fault():
    p = parse_program("registers: 4 inputs: 1\n1: INC r1 -> 1 | 1\n")
    with pytest.raises(CMFault):
        cm_step(p, CMConfig(1, (3, 0, 0, 0)), 0, (3, 3, 3, 3))


def test_even_oracle_verdicts():
    prog = normalize(LIBRARY["even"].program)
    bounds = (16,) * prog.n_registers
    assert cm_decides(prog, (4, 0), bounds) is CMVerdict.ACCEPT
    assert cm_decides(prog, (5, 0), bounds) is CMVerdict.REJECT
    assert cm_decides(prog, (6, 0), bounds) is CMVerdict.ACCEPT
    assert cm_decides(prog, (7, 0), bounds) is CMVerdict.REJECT


def test_bad_dec_surfaces_p1():
    prog = parse_program(BAD_DEC)
    with pytest.raises(CMFault):
        cm_decides(prog, (0,), (8, 8, 8, 8))


def test_incr_only_loop_at_bound_surfaces_p1():
    prog = parse_program("registers: 4 inputs: 1\n"
                         "1: INC r1 -> 1 | 1\n"
                         "2: INC r4 -> 2 | 2\n")
    with pytest.raises(CMFault):
        cm_decides(prog, (2,), (2, 2, 2, 2))


def test_normalize_rewrites_final_instruction():
    p = parse_program("registers: 4 inputs: 1\n"
                      "1: INC r1 -> 2 | 2\n"
                      "2: INC r1 -> 1 | 1\n")
    q = normalize(p)
    assert is_normalized(q)
    assert q.instructions[-1] == Instruction("INC", 4, 2, 2)
    assert normalize(q) is q  # idempotent
    with pytest.raises(ValueError):
        normalize(parse_program("registers: 4 inputs: 1\n"))


def test_randomized_agrees_with_exhaustive_on_library():
    import random
    prog = normalize(LIBRARY["even"].program)
    bounds = (70,) * prog.n_registers
    for x in range(0, 64, 7):
        full = cm_decides(prog, (x, 0), bounds, exhaustive=True)
        rnd = cm_decides(prog, (x, 0), bounds, budget=10_000,
                         rng=random.Random(x), exhaustive=False)
        assert full is rnd


def test_check_p1_certifies_library():
    for entry in LIBRARY.values():
        prog = normalize(entry.program)
        assert check_p1(prog, (6,) * prog.n_registers, input_max=4)


def test_check_p1_rejects_bad_program():
    with pytest.raises(CMFault):
        check_p1(parse_program(BAD_DEC), (4, 4, 4, 4), input_max=2)


def test_instruction_path_ends_at_accept():
    prog = normalize(LIBRARY["even"].program)
    path = instruction_path(prog, (2, 0), (8,) * prog.n_registers)
    assert path[0] == 1 and path[-1] == prog.accept_ip


def test_restart_flag_keeps_decisions():
    prog = with_restart(normalize(LIBRARY["even"].program))
    bounds = (16,) * prog.n_registers
    assert prog.restartable
    assert cm_decides(prog, (4, 0), bounds) is CMVerdict.ACCEPT
    assert cm_decides(prog, (5, 0), bounds) is CMVerdict.REJECT


def test_step_conservation_of_register_sum():
    prog = normalize(LIBRARY["even"].program)
    bounds = (16,) * prog.n_registers
    cfg = CMConfig(1, (4, 0, 0, 0, 0))
    total = sum(cfg.regs)
    for _ in range(6):
        if cfg.ip == prog.accept_ip:
            break
        ins = prog.instructions[cfg.ip - 1]
        new = cm_step(prog, cfg, 0, bounds)
        assert sum(new.regs) == total + (1 if ins.op == "INC" else -1)
        total = sum(new.regs)
        cfg = new
