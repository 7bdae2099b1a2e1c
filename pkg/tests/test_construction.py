import pytest

import popbench as pb
from popbench.audit import AuditError, audit_templates
from popbench.construction import (
    FSpec, capacity_check, digit_base, digit_value, generate_templates,
    is_cleaned, is_initialised, layout, population_layout, register_value,
)
from popbench.countermachine import normalize, parse_program
from popbench.patterns import RightSide, StatePattern, TransitionTemplate, a_const, f_is, lv_var
from popbench.states import state

from _util import built_protocol


def test_layout_formula():
    fake = FSpec(g=lambda l: 12, beta=1, name="const12")
    lay = layout(l_n=5, gamma=4, fspec=fake)
    assert lay.k == 3
    assert lay.nu[:4] == (1, 4, 7, 10)
    assert lay.nu[4] == 13  # sentinel: one past the last digit
    lay = layout(5, 4, FSpec(g=lambda l: 4, beta=1, name="const4"))
    assert lay.k == 1 and lay.nu[:4] == (1, 2, 3, 4)
    # non-divisible counts round up to the next multiple of gamma
    lay = layout(5, 4, FSpec(g=lambda l: 3, beta=1, name="const3"))
    assert lay.digits == 4 and lay.k == 1


def test_last_register_ends_at_digit_count():
    built = built_protocol("even")
    lay = built.population_layout(70).base
    assert lay.nu[built.gamma - 1] + lay.k - 1 == lay.digits


def test_capacity_check_paper_points():
    fspec = FSpec.log(64)
    assert capacity_check(2 ** 16, fspec, gamma=4, c=1) == "ok"
    assert capacity_check(16, fspec, gamma=4, c=1) == "insufficient"
    # trivial space bound: fine once there is anything at all per digit
    assert capacity_check(2 ** 16, fspec, gamma=4, c=0) == "ok"


def test_flag_inventory_matches_construction():
    built = built_protocol("even")
    flags = built.protocol.flag_universe
    core = {
        "Ldr", "Ctr", "Free", "N", "I", "A", "B", "Clr", "Incr", "Cmp",
        "Swap", "Done", "R", "Loop", "LoopA", "Body", "End", "T", "Q",
        "Start", "Dist", "DistA", "DistDone", "V", "Digit", "Det", "DetA",
        "DetDone", "M", "U", "W", "DigIncr", "DigIncrA", "DigIncrB",
        "DigIncrC", "DigDecr", "DigDecrA", "DigDecrB", "DigDecrC",
        "DigDone", "Inp", "InpA", "InpB", "InpC", "InpDone", "O", "CM",
        "Output", "Go", "GoA", "GoB", "GoC", "GoD",
    }
    assert core <= flags
    assert set(built.alphabet) <= flags
    for s in range(1, built.program.length + 1):
        assert "IP^%d" % s in flags


def test_family_inventory_complete():
    built = built_protocol("even")
    families = {t.family for t in built.protocol.templates}
    assert families == {
        "counter", "leader", "clear", "swap", "incr", "loop", "reset",
        "cleanup", "dist", "detect", "dig-incr", "dig-decr", "input",
        "cm-incr", "cm-decr", "output", "go",
    }


def test_init_family_is_four_lines():
    built = built_protocol("even")
    init = [t.id for t in built.protocol.templates
            if t.family in ("counter", "leader")]
    assert init == ["counter.1", "counter.2", "leader.1", "leader.2"]


def test_template_count_linear_in_program_length():
    built = built_protocol("even")
    prog = built.program
    incr_templates = [t for t in built.protocol.templates if t.family == "cm-incr"]
    decr_templates = [t for t in built.protocol.templates if t.family == "cm-decr"]
    n_inc = sum(1 for s, i in enumerate(prog.instructions, 1)
                if i.op == "INC" and s != prog.length)
    n_dec = sum(1 for s, i in enumerate(prog.instructions, 1)
                if i.op == "DEC" and s != prog.length)
    assert len(incr_templates) == n_inc
    # one dispatch per (s, b) realized as two branches per template
    assert all(len(t.rights) == 2 for t in incr_templates)
    assert len(decr_templates) == 6 * n_dec
    # no dispatch lines for the accepting sentinel
    assert not any(t.id.startswith(("cm-incr.%d" % prog.length,
                                    "cm-decr.%d" % prog.length))
                   for t in built.protocol.templates)


def test_digit_and_register_values():
    built = built_protocol("even")
    lay = built.population_layout(70).base
    cfg = {}
    # digit 1: base 4 (3 agents), value 2; digit 2: base 5 (4 agents), value 1
    cfg[state(1, {"Digit", "M"})] = 2
    cfg[state(1, {"Digit"})] = 1
    cfg[state(2, {"Digit", "M"})] = 1
    cfg[state(2, {"Digit"})] = 3
    assert digit_value(cfg, 1) == 2 and digit_base(cfg, 1) == 4
    assert digit_value(cfg, 2) == 1 and digit_base(cfg, 2) == 5
    # register 1 spans digits 1..3: 2 + 4*1 = 6
    assert register_value(cfg, lay, 1) == 6
    assert register_value({}, lay, 1) == 0


def test_population_layout_budget():
    built = built_protocol("even")
    pl = built.population_layout(70)
    # one leader, l+1 counters, four helpers, rest distributed to digits
    assert pl.free_agents == 70 - 6 - 2 - 4
    assert sum(pl.per_digit) == pl.free_agents
    assert max(pl.per_digit) - min(pl.per_digit) <= 1
    for r in range(1, built.gamma + 1):
        expect = 1
        for i in pl.base.register_digits(r):
            expect *= pl.per_digit[i - 1] + 1
        assert pl.register_capacity[r - 1] == expect


def test_n0_is_minimal_viable():
    built = built_protocol("even")
    n0 = built.n0
    pl = built.population_layout(n0)
    l_n = n0.bit_length() - 1
    assert l_n + 5 + pl.base.digits <= n0
    assert min(pl.register_capacity) >= n0 + 2
    # the next smaller population violates one of the conditions
    prev = built.population_layout(n0 - 1)
    l_p = (n0 - 1).bit_length() - 1
    assert (l_p + 5 + prev.base.digits > n0 - 1
            or min(prev.register_capacity) < n0 + 1)


def test_build_requires_normalized_program():
    raw = parse_program("registers: 4 inputs: 1\n"
                        "1: INC r1 -> 2 | 2\n"
                        "2: INC r1 -> 1 | 1\n")
    with pytest.raises(ValueError):
        pb.build_protocol(raw, FSpec.log(2), alphabet=("x",))


def test_audit_catches_broken_template():
    built = built_protocol("even")
    bad = TransitionTemplate(
        id="rogue.1", family="rogue",
        left=(StatePattern(level=lv_var("i"), flags=(("Det", f_is(1)),)),
              StatePattern()),
        rights=((RightSide(level=lv_var("i"), flags=(("Ctr", a_const(0)),)),
                 RightSide()),),
    )
    problems = audit_templates(built.protocol.templates + (bad,),
                               built.protocol.flag_universe, built.alphabet)
    assert any("rogue.1" in p and "Ctr" in p for p in problems)


def test_generated_templates_pass_audit():
    for name in ("even", "geq"):
        built = built_protocol(name)
        assert audit_templates(built.protocol.templates,
                               built.protocol.flag_universe,
                               built.alphabet) == []


def test_initialised_and_cleaned_probes():
    from _util import initialised_config
    cfg = initialised_config(13)
    assert is_initialised(cfg, 13)
    assert not is_initialised(cfg, 14)
    # cleaned additionally requires Start on the leader and bare Free agents
    assert not is_cleaned(cfg, 13, ("x", "pad"))
    cfg2 = {state(3, {"Ldr", "Start", "x"}): 1}
    for i in range(4):
        fl = {"Ctr"}
        if (13 >> i) & 1:
            fl.add("N")
        cfg2[state(i, fl)] = 1
    cfg2[state(0, {"Free", "x"})] = 8
    assert is_cleaned(cfg2, 13, ("x", "pad"))


def test_dump_is_stable():
    built = built_protocol("even")
    d1 = built.protocol.dump()
    d2 = built.protocol.dump()
    assert d1 == d2
    assert d1.splitlines()[0].startswith("counter.1:")
    assert built.protocol.digest() == built.protocol.digest()
