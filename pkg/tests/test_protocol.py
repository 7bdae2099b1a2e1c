import pytest

from popbench.protocol import (
    EmptyInput, UnknownSymbol, binary_counter_example, enabled_outcomes,
    initial_config, majority_fixture, output_consensus, step, val,
)
from popbench.states import state

from _util import built_protocol


def test_binary_example_merge_outcome():
    p = binary_counter_example()
    q = state(0, {"P"})
    outs = enabled_outcomes(p, q, q)
    assert len(outs) == 1
    o1, o2, tid, _branch = outs[0]
    assert (o1, o2) == (state(1, {"P"}), state(0, ())) and tid == "example.1"


def test_binary_example_identity_for_unequal_levels():
    p = binary_counter_example()
    assert enabled_outcomes(p, state(0, {"P"}), state(1, {"P"})) == ()


def test_cm_incr_dispatch_offers_two_branches():
    # genuinely nondeterministic increment: both successor instructions
    import popbench as pb
    from popbench.countermachine import normalize, parse_program
    from popbench.programs import NONDET_DEMO
    built = pb.build_protocol(normalize(parse_program(NONDET_DEMO)),
                              pb.FSpec.log(2), alphabet=("x",))
    cm = state(4, {"CM", "IP^1"})
    helper = state(0, {"DigDone"})
    outs = enabled_outcomes(built.protocol, cm, helper)
    assert len(outs) == 2
    targets = {o1 for o1, _o2, _tid, _b in outs}
    assert targets == {state(4, {"CM", "IP^2"}), state(4, {"CM", "IP^3"})}


def test_step_multiset_arithmetic():
    q = state(0, {"P"})
    cfg = {q: 2}
    new = step(cfg, q, q, state(1, {"P"}), state(0, ()))
    assert new == {state(1, {"P"}): 1, state(0, ()): 1}
    with pytest.raises(ValueError):
        step({q: 1}, q, q, q, q)


def test_initial_config_maps_symbols():
    p = binary_counter_example()
    assert initial_config(p, {"x": 3}) == {state(0, {"P"}): 3}
    with pytest.raises(EmptyInput):
        initial_config(p, {})
    with pytest.raises(UnknownSymbol):
        initial_config(p, {"y": 1})


def test_constructed_input_map():
    built = built_protocol("even")
    cfg = initial_config(built.protocol, {"x": 3})
    assert cfg == {state(0, {"Ctr", "N", "x"}): 3}


def test_output_consensus_three_cases():
    built = built_protocol("even")
    p = built.protocol
    out1 = state(0, {"Output"})
    out0 = state(0, {"Free"})
    assert output_consensus(p, {out1: 5}) == 1
    assert output_consensus(p, {out0: 5}) == 0
    assert output_consensus(p, {out0: 1, out1: 4}) is None


def test_val_weighted_sum():
    cfg = {
        state(0, {"Ctr"}): 1,
        state(1, {"Ctr", "N"}): 1,
        state(2, {"Ctr", "N"}): 1,
        state(2, {"N"}): 1,  # no Ctr: ignored
    }
    assert val(cfg, "N") == 6
    assert val({}, "N") == 0


def test_val_counts_population_after_input_map():
    built = built_protocol("even")
    cfg = initial_config(built.protocol, {"x": 4, "pad": 9})
    assert val(cfg, "N") == 13


def test_majority_fixture_transitions():
    p = majority_fixture()
    A = state(0, {"S", "P"})
    B = state(0, {"S"})
    a = state(0, {"P"})
    b = state(0, ())
    (o1, o2, tid, _), = enabled_outcomes(p, A, B)
    assert (o1, o2) == (a, b) and tid == "maj.1"
    (o1, o2, _, _), = enabled_outcomes(p, A, b)
    assert (o1, o2) == (A, a)
    (o1, o2, _, _), = enabled_outcomes(p, B, a)
    assert (o1, o2) == (B, b)
    assert enabled_outcomes(p, a, b) == ()


def test_identity_outcomes_fall_through_to_later_templates():
    # A leader mid-initialisation against an already-wiped agent: the wipe
    # line matches but changes nothing, so the appointment line applies.
    built = built_protocol("even")
    leader = state(3, {"Ldr", "I", "x"})
    wiped = state(0, {"Free", "T", "x"})
    outs = enabled_outcomes(built.protocol, leader, wiped)
    assert outs and all(tid == "cleanup.1" for _o1, _o2, tid, _b in outs)
    dirty = state(0, {"Free", "N", "x"})
    outs = enabled_outcomes(built.protocol, leader, dirty)
    assert outs and all(tid == "reset.2" for _o1, _o2, tid, _b in outs)


def test_recovery_pairs_marked_deferred():
    built = built_protocol("even")
    leader = state(3, {"Ldr", "Start", "x"})
    stray = state(0, {"Done", "Q", "x"})
    pooled, deferred = built.protocol.pair_outcomes(leader, stray)
    assert pooled and deferred
    ids = {o[2] for o, _orient in pooled}
    assert ids == {"reset.1"}
