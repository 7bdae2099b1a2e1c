from hypothesis import given, strategies as st_

from popbench.states import (
    config_from_counts, config_size, config_text, parse_config, parse_state,
    state,
)


def test_interning_gives_identity():
    a = state(3, {"Ctr", "N"})
    b = state(3, {"N", "Ctr"})
    assert a is b
    assert a.level == 3 and a.flags == frozenset({"Ctr", "N"})


def test_state_text_is_sorted_and_parses_back():
    s = state(5, {"Loop", "A", "Ctr"})
    assert s.text == "5|A,Ctr,Loop"
    assert parse_state(s.text) is s
    assert parse_state("0|") is state(0, ())


def test_negative_level_rejected():
    try:
        state(-1, ())
    except ValueError:
        pass
    else:
        raise AssertionError("negative level accepted")


def test_config_text_sorted_by_state():
    cfg = {state(2, {"P"}): 1, state(0, ()): 19, state(1, {"P"}): 1}
    text = config_text(cfg)
    assert text.splitlines() == ["19 0|", "1 1|P", "1 2|P"]
    back = parse_config(text)
    assert back == cfg
    assert config_size(back) == 21


def test_config_from_counts_drops_zeroes():
    cfg = config_from_counts({state(0, ()): 0, state(1, {"P"}): 2})
    assert cfg == {state(1, {"P"}): 2}


_flags = st_.frozensets(st_.sampled_from(["A", "B", "Ctr", "N", "Ldr", "x"]),
                        max_size=4)


@given(st_.integers(min_value=0, max_value=40), _flags)
def test_state_text_roundtrip(level, flags):
    s = state(level, flags)
    assert parse_state(s.text) is s


@given(st_.dictionaries(
    st_.tuples(st_.integers(min_value=0, max_value=9), _flags),
    st_.integers(min_value=1, max_value=7), max_size=6))
def test_config_text_roundtrip(raw):
    cfg = {state(lv, fl): c for (lv, fl), c in raw.items()}
    assert parse_config(config_text(cfg)) == cfg
