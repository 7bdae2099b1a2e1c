from popbench.programs import LIBRARY, library_selftest


def test_library_entries_well_formed():
    for name, entry in LIBRARY.items():
        prog = entry.program
        assert prog.n_registers == len(entry.alphabet) + 3
        assert entry.alphabet[-1] == "pad"
        assert entry.deterministic
        # deterministic means all INC branches coincide
        assert all(i.op == "DEC" or i.s0 == i.s1 for i in prog.instructions)


def test_reference_evaluators():
    assert LIBRARY["even"].reference({"x": 4})
    assert not LIBRARY["even"].reference({"x": 5})
    assert LIBRARY["geq"].reference({"x": 3, "y": 3})
    assert not LIBRARY["geq"].reference({"x": 2, "y": 3})


def test_selftest_small_grid():
    # fast smoke version of the full grid check (the acceptance suite runs
    # the full <=64 grid)
    library_selftest(max_value=12)
