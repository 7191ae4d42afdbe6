"""Machine types, stepping semantics, and the text format."""

import random

import pytest

from ptmnet.fileformat import FormatError, format_machine, parse_machine
from ptmnet.machines import (
    ENDMARK,
    SYM_0,
    SYM_1,
    Configuration,
    Instruction,
    MachineError,
    MachineSpec,
    TapeSpec,
    all_configurations,
    apply_instruction,
    blank_tape,
    canonical_key,
    decode_index,
    decode_tape,
    encode_value,
    index_cells,
    make_output_config,
    matching_instructions,
    move_head,
    scanned_symbols,
)


def ptm(num_states, tapes, program=()):
    return MachineSpec("ptm", num_states, tuple(tapes), tuple(program))


def instr(q, reads, q2, writes, moves, dw=1, db=1):
    return Instruction(q, tuple(reads), q2, tuple(writes), tuple(moves), dw, db)


# --- tape sizing and index coding -----------------------------------------

def test_index_cells_is_log2_ceiling_with_floor_one():
    assert index_cells(1) == 1
    assert index_cells(2) == 1
    assert index_cells(3) == 2
    assert index_cells(4) == 2
    assert index_cells(6) == 3
    assert index_cells(16) == 4
    assert index_cells(17) == 5


def test_little_endian_decode_oracle():
    # Cells left to right (1, 0, 1): low-order bit first, so the value is
    # 1*1 + 0*2 + 1*4 = 5.  Frozen by hand.
    tape = (ENDMARK, 1, 0, 1)
    assert decode_tape(tape) == 5


def test_encode_decode_round_trip_exhaustive():
    for cells in (1, 2, 3, 4):
        for v in range(1 << cells):
            assert decode_tape(encode_value(v, cells)) == v


def test_decode_index_multiple_tapes_tape_order():
    m = ptm(2, [TapeSpec.input_index(2), TapeSpec.input_index(4)])
    config = Configuration(
        1, ((ENDMARK, 1), (ENDMARK, 0, 1)), (0, 0)
    )
    # (1,) on the first tape and (0, 1) on the second decode to (1, 2).
    assert decode_index(m, config, "input-index") == (1, 2)


# --- head movement and writes ----------------------------------------------

def test_circular_movement_from_endmark():
    # Right from the endmark lands on cell 1; left wraps to the last cell.
    assert move_head(0, "R", 3) == 1
    assert move_head(0, "L", 3) == 3
    assert move_head(3, "R", 3) == 0
    assert move_head(2, "N", 3) == 2


def test_endmark_overwrites_are_ignored():
    m = ptm(3, [TapeSpec.work(2)])
    start = Configuration(0, (blank_tape(2),), (0,))
    # Writing a bit over the endmark is ignored; the head still moves.
    step = apply_instruction(start, instr(0, [ENDMARK], 2, [SYM_1], ["R"]))
    assert step.tapes[0] == (ENDMARK, 0, 0)
    assert step.heads == (1,)
    # Writing an endmark over a bit is equally ignored.
    step2 = apply_instruction(step, instr(2, [SYM_0], 2, [ENDMARK], ["N"]))
    assert step2.tapes[0] == (ENDMARK, 0, 0)


def test_apply_writes_then_moves_each_tape():
    start = Configuration(0, ((ENDMARK, 0, 0), (ENDMARK, 1)), (1, 1))
    nxt = apply_instruction(
        start, instr(0, [SYM_0, SYM_1], 1, [SYM_1, SYM_0], ["R", "L"])
    )
    assert nxt.state == 1
    assert nxt.tapes == ((ENDMARK, 1, 0), (ENDMARK, 0))
    assert nxt.heads == (2, 0)


def test_inverse_moves_restore_heads():
    rng = random.Random(7)
    inverse = {"L": "R", "R": "L", "N": "N"}
    m = ptm(2, [TapeSpec.work(2), TapeSpec.work(1)])
    for _ in range(200):
        config = rng.choice(list(all_configurations(m)))
        moves = [rng.choice("LNR") for _ in m.tapes]
        fwd = apply_instruction(
            config,
            instr(config.state, scanned_symbols(config), 0,
                  scanned_symbols(config), moves),
        )
        back = apply_instruction(
            fwd,
            instr(fwd.state, scanned_symbols(fwd), config.state,
                  scanned_symbols(fwd), [inverse[mv] for mv in moves]),
        )
        assert back.heads == config.heads
        assert back.tapes == config.tapes


# --- configurations and matching -------------------------------------------

def test_canonical_key_injective_exhaustively():
    m = ptm(3, [TapeSpec.work(2), TapeSpec.input_index(2)])
    configs = list(all_configurations(m))
    keys = {canonical_key(c) for c in configs}
    assert len(keys) == len(configs)


def test_output_config_layout():
    m = ptm(
        2,
        [TapeSpec.output_index(4), TapeSpec.work(2), TapeSpec.input_index(2)],
    )
    c = make_output_config(m, (3,))
    assert c.state == 0
    assert c.tapes[0] == (ENDMARK, 1, 1)
    assert c.tapes[1] == (ENDMARK, 0, 0)
    assert c.tapes[2] == (ENDMARK, 0)
    assert c.heads == (0, 0, 0)


def test_output_config_rejects_bad_coords():
    m = ptm(2, [TapeSpec.output_index(4)])
    with pytest.raises(MachineError):
        make_output_config(m, (4,))
    with pytest.raises(MachineError):
        make_output_config(m, (0, 0))


def test_matching_preserves_program_order_and_leaf_override():
    prog = [
        instr(0, [ENDMARK], 0, [ENDMARK], ["N"]),
        instr(0, [SYM_0], 0, [SYM_0], ["N"]),
        instr(0, [ENDMARK], 1, [ENDMARK], ["R"]),
        instr(1, [ENDMARK], 0, [ENDMARK], ["N"]),
    ]
    m = ptm(2, [TapeSpec.work(1)], prog)
    at_end = Configuration(0, (blank_tape(1),), (0,))
    hits = matching_instructions(m, at_end)
    assert [i for i, _ in hits] == [0, 2]
    # The input state is a leaf: its program lines never fire.
    leaf = Configuration(1, (blank_tape(1),), (0,))
    assert matching_instructions(m, leaf) == []


def test_atm_leaf_states_never_match():
    m = MachineSpec(
        "atm",
        3,
        (TapeSpec.work(1),),
        (Instruction(2, (ENDMARK,), 0, (ENDMARK,), ("N",)),),
        ("and", "read", "true"),
    )
    assert matching_instructions(m, Configuration(2, (blank_tape(1),), (0,))) == []
    assert matching_instructions(m, Configuration(1, (blank_tape(1),), (0,))) == []


def test_validation_rejects_malformed_machines():
    with pytest.raises(MachineError):
        ptm(1, [TapeSpec.work(1)])  # ptm needs the input state
    with pytest.raises(MachineError):
        MachineSpec("atm", 2, (TapeSpec.work(1),), (), None)  # missing gates
    with pytest.raises(MachineError):
        ptm(2, [TapeSpec.work(1)], [instr(0, [SYM_0, SYM_0], 1, [SYM_0], ["N"])])
    with pytest.raises(MachineError):
        ptm(2, [TapeSpec.work(1)], [instr(0, [SYM_0], 1, [SYM_0], ["N"], dw=2)])
    with pytest.raises(MachineError):
        TapeSpec.input_index(0)


# --- text format -------------------------------------------------------------

EXAMPLE_PTM = """\
ptm v1
states 3
tape 0 input-index dim 6
tape 1 work cells 2
instr 0 # # -> 2 # # R N 1 -1
instr 2 0 0 -> 1 1 0 N R -1 1
"""


def test_parse_machine_round_trip():
    m = parse_machine(EXAMPLE_PTM)
    assert m.flavor == "ptm"
    assert m.num_states == 3
    assert m.tapes[0].dim == 6 and m.tapes[0].cells == 3
    assert m.tapes[1].cells == 2
    assert len(m.program) == 2
    assert m.program[0].moves == ("R", "N")
    assert m.program[1].dw == -1
    assert parse_machine(format_machine(m)) == m


def test_format_preserves_program_order():
    rng = random.Random(3)
    tapes = [TapeSpec.input_index(4), TapeSpec.work(1)]
    prog = []
    for _ in range(20):
        prog.append(
            instr(
                rng.randrange(3),
                [rng.choice([0, 1, 2]) for _ in tapes],
                rng.randrange(3),
                [rng.choice([0, 1, 2]) for _ in tapes],
                [rng.choice("LNR") for _ in tapes],
                rng.choice([-1, 1]),
                rng.choice([-1, 1]),
            )
        )
    m = ptm(3, tapes, prog)
    again = parse_machine(format_machine(m))
    assert again.program == m.program


def test_shared_index_tape_round_trips_as_two_lines():
    m = ptm(2, [TapeSpec.io_index(4), TapeSpec.io_index(4)])
    text = format_machine(m)
    assert text.count("tape 0") == 2
    again = parse_machine(text)
    assert again.tapes[0].role == "io-index"
    assert again.input_dims == (4, 4)
    assert again.output_dims == (4, 4)


def test_atm_round_trip():
    text = (
        "atm v1\nstates 2\ntape 0 input-index dim 2\n"
        "gate 0 or\ngate 1 read\n"
        "instr 0 # -> 1 # R\n"
    )
    m = parse_machine(text)
    assert m.gate_types == ("or", "read")
    assert parse_machine(format_machine(m)) == m


def test_parse_errors_name_the_line():
    with pytest.raises(FormatError) as err:
        parse_machine("ptm v1\nstates 2\ntape 0 work cells 1\nbogus 1 2\n", "m.ptm")
    assert "m.ptm:4" in str(err.value)
    with pytest.raises(FormatError):
        parse_machine("")
    with pytest.raises(FormatError):
        parse_machine("ptm v1\nstates 2\ntape 1 work cells 1\n")
    with pytest.raises(FormatError) as err2:
        parse_machine("ptm v1\nstates 2\ntape 0 work cells 1\ninstr 0 # -> 1 # N 1\n")
    assert "instr" in str(err2.value)


def test_comments_and_blank_lines_are_skipped():
    text = "# header comment\n\nptm v1\n  # indented comment\nstates 2\ntape 0 work cells 1\n"
    m = parse_machine(text)
    assert m.num_states == 2
