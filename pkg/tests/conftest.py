"""Shared machine constructors for the test suite."""

import random

from ptmnet.machines import (
    ENDMARK,
    SYM_0,
    SYM_1,
    Instruction,
    MachineSpec,
    TapeSpec,
)

E, N, R, L = ENDMARK, "N", "R", "L"


def instr(q, reads, q2, writes, moves, dw=1, db=1):
    return Instruction(q, tuple(reads), q2, tuple(writes), tuple(moves), dw, db)


def two_input_gate(db_pattern):
    """A machine combining two input bits through one perceptron.

    One tape addresses the two inputs.  State 0 forks twice to state 2
    (leads to input 0) and twice to state 3 (leads to input 1); both forks
    carry weight differential +1 and the four bias differentials given by
    ``db_pattern``.  States 2 and 3 pass their input through with weight 2
    and bias 0.  Pattern (-1, -1, -1, +1) yields AND, (+1, -1, +1, -1)
    yields OR.
    """
    a, b, c, d = db_pattern
    program = (
        instr(0, [E], 2, [E], [N], db=a),
        instr(0, [E], 2, [E], [N], db=b),
        instr(0, [E], 3, [E], [R], db=c),
        instr(0, [E], 3, [E], [R], db=d),
        instr(2, [E], 1, [E], [N], db=1),
        instr(2, [E], 1, [E], [N], db=-1),
        instr(3, [SYM_0], 1, [SYM_1], [N], db=1),
        instr(3, [SYM_0], 1, [SYM_1], [N], db=-1),
    )
    return MachineSpec("ptm", 4, (TapeSpec.input_index(2),), program)


def and_machine():
    return two_input_gate((-1, -1, -1, 1))


def or_machine():
    return two_input_gate((1, -1, 1, -1))


def identity_machine(dim):
    """Copies input bit i to output bit i over a shared coordinate tape."""
    program = (
        instr(0, [E], 1, [E], [N], db=1),
        instr(0, [E], 1, [E], [N], db=-1),
    )
    return MachineSpec("ptm", 2, (TapeSpec.io_index(dim),), program)


def random_machine(rng: random.Random, max_states=5):
    """An arbitrary small machine; may compute anything, must never crash."""
    tapes = [TapeSpec.input_index(rng.randrange(1, 5))]
    if rng.random() < 0.5:
        tapes.append(TapeSpec.work(rng.randrange(1, 3)))
    if rng.random() < 0.7:
        tapes.append(TapeSpec.output_index(rng.randrange(1, 5)))
    rng.shuffle(tapes)
    states = rng.randrange(2, max_states + 1)
    program = []
    for _ in range(rng.randrange(0, 14)):
        program.append(
            instr(
                rng.randrange(states),
                [rng.choice((SYM_0, SYM_1, E)) for _ in tapes],
                rng.randrange(states),
                [rng.choice((SYM_0, SYM_1, E)) for _ in tapes],
                [rng.choice("LNR") for _ in tapes],
                rng.choice((-1, 1)),
                rng.choice((-1, 1)),
            )
        )
    return MachineSpec("ptm", states, tuple(tapes), tuple(program))
