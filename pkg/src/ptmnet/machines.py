"""Multi-tape machine definitions and single-step configuration semantics.

A machine is a finite-state controller over k fixed-size circular tapes.
Cell 0 of every tape holds the endmark; the remaining ``cells`` positions
hold bits.  Index tapes address coordinates of the input/output bit arrays
in little-endian binary: the cell just right of the endmark is the
low-order bit.  Two flavors exist:

* ``ptm`` -- perceptron machines.  Instructions carry differential weight
  and bias values in {-1, +1}; state 0 is the output state, state 1 the
  input state (the only leaf).
* ``atm`` -- gate machines.  Every state maps to a Boolean gate type and
  the differentials are ignored; states typed true/false/read/
  read-inverted are leaves.

Configurations (state + tape contents + head positions) are immutable
tuples, so everything in this module is a pure function and safe to share
across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple

SYM_0 = 0
SYM_1 = 1
ENDMARK = 2
SYMBOLS = (SYM_0, SYM_1, ENDMARK)
SYMBOL_TEXT = {SYM_0: "0", SYM_1: "1", ENDMARK: "#"}
TEXT_SYMBOL = {v: k for k, v in SYMBOL_TEXT.items()}

MOVE_LEFT = "L"
MOVE_NONE = "N"
MOVE_RIGHT = "R"
MOVES = (MOVE_LEFT, MOVE_NONE, MOVE_RIGHT)

ROLE_WORK = "work"
ROLE_INPUT = "input-index"
ROLE_OUTPUT = "output-index"
ROLE_IO = "io-index"  # both input- and output-index (shared coordinate tapes)
ROLES = (ROLE_WORK, ROLE_INPUT, ROLE_OUTPUT, ROLE_IO)

FLAVOR_PTM = "ptm"
FLAVOR_ATM = "atm"

GATE_AND = "and"
GATE_OR = "or"
GATE_TRUE = "true"
GATE_FALSE = "false"
GATE_READ = "read"
GATE_READ_INV = "read-inverted"
GATE_TYPES = (GATE_AND, GATE_OR, GATE_TRUE, GATE_FALSE, GATE_READ, GATE_READ_INV)
LEAF_GATES = frozenset((GATE_TRUE, GATE_FALSE, GATE_READ, GATE_READ_INV))

OUTPUT_STATE = 0
INPUT_STATE = 1


class MachineError(ValueError):
    """Raised for structurally invalid machine definitions."""


def index_cells(dim: int) -> int:
    """Number of bit cells needed to address ``dim`` coordinates (min 1)."""
    if dim < 1:
        raise MachineError(f"index tape dimension must be positive, got {dim}")
    return max(1, math.ceil(math.log2(dim)))


@dataclass(frozen=True)
class TapeSpec:
    """One tape: its role, bit cell count, and (for index tapes) extent."""

    role: str
    cells: int
    dim: int = 0

    def __post_init__(self):
        if self.role not in ROLES:
            raise MachineError(f"unknown tape role {self.role!r}")
        if self.cells < 1:
            raise MachineError(f"tape must have at least one cell, got {self.cells}")
        if self.role != ROLE_WORK:
            if self.dim < 1:
                raise MachineError("index tapes need a positive dimension")
            if (1 << self.cells) < self.dim:
                raise MachineError(
                    f"{self.cells} cells cannot address {self.dim} coordinates"
                )

    @staticmethod
    def work(cells: int, dim: int = 0) -> "TapeSpec":
        return TapeSpec(ROLE_WORK, cells, dim)

    @staticmethod
    def input_index(dim: int) -> "TapeSpec":
        return TapeSpec(ROLE_INPUT, index_cells(dim), dim)

    @staticmethod
    def output_index(dim: int) -> "TapeSpec":
        return TapeSpec(ROLE_OUTPUT, index_cells(dim), dim)

    @staticmethod
    def io_index(dim: int) -> "TapeSpec":
        return TapeSpec(ROLE_IO, index_cells(dim), dim)

    @property
    def reads_input(self) -> bool:
        return self.role in (ROLE_INPUT, ROLE_IO)

    @property
    def addresses_output(self) -> bool:
        return self.role in (ROLE_OUTPUT, ROLE_IO)


@dataclass(frozen=True)
class Instruction:
    """One program line: precondition, rewrite, head moves, differentials.

    ``reads``/``writes``/``moves`` have one entry per tape.  ``dw``/``db``
    are meaningful for ptm machines only and must be -1 or +1 there.
    """

    from_state: int
    reads: tuple[int, ...]
    to_state: int
    writes: tuple[int, ...]
    moves: tuple[str, ...]
    dw: int = 1
    db: int = 1


class Configuration(NamedTuple):
    """A full machine configuration; hashable and usable as a memo key."""

    state: int
    tapes: tuple[tuple[int, ...], ...]
    heads: tuple[int, ...]


def canonical_key(config: Configuration) -> tuple:
    """Injective key for memoization: the configuration tuple itself."""
    return config


@dataclass(frozen=True)
class MachineSpec:
    """A complete machine: flavor, state count, tapes, gates, program."""

    flavor: str
    num_states: int
    tapes: tuple[TapeSpec, ...]
    program: tuple[Instruction, ...] = ()
    gate_types: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.flavor not in (FLAVOR_PTM, FLAVOR_ATM):
            raise MachineError(f"unknown flavor {self.flavor!r}")
        min_states = 2 if self.flavor == FLAVOR_PTM else 1
        if self.num_states < min_states:
            raise MachineError(
                f"{self.flavor} machines need at least {min_states} states"
            )
        if self.flavor == FLAVOR_ATM:
            if self.gate_types is None or len(self.gate_types) != self.num_states:
                raise MachineError("atm machines need one gate type per state")
            for g in self.gate_types:
                if g not in GATE_TYPES:
                    raise MachineError(f"unknown gate type {g!r}")
        elif self.gate_types is not None:
            raise MachineError("ptm machines take no gate types")
        k = len(self.tapes)
        for i, ins in enumerate(self.program):
            if not (0 <= ins.from_state < self.num_states):
                raise MachineError(f"instruction {i}: bad source state {ins.from_state}")
            if not (0 <= ins.to_state < self.num_states):
                raise MachineError(f"instruction {i}: bad target state {ins.to_state}")
            if len(ins.reads) != k or len(ins.writes) != k or len(ins.moves) != k:
                raise MachineError(f"instruction {i}: expected {k} symbols per vector")
            if any(s not in SYMBOLS for s in ins.reads + ins.writes):
                raise MachineError(f"instruction {i}: bad symbol")
            if any(m not in MOVES for m in ins.moves):
                raise MachineError(f"instruction {i}: bad move")
            if self.flavor == FLAVOR_PTM and (ins.dw not in (-1, 1) or ins.db not in (-1, 1)):
                raise MachineError(f"instruction {i}: differentials must be -1 or +1")

    @property
    def input_tapes(self) -> tuple[int, ...]:
        return tuple(i for i, t in enumerate(self.tapes) if t.reads_input)

    @property
    def output_tapes(self) -> tuple[int, ...]:
        return tuple(i for i, t in enumerate(self.tapes) if t.addresses_output)

    @property
    def input_dims(self) -> tuple[int, ...]:
        return tuple(self.tapes[i].dim for i in self.input_tapes)

    @property
    def output_dims(self) -> tuple[int, ...]:
        return tuple(self.tapes[i].dim for i in self.output_tapes)


def blank_tape(cells: int) -> tuple[int, ...]:
    return (ENDMARK,) + (SYM_0,) * cells


def encode_value(value: int, cells: int) -> tuple[int, ...]:
    """Tape vector holding ``value`` little-endian (cell 1 = low-order bit)."""
    if not (0 <= value < (1 << cells)):
        raise MachineError(f"value {value} does not fit in {cells} cells")
    return (ENDMARK,) + tuple((value >> j) & 1 for j in range(cells))


def decode_tape(tape: tuple[int, ...]) -> int:
    """Unsigned value of a tape's bit cells, little-endian."""
    return sum(bit << j for j, bit in enumerate(tape[1:]))


def make_output_config(machine: MachineSpec, coords: tuple[int, ...]) -> Configuration:
    """Initial configuration for the output bit at ``coords``.

    Output-index tapes hold the coordinates, every other tape is zero, all
    heads scan the endmark.
    """
    out = machine.output_tapes
    if len(coords) != len(out):
        raise MachineError(
            f"expected {len(out)} output coordinates, got {len(coords)}"
        )
    tapes = [blank_tape(t.cells) for t in machine.tapes]
    for c, i in zip(coords, out):
        spec = machine.tapes[i]
        if not (0 <= c < spec.dim):
            raise MachineError(f"output coordinate {c} out of range for dim {spec.dim}")
        tapes[i] = encode_value(c, spec.cells)
    return Configuration(OUTPUT_STATE, tuple(tapes), (0,) * len(machine.tapes))


def decode_index(machine: MachineSpec, config: Configuration, role: str) -> tuple[int, ...]:
    """Coordinates held on the tapes of ``role``, in tape index order."""
    if role == ROLE_INPUT:
        which = machine.input_tapes
    elif role == ROLE_OUTPUT:
        which = machine.output_tapes
    else:
        raise MachineError(f"cannot decode role {role!r}")
    return tuple(decode_tape(config.tapes[i]) for i in which)


def scanned_symbols(config: Configuration) -> tuple[int, ...]:
    return tuple(t[h] for t, h in zip(config.tapes, config.heads))


def leaf_kind(machine: MachineSpec, state: int) -> str | None:
    """Leaf classification of a state, or None for interior states.

    ptm: the input state is the only leaf.  atm: states whose gate type is
    true/false/read/read-inverted cannot transition out.
    """
    if machine.flavor == FLAVOR_PTM:
        return "input" if state == INPUT_STATE else None
    gate = machine.gate_types[state]
    return gate if gate in LEAF_GATES else None


def matching_instructions(
    machine: MachineSpec, config: Configuration
) -> list[tuple[int, Instruction]]:
    """Program lines applicable in ``config``, in program order.

    Leaf configurations match nothing regardless of the program.
    """
    if leaf_kind(machine, config.state) is not None:
        return []
    scanned = scanned_symbols(config)
    return [
        (i, ins)
        for i, ins in enumerate(machine.program)
        if ins.from_state == config.state and ins.reads == scanned
    ]


def move_head(pos: int, move: str, cells: int) -> int:
    """Circular head movement over ``cells + 1`` positions."""
    if move == MOVE_RIGHT:
        return (pos + 1) % (cells + 1)
    if move == MOVE_LEFT:
        return (pos - 1) % (cells + 1)
    return pos


def write_symbol(old: int, new: int) -> int:
    """Overwrite a cell; changes between endmark and bit are ignored."""
    if (old == ENDMARK) != (new == ENDMARK):
        return old
    return new


def apply_instruction(config: Configuration, ins: Instruction) -> Configuration:
    """Successor configuration: write under each head, then move each head."""
    tapes = []
    heads = []
    for tape, head, wr, mv in zip(config.tapes, config.heads, ins.writes, ins.moves):
        sym = write_symbol(tape[head], wr)
        if sym != tape[head]:
            tape = tape[:head] + (sym,) + tape[head + 1:]
        tapes.append(tape)
        heads.append(move_head(head, mv, len(tape) - 1))
    return Configuration(ins.to_state, tuple(tapes), tuple(heads))


def all_configurations(machine: MachineSpec) -> Iterator[Configuration]:
    """Every syntactically possible configuration (small machines only)."""
    import itertools

    per_tape = []
    for t in machine.tapes:
        contents = [
            (ENDMARK,) + bits
            for bits in itertools.product((SYM_0, SYM_1), repeat=t.cells)
        ]
        per_tape.append([(c, h) for c in contents for h in range(t.cells + 1)])
    for state in range(machine.num_states):
        for combo in itertools.product(*per_tape):
            tapes = tuple(c for c, _ in combo)
            heads = tuple(h for _, h in combo)
            yield Configuration(state, tapes, heads)
