"""Plain-text serialization of machines and genotypes.

Format, one item per line, whitespace separated::

    ptm v1                      (or: atm v1)
    states 4
    tape 0 input-index dim 6
    tape 1 work cells 2
    gate 0 and                  (atm only: one line per state)
    instr 0 # # -> 2 # # R N 1 -1

Symbols are written 0, 1, #; moves L, N, R.  ptm instructions end with the
differential weight and bias (each -1 or 1); atm instructions omit them.
Instruction lines appear in program order.  Lines whose first non-blank
character is ``#`` are comments.  A tape that both reads input and
addresses output coordinates is written as two ``tape`` lines with the
same index (one input-index, one output-index).
"""

from __future__ import annotations

from .machines import (
    FLAVOR_ATM,
    FLAVOR_PTM,
    GATE_TYPES,
    MOVES,
    ROLE_INPUT,
    ROLE_IO,
    ROLE_OUTPUT,
    ROLE_WORK,
    SYMBOL_TEXT,
    TEXT_SYMBOL,
    Instruction,
    MachineError,
    MachineSpec,
    TapeSpec,
    index_cells,
)


class FormatError(ValueError):
    """Malformed machine text; carries the offending location."""

    def __init__(self, filename: str, line: int, message: str):
        super().__init__(f"{filename}:{line}: {message}")
        self.filename = filename
        self.line = line


def parse_machine(text: str, filename: str = "<machine>") -> MachineSpec:
    flavor = None
    num_states = None
    tape_roles: dict[int, dict] = {}
    gates: dict[int, str] = {}
    program: list[Instruction] = []

    def fail(lineno, msg):
        raise FormatError(filename, lineno, msg)

    lines = text.splitlines()
    for lineno, raw in enumerate(lines, start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        tok = stripped.split()
        if flavor is None:
            if len(tok) != 2 or tok[0] not in (FLAVOR_PTM, FLAVOR_ATM) or tok[1] != "v1":
                fail(lineno, f"expected 'ptm v1' or 'atm v1' header, got {stripped!r}")
            flavor = tok[0]
            continue
        kind = tok[0]
        if kind == "states":
            if num_states is not None:
                fail(lineno, "duplicate states line")
            if len(tok) != 2 or not tok[1].isdigit():
                fail(lineno, "expected 'states <count>'")
            num_states = int(tok[1])
        elif kind == "tape":
            if len(tok) != 5 or not tok[1].isdigit() or not tok[4].isdigit():
                fail(lineno, "expected 'tape <idx> <role> <cells|dim> <n>'")
            idx = int(tok[1])
            role, measure, n = tok[2], tok[3], int(tok[4])
            if role == ROLE_WORK:
                if measure != "cells":
                    fail(lineno, "work tapes are sized in cells")
                entry = {"role": ROLE_WORK, "cells": n, "dim": 0}
            elif role in (ROLE_INPUT, ROLE_OUTPUT):
                if measure != "dim":
                    fail(lineno, "index tapes are sized by dim")
                entry = {"role": role, "cells": index_cells(n), "dim": n}
            else:
                fail(lineno, f"unknown tape role {role!r}")
            prev = tape_roles.get(idx)
            if prev is None:
                tape_roles[idx] = entry
            else:
                # A second line for the same index merges the two index
                # roles into one shared coordinate tape.
                roles = {prev["role"], entry["role"]}
                if roles != {ROLE_INPUT, ROLE_OUTPUT} or prev["dim"] != entry["dim"]:
                    fail(lineno, f"conflicting redefinition of tape {idx}")
                prev["role"] = ROLE_IO
        elif kind == "gate":
            if len(tok) != 3 or not tok[1].isdigit():
                fail(lineno, "expected 'gate <state> <type>'")
            if tok[2] not in GATE_TYPES:
                fail(lineno, f"unknown gate type {tok[2]!r}")
            if int(tok[1]) in gates:
                fail(lineno, f"duplicate gate line for state {tok[1]}")
            gates[int(tok[1])] = tok[2]
        elif kind == "instr":
            k = len(tape_roles)
            want = 1 + 1 + k + 1 + 1 + k + k + (2 if flavor == FLAVOR_PTM else 0)
            if len(tok) != want:
                fail(lineno, f"expected {want} tokens on instr line, got {len(tok)}")
            pos = 1
            try:
                from_state = int(tok[pos]); pos += 1
                reads = tuple(TEXT_SYMBOL[s] for s in tok[pos:pos + k]); pos += k
                if tok[pos] != "->":
                    fail(lineno, "expected '->' between precondition and action")
                pos += 1
                to_state = int(tok[pos]); pos += 1
                writes = tuple(TEXT_SYMBOL[s] for s in tok[pos:pos + k]); pos += k
                moves = tuple(tok[pos:pos + k]); pos += k
                if any(m not in MOVES for m in moves):
                    fail(lineno, "moves must be L, N, or R")
                if flavor == FLAVOR_PTM:
                    dw, db = int(tok[pos]), int(tok[pos + 1])
                else:
                    dw, db = 1, 1
            except (KeyError, ValueError):
                fail(lineno, f"malformed instr line: {stripped!r}")
            program.append(Instruction(from_state, reads, to_state, writes, moves, dw, db))
        else:
            fail(lineno, f"unknown directive {kind!r}")

    if flavor is None:
        raise FormatError(filename, max(len(lines), 1), "empty machine file")
    if num_states is None:
        raise FormatError(filename, max(len(lines), 1), "missing states line")
    if sorted(tape_roles) != list(range(len(tape_roles))):
        raise FormatError(filename, max(len(lines), 1), "tape indices must be dense from 0")
    tapes = tuple(
        TapeSpec(tape_roles[i]["role"], tape_roles[i]["cells"], tape_roles[i]["dim"])
        for i in range(len(tape_roles))
    )
    gate_types = None
    if flavor == FLAVOR_ATM:
        if sorted(gates) != list(range(num_states)):
            raise FormatError(
                filename, max(len(lines), 1), "atm machines need one gate line per state"
            )
        gate_types = tuple(gates[i] for i in range(num_states))
    try:
        return MachineSpec(flavor, num_states, tapes, tuple(program), gate_types)
    except MachineError as exc:
        raise FormatError(filename, max(len(lines), 1), str(exc))


def format_machine(machine: MachineSpec) -> str:
    lines = [f"{machine.flavor} v1", f"states {machine.num_states}"]
    for i, t in enumerate(machine.tapes):
        if t.role == ROLE_WORK:
            lines.append(f"tape {i} work cells {t.cells}")
        elif t.role == ROLE_IO:
            lines.append(f"tape {i} input-index dim {t.dim}")
            lines.append(f"tape {i} output-index dim {t.dim}")
        else:
            lines.append(f"tape {i} {t.role} dim {t.dim}")
    if machine.flavor == FLAVOR_ATM:
        for s, g in enumerate(machine.gate_types):
            lines.append(f"gate {s} {g}")
    for ins in machine.program:
        parts = ["instr", str(ins.from_state)]
        parts += [SYMBOL_TEXT[s] for s in ins.reads]
        parts.append("->")
        parts.append(str(ins.to_state))
        parts += [SYMBOL_TEXT[s] for s in ins.writes]
        parts += list(ins.moves)
        if machine.flavor == FLAVOR_PTM:
            parts += [str(ins.dw), str(ins.db)]
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def load_machine(path: str) -> MachineSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_machine(fh.read(), filename=path)


def save_machine(machine: MachineSpec, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_machine(machine))
