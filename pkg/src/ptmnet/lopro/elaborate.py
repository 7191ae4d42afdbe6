"""Elaboration: turn a parsed program into a flat high-level machine.

A high-level machine keeps the tape model of the low-level form but its
instructions carry an arbitrary predicate over the configuration and a
list of branches whose transformers are step sequences.  Function calls
are inlined with fresh state ids; local tapes are allocated per call and
recycled (same cell count, non-overlapping lifetime) once a call's body
has been fully inlined.

Rule groups use first-match dispatch, compiled away by conjoining each
rule's predicate with the negations of the predicates before it.  The
guard ``t >= <constant>`` is expanded into explicit scan states that walk
the head from the endmark across the cells, most significant first, so
the same construct works both for direct building and for lowering.

Every branch that leaves an inlined call restores the call's guarantees:
its local tapes are zeroed with parked heads, and every other tape the
call touched gets its head parked.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from ..builder import OP_PERCEPTRON, Limits, Network, build_program
from ..machines import (
    ENDMARK,
    INPUT_STATE,
    OUTPUT_STATE,
    SYM_0,
    SYM_1,
    Configuration,
    TapeSpec,
    blank_tape,
    decode_tape,
    encode_value,
    index_cells,
    move_head,
    write_symbol,
)
from .parser import (
    AssignStmt,
    EBin,
    EEnd,
    EName,
    ENum,
    LoproError,
    MoveStmt,
    PAnd,
    PCmp,
    PIsEnd,
    PNot,
    POr,
    Program,
    PScan,
    Rule,
    WriteStmt,
    parse,
    parse_module,
)

HL_FORMAT = "hlptm v1"

_SYM_BY_TEXT = {"0": SYM_0, "1": SYM_1, "#": ENDMARK}


# --- predicate IR ------------------------------------------------------------

@dataclass(frozen=True)
class PredTrue:
    def evaluate(self, config: Configuration) -> bool:
        return True


@dataclass(frozen=True)
class IsEnd:
    tape: int

    def evaluate(self, config: Configuration) -> bool:
        return config.tapes[self.tape][config.heads[self.tape]] == ENDMARK


@dataclass(frozen=True)
class SymEq:
    tape: int
    sym: int

    def evaluate(self, config: Configuration) -> bool:
        return config.tapes[self.tape][config.heads[self.tape]] == self.sym


_CMP = {
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


@dataclass(frozen=True)
class CmpConst:
    tape: int
    op: str
    value: int

    def evaluate(self, config: Configuration) -> bool:
        return _CMP[self.op](decode_tape(config.tapes[self.tape]), self.value)


@dataclass(frozen=True)
class CmpTape:
    tape: int
    op: str
    other: int

    def evaluate(self, config: Configuration) -> bool:
        return _CMP[self.op](
            decode_tape(config.tapes[self.tape]),
            decode_tape(config.tapes[self.other]),
        )


@dataclass(frozen=True)
class NotP:
    item: object

    def evaluate(self, config: Configuration) -> bool:
        return not self.item.evaluate(config)


@dataclass(frozen=True)
class AndP:
    items: tuple

    def evaluate(self, config: Configuration) -> bool:
        return all(p.evaluate(config) for p in self.items)


@dataclass(frozen=True)
class OrP:
    items: tuple

    def evaluate(self, config: Configuration) -> bool:
        return any(p.evaluate(config) for p in self.items)


# --- step IR -----------------------------------------------------------------

@dataclass(frozen=True)
class Write:
    tape: int
    sym: int

    def apply(self, tapes: list, heads: list) -> None:
        t = list(tapes[self.tape])
        pos = heads[self.tape]
        t[pos] = write_symbol(t[pos], self.sym)
        tapes[self.tape] = tuple(t)


@dataclass(frozen=True)
class Move:
    tape: int
    direction: str  # L | R

    def apply(self, tapes: list, heads: list) -> None:
        cells = len(tapes[self.tape]) - 1
        heads[self.tape] = move_head(heads[self.tape], self.direction, cells)


@dataclass(frozen=True)
class SetConst:
    tape: int
    value: int

    def apply(self, tapes: list, heads: list) -> None:
        tapes[self.tape] = encode_value(self.value, len(tapes[self.tape]) - 1)
        heads[self.tape] = 0


@dataclass(frozen=True)
class CopyTape:
    dst: int
    src: int

    def apply(self, tapes: list, heads: list) -> None:
        tapes[self.dst] = tapes[self.src]
        heads[self.dst] = 0
        heads[self.src] = 0


@dataclass(frozen=True)
class ParkHead:
    tape: int

    def apply(self, tapes: list, heads: list) -> None:
        heads[self.tape] = 0


def apply_steps(config: Configuration, to_state: int, steps) -> Configuration:
    tapes = list(config.tapes)
    heads = list(config.heads)
    for step in steps:
        step.apply(tapes, heads)
    return Configuration(to_state, tuple(tapes), tuple(heads))


# --- the machine -------------------------------------------------------------

@dataclass(frozen=True)
class HLBranch:
    to_state: int
    steps: tuple
    dw: int
    db: int


@dataclass(frozen=True)
class HLInstruction:
    from_state: int
    pred: object
    branches: tuple[HLBranch, ...]


@dataclass(frozen=True)
class HighLevelMachine:
    tapes: tuple[TapeSpec, ...]
    num_states: int
    instructions: tuple[HLInstruction, ...]
    state_names: tuple[str, ...]

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

    def by_state(self) -> list[list[HLInstruction]]:
        grouped: list[list[HLInstruction]] = [[] for _ in range(self.num_states)]
        for ins in self.instructions:
            grouped[ins.from_state].append(ins)
        return grouped


# --- elaboration scopes ------------------------------------------------------

@dataclass(frozen=True)
class _TapeBinding:
    index: int
    end: int


@dataclass(frozen=True)
class _StateBinding:
    id: int


class _Scope:
    def __init__(self, parent: "_Scope | None", isolated: bool, label: str):
        self.parent = parent
        self.isolated = isolated
        self.label = label
        self.names: dict[str, object] = {}
        self.local_tapes: list[int] = []
        self.touched: set[int] = set()

    def lookup(self, name: str):
        scope: _Scope | None = self
        while scope is not None:
            if name in scope.names:
                return scope.names[name]
            scope = None if scope.isolated else scope.parent
        return None


class Elaborator:
    def __init__(self, program: Program, const_overrides: dict[str, int] | None = None,
                 recycle: bool = True):
        if program.machine is None:
            raise LoproError("missing machine block", program.filename, 1, 1)
        self.program = program
        self.filename = program.filename
        self.recycle = recycle
        self.consts = self._eval_consts(const_overrides or {})
        self.tapes: list[TapeSpec] = []
        self.state_names: list[str] = []
        self.state_scope: list[_Scope] = []
        # mutable instruction records: [from, pred, [[to, steps, dw, db, exits]]]
        self.instrs: list[list] = []
        self.pool: dict[int, list[int]] = {}
        self.call_stack: list[str] = []
        self.inst_counter = 0
        self.true_id: int | None = None
        self.false_id: int | None = None

    def err(self, message: str, pos: tuple[int, int] | None = None):
        line, col = pos if pos else (0, 0)
        raise LoproError(message, self.filename, line, col)

    # -- constants --

    def _eval_consts(self, overrides: dict[str, int]) -> dict[str, int]:
        env: dict[str, int] = {}
        for name, expr, line, col in self.program.consts:
            if name in overrides:
                env[name] = overrides[name]
            else:
                env[name] = self._const_expr(expr, env, (line, col))
        unknown = set(overrides) - set(env)
        if unknown:
            known = ", ".join(n for n, *_ in self.program.consts) or "none"
            raise LoproError(
                f"unknown constant override {sorted(unknown)[0]!r}"
                f" (declared constants: {known})",
                self.filename, 1, 1,
            )
        return env

    def _const_expr(self, expr, env: dict[str, int], pos) -> int:
        if isinstance(expr, ENum):
            return expr.value
        if isinstance(expr, EName):
            if expr.name not in env:
                self.err(f"unknown constant {expr.name!r}", pos)
            return env[expr.name]
        if isinstance(expr, EEnd):
            self.err("end() is not allowed in constant declarations", pos)
        if isinstance(expr, EBin):
            a = self._const_expr(expr.left, env, pos)
            b = self._const_expr(expr.right, env, pos)
            return a + b if expr.op == "+" else a - b if expr.op == "-" else a * b
        self.err("bad expression", pos)

    def eval_expr(self, expr, scope: _Scope, pos) -> int:
        if isinstance(expr, ENum):
            return expr.value
        if isinstance(expr, EName):
            if expr.name in self.consts:
                return self.consts[expr.name]
            if scope.lookup(expr.name) is not None:
                self.err(f"{expr.name!r} is not a constant", pos)
            self.err(f"unknown constant {expr.name!r}", pos)
        if isinstance(expr, EEnd):
            b = scope.lookup(expr.tape)
            if not isinstance(b, _TapeBinding):
                self.err(f"end() needs a tape, got {expr.tape!r}", pos)
            return b.end
        if isinstance(expr, EBin):
            a = self.eval_expr(expr.left, scope, pos)
            b = self.eval_expr(expr.right, scope, pos)
            return a + b if expr.op == "+" else a - b if expr.op == "-" else a * b
        self.err("bad expression", pos)

    # -- allocation --

    def bind(self, scope: _Scope, name: str, binding, pos) -> None:
        if name in scope.names:
            self.err(f"duplicate name {name!r}", pos)
        scope.names[name] = binding

    def new_state(self, name: str, scope: _Scope) -> int:
        sid = len(self.state_names)
        self.state_names.append(name)
        self.state_scope.append(scope)
        return sid

    def alloc_work(self, end: int, pos) -> int:
        if end < 1:
            self.err(f"tape end must be positive, got {end}", pos)
        cells = index_cells(end)
        free = self.pool.get(cells)
        if self.recycle and free:
            return free.pop()
        self.tapes.append(TapeSpec.work(cells))
        return len(self.tapes) - 1

    def ensure_false(self) -> int:
        if self.false_id is None:
            self.false_id = self.new_state("__false", self.root)
        return self.false_id

    def ensure_true(self) -> int:
        if self.true_id is None:
            self.true_id = self.new_state("__true", self.root)
            f = self.ensure_false()
            self.instrs.append([self.true_id, PredTrue(), [[f, [], 0, 2, None]]])
        return self.true_id

    # -- main entry --

    def elaborate(self) -> HighLevelMachine:
        mb = self.program.machine
        root = _Scope(None, isolated=False, label="machine")
        self.root = root

        input_decl = mb.input_state
        output_decl = mb.output_state
        if output_decl is None:
            self.err("machine block needs an output state", (mb.line, mb.col))
        input_names = set(input_decl[1]) if input_decl else set()
        output_names = set(output_decl[1])
        for io_decl, what in ((input_decl, "input"), (output_decl, "output")):
            if io_decl and len(set(io_decl[1])) != len(io_decl[1]):
                self.err(f"duplicate tape in {what} state declaration",
                         (mb.line, mb.col))

        declared = {d.name for d in mb.tapes}
        for name in (input_names | output_names) - declared:
            self.err(f"unknown tape {name!r} in input/output state declaration",
                     (mb.line, mb.col))

        for decl in mb.tapes:
            pos = (decl.line, decl.col)
            end = self.eval_expr(decl.end_expr, root, pos)
            if end < 1:
                self.err(f"tape end must be positive, got {end}", pos)
            if decl.name in input_names and decl.name in output_names:
                spec = TapeSpec.io_index(end)
            elif decl.name in input_names:
                spec = TapeSpec.input_index(end)
            elif decl.name in output_names:
                spec = TapeSpec.output_index(end)
            else:
                spec = TapeSpec.work(index_cells(end))
            self.tapes.append(spec)
            self.bind(root, decl.name, _TapeBinding(len(self.tapes) - 1, end), pos)

        out_name = output_decl[0]
        in_name = input_decl[0] if input_decl else "__input"
        self.new_state(out_name, root)
        self.new_state(in_name, root)
        pos = (mb.line, mb.col)
        self.bind(root, out_name, _StateBinding(OUTPUT_STATE), pos)
        if input_decl:
            self.bind(root, in_name, _StateBinding(INPUT_STATE), pos)
        for name in mb.states:
            self.bind(root, name, _StateBinding(self.new_state(name, root)), pos)

        self.compile_rules(mb.rules, root)
        return self._finish()

    def _finish(self) -> HighLevelMachine:
        instructions = []
        for from_state, pred, branches in self.instrs:
            done = []
            for to, steps, dw, db, exits in branches:
                if exits:
                    steps = list(steps) + self._cleanup_steps(exits)
                done.append(HLBranch(to, tuple(steps), dw, db))
            instructions.append(HLInstruction(from_state, pred, tuple(done)))
        return HighLevelMachine(
            tapes=tuple(self.tapes),
            num_states=len(self.state_names),
            instructions=tuple(instructions),
            state_names=tuple(self.state_names),
        )

    def _cleanup_steps(self, exited) -> list:
        steps = []
        zeroed: set[int] = set()
        for scope in exited:
            for t in scope.local_tapes:
                steps.append(SetConst(t, 0))
                zeroed.add(t)
        parks = sorted({t for s in exited for t in s.touched} - zeroed)
        steps.extend(ParkHead(t) for t in parks)
        return steps

    # -- rules --

    def compile_rules(self, rules, scope: _Scope) -> None:
        order: list[int] = []
        groups: dict[int, list[Rule]] = {}
        for rule in rules:
            pos = (rule.line, rule.col)
            b = scope.lookup(rule.lhs)
            if b is None:
                self.err(f"unknown state {rule.lhs!r}", pos)
            if not isinstance(b, _StateBinding):
                self.err(f"{rule.lhs!r} is a tape, not a state", pos)
            if b.id == INPUT_STATE:
                self.err("the input state cannot have rules", pos)
            if self.state_scope[b.id] is not scope:
                self.err(
                    f"rules for {rule.lhs!r} must appear in its declaring scope",
                    pos,
                )
            if b.id not in groups:
                order.append(b.id)
                groups[b.id] = []
            groups[b.id].append(rule)
        for sid in order:
            self.compile_group(sid, groups[sid], scope)

    def compile_group(self, state_id: int, rules: list[Rule], scope: _Scope) -> None:
        negations: list = []
        for idx, rule in enumerate(rules):
            pos = (rule.line, rule.col)
            scan = self._scan_const(rule, scope)
            if scan is not None:
                tape_idx, value = scan
                scope.touched.add(tape_idx)
                cells = self.tapes[tape_idx].cells
                if value <= 0:
                    # always true: final rule of the group
                    branches = self.compile_branches(rule, scope)
                    self.instrs.append(
                        [state_id, _with_context(PredTrue(), negations), branches]
                    )
                    return
                if value >= (1 << cells):
                    # never true: drop the rule
                    continue
                self._expand_scan(state_id, rule, tape_idx, value, negations,
                                  rules[idx + 1:], scope)
                return
            pred = self.compile_pred(rule.when, scope, pos)
            branches = self.compile_branches(rule, scope)
            self.instrs.append(
                [state_id, _with_context(pred, negations), branches]
            )
            if rule.when is None:
                return  # catch-all: later rules are unreachable
            negations.append(pred)

    def _scan_const(self, rule: Rule, scope: _Scope):
        """(tape, constant) when the guard is exactly ``tape >= constant``."""
        when = rule.when
        if not isinstance(when, PCmp) or when.op != ">=":
            return None
        b = scope.lookup(when.tape)
        if not isinstance(b, _TapeBinding):
            self.err(f"comparison needs a tape, got {when.tape!r}",
                     (rule.line, rule.col))
        if isinstance(when.rhs, EName):
            other = scope.lookup(when.rhs.name)
            if isinstance(other, _TapeBinding):
                return None  # tape-vs-tape comparison stays a plain predicate
        value = self.eval_expr(when.rhs, scope, (rule.line, rule.col))
        return b.index, value

    def _expand_scan(self, state_id, rule, tape, value, negations, rest, scope):
        """Compile ``lhs when t >= value = ...`` plus the rules after it.

        Scan states walk t's head from the endmark over the cells, most
        significant bit first (one left move per step, using the circular
        tape).  The first cell differing from the constant decides the
        comparison; all-equal means it holds.  Both outcomes park the head
        again before proceeding.
        """
        cells = self.tapes[tape].cells
        base = self.state_names[state_id]
        entry = self.new_state(f"{base}.cmp", scope)
        geq = self.new_state(f"{base}.cmp_geq", scope)
        less = self.new_state(f"{base}.cmp_less", scope)
        bits = [
            self.new_state(f"{base}.cmp_bit{i}", scope)
            for i in range(cells, 0, -1)
        ]  # bits[0] checks the most significant cell

        self.instrs.append(
            [state_id, _with_context(PredTrue(), negations),
             [[entry, [], 2, 0, None]]]
        )
        left = Move(tape, "L")
        self.instrs.append(
            [entry, IsEnd(tape), [[bits[0], [left], 2, 0, None]]]
        )
        self.instrs.append(
            [entry, NotP(IsEnd(tape)), [[entry, [left], 2, 0, None]]]
        )
        for n, state in enumerate(bits):
            cell = cells - n
            bit = (value >> (cell - 1)) & 1
            cont = bits[n + 1] if n + 1 < len(bits) else geq
            if bit == 1:
                decided, on = less, SymEq(tape, SYM_0)
                onward = SymEq(tape, SYM_1)
            else:
                decided, on = geq, SymEq(tape, SYM_1)
                onward = SymEq(tape, SYM_0)
            self.instrs.append([state, on, [[decided, [], 2, 0, None]]])
            self.instrs.append([state, onward, [[cont, [left], 2, 0, None]]])

        branches = self.compile_branches(rule, scope)
        self.instrs.append([geq, IsEnd(tape), branches])
        self.instrs.append(
            [geq, NotP(IsEnd(tape)), [[geq, [left], 2, 0, None]]]
        )
        if rest:
            after = self.new_state(f"{base}.cmp_else", scope)
            self.instrs.append(
                [less, IsEnd(tape), [[after, [], 2, 0, None]]]
            )
            self.compile_group(after, rest, scope)
        else:
            self.instrs.append(
                [less, IsEnd(tape), [[self.ensure_false(), [], 2, 0, None]]]
            )
        self.instrs.append(
            [less, NotP(IsEnd(tape)), [[less, [left], 2, 0, None]]]
        )

    # -- predicates --

    def compile_pred(self, when, scope: _Scope, pos):
        if when is None:
            return PredTrue()
        if isinstance(when, PIsEnd):
            return IsEnd(self._tape_of(when.tape, scope, pos))
        if isinstance(when, PScan):
            p = SymEq(self._tape_of(when.tape, scope, pos), _SYM_BY_TEXT[when.sym])
            return NotP(p) if when.op == "!=" else p
        if isinstance(when, PCmp):
            t = self._tape_of(when.tape, scope, pos)
            if isinstance(when.rhs, EName):
                other = scope.lookup(when.rhs.name)
                if isinstance(other, _TapeBinding):
                    scope.touched.add(other.index)
                    return CmpTape(t, when.op, other.index)
            return CmpConst(t, when.op, self.eval_expr(when.rhs, scope, pos))
        if isinstance(when, PNot):
            return NotP(self.compile_pred(when.inner, scope, pos))
        if isinstance(when, PAnd):
            return AndP(tuple(self.compile_pred(p, scope, pos) for p in when.items))
        if isinstance(when, POr):
            return OrP(tuple(self.compile_pred(p, scope, pos) for p in when.items))
        self.err("bad predicate", pos)

    def _tape_of(self, name: str, scope: _Scope, pos) -> int:
        b = scope.lookup(name)
        if b is None:
            self.err(f"unknown tape {name!r}", pos)
        if not isinstance(b, _TapeBinding):
            self.err(f"{name!r} is a state, not a tape", pos)
        scope.touched.add(b.index)
        return b.index

    # -- branches --

    def compile_branches(self, rule: Rule, scope: _Scope) -> list:
        out = []
        for i, br in enumerate(rule.branches):
            db = -2 if (rule.combinator == "and" and i > 0) else 0
            out.append(self.compile_branch(br, scope, 2, db))
        return out

    def compile_branch(self, br, scope: _Scope, dw: int, db: int) -> list:
        pos = (br.line, br.col)
        steps = [self.compile_stmt(s, scope, pos) for s in br.stmts]
        target = br.target
        exits = None
        if target.kind == "true":
            tid = self.ensure_true()
        elif target.kind == "false":
            tid = self.ensure_false()
        elif target.kind == "call":
            tid = self.instantiate(target.name, target.args, scope, pos)
        else:
            b = scope.lookup(target.name)
            if b is None:
                self.err(f"unknown state {target.name!r}", pos)
            if not isinstance(b, _StateBinding):
                self.err(f"{target.name!r} is a tape, not a state", pos)
            tid = b.id
            owner = self.state_scope[tid]
            if owner is not scope:
                chain = []
                s = scope
                while s is not None and s is not owner:
                    chain.append(s)
                    s = s.parent
                if s is None:
                    self.err(f"state {target.name!r} is not reachable here", pos)
                exits = tuple(chain)
        return [tid, steps, dw, db, exits]

    def compile_stmt(self, stmt, scope: _Scope, pos):
        if isinstance(stmt, MoveStmt):
            return Move(self._tape_of(stmt.tape, scope, pos), stmt.direction)
        if isinstance(stmt, WriteStmt):
            return Write(self._tape_of(stmt.tape, scope, pos),
                         _SYM_BY_TEXT[stmt.sym])
        if isinstance(stmt, AssignStmt):
            dst = self._tape_of(stmt.tape, scope, pos)
            if isinstance(stmt.rhs, EName):
                b = scope.lookup(stmt.rhs.name)
                if isinstance(b, _TapeBinding):
                    scope.touched.add(b.index)
                    if self.tapes[b.index].cells != self.tapes[dst].cells:
                        self.err(
                            f"cannot copy {stmt.rhs.name!r} "
                            f"({self.tapes[b.index].cells} cells) into "
                            f"{stmt.tape!r} ({self.tapes[dst].cells} cells)",
                            pos,
                        )
                    return CopyTape(dst, b.index)
            value = self.eval_expr(stmt.rhs, scope, pos)
            cells = self.tapes[dst].cells
            if not (0 <= value < (1 << cells)):
                self.err(
                    f"value {value} does not fit tape {stmt.tape!r}"
                    f" ({cells} cells)",
                    pos,
                )
            return SetConst(dst, value)
        self.err("bad statement", pos)

    # -- calls --

    def instantiate(self, name: str, args, scope: _Scope, pos) -> int:
        func = self.program.funcs.get(name)
        if func is None:
            self.err(f"unknown function {name!r}", pos)
        if name in self.call_stack:
            self.err(f"recursive call to function {name!r}", pos)
        if len(args) != len(func.params):
            self.err(
                f"call to {name!r}: expected {len(func.params)} arguments,"
                f" got {len(args)}",
                pos,
            )
        self.inst_counter += 1
        label = f"{name}@{self.inst_counter}"
        child = _Scope(scope, isolated=True, label=label)
        for p, a in zip(func.params, args):
            b = scope.lookup(a)
            if b is None:
                self.err(f"unknown argument {a!r} in call to {name!r}", pos)
            if p.kind == "tape":
                if not isinstance(b, _TapeBinding):
                    self.err(
                        f"call to {name!r}: parameter {p.name!r} is a tape,"
                        f" but {a!r} is a state",
                        pos,
                    )
                if p.end_expr is not None:
                    want = self._const_expr(p.end_expr, self.consts, pos)
                    if want != b.end:
                        self.err(
                            f"call to {name!r}: parameter {p.name!r} expects"
                            f" end {want}, argument {a!r} has end {b.end}",
                            pos,
                        )
            else:
                if not isinstance(b, _StateBinding):
                    self.err(
                        f"call to {name!r}: parameter {p.name!r} is a state,"
                        f" but {a!r} is a tape",
                        pos,
                    )
            self.bind(child, p.name, b, pos)

        self.call_stack.append(name)
        for decl in func.tapes:
            dpos = (decl.line, decl.col)
            end = self.eval_expr(decl.end_expr, child, dpos)
            idx = self.alloc_work(end, dpos)
            self.bind(child, decl.name, _TapeBinding(idx, end), dpos)
            child.local_tapes.append(idx)
        fpos = (func.line, func.col)
        for s in func.states:
            self.bind(child, s, _StateBinding(self.new_state(f"{label}.{s}", child)),
                      fpos)
        self.compile_rules(func.rules, child)
        ret = child.lookup(func.returns)
        if not isinstance(ret, _StateBinding):
            self.err(f"function {name!r} must return a state", fpos)
        self.call_stack.pop()

        if self.recycle:
            for idx in child.local_tapes:
                self.pool.setdefault(self.tapes[idx].cells, []).append(idx)
        scope.touched |= child.touched - set(child.local_tapes)
        return ret.id


def _with_context(pred, negations):
    if not negations:
        return pred
    items = tuple(NotP(n) for n in negations)
    if isinstance(pred, PredTrue):
        return items[0] if len(items) == 1 else AndP(items)
    return AndP((pred,) + items)


# --- use resolution ----------------------------------------------------------

def bundled_source(name: str) -> str | None:
    """Source text of a program shipped with the package, or None."""
    ref = resources.files("ptmnet.lopro").joinpath("programs", f"{name}.lp")
    if ref.is_file():
        return ref.read_text()
    return None


def resolve_uses(program: Program, search_dirs=()) -> Program:
    """Merge constants and functions from every ``use``d module."""
    seen: set[str] = set()
    queue = list(program.uses)
    merged_consts: list = []
    while queue:
        name = queue.pop(0)
        if name in seen:
            continue
        seen.add(name)
        text = None
        filename = f"{name}.lp"
        for d in search_dirs:
            candidate = Path(d) / f"{name}.lp"
            if candidate.is_file():
                text = candidate.read_text()
                filename = str(candidate)
                break
        if text is None:
            text = bundled_source(name)
        if text is None:
            raise LoproError(f"cannot find module {name!r}", program.filename, 1, 1)
        module = parse_module(text, filename)
        if module.machine is not None:
            raise LoproError(
                f"used module {name!r} must not contain a machine block",
                filename, module.machine.line, module.machine.col,
            )
        queue.extend(module.uses)
        merged_consts.extend(module.consts)
        for fname, func in module.funcs.items():
            if fname in program.funcs:
                raise LoproError(
                    f"duplicate function {fname!r} (also defined in {name!r})",
                    program.filename, 1, 1,
                )
            program.funcs[fname] = func
    program.consts = merged_consts + program.consts
    return program


def elaborate(program: Program, const_overrides: dict[str, int] | None = None,
              recycle: bool = True) -> HighLevelMachine:
    return Elaborator(program, const_overrides, recycle).elaborate()


def compile_source(text: str, filename: str = "<source>",
                   const_overrides: dict[str, int] | None = None,
                   recycle: bool = True, search_dirs=()) -> HighLevelMachine:
    """Parse, resolve uses, and elaborate a program in one go."""
    program = parse(text, filename)
    resolve_uses(program, search_dirs)
    return elaborate(program, const_overrides, recycle)


def load_source(path, const_overrides: dict[str, int] | None = None,
                recycle: bool = True) -> HighLevelMachine:
    p = Path(path)
    return compile_source(
        p.read_text(), str(p), const_overrides, recycle,
        search_dirs=(p.parent,),
    )


# --- building ----------------------------------------------------------------

class _HighLevelProgram:
    """Adapter exposing a high-level machine to the generic traversal."""

    flavor = "hlptm"

    def __init__(self, hlm: HighLevelMachine):
        self.hlm = hlm
        self.input_dims = hlm.input_dims
        self.output_dims = hlm.output_dims
        self._input_tapes = hlm.input_tapes
        self._by_state = hlm.by_state()

    def output_config(self, coords) -> Configuration:
        out = self.hlm.output_tapes
        tapes = [blank_tape(t.cells) for t in self.hlm.tapes]
        for c, i in zip(coords, out):
            tapes[i] = encode_value(c, self.hlm.tapes[i].cells)
        return Configuration(OUTPUT_STATE, tuple(tapes), (0,) * len(tapes))

    def leaf_payload(self, config: Configuration):
        if config.state == INPUT_STATE:
            coords = tuple(decode_tape(config.tapes[i]) for i in self._input_tapes)
            return ("input", coords, False)
        return None

    def interior_op(self, config: Configuration) -> str:
        return OP_PERCEPTRON

    def expand(self, config: Configuration):
        for ins in self._by_state[config.state]:
            if ins.pred.evaluate(config):
                return [
                    (apply_steps(config, b.to_state, b.steps), b.dw, b.db)
                    for b in ins.branches
                ]
        return []


def build_highlevel(hlm: HighLevelMachine, limits: Limits = Limits()) -> Network:
    """Build the gate network of a high-level machine directly."""
    return build_program(_HighLevelProgram(hlm), limits)


# --- serialization -----------------------------------------------------------

def _pred_obj(p) -> dict:
    if isinstance(p, PredTrue):
        return {"op": "true"}
    if isinstance(p, IsEnd):
        return {"op": "is_end", "tape": p.tape}
    if isinstance(p, SymEq):
        return {"op": "sym", "tape": p.tape, "sym": p.sym}
    if isinstance(p, CmpConst):
        return {"op": "cmp-const", "tape": p.tape, "cmp": p.op, "value": p.value}
    if isinstance(p, CmpTape):
        return {"op": "cmp-tape", "tape": p.tape, "cmp": p.op, "other": p.other}
    if isinstance(p, NotP):
        return {"op": "not", "item": _pred_obj(p.item)}
    if isinstance(p, AndP):
        return {"op": "and", "items": [_pred_obj(i) for i in p.items]}
    if isinstance(p, OrP):
        return {"op": "or", "items": [_pred_obj(i) for i in p.items]}
    raise ValueError(f"unknown predicate {p!r}")


def _pred_from(obj: dict):
    op = obj["op"]
    if op == "true":
        return PredTrue()
    if op == "is_end":
        return IsEnd(obj["tape"])
    if op == "sym":
        return SymEq(obj["tape"], obj["sym"])
    if op == "cmp-const":
        return CmpConst(obj["tape"], obj["cmp"], obj["value"])
    if op == "cmp-tape":
        return CmpTape(obj["tape"], obj["cmp"], obj["other"])
    if op == "not":
        return NotP(_pred_from(obj["item"]))
    if op == "and":
        return AndP(tuple(_pred_from(i) for i in obj["items"]))
    if op == "or":
        return OrP(tuple(_pred_from(i) for i in obj["items"]))
    raise ValueError(f"unknown predicate op {op!r}")


def _step_obj(s) -> dict:
    if isinstance(s, Write):
        return {"op": "write", "tape": s.tape, "sym": s.sym}
    if isinstance(s, Move):
        return {"op": "move", "tape": s.tape, "dir": s.direction}
    if isinstance(s, SetConst):
        return {"op": "set", "tape": s.tape, "value": s.value}
    if isinstance(s, CopyTape):
        return {"op": "copy", "dst": s.dst, "src": s.src}
    if isinstance(s, ParkHead):
        return {"op": "park", "tape": s.tape}
    raise ValueError(f"unknown step {s!r}")


def _step_from(obj: dict):
    op = obj["op"]
    if op == "write":
        return Write(obj["tape"], obj["sym"])
    if op == "move":
        return Move(obj["tape"], obj["dir"])
    if op == "set":
        return SetConst(obj["tape"], obj["value"])
    if op == "copy":
        return CopyTape(obj["dst"], obj["src"])
    if op == "park":
        return ParkHead(obj["tape"])
    raise ValueError(f"unknown step op {op!r}")


def format_highlevel(hlm: HighLevelMachine) -> str:
    obj = {
        "format": HL_FORMAT,
        "num_states": hlm.num_states,
        "state_names": list(hlm.state_names),
        "tapes": [
            {"role": t.role, "cells": t.cells, "dim": t.dim} for t in hlm.tapes
        ],
        "instructions": [
            {
                "from": ins.from_state,
                "when": _pred_obj(ins.pred),
                "branches": [
                    {
                        "to": b.to_state,
                        "dw": b.dw,
                        "db": b.db,
                        "steps": [_step_obj(s) for s in b.steps],
                    }
                    for b in ins.branches
                ],
            }
            for ins in hlm.instructions
        ],
    }
    return json.dumps(obj, indent=1) + "\n"


def parse_highlevel(text: str) -> HighLevelMachine:
    obj = json.loads(text)
    if obj.get("format") != HL_FORMAT:
        raise ValueError(f"expected format {HL_FORMAT!r}, got {obj.get('format')!r}")
    tapes = tuple(
        TapeSpec(t["role"], t["cells"], t["dim"]) for t in obj["tapes"]
    )
    instructions = tuple(
        HLInstruction(
            ins["from"],
            _pred_from(ins["when"]),
            tuple(
                HLBranch(
                    b["to"],
                    tuple(_step_from(s) for s in b["steps"]),
                    b["dw"],
                    b["db"],
                )
                for b in ins["branches"]
            ),
        )
        for ins in obj["instructions"]
    )
    return HighLevelMachine(
        tapes=tapes,
        num_states=obj["num_states"],
        instructions=instructions,
        state_names=tuple(obj["state_names"]),
    )
