"""Lowering: expand a high-level machine into raw instruction genes.

Each high-level instruction becomes a block of plain instructions.  The
predicate is decomposed into pairwise-disjoint products of per-tape
scanned-symbol sets (value comparisons do not survive elaboration in the
supported subset and are rejected here).  A branch with differentials
(dw, db) becomes max(|dw|, |db|) duplicate genes per read combination
whose unit weights and biases sum back to (dw, db).

Multi-step transformers cannot ride on one gene, so the remaining work
continues in fresh states: plain write/move micro steps become single
hops, while head parking, constant stores, and tape copies become small
scan loops guarded by the endmark.  Every continuation gene is a
pass-through pair (weights +1/+1, biases +1/-1), which keeps the chain
transparent to the logic.
"""

from __future__ import annotations

import itertools

from ..machines import (
    ENDMARK,
    FLAVOR_PTM,
    SYM_0,
    SYM_1,
    Instruction,
    MachineSpec,
)
from .elaborate import (
    AndP,
    CmpConst,
    CmpTape,
    CopyTape,
    HighLevelMachine,
    IsEnd,
    Move,
    NotP,
    OrP,
    ParkHead,
    PredTrue,
    SetConst,
    SymEq,
    Write,
)

FULL = frozenset((SYM_0, SYM_1, ENDMARK))


class LowerError(ValueError):
    """A high-level construct outside the lowerable subset."""


# --- predicate decomposition ---------------------------------------------

def _subtract(p: tuple, q: tuple) -> list[tuple]:
    """Disjoint products covering p minus q."""
    k = len(p)
    if any(not (p[i] & q[i]) for i in range(k)):
        return [p]
    out = []
    for i in range(k):
        rest = p[i] - q[i]
        if rest:
            out.append(
                tuple(
                    (p[j] & q[j]) if j < i else rest if j == i else p[j]
                    for j in range(k)
                )
            )
    return out


def _disjoint_union(lists: list[list[tuple]]) -> list[tuple]:
    result: list[tuple] = []
    for products in lists:
        for p in products:
            pieces = [p]
            for q in result:
                pieces = [r for piece in pieces for r in _subtract(piece, q)]
            result.extend(pieces)
    return result


def pred_products(pred, k: int, where: str) -> list[tuple]:
    """Disjoint per-tape symbol-set products equivalent to the predicate."""
    if isinstance(pred, PredTrue):
        return [(FULL,) * k]
    if isinstance(pred, IsEnd):
        return [_pin(k, pred.tape, frozenset((ENDMARK,)))]
    if isinstance(pred, SymEq):
        return [_pin(k, pred.tape, frozenset((pred.sym,)))]
    if isinstance(pred, (CmpConst, CmpTape)):
        raise LowerError(
            f"{where}: value comparison ({pred.op}) cannot be lowered; only"
            " scanned-symbol and end-of-tape tests are supported"
        )
    if isinstance(pred, NotP):
        inner = pred_products(pred.item, k, where)
        result = [(FULL,) * k]
        for q in inner:
            result = [r for p in result for r in _subtract(p, q)]
        return result
    if isinstance(pred, AndP):
        result = [(FULL,) * k]
        for item in pred.items:
            part = pred_products(item, k, where)
            merged = []
            for p in result:
                for q in part:
                    sets = tuple(p[i] & q[i] for i in range(k))
                    if all(sets):
                        merged.append(sets)
            result = merged
        return result
    if isinstance(pred, OrP):
        return _disjoint_union([pred_products(i, k, where) for i in pred.items])
    raise LowerError(f"{where}: unknown predicate {pred!r}")


def _pin(k: int, tape: int, syms: frozenset) -> tuple:
    return tuple(syms if i == tape else FULL for i in range(k))


# --- transformer decomposition ---------------------------------------------

def _stages(steps, cells_of) -> tuple:
    """Split a step sequence into micro hops and scan-loop stages.

    A micro stage carries at most one write and one move per tape, with
    writes strictly before moves, matching what one gene can express.
    """
    stages: list[tuple] = []
    writes: dict[int, int] = {}
    moves: dict[int, str] = {}

    def flush():
        nonlocal writes, moves
        if writes or moves:
            stages.append(
                ("micro", tuple(sorted(writes.items())), tuple(sorted(moves.items())))
            )
            writes, moves = {}, {}

    for step in steps:
        if isinstance(step, Write):
            if step.tape in writes or step.tape in moves:
                flush()
            writes[step.tape] = step.sym
        elif isinstance(step, Move):
            if step.tape in moves:
                flush()
            moves[step.tape] = step.direction
        elif isinstance(step, ParkHead):
            flush()
            stages.append(("park", step.tape))
        elif isinstance(step, SetConst):
            flush()
            stages.append(("park", step.tape))
            stages.append(("micro", (), ((step.tape, "R"),)))
            for j in range(1, cells_of(step.tape) + 1):
                bit = SYM_1 if (step.value >> (j - 1)) & 1 else SYM_0
                stages.append(("micro", ((step.tape, bit),), ((step.tape, "R"),)))
        elif isinstance(step, CopyTape):
            flush()
            stages.append(("park", step.dst))
            stages.append(("park", step.src))
            stages.append(("copy", step.dst, step.src))
        else:
            raise LowerError(f"unknown step {step!r}")
    flush()
    return tuple(stages)


# --- main ---------------------------------------------------------------

def lower(hlm: HighLevelMachine) -> MachineSpec:
    """Expand a high-level machine into an equivalent raw machine."""
    k = len(hlm.tapes)
    cells = [t.cells for t in hlm.tapes]
    num_states = hlm.num_states
    state_names = list(hlm.state_names)
    genes: list[Instruction] = []
    chain_memo: dict[tuple, int] = {}

    def fresh(tag: str) -> int:
        nonlocal num_states
        sid = num_states
        num_states += 1
        state_names.append(f"__{tag}{sid}")
        return sid

    def combos(pinned: dict[int, int]):
        per_tape = [
            (pinned[i],) if i in pinned else (SYM_0, SYM_1, ENDMARK)
            for i in range(k)
        ]
        return itertools.product(*per_tape)

    def pass_pair(src, reads, writes, moves, dst):
        genes.append(Instruction(src, reads, dst, writes, moves, 1, 1))
        genes.append(Instruction(src, reads, dst, writes, moves, 1, -1))

    def chain(stages: tuple, final: int) -> int:
        """State executing the stages and then behaving as ``final``."""
        if not stages:
            return final
        key = (stages, final)
        if key in chain_memo:
            return chain_memo[key]
        nxt = chain(stages[1:], final)
        head = stages[0]
        if head[0] == "micro":
            sid = fresh("hop")
            wmap, mmap = dict(head[1]), dict(head[2])
            for reads in combos({}):
                writes = tuple(wmap.get(i, reads[i]) for i in range(k))
                moves = tuple(mmap.get(i, "N") for i in range(k))
                pass_pair(sid, reads, writes, moves, nxt)
        elif head[0] == "park":
            t = head[1]
            sid = fresh("park")
            still = ("N",) * k
            back = tuple("L" if i == t else "N" for i in range(k))
            for reads in combos({t: ENDMARK}):
                pass_pair(sid, reads, reads, still, nxt)
            for sym in (SYM_0, SYM_1):
                for reads in combos({t: sym}):
                    pass_pair(sid, reads, reads, back, sid)
        else:  # copy dst <- src, both heads parked beforehand
            _, dst, src = head
            sid = fresh("copy")
            loop = fresh("copyloop")
            ahead = tuple("R" if i in (dst, src) else "N" for i in range(k))
            still = ("N",) * k
            for reads in combos({}):
                pass_pair(sid, reads, reads, ahead, loop)
            for sym in (SYM_0, SYM_1):
                for reads in combos({src: sym}):
                    writes = tuple(sym if i == dst else reads[i] for i in range(k))
                    pass_pair(loop, reads, writes, ahead, loop)
            for reads in combos({src: ENDMARK}):
                pass_pair(loop, reads, reads, still, nxt)
        chain_memo[key] = sid
        return sid

    for ins in hlm.instructions:
        where = f"state {hlm.state_names[ins.from_state]!r}"
        products = pred_products(ins.pred, k, where)
        lowered_branches = []
        for b in ins.branches:
            n = max(abs(b.dw), abs(b.db))
            if n == 0 or (n + b.dw) % 2 or (n + b.db) % 2:
                raise LowerError(
                    f"{where}: branch differentials ({b.dw}, {b.db}) cannot"
                    " be split into unit genes"
                )
            weights = [1] * ((n + b.dw) // 2) + [-1] * ((n - b.dw) // 2)
            biases = [1] * ((n + b.db) // 2) + [-1] * ((n - b.db) // 2)
            stages = _stages(b.steps, lambda t: cells[t])
            if stages and stages[0][0] == "micro":
                first_w, first_m = dict(stages[0][1]), dict(stages[0][2])
                target = chain(stages[1:], b.to_state)
            else:
                first_w, first_m = {}, {}
                target = chain(stages, b.to_state)
            lowered_branches.append((first_w, first_m, target, weights, biases))
        for product in products:
            for reads in itertools.product(*product):
                for first_w, first_m, target, weights, biases in lowered_branches:
                    writes = tuple(first_w.get(i, reads[i]) for i in range(k))
                    moves = tuple(first_m.get(i, "N") for i in range(k))
                    for w, bias in zip(weights, biases):
                        genes.append(
                            Instruction(
                                ins.from_state, reads, target, writes, moves,
                                w, bias,
                            )
                        )

    return MachineSpec(
        flavor=FLAVOR_PTM,
        num_states=num_states,
        tapes=hlm.tapes,
        program=tuple(genes),
    )
