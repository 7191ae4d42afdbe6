"""Bit arrays and network evaluation, single and batched."""

import random

import numpy as np
import pytest

from conftest import and_machine, identity_machine, instr, random_machine
from ptmnet.builder import OP_PERCEPTRON, OP_READ, Limits, Network, Node, build
from ptmnet.execute import (
    BitArray,
    ExecutionError,
    all_inputs,
    evaluate,
    evaluate_batch,
    truth_table,
)
from ptmnet.machines import ENDMARK, SYM_0, SYM_1, MachineSpec, TapeSpec

E = ENDMARK


# --- bit arrays ---------------------------------------------------------------

def test_bit_string_right_end_is_flat_index_zero():
    arr = BitArray.from_string("0011", (4,))
    assert arr.bits == (1, 1, 0, 0)
    assert arr[(0,)] == 1 and arr[(3,)] == 0
    assert arr.to_string() == "0011"


def test_multidimensional_flattening_is_row_major():
    arr = BitArray((2, 3), (0, 0, 0, 0, 0, 1))
    assert arr.flat((1, 2)) == 5
    assert arr[(1, 2)] == 1
    assert arr[(0, 0)] == 0


def test_scalar_array_is_one_bit():
    arr = BitArray((), (1,))
    assert arr.size == 1
    assert arr.to_string() == "1"


def test_bit_array_validation():
    with pytest.raises(ExecutionError):
        BitArray((2,), (0, 1, 1))
    with pytest.raises(ExecutionError):
        BitArray((2,), (0, 2))
    with pytest.raises(ExecutionError):
        BitArray.from_string("01x", (3,))
    with pytest.raises(ExecutionError):
        BitArray.from_string("01", (3,))


# --- a one-link perceptron, built by hand --------------------------------------

def tiny_perceptron(weight, bias):
    nodes = (
        Node(id=0, kind="output", op=OP_PERCEPTRON, bias=bias, coords=()),
        Node(id=1, kind="input", op=OP_READ, coords=(0,)),
    )
    report = {
        "nodes": 2,
        "links": 1,
        "cycle_links_skipped": 0,
        "limit_hits": 0,
        "stopped_by": None,
    }
    return Network(
        flavor="ptm",
        nodes=nodes,
        out_links=(((1, weight),), ()),
        outputs=(0,),
        input_dims=(1,),
        output_dims=(),
        depth=1,
        report=report,
    )


def test_threshold_is_strict():
    # Weighted sum exactly zero must give 0, not 1.
    net = tiny_perceptron(1, 0)
    assert evaluate(net, BitArray((1,), (0,))).bits == (0,)
    assert evaluate(net, BitArray((1,), (1,))).bits == (1,)
    net = tiny_perceptron(2, -2)
    assert evaluate(net, BitArray((1,), (1,))).bits == (0,)
    net = tiny_perceptron(-1, 1)
    assert evaluate(net, BitArray((1,), (0,))).bits == (1,)
    assert evaluate(net, BitArray((1,), (1,))).bits == (0,)


def test_boundary_case_through_a_built_machine():
    # AND network on input (1, 0): the weighted sum lands exactly on the
    # threshold and must fall to 0.
    net = build(and_machine())
    assert evaluate(net, BitArray((2,), (1, 0))).bits == (0,)


def test_input_shape_mismatch_raises():
    net = build(and_machine())
    with pytest.raises(ExecutionError):
        evaluate(net, BitArray((3,), (0, 0, 0)))


# --- gate networks --------------------------------------------------------------

def atm(num_states, tapes, program, gates):
    return MachineSpec("atm", num_states, tuple(tapes), tuple(program), tuple(gates))


def test_alternating_machine_and_of_two_reads():
    program = (
        instr(0, [E], 1, [E], ["N"]),
        instr(0, [E], 2, [E], ["R"]),
        instr(2, [SYM_0], 3, [SYM_1], ["N"]),
    )
    m = atm(4, [TapeSpec.input_index(2)], program, ["and", "read", "and", "read"])
    net = build(m)
    out = net.nodes[net.outputs[0]]
    assert out.op == "and"
    assert out.bias == 0
    assert [o for _, o in truth_table(net)] == [(0,), (0,), (0,), (1,)]


def test_alternating_machine_inverted_read():
    # or(not x0, x1): false only on input (1, 0).
    program = (
        instr(0, [E], 1, [E], ["N"]),
        instr(0, [E], 2, [E], ["R"]),
        instr(2, [SYM_0], 3, [SYM_1], ["N"]),
    )
    m = atm(
        4, [TapeSpec.input_index(2)], program, ["or", "read-inverted", "or", "read"]
    )
    table = truth_table(build(m))
    assert [o for _, o in table] == [(1,), (1,), (0,), (1,)]


def test_alternating_machine_constant_leaves():
    m = atm(
        2,
        [TapeSpec.input_index(1)],
        [instr(0, [E], 1, [E], ["N"])],
        ["or", "true"],
    )
    assert [o for _, o in truth_table(build(m))] == [(1,), (1,)]
    m = atm(
        2,
        [TapeSpec.input_index(1)],
        [instr(0, [E], 1, [E], ["N"])],
        ["and", "false"],
    )
    assert [o for _, o in truth_table(build(m))] == [(0,), (0,)]


def test_alternating_machine_duplicate_instruction_doubles_weight():
    program = (
        instr(0, [E], 1, [E], ["N"]),
        instr(0, [E], 1, [E], ["N"]),
    )
    m = atm(2, [TapeSpec.input_index(1)], program, ["or", "read"])
    net = build(m)
    assert net.links[0].weight == 2
    assert net.nodes[net.outputs[0]].bias == 0


def test_gate_with_no_children_is_false():
    m = atm(1, [TapeSpec.input_index(1)], [], ["and"])
    assert [o for _, o in truth_table(build(m))] == [(0,), (0,)]
    m = atm(1, [TapeSpec.input_index(1)], [], ["or"])
    assert [o for _, o in truth_table(build(m))] == [(0,), (0,)]


# --- batched evaluation ----------------------------------------------------------

def test_all_inputs_orders_rows_lexicographically():
    rows = all_inputs(3)
    assert rows.shape == (8, 3)
    assert list(rows[0]) == [0, 0, 0]
    assert list(rows[1]) == [0, 0, 1]
    assert list(rows[4]) == [1, 0, 0]
    assert list(rows[7]) == [1, 1, 1]


def test_batch_matches_single_evaluation():
    rng = random.Random(5)
    for _ in range(100):
        m = random_machine(rng)
        net = build(m, Limits(max_nodes=300))
        size = 1
        for d in m.input_dims:
            size *= d
        if size > 8:
            continue
        rows = all_inputs(size)
        batched = evaluate_batch(net, rows)
        for i in range(rows.shape[0]):
            single = evaluate(net, BitArray(m.input_dims, tuple(int(b) for b in rows[i])))
            assert tuple(int(b) for b in batched[i]) == single.bits


def test_unbuilt_outputs_evaluate_to_zero():
    net = build(identity_machine(4), Limits(max_nodes=3))
    assert None in net.outputs
    out = evaluate(net, BitArray((4,), (1, 1, 1, 1)))
    for o, bit in zip(net.outputs, out.bits):
        if o is None:
            assert bit == 0
    rows = np.ones((2, 4), dtype=np.uint8)
    batched = evaluate_batch(net, rows)
    for j, o in enumerate(net.outputs):
        if o is None:
            assert batched[0, j] == 0


def test_truth_table_cap():
    net = build(identity_machine(21))
    with pytest.raises(ExecutionError):
        truth_table(net)
    small = build(identity_machine(5))
    with pytest.raises(ExecutionError):
        truth_table(small, cap=4)
    assert len(truth_table(small, cap=5)) == 32  # the cap is inclusive
