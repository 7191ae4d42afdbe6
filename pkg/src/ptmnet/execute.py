"""Network evaluation over bit arrays.

A perceptron node outputs 1 exactly when the weighted sum of its linked
nodes plus its bias is strictly positive; integer arithmetic throughout.
Gate networks use and/or semantics, where a gate with no inputs acts as
false.  Truth tables are evaluated with a vectorized batch pass.

Bit strings at the text boundary follow the convention of fixed-width
binary literals: the RIGHTMOST character is flat index 0 of the row-major
bit array, the leftmost is the highest index.  Parsing "001101" with dims
(6,) therefore yields bits 1,0,1,1,0,0 at indices 0..5.  Inside the
library, BitArray values are stored in natural row-major order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .builder import (
    FLAVOR_PTM,
    Network,
    OP_AND,
    OP_CONST,
    OP_OR,
    OP_PERCEPTRON,
    OP_READ,
    iter_coords,
    topological_order,
)


class ExecutionError(ValueError):
    """Raised for shape mismatches or oversize truth tables."""


@dataclass(frozen=True)
class BitArray:
    """A multidimensional bit array; empty dims means a single bit."""

    dims: tuple[int, ...]
    bits: tuple[int, ...]

    def __post_init__(self):
        if len(self.bits) != self.size or any(b not in (0, 1) for b in self.bits):
            raise ExecutionError(
                f"need {self.size} bits of 0/1 for dims {self.dims}"
            )

    @property
    def size(self) -> int:
        return math.prod(self.dims)

    def flat(self, coords: tuple[int, ...]) -> int:
        idx = 0
        for c, d in zip(coords, self.dims):
            idx = idx * d + c
        return idx

    def __getitem__(self, coords: tuple[int, ...]) -> int:
        return self.bits[self.flat(coords)]

    @staticmethod
    def from_string(text: str, dims: tuple[int, ...]) -> "BitArray":
        size = math.prod(dims)
        if len(text) != size or any(ch not in "01" for ch in text):
            raise ExecutionError(
                f"input must be {size} characters of 0/1 for dims {dims}, got {text!r}"
            )
        return BitArray(dims, tuple(int(ch) for ch in reversed(text)))

    def to_string(self) -> str:
        return "".join(str(b) for b in reversed(self.bits))


def evaluate(net: Network, inputs: BitArray) -> BitArray:
    """Evaluate every output bit of the network for one input array."""
    if inputs.dims != net.input_dims:
        raise ExecutionError(
            f"network expects input dims {net.input_dims}, got {inputs.dims}"
        )
    values: dict[int, int] = {}
    for nid in topological_order(net):
        node = net.nodes[nid]
        if node.op == OP_CONST:
            values[nid] = node.value
        elif node.op == OP_READ:
            bit = inputs[node.coords]
            values[nid] = 1 - bit if node.inverted else bit
        elif node.op == OP_PERCEPTRON:
            acc = node.bias
            for dst, w in net.out_links[nid]:
                acc += w * values[dst]
            values[nid] = 1 if acc > 0 else 0
        elif node.op == OP_AND:
            row = net.out_links[nid]
            values[nid] = 1 if row and all(values[d] for d, _ in row) else 0
        elif node.op == OP_OR:
            values[nid] = 1 if any(values[d] for d, _ in net.out_links[nid]) else 0
        else:
            raise ExecutionError(f"node {nid} has unknown op {node.op!r}")
    out = tuple(values[o] if o is not None else 0 for o in net.outputs)
    return BitArray(net.output_dims, out)


def evaluate_batch(net: Network, inputs: np.ndarray) -> np.ndarray:
    """Evaluate a whole batch at once.

    ``inputs`` has shape (batch, input_size) with 0/1 entries; the result
    has shape (batch, output_size).
    """
    batch = inputs.shape[0]
    values: dict[int, np.ndarray] = {}
    for nid in topological_order(net):
        node = net.nodes[nid]
        if node.op == OP_CONST:
            values[nid] = np.full(batch, node.value, dtype=np.uint8)
        elif node.op == OP_READ:
            col = inputs[:, _flat(node.coords, net.input_dims)].astype(np.uint8)
            values[nid] = (1 - col) if node.inverted else col
        elif node.op == OP_PERCEPTRON:
            acc = np.full(batch, node.bias, dtype=np.int64)
            for dst, w in net.out_links[nid]:
                acc += w * values[dst].astype(np.int64)
            values[nid] = (acc > 0).astype(np.uint8)
        elif node.op == OP_AND:
            row = net.out_links[nid]
            if not row:
                values[nid] = np.zeros(batch, dtype=np.uint8)
            else:
                acc = values[row[0][0]].copy()
                for dst, _ in row[1:]:
                    acc &= values[dst]
                values[nid] = acc
        elif node.op == OP_OR:
            acc = np.zeros(batch, dtype=np.uint8)
            for dst, _ in net.out_links[nid]:
                acc |= values[dst]
            values[nid] = acc
        else:
            raise ExecutionError(f"node {nid} has unknown op {node.op!r}")
    out = np.zeros((batch, len(net.outputs)), dtype=np.uint8)
    for j, o in enumerate(net.outputs):
        if o is not None:
            out[:, j] = values[o]
    return out


def _flat(coords: tuple[int, ...], dims: tuple[int, ...]) -> int:
    idx = 0
    for c, d in zip(coords, dims):
        idx = idx * d + c
    return idx


def all_inputs(num_bits: int) -> np.ndarray:
    """All 2**n bit rows in lexicographic order (first bit most significant)."""
    n = 1 << num_bits
    rows = np.arange(n, dtype=np.int64)
    cols = np.arange(num_bits - 1, -1, -1, dtype=np.int64)
    return ((rows[:, None] >> cols[None, :]) & 1).astype(np.uint8)


def truth_table(
    net: Network, cap: int = 20
) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """(input bits, output bits) for every input, lexicographically.

    Bits are in natural row-major order.  Refuses inputs wider than
    ``cap`` bits.
    """
    n = math.prod(net.input_dims)
    if n > cap:
        raise ExecutionError(f"truth table over {n} bits exceeds the cap of {cap}")
    rows = all_inputs(n)
    outs = evaluate_batch(net, rows)
    return [
        (tuple(int(b) for b in rows[i]), tuple(int(b) for b in outs[i]))
        for i in range(rows.shape[0])
    ]
