"""Benchmark truth-table tasks with exact oracles.

A task pins the input/output dimensions, an oracle mapping one input
array to the expected output array, and how the input set is drawn:
exhaustively (all 2^n rows, n capped) or as a seeded random sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .execute import BitArray, all_inputs


@dataclass
class Task:
    name: str
    input_dims: tuple[int, ...]
    output_dims: tuple[int, ...]
    oracle: Callable[[BitArray], BitArray]
    mode: str = "exhaustive"
    sample_count: int = 256
    sample_seed: int = 0
    cap: int = 16
    _cache: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.mode not in ("exhaustive", "sampled"):
            raise ValueError(f"unknown evaluation mode {self.mode!r}")
        if self.mode == "sampled" and self.sample_count < 1:
            raise ValueError("sample_count must be positive")

    @property
    def input_size(self) -> int:
        return math.prod(self.input_dims)

    @property
    def output_size(self) -> int:
        return math.prod(self.output_dims)

    def materialize(self) -> tuple[np.ndarray, np.ndarray]:
        """Input rows and oracle outputs as 0/1 matrices (cached)."""
        if self._cache is None:
            if self.mode == "exhaustive":
                if self.input_size > self.cap:
                    raise ValueError(
                        f"{self.input_size} input bits exceed the exhaustive "
                        f"cap of {self.cap}; use sampled mode"
                    )
                rows = all_inputs(self.input_size)
            else:
                gen = np.random.default_rng(self.sample_seed)
                rows = gen.integers(
                    0, 2, (self.sample_count, self.input_size), dtype=np.uint8
                )
            expected = np.zeros((rows.shape[0], self.output_size), dtype=np.uint8)
            for i in range(rows.shape[0]):
                arr = BitArray(self.input_dims, tuple(int(b) for b in rows[i]))
                out = self.oracle(arr)
                if out.dims != self.output_dims:
                    raise ValueError(
                        f"oracle produced dims {out.dims}, task declares "
                        f"{self.output_dims}"
                    )
                expected[i] = out.bits
            self._cache = (rows, expected)
        return self._cache


def _any_oracle(arr: BitArray) -> BitArray:
    return BitArray((), (1 if any(arr.bits) else 0,))


def _all_oracle(arr: BitArray) -> BitArray:
    return BitArray((), (1 if all(arr.bits) else 0,))


def _parity_oracle(arr: BitArray) -> BitArray:
    return BitArray((), (sum(arr.bits) % 2,))


def warshall(adj: np.ndarray) -> np.ndarray:
    """Transitive closure of an adjacency matrix: a 1 at (i, j) means a
    directed path of one or more edges from i to j."""
    n = adj.shape[0]
    closed = adj.astype(bool).copy()
    for k in range(n):
        closed |= np.outer(closed[:, k], closed[k, :])
    return closed.astype(np.uint8)


def _closure_oracle(arr: BitArray) -> BitArray:
    n = arr.dims[0]
    adj = np.array(arr.bits, dtype=np.uint8).reshape(n, n)
    return BitArray(arr.dims, tuple(int(b) for b in warshall(adj).reshape(-1)))


def exists_task(n: int) -> Task:
    return Task(f"exists{n}", (n,), (), _any_oracle)


def all_task(n: int) -> Task:
    return Task(f"all{n}", (n,), (), _all_oracle)


def parity_task(n: int) -> Task:
    if n > 4:
        raise ValueError("parity tasks are defined for n <= 4")
    return Task(f"parity{n}", (n,), (), _parity_oracle)


def transitive_closure_task(
    n: int, sample_count: int = 256, sample_seed: int = 0
) -> Task:
    if n > 4:
        raise ValueError("closure tasks are defined for n <= 4")
    mode = "exhaustive" if n * n <= 9 else "sampled"
    return Task(
        f"closure{n}",
        (n, n),
        (n, n),
        _closure_oracle,
        mode=mode,
        sample_count=sample_count,
        sample_seed=sample_seed,
    )


TASKS: dict[str, Callable[[int], Task]] = {
    "exists": exists_task,
    "all": all_task,
    "parity": parity_task,
    "transitive-closure": transitive_closure_task,
}


def make_task(name: str, n: int) -> Task:
    try:
        factory = TASKS[name]
    except KeyError:
        known = ", ".join(sorted(TASKS))
        raise ValueError(f"unknown task {name!r}; known tasks: {known}") from None
    return factory(n)
