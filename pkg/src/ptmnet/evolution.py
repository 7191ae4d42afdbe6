"""Genetic search over machine programs.

A genotype is a machine header plus an ordered gene list, one gene per
instruction.  Point mutation resamples a single component of a single
gene; insertion and deletion vary the program length; crossover is
one-point with independent cut positions; inversion reverses a segment.
Selection is by tournament with elitism.  Every random draw comes from a
generator derived from the master seed, the generation, and the slot, so
runs reproduce exactly no matter how evaluations are scheduled.
"""

from __future__ import annotations

import hashlib
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np

from .builder import BuildError, Limits, build
from .execute import evaluate_batch
from .fileformat import format_machine, parse_machine
from .machines import (
    FLAVOR_PTM,
    MOVES,
    SYMBOLS,
    Instruction,
    MachineSpec,
    TapeSpec,
)
from .tasks import Task


@dataclass(frozen=True)
class Genotype:
    """A machine header and the gene list that is its program."""

    header: MachineSpec
    genes: tuple[Instruction, ...] = ()

    def __post_init__(self):
        if self.header.program:
            raise ValueError("genotype headers carry no program of their own")
        self.machine()  # validates every gene against the header

    def machine(self) -> MachineSpec:
        return replace(self.header, program=tuple(self.genes))

    def __len__(self) -> int:
        return len(self.genes)


def format_genotype(g: Genotype) -> str:
    return format_machine(g.machine())


def parse_genotype(text: str, filename: str = "<genotype>") -> Genotype:
    m = parse_machine(text, filename)
    return Genotype(replace(m, program=()), m.program)


def genotype_hash(g: Genotype) -> str:
    return hashlib.sha256(format_genotype(g).encode()).hexdigest()[:16]


def random_gene(header: MachineSpec, rng: random.Random) -> Instruction:
    k = len(header.tapes)
    dw = rng.choice((-1, 1)) if header.flavor == FLAVOR_PTM else 1
    db = rng.choice((-1, 1)) if header.flavor == FLAVOR_PTM else 1
    return Instruction(
        rng.randrange(header.num_states),
        tuple(rng.choice(SYMBOLS) for _ in range(k)),
        rng.randrange(header.num_states),
        tuple(rng.choice(SYMBOLS) for _ in range(k)),
        tuple(rng.choice(MOVES) for _ in range(k)),
        dw,
        db,
    )


def random_genotype(header: MachineSpec, length: int, rng: random.Random) -> Genotype:
    return Genotype(header, tuple(random_gene(header, rng) for _ in range(length)))


def _components(header: MachineSpec) -> list[tuple[str, int]]:
    k = len(header.tapes)
    parts = [("from_state", 0), ("to_state", 0)]
    parts += [("reads", j) for j in range(k)]
    parts += [("writes", j) for j in range(k)]
    parts += [("moves", j) for j in range(k)]
    if header.flavor == FLAVOR_PTM:
        parts += [("dw", 0), ("db", 0)]
    return parts


def _resample(gene: Instruction, field: str, j: int, header: MachineSpec,
              rng: random.Random) -> Instruction:
    if field in ("from_state", "to_state"):
        domain: Sequence = range(header.num_states)
        current = getattr(gene, field)
    elif field in ("dw", "db"):
        domain = (-1, 1)
        current = getattr(gene, field)
    elif field == "moves":
        domain = MOVES
        current = gene.moves[j]
    else:
        domain = SYMBOLS
        current = getattr(gene, field)[j]
    options = [v for v in domain if v != current]
    if not options:
        return gene
    value = rng.choice(options)
    if field in ("from_state", "to_state", "dw", "db"):
        return replace(gene, **{field: value})
    vec = list(getattr(gene, field))
    vec[j] = value
    return replace(gene, **{field: tuple(vec)})


def mutate_point(
    g: Genotype,
    rng: random.Random,
    p_insert: float = 0.0,
    p_delete: float = 0.0,
    min_len: int = 0,
    max_len: int | None = None,
) -> Genotype:
    """Resample one component of one gene; maybe insert or delete a gene.

    The component mutation always picks a value different from the old
    one.  Insertion and deletion fire independently with the given
    probabilities, within the length bounds.
    """
    genes = list(g.genes)
    if genes:
        idx = rng.randrange(len(genes))
        field, j = rng.choice(_components(g.header))
        genes[idx] = _resample(genes[idx], field, j, g.header, rng)
    if p_insert and (max_len is None or len(genes) < max_len):
        if rng.random() < p_insert:
            genes.insert(rng.randrange(len(genes) + 1), random_gene(g.header, rng))
    if p_delete and len(genes) > max(min_len, 0):
        if rng.random() < p_delete:
            del genes[rng.randrange(len(genes))]
    return Genotype(g.header, tuple(genes))


def crossover(
    a: Genotype, b: Genotype, rng: random.Random, max_len: int | None = None
) -> tuple[Genotype, Genotype]:
    """One-point crossover with independent cut positions per parent."""
    if a.header != b.header:
        raise ValueError("crossover requires matching headers")
    ca = rng.randint(0, len(a.genes))
    cb = rng.randint(0, len(b.genes))
    first = a.genes[:ca] + b.genes[cb:]
    second = b.genes[:cb] + a.genes[ca:]
    if max_len is not None:
        first = first[:max_len]
        second = second[:max_len]
    return Genotype(a.header, first), Genotype(a.header, second)


def invert(g: Genotype, rng: random.Random) -> Genotype:
    """Reverse a random contiguous segment; the gene multiset is kept."""
    n = len(g.genes)
    if n < 2:
        return g
    i = rng.randrange(n)
    j = rng.randrange(n)
    lo, hi = min(i, j), max(i, j)
    genes = g.genes[:lo] + tuple(reversed(g.genes[lo:hi + 1])) + g.genes[hi + 1:]
    return Genotype(g.header, genes)


def evaluate_fitness(g: Genotype, task: Task, limits: Limits = Limits()) -> float:
    """Fraction of output bits matching the oracle; fatal builds score 0."""
    machine = g.machine()
    if machine.input_dims != task.input_dims or machine.output_dims != task.output_dims:
        raise ValueError(
            f"genotype dims {machine.input_dims}->{machine.output_dims} do not "
            f"match task dims {task.input_dims}->{task.output_dims}"
        )
    try:
        net = build(machine, limits)
    except BuildError:
        return 0.0
    rows, expected = task.materialize()
    outs = evaluate_batch(net, rows)
    return float(np.mean(outs == expected))


@dataclass(frozen=True)
class EvolutionConfig:
    population: int = 100
    generations: int = 50
    tournament: int = 3
    elitism: int = 1
    p_point: float = 0.9
    p_insert: float = 0.25
    p_delete: float = 0.2
    p_cross: float = 0.5
    p_invert: float = 0.1
    min_len: int = 0
    max_len: int = 64
    init_len: int = 8
    limits: Limits = Limits(max_nodes=512)
    seed: int = 0
    stop_at: float | None = None

    def __post_init__(self):
        for name in ("p_point", "p_insert", "p_delete", "p_cross", "p_invert"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.population < 1 or self.generations < 1:
            raise ValueError("population and generations must be positive")
        if not 0 <= self.elitism < self.population:
            raise ValueError("elitism count must be smaller than the population")
        if not 0 <= self.min_len <= self.max_len:
            raise ValueError("need 0 <= min_len <= max_len")
        if not self.min_len <= self.init_len <= self.max_len:
            raise ValueError("init_len must lie within the length bounds")
        if self.tournament < 1:
            raise ValueError("tournament size must be positive")


class Individual(NamedTuple):
    genotype: Genotype
    fitness: float


class GenerationStats(NamedTuple):
    generation: int
    best: float
    mean: float
    best_hash: str


def history_to_csv(history: Sequence[GenerationStats]) -> str:
    lines = ["generation,best,mean,best_hash"]
    for row in history:
        lines.append(f"{row.generation},{row.best:.6f},{row.mean:.6f},{row.best_hash}")
    return "\n".join(lines) + "\n"


def task_header(
    task: Task, num_states: int = 4, work_cells: int = 0, flavor: str = FLAVOR_PTM
) -> MachineSpec:
    """A bare machine header whose index tapes fit the task's dimensions.

    Tasks mapping an array onto one of the same shape get shared
    input/output coordinate tapes; anything else gets separate input and
    output tapes.
    """
    tapes: list[TapeSpec] = []
    if task.input_dims and task.input_dims == task.output_dims:
        tapes += [TapeSpec.io_index(d) for d in task.input_dims]
    else:
        tapes += [TapeSpec.input_index(d) for d in task.input_dims]
        tapes += [TapeSpec.output_index(d) for d in task.output_dims]
    if work_cells:
        tapes.append(TapeSpec.work(work_cells))
    gates = None if flavor == FLAVOR_PTM else ("or",) * num_states
    return MachineSpec(flavor, num_states, tuple(tapes), (), gates)


def _derived_rng(seed: int, *parts) -> random.Random:
    key = ":".join(str(p) for p in (seed,) + parts).encode()
    return random.Random(int.from_bytes(hashlib.sha256(key).digest()[:8], "big"))


def _fitness_job(args) -> float:
    g, task, limits = args
    return evaluate_fitness(g, task, limits)


def _tournament(rng: random.Random, fits: list[float], size: int) -> int:
    best = rng.randrange(len(fits))
    for _ in range(size - 1):
        i = rng.randrange(len(fits))
        if (fits[i], -i) > (fits[best], -best):
            best = i
    return best


def evolve(
    config: EvolutionConfig,
    task: Task,
    header: MachineSpec | None = None,
    seed_population: Sequence[Genotype] | None = None,
    workers: int | None = None,
    on_generation=None,
) -> tuple[Individual, list[GenerationStats]]:
    """Run the generational loop; returns the best individual ever seen.

    ``seed_population`` fills the first slots of the initial population;
    the rest are random genotypes of the configured initial length.
    ``on_generation`` is called with each GenerationStats as it is made.
    """
    seeds = list(seed_population or ())[: config.population]
    if header is None:
        header = seeds[0].header if seeds else task_header(task)
    population = list(seeds)
    for slot in range(len(population), config.population):
        rng = _derived_rng(config.seed, "init", slot)
        population.append(random_genotype(header, config.init_len, rng))

    task.materialize()  # fill the cache once, before any worker fork
    pool = None
    if workers is not None and workers > 1:
        pool = ProcessPoolExecutor(max_workers=workers)
    history: list[GenerationStats] = []
    best_ever: Individual | None = None
    try:
        for gen in range(config.generations):
            jobs = [(g, task, config.limits) for g in population]
            if pool is None:
                fits = [_fitness_job(j) for j in jobs]
            else:
                chunk = max(1, config.population // (4 * workers))
                fits = list(pool.map(_fitness_job, jobs, chunksize=chunk))
            order = sorted(range(config.population), key=lambda i: (-fits[i], i))
            top = order[0]
            if best_ever is None or fits[top] > best_ever.fitness:
                best_ever = Individual(population[top], fits[top])
            mean = sum(fits) / len(fits)
            stats = GenerationStats(
                gen, fits[top], mean, genotype_hash(population[top])
            )
            history.append(stats)
            if on_generation is not None:
                on_generation(stats)
            if config.stop_at is not None and fits[top] >= config.stop_at:
                break
            if gen == config.generations - 1:
                break
            nxt = [population[i] for i in order[: config.elitism]]
            for slot in range(config.elitism, config.population):
                rng = _derived_rng(config.seed, gen, slot)
                child = population[_tournament(rng, fits, config.tournament)]
                if rng.random() < config.p_cross:
                    other = population[_tournament(rng, fits, config.tournament)]
                    child = crossover(child, other, rng, config.max_len)[0]
                if rng.random() < config.p_point:
                    child = mutate_point(
                        child,
                        rng,
                        config.p_insert,
                        config.p_delete,
                        config.min_len,
                        config.max_len,
                    )
                if rng.random() < config.p_invert:
                    child = invert(child, rng)
                nxt.append(child)
            population = nxt
    finally:
        if pool is not None:
            pool.shutdown()
    return best_ever, history
