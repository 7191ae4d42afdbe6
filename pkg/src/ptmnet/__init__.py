"""Gate networks unrolled from tape machine programs.

A machine's program is a list of instruction genes over a handful of
circular bit tapes.  Unrolling the reachable configurations from each
output coordinate yields an acyclic threshold network whose weights and
biases are sums of the genes' unit differentials.  The package covers
the raw machine format, the network builder and evaluator, a genetic
algorithm over gene lists, and a small language that compiles down to
the same pipeline.
"""

from .builder import (
    BuildError,
    Limits,
    Link,
    Network,
    Node,
    build,
    build_program,
    export_network,
    network_from_json,
    topological_order,
)
from .evolution import (
    EvolutionConfig,
    GenerationStats,
    Genotype,
    Individual,
    crossover,
    evaluate_fitness,
    evolve,
    format_genotype,
    genotype_hash,
    history_to_csv,
    invert,
    mutate_point,
    parse_genotype,
    random_genotype,
    task_header,
)
from .execute import (
    BitArray,
    ExecutionError,
    all_inputs,
    evaluate,
    evaluate_batch,
    truth_table,
)
from .fileformat import FormatError, format_machine, load_machine, parse_machine, save_machine
from .machines import (
    Configuration,
    Instruction,
    MachineError,
    MachineSpec,
    TapeSpec,
)
from .tasks import TASKS, Task, make_task, warshall

__version__ = "0.1.0"

__all__ = [
    "BitArray",
    "BuildError",
    "Configuration",
    "EvolutionConfig",
    "ExecutionError",
    "FormatError",
    "GenerationStats",
    "Genotype",
    "Individual",
    "Instruction",
    "Limits",
    "Link",
    "MachineError",
    "MachineSpec",
    "Network",
    "Node",
    "TASKS",
    "TapeSpec",
    "Task",
    "all_inputs",
    "build",
    "build_program",
    "crossover",
    "evaluate",
    "evaluate_batch",
    "evaluate_fitness",
    "evolve",
    "export_network",
    "format_genotype",
    "format_machine",
    "genotype_hash",
    "history_to_csv",
    "invert",
    "load_machine",
    "make_task",
    "mutate_point",
    "network_from_json",
    "parse_genotype",
    "parse_machine",
    "random_genotype",
    "save_machine",
    "task_header",
    "topological_order",
    "truth_table",
    "warshall",
]
