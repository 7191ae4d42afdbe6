"""Network construction by depth-first traversal of machine configurations.

Nodes are memoized configurations; a link from node a to node b means b's
value is one of a's inputs.  Traversal starts at the output configurations
(row-major over the output coordinate space) and expands successors in
program order.  A successor already on the current traversal path would
close a cycle, so that link is skipped; skipped links contribute neither
weight nor bias.  Otherwise each applied instruction adds its differential
weight to the (source, successor) link and its differential bias to the
source node.

Resource limits guard the traversal.  A breach either raises (fatal) or
ends the whole build, returning the partial network built so far.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

from .machines import (
    FLAVOR_ATM,
    FLAVOR_PTM,
    GATE_FALSE,
    GATE_READ,
    GATE_READ_INV,
    GATE_TRUE,
    ROLE_INPUT,
    Configuration,
    MachineSpec,
    apply_instruction,
    canonical_key,
    decode_index,
    leaf_kind,
    make_output_config,
)

OP_PERCEPTRON = "perceptron"
OP_AND = "and"
OP_OR = "or"
OP_CONST = "const"
OP_READ = "read"
INTERIOR_OPS = (OP_PERCEPTRON, OP_AND, OP_OR)


@dataclass(frozen=True)
class Limits:
    """Build resource limits; ``None`` means unlimited.

    fanout counts a node's outgoing links (the inputs of its gate).  With
    ``fatal`` the breach raises BuildError; otherwise the build ends and
    the partial network is returned.
    """

    max_nodes: int | None = None
    max_depth: int | None = None
    max_fanout: int | None = None
    fatal: bool = False

    def __post_init__(self):
        for name in ("max_nodes", "max_depth", "max_fanout"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"{name} must be positive or None")


class BuildError(RuntimeError):
    """Fatal resource breach; carries the report counters so far."""

    def __init__(self, message: str, report: dict):
        super().__init__(message)
        self.report = report


@dataclass
class Node:
    id: int
    kind: str  # output | hidden | input | constant | read
    op: str  # perceptron | and | or | const | read
    bias: int = 0
    coords: tuple[int, ...] | None = None
    value: int | None = None
    inverted: bool = False
    config: Configuration | None = field(default=None, repr=False, compare=False)


class Link(NamedTuple):
    src: int
    dst: int
    weight: int


@dataclass
class Network:
    """An acyclic gate network plus the report of the build that made it."""

    flavor: str
    nodes: tuple[Node, ...]
    out_links: tuple[tuple[tuple[int, int], ...], ...]  # per node: (dst, weight)
    outputs: tuple[int | None, ...]  # row-major; None if never built
    input_dims: tuple[int, ...]
    output_dims: tuple[int, ...]
    depth: int
    report: dict

    @property
    def links(self) -> list[Link]:
        return [
            Link(src, dst, w)
            for src, row in enumerate(self.out_links)
            for dst, w in row
        ]


def iter_coords(dims: tuple[int, ...]) -> Iterable[tuple[int, ...]]:
    """Row-major iteration: the last coordinate varies fastest."""
    return itertools.product(*[range(d) for d in dims])


class _MachineProgram:
    """Adapter exposing a low-level machine to the generic traversal."""

    def __init__(self, machine: MachineSpec):
        self.machine = machine
        self.flavor = machine.flavor
        self.input_dims = machine.input_dims
        self.output_dims = machine.output_dims
        self._index: dict[tuple, list] = {}
        for ins in machine.program:
            self._index.setdefault((ins.from_state, ins.reads), []).append(ins)

    def output_config(self, coords):
        return make_output_config(self.machine, coords)

    def leaf_payload(self, config):
        kind = leaf_kind(self.machine, config.state)
        if kind is None:
            return None
        if kind == "input":
            return ("input", decode_index(self.machine, config, ROLE_INPUT), False)
        if kind == GATE_TRUE:
            return ("const", 1)
        if kind == GATE_FALSE:
            return ("const", 0)
        inverted = kind == GATE_READ_INV
        return ("read", decode_index(self.machine, config, ROLE_INPUT), inverted)

    def interior_op(self, config):
        if self.flavor == FLAVOR_PTM:
            return OP_PERCEPTRON
        return self.machine.gate_types[config.state]

    def expand(self, config):
        scanned = tuple(t[h] for t, h in zip(config.tapes, config.heads))
        matched = self._index.get((config.state, scanned), ())
        if self.flavor == FLAVOR_PTM:
            return [(apply_instruction(config, ins), ins.dw, ins.db) for ins in matched]
        return [(apply_instruction(config, ins), 1, 0) for ins in matched]


def build(machine: MachineSpec, limits: Limits = Limits()) -> Network:
    """Build the network of a low-level machine."""
    return build_program(_MachineProgram(machine), limits)


def build_program(prog, limits: Limits = Limits()) -> Network:
    """Generic traversal over any program adapter (low- or high-level)."""
    memo: dict[tuple, int] = {}
    nodes: list[Node] = []
    adj: list[dict[int, int]] = []
    on_path: set[int] = set()
    report = {
        "nodes": 0,
        "links": 0,
        "cycle_links_skipped": 0,
        "limit_hits": 0,
        "stopped_by": None,
    }
    stopped = False
    input_dims = prog.input_dims

    def hit(which: str) -> None:
        nonlocal stopped
        report["limit_hits"] += 1
        report["stopped_by"] = which
        report["nodes"] = len(nodes)
        if limits.fatal:
            raise BuildError(f"{which} limit exceeded", dict(report))
        stopped = True

    def new_node(config: Configuration) -> int | None:
        if limits.max_nodes is not None and len(nodes) >= limits.max_nodes:
            hit("max_nodes")
            return None
        payload = prog.leaf_payload(config)
        node = Node(id=len(nodes), kind="hidden", op="", config=config)
        if payload is None:
            node.op = prog.interior_op(config)
        else:
            tag = payload[0]
            if tag == "const":
                node.kind = "constant"
                node.op = OP_CONST
                node.value = payload[1]
            else:
                coords = payload[1]
                if any(c >= d for c, d in zip(coords, input_dims)):
                    # Addressing a bit outside the input array reads as a
                    # fixed false.
                    node.kind = "constant"
                    node.op = OP_CONST
                    node.value = 0
                else:
                    node.kind = "input" if tag == "input" else "read"
                    node.op = OP_READ
                    node.coords = coords
                    node.inverted = payload[2]
        memo[canonical_key(config)] = node.id
        nodes.append(node)
        adj.append({})
        return node.id

    def add_link(src: int, dst: int, dw: int, db: int) -> None:
        row = adj[src]
        if dst in row:
            row[dst] += dw
        else:
            if limits.max_fanout is not None and len(row) >= limits.max_fanout:
                hit("max_fanout")
                return
            row[dst] = dw
            report["links"] += 1
        nodes[src].bias += db

    def expand_from(root: int) -> None:
        nonlocal stopped
        stack = [[root, prog.expand(nodes[root].config), 0, 0]]
        on_path.add(root)
        while stack:
            frame = stack[-1]
            nid, items, pos, depth = frame
            if pos >= len(items):
                on_path.discard(nid)
                stack.pop()
                continue
            frame[2] += 1
            succ, dw, db = items[pos]
            sid = memo.get(canonical_key(succ))
            if sid is not None:
                if sid in on_path:
                    report["cycle_links_skipped"] += 1
                    continue
                add_link(nid, sid, dw, db)
                if stopped:
                    return
                continue
            if limits.max_depth is not None and depth + 1 > limits.max_depth:
                hit("max_depth")
            if stopped:
                return
            sid = new_node(succ)
            if sid is None:
                return
            add_link(nid, sid, dw, db)
            if stopped:
                return
            if nodes[sid].op in INTERIOR_OPS:
                stack.append([sid, prog.expand(succ), 0, depth + 1])
                on_path.add(sid)
        on_path.clear()

    outputs: list[int | None] = []
    for coords in iter_coords(prog.output_dims):
        root_cfg = prog.output_config(coords)
        nid = memo.get(canonical_key(root_cfg))
        if nid is None:
            if stopped:
                outputs.append(None)
                continue
            nid = new_node(root_cfg)
            if nid is None:
                outputs.append(None)
                continue
            if nodes[nid].op in INTERIOR_OPS:
                expand_from(nid)
        node = nodes[nid]
        node.kind = "output"
        node.coords = coords
        outputs.append(nid)

    report["nodes"] = len(nodes)
    out_links = tuple(tuple(row.items()) for row in adj)
    depth = _network_depth(out_links, outputs)
    return Network(
        flavor=prog.flavor,
        nodes=tuple(nodes),
        out_links=out_links,
        outputs=tuple(outputs),
        input_dims=tuple(input_dims),
        output_dims=tuple(prog.output_dims),
        depth=depth,
        report=report,
    )


def _network_depth(out_links, outputs) -> int:
    """Longest path, in links, from any output node to a sink."""
    depth: dict[int, int] = {}
    for root in outputs:
        if root is None or root in depth:
            continue
        stack = [(root, 0)]
        while stack:
            nid, child_pos = stack[-1]
            children = out_links[nid]
            if child_pos < len(children):
                stack[-1] = (nid, child_pos + 1)
                dst = children[child_pos][0]
                if dst not in depth:
                    stack.append((dst, 0))
            else:
                stack.pop()
                depth[nid] = 1 + max(
                    (depth[d] for d, _ in children), default=-1
                )
    return max((depth[o] for o in outputs if o is not None), default=0)


def topological_order(net: Network) -> list[int]:
    """Node ids ordered so every link goes from later to earlier entries."""
    seen: set[int] = set()
    order: list[int] = []
    for root in net.outputs:
        if root is None or root in seen:
            continue
        stack = [(root, 0)]
        seen.add(root)
        while stack:
            nid, pos = stack[-1]
            children = net.out_links[nid]
            if pos < len(children):
                stack[-1] = (nid, pos + 1)
                dst = children[pos][0]
                if dst not in seen:
                    seen.add(dst)
                    stack.append((dst, 0))
            else:
                stack.pop()
                order.append(nid)
    return order


def export_network(net: Network, fmt: str = "structured") -> str:
    """Deterministic text form of a network: ``structured`` JSON or ``dot``."""
    if fmt == "structured":
        return _export_json(net)
    if fmt == "dot":
        return _export_dot(net)
    raise ValueError(f"unknown export format {fmt!r}")


def _node_obj(n: Node) -> dict:
    return {
        "id": n.id,
        "kind": n.kind,
        "op": n.op,
        "bias": n.bias,
        "coords": list(n.coords) if n.coords is not None else None,
        "value": n.value,
        "inverted": n.inverted,
    }


def _export_json(net: Network) -> str:
    obj = {
        "nodes": [_node_obj(n) for n in net.nodes],
        "links": [
            {"from": src, "to": dst, "weight": w}
            for src, row in enumerate(net.out_links)
            for dst, w in row
        ],
        "outputs": list(net.outputs),
        "input_dims": list(net.input_dims),
        "output_dims": list(net.output_dims),
        "flavor": net.flavor,
        "depth": net.depth,
        "report": {
            "nodes": net.report["nodes"],
            "links": net.report["links"],
            "cycle_links_skipped": net.report["cycle_links_skipped"],
            "limit_hits": net.report["limit_hits"],
            "stopped_by": net.report["stopped_by"],
        },
    }
    return json.dumps(obj, indent=1) + "\n"


def _export_dot(net: Network) -> str:
    lines = ["digraph network {"]
    for n in net.nodes:
        bits = [n.kind, n.op]
        if n.op == OP_PERCEPTRON:
            bits.append(f"b={n.bias}")
        if n.coords is not None:
            bits.append(",".join(map(str, n.coords)))
        if n.value is not None:
            bits.append(f"={n.value}")
        if n.inverted:
            bits.append("inv")
        label = " ".join(bits)
        shape = "doublecircle" if n.kind == "output" else "ellipse"
        lines.append(f'  n{n.id} [label="{n.id}: {label}" shape={shape}];')
    for src, row in enumerate(net.out_links):
        for dst, w in row:
            lines.append(f'  n{src} -> n{dst} [label="{w}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def network_from_json(text: str) -> Network:
    """Reload a network exported in the structured format."""
    obj = json.loads(text)
    nodes = tuple(
        Node(
            id=d["id"],
            kind=d["kind"],
            op=d["op"],
            bias=d["bias"],
            coords=tuple(d["coords"]) if d["coords"] is not None else None,
            value=d["value"],
            inverted=d["inverted"],
        )
        for d in obj["nodes"]
    )
    adj: list[list[tuple[int, int]]] = [[] for _ in nodes]
    for link in obj["links"]:
        adj[link["from"]].append((link["to"], link["weight"]))
    return Network(
        flavor=obj["flavor"],
        nodes=nodes,
        out_links=tuple(tuple(row) for row in adj),
        outputs=tuple(obj["outputs"]),
        input_dims=tuple(obj["input_dims"]),
        output_dims=tuple(obj["output_dims"]),
        depth=obj["depth"],
        report=dict(obj["report"]),
    )
