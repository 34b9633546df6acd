"""Flat tree programs for the Monte Carlo oracle and backend dispatch.

A tree is compiled to parallel arrays in preorder. Every trial consumes one
row of ``width`` uniforms drawn from a single ``numpy.random.Generator``:
choice nodes read the column of their depth, leaves read a column that is
unique within their scenario. Only one node per depth and one scenario are
visited per trial, so reusing columns across unvisited nodes keeps all draws
independent while keeping rows short.

Two interchangeable kernels count successes over a block of rows:
``evasiontree._mckernel`` (Cython) and :mod:`evasiontree._mcpy` (numpy).
They produce identical counts for identical rows. The compiled one is used
when importable unless ``EVASIONTREE_BACKEND=python`` is set.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from evasiontree.model import AemlNode, AemNode, CalNode, CaNode, ChoiceNode, ScenarioNode, _escape, child_labels

CHOICE, PICK, LEAF, AND = 0, 1, 2, 3

BLOCK_ROWS = 1 << 16

try:
    from evasiontree import _mckernel
except ImportError:  # pragma: no cover - depends on the build
    _mckernel = None

from evasiontree import _mcpy  # noqa: E402

AVAILABLE = ("cython", "python") if _mckernel is not None else ("python",)
_requested = os.environ.get("EVASIONTREE_BACKEND", "").strip().lower()
if _requested and _requested not in ("cython", "python"):
    raise ImportError(f"EVASIONTREE_BACKEND must be 'cython' or 'python', not {_requested!r}")
if _requested == "cython" and _mckernel is None:
    raise ImportError("EVASIONTREE_BACKEND=cython but the compiled kernel is not built")
BACKEND = _requested or AVAILABLE[0]


@dataclass(frozen=True)
class Program:
    kind: np.ndarray       # int8 per node
    first: np.ndarray      # int32, offset into ``children``
    count: np.ndarray      # int32
    children: np.ndarray   # int32 node indices
    cumw: np.ndarray       # float64 cumulative weight per ``children`` entry
    prob: np.ndarray       # float64 success probability of leaves
    slot: np.ndarray       # int32 uniform column (choice nodes and leaves)
    best: np.ndarray       # int32 chosen child of PICK nodes, -1 if none
    width: int


def _cumulative(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    total = w.sum()
    cum = np.cumsum(w) / total
    positive = np.flatnonzero(w > 0)
    if positive.size:
        cum[positive[-1]:] = 1.0
    return cum


def compile_tree(tree, ap) -> Program:
    """Lower ``tree`` into a :class:`Program`; ``ap`` is its ``compute_ap``
    result, used to fix the attacker's choice at AEML nodes and OR gates."""
    kind, first, count, prob, slot, best = [], [], [], [], [], []
    edges: list[tuple[int, list[int], list[float]]] = []
    leaf_slots = [0]
    max_depth = [0]

    def add(k, p=0.0, s=-1):
        kind.append(k)
        first.append(0)
        count.append(0)
        prob.append(p)
        slot.append(s)
        best.append(-1)
        return len(kind) - 1

    def visit(node, path, depth):
        if isinstance(node, ChoiceNode):
            max_depth[0] = max(max_depth[0], depth + 1)
            i = add(CHOICE, s=depth)
            kids = [visit(c, f"{path}/{s}", depth + 1) for s, c in zip(child_labels(node), node.children)]
            edges.append((i, kids, list(node.weights)))
            return i
        if isinstance(node, ScenarioNode):
            leaf_slots[0] = 0
        if isinstance(node, (AemNode, CaNode)) and (isinstance(node, AemNode) or node.gate is None):
            i = add(LEAF, ap.values[path], leaf_slots[0])
            leaf_slots[0] += 1
            return i
        picks = isinstance(node, AemlNode) or (isinstance(node, CaNode) and node.gate == "OR")
        i = add(PICK if picks else AND)
        paths = [f"{path}/{s}" for s in child_labels(node)]
        kids = [visit(c, p, depth) for c, p in zip(node.children, paths)]
        edges.append((i, kids, []))
        if picks and kids:
            scores = [ap.values[p] for p in paths]
            j = max(range(len(scores)), key=lambda t: (scores[t], -t))
            best[i] = kids[j]
        return i

    leaves_per_scenario = []

    def count_leaves(node):
        n = 0
        stack = [node]
        while stack:
            x = stack.pop()
            if isinstance(x, AemNode) or (isinstance(x, CaNode) and x.gate is None):
                n += 1
            else:
                stack.extend(x.children)
        return n

    visit(tree, _escape(tree.label), 0)
    stack = [tree]
    while stack:
        x = stack.pop()
        if isinstance(x, ScenarioNode):
            leaves_per_scenario.append(count_leaves(x))
        elif isinstance(x, ChoiceNode):
            stack.extend(x.children)
    depth = max_depth[0]
    width = depth + max(leaves_per_scenario, default=0)

    slot = np.asarray(slot, dtype=np.int32)
    kind_arr = np.asarray(kind, dtype=np.int8)
    slot[kind_arr == LEAF] += depth

    children: list[int] = []
    cumw: list[float] = []
    first_arr = np.zeros(len(kind), dtype=np.int32)
    count_arr = np.zeros(len(kind), dtype=np.int32)
    for i, kids, weights in sorted(edges):
        first_arr[i] = len(children)
        count_arr[i] = len(kids)
        children.extend(kids)
        cumw.extend(_cumulative(weights) if weights else [0.0] * len(kids))

    return Program(
        kind=kind_arr,
        first=first_arr,
        count=count_arr,
        children=np.asarray(children, dtype=np.int32),
        cumw=np.asarray(cumw, dtype=np.float64),
        prob=np.asarray(prob, dtype=np.float64),
        slot=slot,
        best=np.asarray(best, dtype=np.int32),
        width=max(width, 1),
    )


def _kernel(backend):
    backend = backend or BACKEND
    if backend == "cython":
        if _mckernel is None:
            raise RuntimeError("compiled Monte Carlo kernel is not available")
        return _mckernel.count_successes
    if backend == "python":
        return _mcpy.count_successes
    raise ValueError(f"unknown backend {backend!r}")


def simulate(program: Program, trials: int, seed: int, *, backend: str | None = None) -> int:
    """Number of successful trials out of ``trials``."""
    kernel = _kernel(backend)
    rng = np.random.default_rng(seed)
    successes = 0
    remaining = trials
    while remaining:
        rows = min(remaining, BLOCK_ROWS)
        u = rng.random((rows, program.width))
        successes += int(kernel(program, u))
        remaining -= rows
    return successes
