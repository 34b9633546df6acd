"""Random matrices, scenarios and bound trees for property tests and benchmarks."""

from __future__ import annotations

import random
from dataclasses import replace

from evasiontree.construct import AemMatrix, EasRecord, MatrixRow, build_at4ea
from evasiontree.model import AemNode, AttributeVector, CaNode, ChoiceNode, map_nodes

VALUES = {
    "visibility": ("Physical", "Digital"),
    "scope": ("Individual", "Universal"),
    "computation": ("1-Step", "Iterative"),
    "knowledge": ("White-box", "Black-box (proxy)", "Black-box (query)"),
}

CA_LABELS = ("Get Model Info.", "Query Model Access", "Set the Stickers", "Intercept Camera", "Access", "Upload")


def random_attributes(rng: random.Random) -> AttributeVector:
    return AttributeVector(*(rng.choice(v) for v in VALUES.values()))


def random_scenarios(rng: random.Random, max_scenarios: int = 6) -> tuple[AemMatrix, list[EasRecord]]:
    """A matrix and 1..``max_scenarios`` scenarios over it."""
    rows: list[MatrixRow] = []
    records = []
    for s in range(rng.randint(1, max_scenarios)):
        attrs = random_attributes(rng)
        n_methods = 0 if rng.random() < 0.05 else rng.randint(1, 3)
        methods = []
        for _ in range(n_methods):
            name = f"M{len(rows)}"
            rows.append(MatrixRow(name, attrs))
            methods.append(name)
        cas = tuple(rng.choice(CA_LABELS) for _ in range(rng.randint(0, 3)))
        records.append(EasRecord(f"S{s}", attrs, cas, tuple(methods)))
    return AemMatrix(rows), records


def _random_gate(rng, label, depth):
    kids = []
    for i in range(rng.randint(1, 3)):
        if depth < 2 and rng.random() < 0.3:
            kids.append(_random_gate(rng, f"{label}.{i}", depth + 1))
        else:
            kids.append(CaNode(f"{label}.{i}", rng.random(), rng.randint(0, 50)))
    return CaNode(label, gate=rng.choice(("AND", "OR")), children=tuple(kids))


def randomize_parameters(tree, rng: random.Random, *, gate_rate: float = 0.0, max_query: int = 500):
    """Bind every leaf and weight of ``tree`` to random values."""

    def fn(path, node):
        if isinstance(node, AemNode):
            return replace(node, err=rng.random(), freq=rng.random(), query=rng.randint(0, max_query))
        if isinstance(node, CaNode) and node.gate is None:
            if rng.random() < gate_rate:
                return _random_gate(rng, node.label, 0)
            return replace(node, prob=rng.random(), query=rng.randint(0, 50))
        if isinstance(node, ChoiceNode):
            raw = [rng.random() + 1e-3 for _ in node.children]
            total = sum(raw)
            return replace(node, weights=tuple(w / total for w in raw))
        return node

    return map_nodes(tree, fn)


def random_tree(rng: random.Random, max_scenarios: int = 6, *, gate_rate: float = 0.15):
    """A validated, fully bound tree built through the construction pipeline."""
    matrix, records = random_scenarios(rng, max_scenarios)
    tree = build_at4ea("Misclassify the target", records, matrix)
    return randomize_parameters(tree, rng, gate_rate=gate_rate)
