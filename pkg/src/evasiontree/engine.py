"""Bottom-up attack probability (AP) and minimum query (MQ) evaluation.

AP per node kind::

    aem       err * freq
    aeml      max over methods (0 when empty)
    ca leaf   prob;  AND gate: product, OR gate: max
    cal       product over steps (1 when empty)
    scenario  ap(aeml) * ap(cal)
    aea/root  sum_i w_i * ap(child_i)

MQ uses the same shape with query / min / sum / sum / min, and drops every
subtree below a knowledge-level AEA node valued ``White-box``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Union

from evasiontree.model import (
    AeaNode,
    AemlNode,
    AemNode,
    CalNode,
    CaNode,
    ChoiceNode,
    ScenarioNode,
    _escape,
    child_labels,
    ensure_valid,
    is_white_box,
)


class Unattainable(enum.Enum):
    """No finite query count exists (e.g. only white-box routes remain)."""

    UNATTAINABLE = "UNATTAINABLE"

    def __repr__(self):
        return "UNATTAINABLE"

    __str__ = __repr__


UNATTAINABLE = Unattainable.UNATTAINABLE

Mq = Union[int, Unattainable]


def mq_sum(values) -> Mq:
    total = 0
    for v in values:
        if v is UNATTAINABLE:
            return UNATTAINABLE
        total += v
    return total


def mq_min(values) -> Mq:
    finite = [v for v in values if v is not UNATTAINABLE]
    return min(finite) if finite else UNATTAINABLE


def _argbest(scores, better) -> int:
    """Index of the first best score; ties resolve to document order."""
    best = 0
    for i in range(1, len(scores)):
        if better(scores[i], scores[best]):
            best = i
    return best


@dataclass
class ApResult:
    values: dict[str, float]
    root: float
    critical_path: list[str]

    def __getitem__(self, path):
        return self.values[path]


@dataclass
class MqResult:
    values: dict[str, Mq]
    root: Mq
    critical_path: list[str]
    excluded: list[str] = field(default_factory=list)

    def __getitem__(self, path):
        return self.values[path]


# ------------------------------------------------------------------------ AP


def _ca_ap(node: CaNode, path, values) -> float:
    if node.gate is None:
        ap = float(node.prob)
    else:
        segs = child_labels(node)
        kids = [_ca_ap(c, f"{path}/{s}", values) for s, c in zip(segs, node.children)]
        ap = math.prod(kids) if node.gate == "AND" else max(kids)
    values[path] = ap
    return ap


def _ap(node, path, values) -> float:
    segs = child_labels(node)
    paths = [f"{path}/{s}" for s in segs]
    if isinstance(node, AemNode):
        ap = node.err * node.freq
    elif isinstance(node, CaNode):
        return _ca_ap(node, path, values)
    else:
        kids = [_ap(c, p, values) for c, p in zip(node.children, paths)]
        if isinstance(node, AemlNode):
            ap = max(kids, default=0.0)
        elif isinstance(node, CalNode):
            ap = math.prod(kids)
        elif isinstance(node, ScenarioNode):
            ap = kids[0] * kids[1]
        else:
            ap = math.fsum(w * a for w, a in zip(node.weights, kids))
    values[path] = ap
    return ap


def _ca_path(node: CaNode, path, score, pick) -> list[str]:
    """Critical nodes of a CA subtree: AND keeps all children, OR the best."""
    out = [path]
    if node.gate is None:
        return out
    items = [(f"{path}/{s}", c) for s, c in zip(child_labels(node), node.children)]
    if node.gate == "AND":
        chosen = items
    else:
        chosen = [items[pick([score(p) for p, _ in items])]]
    for p, c in chosen:
        out += _ca_path(c, p, score, pick)
    return out


def compute_ap(tree) -> ApResult:
    """Attack probability for every node plus the red critical path."""
    ensure_valid(tree)
    values: dict[str, float] = {}
    root_path = _escape(tree.label)
    root = _ap(tree, root_path, values)

    argmax = lambda scores: _argbest(scores, lambda a, b: a > b)  # noqa: E731
    crit = []
    node, path = tree, root_path
    while True:
        crit.append(path)
        paths = [f"{path}/{s}" for s in child_labels(node)]
        if isinstance(node, ChoiceNode):
            if not node.children:
                break
            i = argmax([w * values[p] for w, p in zip(node.weights, paths)])
            node, path = node.children[i], paths[i]
        elif isinstance(node, ScenarioNode):
            aeml, cal = node.children
            crit.append(paths[0])
            if aeml.children:
                aem_paths = [f"{paths[0]}/{s}" for s in child_labels(aeml)]
                crit.append(aem_paths[argmax([values[p] for p in aem_paths])])
            crit.append(paths[1])
            for s, ca in zip(child_labels(cal), cal.children):
                crit += _ca_path(ca, f"{paths[1]}/{s}", values.__getitem__, argmax)
            break
        else:  # pragma: no cover - choice chains always end at scenarios
            break
    return ApResult(values, root, crit)


# ------------------------------------------------------------------------ MQ


def _ca_mq(node: CaNode, path, values) -> Mq:
    if node.gate is None:
        mq = node.query
    else:
        kids = [_ca_mq(c, f"{path}/{s}", values) for s, c in zip(child_labels(node), node.children)]
        mq = mq_sum(kids) if node.gate == "AND" else mq_min(kids)
    values[path] = mq
    return mq


def _mq(node, path, values, excluded) -> Mq:
    if is_white_box(node):
        excluded.append(path)
        return UNATTAINABLE
    paths = [f"{path}/{s}" for s in child_labels(node)]
    if isinstance(node, AemNode):
        mq = node.query
    elif isinstance(node, CaNode):
        return _ca_mq(node, path, values)
    else:
        kids = [_mq(c, p, values, excluded) for c, p in zip(node.children, paths)]
        if isinstance(node, CalNode):
            mq = mq_sum(kids)
        elif isinstance(node, ScenarioNode):
            mq = mq_sum(kids)
        else:  # AEML, AEA, root: cheapest alternative
            mq = mq_min(kids)
    values[path] = mq
    return mq


def _mq_less(a, b) -> bool:
    if a is UNATTAINABLE:
        return False
    return b is UNATTAINABLE or a < b


def compute_mq(tree) -> MqResult:
    """Minimum queries over black-box routes plus the blue critical path."""
    ensure_valid(tree)
    values: dict[str, Mq] = {}
    excluded: list[str] = []
    root_path = _escape(tree.label)
    root = _mq(tree, root_path, values, excluded)

    argmin = lambda scores: _argbest(scores, _mq_less)  # noqa: E731
    crit: list[str] = []
    node, path = tree, root_path
    while root is not UNATTAINABLE:
        crit.append(path)
        paths = [f"{path}/{s}" for s in child_labels(node)]
        if isinstance(node, ChoiceNode):
            i = argmin([values.get(p, UNATTAINABLE) for p in paths])
            node, path = node.children[i], paths[i]
        elif isinstance(node, ScenarioNode):
            aeml, cal = node.children
            crit.append(paths[0])
            aem_paths = [f"{paths[0]}/{s}" for s in child_labels(aeml)]
            crit.append(aem_paths[argmin([values[p] for p in aem_paths])])
            crit.append(paths[1])
            for s, ca in zip(child_labels(cal), cal.children):
                crit += _ca_path(ca, f"{paths[1]}/{s}", values.__getitem__, argmin)
            break
        else:  # pragma: no cover
            break
    return MqResult(values, root, crit, excluded)


# -------------------------------------------------------------------- oracles


def _flat_ca_query(node: CaNode) -> Mq:
    # Explicit-stack evaluation so the oracle shares no code with _ca_mq.
    if node.gate is None:
        return node.query
    results = {}
    stack = [(node, False)]
    while stack:
        n, done = stack.pop()
        if n.gate is None:
            results[id(n)] = n.query
        elif done:
            kids = [results[id(c)] for c in n.children]
            finite = [k for k in kids if k is not UNATTAINABLE]
            if n.gate == "AND":
                results[id(n)] = sum(kids) if len(finite) == len(kids) else UNATTAINABLE
            else:
                results[id(n)] = min(finite) if finite else UNATTAINABLE
        else:
            stack.append((n, True))
            stack.extend((c, False) for c in n.children)
    return results[id(node)]


def enumerate_scenarios_mq(tree) -> list[tuple[str, Mq]]:
    """Flat list of ``(scenario path, mq)`` for every scenario not below a
    white-box node, computed directly from the scenario's own leaves."""
    ensure_valid(tree)
    out = []
    stack = [(_escape(tree.label), tree)]
    while stack:
        path, node = stack.pop()
        if is_white_box(node):
            continue
        if isinstance(node, ScenarioNode):
            queries = [aem.query for aem in node.aeml.children]
            best = min(queries) if queries else UNATTAINABLE
            cas = [_flat_ca_query(ca) for ca in node.cal.children]
            if best is UNATTAINABLE or UNATTAINABLE in cas:
                out.append((path, UNATTAINABLE))
            else:
                out.append((path, best + sum(cas)))
            continue
        for seg, child in reversed(list(zip(child_labels(node), node.children))):
            stack.append((f"{path}/{seg}", child))
    return out


@dataclass(frozen=True)
class MonteCarloEstimate:
    estimate: float
    stderr: float
    trials: int
    successes: int


def monte_carlo_ap(tree, trials: int, seed: int, *, backend: str | None = None) -> MonteCarloEstimate:
    """Estimate root AP by simulating attacks.

    Each trial samples a child at every weighted choice node, plays the
    highest-AP method at each AEML (and the highest-AP branch at each OR gate),
    and draws success for every method and CA leaf independently. The random
    stream is a single :class:`numpy.random.Generator` seeded with ``seed``.
    """
    from evasiontree import montecarlo

    if not isinstance(trials, int) or isinstance(trials, bool) or trials < 1:
        raise ValueError(f"trials must be a positive integer, got {trials!r}")
    ap = compute_ap(tree)
    program = montecarlo.compile_tree(tree, ap)
    successes = montecarlo.simulate(program, trials, seed, backend=backend)
    p = successes / trials
    return MonteCarloEstimate(p, math.sqrt(p * (1.0 - p) / trials), trials, successes)
