"""Mitigation overlays and AP trade-off tables."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence, Union

from evasiontree.engine import UNATTAINABLE, Mq, compute_ap, compute_mq
from evasiontree.model import (
    AemNode,
    CaNode,
    ChoiceNode,
    ContractError,
    TreeError,
    child_labels,
    ensure_valid,
    map_nodes,
    scenario_attributes,
    validate_tree,
)

AUTO = "AUTO"
PLAIN = "Plain"


class MitigationError(TreeError):
    pass


class MitigationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ReplaceErr:
    """Overwrite ``err`` of the listed methods, optionally only where the
    attribute path above the scenario matches ``within``."""

    errors: Mapping[str, float]
    within: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for method, err in self.errors.items():
            if not 0.0 <= err <= 1.0:
                raise ValueError(f"replacement err for {method!r} outside [0, 1]: {err!r}")


@dataclass(frozen=True)
class ScaleCaProb:
    label: str
    factor: float

    def __post_init__(self):
        if not self.factor > 0:
            raise ValueError(f"factor must be positive, got {self.factor!r}")


@dataclass(frozen=True)
class ZeroAemIfQueryGt:
    """Zero ``err`` of every method needing more than ``threshold`` queries.
    ``AUTO`` uses the tree's minimum query."""

    threshold: Union[int, float, str] = AUTO

    def __post_init__(self):
        if self.threshold != AUTO and not self.threshold >= 0:
            raise ValueError(f"threshold must be nonnegative, got {self.threshold!r}")


@dataclass(frozen=True)
class SetWeight:
    parent: str
    child: str
    w: float


Transform = Union[ReplaceErr, ScaleCaProb, ZeroAemIfQueryGt, SetWeight]


@dataclass(frozen=True)
class MitigationSpec:
    name: str
    transforms: tuple[Transform, ...] = ()


def qr_threshold(tree) -> Mq:
    """Query-restriction threshold: the tree's minimum query."""
    return compute_mq(tree).root


def _scenario_attrs_by_prefix(tree):
    return sorted(scenario_attributes(tree).items(), key=lambda kv: -len(kv[0]))


def _apply_one(tree, t: Transform):
    hits = 0

    if isinstance(t, ReplaceErr):
        scen = _scenario_attrs_by_prefix(tree)

        def fn(path, node):
            nonlocal hits
            if not isinstance(node, AemNode) or node.method not in t.errors:
                return node
            attrs = next((a for p, a in scen if path.startswith(p + "/")), {})
            if any(attrs.get(dim) != value for dim, value in t.within.items()):
                return node
            hits += 1
            return replace(node, err=float(t.errors[node.method]))

    elif isinstance(t, ScaleCaProb):

        def fn(path, node):
            nonlocal hits
            if not isinstance(node, CaNode) or node.gate is not None or node.label != t.label:
                return node
            hits += 1
            return replace(node, prob=min(1.0, max(0.0, node.prob * t.factor)))

    elif isinstance(t, ZeroAemIfQueryGt):
        threshold = qr_threshold(tree) if t.threshold == AUTO else t.threshold
        if threshold is UNATTAINABLE:
            return tree

        def fn(path, node):
            nonlocal hits
            if isinstance(node, AemNode):
                hits += 1
                if node.query > threshold:
                    return replace(node, err=0.0)
            return node

    elif isinstance(t, SetWeight):

        def fn(path, node):
            nonlocal hits
            if path != t.parent or not isinstance(node, ChoiceNode):
                return node
            weights = list(node.weights)
            for j, (seg, child) in enumerate(zip(child_labels(node), node.children)):
                if t.child in (seg, child.label):
                    weights[j] = float(t.w)
                    hits += 1
            return replace(node, weights=tuple(weights))

    else:
        raise TypeError(f"unknown transform {t!r}")

    out = map_nodes(tree, fn)
    if not hits:
        warnings.warn(f"{t!r} matched no node", MitigationWarning, stacklevel=3)
    return out


def apply_mitigation(tree, spec: MitigationSpec):
    """Apply the transforms of ``spec`` in order and return the new tree.

    Raises :class:`MitigationError` when weight rebinding leaves a choice
    node whose weights no longer sum to one.
    """
    ensure_valid(tree)
    out = tree
    for t in spec.transforms:
        out = _apply_one(out, t)
    report = validate_tree(out)
    if not report.ok:
        raise MitigationError(f"mitigation {spec.name!r} breaks the tree: {ContractError(report)}")
    return out


def compose(specs: Sequence[MitigationSpec]) -> MitigationSpec:
    return MitigationSpec(
        " + ".join(s.name for s in specs),
        tuple(t for s in specs for t in s.transforms),
    )


@dataclass(frozen=True)
class TradeoffRow:
    label: str
    ap: float


@dataclass
class TradeoffTable:
    rows: list[TradeoffRow]

    def __getitem__(self, label: str) -> float:
        for row in self.rows:
            if row.label == label:
                return row.ap
        raise KeyError(label)

    @property
    def labels(self) -> list[str]:
        return [row.label for row in self.rows]


def tradeoff_table(
    tree,
    specs: Sequence[MitigationSpec],
    combos: Sequence[Sequence[str]],
    *,
    singletons: bool = True,
) -> TradeoffTable:
    """Root AP of the plain tree and of each mitigation combination.

    Rows come out as ``Plain``, then (unless ``singletons`` is off) one row per spec,
    then one per combo in the order given. A combo is the in-order
    composition of its specs and is labelled ``"A + B"``.
    """
    by_name = {s.name: s for s in specs}
    rows = [TradeoffRow(PLAIN, compute_ap(tree).root)]
    labels = {PLAIN}
    wanted = [[s.name] for s in specs] if singletons else []
    wanted += [list(c) for c in combos]
    for names in wanted:
        unknown = [n for n in names if n not in by_name]
        if unknown:
            raise MitigationError(f"unknown mitigation(s) in combo: {', '.join(unknown)}")
        spec = compose([by_name[n] for n in names])
        if spec.name in labels:
            continue
        labels.add(spec.name)
        rows.append(TradeoffRow(spec.name, compute_ap(apply_mitigation(tree, spec)).root))
    return TradeoffTable(rows)
