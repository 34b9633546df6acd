"""Systematic tree construction from a method matrix and attack scenarios."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from functools import reduce
from typing import Iterable, Optional, Union

from evasiontree.model import (
    DIMENSIONS,
    AeaNode,
    AemNode,
    AttributeVector,
    CaNode,
    ChoiceNode,
    RootNode,
    ScenarioNode,
    TreeError,
    _escape,
    child_labels,
    map_nodes,
    walk,
)

AUTO = "AUTO"


class ConstructionError(TreeError):
    pass


class MergeError(TreeError):
    pass


class BindingError(TreeError):
    def __init__(self, missing: list[str]):
        self.missing = missing
        super().__init__("missing bindings for: " + ", ".join(missing))


class BindingWarning(UserWarning):
    pass


@dataclass(frozen=True)
class MatrixRow:
    name: str
    attributes: AttributeVector


class AemMatrix:
    """Ordered, name-unique table of methods and their attribute vectors."""

    def __init__(self, rows: Iterable[MatrixRow] = ()):
        self.rows: tuple[MatrixRow, ...] = tuple(rows)
        self._by_name: dict[str, AttributeVector] = {}
        for row in self.rows:
            if not row.name:
                raise ValueError("method name is empty")
            if row.name in self._by_name:
                raise ValueError(f"duplicate method {row.name!r}")
            self._by_name[row.name] = row.attributes

    @classmethod
    def of(cls, entries: dict[str, tuple[str, str, str, str]]) -> "AemMatrix":
        return cls(MatrixRow(name, AttributeVector(*attrs)) for name, attrs in entries.items())

    def get(self, name: str) -> Optional[AttributeVector]:
        return self._by_name.get(name)

    def __getitem__(self, name: str) -> AttributeVector:
        return self._by_name[name]

    def __contains__(self, name) -> bool:
        return name in self._by_name

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def __eq__(self, other):
        return isinstance(other, AemMatrix) and self.rows == other.rows

    def __repr__(self):
        return f"AemMatrix({[row.name for row in self.rows]})"


@dataclass(frozen=True)
class EasRecord:
    """An evasion attack scenario: attributes, conventional attack steps and
    the methods usable with it (or :data:`AUTO` to derive them)."""

    name: str
    attributes: AttributeVector
    conventional_attacks: tuple[str, ...] = ()
    available_methods: Union[tuple[str, ...], str] = AUTO

    def methods(self, matrix: AemMatrix) -> list[str]:
        if self.available_methods == AUTO:
            return derive_available_methods(matrix, self.attributes)
        return list(self.available_methods)

    def check(self, matrix: AemMatrix) -> None:
        for method in self.methods(matrix):
            attrs = matrix.get(method)
            if attrs is None:
                raise ConstructionError(f"scenario {self.name!r}: method {method!r} is not in the matrix")
            if attrs != self.attributes:
                raise ConstructionError(
                    f"scenario {self.name!r}: method {method!r} has attributes {attrs.as_tuple()} "
                    f"but the scenario is {self.attributes.as_tuple()}"
                )


def derive_available_methods(matrix: AemMatrix, attrs: AttributeVector) -> list[str]:
    return [row.name for row in matrix if row.attributes == attrs]


def check_coverage(matrix: AemMatrix, scenarios: Iterable[EasRecord]) -> list[str]:
    """Matrix methods used by no scenario, in matrix order (empty = covered)."""
    used = set()
    for eas in scenarios:
        used.update(eas.methods(matrix))
    return [row.name for row in matrix if row.name not in used]


# -------------------------------------------------------------- construction


def scenario_to_tree(objective: str, eas: EasRecord, matrix: AemMatrix) -> RootNode:
    """Translate one scenario into a root-to-leaf chain with all four
    attribute levels; parameters stay unbound."""
    eas.check(matrix)
    node = ScenarioNode.of(
        eas.name,
        (AemNode(m) for m in eas.methods(matrix)),
        (CaNode(label) for label in eas.conventional_attacks),
    )
    for dim in reversed(DIMENSIONS):
        node = AeaNode(dim, getattr(eas.attributes, dim), (node,), (1.0,))
    return RootNode(objective, (node,), (1.0,))


def _key(node):
    if isinstance(node, AeaNode):
        return ("aea", node.dimension, node.value)
    return (node.kind, node.label)


def _merge(a, b, path):
    if isinstance(a, ScenarioNode):
        if a != b:
            raise MergeError(f"scenario {a.name!r} at {path} has conflicting definitions")
        return a
    merged = list(a.children)
    index = {_key(c): i for i, c in enumerate(merged)}
    novel = False
    for child in b.children:
        i = index.get(_key(child))
        if i is None:
            index[_key(child)] = len(merged)
            merged.append(child)
            novel = True
        else:
            merged[i] = _merge(merged[i], child, f"{path}/{_escape(child.label)}")
    if not novel:
        return replace(a, children=tuple(merged))
    weights = (1.0,) if len(merged) == 1 else (None,) * len(merged)
    return replace(a, children=tuple(merged), weights=weights)


def unify_trees(a: RootNode, b: RootNode) -> RootNode:
    """Merge ``b`` into ``a`` along their shared prefix.

    Children with equal kind and label are merged recursively; other children
    of ``b`` are appended after those of ``a``. A choice node that gains a
    child loses its weights, which must then be bound explicitly.
    """
    if not isinstance(a, RootNode) or not isinstance(b, RootNode):
        raise MergeError("both trees must start at a root node")
    if a.label != b.label:
        raise MergeError(f"root labels differ: {a.label!r} vs {b.label!r}")
    return _merge(a, b, _escape(a.label))


def build_at4ea(objective: str, scenarios: Iterable[EasRecord], matrix: AemMatrix) -> RootNode:
    scenarios = list(scenarios)
    if not scenarios:
        raise ConstructionError("at least one scenario is required")
    seen = set()
    for eas in scenarios:
        if eas.name in seen:
            raise ConstructionError(f"duplicate scenario name {eas.name!r}")
        seen.add(eas.name)
    trees = [scenario_to_tree(objective, eas, matrix) for eas in scenarios]
    return reduce(unify_trees, trees)


# ------------------------------------------------------------------ binding


@dataclass
class ParameterBinding:
    """Numeric parameters for a tree.

    ``aem`` / ``ca`` entries are dicts with either a ``path`` key or the
    ``scenario`` + ``method`` (resp. ``label``) shorthand, plus the values
    (``err``, ``freq``, ``query`` / ``prob``, ``query``). ``methods`` gives
    per-method defaults applied wherever the method occurs. ``weights``
    entries hold ``parent`` path, ``child`` label and ``w``.
    """

    aem: list[dict] = field(default_factory=list)
    ca: list[dict] = field(default_factory=list)
    methods: dict[str, dict] = field(default_factory=dict)
    weights: list[dict] = field(default_factory=list)


AEM_FIELDS = ("err", "freq", "query")
CA_FIELDS = ("prob", "query")


def _scenario_of(path: str, tree_scenarios: dict[str, str]) -> Optional[str]:
    for spath, name in tree_scenarios.items():
        if path.startswith(spath + "/"):
            return name
    return None


def bind_parameters(tree: RootNode, binding: ParameterBinding) -> RootNode:
    """Return a copy of ``tree`` with parameters and weights from ``binding``.

    Exact-path entries win over scenario shorthand, which wins over method
    defaults. A leaf ``query`` left unbound defaults to 0. Raises
    :class:`BindingError` for leaves or multi-child edges still unbound;
    entries that match nothing emit a :class:`BindingWarning`.
    """
    scen = {p: n.name for p, n in walk(tree) if isinstance(n, ScenarioNode)}
    used: set[tuple[str, int]] = set()

    def lookup(section, entries, path, node, label_key, fields):
        values = {}
        if section == "aem":
            values.update({k: v for k, v in binding.methods.get(node.method, {}).items() if k in fields})
            if node.method in binding.methods:
                used.add(("methods", node.method))
        name = _scenario_of(path, scen)
        for i, entry in enumerate(entries):
            if "path" not in entry and entry.get("scenario") == name and entry.get(label_key) == node.label:
                values.update({k: entry[k] for k in fields if k in entry})
                used.add((section, i))
        for i, entry in enumerate(entries):
            if entry.get("path") == path:
                values.update({k: entry[k] for k in fields if k in entry})
                used.add((section, i))
        return values

    weight_entries: dict[str, dict[str, tuple[int, float]]] = {}
    for i, entry in enumerate(binding.weights):
        weight_entries.setdefault(entry["parent"], {})[entry["child"]] = (i, entry["w"])

    missing: list[str] = []

    def bind(path, node):
        if isinstance(node, AemNode):
            vals = lookup("aem", binding.aem, path, node, "method", AEM_FIELDS)
            node = replace(node, **vals)
            if node.query is None:
                node = replace(node, query=0)
            missing.extend(f"{path} ({f})" for f in ("err", "freq") if getattr(node, f) is None)
        elif isinstance(node, CaNode) and node.gate is None:
            vals = lookup("ca", binding.ca, path, node, "label", CA_FIELDS)
            node = replace(node, **vals)
            if node.query is None:
                node = replace(node, query=0)
            if node.prob is None:
                missing.append(f"{path} (prob)")
        elif isinstance(node, ChoiceNode):
            given = weight_entries.get(path, {})
            segs = child_labels(node)
            weights = list(node.weights)
            for j, (seg, child) in enumerate(zip(segs, node.children)):
                hit = given.get(seg, given.get(child.label))
                if hit is not None:
                    used.add(("weights", hit[0]))
                    weights[j] = hit[1]
            if len(weights) == 1 and weights[0] is None:
                weights[0] = 1.0
            missing.extend(f"{path}/{seg} (weight)" for seg, w in zip(segs, weights) if w is None)
            node = replace(node, weights=tuple(weights))
        return node

    bound = map_nodes(tree, bind)
    if missing:
        raise BindingError(missing)
    for section, entries in (("aem", binding.aem), ("ca", binding.ca), ("weights", binding.weights)):
        for i, entry in enumerate(entries):
            if (section, i) not in used:
                warnings.warn(f"{section} binding {entry!r} matches no node", BindingWarning, stacklevel=2)
    for method in binding.methods:
        if ("methods", method) not in used:
            warnings.warn(f"method defaults for {method!r} match no node", BindingWarning, stacklevel=2)
    return bound
