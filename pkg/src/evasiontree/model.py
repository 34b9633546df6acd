"""Node taxonomy, tree traversal and structural validation.

A tree is built from seven immutable node kinds:

    RootNode  -> AeaNode | ScenarioNode          (weighted choice)
    AeaNode   -> AeaNode | ScenarioNode          (weighted choice)
    ScenarioNode -> [AemlNode, CalNode]
    AemlNode  -> AemNode*
    CalNode   -> CaNode*
    CaNode    -> leaf (prob, query) or AND/OR gate over CaNode+

Trees are never mutated; transformations build new trees with
:func:`dataclasses.replace`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterator, Optional, Union

if TYPE_CHECKING:
    from evasiontree.construct import AemMatrix

DIMENSIONS = ("visibility", "scope", "computation", "knowledge")

# Column headers of the method matrix, one per dimension.
DIMENSION_HEADERS = {
    "visibility": "Perturbation Visibility",
    "scope": "Perturbation Scope",
    "computation": "Attack Computation",
    "knowledge": "Attacker's Knowledge",
}

WHITE_BOX = "White-box"

# Synonyms folded into canonical attribute values at parse time.
VALUE_ALIASES = {
    "knowledge": {"Full": WHITE_BOX},
}

WEIGHT_TOLERANCE = 1e-9


def canonical_value(dimension: str, value: str) -> str:
    value = value.strip()
    return VALUE_ALIASES.get(dimension, {}).get(value, value)


class TreeError(Exception):
    """Base class for errors raised by this package."""


class ContractError(TreeError):
    """An operation received a tree that does not pass validation."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        first = report.errors[0]
        more = len(report.errors) - 1
        suffix = f" (+{more} more)" if more else ""
        super().__init__(f"invalid tree: {first.rule} at {first.path}: {first.message}{suffix}")


@dataclass(frozen=True)
class AttributeVector:
    visibility: str
    scope: str
    computation: str
    knowledge: str

    def __post_init__(self):
        for dim in DIMENSIONS:
            raw = getattr(self, dim)
            if not isinstance(raw, str):
                raise TypeError(f"{dim} must be a string, got {type(raw).__name__}")
            value = canonical_value(dim, raw)
            if not value:
                raise ValueError(f"attribute {dim!r} is empty")
            object.__setattr__(self, dim, value)

    def items(self):
        return [(dim, getattr(self, dim)) for dim in DIMENSIONS]

    def as_tuple(self) -> tuple[str, str, str, str]:
        return (self.visibility, self.scope, self.computation, self.knowledge)

    def matches(self, partial: dict[str, str]) -> bool:
        """True if every dimension named in ``partial`` has the same value."""
        return all(getattr(self, dim) == value for dim, value in partial.items())


# --------------------------------------------------------------------- nodes


@dataclass(frozen=True)
class AemNode:
    """An adversarial example generation method usable in a scenario."""

    method: str
    err: Optional[float] = None
    freq: Optional[float] = None
    query: Optional[int] = None

    kind = "aem"

    @property
    def label(self) -> str:
        return self.method

    @property
    def children(self) -> tuple:
        return ()


@dataclass(frozen=True)
class CaNode:
    """A conventional attack step.

    A leaf carries ``prob`` and ``query``; a gate (``gate`` is ``"AND"`` or
    ``"OR"``) carries child steps instead.
    """

    label: str
    prob: Optional[float] = None
    query: Optional[int] = None
    gate: Optional[str] = None
    children: tuple["CaNode", ...] = ()

    kind = "ca"

    @property
    def is_leaf(self) -> bool:
        return self.gate is None


@dataclass(frozen=True)
class AemlNode:
    children: tuple[AemNode, ...] = ()

    kind = "aeml"
    label = "AEML"


@dataclass(frozen=True)
class CalNode:
    children: tuple[CaNode, ...] = ()

    kind = "cal"
    label = "CAL"


@dataclass(frozen=True)
class ScenarioNode:
    """An evasion attack scenario; children are exactly ``(AEML, CAL)``."""

    name: str
    children: tuple = ()

    kind = "scenario"

    @property
    def label(self) -> str:
        return self.name

    @property
    def aeml(self) -> AemlNode:
        return self.children[0]

    @property
    def cal(self) -> CalNode:
        return self.children[1]

    @classmethod
    def of(cls, name: str, aems=(), cas=()) -> "ScenarioNode":
        return cls(name, (AemlNode(tuple(aems)), CalNode(tuple(cas))))


@dataclass(frozen=True)
class AeaNode:
    """Branch on one method attribute. ``weights[i]`` belongs to ``children[i]``;
    ``None`` marks a weight still to be bound."""

    dimension: str
    value: str
    children: tuple = ()
    weights: tuple[Optional[float], ...] = ()

    kind = "aea"

    @property
    def label(self) -> str:
        return self.value


@dataclass(frozen=True)
class RootNode:
    label: str
    children: tuple = ()
    weights: tuple[Optional[float], ...] = ()

    kind = "root"


Node = Union[RootNode, AeaNode, ScenarioNode, AemlNode, AemNode, CalNode, CaNode]
ChoiceNode = (RootNode, AeaNode)


def is_white_box(node) -> bool:
    return isinstance(node, AeaNode) and node.dimension == "knowledge" and node.value == WHITE_BOX


# ----------------------------------------------------------------- addressing


def _escape(label: str) -> str:
    return label.replace("\\", "\\\\").replace("/", "\\/").replace("#", "\\#")


def child_labels(node) -> list[str]:
    """Path segments of the children of ``node``; duplicate labels get
    ``#1``, ``#2``... in document order."""
    labels = [_escape(child.label) for child in node.children]
    counts: dict[str, int] = {}
    for label in labels:
        counts[label] = counts.get(label, 0) + 1
    seen: dict[str, int] = {}
    out = []
    for label in labels:
        if counts[label] > 1:
            seen[label] = seen.get(label, 0) + 1
            out.append(f"{label}#{seen[label]}")
        else:
            out.append(label)
    return out


def walk(tree) -> Iterator[tuple[str, object]]:
    """Yield ``(path, node)`` for every node in document (pre)order."""
    stack = [(_escape(tree.label), tree)]
    while stack:
        path, node = stack.pop()
        yield path, node
        segs = child_labels(node)
        for seg, child in reversed(list(zip(segs, node.children))):
            stack.append((f"{path}/{seg}", child))


def node_path(tree, node) -> str:
    """Canonical slash-separated path of ``node`` (looked up by identity)."""
    for path, candidate in walk(tree):
        if candidate is node:
            return path
    raise LookupError(f"node {node!r} is not part of this tree")


def find(tree, path: str):
    """Return the node at ``path``; raises :class:`LookupError` otherwise."""
    for candidate_path, node in walk(tree):
        if candidate_path == path:
            return node
    raise LookupError(f"no node at path {path!r}")


def scenarios(tree) -> Iterator[tuple[str, ScenarioNode]]:
    for path, node in walk(tree):
        if isinstance(node, ScenarioNode):
            yield path, node


def scenario_attributes(tree) -> dict[str, dict[str, str]]:
    """Map scenario path -> partial attribute assignment from its AEA ancestors."""
    out: dict[str, dict[str, str]] = {}

    def visit(node, path, attrs):
        if isinstance(node, ScenarioNode):
            out[path] = dict(attrs)
            return
        if not isinstance(node, ChoiceNode):
            return
        for seg, child in zip(child_labels(node), node.children):
            inner = attrs
            if isinstance(child, AeaNode):
                inner = {**attrs, child.dimension: child.value}
            visit(child, f"{path}/{seg}", inner)

    visit(tree, _escape(tree.label), {})
    return out


def replace_at(tree, path: str, new_node):
    """Return a copy of ``tree`` with the node at ``path`` swapped for ``new_node``."""
    mapping = {path: new_node}
    return map_nodes(tree, lambda p, n: mapping.get(p, n))


def map_nodes(tree, fn):
    """Rebuild ``tree`` bottom-up, replacing each node by ``fn(path, node)``.

    ``fn`` sees nodes whose children have already been mapped. Nodes for which
    nothing changed are reused, so an identity ``fn`` returns ``tree`` itself.
    """
    from dataclasses import replace

    def rec(node, path):
        children = node.children
        if children:
            new_children = tuple(
                rec(child, f"{path}/{seg}") for seg, child in zip(child_labels(node), children)
            )
            if any(a is not b for a, b in zip(new_children, children)):
                node = replace(node, children=new_children)
        return fn(path, node)

    return rec(tree, _escape(tree.label))


# ----------------------------------------------------------------- validation

ERROR = "ERROR"
WARNING = "WARNING"


@dataclass(frozen=True)
class Finding:
    severity: str
    rule: str
    path: str
    message: str

    def __str__(self):
        return f"{self.severity} {self.rule} {self.path}: {self.message}"


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    @property
    def errors(self) -> list[Finding]:
        return [f for f in self.findings if f.severity == ERROR]

    @property
    def ok(self) -> bool:
        return not self.errors

    def __bool__(self):
        return bool(self.findings)

    def __str__(self):
        if not self.findings:
            return "OK: no findings"
        return "\n".join(str(f) for f in self.findings)


def _is_prob(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and 0.0 <= x <= 1.0


def _is_query(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool) and x >= 0


class _Validator:
    def __init__(self, matrix, require_parameters):
        self.matrix = matrix
        self.require_parameters = require_parameters
        self.findings: list[Finding] = []

    def error(self, rule, path, message):
        self.findings.append(Finding(ERROR, rule, path, message))

    def run(self, tree):
        root_path = _escape(getattr(tree, "label", "?"))
        if not isinstance(tree, RootNode):
            self.error("root-kind", root_path, f"tree must start at a root node, got {type(tree).__name__}")
            return
        if not tree.label:
            self.error("empty-label", root_path, "root label is empty")
        self.choice(tree, root_path, {}, 0)

    def choice(self, node, path, attrs, level):
        segs = child_labels(node)
        if len(node.weights) != len(node.children):
            self.error("weights-arity", path, f"{len(node.children)} children but {len(node.weights)} weights")
        else:
            self.weights(node, path, segs)
        for seg, child in zip(segs, node.children):
            cpath = f"{path}/{seg}"
            if isinstance(child, AeaNode):
                if child.dimension not in DIMENSIONS:
                    self.error("aea-dimension", cpath, f"unknown attribute dimension {child.dimension!r}")
                    continue
                if not child.value:
                    self.error("empty-label", cpath, "attribute value is empty")
                order = DIMENSIONS.index(child.dimension)
                if child.dimension in attrs:
                    self.error("aea-order", cpath, f"dimension {child.dimension!r} repeated on path")
                elif order < level:
                    self.error(
                        "aea-order", cpath,
                        f"dimension {child.dimension!r} appears after {DIMENSIONS[level - 1]!r}",
                    )
                self.choice(child, cpath, {**attrs, child.dimension: child.value}, max(level, order + 1))
            elif isinstance(child, ScenarioNode):
                self.scenario(child, cpath, attrs)
            else:
                self.error("child-kind", cpath, f"{type(child).__name__} cannot be a child of {type(node).__name__}")

    def weights(self, node, path, segs):
        missing = [seg for seg, w in zip(segs, node.weights) if w is None]
        if missing:
            self.error("weight-unset", path, "unbound edge weight for " + ", ".join(missing))
            return
        for seg, w in zip(segs, node.weights):
            if not _is_prob(w):
                self.error("weight-range", f"{path}/{seg}", f"weight {w!r} outside [0, 1]")
                return
        total = math.fsum(node.weights)
        if abs(total - 1.0) > WEIGHT_TOLERANCE:
            self.error("weights-sum", path, f"child weights sum to {total!r}, expected 1")

    def scenario(self, node, path, attrs):
        kids = node.children
        if not node.name:
            self.error("empty-label", path, "scenario name is empty")
        if len(kids) != 2 or not isinstance(kids[0], AemlNode) or not isinstance(kids[1], CalNode):
            got = ", ".join(type(k).__name__ for k in kids) or "nothing"
            self.error("scenario-arity", path, f"scenario needs exactly one AEML and one CAL, got {got}")
            return
        aeml_path, cal_path = (f"{path}/{seg}" for seg in child_labels(node))
        for seg, aem in zip(child_labels(kids[0]), kids[0].children):
            self.aem(aem, f"{aeml_path}/{seg}", attrs)
        for seg, ca in zip(child_labels(kids[1]), kids[1].children):
            self.ca(ca, f"{cal_path}/{seg}")

    def aem(self, node, path, attrs):
        if not isinstance(node, AemNode):
            self.error("child-kind", path, f"AEML may only hold AEM nodes, got {type(node).__name__}")
            return
        self.param(path, "err", node.err, _is_prob)
        self.param(path, "freq", node.freq, _is_prob)
        self.param(path, "query", node.query, _is_query)
        if self.matrix is None:
            return
        row = self.matrix.get(node.method)
        if row is None:
            self.error("unknown-method", path, f"method {node.method!r} has no matrix row")
            return
        for dim, value in attrs.items():
            if getattr(row, dim) != value:
                self.error(
                    "attribute-mismatch", path,
                    f"{node.method} has {dim}={getattr(row, dim)!r} but the path requires {value!r}",
                )

    def ca(self, node, path):
        if not isinstance(node, CaNode):
            self.error("child-kind", path, f"CAL may only hold CA nodes, got {type(node).__name__}")
            return
        if not node.label:
            self.error("empty-label", path, "CA label is empty")
        if node.gate is None:
            if node.children:
                self.error("ca-leaf-children", path, "leaf CA has children; set a gate")
            self.param(path, "prob", node.prob, _is_prob)
            self.param(path, "query", node.query, _is_query)
            return
        if node.gate not in ("AND", "OR"):
            self.error("gate-kind", path, f"unknown gate {node.gate!r}")
        if not node.children:
            self.error("gate-empty", path, f"{node.gate} gate without children")
        for seg, child in zip(child_labels(node), node.children):
            self.ca(child, f"{path}/{seg}")

    def param(self, path, name, value, check):
        if value is None:
            if self.require_parameters:
                self.error("param-unset", path, f"{name} is not bound")
        elif not check(value):
            self.error("param-range", path, f"{name}={value!r} is out of range")


def validate_tree(tree, matrix: "AemMatrix | None" = None, *, require_parameters: bool = True) -> ValidationReport:
    """Collect every structural violation of ``tree``.

    Without a ``matrix`` the method attribute check is skipped. With
    ``require_parameters=False`` unbound leaf parameters are tolerated (edge
    weights are always required).
    """
    v = _Validator(matrix, require_parameters)
    v.run(tree)
    return ValidationReport(v.findings)


def ensure_valid(tree, matrix=None) -> None:
    report = validate_tree(tree, matrix)
    if not report.ok:
        raise ContractError(report)
