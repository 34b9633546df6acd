"""Graphviz DOT export with AP (red) and MQ (blue) critical paths."""

from __future__ import annotations

from evasiontree.engine import ApResult, MqResult
from evasiontree.model import AeaNode, CaNode, TreeError, child_labels, walk

SHAPES = {
    "root": "octagon",
    "aea": "ellipse",
    "scenario": "box",
    "aeml": "trapezium",
    "cal": "invtrapezium",
    "aem": "box3d",
    "ca": "box",
}

AP_COLOR = "red"
MQ_COLOR = "blue"


class AnnotationMismatch(TreeError):
    pass


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'


def _num(x) -> str:
    return f"{x:.6g}" if isinstance(x, float) else str(x)


def _check(paths: set[str], ap: ApResult | None, mq: MqResult | None):
    if ap is not None and set(ap.values) != paths:
        raise AnnotationMismatch("AP annotation was computed on a different tree")
    if mq is not None:
        covered = set(mq.values)
        excluded = tuple(p + "/" for p in mq.excluded)
        expected = {p for p in paths if p not in mq.excluded and not p.startswith(excluded)}
        if covered != expected:
            raise AnnotationMismatch("MQ annotation was computed on a different tree")


def render_dot(tree, *annotations) -> str:
    """DOT digraph for ``tree``; pass :class:`ApResult` and/or
    :class:`MqResult` objects computed on the same tree to annotate it."""
    ap = next((a for a in annotations if isinstance(a, ApResult)), None)
    mq = next((a for a in annotations if isinstance(a, MqResult)), None)
    if any(not isinstance(a, (ApResult, MqResult)) for a in annotations):
        raise TypeError("annotations must be ApResult or MqResult")
    nodes = list(walk(tree))
    _check({p for p, _ in nodes}, ap, mq)
    ids = {p: f"n{i}" for i, (p, _) in enumerate(nodes)}
    red = set(ap.critical_path) if ap else set()
    blue = set(mq.critical_path) if mq else set()
    excluded = set(mq.excluded) if mq else set()

    out = ["digraph evasiontree {", '  node [fontname="Helvetica"];', '  edge [fontname="Helvetica"];']
    for path, node in nodes:
        label = [node.label]
        if isinstance(node, AeaNode):
            label = [f"{node.dimension}: {node.value}"]
        elif isinstance(node, CaNode) and node.gate:
            label = [f"{node.label} [{node.gate}]"]
        if ap is not None:
            label.append(f"ap={_num(ap.values[path])}")
        if mq is not None:
            if path in mq.values:
                label.append(f"mq={_num(mq.values[path])}")
            elif path in excluded:
                label.append("mq=excluded")
        attrs = [f"label={_quote(chr(10).join(label))}", f"shape={SHAPES[node.kind]}"]
        if isinstance(node, CaNode) and node.gate is None:
            attrs.append('style="rounded"')
        if path in red or path in blue:
            attrs.append(f"color={AP_COLOR if path in red else MQ_COLOR}")
            attrs.append(f"fontcolor={MQ_COLOR if path in blue else AP_COLOR}")
            attrs.append("penwidth=2")
        out.append(f"  {ids[path]} [{' '.join(attrs)}];")
    for path, node in nodes:
        weights = getattr(node, "weights", None)
        child_paths = [f"{path}/{seg}" for seg in child_labels(node)]
        for i, child_path in enumerate(child_paths):
            attrs = []
            if weights is not None and i < len(weights) and weights[i] is not None:
                attrs.append(f"label={_quote(_num(float(weights[i])))}")
            if child_path in red and path in red:
                attrs.append(f"color={AP_COLOR}")
            elif child_path in blue and path in blue:
                attrs.append(f"color={MQ_COLOR}")
            suffix = f" [{' '.join(attrs)}]" if attrs else ""
            out.append(f"  {ids[path]} -> {ids[child_path]}{suffix};")
    out.append("}")
    return "\n".join(out) + "\n"
