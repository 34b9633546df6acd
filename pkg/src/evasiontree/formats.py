"""File formats.

=============  ===========================================================
matrix         CSV, header ``Attack,Perturbation Visibility,...``
scenarios      YAML list of scenario mappings
binding        YAML mapping with ``methods``, ``aem``, ``ca``, ``weights``
mitigations    YAML list of named transform lists
project        YAML mapping tying the files above together
tree           indented text, one node per line (``.at4ea``)
=============  ===========================================================

Every parser raises :class:`ParseError` carrying the line of the problem.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from evasiontree.construct import AUTO, AemMatrix, EasRecord, MatrixRow, ParameterBinding
from evasiontree.mitigation import (
    MitigationSpec,
    ReplaceErr,
    ScaleCaProb,
    SetWeight,
    ZeroAemIfQueryGt,
)
from evasiontree.model import (
    DIMENSION_HEADERS,
    DIMENSIONS,
    AeaNode,
    AemlNode,
    AemNode,
    AttributeVector,
    CalNode,
    CaNode,
    RootNode,
    ScenarioNode,
    TreeError,
    canonical_value,
)

MATRIX_HEADER = ["Attack"] + [DIMENSION_HEADERS[d] for d in DIMENSIONS]
TREE_MAGIC = "# evasiontree tree v1"


class ParseError(TreeError):
    def __init__(self, message: str, line: Optional[int] = None, source: Optional[str] = None):
        self.message = message
        self.line = line
        self.source = source
        where = ":".join(str(x) for x in (source, line) if x is not None)
        super().__init__(f"{where}: {message}" if where else message)


def _text(data) -> str:
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"not UTF-8: {exc}") from None
    return data.lstrip("\ufeff")


# -------------------------------------------------------------------- matrix


def parse_matrix_file(data) -> AemMatrix:
    rows: list[MatrixRow] = []
    seen: dict[str, int] = {}
    reader = csv.reader(io.StringIO(_text(data)))
    header = next(reader, None)
    if header is None:
        raise ParseError("empty file: missing header", 1)
    if [h.strip() for h in header] != MATRIX_HEADER:
        raise ParseError(f"header must be {','.join(MATRIX_HEADER)!r}", 1)
    for record in reader:
        line = reader.line_num
        if not record or all(not cell.strip() for cell in record):
            continue
        if len(record) != len(MATRIX_HEADER):
            raise ParseError(f"expected {len(MATRIX_HEADER)} cells, got {len(record)}", line)
        cells = [cell.strip() for cell in record]
        for name, cell in zip(MATRIX_HEADER, cells):
            if not cell:
                raise ParseError(f"empty cell in column {name!r}", line)
        name = cells[0]
        if name in seen:
            raise ParseError(f"duplicate method {name!r} (first on line {seen[name]})", line)
        seen[name] = line
        rows.append(MatrixRow(name, AttributeVector(*cells[1:])))
    return AemMatrix(rows)


def serialize_matrix(matrix: AemMatrix) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MATRIX_HEADER)
    for row in matrix:
        writer.writerow([row.name, *row.attributes.as_tuple()])
    return buf.getvalue()


# ---------------------------------------------------------------------- YAML


class _Mapping(dict):
    line = None


class _Loader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node):
    loader.flatten_mapping(node)
    out = _Mapping(loader.construct_pairs(node, deep=True))
    out.line = node.start_mark.line + 1
    return out


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def _load_yaml(data):
    try:
        return yaml.load(_text(data), Loader=_Loader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ParseError(f"invalid YAML: {getattr(exc, 'problem', exc)}", mark.line + 1 if mark else None) from None


def _line(obj):
    return getattr(obj, "line", None)


def _require_mapping(obj, what, line=None) -> _Mapping:
    if not isinstance(obj, dict):
        raise ParseError(f"{what} must be a mapping", _line(obj) or line)
    return obj


def _check_keys(entry, allowed, what):
    unknown = [k for k in entry if k not in allowed]
    if unknown:
        raise ParseError(f"unknown key(s) in {what}: {', '.join(map(str, unknown))}", _line(entry))


def _str(entry, key, what) -> str:
    if key not in entry:
        raise ParseError(f"{what} is missing key {key!r}", _line(entry))
    value = entry[key]
    if not isinstance(value, (str, int, float)) or isinstance(value, bool) or str(value).strip() == "":
        raise ParseError(f"{what}: {key!r} must be a nonempty string", _line(entry))
    return str(value).strip()


def _prob(entry, key, what) -> float:
    value = entry[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not 0.0 <= value <= 1.0:
        raise ParseError(f"{what}: {key!r} must be a number in [0, 1], got {value!r}", _line(entry))
    return float(value)


def _count(entry, key, what) -> int:
    value = entry[key]
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise ParseError(f"{what}: {key!r} must be a nonnegative integer, got {value!r}", _line(entry))
    return value


def _list_of(doc, key, what):
    if doc is None:
        return []
    if isinstance(doc, list):
        return doc
    if isinstance(doc, dict) and set(doc) <= {key}:
        items = doc.get(key) or []
        if not isinstance(items, list):
            raise ParseError(f"{key!r} must be a list", _line(doc))
        return items
    raise ParseError(f"{what} must be a list or a mapping with a single {key!r} key", _line(doc))


# ----------------------------------------------------------------- scenarios

SCENARIO_KEYS = {"name", "attributes", "conventional_attacks", "available_methods", *DIMENSIONS}


def _str_list(entry, key, what) -> list[str]:
    value = entry.get(key) or []
    if not isinstance(value, list):
        raise ParseError(f"{what}: {key!r} must be a list", _line(entry))
    out = []
    for item in value:
        if isinstance(item, bool) or not isinstance(item, (str, int, float)) or not str(item).strip():
            raise ParseError(f"{what}: {key!r} entries must be nonempty strings", _line(entry))
        out.append(str(item).strip())
    return out


def parse_scenarios_file(data) -> list[EasRecord]:
    """Scenario records in document order; ``available_methods: AUTO`` (or a
    missing key) is kept as :data:`AUTO` and resolved at build time."""
    out = []
    for item in _list_of(_load_yaml(data), "scenarios", "scenario document"):
        entry = _require_mapping(item, "scenario")
        _check_keys(entry, SCENARIO_KEYS, "scenario")
        name = _str(entry, "name", "scenario")
        what = f"scenario {name!r}"
        attrs = dict(entry)
        if "attributes" in entry:
            nested = _require_mapping(entry["attributes"], f"{what}: attributes", _line(entry))
            bad = [k for k in nested if k not in DIMENSIONS]
            if bad:
                raise ParseError(f"{what}: unknown attribute dimension(s) {', '.join(map(str, bad))}", _line(nested))
            clash = [k for k in nested if k in entry]
            if clash:
                raise ParseError(f"{what}: {', '.join(clash)} given twice", _line(entry))
            attrs.update(nested)
        vector = AttributeVector(*(canonical_value(d, _str(attrs, d, what)) for d in DIMENSIONS))
        cas = _str_list(entry, "conventional_attacks", what)
        methods = entry.get("available_methods", AUTO)
        if methods != AUTO:
            methods = tuple(_str_list(entry, "available_methods", what))
        out.append(EasRecord(name, vector, tuple(cas), methods))
    return out


def serialize_scenarios(records) -> str:
    docs = []
    for eas in records:
        doc = {"name": eas.name}
        doc.update(eas.attributes.items())
        doc["conventional_attacks"] = list(eas.conventional_attacks)
        methods = eas.available_methods
        doc["available_methods"] = AUTO if methods == AUTO else list(methods)
        docs.append(doc)
    return yaml.safe_dump({"scenarios": docs}, sort_keys=False, allow_unicode=True, width=1000)


# ------------------------------------------------------------------- binding


def parse_binding_file(data) -> ParameterBinding:
    doc = _load_yaml(data)
    if doc is None:
        return ParameterBinding()
    doc = _require_mapping(doc, "binding document")
    _check_keys(doc, {"methods", "aem", "ca", "weights"}, "binding document")
    binding = ParameterBinding()

    methods = _require_mapping(doc.get("methods") or _Mapping(), "methods", _line(doc))
    for method, values in methods.items():
        values = _require_mapping(values, f"methods.{method}", _line(methods))
        _check_keys(values, {"err", "freq", "query"}, f"methods.{method}")
        binding.methods[str(method)] = _values(values, f"methods.{method}")

    for section, label_key, fields in (("aem", "method", ("err", "freq", "query")), ("ca", "label", ("prob", "query"))):
        items = doc.get(section) or []
        if not isinstance(items, list):
            raise ParseError(f"{section!r} must be a list", _line(doc))
        for item in items:
            entry = _require_mapping(item, f"{section} entry", _line(doc))
            _check_keys(entry, {"path", "scenario", label_key, *fields}, f"{section} entry")
            if "path" in entry:
                key = {"path": _str(entry, "path", f"{section} entry")}
            else:
                key = {
                    "scenario": _str(entry, "scenario", f"{section} entry"),
                    label_key: _str(entry, label_key, f"{section} entry"),
                }
            getattr(binding, section).append({**key, **_values(entry, f"{section} entry", fields)})

    items = doc.get("weights") or []
    if not isinstance(items, list):
        raise ParseError("'weights' must be a list", _line(doc))
    for item in items:
        entry = _require_mapping(item, "weights entry", _line(doc))
        _check_keys(entry, {"parent", "child", "w"}, "weights entry")
        if "w" not in entry:
            raise ParseError("weights entry is missing key 'w'", _line(entry))
        binding.weights.append({
            "parent": _str(entry, "parent", "weights entry"),
            "child": _str(entry, "child", "weights entry"),
            "w": _prob(entry, "w", "weights entry"),
        })
    return binding


def _values(entry, what, fields=("err", "freq", "prob", "query")) -> dict:
    out = {}
    for key in fields:
        if key in entry:
            out[key] = _count(entry, key, what) if key == "query" else _prob(entry, key, what)
    return out


# --------------------------------------------------------------- mitigations


def _threshold(entry, what):
    value = entry.get("threshold", AUTO)
    if value == AUTO:
        return AUTO
    if isinstance(value, float) and math.isinf(value) and value > 0:
        return value
    if isinstance(value, str) and value.strip().lower() in ("inf", "infinity"):
        return math.inf
    return _count(entry, "threshold", what)


def parse_mitigations_file(data) -> list[MitigationSpec]:
    specs = []
    names = set()
    for item in _list_of(_load_yaml(data), "mitigations", "mitigation document"):
        entry = _require_mapping(item, "mitigation")
        _check_keys(entry, {"name", "transforms"}, "mitigation")
        name = _str(entry, "name", "mitigation")
        if name in names:
            raise ParseError(f"duplicate mitigation {name!r}", _line(entry))
        names.add(name)
        transforms = []
        raw = entry.get("transforms") or []
        if not isinstance(raw, list):
            raise ParseError(f"mitigation {name!r}: transforms must be a list", _line(entry))
        for t in raw:
            t = _require_mapping(t, f"mitigation {name!r} transform", _line(entry))
            if len(t) != 1:
                raise ParseError("each transform is a mapping with exactly one key", _line(t))
            ((kind, args),) = t.items()
            what = f"mitigation {name!r}: {kind}"
            args = _require_mapping(args, what, _line(t))
            try:
                transforms.append(_transform(kind, args, what))
            except ValueError as exc:
                raise ParseError(f"{what}: {exc}", _line(args)) from None
        specs.append(MitigationSpec(name, tuple(transforms)))
    return specs


def _transform(kind, args, what):
    if kind == "replace_err":
        _check_keys(args, {"errors", "within"}, what)
        errors = _require_mapping(args.get("errors"), f"{what}: errors", _line(args))
        within = _require_mapping(args.get("within") or _Mapping(), f"{what}: within", _line(args))
        bad = [k for k in within if k not in DIMENSIONS]
        if bad:
            raise ParseError(f"{what}: unknown attribute dimension(s) {', '.join(map(str, bad))}", _line(within))
        return ReplaceErr(
            {str(m): _prob(errors, m, what) for m in errors},
            {d: canonical_value(d, str(v)) for d, v in within.items()},
        )
    if kind == "scale_ca_prob":
        _check_keys(args, {"label", "factor"}, what)
        factor = args.get("factor")
        if isinstance(factor, bool) or not isinstance(factor, (int, float)):
            raise ParseError(f"{what}: factor must be a number", _line(args))
        return ScaleCaProb(_str(args, "label", what), float(factor))
    if kind == "zero_aem_if_query_gt":
        _check_keys(args, {"threshold"}, what)
        return ZeroAemIfQueryGt(_threshold(args, what))
    if kind == "set_weight":
        _check_keys(args, {"parent", "child", "w"}, what)
        return SetWeight(_str(args, "parent", what), _str(args, "child", what), _prob(args, "w", what))
    raise ParseError(f"unknown transform {kind!r}", _line(args))


# ------------------------------------------------------------------- project


@dataclass
class ProjectBundle:
    objective: str
    matrix: Path
    scenarios: list[Path]
    binding: Optional[Path] = None
    mitigations: list[Path] = field(default_factory=list)
    output: dict = field(default_factory=dict)
    root: Path = Path(".")


def _read(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except OSError as exc:
        raise ParseError(f"cannot read: {exc.strerror}", source=str(path)) from None


def load_project(path) -> ProjectBundle:
    path = Path(path)
    doc = _require_mapping(_load_yaml(_read(path)), "project document")
    _check_keys(doc, {"objective", "matrix", "scenarios", "binding", "mitigations", "output"}, "project")
    base = path.parent

    def paths(key):
        value = doc.get(key) or []
        value = [value] if isinstance(value, str) else value
        if not isinstance(value, list):
            raise ParseError(f"{key!r} must be a file name or a list of them", _line(doc), str(path))
        return [base / str(v) for v in value]

    bundle = ProjectBundle(
        objective=_str(doc, "objective", "project"),
        matrix=base / _str(doc, "matrix", "project"),
        scenarios=paths("scenarios"),
        binding=base / doc["binding"] if doc.get("binding") else None,
        mitigations=paths("mitigations"),
        output=dict(doc.get("output") or {}),
        root=base,
    )
    for p in [bundle.matrix, *bundle.scenarios, *bundle.mitigations] + ([bundle.binding] if bundle.binding else []):
        if not p.is_file():
            raise ParseError(f"referenced file {p} does not exist", _line(doc), str(path))
    return bundle


def _parse_file(parser, path: Path):
    try:
        return parser(_read(path))
    except ParseError as exc:
        if exc.source is None:
            raise ParseError(exc.message, exc.line, str(path)) from None
        raise
    except ValueError as exc:
        raise ParseError(str(exc), source=str(path)) from None


def read_matrix(path) -> AemMatrix:
    return _parse_file(parse_matrix_file, Path(path))


def read_scenarios(path) -> list[EasRecord]:
    return _parse_file(parse_scenarios_file, Path(path))


def read_binding(path) -> ParameterBinding:
    return _parse_file(parse_binding_file, Path(path))


def read_mitigations(path) -> list[MitigationSpec]:
    return _parse_file(parse_mitigations_file, Path(path))


def read_tree(path):
    return _parse_file(parse_tree_file, Path(path))


# ---------------------------------------------------------------------- tree


def _num(x) -> str:
    if isinstance(x, bool):
        raise TypeError("booleans are not numbers here")
    if isinstance(x, int):
        return str(x)
    return repr(float(x))


def _q(s: str) -> str:
    return json.dumps(s, ensure_ascii=False)


def _params(pairs) -> str:
    return "".join(f" {k}={_num(v)}" for k, v in pairs if v is not None)


def serialize_tree(tree) -> str:
    """Canonical text form. Floats use ``repr`` so parsing restores them exactly."""
    lines = [TREE_MAGIC]

    def emit(node, depth, weight):
        pad = "  " * depth
        w = _params([("w", weight)])
        if isinstance(node, RootNode):
            lines.append(f"{pad}root {_q(node.label)}")
        elif isinstance(node, AeaNode):
            lines.append(f"{pad}aea {node.dimension} {_q(node.value)}{w}")
        elif isinstance(node, ScenarioNode):
            lines.append(f"{pad}scenario {_q(node.name)}{w}")
        elif isinstance(node, AemlNode):
            lines.append(f"{pad}aeml")
        elif isinstance(node, CalNode):
            lines.append(f"{pad}cal")
        elif isinstance(node, AemNode):
            lines.append(f"{pad}aem {_q(node.method)}{_params([('err', node.err), ('freq', node.freq), ('query', node.query)])}")
        elif isinstance(node, CaNode):
            if node.gate is None:
                lines.append(f"{pad}ca {_q(node.label)}{_params([('prob', node.prob), ('query', node.query)])}")
            else:
                lines.append(f"{pad}ca {_q(node.label)} gate={node.gate}")
        else:
            raise TypeError(f"cannot serialize {type(node).__name__}")
        weights = getattr(node, "weights", None)
        for i, child in enumerate(node.children):
            emit(child, depth + 1, weights[i] if weights is not None and i < len(weights) else None)

    emit(tree, 0, None)
    return "\n".join(lines) + "\n"


_TOKEN = re.compile(r'\s*(?:(?P<str>")|(?P<kv>[a-z]+)=(?P<val>[^\s"]+)|(?P<word>[^\s"=]+))')

_KIND_ARGS = {
    "root": (["str"], set()),
    "aea": (["word", "str"], {"w"}),
    "scenario": (["str"], {"w"}),
    "aeml": ([], set()),
    "cal": ([], set()),
    "aem": (["str"], {"err", "freq", "query"}),
    "ca": (["str"], {"prob", "query", "gate"}),
}

_CHILD_KINDS = {
    "root": {"aea", "scenario"},
    "aea": {"aea", "scenario"},
    "scenario": {"aeml", "cal"},
    "aeml": {"aem"},
    "cal": {"ca"},
    "aem": set(),
    "ca": {"ca"},
}


@dataclass
class _Raw:
    kind: str
    args: list
    params: dict
    line: int
    children: list = field(default_factory=list)


def _tokenize(text: str, lineno: int):
    pos = 0
    tokens = []
    decoder = json.JSONDecoder()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected character at column {pos + 1}", lineno)
        if m.group("str"):
            start = m.start("str")
            try:
                value, end = decoder.raw_decode(text, start)
            except json.JSONDecodeError as exc:
                raise ParseError(f"bad string at column {start + 1}: {exc.msg}", lineno) from None
            tokens.append(("str", value))
            pos = end
        elif m.group("kv"):
            tokens.append(("kv", (m.group("kv"), m.group("val"))))
            pos = m.end()
        elif m.group("word"):
            tokens.append(("word", m.group("word")))
            pos = m.end()
        else:
            break
    return tokens


def _parse_number(key, raw, lineno):
    try:
        if key == "query":
            if not re.fullmatch(r"\d+", raw):
                raise ValueError
            return int(raw)
        value = float(raw)
        if not math.isfinite(value):
            raise ValueError
        return value
    except ValueError:
        raise ParseError(f"bad value for {key}: {raw!r}", lineno) from None


def _parse_line(text: str, lineno: int) -> _Raw:
    tokens = _tokenize(text, lineno)
    if not tokens or tokens[0][0] != "word":
        raise ParseError("expected a node kind", lineno)
    kind = tokens[0][1]
    if kind not in _KIND_ARGS:
        raise ParseError(f"unknown node kind {kind!r}", lineno)
    shape, allowed = _KIND_ARGS[kind]
    positional = [t for t in tokens[1:] if t[0] != "kv"]
    if [t[0] for t in positional] != shape:
        raise ParseError(f"{kind} expects arguments {' '.join(shape) or '(none)'}", lineno)
    params = {}
    for key, raw in (t[1] for t in tokens[1:] if t[0] == "kv"):
        if key not in allowed:
            raise ParseError(f"{kind} does not take {key}=", lineno)
        if key in params:
            raise ParseError(f"{key}= given twice", lineno)
        params[key] = raw if key == "gate" else _parse_number(key, raw, lineno)
    if params.get("gate") not in (None, "AND", "OR"):
        raise ParseError(f"gate must be AND or OR, got {params['gate']!r}", lineno)
    return _Raw(kind, [t[1] for t in positional], params, lineno)


def _build(raw: _Raw):
    kids = raw.children
    for child in kids:
        if child.kind not in _CHILD_KINDS[raw.kind]:
            raise ParseError(f"{child.kind} cannot be nested under {raw.kind}", child.line)
    built = [_build(c) for c in kids]
    weights = tuple(c.params.get("w") for c in kids)
    if raw.kind == "root":
        return RootNode(raw.args[0], tuple(built), weights)
    if raw.kind == "aea":
        dim = raw.args[0]
        if dim not in DIMENSIONS:
            raise ParseError(f"unknown attribute dimension {dim!r}", raw.line)
        return AeaNode(dim, canonical_value(dim, raw.args[1]), tuple(built), weights)
    if raw.kind == "scenario":
        if [c.kind for c in kids] != ["aeml", "cal"]:
            raise ParseError(
                "scenario must contain exactly one aeml block followed by one cal block", raw.line
            )
        return ScenarioNode(raw.args[0], tuple(built))
    if raw.kind == "aeml":
        return AemlNode(tuple(built))
    if raw.kind == "cal":
        return CalNode(tuple(built))
    if raw.kind == "aem":
        return AemNode(raw.args[0], raw.params.get("err"), raw.params.get("freq"), raw.params.get("query"))
    gate = raw.params.get("gate")
    if gate is None and kids:
        raise ParseError("a ca with children needs gate=AND or gate=OR", raw.line)
    if gate is not None and ("prob" in raw.params or "query" in raw.params):
        raise ParseError("a gate ca takes no prob/query", raw.line)
    return CaNode(raw.args[0], raw.params.get("prob"), raw.params.get("query"), gate, tuple(built))


def parse_tree_file(data):
    lines = _text(data).split("\n")
    roots: list[_Raw] = []
    stack: list[tuple[int, _Raw]] = []
    for lineno, line in enumerate(lines, 1):
        line = line.rstrip("\r")
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        indent = len(line) - len(line.lstrip(" "))
        if line[indent] == "\t":
            raise ParseError("tabs are not allowed for indentation", lineno)
        if indent % 2:
            raise ParseError("indentation must be a multiple of two spaces", lineno)
        depth = indent // 2
        raw = _parse_line(stripped, lineno)
        if depth > len(stack):
            raise ParseError("indented too far", lineno)
        del stack[depth:]
        if stack:
            stack[-1][1].children.append(raw)
        else:
            roots.append(raw)
        stack.append((depth, raw))
    if not roots:
        raise ParseError("no root node", 1)
    if len(roots) > 1:
        raise ParseError("more than one top-level node", roots[1].line)
    if roots[0].kind != "root":
        raise ParseError("the top-level node must be a root", roots[0].line)
    for raw in _iter_raw(roots[0]):
        if "w" in raw.params and raw.kind not in ("aea", "scenario"):
            raise ParseError("only aea and scenario lines carry w=", raw.line)
    return _build(roots[0])


def _iter_raw(raw):
    yield raw
    for c in raw.children:
        yield from _iter_raw(c)
