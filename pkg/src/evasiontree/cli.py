"""Command line interface.

Exit codes: 0 success, 1 validation failure, 2 parse or I/O failure. Every
failure prints one line ``error: <category>: <message>`` on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
import warnings

from evasiontree import formats
from evasiontree.construct import (
    BindingError,
    ConstructionError,
    MergeError,
    ParameterBinding,
    bind_parameters,
    build_at4ea,
    check_coverage,
    derive_available_methods,
)
from evasiontree.dot import AnnotationMismatch, render_dot
from evasiontree.engine import compute_ap, compute_mq, monte_carlo_ap
from evasiontree.mitigation import MitigationError, tradeoff_table
from evasiontree.model import DIMENSIONS, AttributeVector, ContractError, validate_tree, walk

EXIT_OK, EXIT_INVALID, EXIT_PARSE = 0, 1, 2


class CliError(Exception):
    def __init__(self, category: str, message: str, code: int):
        self.category = category
        self.code = code
        super().__init__(message)


def _write(path, text: str):
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError("io", f"cannot write {path}: {exc.strerror}", EXIT_PARSE) from None


def _load_tree(path):
    tree = formats.read_tree(path)
    report = validate_tree(tree)
    if not report.ok:
        print(report)
        raise ContractError(report)
    return tree


def _load_inputs(project_path):
    bundle = formats.load_project(project_path)
    matrix = formats.read_matrix(bundle.matrix)
    scenarios = [eas for p in bundle.scenarios for eas in formats.read_scenarios(p)]
    binding = formats.read_binding(bundle.binding) if bundle.binding else ParameterBinding()
    return bundle, matrix, scenarios, binding


def _build(project_path):
    bundle, matrix, scenarios, binding = _load_inputs(project_path)
    for method in check_coverage(matrix, scenarios):
        print(f"warning: coverage: method {method!r} is used by no scenario", file=sys.stderr)
    tree = build_at4ea(bundle.objective, scenarios, matrix)
    tree = bind_parameters(tree, binding)
    return bundle, matrix, tree


# ------------------------------------------------------------------ commands


def cmd_validate(args):
    _, matrix, tree = _build(args.project)
    report = validate_tree(tree, matrix)
    print(report)
    return EXIT_OK if report.ok else EXIT_INVALID


def cmd_methods(args):
    _, matrix, _, _ = _load_inputs(args.project)
    attrs = AttributeVector(*(getattr(args, d) for d in DIMENSIONS))
    for name in derive_available_methods(matrix, attrs):
        print(name)
    return EXIT_OK


def cmd_build(args):
    bundle, matrix, tree = _build(args.project)
    report = validate_tree(tree, matrix)
    if not report.ok:
        print(report)
        raise ContractError(report)
    output = args.output or bundle.output.get("tree")
    if output and args.output is None:
        output = bundle.root / output
    _write(output, formats.serialize_tree(tree))
    if output not in (None, "-"):
        n = sum(1 for _, node in walk(tree) if node.kind == "scenario")
        print(f"wrote {output} ({n} scenarios)", file=sys.stderr)
    return EXIT_OK


def _fmt(x) -> str:
    return f"{x:.6g}" if isinstance(x, float) else str(x)


def cmd_analyze(args):
    tree = _load_tree(args.tree)
    want_ap = args.metric in ("ap", "both")
    want_mq = args.metric in ("mq", "both")
    ap = compute_ap(tree) if want_ap else None
    mq = compute_mq(tree) if want_mq else None

    lines = []
    if ap:
        lines.append(f"root ap: {_fmt(ap.root)}")
    if mq:
        lines.append(f"root mq: {_fmt(mq.root)}")
    if ap:
        lines.append("ap critical path: " + " > ".join(p.rsplit("/", 1)[-1] for p in ap.critical_path))
    if mq:
        lines.append("mq critical path: " + (" > ".join(p.rsplit("/", 1)[-1] for p in mq.critical_path) or "(none)"))
    if args.mc_trials:
        est = monte_carlo_ap(tree, args.mc_trials, args.seed)
        root = ap.root if ap else compute_ap(tree).root
        agree = abs(est.estimate - root) <= 3 * est.stderr
        lines.append(
            f"monte carlo ap: {_fmt(est.estimate)} +/- {_fmt(est.stderr)} "
            f"({est.trials} trials, seed {args.seed}); within 3 stderr of root ap: {'yes' if agree else 'no'}"
        )

    rows = _metric_rows(tree, ap, mq)
    red = set(ap.critical_path) if ap else set()
    blue = set(mq.critical_path) if mq else set()
    header = ["path"] + (["ap"] if ap else []) + (["mq"] if mq else []) + ["critical"]
    table = []
    for r in rows:
        crit = ",".join(m for m, hit in (("ap", r["path"] in red), ("mq", r["path"] in blue)) if hit)
        table.append([r["path"]] + ([_fmt(r["ap"])] if ap else []) + ([r["mq"]] if mq else []) + [crit])
    widths = [max(len(h), *(len(t[i]) for t in table)) for i, h in enumerate(header)]
    lines.append("")
    for t in [header] + table:
        lines.append("  ".join(c.ljust(w) for c, w in zip(t, widths)).rstrip())
    print("\n".join(lines))

    if args.csv:
        _write(args.csv, _metric_csv(rows, ap, mq))
    return EXIT_OK


def _metric_rows(tree, ap, mq):
    rows = []
    for path, node in walk(tree):
        row = {"path": path, "kind": node.kind}
        if ap:
            row["ap"] = ap.values[path]
        if mq:
            if path in mq.values:
                row["mq"] = str(mq.values[path])
            else:
                row["mq"] = "excluded"
        rows.append(row)
    return rows


def _metric_csv(rows, ap, mq) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    fields = ["path", "kind"] + (["ap", "ap_critical"] if ap else []) + (["mq", "mq_critical"] if mq else [])
    writer.writerow(fields)
    red = set(ap.critical_path) if ap else set()
    blue = set(mq.critical_path) if mq else set()
    for r in rows:
        out = [r["path"], r["kind"]]
        if ap:
            out += [repr(r["ap"]), int(r["path"] in red)]
        if mq:
            out += [r["mq"], int(r["path"] in blue)]
        writer.writerow(out)
    return buf.getvalue()


def _parse_combos(text):
    if not text:
        return []
    combos = []
    for group in text.split(";"):
        names = [n.strip() for n in group.split(",") if n.strip()]
        if names:
            combos.append(names)
    return combos


def cmd_whatif(args):
    tree = _load_tree(args.tree)
    specs = [s for p in args.mitigations for s in formats.read_mitigations(p)]
    table = tradeoff_table(tree, specs, _parse_combos(args.combos), singletons=args.singletons)
    width = max(len("mitigation"), *(len(r.label) for r in table.rows))
    lines = [f"{'mitigation'.ljust(width)}  attack prob."]
    lines += [f"{r.label.ljust(width)}  {r.ap:.3e}" for r in table.rows]
    print("\n".join(lines))
    if args.csv:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["mitigation", "ap"])
        for r in table.rows:
            writer.writerow([r.label, repr(r.ap)])
        _write(args.csv, buf.getvalue())
    return EXIT_OK


def cmd_render(args):
    tree = _load_tree(args.tree)
    wanted = {a.strip() for a in (args.annotate or "").split(",") if a.strip()}
    unknown = wanted - {"ap", "mq"}
    if unknown:
        raise CliError("usage", f"unknown annotation(s): {', '.join(sorted(unknown))}", EXIT_PARSE)
    annotations = []
    if "ap" in wanted:
        annotations.append(compute_ap(tree))
    if "mq" in wanted:
        annotations.append(compute_mq(tree))
    _write(args.output, render_dot(tree, *annotations))
    return EXIT_OK


# ---------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evasiontree",
        description="Attack trees for ML evasion attacks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="build and bind a project, then report structural problems")
    p.add_argument("project")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("methods", help="list matrix methods with the given attributes")
    p.add_argument("project")
    for dim in DIMENSIONS:
        p.add_argument(f"--{dim}", required=True)
    p.set_defaults(func=cmd_methods)

    p = sub.add_parser("build", help="construct and bind the tree of a project")
    p.add_argument("project")
    p.add_argument("-o", "--output", help="tree file to write ('-' for stdout)")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("analyze", help="attack probability and minimum query report")
    p.add_argument("tree")
    p.add_argument("--metric", choices=("ap", "mq", "both"), default="both")
    p.add_argument("--mc-trials", type=int, default=0, help="cross-check AP with this many Monte Carlo trials")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", help="also write a per-node CSV report here")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("whatif", help="mitigation trade-off table")
    p.add_argument("tree")
    p.add_argument("--mitigations", action="append", required=True, help="mitigation file (repeatable)")
    p.add_argument("--combos", default="", help='combinations, e.g. "AT,QR;DP,CQ"')
    p.add_argument("--singletons", action="store_true", help="add one row per mitigation before the combos")
    p.add_argument("--csv", help="also write the table as CSV here")
    p.set_defaults(func=cmd_whatif)

    p = sub.add_parser("render", help="export the tree as Graphviz DOT")
    p.add_argument("tree")
    p.add_argument("--annotate", help="comma list of ap, mq")
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_render)
    return parser


def _one_line(text) -> str:
    return " ".join(str(text).split())


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "mc_trials", 0) < 0:
        print("error: usage: --mc-trials must be nonnegative", file=sys.stderr)
        return EXIT_PARSE
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            code = args.func(args)
        except CliError as exc:
            print(f"error: {exc.category}: {_one_line(exc)}", file=sys.stderr)
            code = exc.code
        except formats.ParseError as exc:
            print(f"error: parse: {_one_line(exc)}", file=sys.stderr)
            code = EXIT_PARSE
        except ContractError as exc:
            print(f"error: validation: {_one_line(exc)}", file=sys.stderr)
            code = EXIT_INVALID
        except BindingError as exc:
            print(f"error: binding: {_one_line(exc)}", file=sys.stderr)
            code = EXIT_INVALID
        except (ConstructionError, MergeError) as exc:
            print(f"error: construction: {_one_line(exc)}", file=sys.stderr)
            code = EXIT_INVALID
        except (MitigationError, AnnotationMismatch) as exc:
            print(f"error: {'mitigation' if isinstance(exc, MitigationError) else 'render'}: {_one_line(exc)}",
                  file=sys.stderr)
            code = EXIT_INVALID
        except ValueError as exc:
            print(f"error: parse: {_one_line(exc)}", file=sys.stderr)
            code = EXIT_PARSE
    for w in caught:
        print(f"warning: {_one_line(w.message)}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
