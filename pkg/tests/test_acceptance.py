"""End-to-end acceptance checks.

Each test prints one ``PASS``/``FAIL`` line; conftest repeats them in the
terminal summary.
"""

import random
import time
import warnings
from dataclasses import replace

import pytest

from evasiontree import formats
from evasiontree.construct import (
    AemMatrix,
    EasRecord,
    bind_parameters,
    build_at4ea,
    check_coverage,
    scenario_to_tree,
    unify_trees,
)
from evasiontree.engine import UNATTAINABLE, compute_ap, compute_mq, enumerate_scenarios_mq, mq_min, monte_carlo_ap
from evasiontree.generate import random_scenarios, random_tree
from evasiontree.mitigation import (
    MitigationSpec,
    MitigationWarning,
    ReplaceErr,
    ScaleCaProb,
    ZeroAemIfQueryGt,
    apply_mitigation,
)
from evasiontree.model import (
    AeaNode,
    AemNode,
    AttributeVector,
    CaNode,
    RootNode,
    ScenarioNode,
    replace_at,
    walk,
)

from golden_cases import render_all


RESULTS: list[str] = []


def report(name, ok, detail=""):
    line = f"{'PASS' if ok else 'FAIL'}: {name}" + (f" ({detail})" if detail else "")
    RESULTS.append(line)
    print(line)
    return ok


@pytest.fixture(scope="module")
def random_trees():
    rng = random.Random(20261015)
    return [random_tree(rng) for _ in range(500)]


def test_ap_oracle(random_trees):
    start = time.perf_counter()
    hits = 0
    for i, tree in enumerate(random_trees):
        exact = compute_ap(tree).root
        est = monte_carlo_ap(tree, 100_000, seed=i)
        hits += abs(est.estimate - exact) <= 3 * est.stderr
    elapsed = time.perf_counter() - start
    rate = hits / len(random_trees)
    ok = rate >= 0.99 and elapsed < 120
    assert report("AP oracle equivalence", ok, f"{hits}/{len(random_trees)} within 3 stderr, {elapsed:.1f}s")


def test_mq_oracle(random_trees):
    agree = 0
    unattainable = 0
    for tree in random_trees:
        root = compute_mq(tree).root
        oracle = mq_min(q for _, q in enumerate_scenarios_mq(tree))
        agree += oracle == root
        unattainable += root is UNATTAINABLE
    ok = agree == len(random_trees)
    assert report("MQ oracle equivalence", ok, f"{agree}/{len(random_trees)}, {unattainable} unattainable")


def test_micro_tree_exactness(micro, two_scenarios):
    ap = compute_ap(micro).root
    mq = compute_mq(two_scenarios).root
    ok = abs(ap - 0.036) <= 1e-12 and abs(mq - 115) <= 1e-12
    assert report("micro-tree exactness", ok, f"ap={ap!r}, mq={mq!r}")


def sticker():
    attrs = AttributeVector("Physical", "Individual", "Iterative", "White-box")
    matrix = AemMatrix.of({"RP2": attrs.as_tuple()})
    eas = EasRecord("Sticker Attack", attrs, ("Get Model Info.", "Set the Stickers"), ("RP2",))
    return scenario_to_tree("Misclassify the road sign", eas, matrix)


def leaf_depths(tree):
    return [path.count("/") for path, node in walk(tree) if not node.children]


def test_pattern_shape():
    tree = sticker()
    chain = []
    node = tree
    while isinstance(node, (RootNode, AeaNode)):
        assert len(node.children) == 1
        node = node.children[0]
        if isinstance(node, AeaNode):
            chain.append((node.dimension, node.value))
    ok = (
        chain
        == [
            ("visibility", "Physical"),
            ("scope", "Individual"),
            ("computation", "Iterative"),
            ("knowledge", "White-box"),
        ]
        and isinstance(node, ScenarioNode)
        and [a.method for a in node.aeml.children] == ["RP2"]
        and [c.label for c in node.cal.children] == ["Get Model Info.", "Set the Stickers"]
        and set(leaf_depths(tree)) == {7}
    )
    assert report("pattern shape", ok, f"leaf depths {sorted(set(leaf_depths(tree)))}")


def test_unification():
    one = AttributeVector("Digital", "Individual", "1-Step", "White-box")
    it = AttributeVector("Digital", "Individual", "Iterative", "White-box")
    matrix = AemMatrix.of({"FGSM": one.as_tuple(), "PGD": it.as_tuple()})
    a = scenario_to_tree("Goal", EasRecord("One-step", one, ("Steal Model",), ("FGSM",)), matrix)
    b = scenario_to_tree("Goal", EasRecord("Iterative", it, ("Steal Model",), ("PGD",)), matrix)
    merged = unify_trees(a, b)
    digital = merged.children[0]
    individual = digital.children[0]
    shape_ok = (
        len(merged.children) == 1
        and len(digital.children) == 1
        and individual.value == "Individual"
        and [c.value for c in individual.children] == ["1-Step", "Iterative"]
    )
    rng = random.Random(7)
    idempotent = 0
    for _ in range(100):
        matrix, records = random_scenarios(rng, max_scenarios=1)
        t = scenario_to_tree("Goal", records[0], matrix)
        idempotent += unify_trees(t, t) == t
    ok = shape_ok and idempotent == 100
    assert report("unification", ok, f"merge shape {'ok' if shape_ok else 'wrong'}, unify(t,t)=t {idempotent}/100")


def test_coverage_and_build(item_project):
    bundle = formats.load_project(item_project)
    matrix = formats.read_matrix(bundle.matrix)
    records = [r for p in bundle.scenarios for r in formats.read_scenarios(p)]
    tree = build_at4ea(bundle.objective, records, matrix)
    tree = bind_parameters(tree, formats.read_binding(bundle.binding))
    n_scen = sum(isinstance(n, ScenarioNode) for _, n in walk(tree))
    uncovered = check_coverage(matrix, records)
    ok = len(matrix) == 11 and len(records) == 5 and n_scen == 5 and uncovered == []
    assert report("coverage + build", ok, f"{len(matrix)} methods, {n_scen} scenarios, uncovered={uncovered}")


def anomaly_fixture():
    """A proxy scenario and a query scenario; hardening zeroes the proxy
    attack but makes the query attack easier."""
    proxy = ScenarioNode.of(
        "Proxy",
        [AemNode("ProxyPGD", 0.3, 0.7, 0)],
        [CaNode("Query Model Access", 0.1, 50)],
    )
    query = ScenarioNode.of(
        "Query",
        [AemNode("SimBA", 0.6, 0.9, 100)],
        [CaNode("Query Model Access", 0.1, 0)],
    )
    return RootNode(
        "Goal",
        (
            AeaNode("knowledge", "Black-box (proxy)", (proxy,), (1.0,)),
            AeaNode("knowledge", "Black-box (query)", (query,), (1.0,)),
        ),
        (0.5, 0.5),
    )


def test_mitigation_properties(micro):
    plain = compute_ap(micro).root
    # C2 is the only CA in the only CAL, so it is present in every CAL
    halved = compute_ap(apply_mitigation(micro, MitigationSpec("CQ", (ScaleCaProb("C2", 0.5),)))).root
    halving_ok = abs(halved - plain / 2) <= 1e-15

    tree = anomaly_fixture()
    cq = MitigationSpec("CQ", (ScaleCaProb("Query Model Access", 0.5),))
    cq_plain = compute_ap(tree).root
    cq_ok = abs(compute_ap(apply_mitigation(tree, cq)).root - cq_plain / 2) <= 1e-15

    rng = random.Random(3)
    identity = 0
    for _ in range(50):
        t = random_tree(rng)
        with warnings.catch_warnings():
            # trees without any method leaf match nothing
            warnings.simplefilter("ignore", MitigationWarning)
            after = apply_mitigation(t, MitigationSpec("QR", (ZeroAemIfQueryGt(float("inf")),)))
        identity += compute_ap(after).root == compute_ap(t).root

    at = MitigationSpec(
        "AT",
        (
            ReplaceErr({"ProxyPGD": 0.0}, {"knowledge": "Black-box (proxy)"}),
            ReplaceErr({"SimBA": 0.9}, {"knowledge": "Black-box (query)"}),
        ),
    )
    hardened = apply_mitigation(tree, at)
    proxy_zeroed = all(n.err == 0.0 for _, n in walk(hardened) if isinstance(n, AemNode) and n.method == "ProxyPGD")
    anomaly = proxy_zeroed and compute_ap(hardened).root > compute_ap(tree).root

    ok = halving_ok and cq_ok and identity == 50 and anomaly
    assert report(
        "mitigation properties",
        ok,
        f"halving {halving_ok and cq_ok}, inf-threshold identity {identity}/50, AT anomaly {anomaly}",
    )


def test_round_trips_and_golden(item_project, samples):
    bundle = formats.load_project(item_project)
    matrix = formats.read_matrix(bundle.matrix)
    matrix_ok = formats.parse_matrix_file(formats.serialize_matrix(matrix)) == matrix
    records = formats.read_scenarios(bundle.scenarios[0])
    scen_ok = formats.parse_scenarios_file(formats.serialize_scenarios(records)) == records

    rng = random.Random(11)
    trees = [formats.read_tree(samples / "micro.at4ea"), formats.read_tree(samples / "two_scenarios.at4ea")]
    trees += [random_tree(rng) for _ in range(50)]
    tree_ok = sum(formats.parse_tree_file(formats.serialize_tree(t)) == t for t in trees)

    first, second = render_all(), render_all()
    stable = first == second
    from golden_cases import GOLDEN

    on_disk = {name: (GOLDEN / name).read_text(encoding="utf-8") for name in first}
    matches = first == on_disk

    ok = matrix_ok and scen_ok and tree_ok == len(trees) and stable and matches
    assert report(
        "round-trips + golden files",
        ok,
        f"matrix {matrix_ok}, scenarios {scen_ok}, trees {tree_ok}/{len(trees)}, "
        f"golden stable {stable}, golden match {matches}",
    )


AEM_PARAMS = ("err", "freq")


def decrease_one(tree, rng):
    leaves = [
        (path, node, name)
        for path, node in walk(tree)
        for name in ((AEM_PARAMS if isinstance(node, AemNode) else ("prob",) if isinstance(node, CaNode) and node.is_leaf else ()))
    ]
    path, node, name = rng.choice(leaves)
    return replace_at(tree, path, replace(node, **{name: rng.uniform(0.0, getattr(node, name))}))


def test_monotonicity_fuzz():
    rng = random.Random(99)
    violations = 0
    pairs = 0
    while pairs < 10_000:
        tree = random_tree(rng)
        if not any(isinstance(n, (AemNode, CaNode)) for _, n in walk(tree)):
            continue
        before = compute_ap(tree).root
        for _ in range(25):
            lowered = decrease_one(tree, rng)
            violations += compute_ap(lowered).root > before
            pairs += 1
    assert report("monotonicity fuzz", violations == 0, f"{violations} increases in {pairs} pairs")
