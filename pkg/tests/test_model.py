from dataclasses import replace

import pytest

from evasiontree.construct import AemMatrix
from evasiontree.model import (
    AeaNode,
    AemNode,
    AttributeVector,
    CaNode,
    ContractError,
    RootNode,
    ScenarioNode,
    child_labels,
    find,
    map_nodes,
    node_path,
    replace_at,
    validate_tree,
    walk,
)


def sticker(**aem):
    aem = {"err": 0.5, "freq": 0.5, "query": 0, **aem}
    scen = ScenarioNode.of(
        "Sticker Attack",
        [AemNode("RP2", **aem)],
        [CaNode("Get Model Info.", 0.1, 0), CaNode("Set the Stickers", 0.2, 0)],
    )
    node = scen
    for dim, value in reversed(list(zip(
        ("visibility", "scope", "computation", "knowledge"),
        ("Physical", "Individual", "Iterative", "White-box"),
    ))):
        node = AeaNode(dim, value, (node,), (1.0,))
    return RootNode("Misclassify the road sign", (node,), (1.0,))


MATRIX = AemMatrix.of({"RP2": ("Physical", "Individual", "Iterative", "White-box")})


def rules(tree, **kw):
    return sorted({f.rule for f in validate_tree(tree, **kw).errors})


def test_sticker_subtree_is_valid():
    report = validate_tree(sticker(), MATRIX)
    assert report.ok
    assert str(report) == "OK: no findings"


def test_node_path_concatenates_labels():
    tree = sticker()
    rp2 = next(n for _, n in walk(tree) if isinstance(n, AemNode))
    assert node_path(tree, rp2) == (
        "Misclassify the road sign/Physical/Individual/Iterative/White-box/Sticker Attack/AEML/RP2"
    )


def test_node_path_unknown_node():
    with pytest.raises(LookupError):
        node_path(sticker(), AemNode("RP2", 0.5, 0.5, 0))


def test_duplicate_sibling_labels_get_suffix():
    scen = ScenarioNode.of("S", [], [CaNode("Access", 0.1, 0), CaNode("Access", 0.2, 0)])
    assert child_labels(scen.cal) == ["Access#1", "Access#2"]


def test_slash_in_label_is_escaped():
    tree = RootNode("a/b", (ScenarioNode.of("S"),), (1.0,))
    paths = [p for p, _ in walk(tree)]
    assert paths[0] != "a/b"
    assert find(tree, paths[1]) is tree.children[0]


def test_attribute_vector_normalizes_full_knowledge():
    assert AttributeVector("Digital", "Individual", "1-Step", "Full").knowledge == "White-box"


def test_attribute_vector_rejects_empty():
    with pytest.raises(ValueError):
        AttributeVector("Digital", "", "1-Step", "White-box")


@pytest.mark.parametrize(
    "tree, rule",
    [
        (replace(sticker(), weights=(0.5,)), "weights-sum"),
        (replace(sticker(), weights=(None,)), "weight-unset"),
        (replace(sticker(), weights=(1.0, 0.0)), "weights-arity"),
        (replace(sticker(), weights=(1.5,)), "weight-range"),
        (sticker(err=1.2), "param-range"),
        (sticker(err=None), "param-unset"),
        (sticker(query=-1), "param-range"),
        (RootNode("", (ScenarioNode.of("S"),), (1.0,)), "empty-label"),
        (RootNode("G", (ScenarioNode("S", ()),), (1.0,)), "scenario-arity"),
        (RootNode("G", (AemNode("X", 0.1, 0.1, 0),), (1.0,)), "child-kind"),
        (RootNode("G", (AeaNode("colour", "red", (ScenarioNode.of("S"),), (1.0,)),), (1.0,)), "aea-dimension"),
    ],
)
def test_validation_rules(tree, rule):
    assert rule in rules(tree)


def test_aea_order_violation():
    inner = AeaNode("visibility", "Digital", (ScenarioNode.of("S"),), (1.0,))
    tree = RootNode("G", (AeaNode("scope", "Individual", (inner,), (1.0,)),), (1.0,))
    assert rules(tree) == ["aea-order"]


def test_gate_rules():
    empty = CaNode("G", gate="AND")
    odd = CaNode("G", gate="XOR", children=(CaNode("x", 0.1, 0),))
    leafy = CaNode("L", 0.1, 0, children=(CaNode("x", 0.1, 0),))
    for ca, rule in ((empty, "gate-empty"), (odd, "gate-kind"), (leafy, "ca-leaf-children")):
        tree = RootNode("G", (ScenarioNode.of("S", [], [ca]),), (1.0,))
        assert rule in rules(tree)


def test_matrix_checks():
    other = AemMatrix.of({"RP2": ("Digital", "Individual", "Iterative", "White-box")})
    assert rules(sticker(), matrix=other) == ["attribute-mismatch"]
    assert rules(sticker(), matrix=AemMatrix.of({})) == ["unknown-method"]


def test_require_parameters_off_tolerates_unbound_leaves():
    tree = sticker(err=None, freq=None, query=None)
    assert validate_tree(tree, require_parameters=False).ok
    assert not validate_tree(tree).ok


def test_contract_error_carries_report():
    from evasiontree.model import ensure_valid

    with pytest.raises(ContractError) as info:
        ensure_valid(replace(sticker(), weights=(0.5,)))
    assert info.value.report.errors[0].rule == "weights-sum"


def test_weight_tolerance():
    s1, s2 = ScenarioNode.of("A"), ScenarioNode.of("B")
    assert validate_tree(RootNode("G", (s1, s2), (0.1 + 0.2, 0.7))).ok  # 1.0000000000000002


def test_replace_at_and_map_nodes_share_unchanged_subtrees():
    tree = sticker()
    path = next(p for p, n in walk(tree) if isinstance(n, AemNode))
    new = replace_at(tree, path, AemNode("RP2", 0.9, 0.5, 0))
    assert find(new, path).err == 0.9
    assert find(tree, path).err == 0.5
    assert map_nodes(tree, lambda p, n: n) is tree
