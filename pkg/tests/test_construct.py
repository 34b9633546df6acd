import warnings

import pytest

from evasiontree.construct import (
    AUTO,
    AemMatrix,
    BindingError,
    BindingWarning,
    ConstructionError,
    EasRecord,
    MergeError,
    ParameterBinding,
    bind_parameters,
    build_at4ea,
    check_coverage,
    derive_available_methods,
    scenario_to_tree,
    unify_trees,
)
from evasiontree.model import AemNode, AttributeVector, ScenarioNode, find, validate_tree, walk

WB = AttributeVector("Digital", "Individual", "Iterative", "White-box")
PROXY = AttributeVector("Digital", "Individual", "Iterative", "Black-box (proxy)")
MATRIX = AemMatrix.of({
    "PGD": WB.as_tuple(),
    "BIM": WB.as_tuple(),
    "ProxyPGD": PROXY.as_tuple(),
    "RP2": ("Physical", "Individual", "Iterative", "White-box"),
})


def test_derive_methods_in_matrix_order():
    assert derive_available_methods(MATRIX, WB) == ["PGD", "BIM"]
    assert derive_available_methods(MATRIX, AttributeVector("Physical", "Universal", "1-Step", "White-box")) == []


def test_matrix_rejects_duplicates():
    from evasiontree.construct import MatrixRow

    with pytest.raises(ValueError):
        AemMatrix([MatrixRow("PGD", WB), MatrixRow("PGD", PROXY)])


def test_coverage_lists_unused_methods():
    records = [EasRecord("Grad", WB, ("Steal Model",), AUTO)]
    assert check_coverage(MATRIX, records) == ["ProxyPGD", "RP2"]


def test_record_rejects_method_with_other_attributes():
    with pytest.raises(ConstructionError):
        scenario_to_tree("Goal", EasRecord("Grad", WB, (), ("ProxyPGD",)), MATRIX)
    with pytest.raises(ConstructionError):
        scenario_to_tree("Goal", EasRecord("Grad", WB, (), ("Nope",)), MATRIX)


def test_auto_methods_expand():
    tree = scenario_to_tree("Goal", EasRecord("Grad", WB, ("Steal Model",)), MATRIX)
    scen = next(n for _, n in walk(tree) if isinstance(n, ScenarioNode))
    assert [a.method for a in scen.aeml.children] == ["PGD", "BIM"]
    assert validate_tree(tree, MATRIX, require_parameters=False).ok


def test_build_merges_and_unbinds_new_siblings():
    records = [EasRecord("Grad", WB, ("Steal Model",)), EasRecord("Proxy", PROXY, ("Query Model Access",))]
    tree = build_at4ea("Goal", records, MATRIX)
    iterative = find(tree, "Goal/Digital/Individual/Iterative")
    assert [c.value for c in iterative.children] == ["White-box", "Black-box (proxy)"]
    assert iterative.weights == (None, None)
    assert find(tree, "Goal").weights == (1.0,)
    assert [f.rule for f in validate_tree(tree, require_parameters=False).errors] == ["weight-unset"]


def test_build_rejects_duplicates_and_empty():
    with pytest.raises(ConstructionError):
        build_at4ea("Goal", [], MATRIX)
    with pytest.raises(ConstructionError):
        build_at4ea("Goal", [EasRecord("A", WB), EasRecord("A", PROXY)], MATRIX)


def test_unify_conflicting_scenario():
    a = scenario_to_tree("Goal", EasRecord("S", WB, ("x",), ("PGD",)), MATRIX)
    b = scenario_to_tree("Goal", EasRecord("S", WB, ("y",), ("PGD",)), MATRIX)
    with pytest.raises(MergeError):
        unify_trees(a, b)
    other_root = scenario_to_tree("Other", EasRecord("S", WB, ("x",), ("PGD",)), MATRIX)
    with pytest.raises(MergeError):
        unify_trees(a, other_root)


def test_unify_is_idempotent():
    t = build_at4ea("Goal", [EasRecord("Grad", WB, ("x",)), EasRecord("Proxy", PROXY, ("y",))], MATRIX)
    assert unify_trees(t, t) == t


def binding():
    return ParameterBinding(
        methods={"PGD": {"err": 0.7, "freq": 0.9}, "BIM": {"err": 0.6, "freq": 0.9, "query": 0}},
        ca=[{"scenario": "Grad", "label": "Steal Model", "prob": 0.01}],
        aem=[{"path": "Goal/Digital/Individual/Iterative/White-box/Grad/AEML/PGD", "err": 0.75}],
    )


def test_bind_precedence_and_query_default():
    tree = scenario_to_tree("Goal", EasRecord("Grad", WB, ("Steal Model",)), MATRIX)
    bound = bind_parameters(tree, binding())
    pgd = find(bound, "Goal/Digital/Individual/Iterative/White-box/Grad/AEML/PGD")
    assert (pgd.err, pgd.freq, pgd.query) == (0.75, 0.9, 0)
    assert find(bound, "Goal/Digital/Individual/Iterative/White-box/Grad/CAL/Steal Model").prob == 0.01
    assert validate_tree(bound, MATRIX).ok


def test_bind_reports_missing_values():
    tree = scenario_to_tree("Goal", EasRecord("Grad", WB, ("Steal Model", "Upload")), MATRIX)
    with pytest.raises(BindingError) as info:
        bind_parameters(tree, binding())
    assert any("Upload" in m for m in info.value.missing)


def test_bind_warns_on_unused_entry():
    tree = scenario_to_tree("Goal", EasRecord("Grad", WB, ("Steal Model",)), MATRIX)
    b = binding()
    b.ca.append({"scenario": "Nowhere", "label": "Steal Model", "prob": 0.5})
    with pytest.warns(BindingWarning):
        bind_parameters(tree, b)


def test_bind_weights():
    records = [EasRecord("Grad", WB, ("Steal Model",)), EasRecord("Proxy", PROXY, ())]
    tree = build_at4ea("Goal", records, MATRIX)
    b = binding()
    b.methods["ProxyPGD"] = {"err": 0.2, "freq": 0.7}
    with pytest.raises(BindingError):
        bind_parameters(tree, b)
    b.weights = [
        {"parent": "Goal/Digital/Individual/Iterative", "child": "White-box", "w": 0.4},
        {"parent": "Goal/Digital/Individual/Iterative", "child": "Black-box (proxy)", "w": 0.6},
    ]
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        bound = bind_parameters(tree, b)
    assert find(bound, "Goal/Digital/Individual/Iterative").weights == (0.4, 0.6)
    assert validate_tree(bound, MATRIX).ok
