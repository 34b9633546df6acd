"""Attack trees for ML evasion attacks.

Build trees from a method matrix and attack scenarios, evaluate attack
probability and minimum queries, and compare mitigations.
"""

from evasiontree.construct import (
    AUTO,
    AemMatrix,
    BindingError,
    ConstructionError,
    EasRecord,
    MatrixRow,
    MergeError,
    ParameterBinding,
    bind_parameters,
    build_at4ea,
    check_coverage,
    derive_available_methods,
    scenario_to_tree,
    unify_trees,
)
from evasiontree.engine import (
    UNATTAINABLE,
    ApResult,
    MqResult,
    compute_ap,
    compute_mq,
    enumerate_scenarios_mq,
    monte_carlo_ap,
)
from evasiontree.mitigation import (
    MitigationSpec,
    ReplaceErr,
    ScaleCaProb,
    SetWeight,
    TradeoffTable,
    ZeroAemIfQueryGt,
    apply_mitigation,
    qr_threshold,
    tradeoff_table,
)
from evasiontree.model import (
    AeaNode,
    AemlNode,
    AemNode,
    AttributeVector,
    CalNode,
    CaNode,
    ContractError,
    RootNode,
    ScenarioNode,
    TreeError,
    ValidationReport,
    node_path,
    validate_tree,
)

__version__ = "0.1.0"
