"""Packet-type coded caching: analysis, synthesis and bit-exact simulation
of low-subpacketization device-to-device schemes."""

from .combinat import binomial, integer_partitions, subsets
from .designs import (
    DesignSpec,
    dpda_specials,
    jcm_design,
    special_designs,
    theorem1_design,
    theorem2_design,
    theorem3_design,
)
from .engine import (
    PlanError,
    SchemePlan,
    analyze_rules,
    build_plan,
    decode_and_verify,
    measure,
    run_jcm,
    simulate,
)
from .fscalc import (
    STAR,
    GlobalFS,
    NoLcmError,
    jcm_baseline,
    local_fs,
    mc_check,
    subpacketization,
    vector_lcm,
)
from .search import exhaustive_search, sweep_ratios
from .typevec import (
    Grouping,
    TypeVector,
    enumerate_types,
    make_grouping,
    mgroup_structure,
    per_user_count,
    type_of,
)

__version__ = "0.1.0"

__all__ = [
    "binomial",
    "integer_partitions",
    "subsets",
    "DesignSpec",
    "dpda_specials",
    "jcm_design",
    "special_designs",
    "theorem1_design",
    "theorem2_design",
    "theorem3_design",
    "PlanError",
    "SchemePlan",
    "analyze_rules",
    "build_plan",
    "decode_and_verify",
    "measure",
    "run_jcm",
    "simulate",
    "STAR",
    "GlobalFS",
    "NoLcmError",
    "jcm_baseline",
    "local_fs",
    "mc_check",
    "subpacketization",
    "vector_lcm",
    "exhaustive_search",
    "sweep_ratios",
    "Grouping",
    "TypeVector",
    "enumerate_types",
    "make_grouping",
    "mgroup_structure",
    "per_user_count",
    "type_of",
    "__version__",
]
