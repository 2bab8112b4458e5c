"""Bounded decision-diagram inference for binary Markov networks.

Potentials compile to reduced ordered algebraic decision diagrams held in a
shared store; elimination and junction-tree propagation keep every stored
diagram under a node budget k by re-quantizing leaves, which yields anytime
upper/lower bounds on the partition function and approximate marginals.
"""

from . import errors
from .add import (
    AddStore,
    ScaledAdd,
    apply,
    constant,
    evaluate,
    from_potential,
    leaves,
    node_count,
    restrict,
    sum_out,
    support,
    to_dot,
)
from .elimination import (
    AbqRecord,
    AbqResult,
    EliminationOrder,
    abq,
    abq_anytime,
    minfill_order,
)
from .jtree import (
    IabqConfig,
    IabqResult,
    IabqRun,
    JunctionTree,
    build_junction_tree,
    iabq,
)
from .metrics import (
    BruteForceResult,
    EvalReport,
    avg_kl,
    brute_force,
    log_relative_diff,
    write_anytime_csv,
)
from .model import (
    MarkovNet,
    Potential,
    apply_evidence,
    gen_ising,
    parse_evidence,
    parse_uai,
    primal_graph,
    serialize_evidence,
    serialize_uai,
)
from .quantize import (
    HEURISTICS,
    MEASURES,
    MODES,
    QuantizationMap,
    QuantizeConfig,
    min_error_quantize,
    min_merge_quantize,
    optimal_partition,
    quantization_error,
    quantize_to_bound,
)

__version__ = "0.1.0"

__all__ = [
    "errors",
    "AddStore", "ScaledAdd", "apply", "constant", "evaluate", "from_potential",
    "leaves", "node_count", "restrict", "sum_out", "support", "to_dot",
    "AbqRecord", "AbqResult", "EliminationOrder", "abq", "abq_anytime",
    "minfill_order",
    "IabqConfig", "IabqResult", "IabqRun", "JunctionTree",
    "build_junction_tree", "iabq",
    "BruteForceResult", "EvalReport", "avg_kl", "brute_force",
    "log_relative_diff", "write_anytime_csv",
    "MarkovNet", "Potential", "apply_evidence", "gen_ising", "parse_evidence",
    "parse_uai", "primal_graph", "serialize_evidence", "serialize_uai",
    "HEURISTICS", "MEASURES", "MODES", "QuantizationMap", "QuantizeConfig",
    "min_error_quantize", "min_merge_quantize", "optimal_partition",
    "quantization_error", "quantize_to_bound",
    "__version__",
]
