"""Covariant Schrodinger operators on weighted graphs: exact semigroups and Feynman-Kac Monte Carlo."""

__version__ = "0.1.0"

from .errors import DomainError, NumericError
from .graph import (
    FiniteGraphProvider,
    GeometricChainProvider,
    GraphProvider,
    IntegerLatticeProvider,
    Violation,
    WeightedGraph,
    form_bound_constant,
    validate_graph,
    vertex_degree,
)
from .bundle import (
    Connection,
    GaugeTransform,
    Potential,
    covariant_derivative,
    evaluate_form,
    gauge_transform,
    kato_decompose,
)
from .operator import AssembledOperator, KernelMatrix, assemble, semigroup_kernel_exact, semigroup_trace
from .stochastic import (
    KernelEstimate,
    PathSample,
    fk_kernel_estimate,
    fk_kernel_row,
    merge_estimates,
    parallel_transport,
    path_ordered_exponential,
    sample_path,
)
from .analysis import (
    SweepRow,
    classical_partition_function,
    golden_thompson_check,
    kato_functional,
    semiclassical_sweep,
)
