"""Stationary rates and pairwise correlations for linear
Galves-Locherbach spiking networks: a pair-level integral-equation
solver, network-level self-consistency solvers, and an exact
event-driven simulator that cross-validates them.
"""

from . import errors
from .model import (
    NO_RELAXATION,
    DriveTriple,
    NetworkSpec,
    NeuronParams,
    PairProblem,
    PartitionSpec,
    check_partition,
    extract_pair,
    network_from_json,
    network_to_json,
    partition_from_json,
    partition_to_json,
    validate,
)
from .numerics import (
    FixedPointReport,
    Grid,
    damped_fixed_point,
    integrate,
    lower_incomplete_gamma,
    make_grid,
)
from .pairkernel import KernelContext
from .pairsolve import (
    BoundaryFunction,
    PairSolution,
    fredholm_step,
    pair_exact,
    pair_moments,
    solve_pair,
)
from .rmf import (
    AllPairRates,
    PairStats,
    RateVector,
    RmfSolution,
    solve_all_pair,
    solve_first_order,
    solve_pair_partition,
    symmetric_chain_rate,
)
from .singlesolve import SingleProblem, single_rate
from .simulate import (
    ReplicaMode,
    SimConfig,
    SimEstimate,
    generate_ring,
    generate_tree,
    palm_next_spiker,
    simulate,
)

__version__ = "0.1.0"

__all__ = [
    "errors",
    "NO_RELAXATION",
    "NeuronParams",
    "NetworkSpec",
    "DriveTriple",
    "PairProblem",
    "PartitionSpec",
    "validate",
    "check_partition",
    "extract_pair",
    "network_to_json",
    "network_from_json",
    "partition_to_json",
    "partition_from_json",
    "Grid",
    "FixedPointReport",
    "make_grid",
    "integrate",
    "lower_incomplete_gamma",
    "damped_fixed_point",
    "KernelContext",
    "BoundaryFunction",
    "PairSolution",
    "fredholm_step",
    "solve_pair",
    "pair_exact",
    "pair_moments",
    "SingleProblem",
    "single_rate",
    "RateVector",
    "AllPairRates",
    "PairStats",
    "RmfSolution",
    "solve_first_order",
    "solve_pair_partition",
    "solve_all_pair",
    "symmetric_chain_rate",
    "SimConfig",
    "SimEstimate",
    "ReplicaMode",
    "simulate",
    "palm_next_spiker",
    "generate_tree",
    "generate_ring",
    "__version__",
]
