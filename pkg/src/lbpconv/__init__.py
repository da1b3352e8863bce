"""Loopy belief propagation with sufficient conditions for convergence.

The hot loops (synchronous message update, sparse matvec) run in a compiled
Cython extension when available and in numpy otherwise; see
:mod:`lbpconv.kernels`.
"""
from .certificates import (
    CertificateReport,
    IsingModel,
    binary_update,
    bound_matrix,
    bound_matrix_binary,
    ihler_condition,
    l1_condition_binary,
    l1_condition_general,
    spectral_condition_binary,
    strength_D_pairwise,
    strength_N,
    to_ising,
)
from .factor_graph import (
    DirectedEdge,
    Factor,
    FactorGraph,
    FactorGraphFormatError,
    StateSpaceTooLarge,
    brute_force_marginals,
    directed_edges,
    is_tree,
    parse_factor_graph,
    read_factor_graph,
    serialize_factor_graph,
)
from .kernels import BACKEND
from .lbp import (
    LbpOptions,
    LbpResult,
    LogMessages,
    beliefs,
    init_messages,
    quotient_distance,
    run,
    update_parallel,
)
from .spectral import EdgeMatrix, SpectralEstimate, matvec, spectral_condition, spectral_radius

__version__ = "0.1.0"
