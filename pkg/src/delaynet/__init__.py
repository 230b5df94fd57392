"""Simulation and controllability analysis of transport networks with vertex delays."""

__version__ = "0.1.0"

from .controllability import (  # noqa: E402
    ControllabilityReport,
    FreqOperator,
    X_vs_history_controllability,
    approx_controllability,
    assemble_A,
    atfm_operator,
    estimate_mu0,
    kalman_matrix,
    outflow_transfer,
    rank_with_tolerance,
)
from .delay import DelayMeasure, HistoryBuffer, delay_L, dirichlet_d, L_of_d_lambda  # noqa: E402
from .errors import *  # noqa: E402,F401,F403
from .graph import MetricGraph, adjacency_B, build_graph, incidence_matrices, truncate_bfs  # noqa: E402
from .io import dumps_graph_spec, parse_graph_spec, write_graph_spec  # noqa: E402
from .profiles import PiecewiseConstant  # noqa: E402
from .solver import Scenario, SolutionRecord, laplace_of_trace, reachability_gramian, solve  # noqa: E402
from .structural import (  # noqa: E402
    StructuredMatrix,
    build_extended_matrix,
    generic_rank,
    has_form_t,
    lemma_consistency,
    structural_controllability,
)
from .transport import control_map_Phi, dirichlet_D, flow_position, semigroup_apply, tau, xi  # noqa: E402


def data_path(name):
    """Path of a bundled example file (``loop.graph``, ``q0.pattern``, ...)."""
    from importlib.resources import files

    return files(__package__) / "data" / name
