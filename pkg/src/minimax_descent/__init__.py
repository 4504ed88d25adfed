"""Descent method for finite minimax problems min_x max_j f_j(x)."""

from .objective import (
    ActiveSet,
    EvalSnapshot,
    NonFiniteEvaluation,
    ObjectiveFamily,
    active_set,
    check_gradients,
    directional_derivative,
    phi,
    snapshot,
)
from .simplex_qp import (
    MaxQpIterations,
    PrimalCertificate,
    QpSolution,
    brute_force_qp,
    fw_gap,
    primal_from_dual,
    project_simplex,
    solve_simplex_qp,
)
from .solver import (
    LineSearchStalled,
    QpFailure,
    SolveResult,
    SolverConfig,
    Status,
    TraceRecord,
    direction,
    line_search,
    solve,
    stationarity_measure,
    step,
)

__version__ = "0.1.0"
