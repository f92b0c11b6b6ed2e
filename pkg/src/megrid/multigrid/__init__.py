"""Coupled multi-carrier network model and steady-state flow solver."""

from .model import (
    CapacityExceeded,
    CarrierMismatch,
    CouplingDevice,
    CouplingOutput,
    DanglingEndpoint,
    GridEdge,
    GridNode,
    MissingSlack,
    MultiGraph,
    NodeRole,
    assemble,
    coupling_outputs,
    graph_from_dict,
    graph_to_dict,
    with_couplings,
    with_demands,
)
from .solver import (
    FlowOptions,
    FlowState,
    NegativePressure,
    NonConvergence,
    VerifyReport,
    build_system,
    solve_flow,
    verify_state,
)

__all__ = [
    "CapacityExceeded",
    "CarrierMismatch",
    "CouplingDevice",
    "CouplingOutput",
    "DanglingEndpoint",
    "FlowOptions",
    "FlowState",
    "GridEdge",
    "GridNode",
    "MissingSlack",
    "MultiGraph",
    "NegativePressure",
    "NodeRole",
    "NonConvergence",
    "VerifyReport",
    "assemble",
    "build_system",
    "coupling_outputs",
    "graph_from_dict",
    "graph_to_dict",
    "solve_flow",
    "verify_state",
    "with_couplings",
    "with_demands",
]
