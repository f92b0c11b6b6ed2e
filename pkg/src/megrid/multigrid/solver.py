"""Steady-state flow solver for coupled multi-carrier networks.

Electricity uses the linearized angle formulation, gas and hydrogen the
square-root pipe law, heat a lossless linear balance over per-edge unit
conductances.  Coupling devices enter as fixed withdrawals at their input
node and efficiency-scaled injections at their outputs, so the carrier
subproblems share data but not unknowns.  The Newton method solves all
carriers as one system with an analytic Jacobian; the sequential method
iterates the carriers to the same fixed point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from ..carriers import CARRIER_ORDER, Carrier
from ..errors import PlanningError
from .model import MultiGraph, NodeRole, coupling_outputs

#: Fixed conductance of a heat edge in kW per unit of balance potential.
HEAT_CONDUCTANCE_KW = 1.0

_PIPE_CARRIERS = (Carrier.GAS, Carrier.HYDROGEN)


class NonConvergence(PlanningError):
    """The solver did not reach the tolerance; carries the residual report."""

    def __init__(self, message: str, residuals: dict[str, float] | None = None):
        super().__init__(message)
        self.residuals = residuals or {}


class NegativePressure(PlanningError):
    """A gas or hydrogen node pressure came out negative; infeasible."""

    def __init__(self, message: str, nodes: list[str] | None = None):
        super().__init__(message)
        self.nodes = nodes or []


@dataclass(frozen=True)
class FlowOptions:
    """Solver knobs.

    ``base_kw`` is the per-unit power base of the electricity carrier;
    residuals there are measured in per-unit, all other carriers in kW.
    ``pipe_regularization`` linearizes the pipe law below a tiny squared
    pressure difference so the Jacobian stays finite at a flat start.
    """

    method: str = "newton"
    tol: float = 1e-8
    max_iter: int = 50
    base_kw: float = 1000.0
    pipe_regularization: float = 1e-12

    def __post_init__(self):
        if self.method not in ("newton", "sequential"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.tol <= 0 or self.max_iter < 1 or self.base_kw <= 0:
            raise ValueError("tolerance, iterations and power base must be positive")


@dataclass
class FlowState:
    """Solved network state.

    ``potentials`` holds voltage angles in rad, pressures in bar or heat
    balance potentials per node; ``edge_flows_kw`` signed flows in edge
    direction; ``slack_injection_kw`` what each carrier's slack feeds into the
    network (negative when it absorbs).
    """

    potentials: dict[str, float]
    edge_flows_kw: dict[str, float]
    coupling_inputs_kw: dict[str, float]
    slack_injection_kw: dict[Carrier, float]
    iterations: int
    max_residual: float
    method: str
    base_kw: float


def _default_reference(carrier: Carrier) -> float:
    return 1.0 if carrier in _PIPE_CARRIERS else 0.0


def _pipe_phi(delta: float, reg: float) -> float:
    if abs(delta) <= reg:
        return delta / math.sqrt(reg)
    return math.copysign(math.sqrt(abs(delta)), delta)


def _pipe_dphi(delta: float, reg: float) -> float:
    if abs(delta) <= reg:
        return 1.0 / math.sqrt(reg)
    return 0.5 / math.sqrt(abs(delta))


class _System:
    """Assembled residual and Jacobian of one solve, shared by both methods."""

    def __init__(self, graph: MultiGraph, setpoints: Mapping[str, float], options: FlowOptions):
        self.graph = graph
        self.options = options
        unknown_devices = set(setpoints) - set(graph.couplings)
        if unknown_devices:
            raise ValueError(f"setpoints for unknown couplings {sorted(unknown_devices)}")
        self.setpoints = {
            device_id: float(setpoints.get(device_id, 0.0)) for device_id in graph.couplings
        }

        # Net nodal injection in kW: demands withdraw, couplings withdraw at
        # the input and inject at the outputs.  Capacity is enforced here.
        self.injections_kw = {node_id: -node.demand_kw for node_id, node in graph.nodes.items()}
        for device_id, device in graph.couplings.items():
            input_kw = self.setpoints[device_id]
            self.injections_kw[device.input_node] -= input_kw
            for output, output_kw in coupling_outputs(device, input_kw):
                self.injections_kw[output.node] += output_kw

        self.carriers = [c for c in CARRIER_ORDER if any(
            n.carrier is c for n in graph.nodes.values()
        )]
        self.slack_potential: dict[Carrier, float] = {}
        for carrier in self.carriers:
            slack = graph.nodes[graph.slack[carrier]]
            reference = slack.reference_potential
            self.slack_potential[carrier] = (
                _default_reference(carrier) if reference is None else reference
            )
        self.unknown_ids: list[str] = []
        self.index: dict[str, int] = {}
        for carrier in self.carriers:
            for node in graph.carrier_nodes(carrier):
                if node.role is not NodeRole.SLACK:
                    self.index[node.id] = len(self.unknown_ids)
                    self.unknown_ids.append(node.id)
        self.residual_scale = {
            node_id: (options.base_kw if graph.nodes[node_id].carrier is Carrier.ELECTRICITY else 1.0)
            for node_id in self.unknown_ids
        }

    # -- state mapping ----------------------------------------------------

    def initial_x(self) -> np.ndarray:
        x = np.empty(len(self.unknown_ids))
        for node_id, k in self.index.items():
            carrier = self.graph.nodes[node_id].carrier
            x[k] = self.slack_potential[carrier] if carrier in _PIPE_CARRIERS else 0.0
        return x

    def potentials_from(self, x: np.ndarray) -> dict[str, float]:
        potentials = {}
        for node_id, node in self.graph.nodes.items():
            if node.role is NodeRole.SLACK:
                potentials[node_id] = self.slack_potential[node.carrier]
            else:
                potentials[node_id] = float(x[self.index[node_id]])
        return potentials

    # -- physics ----------------------------------------------------------

    def edge_flow_kw(self, edge, potentials: Mapping[str, float]) -> float:
        ps = potentials[edge.source]
        pt = potentials[edge.target]
        if edge.carrier is Carrier.ELECTRICITY:
            return edge.susceptance_pu * (ps - pt) * self.options.base_kw
        if edge.carrier in _PIPE_CARRIERS:
            delta = ps * ps - pt * pt
            return edge.flow_coefficient_kw_per_bar * _pipe_phi(
                delta, self.options.pipe_regularization
            )
        return HEAT_CONDUCTANCE_KW * (ps - pt)

    def _edge_flow_partials(self, edge, potentials) -> tuple[float, float]:
        """d(flow_kw)/d(potential_source), d(flow_kw)/d(potential_target)."""
        if edge.carrier is Carrier.ELECTRICITY:
            b = edge.susceptance_pu * self.options.base_kw
            return b, -b
        if edge.carrier in _PIPE_CARRIERS:
            ps = potentials[edge.source]
            pt = potentials[edge.target]
            slope = edge.flow_coefficient_kw_per_bar * _pipe_dphi(
                ps * ps - pt * pt, self.options.pipe_regularization
            )
            return slope * 2.0 * ps, -slope * 2.0 * pt
        return HEAT_CONDUCTANCE_KW, -HEAT_CONDUCTANCE_KW

    def residual(self, x: np.ndarray) -> np.ndarray:
        potentials = self.potentials_from(x)
        r = np.zeros(len(self.unknown_ids))
        for node_id, k in self.index.items():
            r[k] = self.injections_kw[node_id]
        for edge in self.graph.edges.values():
            flow = self.edge_flow_kw(edge, potentials)
            if edge.source in self.index:
                r[self.index[edge.source]] -= flow
            if edge.target in self.index:
                r[self.index[edge.target]] += flow
        for node_id, k in self.index.items():
            r[k] /= self.residual_scale[node_id]
        return r

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        potentials = self.potentials_from(x)
        n = len(self.unknown_ids)
        jac = np.zeros((n, n))
        for edge in self.graph.edges.values():
            d_source, d_target = self._edge_flow_partials(edge, potentials)
            source_k = self.index.get(edge.source)
            target_k = self.index.get(edge.target)
            if source_k is not None:
                jac[source_k, source_k] -= d_source
                if target_k is not None:
                    jac[source_k, target_k] -= d_target
            if target_k is not None:
                if source_k is not None:
                    jac[target_k, source_k] += d_source
                jac[target_k, target_k] += d_target
        for node_id, k in self.index.items():
            jac[k, :] /= self.residual_scale[node_id]
        return jac

    def block_indices(self, carrier: Carrier) -> np.ndarray:
        return np.array(
            [k for node_id, k in self.index.items()
             if self.graph.nodes[node_id].carrier is carrier],
            dtype=int,
        )

    # -- reporting --------------------------------------------------------

    def residual_report(self, x: np.ndarray) -> dict[str, float]:
        r = self.residual(x)
        return {node_id: float(r[k]) for node_id, k in self.index.items()}

    def slack_injections(self, potentials: Mapping[str, float]) -> dict[Carrier, float]:
        out = {}
        for carrier in self.carriers:
            slack_id = self.graph.slack[carrier]
            through = 0.0
            for edge in self.graph.carrier_edges(carrier):
                flow = self.edge_flow_kw(edge, potentials)
                if edge.source == slack_id:
                    through += flow
                if edge.target == slack_id:
                    through -= flow
            out[carrier] = through - self.injections_kw[slack_id]
        return out


def build_system(
    graph: MultiGraph,
    setpoints: Mapping[str, float] | None = None,
    options: FlowOptions | None = None,
) -> _System:
    """Assemble residual/Jacobian callables for a solve.

    Exposed so the analytic Jacobian can be checked against finite
    differences without going through a full solve.
    """
    return _System(graph, setpoints or {}, options or FlowOptions())


def _newton(system: _System, options: FlowOptions, indices: np.ndarray | None = None):
    """Newton iterations on all unknowns, or on a block of them."""
    x = system.initial_x()
    for iteration in range(options.max_iter + 1):
        r = system.residual(x)
        r_view = r if indices is None else r[indices]
        if r_view.size == 0 or float(np.max(np.abs(r_view))) <= options.tol:
            return x, iteration
        jac = system.jacobian(x)
        if indices is not None:
            jac = jac[np.ix_(indices, indices)]
        try:
            dx = np.linalg.solve(jac, -r_view)
        except np.linalg.LinAlgError as exc:
            raise NonConvergence(
                f"singular Jacobian: {exc}", system.residual_report(x)
            ) from exc
        if indices is None:
            x = x + dx
        else:
            x = x.copy()
            x[indices] += dx
    raise NonConvergence(
        f"no convergence after {options.max_iter} iterations",
        system.residual_report(x),
    )


def _sequential(system: _System, options: FlowOptions):
    """Fixed-point sweeps over the carriers, each solved on its own."""
    x = system.initial_x()
    total_iterations = 0
    for _ in range(options.max_iter):
        for carrier in system.carriers:
            indices = system.block_indices(carrier)
            if indices.size == 0:
                continue
            x_block, iterations = _newton_from(system, options, x, indices)
            x = x_block
            total_iterations += iterations
        r = system.residual(x)
        if r.size == 0 or float(np.max(np.abs(r))) <= options.tol:
            return x, max(total_iterations, 1)
    raise NonConvergence(
        f"no convergence after {options.max_iter} sweeps",
        system.residual_report(x),
    )


def _newton_from(system: _System, options: FlowOptions, x0: np.ndarray, indices: np.ndarray):
    x = x0.copy()
    for iteration in range(options.max_iter + 1):
        r = system.residual(x)[indices]
        if r.size == 0 or float(np.max(np.abs(r))) <= options.tol:
            return x, iteration
        jac = system.jacobian(x)[np.ix_(indices, indices)]
        try:
            dx = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError as exc:
            raise NonConvergence(
                f"singular Jacobian: {exc}", system.residual_report(x)
            ) from exc
        x = x.copy()
        x[indices] += dx
    raise NonConvergence(
        f"carrier block stuck after {options.max_iter} iterations",
        system.residual_report(x),
    )


def solve_flow(
    graph: MultiGraph,
    setpoints: Mapping[str, float] | None = None,
    options: FlowOptions | None = None,
) -> FlowState:
    """Solve the coupled steady state.

    With all demands and setpoints zero the flat state satisfies every balance
    and is returned unchanged.  Gas and hydrogen pressures must come out
    non-negative, otherwise :class:`NegativePressure` is raised.
    """
    options = options or FlowOptions()
    system = build_system(graph, setpoints, options)
    if options.method == "newton":
        x, iterations = _newton(system, options)
    else:
        x, iterations = _sequential(system, options)
    potentials = system.potentials_from(x)
    negative = [
        node_id
        for node_id, node in graph.nodes.items()
        if node.carrier in _PIPE_CARRIERS and potentials[node_id] < -1e-12
    ]
    if negative:
        raise NegativePressure(
            f"negative pressure at {negative}", nodes=negative
        )
    flows = {
        edge_id: system.edge_flow_kw(edge, potentials)
        for edge_id, edge in graph.edges.items()
    }
    r = system.residual(x)
    max_residual = float(np.max(np.abs(r))) if r.size else 0.0
    return FlowState(
        potentials=potentials,
        edge_flows_kw=flows,
        coupling_inputs_kw=dict(system.setpoints),
        slack_injection_kw=system.slack_injections(potentials),
        iterations=iterations,
        max_residual=max_residual,
        method=options.method,
        base_kw=options.base_kw,
    )


@dataclass
class VerifyReport:
    """Independent balance check of a state against its graph."""

    node_residuals: dict[str, float]
    capacity_violations: list[str]
    max_residual: float
    passed: bool


def verify_state(graph: MultiGraph, state: FlowState, tol: float = 1e-8) -> VerifyReport:
    """Recompute every nodal balance from scratch and compare against ``tol``.

    This walks the graph with the exact edge laws (no regularization) and the
    coupling inputs recorded in the state; it shares no intermediate results
    with the solver.  Electricity residuals are measured in per-unit on the
    state's power base, all others in kW.  Capacity violations list the edges
    whose recomputed |flow| exceeds their capacity; any violation fails the
    report even when the balances close.
    """
    flows = {}
    for edge_id, edge in graph.edges.items():
        ps = state.potentials[edge.source]
        pt = state.potentials[edge.target]
        if edge.carrier is Carrier.ELECTRICITY:
            flows[edge_id] = edge.susceptance_pu * (ps - pt) * state.base_kw
        elif edge.carrier in _PIPE_CARRIERS:
            delta = ps * ps - pt * pt
            flows[edge_id] = edge.flow_coefficient_kw_per_bar * math.copysign(
                math.sqrt(abs(delta)), delta
            )
        else:
            flows[edge_id] = HEAT_CONDUCTANCE_KW * (ps - pt)

    balance = {}
    for node_id, node in graph.nodes.items():
        balance[node_id] = -node.demand_kw
    for device_id, device in graph.couplings.items():
        input_kw = state.coupling_inputs_kw.get(device_id, 0.0)
        balance[device.input_node] -= input_kw
        for output in device.outputs:
            balance[output.node] += output.efficiency * input_kw
    for edge_id, edge in graph.edges.items():
        balance[edge.source] -= flows[edge_id]
        balance[edge.target] += flows[edge_id]

    residuals = {}
    for node_id, node in graph.nodes.items():
        if node.role is NodeRole.SLACK:
            continue
        scale = state.base_kw if node.carrier is Carrier.ELECTRICITY else 1.0
        residuals[node_id] = balance[node_id] / scale
    violations = [
        edge_id
        for edge_id, edge in graph.edges.items()
        if edge.capacity_kw is not None and abs(flows[edge_id]) > edge.capacity_kw
    ]
    max_residual = max((abs(v) for v in residuals.values()), default=0.0)
    passed = max_residual <= tol and not violations
    return VerifyReport(residuals, violations, max_residual, passed)
