"""Data model of a coupled multi-carrier network.

Each node and edge belongs to exactly one carrier; coupling devices are the
only elements that bridge carriers.  A device withdraws its input power on the
input node's carrier and injects efficiency-scaled power at each output node.
Every carrier that has nodes needs exactly one slack node to absorb its
residual balance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping, Sequence

from ..carriers import Carrier
from ..errors import PlanningError


class CarrierMismatch(PlanningError):
    """An edge or coupling endpoint does not match its node's carrier."""


class MissingSlack(PlanningError):
    """A carrier with nodes has no slack node."""


class DanglingEndpoint(PlanningError):
    """An edge or coupling references a node that does not exist."""


class CapacityExceeded(PlanningError):
    """A coupling setpoint exceeds the device capacity."""


class NodeRole(str, Enum):
    SLACK = "slack"
    DEMAND = "demand"
    JUNCTION = "junction"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class GridNode:
    """A node of one carrier network.

    ``reference_potential`` is only meaningful on slack nodes: the fixed
    voltage angle in rad (electricity), pressure in bar (gas, hydrogen) or
    balance potential (heat).  ``None`` selects the carrier default of 0 rad,
    1 bar or 0.
    """

    id: str
    carrier: Carrier
    role: NodeRole = NodeRole.JUNCTION
    demand_kw: float = 0.0
    reference_potential: float | None = None

    def __post_init__(self):
        if self.demand_kw < 0 or not math.isfinite(self.demand_kw):
            raise ValueError(f"node {self.id}: demand must be finite and >= 0")


@dataclass(frozen=True)
class GridEdge:
    """A directed branch within one carrier network.

    Electricity edges need a positive per-unit susceptance, gas and hydrogen
    pipes a positive flow coefficient in kW/bar, heat edges a positive
    transport capacity.  ``capacity_kw`` is optional elsewhere and only used
    for loading checks; the sign of a reported flow follows the edge
    direction.
    """

    id: str
    carrier: Carrier
    source: str
    target: str
    susceptance_pu: float | None = None
    flow_coefficient_kw_per_bar: float | None = None
    capacity_kw: float | None = None

    def __post_init__(self):
        if self.source == self.target:
            raise ValueError(f"edge {self.id}: self-loops are not allowed")
        if self.carrier is Carrier.ELECTRICITY:
            if self.susceptance_pu is None or self.susceptance_pu <= 0:
                raise ValueError(f"edge {self.id}: electricity needs susceptance > 0")
        elif self.carrier in (Carrier.GAS, Carrier.HYDROGEN):
            if self.flow_coefficient_kw_per_bar is None or self.flow_coefficient_kw_per_bar <= 0:
                raise ValueError(f"edge {self.id}: pipe needs flow coefficient > 0")
        elif self.carrier is Carrier.HEAT:
            if self.capacity_kw is None or self.capacity_kw <= 0:
                raise ValueError(f"edge {self.id}: heat edge needs capacity > 0")
        if self.capacity_kw is not None and self.capacity_kw <= 0:
            raise ValueError(f"edge {self.id}: capacity must be > 0 when given")


@dataclass(frozen=True)
class CouplingOutput:
    """One output leg of a coupling device."""

    node: str
    carrier: Carrier
    efficiency: float

    def __post_init__(self):
        if self.efficiency <= 0 or not math.isfinite(self.efficiency):
            raise ValueError("coupling output efficiency must be > 0")


@dataclass(frozen=True)
class CouplingDevice:
    """A cross-carrier converter with a fixed input setpoint at solve time.

    Efficiencies above one are legitimate for heat pumps, whose output leg
    carries a coefficient of performance.
    """

    id: str
    input_node: str
    input_carrier: Carrier
    outputs: tuple[CouplingOutput, ...]
    capacity_kw: float

    def __post_init__(self):
        if not self.outputs:
            raise ValueError(f"coupling {self.id}: needs at least one output")
        if self.capacity_kw <= 0 or not math.isfinite(self.capacity_kw):
            raise ValueError(f"coupling {self.id}: capacity must be > 0")
        for output in self.outputs:
            if output.carrier is self.input_carrier:
                raise ValueError(
                    f"coupling {self.id}: output carrier must differ from input"
                )


@dataclass
class MultiGraph:
    """Validated multi-carrier network; use :func:`assemble` to construct."""

    nodes: dict[str, GridNode] = field(default_factory=dict)
    edges: dict[str, GridEdge] = field(default_factory=dict)
    couplings: dict[str, CouplingDevice] = field(default_factory=dict)
    slack: dict[Carrier, str] = field(default_factory=dict)

    def carriers(self) -> tuple[Carrier, ...]:
        present = []
        for node in self.nodes.values():
            if node.carrier not in present:
                present.append(node.carrier)
        return tuple(present)

    def carrier_nodes(self, carrier: Carrier) -> list[GridNode]:
        return [n for n in self.nodes.values() if n.carrier is carrier]

    def carrier_edges(self, carrier: Carrier) -> list[GridEdge]:
        return [e for e in self.edges.values() if e.carrier is carrier]


def assemble(
    nodes: Iterable[GridNode],
    edges: Iterable[GridEdge] = (),
    couplings: Iterable[CouplingDevice] = (),
) -> MultiGraph:
    """Build and validate a :class:`MultiGraph`.

    Checks id uniqueness, that edges stay within one carrier and reference
    existing nodes, that couplings bridge carriers consistently, and that each
    carrier with nodes has exactly one slack.
    """
    graph = MultiGraph()
    for node in nodes:
        if node.id in graph.nodes:
            raise ValueError(f"duplicate node id {node.id!r}")
        graph.nodes[node.id] = node
    for edge in edges:
        if edge.id in graph.edges:
            raise ValueError(f"duplicate edge id {edge.id!r}")
        for end in (edge.source, edge.target):
            if end not in graph.nodes:
                raise DanglingEndpoint(f"edge {edge.id}: unknown node {end!r}")
            if graph.nodes[end].carrier is not edge.carrier:
                raise CarrierMismatch(
                    f"edge {edge.id} ({edge.carrier}) touches {end!r} "
                    f"({graph.nodes[end].carrier})"
                )
        graph.edges[edge.id] = edge
    for device in couplings:
        if device.id in graph.couplings:
            raise ValueError(f"duplicate coupling id {device.id!r}")
        if device.input_node not in graph.nodes:
            raise DanglingEndpoint(f"coupling {device.id}: unknown node {device.input_node!r}")
        if graph.nodes[device.input_node].carrier is not device.input_carrier:
            raise CarrierMismatch(
                f"coupling {device.id}: input node {device.input_node!r} is not "
                f"on {device.input_carrier}"
            )
        for output in device.outputs:
            if output.node not in graph.nodes:
                raise DanglingEndpoint(f"coupling {device.id}: unknown node {output.node!r}")
            if graph.nodes[output.node].carrier is not output.carrier:
                raise CarrierMismatch(
                    f"coupling {device.id}: output node {output.node!r} is not "
                    f"on {output.carrier}"
                )
        graph.couplings[device.id] = device
    for carrier in graph.carriers():
        slacks = [n.id for n in graph.carrier_nodes(carrier) if n.role is NodeRole.SLACK]
        if len(slacks) == 0:
            raise MissingSlack(f"carrier {carrier} has nodes but no slack")
        if len(slacks) > 1:
            raise ValueError(f"carrier {carrier} has multiple slacks: {slacks}")
        graph.slack[carrier] = slacks[0]
    return graph


def coupling_outputs(
    device: CouplingDevice, input_kw: float
) -> list[tuple[CouplingOutput, float]]:
    """Output injections of a device at a given input power.

    Raises :class:`CapacityExceeded` above the device capacity; negative
    input is a caller error.
    """
    if input_kw < 0 or not math.isfinite(input_kw):
        raise ValueError(f"coupling {device.id}: input power must be finite and >= 0")
    if input_kw > device.capacity_kw * (1.0 + 1e-12):
        raise CapacityExceeded(
            f"coupling {device.id}: setpoint {input_kw} kW exceeds "
            f"capacity {device.capacity_kw} kW"
        )
    return [(output, output.efficiency * input_kw) for output in device.outputs]


def with_demands(graph: MultiGraph, overrides: Mapping[str, float]) -> MultiGraph:
    """Copy of the graph with some node demands replaced."""
    nodes = []
    for node in graph.nodes.values():
        if node.id in overrides:
            nodes.append(replace(node, demand_kw=float(overrides[node.id])))
        else:
            nodes.append(node)
    unknown = set(overrides) - set(graph.nodes)
    if unknown:
        raise DanglingEndpoint(f"demand overrides for unknown nodes {sorted(unknown)}")
    return assemble(nodes, graph.edges.values(), graph.couplings.values())


def with_couplings(graph: MultiGraph, devices: Sequence[CouplingDevice]) -> MultiGraph:
    """Copy of the graph with additional coupling devices."""
    return assemble(
        graph.nodes.values(),
        graph.edges.values(),
        list(graph.couplings.values()) + list(devices),
    )


# ---------------------------------------------------------------------------
# wire format


def graph_to_dict(graph: MultiGraph) -> dict:
    """JSON-compatible tree of the graph."""
    return {
        "nodes": [
            {
                "id": n.id,
                "carrier": str(n.carrier),
                "role": str(n.role),
                "demand_kw": n.demand_kw,
                **(
                    {"reference_potential": n.reference_potential}
                    if n.reference_potential is not None
                    else {}
                ),
            }
            for n in graph.nodes.values()
        ],
        "edges": [
            {
                "id": e.id,
                "carrier": str(e.carrier),
                "source": e.source,
                "target": e.target,
                **({"susceptance_pu": e.susceptance_pu} if e.susceptance_pu is not None else {}),
                **(
                    {"flow_coefficient_kw_per_bar": e.flow_coefficient_kw_per_bar}
                    if e.flow_coefficient_kw_per_bar is not None
                    else {}
                ),
                **({"capacity_kw": e.capacity_kw} if e.capacity_kw is not None else {}),
            }
            for e in graph.edges.values()
        ],
        "couplings": [
            {
                "id": c.id,
                "input_node": c.input_node,
                "input_carrier": str(c.input_carrier),
                "capacity_kw": c.capacity_kw,
                "outputs": [
                    {"node": o.node, "carrier": str(o.carrier), "efficiency": o.efficiency}
                    for o in c.outputs
                ],
            }
            for c in graph.couplings.values()
        ],
    }


def graph_from_dict(tree: Mapping) -> MultiGraph:
    """Inverse of :func:`graph_to_dict`, with full validation."""
    nodes = [
        GridNode(
            id=str(n["id"]),
            carrier=Carrier(n["carrier"]),
            role=NodeRole(n.get("role", "junction")),
            demand_kw=float(n.get("demand_kw", 0.0)),
            reference_potential=(
                float(n["reference_potential"]) if "reference_potential" in n else None
            ),
        )
        for n in tree.get("nodes", [])
    ]
    edges = [
        GridEdge(
            id=str(e["id"]),
            carrier=Carrier(e["carrier"]),
            source=str(e["source"]),
            target=str(e["target"]),
            susceptance_pu=(float(e["susceptance_pu"]) if "susceptance_pu" in e else None),
            flow_coefficient_kw_per_bar=(
                float(e["flow_coefficient_kw_per_bar"])
                if "flow_coefficient_kw_per_bar" in e
                else None
            ),
            capacity_kw=(float(e["capacity_kw"]) if "capacity_kw" in e else None),
        )
        for e in tree.get("edges", [])
    ]
    couplings = [
        CouplingDevice(
            id=str(c["id"]),
            input_node=str(c["input_node"]),
            input_carrier=Carrier(c["input_carrier"]),
            capacity_kw=float(c["capacity_kw"]),
            outputs=tuple(
                CouplingOutput(str(o["node"]), Carrier(o["carrier"]), float(o["efficiency"]))
                for o in c.get("outputs", [])
            ),
        )
        for c in tree.get("couplings", [])
    ]
    return assemble(nodes, edges, couplings)
