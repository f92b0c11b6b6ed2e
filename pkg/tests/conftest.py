import math
from pathlib import Path

import pytest

from megrid.carriers import Carrier
from megrid.gridsynth import Street
from megrid.heatdemand import Building
from megrid.multigrid import (
    CouplingDevice,
    CouplingOutput,
    GridEdge,
    GridNode,
    NodeRole,
    assemble,
)

DATA_DIR = Path(__file__).parent / "data" / "toycity"


def rect(x0, y0, x1, y1):
    return ((x0, y0), (x1, y0), (x1, y1), (x0, y1))


@pytest.fixture(scope="session")
def toycity_dir() -> Path:
    return DATA_DIR


def manhattan_streets() -> list[Street]:
    """3x3 street grid: 6 axis-aligned streets crossing at 9 points."""
    streets = [
        Street(f"h{i}", ((0.0, y), (200.0, y))) for i, y in enumerate((0.0, 100.0, 200.0))
    ]
    streets += [
        Street(f"v{i}", ((x, 0.0), (x, 200.0))) for i, x in enumerate((0.0, 100.0, 200.0))
    ]
    return streets


def manhattan_buildings() -> list[Building]:
    return [
        Building("b1", rect(30.0, 30.0, 50.0, 50.0), 20000.0, "gas_boiler"),
        Building("b2", rect(130.0, 30.0, 150.0, 50.0), 18000.0, "gas_boiler"),
        Building("b3", rect(30.0, 130.0, 50.0, 150.0), 26000.0, "oil_boiler"),
        Building("b4", rect(130.0, 130.0, 150.0, 150.0), 22000.0, "heat_pump"),
    ]


def two_bus_electric():
    """Slack feeding one 1000 kW load over a 10 p.u. line; theta = -0.1 rad."""
    return assemble(
        [
            GridNode("s", Carrier.ELECTRICITY, NodeRole.SLACK, 0.0),
            GridNode("d", Carrier.ELECTRICITY, NodeRole.DEMAND, 1000.0),
        ],
        [GridEdge("l", Carrier.ELECTRICITY, "s", "d", susceptance_pu=10.0)],
    )


def single_pipe_gas():
    """2 bar slack, sqrt(3) kW withdrawal, K=1: far pressure settles at 1 bar."""
    return assemble(
        [
            GridNode("a", Carrier.GAS, NodeRole.SLACK, 0.0, reference_potential=2.0),
            GridNode("b", Carrier.GAS, NodeRole.DEMAND, math.sqrt(3.0)),
        ],
        [GridEdge("p", Carrier.GAS, "a", "b", flow_coefficient_kw_per_bar=1.0)],
    )


def tri_carrier_graph():
    """Electricity, hydrogen and heat coupled by an electrolyzer and a heat pump.

    With setpoints ely=1000, hp=20: electric slack delivers 1520 kW, the
    hydrogen node settles at sqrt(675) bar, the heat pipe carries 30 kW.
    """
    nodes = [
        GridNode("e_slack", Carrier.ELECTRICITY, NodeRole.SLACK, 0.0),
        GridNode("e_bus", Carrier.ELECTRICITY, NodeRole.DEMAND, 500.0),
        GridNode("h2_slack", Carrier.HYDROGEN, NodeRole.SLACK, 0.0, reference_potential=30.0),
        GridNode("h2_node", Carrier.HYDROGEN, NodeRole.DEMAND, 1000.0),
        GridNode("ht_slack", Carrier.HEAT, NodeRole.SLACK, 0.0),
        GridNode("ht_node", Carrier.HEAT, NodeRole.DEMAND, 90.0),
    ]
    edges = [
        GridEdge("el1", Carrier.ELECTRICITY, "e_slack", "e_bus", susceptance_pu=20.0),
        GridEdge("h2p", Carrier.HYDROGEN, "h2_slack", "h2_node", flow_coefficient_kw_per_bar=20.0),
        GridEdge("htp", Carrier.HEAT, "ht_slack", "ht_node", capacity_kw=200.0),
    ]
    devices = [
        CouplingDevice(
            "ely", "e_bus", Carrier.ELECTRICITY,
            (CouplingOutput("h2_node", Carrier.HYDROGEN, 0.7),), 2000.0,
        ),
        CouplingDevice(
            "hp", "e_bus", Carrier.ELECTRICITY,
            (CouplingOutput("ht_node", Carrier.HEAT, 3.0),), 100.0,
        ),
    ]
    return assemble(nodes, edges, devices)


TRI_CARRIER_SETPOINTS = {"ely": 1000.0, "hp": 20.0}


def placement_graph():
    """Two-carrier chain grid used by the placement tests."""
    nodes = [
        GridNode("es", Carrier.ELECTRICITY, NodeRole.SLACK, 0.0),
        GridNode("e1", Carrier.ELECTRICITY, NodeRole.DEMAND, 100.0),
        GridNode("e2", Carrier.ELECTRICITY, NodeRole.DEMAND, 80.0),
        GridNode("hs", Carrier.HEAT, NodeRole.SLACK, 0.0),
        GridNode("h1", Carrier.HEAT, NodeRole.DEMAND, 60.0),
        GridNode("h2", Carrier.HEAT, NodeRole.DEMAND, 40.0),
    ]
    edges = [
        GridEdge("le1", Carrier.ELECTRICITY, "es", "e1", susceptance_pu=50.0),
        GridEdge("le2", Carrier.ELECTRICITY, "e1", "e2", susceptance_pu=50.0),
        GridEdge("lh1", Carrier.HEAT, "hs", "h1", capacity_kw=500.0),
        GridEdge("lh2", Carrier.HEAT, "h1", "h2", capacity_kw=500.0),
    ]
    return assemble(nodes, edges)


def heat_pump_site(cid, node_el, node_ht, capacity_kw, cost=1000.0, cop=3.0):
    from megrid.plan import CandidateSite

    return CandidateSite(
        id=cid,
        device=CouplingDevice(
            cid, node_el, Carrier.ELECTRICITY,
            (CouplingOutput(node_ht, Carrier.HEAT, cop),), capacity_kw,
        ),
        setpoint_kw=capacity_kw,
        build_cost=cost,
    )


def base_adoption_scenario() -> dict:
    """Gas-dominated population with a clearly cheaper heat pump on offer."""
    return {
        "start_year": 2022,
        "end_year": 2045,
        "seed": 42,
        "population": {
            "count": 100,
            "initial_shares": {"gas_boiler": 0.7, "heat_pump": 0.3},
            "attributes": {
                "income": {"dist": "normal", "mean": 40000, "std": 8000},
                "expenditures": {"dist": "constant", "value": 30000},
                "funds": {"dist": "uniform", "low": 0, "high": 20000},
                "saving_quota": {"dist": "constant", "value": 0.5},
                "willingness": {"dist": "constant", "value": 0.6},
                "hysteresis": {"dist": "constant", "value": 0.1},
            },
        },
        "costs": {
            "gas_boiler": [{"from": 2022, "to": 2045, "capex": 8000, "opex": 2500}],
            "heat_pump": [{"from": 2022, "to": 2045, "capex": 16000, "opex": 1200}],
        },
    }
