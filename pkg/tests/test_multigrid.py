import math

import numpy as np
import pytest

from megrid.carriers import Carrier
from megrid.multigrid import (
    CapacityExceeded,
    CarrierMismatch,
    CouplingDevice,
    CouplingOutput,
    DanglingEndpoint,
    FlowOptions,
    GridEdge,
    GridNode,
    MissingSlack,
    NegativePressure,
    NodeRole,
    NonConvergence,
    assemble,
    build_system,
    coupling_outputs,
    graph_from_dict,
    graph_to_dict,
    solve_flow,
    verify_state,
    with_couplings,
    with_demands,
)

from conftest import (
    TRI_CARRIER_SETPOINTS,
    single_pipe_gas,
    tri_carrier_graph,
    two_bus_electric,
)


def node(nid, carrier, role=NodeRole.JUNCTION, demand=0.0, ref=None):
    return GridNode(nid, carrier, role, demand, reference_potential=ref)


class TestModelValidation:
    def test_missing_slack(self):
        with pytest.raises(MissingSlack):
            assemble([node("a", Carrier.GAS, NodeRole.DEMAND, 1.0)], [])

    def test_two_slacks_rejected(self):
        with pytest.raises(ValueError):
            assemble(
                [node("a", Carrier.GAS, NodeRole.SLACK), node("b", Carrier.GAS, NodeRole.SLACK)],
                [],
            )

    def test_dangling_edge(self):
        with pytest.raises(DanglingEndpoint):
            assemble(
                [node("a", Carrier.GAS, NodeRole.SLACK)],
                [GridEdge("e", Carrier.GAS, "a", "ghost", flow_coefficient_kw_per_bar=1.0)],
            )

    def test_edge_carrier_mismatch(self):
        with pytest.raises(CarrierMismatch):
            assemble(
                [
                    node("a", Carrier.GAS, NodeRole.SLACK),
                    node("b", Carrier.ELECTRICITY, NodeRole.SLACK),
                ],
                [GridEdge("e", Carrier.GAS, "a", "b", flow_coefficient_kw_per_bar=1.0)],
            )

    def test_electric_edge_needs_susceptance(self):
        with pytest.raises(ValueError):
            GridEdge("e", Carrier.ELECTRICITY, "a", "b")

    def test_pipe_edge_needs_coefficient(self):
        with pytest.raises(ValueError):
            GridEdge("e", Carrier.HYDROGEN, "a", "b", susceptance_pu=1.0)

    def test_heat_edge_needs_capacity(self):
        with pytest.raises(ValueError):
            GridEdge("e", Carrier.HEAT, "a", "b")

    def test_self_loop_rejected(self):
        with pytest.raises(ValueError):
            GridEdge("e", Carrier.HEAT, "a", "a", capacity_kw=1.0)

    def test_negative_demand_rejected(self):
        with pytest.raises(ValueError):
            node("a", Carrier.GAS, NodeRole.DEMAND, -1.0)

    def test_coupling_output_same_carrier_rejected(self):
        with pytest.raises(ValueError):
            CouplingDevice(
                "c", "a", Carrier.GAS, (CouplingOutput("b", Carrier.GAS, 0.5),), 10.0
            )

    def test_coupling_input_node_carrier_checked(self):
        device = CouplingDevice(
            "c", "a", Carrier.ELECTRICITY, (CouplingOutput("b", Carrier.HEAT, 3.0),), 10.0
        )
        nodes = [
            node("a", Carrier.GAS, NodeRole.SLACK),
            node("b", Carrier.HEAT, NodeRole.SLACK),
        ]
        with pytest.raises(CarrierMismatch):
            assemble(nodes, [], [device])

    def test_coupling_outputs_capacity(self):
        device = CouplingDevice(
            "c", "a", Carrier.ELECTRICITY, (CouplingOutput("b", Carrier.HEAT, 3.0),), 10.0
        )
        assert coupling_outputs(device, 10.0)[0][1] == pytest.approx(30.0)
        with pytest.raises(CapacityExceeded):
            coupling_outputs(device, 10.1)

    def test_cop_above_one_allowed(self):
        CouplingOutput("b", Carrier.HEAT, 4.5)

    def test_efficiency_positive(self):
        with pytest.raises(ValueError):
            CouplingOutput("b", Carrier.HEAT, 0.0)


class TestWithHelpers:
    def test_with_demands_is_pure(self):
        graph = two_bus_electric()
        changed = with_demands(graph, {"d": 500.0})
        assert graph.nodes["d"].demand_kw == 1000.0
        assert changed.nodes["d"].demand_kw == 500.0

    def test_with_demands_unknown_node(self):
        with pytest.raises(DanglingEndpoint):
            with_demands(two_bus_electric(), {"ghost": 1.0})

    def test_with_couplings_adds_device(self):
        graph = tri_carrier_graph()
        extra = CouplingDevice(
            "hp2", "e_bus", Carrier.ELECTRICITY,
            (CouplingOutput("ht_node", Carrier.HEAT, 3.5),), 50.0,
        )
        bigger = with_couplings(graph, [extra])
        assert set(bigger.couplings) == {"ely", "hp", "hp2"}
        assert set(graph.couplings) == {"ely", "hp"}

    def test_duplicate_coupling_id_rejected(self):
        graph = tri_carrier_graph()
        clone = graph.couplings["hp"]
        with pytest.raises(ValueError):
            with_couplings(graph, [clone])


class TestWireFormat:
    def test_round_trip(self):
        graph = tri_carrier_graph()
        rebuilt = graph_from_dict(graph_to_dict(graph))
        assert graph_to_dict(rebuilt) == graph_to_dict(graph)

    def test_defaults_fill_in(self):
        tree = {
            "nodes": [
                {"id": "s", "carrier": "heat", "role": "slack"},
                {"id": "d", "carrier": "heat", "role": "demand", "demand_kw": 5.0},
            ],
            "edges": [
                {"id": "e", "carrier": "heat", "source": "s", "target": "d", "capacity_kw": 10.0}
            ],
        }
        graph = graph_from_dict(tree)
        assert graph.nodes["s"].demand_kw == 0.0


class TestElectric:
    def test_two_bus_analytic(self):
        state = solve_flow(two_bus_electric(), {}, FlowOptions())
        assert state.potentials["d"] == pytest.approx(-0.1, abs=1e-12)
        assert state.edge_flows_kw["l"] == pytest.approx(1000.0, rel=1e-12)
        assert state.slack_injection_kw[Carrier.ELECTRICITY] == pytest.approx(1000.0)

    def test_three_bus_chain(self):
        # slack - (B=10) - m - (B=5) - d, demand 1000 kW at d only:
        # flow 1 pu everywhere; theta_m = -0.1, theta_d = -0.1 - 0.2
        graph = assemble(
            [
                node("s", Carrier.ELECTRICITY, NodeRole.SLACK),
                node("m", Carrier.ELECTRICITY),
                node("d", Carrier.ELECTRICITY, NodeRole.DEMAND, 1000.0),
            ],
            [
                GridEdge("a", Carrier.ELECTRICITY, "s", "m", susceptance_pu=10.0),
                GridEdge("b", Carrier.ELECTRICITY, "m", "d", susceptance_pu=5.0),
            ],
        )
        state = solve_flow(graph, {}, FlowOptions())
        assert state.potentials["m"] == pytest.approx(-0.1, abs=1e-9)
        assert state.potentials["d"] == pytest.approx(-0.3, abs=1e-9)

    def test_zero_demand_flat_exact(self):
        graph = assemble(
            [
                node("s", Carrier.ELECTRICITY, NodeRole.SLACK),
                node("d", Carrier.ELECTRICITY),
            ],
            [GridEdge("l", Carrier.ELECTRICITY, "s", "d", susceptance_pu=3.0)],
        )
        state = solve_flow(graph, {}, FlowOptions())
        assert state.iterations == 0
        assert state.potentials["d"] == 0.0
        assert state.max_residual == 0.0


class TestGas:
    def test_single_pipe_sqrt3(self):
        state = solve_flow(single_pipe_gas(), {}, FlowOptions())
        assert state.potentials["b"] == pytest.approx(1.0, abs=1e-9)
        assert state.edge_flows_kw["p"] == pytest.approx(math.sqrt(3.0), abs=1e-9)

    def test_infeasible_demand_does_not_converge(self):
        graph = assemble(
            [
                node("a", Carrier.GAS, NodeRole.SLACK, ref=1.0),
                node("b", Carrier.GAS, NodeRole.DEMAND, 100.0),
            ],
            [GridEdge("p", Carrier.GAS, "a", "b", flow_coefficient_kw_per_bar=1.0)],
        )
        with pytest.raises(NonConvergence):
            solve_flow(graph, {}, FlowOptions())

    def test_negative_reference_pressure_flagged(self):
        graph = assemble(
            [
                node("a", Carrier.GAS, NodeRole.SLACK, ref=-0.5),
                node("b", Carrier.GAS),
            ],
            [GridEdge("p", Carrier.GAS, "a", "b", flow_coefficient_kw_per_bar=1.0)],
        )
        with pytest.raises(NegativePressure):
            solve_flow(graph, {}, FlowOptions())

    def test_series_pipes(self):
        # slack 3 bar -K=2- m -K=1- d with 2 kW at d:
        # p_m^2 = 9 - 1 = 8, p_d^2 = 8 - 4 = 4
        graph = assemble(
            [
                node("a", Carrier.GAS, NodeRole.SLACK, ref=3.0),
                node("m", Carrier.GAS),
                node("d", Carrier.GAS, NodeRole.DEMAND, 2.0),
            ],
            [
                GridEdge("p1", Carrier.GAS, "a", "m", flow_coefficient_kw_per_bar=2.0),
                GridEdge("p2", Carrier.GAS, "m", "d", flow_coefficient_kw_per_bar=1.0),
            ],
        )
        state = solve_flow(graph, {}, FlowOptions(tol=1e-11))
        assert state.potentials["m"] == pytest.approx(math.sqrt(8.0), abs=1e-9)
        assert state.potentials["d"] == pytest.approx(2.0, abs=1e-9)


class TestHeat:
    def test_tree_exact(self):
        graph = assemble(
            [
                node("s", Carrier.HEAT, NodeRole.SLACK),
                node("m", Carrier.HEAT),
                node("d", Carrier.HEAT, NodeRole.DEMAND, 7.0),
            ],
            [
                GridEdge("a", Carrier.HEAT, "s", "m", capacity_kw=100.0),
                GridEdge("b", Carrier.HEAT, "m", "d", capacity_kw=100.0),
            ],
        )
        state = solve_flow(graph, {}, FlowOptions())
        assert state.edge_flows_kw["a"] == pytest.approx(7.0, abs=1e-9)
        assert state.edge_flows_kw["b"] == pytest.approx(7.0, abs=1e-9)
        assert state.slack_injection_kw[Carrier.HEAT] == pytest.approx(7.0)


class TestCoupledFixture:
    def test_methods_agree(self):
        graph = tri_carrier_graph()
        newton = solve_flow(graph, TRI_CARRIER_SETPOINTS, FlowOptions(method="newton"))
        sequential = solve_flow(
            graph, TRI_CARRIER_SETPOINTS, FlowOptions(method="sequential")
        )
        for node_id in newton.potentials:
            assert newton.potentials[node_id] == pytest.approx(
                sequential.potentials[node_id], abs=1e-6
            )

    def test_analytic_values(self):
        state = solve_flow(tri_carrier_graph(), TRI_CARRIER_SETPOINTS, FlowOptions())
        # electric: 500 demand + 1000 electrolyzer + 20 heat pump = 1520 kW
        assert state.slack_injection_kw[Carrier.ELECTRICITY] == pytest.approx(1520.0, rel=1e-9)
        assert state.potentials["e_bus"] == pytest.approx(-1.52 / 20.0, abs=1e-9)
        # hydrogen: 1000 demand - 700 electrolyzer output = 300 kW over the pipe
        assert state.potentials["h2_node"] == pytest.approx(math.sqrt(675.0), abs=1e-9)
        # heat: 90 demand - 60 heat pump output = 30 kW from the slack
        assert state.edge_flows_kw["htp"] == pytest.approx(30.0, abs=1e-9)

    def test_verify_state_passes_both_methods(self):
        graph = tri_carrier_graph()
        for method in ("newton", "sequential"):
            state = solve_flow(graph, TRI_CARRIER_SETPOINTS, FlowOptions(method=method))
            report = verify_state(graph, state, tol=1e-8)
            assert report.passed
            assert report.capacity_violations == []

    def test_coupling_conservation(self):
        state = solve_flow(tri_carrier_graph(), TRI_CARRIER_SETPOINTS, FlowOptions())
        graph = tri_carrier_graph()
        for device_id, input_kw in state.coupling_inputs_kw.items():
            device = graph.couplings[device_id]
            for output, output_kw in coupling_outputs(device, input_kw):
                assert output_kw / output.efficiency == pytest.approx(input_kw, rel=1e-9)

    def test_setpoint_for_unknown_device(self):
        with pytest.raises(ValueError):
            solve_flow(tri_carrier_graph(), {"ghost": 1.0}, FlowOptions())

    def test_setpoint_above_capacity(self):
        with pytest.raises(CapacityExceeded):
            solve_flow(tri_carrier_graph(), {"hp": 101.0}, FlowOptions())


class TestVerifyIndependence:
    def test_tampered_state_fails(self):
        graph = two_bus_electric()
        state = solve_flow(graph, {}, FlowOptions())
        state.potentials["d"] = -0.2
        report = verify_state(graph, state, tol=1e-8)
        assert not report.passed

    def test_capacity_violation_reported(self):
        graph = assemble(
            [
                node("s", Carrier.HEAT, NodeRole.SLACK),
                node("d", Carrier.HEAT, NodeRole.DEMAND, 50.0),
            ],
            [GridEdge("e", Carrier.HEAT, "s", "d", capacity_kw=10.0)],
        )
        state = solve_flow(graph, {}, FlowOptions())
        report = verify_state(graph, state)
        assert report.capacity_violations == ["e"]
        assert report.passed is False


def random_connected_graph(rng, carrier):
    """Random small single-carrier network with a spanning tree plus chords."""
    n = int(rng.integers(3, 7))
    nodes = []
    for i in range(n):
        if i == 0:
            ref = float(rng.uniform(10.0, 40.0)) if carrier in (Carrier.GAS, Carrier.HYDROGEN) else None
            nodes.append(node("n0", carrier, NodeRole.SLACK, ref=ref))
        else:
            demand = float(rng.uniform(0.0, 5.0))
            nodes.append(node(f"n{i}", carrier, NodeRole.DEMAND, demand))
    edges = []
    def make_edge(eid, a, b):
        if carrier is Carrier.ELECTRICITY:
            return GridEdge(eid, carrier, a, b, susceptance_pu=float(rng.uniform(1.0, 20.0)))
        if carrier is Carrier.HEAT:
            return GridEdge(eid, carrier, a, b, capacity_kw=1000.0)
        return GridEdge(
            eid, carrier, a, b, flow_coefficient_kw_per_bar=float(rng.uniform(5.0, 30.0))
        )
    for i in range(1, n):
        parent = int(rng.integers(0, i))
        edges.append(make_edge(f"t{i}", f"n{parent}", f"n{i}"))
    if n > 3 and rng.random() < 0.6:
        a, b = rng.choice(n, size=2, replace=False)
        if abs(int(a) - int(b)) > 1:
            edges.append(make_edge("chord", f"n{int(a)}", f"n{int(b)}"))
    return assemble(nodes, edges)


class TestJacobian:
    def test_matches_central_differences(self):
        rng = np.random.default_rng(101)
        carriers = [Carrier.ELECTRICITY, Carrier.GAS, Carrier.HYDROGEN, Carrier.HEAT]
        checked = 0
        for trial in range(40):
            carrier = carriers[trial % 4]
            graph = random_connected_graph(rng, carrier)
            system = build_system(graph, {}, FlowOptions())
            x = system.initial_x()
            # test away from the flat start so pipe flows are in the smooth
            # square-root regime
            x = x + rng.uniform(0.05, 0.5, x.shape)
            analytic = system.jacobian(x)
            h = 1e-6
            fd = np.zeros_like(analytic)
            for k in range(len(x)):
                forward = x.copy(); forward[k] += h
                backward = x.copy(); backward[k] -= h
                fd[:, k] = (system.residual(forward) - system.residual(backward)) / (2 * h)
            scale = max(1.0, float(np.abs(analytic).max()))
            assert np.abs(analytic - fd).max() / scale < 1e-6
            checked += 1
        assert checked == 40

    def test_random_solves_verify(self):
        rng = np.random.default_rng(55)
        solved = 0
        for trial in range(30):
            carrier = [Carrier.ELECTRICITY, Carrier.GAS, Carrier.HEAT][trial % 3]
            graph = random_connected_graph(rng, carrier)
            try:
                state = solve_flow(graph, {}, FlowOptions())
            except NonConvergence:
                continue
            report = verify_state(graph, state, tol=1e-8)
            assert report.max_residual <= 1e-8
            solved += 1
        assert solved >= 25
