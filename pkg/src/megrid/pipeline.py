"""Pipeline stages behind the command line interface.

Each stage wraps one module: it pulls its parameters out of the config tree,
calls the module and writes the module's output files.  ``run_pipeline``
chains cadaster, cells, synthesis, flow and placement over one config,
bridging the synthesized street topology into a two-carrier (electricity plus
heat) network.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Mapping, Sequence

from . import adoption, cellarea, geometry, gridsynth, io
from .carriers import Carrier
from .cellarea import CellArea, FactorBasis, KeyFactor
from .errors import PlanningError
from .heatdemand import Building, Cadaster, build_cadaster
from .multigrid import (
    CouplingDevice,
    CouplingOutput,
    FlowOptions,
    FlowState,
    GridEdge,
    GridNode,
    MultiGraph,
    NodeRole,
    assemble,
    solve_flow,
)
from .plan import (
    CandidateSite,
    PlacementProblem,
    PlacementResult,
    Snapshot,
    StorageUnit,
    flex_dispatch,
    place_evolutionary,
    place_greedy,
)


class ConfigInvalid(PlanningError):
    """The config tree is missing something or a referenced file is unusable."""


def require(config: Mapping, key: str, context: str = "config"):
    if key not in config:
        raise ConfigInvalid(f"{context}: missing required key {key!r}")
    return config[key]


def resolve_path(base_dir: Path, value) -> Path:
    path = Path(str(value))
    if not path.is_absolute():
        path = base_dir / path
    if not path.exists():
        raise ConfigInvalid(f"input file not found: {path}")
    return path


def _flow_options(config: Mapping, method_override: str | None = None) -> FlowOptions:
    section = config.get("flow", {})
    try:
        return FlowOptions(
            method=method_override or section.get("method", "newton"),
            tol=float(section.get("tol", 1e-8)),
            max_iter=int(section.get("max_iter", 50)),
            base_kw=float(section.get("base_kw", 1000.0)),
        )
    except ValueError as exc:
        raise ConfigInvalid(f"flow options: {exc}") from exc


# ---------------------------------------------------------------------------
# geometry inputs, with optional geographic projection


def load_region(config: Mapping, base_dir: Path):
    """Read buildings, streets and geodata features, projecting if asked.

    With ``synth.crs`` set to ``lonlat`` all coordinates are treated as
    geographic and projected to local metres around the combined extent's
    centre before anything else sees them.
    """
    inputs = require(config, "inputs")
    buildings = io.read_buildings_geojson(resolve_path(base_dir, require(inputs, "buildings", "inputs")))
    streets = io.read_streets_geojson(resolve_path(base_dir, require(inputs, "streets", "inputs")))
    geodata_ref = inputs.get("geodata", inputs["buildings"])
    features = io.read_features_geojson(resolve_path(base_dir, geodata_ref))

    crs = config.get("synth", {}).get("crs", "planar")
    if crs == "planar":
        return buildings, streets, features
    if crs != "lonlat":
        raise ConfigInvalid(f"synth.crs must be 'planar' or 'lonlat', got {crs!r}")

    points = [p for b in buildings for p in b.footprint]
    points += [p for s in streets for p in s.points]
    if not points:
        return buildings, streets, features
    xmin, ymin, xmax, ymax = geometry.bounding_box(points)
    lon0 = 0.5 * (xmin + xmax)
    lat0 = 0.5 * (ymin + ymax)

    def project(point):
        return geometry.lonlat_to_local(point[0], point[1], lon0, lat0)

    buildings = [
        Building(b.id, tuple(project(p) for p in b.footprint), b.annual_heat_kwh, b.heating_tech)
        for b in buildings
    ]
    streets = [
        gridsynth.Street(s.id, tuple(project(p) for p in s.points)) for s in streets
    ]
    features = [
        cellarea.GeoFeature(
            f.id,
            project(f.geometry) if f.is_point() else tuple(project(p) for p in f.geometry),
            f.properties,
        )
        for f in features
    ]
    return buildings, streets, features


# ---------------------------------------------------------------------------
# stages


def run_cadaster(config: Mapping, base_dir: Path, out_dir: Path) -> Cadaster:
    inputs = require(config, "inputs")
    weather = io.read_weather_csv(resolve_path(base_dir, require(inputs, "weather", "inputs")))
    buildings, _, _ = load_region(config, base_dir)
    section = config.get("cadaster", {})
    cadaster = build_cadaster(
        buildings,
        weather,
        inner_temp_c=float(section.get("inner_temp_c", 20.0)),
        heating_limit_c=(
            float(section["heating_limit_c"]) if "heating_limit_c" in section else None
        ),
    )
    io.write_cadaster(cadaster, out_dir)
    io.write_json(
        [issue.building_id for issue in cadaster.issues], out_dir / "cadaster_issues.json"
    )
    return cadaster


def run_cells(config: Mapping, base_dir: Path, out_dir: Path) -> list[CellArea]:
    _, _, features = load_region(config, base_dir)
    if not features:
        raise ConfigInvalid("cells: geodata has no features")
    section = config.get("cells", {})
    cell_size = float(section.get("cell_size_m", 100.0))
    threshold = float(section.get("heat_grid_threshold_kwh_m2a", cellarea.HEAT_GRID_THRESHOLD_KWH_M2A))
    points = []
    for feature in features:
        if feature.is_point():
            points.append(feature.geometry)
        else:
            points.extend(feature.geometry)
    bbox = geometry.bounding_box(points)
    if bbox[2] <= bbox[0] or bbox[3] <= bbox[1]:
        raise ConfigInvalid("cells: geodata extent is degenerate")
    try:
        cells = cellarea.rasterize(bbox, cell_size)
    except cellarea.InvalidCellSize as exc:
        raise ConfigInvalid(f"cells: {exc}") from exc
    for cell in cells:
        factors = cellarea.compute_key_factors(cell, features)
        cell.key_factors.update(factors)
        heat_density = factors[cellarea.HEAT_DENSITY].value
        cell.annual_demand_kwh[Carrier.HEAT] = (heat_density or 0.0) * cell.area_m2
        feasible = cellarea.screen_heat_grid(cell, threshold)
        cell.key_factors["heat_grid_feasible"] = KeyFactor(
            "heat_grid_feasible", 1.0 if feasible else 0.0, "", FactorBasis.ABSOLUTE
        )
    io.write_cells_geojson(cells, out_dir / "cells.geojson")
    return cells


def run_synth(config: Mapping, base_dir: Path, out_dir: Path) -> gridsynth.SynthGraph:
    buildings, streets, _ = load_region(config, base_dir)
    epsilon = float(config.get("synth", {}).get("epsilon_m", gridsynth.DEFAULT_EPSILON_M))
    graph = gridsynth.synthesize(buildings, streets, epsilon)
    io.write_synth_geojson(graph, out_dir / "synth_nodes.geojson", out_dir / "synth_edges.geojson")
    io.write_json(
        {
            "nodes": len(graph.nodes),
            "edges": len(graph.edges),
            "components": graph.component_count(),
        },
        out_dir / "synth_summary.json",
    )
    return graph


def electrify(
    synth: gridsynth.SynthGraph,
    house_demands_kw: Mapping[str, tuple[float, float]],
    susceptance_km_pu: float,
    heat_capacity_kw: float,
    slack: str = "auto",
) -> MultiGraph:
    """Clone the synthesized topology into an electricity plus heat network.

    Every topology node appears once per carrier; street and service edges
    become lines and heat pipes.  ``house_demands_kw`` assigns each house node
    an (electric, heat) demand pair.  The slack sits at the first intersection
    node unless one is named explicitly.
    """
    if slack == "auto":
        slack_node = next(
            (n.id for n in synth.nodes if n.kind is gridsynth.NodeKind.INTERSECTION),
            next((n.id for n in synth.nodes if n.kind is not gridsynth.NodeKind.HOUSE), None),
        )
        if slack_node is None:
            raise ConfigInvalid("electrify: no network node available as slack")
    else:
        slack_node = slack
        if all(n.id != slack_node for n in synth.nodes):
            raise ConfigInvalid(f"electrify: unknown slack node {slack_node!r}")

    nodes = []
    for node in synth.nodes:
        electric, heat = house_demands_kw.get(node.id, (0.0, 0.0))
        if node.id == slack_node:
            role = NodeRole.SLACK
        elif electric > 0 or heat > 0:
            role = NodeRole.DEMAND
        else:
            role = NodeRole.JUNCTION
        nodes.append(GridNode(f"el_{node.id}", Carrier.ELECTRICITY, role, electric))
        nodes.append(GridNode(f"ht_{node.id}", Carrier.HEAT, role, heat))
    edges = []
    for edge in synth.edges:
        length_km = max(edge.length_m / 1000.0, 1e-3)
        edges.append(
            GridEdge(
                f"el_{edge.id}",
                Carrier.ELECTRICITY,
                f"el_{edge.source}",
                f"el_{edge.target}",
                susceptance_pu=susceptance_km_pu / length_km,
            )
        )
        edges.append(
            GridEdge(
                f"ht_{edge.id}",
                Carrier.HEAT,
                f"ht_{edge.source}",
                f"ht_{edge.target}",
                capacity_kw=heat_capacity_kw,
            )
        )
    return assemble(nodes, edges)


def _house_demands(
    cadaster: Cadaster, heat_pump_share: float, cop: float
) -> dict[str, tuple[float, float]]:
    """Split each building's peak heat load into electric and heat-grid parts."""
    if not 0.0 <= heat_pump_share <= 1.0:
        raise ConfigInvalid("electrify: heat_pump_share must be in [0, 1]")
    if cop <= 0:
        raise ConfigInvalid("electrify: cop must be > 0")
    demands = {}
    for building_id, entry in cadaster.entries.items():
        peak = entry.daily.peak_kw()
        demands[f"h_{building_id}"] = (
            peak * heat_pump_share / cop,
            peak * (1.0 - heat_pump_share),
        )
    return demands


def build_network(
    config: Mapping, cadaster: Cadaster, synth: gridsynth.SynthGraph
) -> MultiGraph:
    section = config.get("electrify", {})
    demands = _house_demands(
        cadaster,
        float(section.get("heat_pump_share", 0.0)),
        float(section.get("cop", 3.0)),
    )
    return electrify(
        synth,
        demands,
        susceptance_km_pu=float(section.get("susceptance_km_pu", 5.0)),
        heat_capacity_kw=float(section.get("heat_capacity_kw", 500.0)),
        slack=section.get("slack", "auto"),
    )


def run_flow(
    config: Mapping,
    base_dir: Path,
    out_dir: Path,
    graph: MultiGraph | None = None,
    method_override: str | None = None,
) -> FlowState:
    section = config.get("flow", {})
    if graph is None:
        graph_ref = require(section, "graph", "flow")
        graph = io.read_graph_json(resolve_path(base_dir, graph_ref))
        io.write_graph_json(graph, out_dir / "multigrid.json")
    options = _flow_options(config, method_override)
    setpoints = {str(k): float(v) for k, v in section.get("setpoints", {}).items()}
    state = solve_flow(graph, setpoints, options)
    io.write_flow_state(graph, state, out_dir)
    io.write_json(
        {
            "iterations": state.iterations,
            "max_residual": state.max_residual,
            "method": state.method,
            "slack_injection_kw": {
                str(carrier): injection
                for carrier, injection in state.slack_injection_kw.items()
            },
        },
        out_dir / "flow_summary.json",
    )
    return state


def _candidates_from_config(section: Sequence[Mapping]) -> list[CandidateSite]:
    candidates = []
    for entry in section:
        building = require(entry, "building", "place.candidates")
        cop = float(entry.get("cop", 3.0))
        capacity = float(require(entry, "capacity_kw", "place.candidates"))
        device = CouplingDevice(
            id=str(require(entry, "id", "place.candidates")),
            input_node=f"el_h_{building}",
            input_carrier=Carrier.ELECTRICITY,
            outputs=(CouplingOutput(f"ht_h_{building}", Carrier.HEAT, cop),),
            capacity_kw=capacity,
        )
        candidates.append(
            CandidateSite(
                id=device.id,
                device=device,
                setpoint_kw=float(entry.get("setpoint_kw", capacity)),
                build_cost=float(require(entry, "cost", "place.candidates")),
            )
        )
    return candidates


def run_place(
    config: Mapping,
    base_dir: Path,
    out_dir: Path,
    graph: MultiGraph | None = None,
    seed: int | None = None,
) -> PlacementResult:
    from .plan import problem_from_dict

    section = require(config, "place")
    if graph is None:
        problem_ref = require(section, "problem", "place")
        problem = problem_from_dict(io.read_json(resolve_path(base_dir, problem_ref)))
    else:
        weights = {str(k): float(v) for k, v in require(section, "weights", "place").items()}
        snapshots = [
            Snapshot(
                str(entry.get("id", f"s{i}")),
                {
                    node_id: node.demand_kw * float(entry.get("scale", 1.0))
                    for node_id, node in graph.nodes.items()
                    if node.demand_kw > 0
                },
            )
            for i, entry in enumerate(section.get("snapshots", [{"id": "base", "scale": 1.0}]))
        ]
        try:
            problem = PlacementProblem(
                graph=graph,
                candidates=_candidates_from_config(section.get("candidates", [])),
                budget=float(require(section, "budget", "place")),
                weights=weights,
                snapshots=snapshots,
                options=_flow_options(config),
            )
        except (ValueError, PlanningError) as exc:
            if isinstance(exc, ConfigInvalid):
                raise
            raise ConfigInvalid(f"place: {exc}") from exc
    method = section.get("method", "greedy")
    if method == "greedy":
        result = place_greedy(problem)
    elif method in ("ga", "evolutionary"):
        result = place_evolutionary(
            problem,
            population_size=int(section.get("population", 16)),
            generations=int(section.get("generations", 40)),
            seed=seed if seed is not None else int(config.get("seed", 0)),
        )
    else:
        raise ConfigInvalid(f"place.method must be 'greedy' or 'ga', got {method!r}")
    io.write_placement_result(result, out_dir)
    return result


def run_forecast(config: Mapping, base_dir: Path, out_dir: Path, seed: int | None = None):
    section = require(config, "forecast")
    scenario_ref = require(section, "scenario", "forecast")
    tree = io.read_json(resolve_path(base_dir, scenario_ref))
    if seed is not None:
        tree["seed"] = seed
    try:
        scenario = adoption.scenario_from_dict(tree)
    except (KeyError, ValueError) as exc:
        raise ConfigInvalid(f"forecast scenario: {exc}") from exc
    result = adoption.run(scenario)
    io.write_share_path_csv(result.path, out_dir / "shares.csv")
    io.write_switch_log_csv(result, out_dir / "switches.csv")

    mc_section = section.get("monte_carlo")
    if mc_section:
        parameters = tuple(
            adoption.ScenarioParameter(
                str(require(p, "name", "monte_carlo.parameters")),
                str(require(p, "path", "monte_carlo.parameters")),
                require(p, "dist", "monte_carlo.parameters"),
            )
            for p in require(mc_section, "parameters", "forecast.monte_carlo")
        )
        target_section = require(mc_section, "target", "forecast.monte_carlo")
        target = adoption.share_target(
            str(require(target_section, "tech", "monte_carlo.target")),
            int(target_section.get("year", scenario.end_year)),
            float(require(target_section, "min_share", "monte_carlo.target")),
        )
        accepted = adoption.monte_carlo(
            adoption.ScenarioSpace(tree, parameters),
            target,
            n_runs=int(mc_section.get("n_runs", 20)),
            seed=seed if seed is not None else int(mc_section.get("seed", config.get("seed", 0))),
        )
        io.write_json(
            [
                {
                    "params": run.params,
                    "final_shares": {
                        tech: run.path.final_share(tech) for tech in run.path.technologies
                    },
                }
                for run in accepted
            ],
            out_dir / "mc_accepted.json",
        )
    return result


def run_flex(config: Mapping, base_dir: Path, out_dir: Path):
    section = require(config, "flex")
    profile = io.read_series_csv(resolve_path(base_dir, require(section, "profile", "flex")))
    storage_section = require(section, "storage", "flex")
    try:
        storage = StorageUnit(
            carrier=Carrier(storage_section.get("carrier", "electricity")),
            capacity_kwh=float(require(storage_section, "capacity_kwh", "flex.storage")),
            power_limit_kw=float(require(storage_section, "power_limit_kw", "flex.storage")),
            round_trip_efficiency=float(storage_section.get("round_trip_efficiency", 1.0)),
            initial_soc_kwh=float(storage_section.get("initial_soc_kwh", 0.0)),
        )
    except ValueError as exc:
        raise ConfigInvalid(f"flex.storage: {exc}") from exc
    result = flex_dispatch(profile, storage, float(section.get("step_hours", 1.0)))
    rows = [
        (t, repr(result.charge_kw[t]), repr(result.discharge_kw[t]),
         repr(result.net_kw[t]), repr(result.soc_kwh[t]))
        for t in range(len(profile))
    ]
    io._write_csv(
        out_dir / "flex_dispatch.csv",
        ("timestep", "charge_kw", "discharge_kw", "net_kw", "soc_kwh"),
        rows,
    )
    io.write_json(
        {
            "peak_before_kw": result.peak_before_kw,
            "peak_after_kw": result.peak_after_kw,
            "target_level_kw": result.target_level_kw,
        },
        out_dir / "flex_summary.json",
    )
    return result


def run_pipeline(
    config: Mapping,
    base_dir: Path,
    out_dir: Path,
    seed: int | None = None,
    method_override: str | None = None,
):
    """Chain cadaster, cells, synthesis, flow and placement over one config."""
    cadaster = run_cadaster(config, base_dir, out_dir)
    run_cells(config, base_dir, out_dir)
    synth = run_synth(config, base_dir, out_dir)
    graph = build_network(config, cadaster, synth)
    io.write_graph_json(graph, out_dir / "multigrid.json")
    run_flow(config, base_dir, out_dir, graph=graph, method_override=method_override)
    if "place" in config:
        run_place(config, base_dir, out_dir, graph=graph, seed=seed)
