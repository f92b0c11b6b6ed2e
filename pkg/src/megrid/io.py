"""File formats of the command line layer.

Core modules work on in-memory objects only; every reader and writer lives
here.  Writers emit deterministic bytes (sorted JSON keys, fixed column
orders, ``\\n`` newlines) so repeated runs of a pipeline compare equal.
"""

from __future__ import annotations

import csv
import json
from datetime import date as Date
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .adoption import RunResult, SharePath
from .carriers import CARRIER_ORDER, Carrier
from .cellarea import CellArea, GeoFeature, KeyFactor, LoadProfile
from .gridsynth import Street, SynthGraph
from .heatdemand import Building, Cadaster, WeatherSeries
from .multigrid import FlowState, MultiGraph, graph_from_dict, graph_to_dict
from .plan import PlacementResult


def read_json(path: Path):
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def write_json(tree, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(tree, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# weather and cadaster


def read_weather_csv(path: Path) -> WeatherSeries:
    """Weather from ``date,temp_c`` rows with ISO dates."""
    days = []
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or set(("date", "temp_c")) - set(reader.fieldnames):
            raise ValueError(f"{path}: expected columns date,temp_c")
        for row in reader:
            days.append((Date.fromisoformat(row["date"]), float(row["temp_c"])))
    return WeatherSeries(tuple(days))


def write_cadaster(cadaster: Cadaster, out_dir: Path) -> tuple[Path, Path]:
    """Daily series as CSV plus a JSON sidecar with the fitted models."""
    csv_path = out_dir / "cadaster.csv"
    rows = []
    for building_id in sorted(cadaster.entries):
        entry = cadaster.entries[building_id]
        for (day, _), value in zip(entry.daily.weather.days, entry.daily.values_kwh):
            rows.append((building_id, day.isoformat(), repr(value)))
    _write_csv(csv_path, ("building_id", "date", "q_d_kwh"), rows)
    sidecar_path = out_dir / "cadaster_models.json"
    sidecar = {
        building_id: {
            "c_kw_per_k": entry.model.loss_kw_per_k,
            "t_i_c": entry.model.inner_temp_c,
        }
        for building_id, entry in cadaster.entries.items()
    }
    write_json(sidecar, sidecar_path)
    return csv_path, sidecar_path


# ---------------------------------------------------------------------------
# GeoJSON


def _rings_from_geojson(coordinates) -> tuple:
    outer = coordinates[0]
    ring = [(float(x), float(y)) for x, y in outer]
    if len(ring) > 1 and ring[0] == ring[-1]:
        ring = ring[:-1]  # GeoJSON closes rings; internal polygons do not
    return tuple(ring)


def read_features_geojson(path: Path) -> list[GeoFeature]:
    """Point and Polygon features with their properties."""
    tree = read_json(path)
    features = []
    for i, feature in enumerate(tree.get("features", [])):
        geometry = feature.get("geometry", {})
        kind = geometry.get("type")
        properties = feature.get("properties", {}) or {}
        feature_id = str(properties.get("id", feature.get("id", f"feature{i}")))
        if kind == "Point":
            x, y = geometry["coordinates"]
            features.append(GeoFeature(feature_id, (float(x), float(y)), properties))
        elif kind == "Polygon":
            features.append(
                GeoFeature(feature_id, _rings_from_geojson(geometry["coordinates"]), properties)
            )
        else:
            raise ValueError(f"{path}: unsupported geometry type {kind!r}")
    return features


def read_buildings_geojson(path: Path) -> list[Building]:
    """Buildings from Polygon features with demand and technology properties."""
    buildings = []
    for feature in read_features_geojson(path):
        if feature.is_point():
            raise ValueError(f"{path}: building {feature.id} must be a Polygon")
        properties = feature.properties
        buildings.append(
            Building(
                id=feature.id,
                footprint=feature.geometry,
                annual_heat_kwh=float(properties.get("annual_heat_kwh", 0.0)),
                heating_tech=str(properties.get("heating_tech", "unknown")),
            )
        )
    return buildings


def read_streets_geojson(path: Path) -> list[Street]:
    """Streets from LineString features."""
    tree = read_json(path)
    streets = []
    for i, feature in enumerate(tree.get("features", [])):
        geometry = feature.get("geometry", {})
        if geometry.get("type") != "LineString":
            raise ValueError(f"{path}: streets must be LineString features")
        properties = feature.get("properties", {}) or {}
        street_id = str(properties.get("id", feature.get("id", f"street{i}")))
        points = tuple((float(x), float(y)) for x, y in geometry["coordinates"])
        streets.append(Street(street_id, points))
    return streets


def _polygon_to_geojson(polygon) -> dict:
    ring = [[x, y] for x, y in polygon]
    ring.append(ring[0])
    return {"type": "Polygon", "coordinates": [ring]}


def write_cells_geojson(cells: Sequence[CellArea], path: Path) -> None:
    """Cells with key factors (and their definedness) as feature properties."""
    features = []
    for cell in cells:
        properties: dict[str, object] = {"id": cell.id, "design": str(cell.design)}
        for name in sorted(cell.key_factors):
            factor = cell.key_factors[name]
            properties[name] = factor.value
            properties[f"{name}__basis"] = str(factor.basis)
        for carrier in CARRIER_ORDER:
            if carrier in cell.annual_demand_kwh:
                properties[f"annual_{carrier}_kwh"] = cell.annual_demand_kwh[carrier]
        features.append(
            {
                "type": "Feature",
                "geometry": _polygon_to_geojson(cell.polygon),
                "properties": properties,
            }
        )
    write_json({"type": "FeatureCollection", "features": features}, path)


def write_synth_geojson(graph: SynthGraph, nodes_path: Path, edges_path: Path) -> None:
    """Nodes as Points with a kind, edges as LineStrings with kind and length."""
    positions = {node.id: node.position for node in graph.nodes}
    node_features = [
        {
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [node.position[0], node.position[1]]},
            "properties": {"id": node.id, "kind": str(node.kind)},
        }
        for node in graph.nodes
    ]
    edge_features = [
        {
            "type": "Feature",
            "geometry": {
                "type": "LineString",
                "coordinates": [
                    [positions[edge.source][0], positions[edge.source][1]],
                    [positions[edge.target][0], positions[edge.target][1]],
                ],
            },
            "properties": {
                "id": edge.id,
                "kind": str(edge.kind),
                "length_m": edge.length_m,
                "source": edge.source,
                "target": edge.target,
            },
        }
        for edge in graph.edges
    ]
    write_json({"type": "FeatureCollection", "features": node_features}, nodes_path)
    write_json({"type": "FeatureCollection", "features": edge_features}, edges_path)


# ---------------------------------------------------------------------------
# profiles, forecasts


def read_profile_csv(path: Path, step_hours: float = 1.0) -> LoadProfile:
    """Profile weights from ``timestep,weight`` rows."""
    weights = []
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or set(("timestep", "weight")) - set(reader.fieldnames):
            raise ValueError(f"{path}: expected columns timestep,weight")
        for row in reader:
            weights.append(float(row["weight"]))
    return LoadProfile(tuple(weights), step_hours)


def read_series_csv(path: Path) -> tuple[float, ...]:
    """A raw power series from ``timestep,power_kw`` rows."""
    values = []
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or set(("timestep", "power_kw")) - set(reader.fieldnames):
            raise ValueError(f"{path}: expected columns timestep,power_kw")
        for row in reader:
            values.append(float(row["power_kw"]))
    return tuple(values)


def write_share_path_csv(path_obj: SharePath, path: Path) -> None:
    rows = [
        (year, tech, repr(path_obj.shares[i][j]))
        for i, year in enumerate(path_obj.years)
        for j, tech in enumerate(path_obj.technologies)
    ]
    _write_csv(path, ("year", "tech", "share"), rows)


def write_switch_log_csv(result: RunResult, path: Path) -> None:
    rows = [
        (year, switch.agent_id, switch.from_tech, switch.to_tech)
        for year, switch in result.switches
    ]
    _write_csv(path, ("year", "agent_id", "from", "to"), rows)


# ---------------------------------------------------------------------------
# networks and flow states


def read_graph_json(path: Path) -> MultiGraph:
    return graph_from_dict(read_json(path))


def write_graph_json(graph: MultiGraph, path: Path) -> None:
    write_json(graph_to_dict(graph), path)


def write_flow_state(graph: MultiGraph, state: FlowState, out_dir: Path) -> list[Path]:
    """Per-carrier node and edge CSVs of a solved state."""
    written = []
    for carrier in CARRIER_ORDER:
        nodes = [n for n in graph.nodes.values() if n.carrier is carrier]
        if not nodes:
            continue
        node_path = out_dir / f"flow_{carrier}_nodes.csv"
        _write_csv(
            node_path,
            ("node_id", "potential"),
            [(n.id, repr(state.potentials[n.id])) for n in nodes],
        )
        written.append(node_path)
        edges = [e for e in graph.edges.values() if e.carrier is carrier]
        edge_path = out_dir / f"flow_{carrier}_edges.csv"
        _write_csv(
            edge_path,
            ("edge_id", "flow_kw"),
            [(e.id, repr(state.edge_flows_kw[e.id])) for e in edges],
        )
        written.append(edge_path)
    return written


def write_placement_result(result: PlacementResult, out_dir: Path) -> tuple[Path, Path]:
    """Selection as JSON plus the objective trace as CSV."""
    json_path = out_dir / "place_result.json"
    write_json(
        {
            "selected": sorted(result.selected),
            "score": result.score,
            "spent": result.spent,
            "evaluations": result.evaluations,
        },
        json_path,
    )
    trace_path = out_dir / "place_trace.csv"
    _write_csv(
        trace_path,
        ("step", "score"),
        [(i, repr(score)) for i, score in enumerate(result.trace)],
    )
    return json_path, trace_path
