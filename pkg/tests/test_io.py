import csv
import datetime
import json

import pytest

from megrid.adoption import run as run_adoption
from megrid.adoption import scenario_from_dict
from megrid.carriers import Carrier
from megrid.cellarea import CellDesign, FactorBasis, KeyFactor, rasterize
from megrid.gridsynth import synthesize
from megrid.heatdemand import build_cadaster
from megrid.io import (
    read_buildings_geojson,
    read_features_geojson,
    read_graph_json,
    read_profile_csv,
    read_series_csv,
    read_streets_geojson,
    read_weather_csv,
    write_cadaster,
    write_cells_geojson,
    write_flow_state,
    write_graph_json,
    write_json,
    write_placement_result,
    write_share_path_csv,
    write_switch_log_csv,
    write_synth_geojson,
)
from megrid.multigrid import FlowOptions, graph_to_dict, solve_flow
from megrid.plan import PlacementResult

from conftest import (
    DATA_DIR,
    base_adoption_scenario,
    manhattan_buildings,
    manhattan_streets,
    tri_carrier_graph,
    two_bus_electric,
)


class TestJsonWriter:
    def test_golden_bytes(self, tmp_path):
        path = tmp_path / "out.json"
        write_json({"b": 1, "a": [1.5, "x"]}, path)
        expected = b'{\n  "a": [\n    1.5,\n    "x"\n  ],\n  "b": 1\n}\n'
        assert path.read_bytes() == expected

    def test_repeat_writes_identical(self, tmp_path):
        tree = {"z": [3, 2, 1], "a": {"nested": True}}
        first = tmp_path / "a.json"
        second = tmp_path / "b.json"
        write_json(tree, first)
        write_json(tree, second)
        assert first.read_bytes() == second.read_bytes()


class TestWeather:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "weather.csv"
        path.write_text("date,temp_c\n2023-01-01,-2.5\n2023-01-02,0.0\n")
        weather = read_weather_csv(path)
        assert weather.days == (
            (datetime.date(2023, 1, 1), -2.5),
            (datetime.date(2023, 1, 2), 0.0),
        )

    def test_missing_column(self, tmp_path):
        path = tmp_path / "weather.csv"
        path.write_text("date,temperature\n2023-01-01,1\n")
        with pytest.raises(ValueError):
            read_weather_csv(path)

    def test_fixture_loads(self):
        weather = read_weather_csv(DATA_DIR / "weather.csv")
        assert len(weather.days) == 365


class TestCadasterWriter:
    def test_files_and_exact_floats(self, tmp_path):
        weather = read_weather_csv(DATA_DIR / "weather.csv")
        buildings = read_buildings_geojson(DATA_DIR / "buildings.geojson")
        cadaster = build_cadaster(buildings, weather)
        csv_path, sidecar_path = write_cadaster(cadaster, tmp_path)
        with open(csv_path, newline="") as handle:
            rows = list(csv.DictReader(handle))
        assert len(rows) == len(buildings) * 365
        # repr-encoded floats survive the text round trip bit for bit
        by_building: dict[str, float] = {}
        for row in rows:
            by_building.setdefault(row["building_id"], 0.0)
            by_building[row["building_id"]] += float(row["q_d_kwh"])
        for building in buildings:
            assert by_building[building.id] == pytest.approx(
                building.annual_heat_kwh, rel=1e-9
            )
        sidecar = json.loads(sidecar_path.read_text())
        assert set(sidecar) == {b.id for b in buildings}
        for entry in sidecar.values():
            assert entry["t_i_c"] == 20.0
            assert entry["c_kw_per_k"] > 0


class TestGeoJson:
    def test_point_and_polygon(self, tmp_path):
        path = tmp_path / "features.json"
        tree = {
            "type": "FeatureCollection",
            "features": [
                {
                    "type": "Feature",
                    "geometry": {"type": "Point", "coordinates": [1.0, 2.0]},
                    "properties": {"id": "p1", "kind": "poi"},
                },
                {
                    "type": "Feature",
                    "geometry": {
                        "type": "Polygon",
                        "coordinates": [[[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]]],
                    },
                    "properties": {"id": "a1"},
                },
            ],
        }
        path.write_text(json.dumps(tree))
        features = read_features_geojson(path)
        assert features[0].id == "p1"
        assert features[0].geometry == (1.0, 2.0)
        assert features[0].is_point()
        # the closing vertex is dropped internally
        assert features[1].geometry == ((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0))

    def test_unsupported_geometry(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(
            json.dumps(
                {
                    "features": [
                        {"geometry": {"type": "MultiPolygon", "coordinates": []}}
                    ]
                }
            )
        )
        with pytest.raises(ValueError):
            read_features_geojson(path)

    def test_buildings_fixture(self):
        buildings = read_buildings_geojson(DATA_DIR / "buildings.geojson")
        assert [b.id for b in buildings] == ["b1", "b2", "b3", "b4"]
        assert buildings[0].annual_heat_kwh == 20000.0
        assert buildings[3].heating_tech == "heat_pump"

    def test_point_building_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(
            json.dumps(
                {
                    "features": [
                        {
                            "geometry": {"type": "Point", "coordinates": [0, 0]},
                            "properties": {"id": "b"},
                        }
                    ]
                }
            )
        )
        with pytest.raises(ValueError):
            read_buildings_geojson(path)

    def test_streets_fixture(self):
        streets = read_streets_geojson(DATA_DIR / "streets.geojson")
        assert len(streets) == 6
        assert all(len(s.points) >= 2 for s in streets)

    def test_streets_reject_polygons(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(
            json.dumps(
                {
                    "features": [
                        {"geometry": {"type": "Polygon", "coordinates": [[[0, 0]]]}}
                    ]
                }
            )
        )
        with pytest.raises(ValueError):
            read_streets_geojson(path)


class TestCellsWriter:
    def test_properties_and_ring_closure(self, tmp_path):
        cells = rasterize((0.0, 0.0, 200.0, 200.0), 100.0)
        cells[0].key_factors["car_density"] = KeyFactor(
            "car_density", 0.5, "cars/inhabitant", FactorBasis.PER_INHABITANT
        )
        cells[1].key_factors["car_density"] = KeyFactor(
            "car_density", None, "cars/inhabitant", FactorBasis.PER_INHABITANT
        )
        cells[0].annual_demand_kwh[Carrier.HEAT] = 1234.5
        path = tmp_path / "cells.geojson"
        write_cells_geojson(cells, path)
        tree = json.loads(path.read_text())
        assert len(tree["features"]) == 4
        first = tree["features"][0]
        assert first["properties"]["car_density"] == 0.5
        assert first["properties"]["car_density__basis"] == "per-inhabitant"
        assert first["properties"]["annual_heat_kwh"] == 1234.5
        assert tree["features"][1]["properties"]["car_density"] is None
        ring = first["geometry"]["coordinates"][0]
        assert ring[0] == ring[-1]
        assert str(cells[0].design) == str(CellDesign.RASTER)


class TestSynthWriter:
    def test_counts_and_determinism(self, tmp_path):
        graph = synthesize(manhattan_buildings(), manhattan_streets())
        nodes_a = tmp_path / "nodes_a.json"
        edges_a = tmp_path / "edges_a.json"
        nodes_b = tmp_path / "nodes_b.json"
        edges_b = tmp_path / "edges_b.json"
        write_synth_geojson(graph, nodes_a, edges_a)
        write_synth_geojson(graph, nodes_b, edges_b)
        assert nodes_a.read_bytes() == nodes_b.read_bytes()
        assert edges_a.read_bytes() == edges_b.read_bytes()
        tree = json.loads(nodes_a.read_text())
        assert len(tree["features"]) == len(graph.nodes)
        edge_tree = json.loads(edges_a.read_text())
        properties = edge_tree["features"][0]["properties"]
        assert set(properties) == {"id", "kind", "length_m", "source", "target"}


class TestProfiles:
    def test_weight_profile(self, tmp_path):
        path = tmp_path / "profile.csv"
        path.write_text("timestep,weight\n0,0.75\n1,0.25\n")
        profile = read_profile_csv(path, step_hours=0.5)
        assert profile.weights == (0.75, 0.25)
        assert profile.step_hours == 0.5

    def test_weight_profile_header_checked(self, tmp_path):
        path = tmp_path / "profile.csv"
        path.write_text("t,w\n0,1\n")
        with pytest.raises(ValueError):
            read_profile_csv(path)

    def test_series_fixture(self):
        series = read_series_csv(DATA_DIR / "profile.csv")
        assert series == (4.0, 5.0, 7.0, 10.0, 8.0, 6.0, 5.0, 4.0)


class TestForecastWriters:
    def test_share_and_switch_files(self, tmp_path):
        scenario = scenario_from_dict(base_adoption_scenario())
        result = run_adoption(scenario)
        shares_path = tmp_path / "shares.csv"
        switches_path = tmp_path / "switches.csv"
        write_share_path_csv(result.path, shares_path)
        write_switch_log_csv(result, switches_path)
        with open(shares_path, newline="") as handle:
            rows = list(csv.DictReader(handle))
        techs = result.path.technologies
        assert len(rows) == len(result.path.years) * len(techs)
        by_year: dict[str, float] = {}
        for row in rows:
            by_year.setdefault(row["year"], 0.0)
            by_year[row["year"]] += float(row["share"])
        for total in by_year.values():
            assert total == pytest.approx(1.0, abs=1e-9)
        with open(switches_path, newline="") as handle:
            reader = csv.reader(handle)
            header = next(reader)
            assert header == ["year", "agent_id", "from", "to"]
            assert sum(1 for _ in reader) == len(result.switches)


class TestGraphFiles:
    def test_round_trip(self, tmp_path):
        graph = tri_carrier_graph()
        path = tmp_path / "grid.json"
        write_graph_json(graph, path)
        again = read_graph_json(path)
        assert graph_to_dict(again) == graph_to_dict(graph)

    def test_fixture_file_matches_writer(self, tmp_path):
        # the checked-in network fixture is exactly what the writer would emit
        path = tmp_path / "grid.json"
        write_graph_json(tri_carrier_graph(), path)
        assert path.read_bytes() == (DATA_DIR / "grid.json").read_bytes()


class TestFlowStateWriter:
    def test_exact_value_round_trip(self, tmp_path):
        graph = two_bus_electric()
        state = solve_flow(graph, {}, FlowOptions())
        written = write_flow_state(graph, state, tmp_path)
        assert [p.name for p in written] == [
            "flow_electricity_nodes.csv",
            "flow_electricity_edges.csv",
        ]
        with open(written[0], newline="") as handle:
            rows = {r["node_id"]: r["potential"] for r in csv.DictReader(handle)}
        for node_id, text in rows.items():
            assert float(text) == state.potentials[node_id]  # bit exact via repr


class TestPlacementWriter:
    def test_files(self, tmp_path):
        result = PlacementResult(
            selected=["c2", "c1"], score=0.5, trace=[1.0, 0.7, 0.5], spent=2000.0,
            evaluations=7,
        )
        json_path, trace_path = write_placement_result(result, tmp_path)
        tree = json.loads(json_path.read_text())
        assert tree == {
            "selected": ["c1", "c2"],
            "score": 0.5,
            "spent": 2000.0,
            "evaluations": 7,
        }
        with open(trace_path, newline="") as handle:
            rows = list(csv.reader(handle))
        assert rows[0] == ["step", "score"]
        assert [float(r[1]) for r in rows[1:]] == [1.0, 0.7, 0.5]
