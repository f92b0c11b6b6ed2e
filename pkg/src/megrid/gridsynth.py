"""Synthetic grid topologies from buildings and streets.

Buildings are collapsed to nodes at their footprint centroid, connected by a
service edge to the nearest point on the street network, and the streets
themselves become a graph with nodes at polyline vertices and mutual
intersection points.  The result is a topology only; electrical or hydraulic
parameters are attached downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .errors import PlanningError
from . import geometry
from .geometry import Point
from .heatdemand import Building

#: Default merge radius for near-coincident network nodes, in metres.
DEFAULT_EPSILON_M = 0.1


class DegenerateFootprint(PlanningError):
    """A building footprint encloses no area, so it has no centroid."""


class NoStreets(PlanningError):
    """Buildings cannot be connected without any street."""


class NodeKind(str, Enum):
    HOUSE = "house"
    CONNECTION = "connection"
    STREET = "street"
    INTERSECTION = "intersection"

    def __str__(self) -> str:
        return self.value


class EdgeKind(str, Enum):
    SERVICE = "service"
    STREET = "street"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Street:
    """A named street polyline with at least one segment."""

    id: str
    points: tuple[Point, ...]

    def __post_init__(self):
        if len(self.points) < 2:
            raise ValueError(f"street {self.id}: needs at least two points")
        for a, b in zip(self.points, self.points[1:]):
            if geometry.distance(a, b) == 0.0:
                raise ValueError(f"street {self.id}: zero-length segment at {a}")

    @property
    def segments(self) -> tuple[tuple[Point, Point], ...]:
        return tuple(zip(self.points, self.points[1:]))


@dataclass(frozen=True)
class Node:
    id: str
    position: Point
    kind: NodeKind


@dataclass(frozen=True)
class Edge:
    id: str
    source: str
    target: str
    kind: EdgeKind
    length_m: float


@dataclass
class SynthGraph:
    """Synthesized topology with deterministic node and edge ordering."""

    nodes: list[Node] = field(default_factory=list)
    edges: list[Edge] = field(default_factory=list)
    epsilon_m: float = DEFAULT_EPSILON_M

    def node_by_id(self, node_id: str) -> Node:
        for node in self.nodes:
            if node.id == node_id:
                return node
        raise KeyError(node_id)

    def component_count(self) -> int:
        index = {node.id: i for i, node in enumerate(self.nodes)}
        adjacency: list[list[int]] = [[] for _ in self.nodes]
        for edge in self.edges:
            a, b = index[edge.source], index[edge.target]
            adjacency[a].append(b)
            adjacency[b].append(a)
        seen = [False] * len(self.nodes)
        components = 0
        for start in range(len(self.nodes)):
            if seen[start]:
                continue
            components += 1
            stack = [start]
            seen[start] = True
            while stack:
                current = stack.pop()
                for neighbour in adjacency[current]:
                    if not seen[neighbour]:
                        seen[neighbour] = True
                        stack.append(neighbour)
        return components


def building_nodes(buildings: Iterable[Building]) -> list[Node]:
    """House nodes at the area-weighted footprint centroid.

    A footprint without enclosed area has no meaningful centroid and raises
    :class:`DegenerateFootprint` naming the building.
    """
    nodes = []
    for building in buildings:
        if geometry.polygon_area(building.footprint) <= 1e-9:
            raise DegenerateFootprint(
                f"building {building.id}: footprint has no area"
            )
        centroid = geometry.polygon_centroid(building.footprint)
        nodes.append(Node(f"h_{building.id}", centroid, NodeKind.HOUSE))
    return nodes


def _nearest_on_streets(
    point: Point, streets: Sequence[Street]
) -> tuple[float, str, int, float, Point]:
    """Closest point over all street segments.

    Returns ``(distance, street_id, segment_index, t, foot)``.  Exact distance
    ties fall to the lowest street id, then the lowest segment index, which the
    tuple ordering encodes directly.
    """
    best = None
    for street in streets:
        for seg_index, (a, b) in enumerate(street.segments):
            foot, t, dist = geometry.project_to_segment(point, a, b)
            key = (dist, street.id, seg_index)
            if best is None or key < best[0]:
                best = (key, t, foot)
    dist, street_id, seg_index = best[0]
    return dist, street_id, seg_index, best[1], best[2]


def connection_point(house: Node, streets: Sequence[Street]) -> tuple[Node, Edge]:
    """Connection node and service edge for a single house.

    The connection sits at the nearest point of the street network; a house
    exactly on a street yields a zero-length service edge.
    """
    if not streets:
        raise NoStreets(f"cannot connect {house.id} without streets")
    _validate_streets(streets)
    dist, _, _, _, foot = _nearest_on_streets(house.position, streets)
    connection = Node(f"c_{house.id}", foot, NodeKind.CONNECTION)
    service = Edge(f"v_{house.id}", house.id, connection.id, EdgeKind.SERVICE, dist)
    return connection, service


class _NodeRegistry:
    """Deduplicates network-side nodes within the merge radius.

    House nodes never pass through here; only street vertices, intersection
    points and connection feet do.  A new representative is only created when
    it is farther than epsilon from every existing one, so final positions are
    pairwise more than epsilon apart.
    """

    def __init__(self, epsilon: float):
        self.epsilon = epsilon
        self.positions: list[Point] = []
        self.street_ids: list[set[str]] = []
        self.is_connection: list[bool] = []

    def get_or_create(
        self, position: Point, street_id: str | None = None, connection: bool = False
    ) -> int:
        for i, existing in enumerate(self.positions):
            if geometry.distance(existing, position) <= self.epsilon:
                if street_id is not None:
                    self.street_ids[i].add(street_id)
                self.is_connection[i] = self.is_connection[i] or connection
                return i
        self.positions.append(position)
        self.street_ids.append(set() if street_id is None else {street_id})
        self.is_connection.append(connection)
        return len(self.positions) - 1

    def kind(self, i: int) -> NodeKind:
        if len(self.street_ids[i]) >= 2:
            return NodeKind.INTERSECTION
        if self.is_connection[i]:
            return NodeKind.CONNECTION
        return NodeKind.STREET


def _validate_streets(streets: Sequence[Street]) -> None:
    seen = set()
    for street in streets:
        if street.id in seen:
            raise ValueError(f"duplicate street id {street.id!r}")
        seen.add(street.id)


def synthesize(
    buildings: Sequence[Building],
    streets: Sequence[Street],
    epsilon_m: float = DEFAULT_EPSILON_M,
) -> SynthGraph:
    """Full topology: houses, service connections and the split street graph.

    Connection feet split the street edge they land on.  Node ids and ordering
    are fully determined by the inputs: houses first in building order, then
    network nodes in discovery order (connections, then street vertices and
    intersections street by street).
    """
    if epsilon_m < 0 or not math.isfinite(epsilon_m):
        raise ValueError("epsilon must be finite and >= 0")
    _validate_streets(streets)
    houses = building_nodes(buildings)
    if buildings and not streets:
        raise NoStreets("buildings given but the street network is empty")

    registry = _NodeRegistry(epsilon_m)
    # split points per (street index, segment index): list of (t, registry id)
    splits: dict[tuple[int, int], list[tuple[float, int]]] = {}

    connection_of: list[int] = []
    for house in houses:
        _, street_id, seg_index, t, foot = _nearest_on_streets(house.position, streets)
        street_pos = next(i for i, s in enumerate(streets) if s.id == street_id)
        reg_id = registry.get_or_create(foot, street_id, connection=True)
        splits.setdefault((street_pos, seg_index), []).append((t, reg_id))
        connection_of.append(reg_id)

    # pairwise segment intersections, including between segments of one street
    segment_list = [
        (si, gi, a, b)
        for si, street in enumerate(streets)
        for gi, (a, b) in enumerate(street.segments)
    ]
    for i in range(len(segment_list)):
        si, gi, a1, a2 = segment_list[i]
        for j in range(i + 1, len(segment_list)):
            sj, gj, b1, b2 = segment_list[j]
            if si == sj and abs(gi - gj) <= 1:
                continue  # adjacent segments of one polyline share a vertex anyway
            for t_a, point in geometry.segment_intersections(a1, a2, b1, b2):
                reg = registry.get_or_create(point, streets[si].id)
                registry.get_or_create(point, streets[sj].id)  # attach second street
                splits.setdefault((si, gi), []).append((t_a, reg))
                _, t_b, _ = geometry.project_to_segment(point, b1, b2)
                splits.setdefault((sj, gj), []).append((t_b, reg))

    # street vertices and sub-segment edges
    street_edges: list[tuple[int, int]] = []
    for si, street in enumerate(streets):
        for gi, (a, b) in enumerate(street.segments):
            points = [(0.0, registry.get_or_create(a, street.id))]
            points.extend(splits.get((si, gi), []))
            points.append((1.0, registry.get_or_create(b, street.id)))
            points.sort(key=lambda item: item[0])
            previous = None
            for _, reg_id in points:
                if previous is not None and reg_id != previous:
                    street_edges.append((previous, reg_id))
                previous = reg_id

    graph = SynthGraph(epsilon_m=epsilon_m)
    graph.nodes.extend(houses)
    network_ids = [f"n{i}" for i in range(len(registry.positions))]
    for i, position in enumerate(registry.positions):
        graph.nodes.append(Node(network_ids[i], position, registry.kind(i)))

    for house, reg_id in zip(houses, connection_of):
        length = geometry.distance(house.position, registry.positions[reg_id])
        graph.edges.append(
            Edge(f"v_{house.id[2:]}", house.id, network_ids[reg_id], EdgeKind.SERVICE, length)
        )
    seen_pairs = set()
    for k, (a, b) in enumerate(street_edges):
        pair = (min(a, b), max(a, b))
        if pair in seen_pairs:
            continue  # duplicated sub-segment from overlapping streets
        seen_pairs.add(pair)
        length = geometry.distance(registry.positions[a], registry.positions[b])
        graph.edges.append(
            Edge(f"e{len(seen_pairs) - 1}", network_ids[a], network_ids[b], EdgeKind.STREET, length)
        )
    return graph


def street_graph(streets: Sequence[Street], epsilon_m: float = DEFAULT_EPSILON_M) -> SynthGraph:
    """Street-only graph: vertices, intersections and split sub-segments."""
    if not streets:
        raise NoStreets("street network is empty")
    return synthesize([], streets, epsilon_m)


def validate_graph(graph: SynthGraph, streets: Sequence[Street] | None = None) -> None:
    """Check the structural invariants; raises ``AssertionError`` on violation.

    Network node positions must be pairwise farther than epsilon apart, every
    edge must connect existing nodes and carry its Euclidean length, every
    house must have exactly one service edge, and with the street network at
    hand every connection node must lie on some street within epsilon.
    """
    by_id = {}
    for node in graph.nodes:
        assert node.id not in by_id, f"duplicate node id {node.id}"
        by_id[node.id] = node
    network = [n for n in graph.nodes if n.kind is not NodeKind.HOUSE]
    for i in range(len(network)):
        for j in range(i + 1, len(network)):
            dist = geometry.distance(network[i].position, network[j].position)
            assert dist > graph.epsilon_m, (
                f"nodes {network[i].id} and {network[j].id} within epsilon"
            )
    service_count = {n.id: 0 for n in graph.nodes if n.kind is NodeKind.HOUSE}
    for edge in graph.edges:
        assert edge.source in by_id and edge.target in by_id, f"dangling edge {edge.id}"
        span = geometry.distance(by_id[edge.source].position, by_id[edge.target].position)
        assert abs(span - edge.length_m) <= 1e-9 * max(1.0, span), (
            f"edge {edge.id}: stored length {edge.length_m} vs span {span}"
        )
        if edge.kind is EdgeKind.SERVICE:
            for end in (edge.source, edge.target):
                if end in service_count:
                    service_count[end] += 1
    for house_id, count in service_count.items():
        assert count == 1, f"house {house_id} has {count} service edges"
    if streets:
        for node in graph.nodes:
            if node.kind is NodeKind.CONNECTION:
                dist, *_ = _nearest_on_streets(node.position, streets)
                assert dist <= graph.epsilon_m + 1e-9, (
                    f"connection {node.id} off the street network by {dist}"
                )
