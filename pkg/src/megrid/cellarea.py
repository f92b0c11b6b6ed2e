"""Neutral cell areas: rasters, districts and demand-homogeneous regions.

A cell area is a technology-neutral slice of the study region.  Cells carry
key factors (densities, ratios and counts with an explicit normalization
basis), per-carrier annual demands, and are the unit on which supply concepts
are compared.  Nothing in here knows about concrete network layouts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .carriers import CARRIER_ORDER, Carrier
from .errors import PlanningError
from . import geometry
from .geometry import Point

#: Heat density above which a heat grid is worth considering, in kWh/(m2 a).
HEAT_GRID_THRESHOLD_KWH_M2A = 70.0

#: Factor names produced by :func:`compute_key_factors`.
HEAT_DENSITY = "heat_density"
BUILDING_COUNT = "building_count"
BUILDING_DENSITY = "building_density"
INHABITANTS = "inhabitants"
CAR_DENSITY = "car_density"
CAPACITY_DEMAND_RATIO = "capacity_demand_ratio"
STORAGE_DEMAND_RATIO = "storage_demand_ratio"
PROTECTED_SHARE = "protected_share"


class InvalidCellSize(PlanningError):
    """Raster cell size must be a positive finite length."""


class MissingStatistics(PlanningError):
    """A district polygon has no statistics record."""


class UnknownAttribute(PlanningError):
    """A seed cell lacks the attribute chosen for homogeneity growing."""


class DivisionBasisZero(PlanningError):
    """A ratio factor's denominator is zero; the factor is undefined."""


class InsufficientData(PlanningError):
    """Fewer than three cells carry both factors of a correlation."""


class ZeroVariance(PlanningError):
    """A correlation factor is constant over the cells."""


class UncoveredDemand(PlanningError):
    """A demand carrier is not fully covered by the concept's shares."""


class AllZeroWeights(PlanningError):
    """Objective weights must not all be zero."""


class MissingKeyFactor(PlanningError):
    """A required key factor is absent or undefined on the cell."""


class CellDesign(str, Enum):
    """How a cell's outline was obtained."""

    DISTRICT = "district"
    RASTER = "raster"
    FLOATING = "floating"

    def __str__(self) -> str:
        return self.value


class FactorBasis(str, Enum):
    """Normalization basis of a key factor."""

    PER_AREA = "per-area"
    PER_INHABITANT = "per-inhabitant"
    PER_DEMAND = "per-demand"
    ABSOLUTE = "absolute"

    def __str__(self) -> str:
        return self.value


@dataclass
class KeyFactor:
    """One named indicator of a cell.

    ``value`` is ``None`` when the factor is undefined (its normalization
    basis was zero); consumers must treat that distinctly from zero.  The
    ``controllable`` tag marks factors an operator could steer; it stays an
    untyped boolean without further semantics.
    """

    name: str
    value: float | None
    unit: str
    basis: FactorBasis
    controllable: bool | None = None

    def __post_init__(self):
        if self.value is not None and not math.isfinite(self.value):
            raise ValueError(f"key factor {self.name}: value must be finite or None")

    @property
    def is_defined(self) -> bool:
        return self.value is not None


@dataclass
class CellArea:
    """One spatial cell with geometry, key factors and per-carrier demand."""

    id: str
    polygon: tuple[Point, ...]
    design: CellDesign
    key_factors: dict[str, KeyFactor] = field(default_factory=dict)
    annual_demand_kwh: dict[Carrier, float] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.polygon) < 3:
            raise ValueError(f"cell {self.id}: polygon needs >= 3 vertices")
        if geometry.polygon_area(self.polygon) <= 0.0:
            raise ValueError(f"cell {self.id}: polygon area must be positive")
        for carrier, demand in self.annual_demand_kwh.items():
            if demand < 0 or not math.isfinite(demand):
                raise ValueError(f"cell {self.id}: {carrier} demand must be finite and >= 0")

    @property
    def area_m2(self) -> float:
        return geometry.polygon_area(self.polygon)

    def centroid(self) -> Point:
        return geometry.polygon_centroid(self.polygon)

    def contains(self, point: Point) -> bool:
        return geometry.point_in_polygon(point, self.polygon)


@dataclass(frozen=True)
class GeoFeature:
    """A point or polygon feature with free-form properties.

    Points are located at their coordinate, polygons at their centroid; that
    location decides which cell a feature belongs to.
    """

    id: str
    geometry: tuple
    properties: Mapping[str, object] = field(default_factory=dict)

    def is_point(self) -> bool:
        return len(self.geometry) == 2 and isinstance(self.geometry[0], (int, float))

    def location(self) -> Point:
        if self.is_point():
            return (float(self.geometry[0]), float(self.geometry[1]))
        return geometry.polygon_centroid(self.geometry)

    def area_m2(self) -> float:
        if self.is_point():
            return 0.0
        return geometry.polygon_area(self.geometry)


@dataclass(frozen=True)
class LoadProfile:
    """Normalized load shape: non-negative weights summing to one.

    ``step_hours`` is the duration of one timestep; scaling an annual energy
    by a weight and dividing by the step duration yields average power in the
    step.
    """

    weights: tuple[float, ...]
    step_hours: float = 1.0

    def __post_init__(self):
        if len(self.weights) == 0:
            raise ValueError("profile needs at least one timestep")
        if self.step_hours <= 0 or not math.isfinite(self.step_hours):
            raise ValueError("step duration must be positive and finite")
        if any(w < 0 or not math.isfinite(w) for w in self.weights):
            raise ValueError("profile weights must be finite and >= 0")
        if abs(math.fsum(self.weights) - 1.0) > 1e-9:
            raise ValueError("profile weights must sum to 1")

    def __len__(self) -> int:
        return len(self.weights)

    @classmethod
    def uniform(cls, steps: int, step_hours: float = 1.0) -> "LoadProfile":
        return cls(tuple(1.0 / steps for _ in range(steps)), step_hours)


# ---------------------------------------------------------------------------
# cell construction


def rasterize(
    bbox: tuple[float, float, float, float], cell_size_m: float
) -> list[CellArea]:
    """Tile a bounding box with square cells of ``cell_size_m`` side length.

    Cells at the right and top edge are clipped to the box.  The result is
    ordered row-major from the bottom-left corner; ids encode row and column.
    Cells are pairwise non-overlapping and cover the box exactly.
    """
    if not math.isfinite(cell_size_m) or cell_size_m <= 0:
        raise InvalidCellSize(f"cell size must be positive, got {cell_size_m}")
    xmin, ymin, xmax, ymax = bbox
    if not (xmax > xmin and ymax > ymin):
        raise ValueError(f"degenerate bounding box {bbox}")
    # The small slack keeps an exact multiple from producing a sliver column.
    nx = max(1, math.ceil((xmax - xmin) / cell_size_m - 1e-9))
    ny = max(1, math.ceil((ymax - ymin) / cell_size_m - 1e-9))
    cells = []
    for row in range(ny):
        y0 = ymin + row * cell_size_m
        y1 = min(y0 + cell_size_m, ymax)
        for col in range(nx):
            x0 = xmin + col * cell_size_m
            x1 = min(x0 + cell_size_m, xmax)
            polygon = ((x0, y0), (x1, y0), (x1, y1), (x0, y1))
            cells.append(CellArea(f"r{row}c{col}", polygon, CellDesign.RASTER))
    return cells


def from_districts(
    districts: Sequence[tuple[str, Sequence[Point]]],
    statistics: Mapping[str, Mapping[str, float]],
) -> list[CellArea]:
    """Turn administrative district polygons into cells.

    Each district must have a statistics record; its entries are attached as
    absolute key-factor seeds.  A missing record raises
    :class:`MissingStatistics` naming the district.
    """
    cells = []
    for district_id, polygon in districts:
        if district_id not in statistics:
            raise MissingStatistics(f"district {district_id!r} has no statistics record")
        factors = {
            name: KeyFactor(name, float(value), "", FactorBasis.ABSOLUTE)
            for name, value in statistics[district_id].items()
        }
        cells.append(
            CellArea(district_id, tuple(polygon), CellDesign.DISTRICT, key_factors=factors)
        )
    return cells


def _coefficient_of_variation(values: Sequence[float]) -> float:
    mean = math.fsum(values) / len(values)
    if mean == 0.0:
        return 0.0 if all(v == 0.0 for v in values) else math.inf
    variance = math.fsum((v - mean) ** 2 for v in values) / len(values)
    return math.sqrt(variance) / abs(mean)


def _rect_of(cell: CellArea) -> tuple[float, float, float, float]:
    return geometry.bounding_box(cell.polygon)


def _rects_adjacent(a, b, tol: float = 1e-9) -> bool:
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    share_x = min(ax1, bx1) - max(ax0, bx0)
    share_y = min(ay1, by1) - max(ay0, by0)
    touch_x = abs(ax1 - bx0) <= tol or abs(bx1 - ax0) <= tol
    touch_y = abs(ay1 - by0) <= tol or abs(by1 - ay0) <= tol
    # Shared edge of positive length, not just a corner.
    return (touch_x and share_y > tol) or (touch_y and share_x > tol)


def _trace_union_outline(rects) -> tuple[Point, ...]:
    """Outer boundary of a union of axis-aligned rectangles.

    Boundary edges are the rectangle edges that are not shared between two
    members.  They are chained into rings; the ring enclosing the largest area
    is returned (holes in pathological regions are dropped).
    """
    edge_count: dict[tuple[Point, Point], int] = {}
    for x0, y0, x1, y1 in rects:
        corners = ((x0, y0), (x1, y0), (x1, y1), (x0, y1))
        for i in range(4):
            a, b = corners[i], corners[(i + 1) % 4]
            key = (min(a, b), max(a, b))
            edge_count[key] = edge_count.get(key, 0) + 1
    boundary = [edge for edge, count in edge_count.items() if count == 1]
    adjacency: dict[Point, list[Point]] = {}
    for a, b in boundary:
        adjacency.setdefault(a, []).append(b)
        adjacency.setdefault(b, []).append(a)
    unused = {edge for edge in boundary}
    rings = []
    while unused:
        start_edge = min(unused)
        unused.discard(start_edge)
        ring = [start_edge[0], start_edge[1]]
        while ring[-1] != ring[0]:
            current = ring[-1]
            nxt = None
            for candidate in sorted(adjacency[current]):
                key = (min(current, candidate), max(current, candidate))
                if key in unused:
                    nxt = candidate
                    unused.discard(key)
                    break
            if nxt is None:
                break
            ring.append(nxt)
        if len(ring) >= 4 and ring[-1] == ring[0]:
            rings.append(tuple(ring[:-1]))
    if not rings:
        raise ValueError("could not trace a union outline")
    return max(rings, key=geometry.polygon_area)


def floating_cells(
    seed_cells: Sequence[CellArea], attribute: str, threshold: float
) -> list[CellArea]:
    """Merge adjacent raster cells into regions homogeneous in one attribute.

    Greedy region growing in the order of ``seed_cells`` (row-major for a
    raster): a region absorbs an adjacent unassigned cell as long as the
    coefficient of variation of the attribute over the would-be members stays
    within ``threshold``.  A threshold of zero disables merging entirely and
    returns the seed raster unchanged.

    Every seed cell must carry the attribute as a defined key factor,
    otherwise :class:`UnknownAttribute` is raised.  Merged cells carry the
    plain mean of the member values, a ``member_count`` factor, and summed
    annual demands.
    """
    if threshold < 0 or not math.isfinite(threshold):
        raise ValueError("threshold must be finite and >= 0")
    values = []
    for cell in seed_cells:
        factor = cell.key_factors.get(attribute)
        if factor is None or not factor.is_defined:
            raise UnknownAttribute(f"cell {cell.id} lacks attribute {attribute!r}")
        values.append(factor.value)
    if threshold == 0.0:
        return list(seed_cells)

    rects = [_rect_of(cell) for cell in seed_cells]
    n = len(seed_cells)
    neighbours: list[list[int]] = [[] for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if _rects_adjacent(rects[i], rects[j]):
                neighbours[i].append(j)
                neighbours[j].append(i)

    assigned = [False] * n
    merged: list[CellArea] = []
    unit = seed_cells[0].key_factors[attribute].unit if seed_cells else ""
    for seed in range(n):
        if assigned[seed]:
            continue
        region = [seed]
        assigned[seed] = True
        grew = True
        while grew:
            grew = False
            frontier = sorted({j for i in region for j in neighbours[i] if not assigned[j]})
            for candidate in frontier:
                trial = [values[i] for i in region] + [values[candidate]]
                if _coefficient_of_variation(trial) <= threshold:
                    region.append(candidate)
                    assigned[candidate] = True
                    grew = True
        member_values = [values[i] for i in region]
        outline = _trace_union_outline([rects[i] for i in region])
        demands: dict[Carrier, float] = {}
        for i in region:
            for carrier, demand in seed_cells[i].annual_demand_kwh.items():
                demands[carrier] = demands.get(carrier, 0.0) + demand
        factors = {
            attribute: KeyFactor(
                attribute,
                math.fsum(member_values) / len(member_values),
                unit,
                FactorBasis.ABSOLUTE,
            ),
            "member_count": KeyFactor(
                "member_count", float(len(region)), "", FactorBasis.ABSOLUTE
            ),
        }
        merged.append(
            CellArea(
                f"f{len(merged)}",
                outline,
                CellDesign.FLOATING,
                key_factors=factors,
                annual_demand_kwh=demands,
            )
        )
    return merged


# ---------------------------------------------------------------------------
# key factors


def _annual_demand_of(properties: Mapping[str, object]) -> float:
    total = 0.0
    for key, value in properties.items():
        if key.startswith("annual_") and key.endswith("_kwh"):
            total += float(value)
    return total


def compute_key_factors(
    cell: CellArea, features: Iterable[GeoFeature]
) -> dict[str, KeyFactor]:
    """Aggregate geodata inside the cell into its standard key factors.

    Features are assigned by their location (points directly, polygons via
    centroid).  Ratios with a zero basis come back with ``value None`` rather
    than infinity; :func:`factor_value` turns such access into a
    :class:`DivisionBasisZero` error.
    """
    area = cell.area_m2
    inhabitants = 0.0
    cars = 0.0
    buildings = 0
    heat_kwh = 0.0
    demand_kwh = 0.0
    generation_kw = 0.0
    storage_kwh = 0.0
    protected_m2 = 0.0
    for feature in features:
        if not cell.contains(feature.location()):
            continue
        props = feature.properties
        inhabitants += float(props.get("inhabitants", 0.0))
        cars += float(props.get("cars", 0.0))
        heat_kwh += float(props.get("annual_heat_kwh", 0.0))
        demand_kwh += _annual_demand_of(props)
        generation_kw += float(props.get("generation_kw", 0.0))
        storage_kwh += float(props.get("storage_kwh", 0.0))
        kind = props.get("kind")
        if kind == "building":
            buildings += 1
        elif kind == "protected":
            protected_m2 += feature.area_m2()

    def ratio(name, numerator, denominator, unit, basis, controllable=None):
        if denominator == 0.0:
            return KeyFactor(name, None, unit, basis, controllable)
        return KeyFactor(name, numerator / denominator, unit, basis, controllable)

    hours_per_year = 8760.0
    factors = {
        HEAT_DENSITY: ratio(HEAT_DENSITY, heat_kwh, area, "kWh/(m2 a)", FactorBasis.PER_AREA),
        BUILDING_COUNT: KeyFactor(BUILDING_COUNT, float(buildings), "", FactorBasis.ABSOLUTE),
        BUILDING_DENSITY: ratio(
            BUILDING_DENSITY, float(buildings), area, "1/m2", FactorBasis.PER_AREA
        ),
        INHABITANTS: KeyFactor(INHABITANTS, inhabitants, "", FactorBasis.ABSOLUTE),
        CAR_DENSITY: ratio(
            CAR_DENSITY, cars, inhabitants, "cars/inhabitant", FactorBasis.PER_INHABITANT
        ),
        CAPACITY_DEMAND_RATIO: ratio(
            CAPACITY_DEMAND_RATIO,
            generation_kw * hours_per_year,
            demand_kwh,
            "",
            FactorBasis.PER_DEMAND,
            controllable=True,
        ),
        STORAGE_DEMAND_RATIO: ratio(
            STORAGE_DEMAND_RATIO,
            storage_kwh,
            demand_kwh,
            "",
            FactorBasis.PER_DEMAND,
            controllable=True,
        ),
        PROTECTED_SHARE: ratio(
            PROTECTED_SHARE, protected_m2, area, "", FactorBasis.PER_AREA
        ),
    }
    return factors


def factor_value(cell: CellArea, name: str) -> float:
    """Value of a key factor; strict about absence and undefinedness."""
    factor = cell.key_factors.get(name)
    if factor is None:
        raise MissingKeyFactor(f"cell {cell.id} has no key factor {name!r}")
    if factor.value is None:
        raise DivisionBasisZero(f"cell {cell.id}: key factor {name!r} is undefined")
    return factor.value


@dataclass(frozen=True)
class CorrelationResult:
    """Pearson coefficient plus the number of cell pairs that entered it."""

    r: float
    n_pairs: int


def correlate(
    cells: Sequence[CellArea], factor_a: str, factor_b: str
) -> CorrelationResult:
    """Pearson correlation of two key factors over the cells.

    Only cells where both factors exist and are defined enter; their count is
    reported alongside the coefficient.  Fewer than three usable pairs raise
    :class:`InsufficientData`; a constant factor raises :class:`ZeroVariance`.
    """
    xs = []
    ys = []
    for cell in cells:
        fa = cell.key_factors.get(factor_a)
        fb = cell.key_factors.get(factor_b)
        if fa is None or fb is None or not fa.is_defined or not fb.is_defined:
            continue
        xs.append(fa.value)
        ys.append(fb.value)
    n = len(xs)
    if n < 3:
        raise InsufficientData(
            f"need >= 3 cells with both {factor_a!r} and {factor_b!r}, got {n}"
        )
    mean_x = math.fsum(xs) / n
    mean_y = math.fsum(ys) / n
    sxx = math.fsum((x - mean_x) ** 2 for x in xs)
    syy = math.fsum((y - mean_y) ** 2 for y in ys)
    if sxx == 0.0 or syy == 0.0:
        constant = factor_a if sxx == 0.0 else factor_b
        raise ZeroVariance(f"key factor {constant!r} is constant over the cells")
    sxy = math.fsum((x - mean_x) * (y - mean_y) for x, y in zip(xs, ys))
    return CorrelationResult(sxy / math.sqrt(sxx * syy), n)


# ---------------------------------------------------------------------------
# profiles and fulfillment concepts


@dataclass(frozen=True)
class PowerSeries:
    """Average power per timestep obtained from an annual energy and a profile."""

    power_kw: tuple[float, ...]
    step_hours: float
    peak_kw: float
    peak_index: int

    def energy_kwh(self) -> float:
        return math.fsum(self.power_kw) * self.step_hours


def apply_profile(annual_kwh: float, profile: LoadProfile) -> PowerSeries:
    """Scale a normalized profile to an annual energy.

    Power in step ``t`` is ``annual_kwh * weight_t / step_hours``; summing
    power times step duration recovers the annual energy.  The peak index is
    the first timestep attaining the maximum.
    """
    if annual_kwh < 0 or not math.isfinite(annual_kwh):
        raise ValueError("annual energy must be finite and >= 0")
    power = tuple(annual_kwh * w / profile.step_hours for w in profile.weights)
    peak = max(power)
    return PowerSeries(power, profile.step_hours, peak, power.index(peak))


@dataclass(frozen=True)
class Technology:
    """A supply technology: which carrier it draws and how efficiently.

    ``conversion`` is the ratio of useful output to carrier input, i.e. an
    efficiency for combustion-style technologies and a coefficient of
    performance for heat pumps.
    """

    name: str
    input_carrier: Carrier
    conversion: float

    def __post_init__(self):
        if self.conversion <= 0 or not math.isfinite(self.conversion):
            raise ValueError(f"technology {self.name}: conversion must be > 0")


@dataclass
class FulfillmentConcept:
    """One way of covering a cell's demands.

    ``shares`` maps each demand carrier to technology shares in [0, 1].
    Whether the shares of a demanded carrier actually sum to one is checked at
    the point of use, so partially covering concepts can be represented and
    then rejected with :class:`UncoveredDemand`.
    """

    name: str
    technologies: dict[str, Technology]
    shares: dict[Carrier, dict[str, float]]
    generation_kw: float = 0.0
    storage_kwh: float = 0.0
    build_cost: float = 0.0

    def __post_init__(self):
        for carrier, share_map in self.shares.items():
            for tech_name, share in share_map.items():
                if tech_name not in self.technologies:
                    raise ValueError(
                        f"concept {self.name}: unknown technology {tech_name!r}"
                    )
                if share < 0 or share > 1 or not math.isfinite(share):
                    raise ValueError(
                        f"concept {self.name}: share of {tech_name!r} must be in [0, 1]"
                    )
        if self.generation_kw < 0 or self.storage_kwh < 0 or self.build_cost < 0:
            raise ValueError(f"concept {self.name}: capacities and cost must be >= 0")


def _input_energies(cell: CellArea, concept: FulfillmentConcept) -> dict[Carrier, float]:
    """Annual carrier input energies needed to serve the cell's demands."""
    inputs = {carrier: 0.0 for carrier in CARRIER_ORDER}
    for carrier in CARRIER_ORDER:
        demand = cell.annual_demand_kwh.get(carrier, 0.0)
        if demand == 0.0:
            continue
        share_map = concept.shares.get(carrier)
        if share_map is None:
            raise UncoveredDemand(
                f"concept {concept.name}: no shares for {carrier} demand of cell {cell.id}"
            )
        covered = math.fsum(share_map.values())
        if abs(covered - 1.0) > 1e-9:
            raise UncoveredDemand(
                f"concept {concept.name}: {carrier} shares sum to {covered}, expected 1"
            )
        for tech_name, share in share_map.items():
            if share == 0.0:
                continue
            tech = concept.technologies[tech_name]
            inputs[tech.input_carrier] += demand * share / tech.conversion
    return inputs


@dataclass(frozen=True)
class CarrierDelivery:
    """Annual energy and peak power one carrier must deliver to a cell."""

    annual_kwh: float
    peak_kw: float
    peak_index: int


def carrier_delivery(
    cell: CellArea,
    concept: FulfillmentConcept,
    profiles: Mapping[Carrier, LoadProfile],
) -> dict[Carrier, CarrierDelivery]:
    """Translate useful demands into deliveries on each input carrier.

    Each technology's slice of demand is divided by its conversion factor and
    booked on the technology's input carrier; the carrier's profile then
    yields the peak.  All four carriers appear in the result, with zeros where
    nothing is delivered.
    """
    inputs = _input_energies(cell, concept)
    out: dict[Carrier, CarrierDelivery] = {}
    for carrier in CARRIER_ORDER:
        energy = inputs[carrier]
        if energy == 0.0:
            out[carrier] = CarrierDelivery(0.0, 0.0, 0)
            continue
        profile = profiles.get(carrier)
        if profile is None:
            raise ValueError(f"no load profile for carrier {carrier}")
        series = apply_profile(energy, profile)
        out[carrier] = CarrierDelivery(energy, series.peak_kw, series.peak_index)
    return out


def power_balance(
    demand_kw: float,
    generation_kw: float = 0.0,
    import_kw: float = 0.0,
    discharge_kw: float = 0.0,
    charge_kw: float = 0.0,
) -> float:
    """Residual of a cell's power balance at one timestep.

    Positive terms supply the cell (generation, imports, storage discharge);
    demand and storage charging withdraw.  A closed balance returns zero, a
    surplus is positive, a deficit negative.
    """
    return generation_kw + import_kw + discharge_kw - demand_kw - charge_kw


# ---------------------------------------------------------------------------
# concept scoring


PRIMARY_ENERGY = "primary_energy"
SELF_SUFFICIENCY = "self_sufficiency"
COST = "cost"
OBJECTIVE_NAMES = (PRIMARY_ENERGY, SELF_SUFFICIENCY, COST)

HOURS_PER_YEAR = 8760.0


def concept_objectives(cell: CellArea, concept: FulfillmentConcept) -> dict[str, float]:
    """Raw objective values of a concept on a cell; lower is better throughout.

    Primary energy is the summed carrier input.  Self-sufficiency enters as
    one minus the ratio of potential local generation to that input (capped at
    one), so a fully self-sufficient concept scores zero.  Cost is the
    concept's build cost.
    """
    inputs = _input_energies(cell, concept)
    primary_kwh = math.fsum(inputs.values())
    if primary_kwh > 0.0:
        self_sufficiency = min(1.0, concept.generation_kw * HOURS_PER_YEAR / primary_kwh)
    else:
        self_sufficiency = 1.0
    return {
        PRIMARY_ENERGY: primary_kwh,
        SELF_SUFFICIENCY: 1.0 - self_sufficiency,
        COST: concept.build_cost,
    }


def weighted_score(
    objectives: Mapping[str, float],
    weights: Mapping[str, float],
    references: Mapping[str, float] | None = None,
) -> tuple[float, dict[str, dict[str, float]]]:
    """Weighted sum of normalized objectives; shared by cells and placement.

    Each objective is divided by its value in the reference before weighting.
    A non-positive reference value leaves the objective unnormalized, which
    keeps zero-valued reference objectives from blowing up the score.  Raises
    :class:`AllZeroWeights` when no weight is positive.
    """
    if any(w < 0 or not math.isfinite(w) for w in weights.values()):
        raise ValueError("objective weights must be finite and >= 0")
    total_weight = math.fsum(weights.values())
    if total_weight == 0.0:
        raise AllZeroWeights("at least one objective weight must be positive")
    score = 0.0
    breakdown: dict[str, dict[str, float]] = {}
    for name, raw in objectives.items():
        weight = float(weights.get(name, 0.0))
        reference = None if references is None else references.get(name)
        if reference is not None and reference > 0.0:
            normalized = raw / reference
        else:
            normalized = raw
        contribution = weight * normalized
        score += contribution
        breakdown[name] = {
            "raw": raw,
            "normalized": normalized,
            "weight": weight,
            "contribution": contribution,
        }
    return score, breakdown


@dataclass(frozen=True)
class ConceptScore:
    """Scalar score of a concept plus its per-objective breakdown."""

    score: float
    breakdown: dict[str, dict[str, float]]


def evaluate_concept(
    cell: CellArea,
    concept: FulfillmentConcept,
    weights: Mapping[str, float],
    reference: FulfillmentConcept | None = None,
) -> ConceptScore:
    """Score a concept on a cell; lower is better.

    With a reference concept the objectives are normalized by the reference's
    values on the same cell, making scores comparable across objectives of
    different magnitude.  Scaling all weights by a positive constant scales
    every score alike and therefore never changes a ranking.
    """
    objectives = concept_objectives(cell, concept)
    references = None if reference is None else concept_objectives(cell, reference)
    score, breakdown = weighted_score(objectives, weights, references)
    return ConceptScore(score, breakdown)


def screen_heat_grid(
    cell: CellArea, threshold_kwh_m2a: float = HEAT_GRID_THRESHOLD_KWH_M2A
) -> bool:
    """Whether the cell's heat density makes a heat grid worth planning.

    Inclusive at the threshold.  The cell must carry a defined heat-density
    key factor, otherwise :class:`MissingKeyFactor` is raised.
    """
    factor = cell.key_factors.get(HEAT_DENSITY)
    if factor is None or not factor.is_defined:
        raise MissingKeyFactor(f"cell {cell.id} has no defined {HEAT_DENSITY!r} factor")
    return factor.value >= threshold_kwh_m2a
