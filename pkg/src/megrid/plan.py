"""Planning on top of the network model.

Three concerns live here: placing coupling devices under a budget (greedy
marginal improvement and a small genetic algorithm over the same objective),
dispatching storage against a load profile to shave its peak, and comparing
network loading with and without that flexibility.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .carriers import Carrier
from .cellarea import COST, PRIMARY_ENERGY, SELF_SUFFICIENCY, weighted_score
from .errors import PlanningError
from .multigrid import (
    CouplingDevice,
    CouplingOutput,
    FlowOptions,
    MultiGraph,
    NegativePressure,
    NonConvergence,
    graph_from_dict,
    graph_to_dict,
    solve_flow,
    verify_state,
    with_couplings,
    with_demands,
)


class InfeasibleBase(PlanningError):
    """The unmodified network does not solve on every snapshot."""


@dataclass(frozen=True)
class CandidateSite:
    """A device that could be built, its operating point and its price."""

    id: str
    device: CouplingDevice
    setpoint_kw: float
    build_cost: float

    def __post_init__(self):
        if self.setpoint_kw < 0 or self.build_cost < 0:
            raise ValueError(f"candidate {self.id}: setpoint and cost must be >= 0")
        if self.setpoint_kw > self.device.capacity_kw:
            raise ValueError(
                f"candidate {self.id}: setpoint exceeds the device capacity"
            )


@dataclass(frozen=True)
class Snapshot:
    """One demand situation to evaluate; overrides replace node demands."""

    id: str
    demands_kw: Mapping[str, float]


@dataclass
class PlacementProblem:
    """Base network, candidate devices, budget and scoring weights."""

    graph: MultiGraph
    candidates: list[CandidateSite]
    budget: float
    weights: dict[str, float]
    snapshots: list[Snapshot]
    base_setpoints: dict[str, float] = field(default_factory=dict)
    options: FlowOptions = field(default_factory=FlowOptions)

    def __post_init__(self):
        if self.budget < 0:
            raise ValueError("budget must be >= 0")
        if not self.snapshots:
            raise ValueError("placement needs at least one snapshot")
        seen = set()
        for candidate in self.candidates:
            if candidate.id in seen:
                raise ValueError(f"duplicate candidate id {candidate.id!r}")
            seen.add(candidate.id)
        # candidate devices must fit the base graph; building the combined
        # graph validates endpoints and carriers once, up front
        with_couplings(self.graph, [c.device for c in self.candidates])


@dataclass(frozen=True)
class Evaluation:
    """Objective value of one candidate set."""

    score: float
    feasible: bool
    objectives: dict[str, float]
    violations: int


@dataclass
class PlacementResult:
    """Chosen candidates with the objective trace of how they were picked."""

    selected: list[str]
    score: float
    trace: list[float]
    spent: float
    evaluations: int


class _Evaluator:
    """Scores candidate subsets; caches by selection mask.

    Primary energy is the summed positive slack supply over all snapshots and
    carriers, the self-sufficiency deficit its share of total demand, cost the
    summed build cost normalized by the budget.  Any capacity violation or
    failed solve marks a set infeasible.
    """

    def __init__(self, problem: PlacementProblem):
        self.problem = problem
        self.by_id = {c.id: c for c in problem.candidates}
        self.cache: dict[frozenset, Evaluation] = {}
        self.evaluations = 0
        base = self._evaluate(frozenset())
        if not base.feasible:
            raise InfeasibleBase("base network fails on at least one snapshot")
        self.references = {
            PRIMARY_ENERGY: base.objectives[PRIMARY_ENERGY],
            SELF_SUFFICIENCY: base.objectives[SELF_SUFFICIENCY],
            COST: self.problem.budget if self.problem.budget > 0 else 1.0,
        }
        score, _ = weighted_score(base.objectives, problem.weights, self.references)
        self.cache[frozenset()] = Evaluation(score, True, base.objectives, base.violations)

    def cost_of(self, selected) -> float:
        return math.fsum(self.by_id[c].build_cost for c in selected)

    def _evaluate(self, selected: frozenset) -> Evaluation:
        self.evaluations += 1
        problem = self.problem
        devices = [self.by_id[c].device for c in sorted(selected)]
        graph = with_couplings(problem.graph, devices)
        setpoints = dict(problem.base_setpoints)
        for candidate_id in selected:
            candidate = self.by_id[candidate_id]
            setpoints[candidate.device.id] = candidate.setpoint_kw
        supplied_kw = 0.0
        demand_kw = 0.0
        violations = 0
        for snapshot in problem.snapshots:
            solve_graph = with_demands(graph, snapshot.demands_kw)
            try:
                state = solve_flow(solve_graph, setpoints, problem.options)
            except (NonConvergence, NegativePressure):
                return Evaluation(math.inf, False, {}, -1)
            report = verify_state(solve_graph, state, problem.options.tol)
            violations += len(report.capacity_violations)
            supplied_kw += math.fsum(
                max(v, 0.0) for v in state.slack_injection_kw.values()
            )
            demand_kw += math.fsum(n.demand_kw for n in solve_graph.nodes.values())
        objectives = {
            PRIMARY_ENERGY: supplied_kw,
            SELF_SUFFICIENCY: supplied_kw / demand_kw if demand_kw > 0 else 0.0,
            COST: self.cost_of(selected),
        }
        return Evaluation(math.nan, violations == 0, objectives, violations)

    def evaluate(self, selected) -> Evaluation:
        key = frozenset(selected)
        if key not in self.cache:
            evaluation = self._evaluate(key)
            if evaluation.feasible:
                score, _ = weighted_score(
                    evaluation.objectives, self.problem.weights, self.references
                )
                evaluation = Evaluation(
                    score, True, evaluation.objectives, evaluation.violations
                )
            self.cache[key] = evaluation
        return self.cache[key]


def place_greedy(problem: PlacementProblem) -> PlacementResult:
    """Add the candidate with the best marginal score improvement until none helps.

    Candidate sets that violate capacities or fail to solve are never
    selected.  Ties between equally good candidates fall to the lower id, so
    the result does not depend on candidate order.  The trace starts with the
    base score and appends the score after every addition; it never increases.
    """
    evaluator = _Evaluator(problem)
    selected: list[str] = []
    current = evaluator.evaluate(selected)
    trace = [current.score]
    while True:
        spent = evaluator.cost_of(selected)
        best_id = None
        best_score = current.score
        for candidate in sorted(problem.candidates, key=lambda c: c.id):
            if candidate.id in selected:
                continue
            if spent + candidate.build_cost > problem.budget:
                continue
            trial = evaluator.evaluate(selected + [candidate.id])
            if trial.feasible and trial.score < best_score - 1e-12:
                best_id = candidate.id
                best_score = trial.score
        if best_id is None:
            break
        selected.append(best_id)
        current = evaluator.evaluate(selected)
        trace.append(current.score)
    return PlacementResult(
        selected, current.score, trace, evaluator.cost_of(selected), evaluator.evaluations
    )


def _repair(mask: np.ndarray, candidates: Sequence[CandidateSite], budget: float) -> np.ndarray:
    """Drop the most expensive selected bits until the selection is affordable."""
    mask = mask.copy()
    while True:
        cost = math.fsum(c.build_cost for c, bit in zip(candidates, mask) if bit)
        if cost <= budget:
            return mask
        drop = max(
            (i for i, bit in enumerate(mask) if bit),
            key=lambda i: (candidates[i].build_cost, candidates[i].id),
        )
        mask[drop] = False


def place_evolutionary(
    problem: PlacementProblem,
    population_size: int = 16,
    generations: int = 50,
    seed: int = 0,
    include_greedy: bool = True,
) -> PlacementResult:
    """Genetic search over candidate subsets encoded as bitmasks.

    Tournament selection of size two, uniform crossover, bit-flip mutation at
    a rate of one over the candidate count, and budget repair by dropping the
    most expensive bits.  The best individual ever seen is kept; with
    ``include_greedy`` the greedy solution joins the initial population, so
    the result is never worse than greedy's.  Fully deterministic in ``seed``.
    """
    if population_size < 2:
        raise ValueError("population size must be >= 2")
    candidates = sorted(problem.candidates, key=lambda c: c.id)
    n = len(candidates)
    evaluator = _Evaluator(problem)
    rng = np.random.default_rng(seed)

    def fitness(mask: np.ndarray) -> float:
        ids = [candidates[i].id for i in range(n) if mask[i]]
        return evaluator.evaluate(ids).score

    greedy_trace: list[float] | None = None
    population = [np.zeros(n, dtype=bool)]
    if include_greedy and n > 0:
        greedy_result = place_greedy(problem)
        greedy_trace = greedy_result.trace
        mask = np.zeros(n, dtype=bool)
        for i, candidate in enumerate(candidates):
            mask[i] = candidate.id in greedy_result.selected
        population.append(mask)
    while len(population) < population_size:
        population.append(_repair(rng.random(n) < 0.5, candidates, problem.budget))
    population = population[:population_size]

    scores = [fitness(m) for m in population]
    best_index = int(np.argmin(scores))
    best_mask = population[best_index].copy()
    best_score = scores[best_index]
    mutation_rate = 1.0 / n if n > 0 else 0.0

    for _ in range(generations):
        next_population = [best_mask.copy()]  # elitism
        while len(next_population) < population_size:
            contenders = rng.integers(0, population_size, size=4)
            parent_a = population[min(contenders[:2], key=lambda i: scores[i])]
            parent_b = population[min(contenders[2:], key=lambda i: scores[i])]
            if n > 0:
                take_a = rng.random(n) < 0.5
                child = np.where(take_a, parent_a, parent_b)
                flip = rng.random(n) < mutation_rate
                child = np.logical_xor(child, flip)
                child = _repair(child, candidates, problem.budget)
            else:
                child = np.zeros(0, dtype=bool)
            next_population.append(child)
        population = next_population
        scores = [fitness(m) for m in population]
        generation_best = int(np.argmin(scores))
        if scores[generation_best] < best_score:
            best_score = scores[generation_best]
            best_mask = population[generation_best].copy()

    selected = [candidates[i].id for i in range(n) if best_mask[i]]
    base_score = evaluator.evaluate([]).score
    trace = greedy_trace if greedy_trace is not None else [base_score]
    if not trace or trace[-1] != best_score:
        trace = trace + [best_score]
    return PlacementResult(
        selected, best_score, trace, evaluator.cost_of(selected), evaluator.evaluations
    )


# ---------------------------------------------------------------------------
# storage flexibility


@dataclass(frozen=True)
class StorageUnit:
    """A storage asset attached to one node's carrier.

    The round-trip efficiency is booked on charging: one kWh drawn from the
    grid stores as the efficiency's worth of dischargeable energy.
    """

    carrier: Carrier
    capacity_kwh: float
    power_limit_kw: float
    round_trip_efficiency: float = 1.0
    initial_soc_kwh: float = 0.0

    def __post_init__(self):
        if self.capacity_kwh < 0:
            raise ValueError("storage capacity must be >= 0")
        if self.power_limit_kw <= 0:
            raise ValueError("storage power limit must be > 0")
        if not 0.0 < self.round_trip_efficiency <= 1.0:
            raise ValueError("round-trip efficiency must be in (0, 1]")
        if not 0.0 <= self.initial_soc_kwh <= max(self.capacity_kwh, 0.0):
            raise ValueError("initial state of charge must fit the capacity")


@dataclass
class DispatchResult:
    """Storage dispatch against a profile and the resulting net load."""

    charge_kw: tuple[float, ...]
    discharge_kw: tuple[float, ...]
    net_kw: tuple[float, ...]
    soc_kwh: tuple[float, ...]
    peak_before_kw: float
    peak_after_kw: float
    target_level_kw: float


def _shave_at_level(
    profile: Sequence[float], storage: StorageUnit, level: float, step_hours: float
):
    """Greedy pass: charge below the level, discharge above, track the SoC."""
    soc = storage.initial_soc_kwh
    charge = []
    discharge = []
    net = []
    socs = []
    efficiency = storage.round_trip_efficiency
    for power in profile:
        c = d = 0.0
        if power > level:
            # the max() guards against one-ulp drift in the SoC bookkeeping
            d = max(0.0, min(power - level, storage.power_limit_kw, soc / step_hours))
            soc -= d * step_hours
        elif power < level:
            headroom_kw = (storage.capacity_kwh - soc) / (efficiency * step_hours)
            c = max(0.0, min(level - power, storage.power_limit_kw, headroom_kw))
            soc += c * efficiency * step_hours
        charge.append(c)
        discharge.append(d)
        net.append(power - d + c)
        socs.append(soc)
    return charge, discharge, net, socs


def flex_dispatch(
    profile_kw: Sequence[float], storage: StorageUnit, step_hours: float = 1.0
) -> DispatchResult:
    """Shave the profile's peak as far as the storage allows.

    Bisects the target level between the lowest level the power limit could
    ever reach and the original peak; at each level a greedy pass charges when
    the profile is below the level and discharges when above.  The dispatched
    peak never exceeds the original one, and discharged energy equals
    round-trip efficiency times charged energy plus the drop in state of
    charge.
    """
    if len(profile_kw) == 0:
        raise ValueError("profile must not be empty")
    if step_hours <= 0:
        raise ValueError("step duration must be positive")
    if any(not math.isfinite(p) for p in profile_kw):
        raise ValueError("profile values must be finite")
    peak_before = max(profile_kw)

    def achieved(level: float) -> float:
        _, _, net, _ = _shave_at_level(profile_kw, storage, level, step_hours)
        return max(net)

    high = peak_before
    low = peak_before - storage.power_limit_kw
    if storage.capacity_kwh > 0.0:
        for _ in range(100):
            mid = 0.5 * (low + high)
            if high - low <= 1e-12 * max(1.0, abs(high)):
                break
            if achieved(mid) <= mid + 1e-12:
                high = mid
            else:
                low = mid
    charge, discharge, net, socs = _shave_at_level(profile_kw, storage, high, step_hours)
    return DispatchResult(
        charge_kw=tuple(charge),
        discharge_kw=tuple(discharge),
        net_kw=tuple(net),
        soc_kwh=tuple(socs),
        peak_before_kw=peak_before,
        peak_after_kw=max(net),
        target_level_kw=high,
    )


# ---------------------------------------------------------------------------
# expansion comparison


@dataclass
class LoadingReport:
    """Loading summary of one mode of an expansion comparison."""

    edge_max_loading_kw: dict[str, float]
    violations: int
    node_peak_kw: dict[str, float]


@dataclass
class ExpansionReport:
    """Raw versus flexibility-shaved loading of the same network."""

    raw: LoadingReport
    flexible: LoadingReport


def _loading(
    graph: MultiGraph,
    profiles: Mapping[str, Sequence[float]],
    setpoints: Mapping[str, float],
    options: FlowOptions,
) -> LoadingReport:
    if not profiles:
        raise ValueError("expansion comparison needs at least one node profile")
    steps = {len(p) for p in profiles.values()}
    if len(steps) != 1 or 0 in steps:
        raise ValueError("all node profiles must share one non-zero length")
    max_loading: dict[str, float] = {edge_id: 0.0 for edge_id in graph.edges}
    violations = 0
    for t in range(steps.pop()):
        overrides = {node_id: profile[t] for node_id, profile in profiles.items()}
        state = solve_flow(with_demands(graph, overrides), setpoints, options)
        for edge_id, flow in state.edge_flows_kw.items():
            max_loading[edge_id] = max(max_loading[edge_id], abs(flow))
            capacity = graph.edges[edge_id].capacity_kw
            if capacity is not None and abs(flow) > capacity:
                violations += 1
    peaks = {node_id: max(profile) for node_id, profile in profiles.items()}
    return LoadingReport(max_loading, violations, peaks)


def expansion_compare(
    graph: MultiGraph,
    profiles: Mapping[str, Sequence[float]],
    storages: Mapping[str, StorageUnit],
    setpoints: Mapping[str, float] | None = None,
    options: FlowOptions | None = None,
    step_hours: float = 1.0,
) -> ExpansionReport:
    """Solve a demand time series raw and with storage peak shaving applied.

    ``profiles`` maps node ids to demand series that replace the static
    demand, timestep by timestep; ``storages`` attaches a storage unit to some
    of those nodes, whose dispatched net load is used in the flexible mode.
    Violations count (edge, timestep) pairs whose |flow| exceeds capacity.
    """
    options = options or FlowOptions()
    setpoints = setpoints or {}
    for node_id in profiles:
        if node_id not in graph.nodes:
            raise ValueError(f"profile for unknown node {node_id!r}")
    for node_id, storage in storages.items():
        if node_id not in profiles:
            raise ValueError(f"storage at {node_id!r} has no profile to dispatch")
        if graph.nodes[node_id].carrier is not storage.carrier:
            raise ValueError(
                f"storage at {node_id!r} is a {storage.carrier} unit on a "
                f"{graph.nodes[node_id].carrier} node"
            )
    raw = _loading(graph, profiles, setpoints, options)
    shaved: dict[str, Sequence[float]] = {}
    for node_id, profile in profiles.items():
        if node_id in storages:
            shaved[node_id] = flex_dispatch(profile, storages[node_id], step_hours).net_kw
        else:
            shaved[node_id] = profile
    flexible = _loading(graph, shaved, setpoints, options)
    return ExpansionReport(raw, flexible)


# ---------------------------------------------------------------------------
# wire format


def problem_to_dict(problem: PlacementProblem) -> dict:
    """JSON-compatible tree of a placement problem."""
    return {
        "graph": graph_to_dict(problem.graph),
        "budget": problem.budget,
        "weights": dict(problem.weights),
        "snapshots": [
            {"id": s.id, "demands_kw": dict(s.demands_kw)} for s in problem.snapshots
        ],
        "base_setpoints": dict(problem.base_setpoints),
        "candidates": [
            {
                "id": c.id,
                "setpoint_kw": c.setpoint_kw,
                "build_cost": c.build_cost,
                "device": {
                    "id": c.device.id,
                    "input_node": c.device.input_node,
                    "input_carrier": str(c.device.input_carrier),
                    "capacity_kw": c.device.capacity_kw,
                    "outputs": [
                        {"node": o.node, "carrier": str(o.carrier), "efficiency": o.efficiency}
                        for o in c.device.outputs
                    ],
                },
            }
            for c in problem.candidates
        ],
        "options": {
            "method": problem.options.method,
            "tol": problem.options.tol,
            "max_iter": problem.options.max_iter,
            "base_kw": problem.options.base_kw,
        },
    }


def problem_from_dict(tree: Mapping) -> PlacementProblem:
    """Inverse of :func:`problem_to_dict`, with full validation."""
    graph = graph_from_dict(tree["graph"])
    candidates = []
    for entry in tree.get("candidates", []):
        device_tree = entry["device"]
        device = CouplingDevice(
            id=str(device_tree["id"]),
            input_node=str(device_tree["input_node"]),
            input_carrier=Carrier(device_tree["input_carrier"]),
            capacity_kw=float(device_tree["capacity_kw"]),
            outputs=tuple(
                CouplingOutput(str(o["node"]), Carrier(o["carrier"]), float(o["efficiency"]))
                for o in device_tree.get("outputs", [])
            ),
        )
        candidates.append(
            CandidateSite(
                id=str(entry["id"]),
                device=device,
                setpoint_kw=float(entry.get("setpoint_kw", device.capacity_kw)),
                build_cost=float(entry["build_cost"]),
            )
        )
    options_tree = tree.get("options", {})
    return PlacementProblem(
        graph=graph,
        candidates=candidates,
        budget=float(tree["budget"]),
        weights={str(k): float(v) for k, v in tree.get("weights", {}).items()},
        snapshots=[
            Snapshot(
                str(s["id"]),
                {str(k): float(v) for k, v in s.get("demands_kw", {}).items()},
            )
            for s in tree.get("snapshots", [])
        ],
        base_setpoints={
            str(k): float(v) for k, v in tree.get("base_setpoints", {}).items()
        },
        options=FlowOptions(
            method=options_tree.get("method", "newton"),
            tol=float(options_tree.get("tol", 1e-8)),
            max_iter=int(options_tree.get("max_iter", 50)),
            base_kw=float(options_tree.get("base_kw", 1000.0)),
        ),
    )
