"""Agent-based forecast of heating technology adoption.

Households are modelled as agents with a budget, a saving behaviour and a
willingness to act.  Every simulated year each agent saves, compares the
annualized cost of its current heating technology against the cheapest
alternative and switches when the advantage beats its inertia, the investment
is affordable and a random draw falls below its willingness.  Aggregated over
the population this yields technology share paths; a Monte-Carlo layer
extracts the parameter sets that reach a target share.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import PlanningError

DEFAULT_END_YEAR = 2045
DEFAULT_AMORTIZATION_YEARS = 20


class InvalidShares(PlanningError):
    """Initial technology shares must be in [0, 1] and sum to one."""


class MissingCost(PlanningError):
    """The cost table lacks an entry for a technology and year."""


@dataclass
class Agent:
    """One household with its heating system and decision parameters."""

    id: int
    heating_tech: str
    income: float
    expenditures: float
    funds: float
    saving_quota: float
    willingness: float
    hysteresis: float

    def __post_init__(self):
        if self.funds < 0:
            raise ValueError(f"agent {self.id}: funds must be >= 0")
        if not 0.0 <= self.saving_quota <= 1.0:
            raise ValueError(f"agent {self.id}: saving quota must be in [0, 1]")
        if not 0.0 <= self.willingness <= 1.0:
            raise ValueError(f"agent {self.id}: willingness must be in [0, 1]")
        if self.hysteresis < 0:
            raise ValueError(f"agent {self.id}: hysteresis must be >= 0")


@dataclass(frozen=True)
class TechCost:
    """Investment and yearly operating cost of one technology in one year."""

    capex: float
    opex: float

    def __post_init__(self):
        if self.capex < 0 or self.opex < 0:
            raise ValueError("costs must be >= 0")

    def annualized(self, amortization_years: int) -> float:
        return self.capex / amortization_years + self.opex


class CostTable:
    """Per-technology, per-year cost entries.

    ``entries`` maps technology name to a year -> :class:`TechCost` mapping.
    Lookups for uncovered combinations raise :class:`MissingCost`.
    """

    def __init__(self, entries: Mapping[str, Mapping[int, TechCost]]):
        self.entries = {tech: dict(years) for tech, years in entries.items()}

    @property
    def technologies(self) -> tuple[str, ...]:
        return tuple(sorted(self.entries))

    def get(self, tech: str, year: int) -> TechCost:
        years = self.entries.get(tech)
        if years is None:
            raise MissingCost(f"no cost entries for technology {tech!r}")
        cost = years.get(year)
        if cost is None:
            raise MissingCost(f"no {tech!r} cost for year {year}")
        return cost

    def for_year(self, year: int) -> dict[str, TechCost]:
        return {tech: self.get(tech, year) for tech in self.technologies}

    def require_coverage(self, years: Sequence[int]) -> None:
        for tech in self.technologies:
            for year in years:
                self.get(tech, year)


_DIST_SAMPLERS = {
    "constant": lambda spec, rng: float(spec["value"]),
    "uniform": lambda spec, rng: float(rng.uniform(spec["low"], spec["high"])),
    "normal": lambda spec, rng: float(rng.normal(spec["mean"], spec["std"])),
    "choice": lambda spec, rng: spec["values"][int(rng.integers(len(spec["values"])))],
}


def sample_value(spec, rng: np.random.Generator) -> float:
    """Draw one value from a distribution spec such as
    ``{"dist": "uniform", "low": 0, "high": 1}``."""
    if isinstance(spec, (int, float)):
        return float(spec)
    kind = spec.get("dist")
    if kind not in _DIST_SAMPLERS:
        raise ValueError(f"unknown distribution kind {kind!r}")
    return _DIST_SAMPLERS[kind](spec, rng)


#: Agent attribute names in the order their values are drawn per agent.
_AGENT_ATTRIBUTES = (
    "income",
    "expenditures",
    "funds",
    "saving_quota",
    "willingness",
    "hysteresis",
)

_ATTRIBUTE_DEFAULTS = {
    "income": 40_000.0,
    "expenditures": 36_000.0,
    "funds": 10_000.0,
    "saving_quota": 0.5,
    "willingness": 0.5,
    "hysteresis": 0.1,
}


@dataclass
class PopulationSpec:
    """Aggregate description of the agent population.

    ``initial_shares`` gives the technology mix to realize; ``attributes``
    holds distribution specs per agent attribute (missing ones fall back to
    fixed defaults).
    """

    count: int
    initial_shares: dict[str, float]
    attributes: dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("population needs at least one agent")
        for tech, share in self.initial_shares.items():
            if share < 0 or share > 1 or not math.isfinite(share):
                raise InvalidShares(f"share of {tech!r} must be in [0, 1], got {share}")
        if abs(math.fsum(self.initial_shares.values()) - 1.0) > 1e-9:
            raise InvalidShares(
                f"initial shares sum to {math.fsum(self.initial_shares.values())}, expected 1"
            )


def _apportion(shares: Mapping[str, float], count: int) -> dict[str, int]:
    """Largest-remainder split of ``count`` agents over technology shares.

    The realized share of every technology differs from its target by less
    than one agent.
    """
    techs = sorted(shares)
    exact = {tech: shares[tech] * count for tech in techs}
    counts = {tech: math.floor(exact[tech]) for tech in techs}
    remaining = count - sum(counts.values())
    by_remainder = sorted(techs, key=lambda tech: (-(exact[tech] - counts[tech]), tech))
    for tech in by_remainder[:remaining]:
        counts[tech] += 1
    return counts


def init_agents(
    spec: PopulationSpec, seed: int | np.random.Generator
) -> list[Agent]:
    """Build the agent population deterministically from a seed.

    Technology counts follow the initial shares via largest-remainder
    apportionment and are assigned to shuffled agent ids; attribute values are
    drawn per agent in id order.  Draws that would violate an attribute's
    domain are clipped into it.
    """
    rng = np.random.default_rng(seed)
    counts = _apportion(spec.initial_shares, spec.count)
    techs: list[str] = []
    for tech in sorted(counts):
        techs.extend([tech] * counts[tech])
    rng.shuffle(techs)
    agents = []
    for agent_id in range(spec.count):
        raw = {}
        for attribute in _AGENT_ATTRIBUTES:
            dist = spec.attributes.get(attribute, _ATTRIBUTE_DEFAULTS[attribute])
            raw[attribute] = sample_value(dist, rng)
        raw["funds"] = max(0.0, raw["funds"])
        raw["saving_quota"] = min(1.0, max(0.0, raw["saving_quota"]))
        raw["willingness"] = min(1.0, max(0.0, raw["willingness"]))
        raw["hysteresis"] = max(0.0, raw["hysteresis"])
        agents.append(Agent(agent_id, techs[agent_id], **raw))
    return agents


@dataclass(frozen=True)
class Switch:
    """One logged technology change."""

    agent_id: int
    from_tech: str
    to_tech: str


def step(
    agents: Sequence[Agent],
    costs: Mapping[str, TechCost],
    rng: np.random.Generator,
    amortization_years: int = DEFAULT_AMORTIZATION_YEARS,
) -> list[Switch]:
    """Advance the population by one year, mutating the agents in place.

    Every agent first saves (never into debt), then compares annualized costs
    (capex over the amortization horizon plus opex).  It switches to the
    cheapest alternative technology when the relative advantage over its
    current system exceeds its hysteresis, it can pay the investment up front
    and a uniform draw beats its willingness.

    Exactly one random draw is consumed per agent, in agent order, whether or
    not a switch is considered; that keeps draw sequences aligned between
    scenario variants that share a seed.
    """
    techs = sorted(costs)
    annualized = {tech: costs[tech].annualized(amortization_years) for tech in techs}
    switches = []
    for agent in agents:
        draw = float(rng.random())
        agent.funds = max(
            0.0, agent.funds + (agent.income - agent.expenditures) * agent.saving_quota
        )
        if agent.heating_tech not in costs:
            raise MissingCost(f"no cost entries for technology {agent.heating_tech!r}")
        current_cost = annualized[agent.heating_tech]
        alternatives = [tech for tech in techs if tech != agent.heating_tech]
        if not alternatives or current_cost <= 0.0:
            continue
        best = min(alternatives, key=lambda tech: (annualized[tech], tech))
        advantage = (current_cost - annualized[best]) / current_cost
        if (
            advantage > agent.hysteresis
            and agent.funds >= costs[best].capex
            and draw < agent.willingness
        ):
            agent.funds -= costs[best].capex
            switches.append(Switch(agent.id, agent.heating_tech, best))
            agent.heating_tech = best
    return switches


@dataclass(frozen=True)
class AdoptionScenario:
    """Complete input of one simulation run."""

    population: PopulationSpec
    costs: CostTable
    start_year: int
    end_year: int = DEFAULT_END_YEAR
    seed: int = 0
    amortization_years: int = DEFAULT_AMORTIZATION_YEARS

    def __post_init__(self):
        if self.end_year <= self.start_year:
            raise ValueError("end year must come after the start year")
        if self.amortization_years < 1:
            raise ValueError("amortization horizon must be >= 1 year")

    @property
    def step_years(self) -> tuple[int, ...]:
        return tuple(range(self.start_year + 1, self.end_year + 1))


@dataclass(frozen=True)
class SharePath:
    """Technology shares per simulated year, in [0, 1] and summing to one."""

    years: tuple[int, ...]
    technologies: tuple[str, ...]
    shares: tuple[tuple[float, ...], ...]  # row per year, column per technology

    def share(self, year: int, tech: str) -> float:
        return self.shares[self.years.index(year)][self.technologies.index(tech)]

    def final_share(self, tech: str) -> float:
        return self.shares[-1][self.technologies.index(tech)]


def _shares_of(agents: Sequence[Agent], technologies: Sequence[str]) -> tuple[float, ...]:
    counts = {tech: 0 for tech in technologies}
    for agent in agents:
        counts[agent.heating_tech] += 1
    total = len(agents)
    return tuple(counts[tech] / total for tech in technologies)


@dataclass(frozen=True)
class RunResult:
    """Share path and full switch log of one scenario run."""

    path: SharePath
    switches: tuple[tuple[int, Switch], ...]  # (year, switch)


def run(scenario: AdoptionScenario) -> RunResult:
    """Simulate a scenario start to end; bit-identical for identical inputs.

    The share path records the initial mix at the start year and the mix after
    each yearly step.  Cost coverage for every step year and technology is
    validated up front.
    """
    scenario.costs.require_coverage(scenario.step_years)
    technologies = scenario.costs.technologies
    for tech in scenario.population.initial_shares:
        if tech not in scenario.costs.entries:
            raise MissingCost(f"initial share names technology {tech!r} without costs")
    rng = np.random.default_rng(scenario.seed)
    agents = init_agents(scenario.population, rng)
    years = [scenario.start_year]
    rows = [_shares_of(agents, technologies)]
    switch_log: list[tuple[int, Switch]] = []
    for year in scenario.step_years:
        switches = step(
            agents, scenario.costs.for_year(year), rng, scenario.amortization_years
        )
        switch_log.extend((year, s) for s in switches)
        years.append(year)
        rows.append(_shares_of(agents, technologies))
    path = SharePath(tuple(years), technologies, tuple(rows))
    return RunResult(path, tuple(switch_log))


# ---------------------------------------------------------------------------
# scenario wire format


def cost_table_from_dict(tree: Mapping) -> CostTable:
    """Costs from a JSON tree; accepts per-year maps or period blocks.

    Per year: ``{"gas": {"2023": {"capex": 8000, "opex": 2000}}}``.
    Periods: ``{"gas": [{"from": 2023, "to": 2045, "capex": 8000, "opex": 2000}]}``.
    """
    entries: dict[str, dict[int, TechCost]] = {}
    for tech, block in tree.items():
        years: dict[int, TechCost] = {}
        if isinstance(block, Mapping):
            for year, cost in block.items():
                years[int(year)] = TechCost(float(cost["capex"]), float(cost["opex"]))
        else:
            for period in block:
                cost = TechCost(float(period["capex"]), float(period["opex"]))
                for year in range(int(period["from"]), int(period["to"]) + 1):
                    years[year] = cost
        entries[tech] = years
    return CostTable(entries)


def scenario_from_dict(tree: Mapping) -> AdoptionScenario:
    """Build a scenario from its JSON-compatible tree."""
    population = tree["population"]
    spec = PopulationSpec(
        count=int(population["count"]),
        initial_shares={t: float(s) for t, s in population["initial_shares"].items()},
        attributes=dict(population.get("attributes", {})),
    )
    return AdoptionScenario(
        population=spec,
        costs=cost_table_from_dict(tree["costs"]),
        start_year=int(tree["start_year"]),
        end_year=int(tree.get("end_year", DEFAULT_END_YEAR)),
        seed=int(tree.get("seed", 0)),
        amortization_years=int(tree.get("amortization_years", DEFAULT_AMORTIZATION_YEARS)),
    )


# ---------------------------------------------------------------------------
# Monte-Carlo meta-analysis


@dataclass(frozen=True)
class ScenarioParameter:
    """A sampled parameter: a name, a path into the scenario tree, a distribution.

    ``path`` is dot-separated (``population.attributes.willingness.value``);
    integer segments index into lists.
    """

    name: str
    path: str
    dist: Mapping


@dataclass(frozen=True)
class ScenarioSpace:
    """Base scenario tree plus the parameters Monte-Carlo sampling varies."""

    base: Mapping
    parameters: tuple[ScenarioParameter, ...]


def set_by_path(tree: dict, path: str, value) -> None:
    """Write ``value`` at a dot-separated path, creating missing dict levels."""
    node = tree
    parts = path.split(".")
    for part in parts[:-1]:
        if isinstance(node, list):
            node = node[int(part)]
        else:
            node = node.setdefault(part, {})
    last = parts[-1]
    if isinstance(node, list):
        node[int(last)] = value
    else:
        node[last] = value


def share_target(tech: str, year: int, min_share: float) -> Callable[[SharePath], bool]:
    """Predicate: does ``tech`` reach at least ``min_share`` by ``year``."""

    def predicate(path: SharePath) -> bool:
        return path.share(year, tech) >= min_share

    return predicate


@dataclass(frozen=True)
class AcceptedRun:
    """One Monte-Carlo run that met the target."""

    params: dict[str, float]
    path: SharePath


def apply_parameters(base: Mapping, params: Mapping[str, float], space: ScenarioSpace) -> dict:
    tree = copy.deepcopy(dict(base))
    for parameter in space.parameters:
        set_by_path(tree, parameter.path, params[parameter.name])
    return tree


def monte_carlo(
    space: ScenarioSpace,
    target: Callable[[SharePath], bool],
    n_runs: int,
    seed: int,
) -> list[AcceptedRun]:
    """Sample parameter sets, run each scenario and keep those meeting the target.

    Sampling is deterministic in ``seed``; each run itself uses the base
    scenario's own seed so a run can be reproduced exactly from its parameter
    set alone.  Results are returned in sampled order.
    """
    if n_runs < 1:
        raise ValueError("need at least one run")
    rng = np.random.default_rng(seed)
    accepted = []
    for _ in range(n_runs):
        params = {p.name: sample_value(p.dist, rng) for p in space.parameters}
        scenario = scenario_from_dict(apply_parameters(space.base, params, space))
        result = run(scenario)
        if target(result.path):
            accepted.append(AcceptedRun(params, result.path))
    return accepted
