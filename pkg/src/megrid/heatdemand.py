"""Building heat demand from weather.

A building is reduced to a single thermal loss coefficient: the heat flow that
keeps the inside at a set temperature is proportional to the temperature
difference to the outside, clamped at zero on warm days.  From an annual
consumption figure the coefficient is fitted against a daily temperature
series, and the same degree-day weights split the annual figure into a daily
demand series.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date as Date

from .errors import PlanningError
from .geometry import Point, polygon_is_simple

HOURS_PER_DAY = 24.0

#: Default indoor set temperature in degrees Celsius.
DEFAULT_INNER_TEMP_C = 20.0


class DegenerateWeather(PlanningError):
    """The weather series has no heating day although demand is nonzero."""

    def __init__(self, message: str, building_id: str | None = None):
        super().__init__(message)
        self.building_id = building_id


@dataclass(frozen=True)
class WeatherSeries:
    """Ordered daily outdoor temperatures.

    ``days`` holds ``(date, temperature_c)`` pairs with strictly increasing
    dates; at least one entry is required.
    """

    days: tuple[tuple[Date, float], ...]

    def __post_init__(self):
        if len(self.days) == 0:
            raise ValueError("weather series needs at least one day")
        previous = None
        for day, temp in self.days:
            if not math.isfinite(temp):
                raise ValueError(f"non-finite temperature on {day}")
            if previous is not None and day <= previous:
                raise ValueError(f"dates must increase strictly, got {day} after {previous}")
            previous = day

    def __len__(self) -> int:
        return len(self.days)

    @property
    def dates(self) -> tuple[Date, ...]:
        return tuple(d for d, _ in self.days)

    @property
    def temperatures(self) -> tuple[float, ...]:
        return tuple(t for _, t in self.days)

    @classmethod
    def from_temperatures(cls, start: Date, temps) -> "WeatherSeries":
        """Convenience constructor with consecutive dates starting at ``start``."""
        days = tuple(
            (Date.fromordinal(start.toordinal() + i), float(t)) for i, t in enumerate(temps)
        )
        return cls(days)


@dataclass(frozen=True)
class HeatTransferModel:
    """Linear loss model of one building.

    ``loss_kw_per_k`` lumps transmission surface and heat transfer coefficient
    into a single conductance.  ``heating_limit_c`` caps the outdoor
    temperature above which heating is off; it defaults to the inner set
    temperature, which makes the model a pure clamp at zero.
    """

    loss_kw_per_k: float
    inner_temp_c: float = DEFAULT_INNER_TEMP_C
    heating_limit_c: float | None = None

    def __post_init__(self):
        if not math.isfinite(self.loss_kw_per_k) or self.loss_kw_per_k < 0:
            raise ValueError("loss coefficient must be finite and >= 0")
        if not math.isfinite(self.inner_temp_c):
            raise ValueError("inner temperature must be finite")

    @property
    def limit_c(self) -> float:
        return self.inner_temp_c if self.heating_limit_c is None else self.heating_limit_c


@dataclass(frozen=True)
class Building:
    """A cadaster entry: footprint, annual heat demand and current technology."""

    id: str
    footprint: tuple[Point, ...]
    annual_heat_kwh: float
    heating_tech: str = "unknown"

    def __post_init__(self):
        if len(self.footprint) < 3:
            raise ValueError(f"building {self.id}: footprint needs >= 3 vertices")
        if not polygon_is_simple(self.footprint):
            raise ValueError(f"building {self.id}: footprint must be a simple polygon")
        if not math.isfinite(self.annual_heat_kwh) or self.annual_heat_kwh < 0:
            raise ValueError(f"building {self.id}: annual demand must be finite and >= 0")


@dataclass(frozen=True)
class DailyDemandSeries:
    """Daily heat demand in kWh aligned one-to-one with a weather series."""

    weather: WeatherSeries
    values_kwh: tuple[float, ...]

    def __post_init__(self):
        if len(self.values_kwh) != len(self.weather):
            raise ValueError("demand series must align with the weather series")
        if any(v < 0 or not math.isfinite(v) for v in self.values_kwh):
            raise ValueError("daily demands must be finite and >= 0")

    def total_kwh(self) -> float:
        return math.fsum(self.values_kwh)

    def peak_kw(self) -> float:
        """Largest daily demand expressed as an average power over the day."""
        return max(self.values_kwh) / HOURS_PER_DAY


def heat_flow(model: HeatTransferModel, outdoor_temp_c: float) -> float:
    """Instantaneous heating power in kW at one outdoor temperature.

    Zero whenever the outside is at or above the heating limit; otherwise
    proportional to the gap below the inner set temperature.
    """
    if outdoor_temp_c > model.limit_c:
        return 0.0
    return model.loss_kw_per_k * max(model.inner_temp_c - outdoor_temp_c, 0.0)


def _heating_weights(
    inner_temp_c: float, weather: WeatherSeries, heating_limit_c: float | None
) -> list[float]:
    limit = inner_temp_c if heating_limit_c is None else heating_limit_c
    return [
        max(inner_temp_c - t, 0.0) if t <= limit else 0.0 for t in weather.temperatures
    ]


def fit_loss_coefficient(
    annual_kwh: float,
    weather: WeatherSeries,
    inner_temp_c: float = DEFAULT_INNER_TEMP_C,
    heating_limit_c: float | None = None,
) -> float:
    """Loss coefficient in kW/K that reproduces ``annual_kwh`` over ``weather``.

    The annual energy is divided by the degree hours of the series, i.e. 24 h
    times the sum of positive gaps between inner and outdoor temperature.  A
    zero annual demand fits a zero coefficient on any weather; a positive
    demand over a series without a single heating day has no finite answer and
    raises :class:`DegenerateWeather`.
    """
    if not math.isfinite(annual_kwh) or annual_kwh < 0:
        raise ValueError("annual demand must be finite and >= 0")
    degree_hours = HOURS_PER_DAY * math.fsum(
        _heating_weights(inner_temp_c, weather, heating_limit_c)
    )
    if degree_hours == 0.0:
        if annual_kwh == 0.0:
            return 0.0
        raise DegenerateWeather(
            f"no heating day in a {len(weather)}-day series, cannot fit {annual_kwh} kWh"
        )
    return annual_kwh / degree_hours


def disaggregate_daily(
    annual_kwh: float,
    weather: WeatherSeries,
    inner_temp_c: float = DEFAULT_INNER_TEMP_C,
    heating_limit_c: float | None = None,
) -> DailyDemandSeries:
    """Split an annual demand over the days of ``weather``.

    Each day receives the share of its degree-day weight in the series total,
    so the daily values add up to the annual figure again.  Days at or above
    the heating limit get exactly zero.
    """
    if not math.isfinite(annual_kwh) or annual_kwh < 0:
        raise ValueError("annual demand must be finite and >= 0")
    weights = _heating_weights(inner_temp_c, weather, heating_limit_c)
    total = math.fsum(weights)
    if total == 0.0:
        if annual_kwh == 0.0:
            return DailyDemandSeries(weather, tuple(0.0 for _ in weights))
        raise DegenerateWeather(
            f"no heating day in a {len(weather)}-day series, cannot split {annual_kwh} kWh"
        )
    values = tuple(annual_kwh * w / total for w in weights)
    return DailyDemandSeries(weather, values)


@dataclass(frozen=True)
class CadasterEntry:
    """Fitted model and daily series of one building."""

    building: Building
    model: HeatTransferModel
    daily: DailyDemandSeries


@dataclass
class Cadaster:
    """Per-building demand models plus the issues met while building them.

    Buildings whose demand cannot be reconciled with the weather (positive
    annual figure, no heating day) are reported in ``issues`` and skipped, not
    silently dropped.
    """

    entries: dict[str, CadasterEntry] = field(default_factory=dict)
    issues: list[DegenerateWeather] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)


def build_cadaster(
    buildings,
    weather: WeatherSeries,
    inner_temp_c: float = DEFAULT_INNER_TEMP_C,
    heating_limit_c: float | None = None,
) -> Cadaster:
    """Fit a loss model and daily series for every building.

    Building ids must be unique.  An empty building list yields an empty
    cadaster on any weather.
    """
    cadaster = Cadaster()
    seen = set()
    for building in buildings:
        if building.id in seen:
            raise ValueError(f"duplicate building id {building.id!r}")
        seen.add(building.id)
        try:
            coefficient = fit_loss_coefficient(
                building.annual_heat_kwh, weather, inner_temp_c, heating_limit_c
            )
            daily = disaggregate_daily(
                building.annual_heat_kwh, weather, inner_temp_c, heating_limit_c
            )
        except DegenerateWeather as exc:
            issue = DegenerateWeather(
                f"building {building.id}: {exc}", building_id=building.id
            )
            cadaster.issues.append(issue)
            continue
        model = HeatTransferModel(coefficient, inner_temp_c, heating_limit_c)
        cadaster.entries[building.id] = CadasterEntry(building, model, daily)
    return cadaster
