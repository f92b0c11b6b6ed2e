import datetime as dt
import math

import numpy as np
import pytest

from megrid.heatdemand import (
    Building,
    DailyDemandSeries,
    DegenerateWeather,
    HeatTransferModel,
    WeatherSeries,
    build_cadaster,
    disaggregate_daily,
    fit_loss_coefficient,
    heat_flow,
)

from conftest import rect

START = dt.date(2023, 1, 1)


def weather(*temps):
    return WeatherSeries.from_temperatures(START, temps)


class TestWeatherSeries:
    def test_strictly_increasing_dates(self):
        with pytest.raises(ValueError):
            WeatherSeries(((START, 5.0), (START, 6.0)))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            WeatherSeries(())

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            weather(3.0, float("nan"))

    def test_accessors(self):
        w = weather(1.0, 2.0)
        assert len(w) == 2
        assert w.temperatures == (1.0, 2.0)
        assert w.dates == (START, dt.date(2023, 1, 2))


class TestHeatFlow:
    def test_zero_gap(self):
        assert heat_flow(HeatTransferModel(1.0), 20.0) == 0.0

    def test_direct_evaluation(self):
        assert heat_flow(HeatTransferModel(2.0), 5.0) == 30.0

    def test_clamped_above_inner(self):
        assert heat_flow(HeatTransferModel(1.0), 25.0) == 0.0

    def test_heating_limit_cuts_off_between_limit_and_inner(self):
        model = HeatTransferModel(1.0, inner_temp_c=20.0, heating_limit_c=15.0)
        assert heat_flow(model, 16.0) == 0.0
        assert heat_flow(model, 15.0) == 5.0

    def test_negative_coefficient_rejected(self):
        with pytest.raises(ValueError):
            HeatTransferModel(-1.0)


class TestFitLossCoefficient:
    def test_constant_year(self):
        w = WeatherSeries.from_temperatures(START, [10.0] * 365)
        assert fit_loss_coefficient(87600.0, w) == pytest.approx(1.0, rel=1e-12)

    def test_zero_demand(self):
        assert fit_loss_coefficient(0.0, weather(10.0)) == 0.0

    def test_zero_demand_without_heating_days(self):
        assert fit_loss_coefficient(0.0, weather(25.0)) == 0.0

    def test_degenerate_weather(self):
        with pytest.raises(DegenerateWeather):
            fit_loss_coefficient(100.0, weather(25.0, 30.0))

    def test_negative_demand_rejected(self):
        with pytest.raises(ValueError):
            fit_loss_coefficient(-1.0, weather(10.0))

    def test_round_trip_random(self):
        rng = np.random.default_rng(1234)
        for _ in range(100):
            n = int(rng.integers(30, 365))
            temps = rng.uniform(-15.0, 19.0, n)
            c_true = float(rng.uniform(0.05, 8.0))
            model = HeatTransferModel(c_true)
            daily = [24.0 * heat_flow(model, t) for t in temps]
            annual = math.fsum(daily)
            w = WeatherSeries.from_temperatures(START, temps)
            c_fit = fit_loss_coefficient(annual, w)
            assert abs(c_fit - c_true) / c_true < 1e-9


class TestDisaggregateDaily:
    def test_weighted_split(self):
        series = disaggregate_daily(300.0, weather(10.0, 15.0, 20.0))
        assert series.values_kwh == (200.0, 100.0, 0.0)

    def test_uniform_split(self):
        series = disaggregate_daily(100.0, weather(*([10.0] * 8)))
        assert all(v == pytest.approx(12.5) for v in series.values_kwh)

    def test_conservation_random(self):
        rng = np.random.default_rng(99)
        for _ in range(200):
            n = int(rng.integers(5, 400))
            temps = rng.uniform(-20.0, 35.0, n)
            if not any(t < 20.0 for t in temps):
                temps[0] = 0.0
            annual = float(rng.uniform(0.0, 50000.0))
            series = disaggregate_daily(annual, WeatherSeries.from_temperatures(START, temps))
            assert series.total_kwh() == pytest.approx(annual, rel=1e-9, abs=1e-9)
            assert all(v >= 0.0 for v in series.values_kwh)

    def test_colder_day_not_smaller(self):
        series = disaggregate_daily(500.0, weather(-5.0, 0.0, 5.0, 10.0, 19.0))
        values = series.values_kwh
        assert all(values[i] >= values[i + 1] for i in range(len(values) - 1))

    def test_degenerate_weather(self):
        with pytest.raises(DegenerateWeather):
            disaggregate_daily(10.0, weather(25.0))

    def test_zero_demand_all_zero(self):
        series = disaggregate_daily(0.0, weather(25.0, 30.0))
        assert set(series.values_kwh) == {0.0}

    def test_alignment_enforced(self):
        with pytest.raises(ValueError):
            DailyDemandSeries(weather(1.0, 2.0), (3.0,))


class TestBuilding:
    def test_simple_polygon_required(self):
        with pytest.raises(ValueError):
            Building("x", ((0.0, 0.0), (1.0, 0.0)), 10.0)

    def test_self_intersecting_rejected(self):
        bowtie = ((0.0, 0.0), (2.0, 2.0), (2.0, 0.0), (0.0, 2.0))
        with pytest.raises(ValueError):
            Building("x", bowtie, 10.0)

    def test_negative_demand_rejected(self):
        with pytest.raises(ValueError):
            Building("x", rect(0, 0, 1, 1), -5.0)


class TestBuildCadaster:
    def test_empty(self):
        cadaster = build_cadaster([], weather(10.0))
        assert cadaster.entries == {} and cadaster.issues == []

    def test_single_building_constant_year(self):
        w = WeatherSeries.from_temperatures(START, [10.0] * 365)
        building = Building("b1", rect(0, 0, 10, 10), 87600.0)
        cadaster = build_cadaster([building], w)
        entry = cadaster.entries["b1"]
        assert entry.model.loss_kw_per_k == pytest.approx(1.0, rel=1e-12)
        assert all(v == pytest.approx(240.0) for v in entry.daily.values_kwh)
        assert entry.daily.peak_kw() == pytest.approx(10.0)

    def test_identical_buildings_identical_outputs(self):
        w = weather(0.0, 10.0)
        a = Building("a", rect(0, 0, 5, 5), 4000.0)
        b = Building("b", rect(50, 50, 55, 55), 4000.0)
        cadaster = build_cadaster([a, b], w)
        assert (
            cadaster.entries["a"].daily.values_kwh
            == cadaster.entries["b"].daily.values_kwh
        )
        assert (
            cadaster.entries["a"].model.loss_kw_per_k
            == cadaster.entries["b"].model.loss_kw_per_k
        )

    def test_degenerate_building_reported_not_dropped(self):
        w = weather(25.0, 30.0)
        good = Building("ok", rect(0, 0, 5, 5), 0.0)
        bad = Building("warm", rect(10, 10, 15, 15), 500.0)
        cadaster = build_cadaster([good, bad], w)
        assert "ok" in cadaster.entries
        assert "warm" not in cadaster.entries
        assert [issue.building_id for issue in cadaster.issues] == ["warm"]

    def test_duplicate_ids_rejected(self):
        w = weather(10.0)
        b = Building("dup", rect(0, 0, 1, 1), 10.0)
        with pytest.raises(ValueError):
            build_cadaster([b, b], w)
