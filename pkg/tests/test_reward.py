import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sbsim.hvac import DevicePower
from sbsim.reward import (AirQualityParams, ComfortParams, OccupancyModel, OccupancySimulator,
                          RewardConfigError, RewardWeights, TariffAndEmissions,
                          air_quality_reward, building_comfort, carbon_cost, comfort_loss,
                          energy_cost, min_outside_airflow, reward_3c, simulate_day,
                          simulate_occupancy)

MONDAY = dt.date(2023, 7, 10)


def power(frac_e=0.5, frac_g=0.25):
    return DevicePower(blower=1000 * frac_e, refrigeration=4000 * frac_e, pump=500 * frac_e,
                       gas=20000 * frac_g, blower_max=1000, refrigeration_max=4000,
                       pump_max=500, gas_max=20000)


# ------------------------------------------------------------------ comfort

@pytest.mark.parametrize("T", [19.0, 25.0])
def test_comfort_half_at_offset(T):
    p = ComfortParams(stiffness=4.0, offset=1.0)
    assert comfort_loss(T, 20.0, 24.0, 1, p) == pytest.approx(0.5)


@given(st.floats(20.0, 24.0))
def test_comfort_zero_inside_band(T):
    assert comfort_loss(T, 20.0, 24.0, 3, ComfortParams()) == 0.0


@given(st.floats(-30, 60))
def test_comfort_zero_when_unoccupied(T):
    assert comfort_loss(T, 20.0, 24.0, 0, ComfortParams()) == 0.0


@given(st.floats(0.01, 15.0), st.floats(0.5, 8.0), st.floats(0.2, 3.0))
def test_comfort_is_logistic(dev, lam, off):
    # 1 / (1 + exp(-lam (d - off)))
    want = 1.0 / (1.0 + math.exp(-lam * (dev - off)))
    got = comfort_loss(24.0 + dev, 20.0, 24.0, 1, ComfortParams(lam, off))
    assert got == pytest.approx(want, rel=1e-12)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=20))
def test_building_comfort_is_negative_mean(losses):
    assert building_comfort(losses) == pytest.approx(-np.mean(losses))


def test_comfort_params_validation():
    with pytest.raises(RewardConfigError):
        ComfortParams(stiffness=0.0)


# ------------------------------------------------------------------ cost, carbon

def test_energy_cost_normalised():
    p = power(0.5, 0.25)
    # (0.12 * 2750 + 0.04 * 5000) / (0.12 * 5500 + 0.04 * 20000)
    assert energy_cost(p, 0.12, 0.04) == pytest.approx(-(330 + 200) / (660 + 800))
    assert energy_cost(power(1, 1), 0.12, 0.04) == pytest.approx(-1.0)
    assert energy_cost(power(0, 0), 0.12, 0.04) == 0.0


@given(st.floats(1e-3, 1e3), st.floats(0.01, 1), st.floats(0.01, 1))
def test_cost_invariant_to_price_scale(a, pe, pg):
    p = power(0.3, 0.7)
    assert energy_cost(p, a * pe, a * pg) == pytest.approx(energy_cost(p, pe, pg), rel=1e-12)


def test_zero_price_raises():
    with pytest.raises(RewardConfigError):
        carbon_cost(power(), 0.0, 0.0)


# ------------------------------------------------------------------ air quality

def test_minimum_outside_air_office():
    assert min_outside_airflow(10, 1000.0, AirQualityParams()) == pytest.approx(110.0)


def test_air_quality_half_at_minimum():
    assert air_quality_reward(110.0, 110.0, 0.5) == pytest.approx(0.5)
    assert air_quality_reward(500.0, 110.0, 0.5) > 0.99


# ------------------------------------------------------------------ 3C reward

@settings(max_examples=300)
@given(st.floats(-1, 0), st.floats(-1, 0), st.floats(-1, 0), st.floats(0, 1),
       st.floats(0, 5), st.floats(0, 5), st.floats(0, 5), st.floats(0, 5))
def test_reward_bounded(c1, c2, c3, aq, u, v, w, q):
    if u + v + w + q == 0:
        return
    r = reward_3c(c1, c2, c3, RewardWeights(u, v, w, q), aq)
    assert -1.0 - 1e-12 <= r <= 1e-12


def test_reward_weights():
    assert reward_3c(-1.0, 0.0, 0.0, RewardWeights(3, 1, 0)) == pytest.approx(-0.75)
    n = RewardWeights(2, 1, 1).normalized()
    assert (n.u, n.v, n.w) == pytest.approx((0.5, 0.25, 0.25))
    with pytest.raises(RewardConfigError):
        RewardWeights(0, 0, 0)
    with pytest.raises(RewardConfigError):
        RewardWeights(-1, 1, 1)


# ------------------------------------------------------------------ tariff

def test_tariff_timeseries(tmp_path):
    path = tmp_path / "tariff.csv"
    path.write_text("timestamp,p_e,p_g,r_e,r_g\n"
                    "2023-07-10T12:00:00Z,0.30,0.05,0.5,0.18\n"
                    "2023-07-10T00:00:00Z,0.10,0.05,0.4,0.18\n")
    t = TariffAndEmissions.from_csv(path)
    noon = dt.datetime(2023, 7, 10, 12, tzinfo=dt.timezone.utc).timestamp()
    assert t.at(noon - 1)[0] == 0.10
    assert t.at(noon)[0] == 0.30
    assert t.at(noon - 86400)[0] == 0.10
    path.write_text("timestamp,p_e,p_g,r_e,r_g\n2023-07-10T00:00:00Z,0.1,0.05,0.4,0.18\n"
                    "2023-07-10T01:00:00Z,0.1,0.05,0.4,0.20\n")
    with pytest.raises(RewardConfigError, match="r_g"):
        TariffAndEmissions.from_csv(path)


# ------------------------------------------------------------------ occupancy

def test_no_occupancy_on_weekends_and_holidays():
    m = OccupancyModel(holidays=("2023-07-12",))
    rng = np.random.default_rng(0)
    for day in (dt.date(2023, 7, 15), dt.date(2023, 7, 16), dt.date(2023, 7, 12)):
        assert not simulate_day(m, 10, day, 300.0, rng).headcount.any()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 30))
def test_headcount_bounded_and_conserved(seed, k):
    day = simulate_day(OccupancyModel(), k, MONDAY, 300.0, np.random.default_rng(seed))
    assert day.headcount.min() >= 0
    assert day.headcount.max() <= k
    assert day.headcount[0] == 0
    assert (day.arrival_step < day.departure_step).all()
    # person-steps equal the summed stays
    assert day.headcount.sum() == pytest.approx((day.departure_step - day.arrival_step).sum())


def test_mean_arrival_near_window_midpoint():
    m = OccupancyModel()
    rng = np.random.default_rng(1)
    arrivals = np.concatenate([simulate_day(m, 10, MONDAY, 300.0, rng).arrival_times()
                               for _ in range(300)])
    assert abs(arrivals.mean() / 3600 - 8.0) < 0.1


def test_occupancy_simulator_is_seeded():
    m = OccupancyModel()
    t = dt.datetime(2023, 7, 10, 12, tzinfo=dt.timezone.utc).timestamp()
    a = OccupancySimulator(m, ["a", "b"], 300.0, np.random.default_rng(3)).at(t)
    b = OccupancySimulator(m, ["a", "b"], 300.0, np.random.default_rng(3)).at(t)
    np.testing.assert_array_equal(a, b)
    assert simulate_occupancy(m, "a", t, 300.0, np.random.default_rng(3)) == a[0]


def test_per_zone_maximum():
    m = OccupancyModel(per_zone_max={"big": 40})
    assert m.k_max("big") == 40 and m.k_max("other") == 10
    with pytest.raises(RewardConfigError):
        OccupancyModel(arrival_window=(9.0, 8.0))
