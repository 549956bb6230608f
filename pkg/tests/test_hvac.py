import numpy as np
import pytest
from hypothesis import given, strategies as st

from sbsim.hvac import (C_AIR, KG_S_TO_CFM, AHUConfig, BoilerConfig, ChillerConfig, PlantConfig,
                        PlantConfigError, SetpointBounds, SetpointVector, VAVArrays, VAVConfig,
                        ZoneSetpoints, ahu_update, boiler_update, chiller_update, plant_step,
                        vav_update)

VAV = VAVConfig(min_airflow=0.1, max_airflow=0.5, reheat_capacity=4000.0,
                discharge_cap=35.0, proportional_band=2.0)


def test_deadband_is_minimum_flow_without_reheat():
    r = vav_update(22.0, 20.0, 24.0, 13.0, 60.0, VAV)
    assert r.airflow == pytest.approx(0.1)
    assert r.reheat_power == 0
    assert r.discharge_temp == 13.0
    assert r.q_zone == pytest.approx(0.1 * C_AIR * (13.0 - 22.0))


@pytest.mark.parametrize("T_z, flow", [(24.0, 0.1), (25.0, 0.3), (26.0, 0.5), (30.0, 0.5)])
def test_cooling_ramp(T_z, flow):
    assert vav_update(T_z, 20.0, 24.0, 13.0, 60.0, VAV).airflow == pytest.approx(flow)


def test_reheat_proportional_to_heating_error():
    half = vav_update(19.0, 20.0, 24.0, 13.0, 60.0, VAV)
    # half the band: lift towards the 35 C cap, halved
    assert half.discharge_temp == pytest.approx(13.0 + 0.5 * (35.0 - 13.0))
    assert half.reheat_power == pytest.approx(0.1 * C_AIR * 11.0)


def test_reheat_limited_by_water_and_capacity():
    cool_water = vav_update(10.0, 20.0, 24.0, 13.0, 25.0, VAV)
    assert cool_water.discharge_temp == pytest.approx(25.0)
    small = VAVConfig(0.1, 0.5, 500.0, 35.0, 2.0)
    r = vav_update(10.0, 20.0, 24.0, 13.0, 60.0, small)
    assert r.reheat_power == 500.0
    assert r.discharge_temp == pytest.approx(13.0 + 500.0 / (0.1 * C_AIR))


@given(st.floats(-20, 60), st.floats(10, 20), st.floats(20, 90))
def test_vav_outputs_stay_in_range(T_z, T_s, T_b):
    r = vav_update(T_z, 20.0, 24.0, T_s, T_b, VAV)
    assert VAV.min_airflow <= r.airflow <= VAV.max_airflow
    assert 0 <= r.reheat_power <= VAV.reheat_capacity
    assert T_s <= r.discharge_temp <= max(T_s, VAV.discharge_cap) + 1e-9


def test_vav_vectorised_matches_scalar():
    cfgs = [VAV, VAVConfig(0.05, 0.2, 1000.0, 30.0, 1.0)]
    arr = VAVArrays.from_configs(cfgs)
    T = np.array([18.5, 24.7])
    r = vav_update(T, np.array([20.0, 20.0]), np.array([24.0, 24.0]), 13.0, 60.0, arr)
    for i, cfg in enumerate(cfgs):
        s = vav_update(T[i], 20.0, 24.0, 13.0, 60.0, cfg)
        assert r.airflow[i] == pytest.approx(s.airflow)
        assert r.q_zone[i] == pytest.approx(s.q_zone)


def test_ahu_fan_law_and_outside_air():
    cfg = AHUConfig(rated_fan_power=8000.0, rated_airflow=4.0, recirculation_fraction=0.75)
    r = ahu_update(2.0, 13.0, 30.0, 0.75, cfg, T_return=22.0)
    assert r.fan_power == pytest.approx(1000.0)
    assert r.mixed_air_temp == pytest.approx(0.75 * 22.0 + 0.25 * 30.0)
    assert r.conditioning_load == pytest.approx(2.0 * C_AIR * (13.0 - 24.0))
    assert r.outside_airflow_cfm == pytest.approx(0.5 * KG_S_TO_CFM)
    assert ahu_update(10.0, 13.0, 30.0, 0.75, cfg).fan_power == 8000.0
    with pytest.raises(PlantConfigError):
        ahu_update(-1.0, 13.0, 30.0, 0.75, cfg)


def test_boiler_and_chiller():
    b = BoilerConfig(max_gas_power=1000.0, efficiency=0.8, rated_pump_power=100.0,
                     standby_fraction=0.2)
    assert boiler_update(400.0, 60.0, b) == pytest.approx((500.0, 100.0, 0.0))
    gas, pump, unmet = boiler_update(2000.0, 60.0, b)
    assert (gas, unmet) == pytest.approx((1000.0, 1200.0))
    assert boiler_update(0.0, 60.0, b)[1] == pytest.approx(20.0)
    c = ChillerConfig(max_power=100.0, cop=4.0)
    assert chiller_update(200.0, c) == pytest.approx((50.0, 0.0))
    assert chiller_update(1000.0, c) == pytest.approx((100.0, 600.0))
    assert chiller_update(-5.0, c) == (0.0, 0.0)


def test_setpoint_clamping():
    v, clamped = SetpointVector(100.0, 5.0).clamp(SetpointBounds())
    assert v == SetpointVector(90.0, 10.0)
    assert clamped == ["supply_water_temp", "supply_air_temp"]
    assert SetpointVector(50.0, 15.0).clamp(SetpointBounds())[1] == []


def test_zone_setpoint_band():
    sp = ZoneSetpoints()
    assert sp.band(10.0, True) == (20.0, 24.0)
    assert sp.band(10.0, False) == (16.0, 28.0)
    assert sp.band(19.0, True) == (16.0, 28.0)
    with pytest.raises(PlantConfigError):
        ZoneSetpoints(heating=25.0, cooling=24.0)


@pytest.mark.parametrize("kwargs", [dict(min_airflow=1.0, max_airflow=0.5),
                                    dict(proportional_band=0.0)])
def test_vav_config_validation(kwargs):
    with pytest.raises(PlantConfigError):
        VAVConfig(**kwargs)


def test_plant_step_routes_loads():
    plant = PlantConfig(VAVArrays.from_configs([VAV, VAV]), AHUConfig(), BoilerConfig(),
                        ChillerConfig())
    out = plant_step(np.array([18.0, 26.0]), SetpointVector(60.0, 13.0),
                     np.array([20.0, 20.0]), np.array([24.0, 24.0]), 30.0, plant)
    assert out.vav.airflow.tolist() == pytest.approx([0.1, 0.5])
    # hot day: the air handler cools, the boiler only serves reheat
    assert out.ahu.conditioning_load < 0
    assert out.power.refrigeration > 0
    assert out.power.gas == pytest.approx(out.vav.reheat_power.sum() / 0.85)
    assert out.power.electrical == pytest.approx(out.power.blower + out.power.refrigeration
                                                 + out.power.pump)
    assert out.airflow.outside_air_fraction == pytest.approx(0.3)
