import json

import numpy as np
import pytest

from ecpr.core import (RANGE_SET, ConfigError, NeighborObservation, ScenarioConfig, SimConfig,
                       assign_context_profile, clamp_cbr)


def test_profile_test1_uniform():
    assert assign_context_profile("Test1", 3, 42) == [(90.0, 10.0)] * 3


def test_profile_test3_ranges_from_set():
    ranges = {r for r, _ in assign_context_profile("Test3", 500, 7)}
    assert ranges <= set(RANGE_SET)
    assert len(ranges) == len(RANGE_SET)


def test_profile_test2_rate_mean():
    rates = [t for _, t in assign_context_profile("Test2", 1000, 3)]
    assert 7.25 <= np.mean(rates) <= 7.75
    assert all(5.0 <= t <= 10.0 for t in rates)


def test_profile_integer_rates():
    rates = [t for _, t in assign_context_profile("Test4", 200, 1, integer_rates=True)]
    assert all(float(t).is_integer() and 5 <= t <= 10 for t in rates)


def test_profile_custom_and_errors():
    assert assign_context_profile("Custom", 2, 0, custom=(150, 8)) == [(150.0, 8.0)] * 2
    with pytest.raises(ConfigError):
        assign_context_profile("Test9", 2, 0)
    with pytest.raises(ConfigError):
        assign_context_profile("Test1", 0, 0)


def test_profile_deterministic():
    assert assign_context_profile("Test4", 50, 11) == assign_context_profile("Test4", 50, 11)


@pytest.mark.parametrize("x,want", [(-0.2, 0.0), (0.3, 0.3), (1.7, 1.0)])
def test_clamp_cbr(x, want):
    assert clamp_cbr(x) == want


def test_observation_invariants():
    with pytest.raises(ValueError):
        NeighborObservation(1, 0, 23.0, -60.0, 0.0)
    with pytest.raises(ValueError):
        NeighborObservation(1, 0, 10.0, 12.0, 5.0)


def test_config_defaults_and_derived():
    cfg = SimConfig()
    assert cfg.capacity_bytes == pytest.approx(150_000)
    assert cfg.steps_per_second == 5
    assert cfg.wavelength == pytest.approx(0.0508, abs=1e-4)
    assert cfg.effective_gain == pytest.approx(2500)
    assert cfg.replace(limeric_gain=1.0).effective_gain == 1.0


@pytest.mark.parametrize("bad", [
    {"power_bounds": (23, 0)},
    {"default_tx_power": 30},
    {"cbr_threshold": 1.2},
    {"control_step": 0.3},
    {"rate_mode": "other"},
    {"test_profile": "Nope"},
    {"rate_bounds": (0, 10)},
])
def test_config_rejects(bad):
    with pytest.raises(ConfigError):
        SimConfig().replace(**bad)


def test_scenario_rejects():
    with pytest.raises(ConfigError):
        ScenarioConfig(mobility="teleport")
    with pytest.raises(ConfigError):
        ScenarioConfig(mobility="trace")
    with pytest.raises(ConfigError):
        ScenarioConfig(algorithm="magic")


def test_config_roundtrip_and_digest():
    cfg = SimConfig().replace(rng_seed=5, **{"scenario.duration": 12.0})
    again = SimConfig.from_json(cfg.to_json())
    assert again == cfg
    assert again.digest() == cfg.digest()
    assert cfg.replace(rng_seed=6).digest() != cfg.digest()


@pytest.mark.parametrize("data,key", [
    ({"bogus": 1}, "bogus"),
    ({"scenario": {"colour": "red"}}, "colour"),
    ({"propagation": {"ple": {}}}, "ple"),
])
def test_unknown_keys_named(data, key):
    with pytest.raises(ConfigError, match=key):
        SimConfig.from_dict(data)


def test_bad_propagation_reported():
    data = json.loads(SimConfig().to_json())
    data["propagation"]["ple_by_class"]["LOS"] = 0.5
    with pytest.raises(ConfigError, match="propagation"):
        SimConfig.from_dict(data)
