"""Named scenario presets.

``desk_urban`` is the calibrated urban grid used by the acceptance suite.
The library defaults model a sparse 1 km² grid in which 200 vehicles never
load the channel anywhere near the 0.6 busy-ratio target: even with every
vehicle hearing every other one, 200 x 10 Hz x 300 B only fills 80% of a
6 Mb/s channel.  The preset packs the same 200 vehicles into 500 m x 500 m,
uses milder non-line-of-sight exponents, and carries larger messages so that
the congested regime, where the controllers actually differ, is reached.
"""

from __future__ import annotations

from .core import SimConfig
from .propagation import PropagationParams

DESK_URBAN = {
    "msg_length": 1750,
    "limeric_gain": 3000.0,
    "eq3_margin_db": 3.0,
    "scenario.area_size": 500.0,
    "scenario.street_spacing": 125.0,
    "scenario.vehicle_count": 200,
}

DESK_URBAN_PLE = {"LOS": 2.0, "NLOS_building": 2.3, "NLOS_vehicle": 2.1}


def desk_urban(**overrides) -> SimConfig:
    """The calibrated urban preset, with ``SimConfig.replace`` style overrides."""
    base = SimConfig(propagation=PropagationParams(ple_by_class=dict(DESK_URBAN_PLE)))
    return base.replace(**{**DESK_URBAN, **overrides})


def awareness_focused(algorithm: str, **overrides) -> SimConfig:
    """Long target range with a low default power (150 m, 10 dBm)."""
    return desk_urban(**{"scenario.algorithm": algorithm, "test_profile": "Custom",
                         "target_range": 150.0, "default_tx_power": 10.0, **overrides})


def rate_focused(algorithm: str, **overrides) -> SimConfig:
    """Short target range with full default power (50 m, 23 dBm)."""
    return desk_urban(**{"scenario.algorithm": algorithm, "test_profile": "Custom",
                         "target_range": 50.0, "default_tx_power": 23.0, **overrides})


PRESETS = {"default": lambda **kw: SimConfig().replace(**kw), "desk_urban": desk_urban}
