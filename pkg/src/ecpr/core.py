"""Domain types, simulation configuration and application-context profiles."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .propagation import PropagationParams


class ConfigError(ValueError):
    pass


PROFILES = ("Test1", "Test2", "Test3", "Test4", "Custom")
ALGORITHMS = ("ecpr", "rate_only", "power_only", "none")
RANGE_SET = (30.0, 60.0, 90.0, 120.0, 150.0, 180.0)


def clamp_cbr(x: float) -> float:
    return min(1.0, max(0.0, float(x)))


@dataclass(frozen=True)
class NeighborObservation:
    """Metadata of one message received from a neighbor."""

    sender_id: int
    msg_index: int
    tx_power: float
    rx_power: float
    distance: float
    rx_time: float = 0.0
    msg_length: int = 300

    def __post_init__(self):
        if not self.distance > 0:
            raise ValueError("zero-distance observation")
        if self.rx_power > self.tx_power:
            raise ValueError("received power above transmit power")


@dataclass
class VehicleState:
    id: int
    position: tuple[float, float]
    speed: float = 0.0
    heading: float = 0.0
    tx_power: float = 23.0
    msg_rate: float = 10.0
    target_rate: float = 10.0
    target_range: float = 90.0
    target_awareness: float = 0.85
    controller_state: Any = None


@dataclass(frozen=True)
class ScenarioConfig:
    mobility: str = "urban_grid"
    vehicle_count: int = 200
    duration: float = 100.0
    algorithm: str = "ecpr"
    trace_path: str | None = None
    buildings_path: str | None = None
    area_size: float = 1000.0
    street_spacing: float = 100.0
    street_width: float = 20.0
    lanes_per_direction: int = 2
    lane_width: float = 3.5
    turn_probability: float = 0.3
    highway_lanes_per_direction: int = 3

    def __post_init__(self):
        if self.mobility not in ("urban_grid", "highway_strip", "trace"):
            raise ConfigError(f"unknown mobility source {self.mobility!r}")
        if self.mobility == "trace" and not self.trace_path:
            raise ConfigError("mobility 'trace' needs trace_path")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if self.vehicle_count <= 0 or self.duration <= 0:
            raise ConfigError("vehicle_count and duration must be positive")


@dataclass(frozen=True)
class SimConfig:
    control_step: float = 0.2
    cbr_threshold: float = 0.6
    cbr_tolerance: float = 0.05
    default_tx_power: float = 23.0
    power_bounds: tuple[float, float] = (0.0, 23.0)
    rate_bounds: tuple[float, float] = (1.0, 10.0)
    range_bounds: tuple[float, float] = (20.0, 500.0)
    carrier_sense_threshold: float = -90.0
    rx_sensitivity: float = -90.0
    data_rate: float = 6e6
    msg_length: int = 300
    limeric_a: float = 0.1
    limeric_b: float = 1 / 150
    limeric_X: float = 1.5
    limeric_gain: float | None = None
    rate_mode: str = "paper_literal"
    gamma: float = 1.0
    enar_error_bound: float = 0.10
    awareness_target: float = 0.85
    eq3_floor: str = "sensitivity"
    eq3_margin_db: float = 0.0
    collisions_enabled: bool = False
    vehicle_radius: float = 2.5
    rng_seed: int = 0
    test_profile: str = "Test1"
    integer_rates: bool = False
    target_range: float = 90.0
    target_rate: float = 10.0
    metric_range: float | None = None
    warmup: float = 10.0
    propagation: PropagationParams = field(default_factory=PropagationParams)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)

    def __post_init__(self):
        for name in ("power_bounds", "rate_bounds", "range_bounds"):
            lo, hi = getattr(self, name)
            object.__setattr__(self, name, (float(lo), float(hi)))
            if lo > hi:
                raise ConfigError(f"{name}: min exceeds max")
        if not 0 < self.cbr_threshold < 1:
            raise ConfigError("cbr_threshold must lie in (0, 1)")
        lo, hi = self.power_bounds
        if not lo <= self.default_tx_power <= hi:
            raise ConfigError("default_tx_power outside power_bounds")
        if self.control_step <= 0 or self.msg_length <= 0 or self.data_rate <= 0:
            raise ConfigError("control_step, msg_length and data_rate must be positive")
        if self.rate_mode not in ("paper_literal", "classic_rg"):
            raise ConfigError(f"unknown rate_mode {self.rate_mode!r}")
        if self.eq3_floor not in ("mean_rx", "sensitivity"):
            raise ConfigError(f"unknown eq3_floor {self.eq3_floor!r}")
        if self.test_profile not in PROFILES:
            raise ConfigError(f"unknown test_profile {self.test_profile!r}")
        if not 0 < self.awareness_target <= 1:
            raise ConfigError("awareness_target must lie in (0, 1]")
        if self.rate_bounds[0] <= 0:
            raise ConfigError("rate_bounds minimum must be positive")
        steps = 1.0 / self.control_step
        if abs(steps - round(steps)) > 1e-9:
            raise ConfigError("control_step must divide one second")

    @property
    def wavelength(self) -> float:
        return self.propagation.wavelength

    @property
    def capacity_bytes(self) -> float:
        """Bytes the channel carries in one control step."""
        return self.data_rate * self.control_step / 8.0

    @property
    def effective_gain(self) -> float:
        """Rate-controller gain; by default the channel capacity in messages per second."""
        if self.limeric_gain is not None:
            return float(self.limeric_gain)
        return self.data_rate / (8.0 * self.msg_length)

    @property
    def steps_per_second(self) -> int:
        return int(round(1.0 / self.control_step))

    def replace(self, **changes) -> "SimConfig":
        scen = {k[len("scenario."):]: changes.pop(k) for k in list(changes) if k.startswith("scenario.")}
        cfg = dataclasses.replace(self, **changes)
        if scen:
            cfg = dataclasses.replace(cfg, scenario=dataclasses.replace(cfg.scenario, **scen))
        return cfg

    # -- external format ---------------------------------------------------

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "propagation":
                v = {"ple_by_class": dict(v.ple_by_class),
                     "fading_sigma_by_class": dict(v.fading_sigma_by_class),
                     "carrier_frequency": v.carrier_frequency}
            elif f.name == "scenario":
                v = dataclasses.asdict(v)
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        data = dict(data)
        _reject_unknown(data, {f.name for f in dataclasses.fields(cls)}, "config")
        if "propagation" in data:
            prop = dict(data["propagation"])
            _reject_unknown(prop, {f.name for f in dataclasses.fields(PropagationParams)}, "propagation")
            try:
                data["propagation"] = PropagationParams(**prop)
            except ValueError as exc:
                raise ConfigError(f"propagation: {exc}") from exc
        if "scenario" in data:
            scen = dict(data["scenario"])
            _reject_unknown(scen, {f.name for f in dataclasses.fields(ScenarioConfig)}, "scenario")
            data["scenario"] = ScenarioConfig(**scen)
        for name in ("power_bounds", "rate_bounds", "range_bounds"):
            if name in data:
                val = data[name]
                if not isinstance(val, (list, tuple)) or len(val) != 2:
                    raise ConfigError(f"{name} must be a [min, max] pair")
                data[name] = tuple(val)
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SimConfig":
        return cls.from_dict(json.loads(text))

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _reject_unknown(data: dict, known: set, where: str):
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def assign_context_profile(profile: str, vehicle_count: int, rng: np.random.Generator | int,
                           *, integer_rates: bool = False, custom: tuple[float, float] = (90.0, 10.0)
                           ) -> list[tuple[float, float]]:
    """Per-vehicle (target_range, target_rate) for one of the test profiles."""
    if vehicle_count <= 0:
        raise ConfigError("vehicle_count must be positive")
    if profile not in PROFILES:
        raise ConfigError(f"unknown test profile {profile!r}")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    n = vehicle_count
    ranges = np.full(n, 90.0)
    rates = np.full(n, 10.0)
    if profile in ("Test3", "Test4"):
        ranges = np.asarray(RANGE_SET)[rng.integers(0, len(RANGE_SET), size=n)]
    if profile in ("Test2", "Test4"):
        if integer_rates:
            rates = rng.integers(5, 11, size=n).astype(float)
        else:
            rates = rng.uniform(5.0, 10.0, size=n)
    if profile == "Custom":
        ranges = np.full(n, float(custom[0]))
        rates = np.full(n, float(custom[1]))
    return [(float(r), float(t)) for r, t in zip(ranges, rates)]
