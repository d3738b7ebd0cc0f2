"""Discrete-time simulation loop.

Each control step: move vehicles, emit messages at the current rates,
classify and budget every link, decide receptions, measure CBR, then let
every controller decide the next power and rate from what it saw in this
step.  Decisions are committed together at the step boundary, so no vehicle
sees another's decision for the same step.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import rng as krng
from .channel import EventLog, hidden_node_ratios, mac_drop_probability
from .core import ConfigError, SimConfig, assign_context_profile
from .dcc import StepView, baseline_controllers, estimate_enar
from .geometry import BuildingSet, classify_all
from .metrics import StepMetrics, aggregate_step, awareness_all
from .propagation import link_matrices, radio_horizon

log = logging.getLogger(__name__)

TRACE_COLUMNS = ("time_s", "vehicle_id", "x_m", "y_m", "speed_mps", "heading_rad")


class SimulationError(RuntimeError):
    pass


@dataclass
class Trace:
    """Vehicle kinematics sampled at every control step.

    Arrays are (steps, vehicles); absent vehicles hold NaN positions.
    """

    dt: float
    xy: np.ndarray
    speed: np.ndarray
    heading: np.ndarray
    labels: list = field(default_factory=list)

    @property
    def present(self) -> np.ndarray:
        return ~np.isnan(self.xy[..., 0])

    @property
    def steps(self) -> int:
        return self.xy.shape[0]

    @property
    def vehicles(self) -> int:
        return self.xy.shape[1]


@dataclass
class Scenario:
    trace: Trace
    buildings: BuildingSet
    duration: float
    algorithm: str
    name: str = "custom"
    bbox: tuple[float, float, float, float] | None = None

    def __post_init__(self):
        if self.bbox is not None:
            x0, y0, x1, y1 = self.bbox
            xy = self.trace.xy[self.trace.present]
            if len(xy) and (xy[:, 0].min() < x0 or xy[:, 0].max() > x1
                            or xy[:, 1].min() < y0 or xy[:, 1].max() > y1):
                raise ConfigError("vehicle positions leave the scenario bounding box")


# ---------------------------------------------------------------------------
# synthetic mobility


def urban_buildings(area: float, spacing: float, street_width: float) -> BuildingSet:
    """Rectangular blocks filling the space between streets of a square grid."""
    centers = street_centers(area, spacing)
    edges = [0.0]
    for c in centers:
        edges += [c - street_width / 2, c + street_width / 2]
    edges.append(area)
    spans = [(edges[k], edges[k + 1]) for k in range(0, len(edges), 2) if edges[k + 1] - edges[k] > 1e-9]
    polys = []
    for x0, x1 in spans:
        for y0, y1 in spans:
            polys.append([(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)])
    return BuildingSet(polys)


def street_centers(area: float, spacing: float) -> np.ndarray:
    count = int(round(area / spacing))
    return spacing / 2 + spacing * np.arange(count)


def _lateral(axis, street, direction, lane, centers, lane_width):
    off = (lane + 0.5) * lane_width
    c = centers[street]
    # right-hand traffic
    return np.where(axis == 0, c - direction * off, c + direction * off)


def synth_mobility(kind: str, n: int, seed: int, duration: float, dt: float,
                   scenario=None) -> tuple[Trace, BuildingSet]:
    """Synthetic trace on a Manhattan grid or a straight highway, with wrap-around."""
    if n <= 0:
        raise ConfigError("need at least one vehicle")
    from .core import ScenarioConfig

    sc = scenario or ScenarioConfig(mobility=kind)
    gen = np.random.default_rng([seed, 0x5EED])
    steps = int(round(duration / dt))
    area = sc.area_size
    xy = np.empty((steps, n, 2))
    speed = np.empty((steps, n))
    heading = np.empty((steps, n))

    if kind == "highway_strip":
        lanes = sc.highway_lanes_per_direction
        direction = np.where(gen.random(n) < 0.5, 1.0, -1.0)
        lane = gen.integers(0, lanes, n)
        v = gen.uniform(25.0, 35.0, n)
        s = gen.uniform(0, area, n)
        y = area / 2 - direction * (lane + 0.5) * sc.lane_width
        for k in range(steps):
            xy[k, :, 0] = s
            xy[k, :, 1] = y
            speed[k] = v
            heading[k] = np.where(direction > 0, 0.0, math.pi)
            s = np.mod(s + direction * v * dt, area)
        return Trace(dt, xy, speed, heading), BuildingSet([])

    if kind != "urban_grid":
        raise ConfigError(f"unknown synthetic mobility {kind!r}")
    centers = street_centers(area, sc.street_spacing)
    m = len(centers)
    axis = gen.integers(0, 2, n)
    street = gen.integers(0, m, n)
    direction = np.where(gen.random(n) < 0.5, 1.0, -1.0)
    lane = gen.integers(0, sc.lanes_per_direction, n)
    v = gen.uniform(8.0, 14.0, n)
    s = gen.uniform(0, area, n)
    for k in range(steps):
        lat = _lateral(axis, street, direction, lane, centers, sc.lane_width)
        xy[k, :, 0] = np.where(axis == 0, s, lat)
        xy[k, :, 1] = np.where(axis == 0, lat, s)
        speed[k] = v
        heading[k] = np.where(axis == 0, np.where(direction > 0, 0.0, math.pi),
                              np.where(direction > 0, math.pi / 2, -math.pi / 2))
        s_new = s + direction * v * dt
        turn_draw = gen.random(n)
        dir_draw = np.where(gen.random(n) < 0.5, 1.0, -1.0)
        for i in range(n):
            lo, hi = sorted((s[i], s_new[i]))
            crossed = np.flatnonzero((centers > lo) & (centers <= hi))
            if len(crossed) and turn_draw[i] < sc.turn_probability:
                q = crossed[0] if direction[i] > 0 else crossed[-1]
                old_street = street[i]
                axis[i] = 1 - axis[i]
                street[i] = q
                direction[i] = dir_draw[i]
                s_new[i] = centers[old_street] + direction[i] * abs(s_new[i] - centers[q])
        s = np.mod(s_new, area)
    return Trace(dt, xy, speed, heading), urban_buildings(area, sc.street_spacing, sc.street_width)


# ---------------------------------------------------------------------------
# trace files


def load_trace(path, dt: float, duration: float | None = None) -> Trace:
    """Read a mobility CSV (``time_s,vehicle_id,x_m,y_m,speed_mps,heading_rad``)."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        missing = set(TRACE_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ConfigError(f"{path}: missing trace columns {sorted(missing)}")
        last_t = -math.inf
        for lineno, row in enumerate(reader, start=2):
            t = float(row["time_s"])
            if t < last_t:
                raise ConfigError(f"{path}:{lineno}: rows not sorted by time")
            last_t = t
            k = round(t / dt)
            if abs(k * dt - t) > 1e-6:
                raise ConfigError(f"{path}:{lineno}: time {t} is not a multiple of the control step")
            rows.append((k, row["vehicle_id"], float(row["x_m"]), float(row["y_m"]),
                         float(row["speed_mps"]), float(row["heading_rad"])))
    if not rows:
        raise ConfigError(f"{path}: empty trace")
    labels = sorted({r[1] for r in rows}, key=lambda s: (len(s), s))
    index = {lab: i for i, lab in enumerate(labels)}
    first = rows[0][0]
    steps = rows[-1][0] - first + 1
    if duration is not None:
        need = int(round(duration / dt))
        if steps < need:
            raise ConfigError(f"{path}: trace covers {steps * dt:.1f} s, shorter than duration {duration} s")
        steps = need
    xy = np.full((steps, len(labels), 2), np.nan)
    speed = np.full((steps, len(labels)), np.nan)
    heading = np.full((steps, len(labels)), np.nan)
    for k, lab, x, y, sp, hd in rows:
        k -= first
        if k >= steps:
            break
        i = index[lab]
        xy[k, i] = (x, y)
        speed[k, i] = sp
        heading[k, i] = hd
    return Trace(dt, xy, speed, heading, labels)


def write_trace(trace: Trace, path, header: str | None = None):
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(header + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for k in range(trace.steps):
            t = round(k * trace.dt, 9)
            for i in np.flatnonzero(trace.present[k]):
                w.writerow((repr(t), int(i), repr(float(trace.xy[k, i, 0])), repr(float(trace.xy[k, i, 1])),
                            repr(float(trace.speed[k, i])), repr(float(trace.heading[k, i]))))


def build_scenario(cfg: SimConfig) -> Scenario:
    sc = cfg.scenario
    if sc.mobility == "trace":
        trace = load_trace(sc.trace_path, cfg.control_step, sc.duration)
        bbox = None
    else:
        trace, _ = synth_mobility(sc.mobility, sc.vehicle_count, cfg.rng_seed, sc.duration,
                                  cfg.control_step, sc)
        bbox = (0.0, 0.0, sc.area_size, sc.area_size)
    if sc.buildings_path:
        from .io import ingest_buildings
        buildings = ingest_buildings(sc.buildings_path)
    elif sc.mobility == "urban_grid":
        buildings = urban_buildings(sc.area_size, sc.street_spacing, sc.street_width)
    else:
        buildings = BuildingSet([])
    return Scenario(trace, buildings, sc.duration, sc.algorithm, name=sc.mobility, bbox=bbox)


# ---------------------------------------------------------------------------
# main loop


@dataclass
class RunResult:
    algorithm: str
    metrics: list[StepMetrics]
    step_cbr: np.ndarray
    step_power: np.ndarray
    step_rate: np.ndarray
    power_range: tuple[float, float]
    rate_range: tuple[float, float]
    emitted: np.ndarray
    rate_integral: np.ndarray
    diagnostics: Counter

    def steady(self, warmup: float) -> list[StepMetrics]:
        return [m for m in self.metrics if m.second >= warmup]

    def summary(self, warmup: float) -> dict:
        rows = self.steady(warmup) or self.metrics
        out = {"algorithm": self.algorithm}
        for key in ("mean_nar", "mean_rnar", "mean_enar", "mean_rate", "mean_power", "cbr_mean",
                    "cbr_std", "hidden_node_ratio"):
            vals = np.array([getattr(m, key) for m in rows], dtype=float)
            out[key] = float(np.nanmean(vals)) if np.any(~np.isnan(vals)) else float("nan")
        return out


def _pairwise(xy):
    diff = xy[:, None, :] - xy[None, :, :]
    return np.hypot(diff[..., 0], diff[..., 1])


def simulate(scenario: Scenario, cfg: SimConfig, *, workers: int = 1, event_log=None,
             decision_log=None, result: dict | None = None) -> Iterator[StepMetrics]:
    """Yield one :class:`StepMetrics` per simulated second.

    ``result`` (if given) is filled with run-level arrays once the generator
    is exhausted.
    """
    trace = scenario.trace
    dt = cfg.control_step
    if abs(trace.dt - dt) > 1e-12:
        raise ConfigError("trace step differs from control_step")
    steps = int(round(scenario.duration / dt))
    if trace.steps < steps:
        raise ConfigError(f"trace has {trace.steps} steps, duration needs {steps}")
    n = trace.vehicles
    ids = np.arange(n)
    sps = cfg.steps_per_second
    seed = cfg.rng_seed
    present = trace.present

    contexts = assign_context_profile(cfg.test_profile, n, np.random.default_rng([seed, 0xC0DE]),
                                      integer_rates=cfg.integer_rates,
                                      custom=(cfg.target_range, cfg.target_rate))
    r_lo, r_hi = cfg.range_bounds
    target_range = np.clip([c[0] for c in contexts], r_lo, r_hi)
    target_rate = np.array([c[1] for c in contexts])
    ta = cfg.awareness_target
    metric_r = target_range if cfg.metric_range is None else np.full(n, float(cfg.metric_range))

    ctrl = baseline_controllers(scenario.algorithm, cfg)
    power = np.full(n, cfg.default_tx_power)
    rate = np.full(n, cfg.rate_bounds[1])
    credit = krng.keyed_uniform(seed, 7, ids) - 0.5
    prev_cbr = np.zeros(n)
    was_active = np.zeros(n, bool)

    # six sigma of fading on top of the usual 10 dB keeps pruning lossless in practice
    margin = max(10.0, 6.0 * max(cfg.propagation.fading_sigma_by_class.values()))
    horizon = radio_horizon(cfg.power_bounds[1], min(cfg.rx_sensitivity, cfg.carrier_sense_threshold),
                            cfg.propagation, margin)
    msg_bytes = float(cfg.msg_length)
    cap = cfg.capacity_bytes
    max_msgs = int(math.floor(cfg.rate_bounds[1] * dt + 0.5)) + 1

    step_cbr = np.full(steps, np.nan)
    step_power = np.full(steps, np.nan)
    step_rate = np.full(steps, np.nan)
    pmin = rmin = math.inf
    pmax = rmax = -math.inf
    emitted = np.zeros(n)
    rate_integral = np.zeros(n)

    # per-second accumulators
    heard_win = np.zeros((n, n), bool)
    acc = {k: np.zeros(n) for k in ("cbr", "power", "rate", "enar", "count", "enar_count")}

    for k in range(steps):
        active = present[k]
        entering = active & ~was_active
        for e in np.flatnonzero(entering):
            ctrl.reset(int(e))
            power[e], rate[e] = ctrl.initial(target_rate[e])
            prev_cbr[e] = 0.0
        was_active = active.copy()
        xy = np.where(active[:, None], trace.xy[k], np.nan)

        # emissions for this step
        credit = credit + np.where(active, rate * dt, 0.0)
        n_emit = np.floor(credit + 0.5 + 1e-9)
        credit -= n_emit
        n_emit[~active] = 0
        emitted += n_emit
        rate_integral += np.where(active, rate * dt, 0.0)

        dist = _pairwise(np.nan_to_num(xy))
        cls = classify_all(np.nan_to_num(xy), active, scenario.buildings, cfg.vehicle_radius, horizon, workers)
        _, _, rx = link_matrices(power, np.where(cls >= 0, dist, 1.0), cls, cfg.propagation, seed, k, ids)
        valid = cls >= 0
        if np.isnan(rx[valid]).any() or np.isnan(power[active]).any() or np.isnan(rate[active]).any():
            raise SimulationError(f"NaN encountered at step {k}")
        sensed = valid & (rx >= cfg.carrier_sense_threshold)
        decodable = valid & (rx >= cfg.rx_sensitivity)
        tx_mask = n_emit > 0

        # receptions, one boolean matrix per message slot
        candidates = decodable & tx_mask[:, None]
        recv_msgs = np.zeros((max_msgs, n, n), bool)
        if cfg.collisions_enabled:
            si, ri = np.nonzero(candidates)
            p_drop = mac_drop_probability(np.clip(prev_cbr[ri], 0.0, 1.0))
            for m in range(max_msgs):
                sent = n_emit[si] > m
                u = krng.keyed_uniform(seed, krng.COLLISION, si, ri, k, m)
                recv_msgs[m, si, ri] = sent & (u >= p_drop)
        else:
            for m in range(max_msgs):
                recv_msgs[m] = candidates & (n_emit[:, None] > m)
        heard = recv_msgs.any(axis=0)

        busy = (sensed * n_emit[:, None]).sum(axis=0) + n_emit
        cbr = np.minimum(1.0, busy * msg_bytes / cap)
        cbr[~active] = 0.0

        if event_log is not None:
            _log_events(event_log, k, n_emit, valid, rx, dist, cfg, candidates, recv_msgs)

        # controllers
        eps = cfg.enar_error_bound * (2.0 * krng.keyed_uniform(seed, krng.ENAR, ids, k) - 1.0)
        new_power = power.copy()
        new_rate = rate.copy()
        enar = np.full(n, np.nan)
        for e in np.flatnonzero(active):
            src = np.flatnonzero(heard[:, e])
            view = StepView(ids[src], power[src], rx[src, e], dist[src, e], float(cbr[e]),
                            float(power[e]), float(rate[e]), float(target_range[e]),
                            float(target_rate[e]), ta, float(eps[e]))
            dec = ctrl.decide(int(e), view)
            new_power[e] = dec.next_power
            new_rate[e] = dec.next_rate
            in_r = view.distance <= view.target_range
            enar[e] = estimate_enar(view.tx_power[in_r] - view.rx_power[in_r], view.own_power,
                                    cfg.rx_sensitivity, view.eps)
            if decision_log is not None:
                decision_log.writerow((k, int(e), f"{dec.next_power:.4f}", f"{dec.next_rate:.4f}",
                                       f"{cbr[e]:.6f}", f"{enar[e]:.6f}", f"{dec.delta_a:.6f}",
                                       f"{dec.delta_r:.6f}", dec.state_row))

        # bookkeeping of the step that just ran
        if active.any():
            step_cbr[k] = cbr[active].mean()
            step_power[k] = power[active].mean()
            step_rate[k] = rate[active].mean()
            for arr in (power[active], new_power[active]):
                pmin, pmax = min(pmin, arr.min()), max(pmax, arr.max())
            for arr in (rate[active], new_rate[active]):
                rmin, rmax = min(rmin, arr.min()), max(rmax, arr.max())
        heard_win |= heard
        acc["cbr"] += np.where(active, cbr, 0.0)
        acc["power"] += np.where(active, power, 0.0)
        acc["rate"] += np.where(active, rate, 0.0)
        acc["count"] += active
        acc["enar"] += np.where(active, enar, 0.0)

        if k % sps == sps - 1:
            second = k // sps
            if active.any():
                nar, rnar = awareness_all(dist_with_nan(dist, active), heard_win, metric_r, active)
                hidden = hidden_node_ratios(sensed, active)
                cnt = np.maximum(acc["count"], 1)
                sel = active
                yield aggregate_step(second, {
                    "nar": nar[sel], "rnar": rnar[sel],
                    "enar": (acc["enar"] / cnt)[sel],
                    "rate": (acc["rate"] / cnt)[sel],
                    "power": (acc["power"] / cnt)[sel],
                    "cbr": (acc["cbr"] / cnt)[sel],
                    "hidden": hidden[sel],
                })
            heard_win[:] = False
            for a in acc.values():
                a[:] = 0.0

        power, rate = new_power, new_rate
        prev_cbr = cbr

    if result is not None:
        result.update(step_cbr=step_cbr, step_power=step_power, step_rate=step_rate,
                      power_range=(pmin, pmax), rate_range=(rmin, rmax), emitted=emitted,
                      rate_integral=rate_integral, diagnostics=ctrl.diagnostics)


def dist_with_nan(dist, active):
    out = dist.copy()
    out[~active, :] = np.nan
    out[:, ~active] = np.nan
    return out


def _log_events(sink: EventLog, k, n_emit, valid, rx, dist, cfg, candidates, recv_msgs):
    floor = min(cfg.rx_sensitivity, cfg.carrier_sense_threshold) - 10.0
    si, ri = np.nonzero(valid & (rx >= floor) & (n_emit[:, None] > 0))
    for m in range(int(n_emit.max()) if len(n_emit) else 0):
        sel = n_emit[si] > m
        s, r = si[sel], ri[sel]
        ok_sens = candidates[s, r]
        ok = recv_msgs[m, s, r]
        cause = np.where(~ok_sens, "below_sensitivity", np.where(ok, "none", "mac_collision"))
        sink.write(k, s, r, rx[s, r], ok, cause, dist[s, r])


def run(scenario: Scenario, cfg: SimConfig, *, workers: int = 1, event_log=None,
        decision_log=None) -> RunResult:
    extra: dict = {}
    metrics = list(simulate(scenario, cfg, workers=workers, event_log=event_log,
                            decision_log=decision_log, result=extra))
    return RunResult(scenario.algorithm, metrics, **extra)
