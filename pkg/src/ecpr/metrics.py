"""Awareness and channel metrics computed from ground truth.

NAR and RNAR are evaluated over one-second windows.  Vehicle membership
within range uses positions at the last control step of the window; a
sender counts as heard if at least one of its messages was received during
the window.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import astuple, dataclass, fields

import numpy as np


@dataclass(frozen=True)
class StepMetrics:
    second: int
    mean_nar: float
    mean_rnar: float
    mean_enar: float
    mean_rate: float
    mean_power: float
    cbr_mean: float
    cbr_std: float
    hidden_node_ratio: float
    vehicles: int

    def __post_init__(self):
        for name in ("mean_nar", "mean_rnar", "cbr_mean", "hidden_node_ratio"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")


METRIC_COLUMNS = tuple(f.name for f in fields(StepMetrics))


def compute_nar(ego: int, r: float, positions: np.ndarray, heard, active=None) -> float:
    """Fraction of vehicles within ``r`` of ``ego`` that ``ego`` heard from.

    ``positions`` is indexed by vehicle id (NaN rows for absent vehicles);
    ``heard`` is an iterable of sender ids.  No vehicle in range gives 1.0.
    """
    pos = np.asarray(positions, dtype=float)
    d = np.hypot(*(pos - pos[ego]).T)
    mask = d <= r
    mask[ego] = False
    if active is not None:
        mask &= np.asarray(active, bool)
    total = np.count_nonzero(mask)
    if total == 0:
        return 1.0
    heard_mask = np.zeros(len(pos), bool)
    heard_mask[list(heard)] = True
    return np.count_nonzero(mask & heard_mask) / total


def compute_rnar(ego: int, r: float, positions: np.ndarray, heard) -> float:
    """Fraction of heard senders lying beyond ``r``; nothing heard gives 0.0."""
    heard = [h for h in set(heard) if h != ego]
    if not heard:
        return 0.0
    pos = np.asarray(positions, dtype=float)
    d = np.hypot(*(pos[heard] - pos[ego]).T)
    return np.count_nonzero(d > r) / len(heard)


def awareness_all(dist: np.ndarray, heard: np.ndarray, r: np.ndarray, active: np.ndarray):
    """NAR and RNAR for every vehicle at once.

    ``heard[i, j]`` means ``j`` received from ``i`` during the window and
    ``dist`` may hold NaN for absent vehicles.  Inactive rows come back NaN.
    """
    n = len(dist)
    r = np.broadcast_to(np.asarray(r, dtype=float), (n,))
    with np.errstate(invalid="ignore"):
        within = (dist <= r[None, :]) & active[:, None]
        beyond = dist > r[None, :]
    np.fill_diagonal(within, False)
    heard = heard & active[:, None]
    np.fill_diagonal(heard, False)
    nt = within.sum(axis=0)
    nd = (within & heard).sum(axis=0)
    nh = heard.sum(axis=0)
    na = (heard & beyond).sum(axis=0)
    nar = np.where(nt > 0, nd / np.maximum(nt, 1), 1.0)
    rnar = np.where(nh > 0, na / np.maximum(nh, 1), 0.0)
    nar[~active] = np.nan
    rnar[~active] = np.nan
    return nar, rnar


def aggregate_step(second: int, per_vehicle: dict) -> StepMetrics:
    """Average per-vehicle values into one row.

    ``per_vehicle`` maps nar, rnar, enar, rate, power, cbr and hidden to
    equal-length sequences.
    """
    n = len(per_vehicle["nar"])
    if n == 0:
        raise ValueError("no vehicles to aggregate")
    arr = {k: np.asarray(v, dtype=float) for k, v in per_vehicle.items()}

    def mean(key):
        v = arr.get(key)
        if v is None or np.all(np.isnan(v)):
            return float("nan")
        return float(np.nanmean(v))

    return StepMetrics(
        second=second,
        mean_nar=mean("nar"),
        mean_rnar=mean("rnar"),
        mean_enar=mean("enar"),
        mean_rate=mean("rate"),
        mean_power=mean("power"),
        cbr_mean=mean("cbr"),
        cbr_std=float(np.std(arr["cbr"])),
        hidden_node_ratio=mean("hidden"),
        vehicles=n,
    )


def format_row(m: StepMetrics, algorithm: str) -> list[str]:
    out = []
    for v in astuple(m):
        out.append(str(v) if isinstance(v, (int, np.integer)) else f"{v:.6f}")
    return [out[0], algorithm, *out[1:]]


def recompute_awareness(events_path, positions_path, r: float, steps_per_second: int):
    """NAR/RNAR per second rebuilt from an event log and a position log.

    Returns ``[(second, mean_nar, mean_rnar), ...]``.
    """
    positions: dict[int, dict[int, tuple[float, float]]] = defaultdict(dict)
    step_of_time = {}
    with open(positions_path, newline="") as fh:
        for row in csv.DictReader(_skip_comments(fh)):
            t = float(row["time_s"])
            step = int(round(t * steps_per_second))
            step_of_time[t] = step
            positions[step][int(row["vehicle_id"])] = (float(row["x_m"]), float(row["y_m"]))
    heard: dict[int, set] = defaultdict(set)
    with open(events_path, newline="") as fh:
        for row in csv.DictReader(_skip_comments(fh)):
            if row["received"] in ("1", "True", "true"):
                sec = int(row["step"]) // steps_per_second
                heard[sec].add((int(row["sender"]), int(row["receiver"])))
    if not positions:
        return []
    n = max(max(p) for p in positions.values()) + 1
    last_step = max(positions)
    out = []
    for sec in range(last_step // steps_per_second + 1):
        end = sec * steps_per_second + steps_per_second - 1
        if end > last_step or end not in positions:
            break
        pos = np.full((n, 2), np.nan)
        for vid, xy in positions[end].items():
            pos[vid] = xy
        active = ~np.isnan(pos[:, 0])
        hmat = np.zeros((n, n), bool)
        for s, r_ in heard.get(sec, ()):
            hmat[s, r_] = True
        diff = pos[:, None, :] - pos[None, :, :]
        dist = np.hypot(diff[..., 0], diff[..., 1])
        nar, rnar = awareness_all(dist, hmat, np.full(n, r), active)
        out.append((sec, float(np.nanmean(nar)), float(np.nanmean(rnar))))
    return out


def _skip_comments(fh):
    for line in fh:
        if not line.startswith("#"):
            yield line
