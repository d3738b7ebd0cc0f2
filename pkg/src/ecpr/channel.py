"""Reception decisions, channel busy ratio, MAC loss table and hidden-node pairs."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import NeighborObservation, SimConfig
from .propagation import LinkBudget


class DropCause(str, enum.Enum):
    none = "none"
    below_sensitivity = "below_sensitivity"
    mac_collision = "mac_collision"


@dataclass(frozen=True)
class ReceptionEvent:
    sender: int
    receiver: int
    msg_index: int
    rx_power: float
    received: bool
    drop_cause: DropCause


@dataclass(frozen=True)
class CbrMeasurement:
    window_bytes: float
    capacity: float
    cbr: float


def measure_cbr(observed_msgs: Iterable[NeighborObservation], cfg: SimConfig,
                own_bytes: float = 0.0) -> CbrMeasurement:
    """Busy ratio of one control-step window from byte counting.

    Only messages sensed above the carrier-sense threshold count; the
    vehicle's own transmissions are passed as ``own_bytes``.
    """
    total = float(own_bytes)
    for m in observed_msgs:
        if m.rx_power >= cfg.carrier_sense_threshold:
            total += m.msg_length
    cap = cfg.capacity_bytes
    return CbrMeasurement(total, cap, min(1.0, total / cap))


# lower CBR edge of each bin -> drop probability
MAC_DROP_TABLE = ((0.0, 0.00), (0.2, 0.01), (0.3, 0.03), (0.4, 0.07), (0.5, 0.10), (0.6, 0.30))
_EDGES = np.array([e for e, _ in MAC_DROP_TABLE[1:]])
_PROBS = np.array([p for _, p in MAC_DROP_TABLE])


def mac_drop_probability(cbr):
    """Per-message MAC collision loss for a channel at ``cbr``."""
    arr = np.asarray(cbr, dtype=float)
    if np.any((arr < 0) | (arr > 1)) or np.any(np.isnan(arr)):
        raise ValueError(f"cbr must lie in [0, 1], got {cbr}")
    out = _PROBS[np.searchsorted(_EDGES, arr, side="right")]
    return float(out) if np.ndim(out) == 0 else out


def decide_reception(budget: LinkBudget, receiver_cbr: float, collisions_enabled: bool, rng=None,
                     *, sensitivity: float = -90.0, sender: int = -1, receiver: int = -1,
                     msg_index: int = 0) -> ReceptionEvent:
    """``rng`` needs a ``random()`` method; it is only consulted for collisions."""
    if budget.rx_power < sensitivity:
        return ReceptionEvent(sender, receiver, msg_index, budget.rx_power, False,
                              DropCause.below_sensitivity)
    if collisions_enabled:
        p = mac_drop_probability(receiver_cbr)
        if p > 0 and rng.random() < p:
            return ReceptionEvent(sender, receiver, msg_index, budget.rx_power, False,
                                  DropCause.mac_collision)
    return ReceptionEvent(sender, receiver, msg_index, budget.rx_power, True, DropCause.none)


def hidden_node_ratio(ego, neighbors: Sequence[int], audible: np.ndarray) -> float:
    """Fraction of unordered neighbor pairs of ``ego`` that cannot hear each other.

    ``neighbors`` index into the symmetric boolean matrix ``audible``.
    """
    nb = np.unique(np.asarray([n for n in neighbors if n != ego], dtype=int))
    k = len(nb)
    if k < 2:
        return 0.0
    sub = np.asarray(audible, dtype=bool)[np.ix_(nb, nb)]
    heard_pairs = np.count_nonzero(np.triu(sub, 1))
    total = k * (k - 1) // 2
    return (total - heard_pairs) / total


def hidden_node_ratios(sensed: np.ndarray, active: np.ndarray) -> np.ndarray:
    """Per-vehicle hidden-node ratio from a sensing matrix.

    ``sensed[i, j]`` means ``j`` senses ``i``.  Neighbors of ``e`` are the
    vehicles it senses; a pair of neighbors is hidden when neither senses
    the other.  Inactive vehicles get NaN.
    """
    mut = (sensed | sensed.T).astype(np.float64)
    n = len(sensed)
    out = np.full(n, np.nan)
    for e in np.flatnonzero(active):
        nb = np.flatnonzero(sensed[:, e])
        k = len(nb)
        if k < 2:
            out[e] = 0.0
            continue
        heard = mut[np.ix_(nb, nb)].sum() / 2.0
        total = k * (k - 1) / 2.0
        out[e] = (total - heard) / total
    return out


EVENT_COLUMNS = ("step", "sender", "receiver", "rx_power_dbm", "received", "drop_cause", "distance_m")


class EventLog:
    """CSV sink for reception events."""

    def __init__(self, path, header: str | None = None):
        self._fh = open(path, "w", newline="")
        if header:
            self._fh.write(header + "\n")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(EVENT_COLUMNS)

    def write(self, step: int, sender, receiver, rx_power, received, cause, distance):
        for row in zip(sender, receiver, rx_power, received, cause, distance):
            s, r, p, ok, c, d = row
            self._w.writerow((step, int(s), int(r), f"{p:.4f}", int(bool(ok)), c, f"{d:.3f}"))

    def close(self):
        self._fh.close()
