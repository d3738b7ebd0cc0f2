"""Congestion controllers.

Power adaptation estimates a path loss exponent from every received message,
turns it into the power needed to cover the target awareness range for each
neighbor, and picks the TA-th percentile.  Rate adaptation is a LIMERIC-style
linear controller on the channel busy ratio.  The ECPR combiner gates power
increases on channel load, estimated awareness and rate deficit.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import ConfigError, NeighborObservation, SimConfig


class RejectedObservation(ValueError):
    """Observation too close for the log-distance reference (denominator <= 0)."""


def _ref_db(d, wavelength):
    return 10.0 * np.log10(4.0 * math.pi * np.asarray(d, dtype=float) / wavelength)


def estimate_ple(obs: NeighborObservation, wavelength: float) -> float:
    """Path loss exponent of one message: (P_tx - P_rx) / 10log10(4 pi d / lambda)."""
    if obs.distance <= wavelength / (4 * math.pi):
        raise RejectedObservation(f"distance {obs.distance} m is inside the reference distance")
    return (obs.tx_power - obs.rx_power) / float(_ref_db(obs.distance, wavelength))


def ple_array(tx_power, rx_power, distance, wavelength: float) -> np.ndarray:
    """Vectorised :func:`estimate_ple`; rejected entries are NaN."""
    d = np.asarray(distance, dtype=float)
    ok = d > wavelength / (4 * math.pi)
    out = np.full(d.shape, np.nan)
    out[ok] = (np.asarray(tx_power, float)[ok] - np.asarray(rx_power, float)[ok]) / _ref_db(d[ok], wavelength)
    return out


def required_power_to_neighbor(obs_list: Sequence[NeighborObservation], r_e: float, wavelength: float,
                               *, floor: str = "mean_rx", sensitivity: float = -90.0,
                               diagnostics: Counter | None = None) -> float:
    """Transmit power needed to reach this neighbor's channel at range ``r_e``.

    With ``floor="mean_rx"`` the base term is the mean received power over the
    window; with ``floor="sensitivity"`` it is the receiver sensitivity, i.e.
    the power that lands exactly at sensitivity at ``r_e``.  The exponent is
    the mean of the per-message estimates.
    """
    if not obs_list:
        raise ValueError("need at least one observation")
    if len({o.sender_id for o in obs_list}) != 1:
        raise ValueError("observations must come from a single neighbor")
    ples = []
    for o in obs_list:
        try:
            ples.append(estimate_ple(o, wavelength))
        except RejectedObservation:
            if diagnostics is not None:
                diagnostics["rejected_observation"] += 1
    if not ples:
        raise RejectedObservation("no usable observation for this neighbor")
    if floor == "mean_rx":
        base = float(np.mean([o.rx_power for o in obs_list]))
    elif floor == "sensitivity":
        base = sensitivity
    else:
        raise ValueError(f"unknown floor {floor!r}")
    return base + float(np.mean(ples)) * float(_ref_db(r_e, wavelength))


def percentile_index(ta: float, n: int) -> int:
    """1-based index round(TA*N), rounding halves up, clamped to [1, N]."""
    k = math.floor(ta * n + 0.5 + 1e-9)
    return min(n, max(1, k))


def select_tx_power(required: Sequence[float], ta: float, bounds: tuple[float, float],
                    default: float = 23.0) -> float:
    if not 0 < ta <= 1:
        raise ValueError("target awareness must lie in (0, 1]")
    lo, hi = bounds
    if len(required) == 0:
        return min(hi, max(lo, default))
    ranked = np.sort(np.asarray(required, dtype=float))
    value = ranked[percentile_index(ta, len(ranked)) - 1]
    return float(min(hi, max(lo, value)))


# ---------------------------------------------------------------------------
# rate adaptation


@dataclass
class RateAdapterState:
    current_rate: float
    a: float = 0.1
    b: float = 1 / 150
    X: float = 1.5
    gain: float = 2500.0
    mode: str = "paper_literal"

    @classmethod
    def from_config(cls, cfg: SimConfig, rate: float | None = None) -> "RateAdapterState":
        return cls(cfg.rate_bounds[1] if rate is None else rate, cfg.limeric_a, cfg.limeric_b,
                   cfg.limeric_X, cfg.effective_gain, cfg.rate_mode)


def rate_step(state: RateAdapterState, cbr: float, cfg: SimConfig) -> float:
    """Next message rate from the current rate and the measured CBR."""
    lo, hi = cfg.rate_bounds
    br = state.current_rate
    if state.mode == "paper_literal":
        diff = cfg.cbr_threshold - cbr
        drive = float(np.sign(diff)) * min(state.X, state.gain * state.b * abs(diff))
        nxt = (1 - state.a) * br + drive
    elif state.mode == "classic_rg":
        target = br * cfg.cbr_threshold / max(cbr, 0.01)
        nxt = (1 - state.a) * br + state.b * state.gain * (target - br)
    else:
        raise ConfigError(f"unknown rate mode {state.mode!r}")
    return min(hi, max(lo, nxt))


# ---------------------------------------------------------------------------
# awareness estimate


def estimate_enar(pathloss: Sequence[float], own_prev_power: float, sensitivity: float,
                  eps_draw: float = 0.0) -> float:
    """Transmitter-side awareness estimate over detected neighbors within range.

    ``pathloss`` holds the reverse-link loss of each such neighbor, used as
    the forward loss by reciprocity.
    """
    pl = np.asarray(pathloss, dtype=float)
    if len(pl) == 0:
        return 1.0
    reached = np.count_nonzero(own_prev_power - pl > sensitivity)
    return min(1.0, max(0.0, (1.0 + eps_draw) * reached / len(pl)))


# ---------------------------------------------------------------------------
# combiner


@dataclass(frozen=True)
class DccDecision:
    next_power: float
    next_rate: float
    state_row: int = 0
    delta_a: float = 0.0
    delta_r: float = 0.0
    enar: float = float("nan")


def table2_row(cbr_high: bool, aware_ok: bool, rate_ok: bool) -> int:
    """Row of the power-gating state table (1-8)."""
    if not cbr_high:
        if rate_ok:
            return 2 if aware_ok else 1
        return 4 if aware_ok else 3
    if rate_ok:
        return 6 if aware_ok else 5
    return 8 if aware_ok else 7


def ecpr_decide(power_candidate: float, prev_power: float, cbr: float, enar: float, ta: float,
                tr: float, br: float, gamma: float, cfg: SimConfig,
                rate_state: RateAdapterState | None = None) -> DccDecision:
    if tr == 0:
        raise ConfigError("target rate must be non-zero")
    delta_a = ta - enar
    delta_r = (tr - br) / tr
    row = table2_row(cbr >= cfg.cbr_threshold, enar >= ta, br >= tr)
    lowers = power_candidate <= prev_power
    if row in (1, 2, 3):
        apply = True
    elif row in (5, 7):
        apply = lowers or delta_a >= gamma * delta_r
    else:  # 4, 6, 8
        apply = lowers
    power = power_candidate if apply else prev_power
    lo, hi = cfg.power_bounds
    power = min(hi, max(lo, power))
    if rate_state is None:
        rate_state = RateAdapterState.from_config(cfg, br)
    else:
        rate_state.current_rate = br
    rate = rate_step(rate_state, cbr, cfg)
    return DccDecision(power, rate, row, delta_a, delta_r, enar)


# ---------------------------------------------------------------------------
# per-vehicle controllers driven by the engine


@dataclass
class StepView:
    """What one vehicle observed during the control step that just ended.

    Arrays are per heard sender: piggybacked transmit power, mean received
    power and distance.
    """

    senders: np.ndarray
    tx_power: np.ndarray
    rx_power: np.ndarray
    distance: np.ndarray
    cbr: float
    own_power: float
    rate: float
    target_range: float
    target_rate: float
    target_awareness: float
    eps: float = 0.0


class Controller:
    name = "none"

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.diagnostics: Counter = Counter()

    def reset(self, vid: int):
        pass

    def initial(self, target_rate: float) -> tuple[float, float]:
        return self.cfg.default_tx_power, self.cfg.rate_bounds[1]

    def decide(self, vid: int, view: StepView) -> DccDecision:
        raise NotImplementedError


class NoDcc(Controller):
    name = "none"

    def initial(self, target_rate):
        return self.cfg.default_tx_power, self._fixed_rate(target_rate)

    def _fixed_rate(self, tr):
        lo, hi = self.cfg.rate_bounds
        return min(hi, max(lo, tr))

    def decide(self, vid, view):
        return DccDecision(self.cfg.default_tx_power, self._fixed_rate(view.target_rate))


class RateOnly(Controller):
    name = "rate_only"

    def __init__(self, cfg):
        super().__init__(cfg)
        self._rs = RateAdapterState.from_config(cfg)

    def decide(self, vid, view):
        self._rs.current_rate = view.rate
        return DccDecision(self.cfg.default_tx_power, rate_step(self._rs, view.cbr, self.cfg))


class _PowerAdapting(Controller):
    def __init__(self, cfg):
        super().__init__(cfg)
        self._prev: dict[int, np.ndarray] = {}

    def reset(self, vid):
        self._prev.pop(vid, None)

    def candidate(self, vid: int, view: StepView) -> float:
        cfg = self.cfg
        lam = cfg.wavelength
        prev = self._prev.get(vid)
        self._prev[vid] = np.sort(view.senders)
        in_r = view.distance <= view.target_range
        if not np.any(in_r):
            return select_tx_power([], view.target_awareness, cfg.power_bounds, cfg.default_tx_power)
        senders = view.senders[in_r]
        known = np.isin(senders, prev) if prev is not None else np.zeros(len(senders), bool)
        ple = ple_array(view.tx_power[in_r], view.rx_power[in_r], view.distance[in_r], lam)
        rejected = np.isnan(ple)
        if rejected.any():
            self.diagnostics["rejected_observation"] += int(rejected.sum())
        base = view.rx_power[in_r] if cfg.eq3_floor == "mean_rx" else cfg.rx_sensitivity + cfg.eq3_margin_db
        req = base + ple * float(_ref_db(view.target_range, lam))
        req = np.where(known, req, cfg.default_tx_power)
        req = req[~(known & rejected)]
        return select_tx_power(req, view.target_awareness, cfg.power_bounds, cfg.default_tx_power)


class PowerOnly(_PowerAdapting):
    name = "power_only"

    def initial(self, target_rate):
        lo, hi = self.cfg.rate_bounds
        return self.cfg.default_tx_power, min(hi, max(lo, target_rate))

    def decide(self, vid, view):
        lo, hi = self.cfg.rate_bounds
        return DccDecision(self.candidate(vid, view), min(hi, max(lo, view.target_rate)))


class Ecpr(_PowerAdapting):
    name = "ecpr"

    def __init__(self, cfg):
        super().__init__(cfg)
        self._rs = RateAdapterState.from_config(cfg)

    def enar(self, view: StepView) -> float:
        in_r = view.distance <= view.target_range
        pl = view.tx_power[in_r] - view.rx_power[in_r]
        return estimate_enar(pl, view.own_power, self.cfg.rx_sensitivity, view.eps)

    def decide(self, vid, view):
        cand = self.candidate(vid, view)
        return ecpr_decide(cand, view.own_power, view.cbr, self.enar(view), view.target_awareness,
                           view.target_rate, view.rate, self.cfg.gamma, self.cfg, self._rs)


CONTROLLERS = {"ecpr": Ecpr, "rate_only": RateOnly, "power_only": PowerOnly, "none": NoDcc}


def baseline_controllers(kind: str, cfg: SimConfig) -> Controller:
    try:
        return CONTROLLERS[kind](cfg)
    except KeyError:
        raise ConfigError(f"unknown controller {kind!r}; choose from {sorted(CONTROLLERS)}") from None
