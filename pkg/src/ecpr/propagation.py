"""Class-dependent log-distance path loss with reciprocal log-normal fading.

Path loss is ``PLE[class] * 10*log10(4*pi*d/lambda)``, so the per-message
exponent estimate in :mod:`ecpr.dcc` inverts it exactly when fading is off.

The default exponents and fading sigmas below are simulator defaults chosen
for this model, not measured values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import LinkClass
from .rng import FADING, keyed_normal

SPEED_OF_LIGHT = 299_792_458.0

_CLASS_KEYS = ("LOS", "NLOS_building", "NLOS_vehicle")


def _default_ple():
    return {"LOS": 2.0, "NLOS_building": 2.9, "NLOS_vehicle": 2.5}


def _default_sigma():
    return {"LOS": 2.0, "NLOS_building": 4.0, "NLOS_vehicle": 3.0}


@dataclass(frozen=True)
class PropagationParams:
    ple_by_class: dict = field(default_factory=_default_ple)
    fading_sigma_by_class: dict = field(default_factory=_default_sigma)
    carrier_frequency: float = 5.9e9

    def __post_init__(self):
        for name in ("ple_by_class", "fading_sigma_by_class"):
            table = getattr(self, name)
            if set(table) != set(_CLASS_KEYS):
                raise ValueError(f"{name} needs exactly the keys {_CLASS_KEYS}, got {sorted(table)}")
        if any(v <= 1 for v in self.ple_by_class.values()):
            raise ValueError("path loss exponents must be > 1")
        if any(v < 0 for v in self.fading_sigma_by_class.values()):
            raise ValueError("fading sigmas must be >= 0")
        if self.carrier_frequency <= 0:
            raise ValueError("carrier_frequency must be positive")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    def ple(self, cls: LinkClass) -> float:
        return float(self.ple_by_class[LinkClass(cls).name])

    def sigma(self, cls: LinkClass) -> float:
        return float(self.fading_sigma_by_class[LinkClass(cls).name])

    def class_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(ple, sigma) indexed by LinkClass value."""
        ple = np.array([self.ple_by_class[k] for k in _CLASS_KEYS], dtype=float)
        sig = np.array([self.fading_sigma_by_class[k] for k in _CLASS_KEYS], dtype=float)
        return ple, sig


@dataclass(frozen=True)
class LinkBudget:
    link_class: LinkClass
    tx_power: float
    pathloss: float
    fading_draw: float
    rx_power: float


def reference_loss(d, wavelength: float):
    """Free-space term ``10*log10(4*pi*d/lambda)`` in dB.

    Accepts scalars or arrays; every distance must be positive.
    """
    d_arr = np.asarray(d, dtype=float)
    if np.any(d_arr <= 0) or np.any(np.isnan(d_arr)):
        raise ValueError("distance must be > 0")
    out = 10.0 * np.log10(4.0 * math.pi * d_arr / wavelength)
    return float(out) if np.ndim(out) == 0 else out


def compute_link(tx_power: float, d: float, cls: LinkClass, params: PropagationParams,
                 rng=None) -> LinkBudget:
    """Budget for one link.

    ``rng`` is any object with ``normal(loc, scale)``; pass a
    :class:`ecpr.rng.PairStream` to get the draw the engine would use.
    """
    cls = LinkClass(cls)
    pl = params.ple(cls) * reference_loss(d, params.wavelength)
    sigma = params.sigma(cls)
    fade = 0.0
    if sigma > 0 and rng is not None:
        fade = float(rng.normal(0.0, sigma))
    return LinkBudget(cls, float(tx_power), pl, fade, float(tx_power) - pl + fade)


def radio_horizon(max_power: float, floor_dbm: float, params: PropagationParams,
                  margin_db: float = 10.0) -> float:
    """Distance where ``max_power`` at the smallest exponent is ``margin_db`` below ``floor_dbm``.

    No pair beyond it can be received or sensed, so pruning is lossless
    as long as fading stays within the margin.
    """
    ple_min = min(params.ple_by_class.values())
    budget = max_power - (floor_dbm - margin_db)
    return params.wavelength / (4 * math.pi) * 10 ** (budget / (10 * ple_min))


def link_matrices(power: np.ndarray, dist: np.ndarray, cls: np.ndarray, params: PropagationParams,
                  seed: int, step: int, ids: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Path loss, fading and received power for every ordered pair.

    ``rx[i, j]`` is the power at ``j`` of a message sent by ``i``.  Entries
    with ``cls < 0`` (pruned, inactive or diagonal) come back as -inf.
    """
    n = len(power)
    ple, sig = params.class_arrays()
    valid = cls >= 0
    iu, ju = np.nonzero(np.triu(valid, 1))
    pl = np.full((n, n), np.inf)
    fade = np.zeros((n, n))
    if len(iu):
        c = cls[iu, ju]
        pl_u = ple[c] * reference_loss(dist[iu, ju], params.wavelength)
        a = np.minimum(ids[iu], ids[ju])
        b = np.maximum(ids[iu], ids[ju])
        f_u = sig[c] * keyed_normal(seed, FADING, a, b, step)
        pl[iu, ju] = pl_u
        pl[ju, iu] = pl_u
        fade[iu, ju] = f_u
        fade[ju, iu] = f_u
    rx = power[:, None] - pl + fade
    return pl, fade, rx
