"""Config loading, building ingestion and results files."""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import ConfigError, SimConfig
from .geometry import BuildingSet, GeometryError, as_ring, is_simple, lonlat_to_local
from .metrics import METRIC_COLUMNS, StepMetrics, format_row

log = logging.getLogger(__name__)

CLOSE_TOLERANCE_M = 1e-6


# ---------------------------------------------------------------------------
# configuration


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def config_from_dict(data: dict) -> SimConfig:
    """Build a config, optionally starting from ``"preset": name``."""
    from .presets import PRESETS

    data = dict(data)
    preset = data.pop("preset", None)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        data = _merge(PRESETS[preset]().to_dict(), data)
    return SimConfig.from_dict(data)


def load_config(path) -> SimConfig:
    """Read a JSON config file; errors name the line or the offending field."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    try:
        cfg = config_from_dict(data)
    except (ConfigError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    base = Path(path).parent
    sc = cfg.scenario
    fix = {}
    for key in ("trace_path", "buildings_path"):
        p = getattr(sc, key)
        if p and not os.path.isabs(p):
            fix[f"scenario.{key}"] = str(base / p)
    return cfg.replace(**fix) if fix else cfg


# ---------------------------------------------------------------------------
# buildings


def _parse_polygon(obj):
    if isinstance(obj, dict):
        obj = obj.get("polygon", obj.get("coordinates"))
    return np.asarray(obj, dtype=float)


def ingest_buildings(path, origin: tuple[float, float] | None = None) -> BuildingSet:
    """Newline-delimited JSON polygons, one ``[[x, y], ...]`` ring per line.

    Lines may also be objects with a ``polygon`` key.  With ``origin``
    (lon, lat) the vertices are read as degrees and projected to meters.
    Rings whose last vertex is within 1e-6 m of the first are closed; other
    open rings, self-intersecting rings and unparsable lines are skipped with
    a warning.  A nonempty file with no usable polygon is an error.
    """
    polys = []
    skipped = 0
    nonblank = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            nonblank += 1
            try:
                arr = _parse_polygon(json.loads(line))
                if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) < 4:
                    raise GeometryError("need at least four [x, y] vertices including the closing one")
                if origin is not None:
                    arr = lonlat_to_local(arr, origin)
                gap = float(np.hypot(*(arr[-1] - arr[0])))
                if gap > CLOSE_TOLERANCE_M:
                    raise GeometryError(f"ring not closed (gap {gap:.3g} m)")
                arr[-1] = arr[0]
                ring = as_ring(arr)
                if not is_simple(ring):
                    raise GeometryError("self-intersecting ring")
            except (ValueError, TypeError, GeometryError) as exc:
                skipped += 1
                log.warning("%s:%d: skipped polygon: %s", path, lineno, exc)
                continue
            polys.append(ring)
    if nonblank and not polys:
        raise ConfigError(f"{path}: no valid polygon among {nonblank} entries")
    if skipped:
        log.warning("%s: %d polygon(s) skipped", path, skipped)
    return BuildingSet(polys)


# ---------------------------------------------------------------------------
# results


@dataclass
class RunManifest:
    config_hash: str
    seed: int
    scenario_id: str
    algorithm: str
    code_version: str
    outputs: dict = field(default_factory=dict)

    @classmethod
    def for_config(cls, cfg: SimConfig, algorithm: str | None = None) -> "RunManifest":
        from . import __version__

        sc = cfg.scenario
        return cls(cfg.digest(), cfg.rng_seed, f"{sc.mobility}-{sc.vehicle_count}v-{sc.duration:g}s",
                   algorithm or sc.algorithm, __version__)

    def header(self) -> str:
        # output paths stay out of the header so identical runs write identical files
        return (f"# manifest config_hash={self.config_hash} seed={self.seed} "
                f"scenario={self.scenario_id} algorithm={self.algorithm} version={self.code_version}")

    def write_json(self, path, cfg: SimConfig | None = None):
        data = asdict(self)
        if cfg is not None:
            data["config"] = cfg.to_dict()
        Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def read_manifest_header(path) -> dict:
    with open(path) as fh:
        first = fh.readline().strip()
    if not first.startswith("# manifest"):
        raise ConfigError(f"{path}: no manifest header")
    return dict(item.split("=", 1) for item in first.split()[2:])


def write_metrics_csv(path, rows: list[tuple[str, StepMetrics]], header: str):
    """``rows`` holds ``(algorithm, metrics)`` pairs in output order."""
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["second", "algorithm", *METRIC_COLUMNS[1:]])
        for alg, m in rows:
            w.writerow(format_row(m, alg))


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


SUMMARY_COLUMNS = ("algorithm", "mean_nar", "mean_rnar", "mean_rate", "cbr_mean", "mean_power",
                   "hidden_node_ratio")


def write_summary_csv(path, summaries: list[dict], header: str):
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for s in summaries:
            w.writerow([s["algorithm"], *(f"{s[c]:.6f}" for c in SUMMARY_COLUMNS[1:])])


def format_summary(summaries: list[dict]) -> str:
    """Plain-text table of steady-state means, one row per algorithm."""
    head = ("algorithm", "NAR@r", "RNAR@r", "rate Hz", "CBR", "power dBm", "hidden")
    lines = ["{:<12}".format(head[0]) + "".join(f"{h:>11}" for h in head[1:])]
    for s in summaries:
        vals = [s[c] for c in SUMMARY_COLUMNS[1:]]
        lines.append(f"{s['algorithm']:<12}" + "".join(f"{v:>11.3f}" for v in vals))
    return "\n".join(lines)


DECISION_COLUMNS = ("step", "vehicle", "power_dbm", "rate_hz", "cbr", "enar",
                    "delta_a", "delta_r", "table2_row")
