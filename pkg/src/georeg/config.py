"""Run configuration document (JSON).

Layout::

    {
      "params":  {"a": 100, "b": 100, "i": 0, "d_u": 1, "t0": 1, "k1": 1,
                  "v": 25, "t_0_mission": 54, "r_min": 1000},
      "timing":  {"a_c": 234e-6, "l": 9e-6, "t0_pair": 1e-6, "b": 5e-6,
                  "t_c": 0, "rho": 0},
      "terrain": {"density": 1500}  or  {"densities": [[...]], "cell_size_m": 500},
      "sim":     {"sigma_match": 24.49, "n_relatives": 50, ...}
    }

Only ``params`` is required. Lengths in meters, times in seconds, speeds
in m/s; keys ending in ``_deg`` are degrees. Instead of ``b`` the params
section may give ``h`` (m) and ``theta_l_deg`` (along-track field of view).
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coupling import ModeParams
from .errors import ConfigError
from .flightsim import MODES, SimConfig, TerrainModel
from .geodesy import GEODESY_MODES, STRICT, GeoPose, footprint
from .timing import DEFAULT_SIGMA_MATCH, TimingParams

PARAM_KEYS = {
    "a": "m", "b": "m", "i": "m", "d_u": "m", "t0": "s", "k1": "s",
    "v": "m/s", "t_0_mission": "s", "r_min": "m", "h": "m", "theta_l_deg": "deg",
}
PARAM_REQUIRED = ("a", "i", "d_u", "t0", "k1", "v")
TIMING_KEYS = {"a_c": "s", "l": "s", "t0_pair": "s", "b": "s", "t_c": "s", "rho": "1/px^2"}
TERRAIN_KEYS = {"density": "descriptors/image", "densities": "descriptors/image",
                "cell_size_m": "m", "x0_m": "m", "y0_m": "m"}
SIM_KEYS = {
    "sigma_match": "m", "n_relatives": "count", "t_exe_first": "s", "shot_interval": "s",
    "drift_source": "params|terrain", "retry": "bool", "random_phase": "bool",
    "geodesy_mode": "strict|physical", "db_capacity": "count", "min_scan_count": "count",
    "mode": "sequential|parallel|combined", "trials": "count", "seed": "u64",
    "origin_lat_deg": "deg", "origin_lon_deg": "deg", "origin_alt": "m", "heading_deg": "deg",
}
SECTIONS = {"params": PARAM_KEYS, "timing": TIMING_KEYS, "terrain": TERRAIN_KEYS, "sim": SIM_KEYS}


@dataclass
class RunConfig:
    params: ModeParams
    timing: TimingParams = field(default_factory=TimingParams)
    terrain: TerrainModel | None = None
    sim: dict = field(default_factory=dict)

    def sim_config(self, mode=None, trials=None, seed=None) -> SimConfig:
        s = self.sim
        return SimConfig(
            params=self.params, timing=self.timing, terrain=self.terrain,
            mode=mode or s.get("mode", "sequential"),
            sigma_match=s.get("sigma_match", DEFAULT_SIGMA_MATCH),
            trials=trials or s.get("trials", 1000),
            seed=s.get("seed", 0) if seed is None else seed,
            geodesy_mode=s.get("geodesy_mode", STRICT),
            shot_interval=s.get("shot_interval"),
            n_relatives=s.get("n_relatives"),
            t_exe_first=s.get("t_exe_first"),
            drift_source=s.get("drift_source", "params"),
            retry=s.get("retry", False),
            random_phase=s.get("random_phase", True),
            min_scan_count=s.get("min_scan_count", 1.0),
            db_capacity=s.get("db_capacity", 1_000_000),
            origin=self.origin,
        )

    @property
    def origin(self) -> GeoPose:
        s = self.sim
        return GeoPose.from_degrees(s.get("origin_lat_deg", 0.0), s.get("origin_lon_deg", 0.0),
                                    s.get("origin_alt", 1000.0), s.get("heading_deg", 0.0))


def _line_of(text: str, key: str) -> int | None:
    m = re.search(rf'"{re.escape(key)}"\s*:', text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _number(text, section, key, val, *, integer=False, minimum=None, strict=False):
    line = _line_of(text, key)
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{section}.{key} must be a number", line)
    if not math.isfinite(val):
        raise ConfigError(f"{section}.{key} must be finite", line)
    if integer and val != int(val):
        raise ConfigError(f"{section}.{key} must be an integer", line)
    if minimum is not None and (val <= minimum if strict else val < minimum):
        op = ">" if strict else ">="
        raise ConfigError(f"{section}.{key} must be {op} {minimum}", line)
    return int(val) if integer else float(val)


def parse_config(text: str) -> RunConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    if not isinstance(doc, dict):
        raise ConfigError("top level must be an object", 1)
    for sec, body in doc.items():
        if sec not in SECTIONS:
            raise ConfigError(f"unknown section {sec!r}; expected one of {', '.join(SECTIONS)}",
                              _line_of(text, sec))
        if not isinstance(body, dict):
            raise ConfigError(f"section {sec!r} must be an object", _line_of(text, sec))
        for key in body:
            if key not in SECTIONS[sec]:
                raise ConfigError(f"unknown key {sec}.{key}", _line_of(text, key))
    if "params" not in doc:
        raise ConfigError("missing required section 'params'", 1)

    raw = doc["params"]
    sec_line = _line_of(text, "params")
    for key in PARAM_REQUIRED:
        if key not in raw:
            raise ConfigError(f"missing required key params.{key} ({PARAM_KEYS[key]})", sec_line)
    vals = {k: _number(text, "params", k, v) for k, v in raw.items()}
    if "b" not in vals:
        if "h" in vals and "theta_l_deg" in vals:
            try:
                vals["b"] = footprint(vals["h"], math.radians(vals["theta_l_deg"]))
            except ValueError as exc:
                raise ConfigError(f"params: {exc}", _line_of(text, "theta_l_deg")) from None
        else:
            raise ConfigError("missing required key params.b (or params.h with params.theta_l_deg)",
                              sec_line)
    vals.pop("h", None)
    vals.pop("theta_l_deg", None)
    try:
        params = ModeParams(**vals)
    except ValueError as exc:
        bad = str(exc).split()[0]
        raise ConfigError(f"params: {exc}", _line_of(text, bad)) from None

    timing = TimingParams(**{k: _number(text, "timing", k, v, minimum=0)
                             for k, v in doc.get("timing", {}).items()})

    terrain = None
    if "terrain" in doc:
        t = doc["terrain"]
        if ("density" in t) == ("densities" in t):
            raise ConfigError("terrain needs exactly one of 'density' or 'densities'",
                              _line_of(text, "terrain"))
        if "density" in t:
            dens = _number(text, "terrain", "density", t["density"], minimum=0)
            length = params.v * params.t_0_mission
            terrain = TerrainModel.uniform(dens, max(length, 1.0), max(params.a, 1.0))
        else:
            try:
                grid = np.asarray(t["densities"], dtype=float)
                terrain = TerrainModel(grid, _number(text, "terrain", "cell_size_m",
                                                     t.get("cell_size_m"), minimum=0, strict=True),
                                       t.get("x0_m", 0.0), t.get("y0_m", 0.0))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"terrain: {exc}", _line_of(text, "densities")) from None

    sim = {}
    for key, val in doc.get("sim", {}).items():
        if val is None:
            continue
        if key in ("drift_source", "geodesy_mode", "mode"):
            choices = {"drift_source": ("params", "terrain"), "geodesy_mode": GEODESY_MODES,
                       "mode": MODES}[key]
            if val not in choices:
                raise ConfigError(f"sim.{key} must be one of {', '.join(choices)}",
                                  _line_of(text, key))
            sim[key] = val
        elif key in ("retry", "random_phase"):
            if not isinstance(val, bool):
                raise ConfigError(f"sim.{key} must be true or false", _line_of(text, key))
            sim[key] = val
        elif key in ("n_relatives", "trials", "db_capacity"):
            sim[key] = _number(text, "sim", key, val, integer=True, minimum=1)
        elif key == "seed":
            sim[key] = _number(text, "sim", key, val, integer=True, minimum=0)
        elif key in ("origin_lat_deg", "origin_lon_deg", "heading_deg"):
            sim[key] = _number(text, "sim", key, val)
        else:
            sim[key] = _number(text, "sim", key, val, minimum=0)
    if abs(sim.get("origin_lat_deg", 0.0)) > 90:
        raise ConfigError("sim.origin_lat_deg must be within [-90, 90]", _line_of(text, "origin_lat_deg"))
    return RunConfig(params, timing, terrain, sim)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


def params_to_dict(p: ModeParams) -> dict:
    return {k: getattr(p, k) for k in ("a", "b", "i", "d_u", "t0", "k1", "v", "t_0_mission", "r_min")}
