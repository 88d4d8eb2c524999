"""Run configuration: nested JSON-compatible dicts, presets and validation."""

from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .flows import AbcParams, ForcingSignal, VelocityField, abc_field, generate_duffing_forcing
from .integrator import IntegratorConfig
from .lines import LineConfig
from .strain import GAP_TOL, RESOLUTION_TOL

TWO_PI = 2.0 * np.pi


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


BASE: dict = {
    "field": {
        "model": "abc",
        "A": float(np.sqrt(3.0)),
        "B": float(np.sqrt(2.0)),
        "C": 1.0,
        "forcing": "none",  # none | sinusoidal | tabulated
        "amplitude": 0.1,
        "forcing_file": None,
        "printed_y_equation": False,
    },
    "time": {"t0": 0.0, "T": 40.0},
    "planes": {"s1": [0.0]},  # or {"uniform": [lo, hi, n]} or {"periodic": n}
    "grid": {
        "nx": 200,
        "ny": 200,
        "extent": None,  # [xmin, xmax, ymin, ymax]; default is the field domain
        "dt": 0.01,
        "grad_h": 1e-6,
        "gap_tol": GAP_TOL,
        "resolution_tol": RESOLUTION_TOL,
    },
    "seeds": {"nx": 20, "ny": 20},
    "lines": {
        "eps0": {"strain": 1e-4, "stretch": 1e-4, "shear": 1e-2},
        "step": None,  # default 1e-3 of the domain width
        "window": None,  # default 20 steps
        "closure_tol": None,
        "d0": None,
        "min_winding": 0.9 * TWO_PI,
        "max_arclength": None,
        "hausdorff_max": False,
    },
    "surfaces": {"M": 200, "jump": 0.2, "center": None, "center_file": None,
                 "center_periodic": True, "R1": 3.0, "R2": 1.0, "lambda2": False},
    "experiments": {
        "tracers": {"offsets": [0.05, 0.1], "n_seeds": 4, "T": 10 * np.pi,
                    "tube_factor": 1.5, "dt_sample": 0.1},
        "perturbed_strainline": {"delta": 0.01, "T": 3.0, "direction": "normal"},
        "area": {"patch": [0.0, 1.0, 0.0, 1.0], "z": 0.5, "n": 20, "T": 2.0},
    },
    "workers": 1,
    "out": "out",
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "planes":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


PRESETS: dict = {
    # elliptic: z = 0 plane, 1000 x 1000 points, horizon 40
    "steady-abc": _merge(BASE, {
        "time": {"t0": 0.0, "T": 40.0},
        "grid": {"nx": 1000, "ny": 1000},
        "seeds": {"nx": 100, "ny": 100},
    }),
    # hyperbolic: 500 x 500, horizon 3
    "steady-abc-strain": _merge(BASE, {
        "time": {"t0": 0.0, "T": 3.0},
        "grid": {"nx": 500, "ny": 500},
        "seeds": {"nx": 100, "ny": 100},
    }),
    # elliptic: z = 0 plane, 500 x 500, horizon 30 pi; tracers over the same span
    "periodic-abc": _merge(BASE, {
        "field": {"forcing": "sinusoidal", "amplitude": 0.1},
        "time": {"t0": 0.0, "T": 30 * np.pi},
        "grid": {"nx": 500, "ny": 500},
        "seeds": {"nx": 100, "ny": 100},
        "experiments": {"tracers": {"T": 30 * np.pi}},
    }),
    # hyperbolic: 21 planes z = 0 .. 0.1, horizon 4, 600 x 10 seeds
    "periodic-abc-strain": _merge(BASE, {
        "field": {"forcing": "sinusoidal", "amplitude": 0.1},
        "time": {"t0": 0.0, "T": 4.0},
        "grid": {"nx": 500, "ny": 500},
        "seeds": {"nx": 600, "ny": 10},
        "planes": {"uniform": [0.0, 0.1, 21]},
    }),
    # elliptic: 150 planes s1 = 2 k pi / 150, horizon 100; tracers over [0, 25]
    "chaotic-abc": _merge(BASE, {
        "field": {"forcing": "tabulated"},
        "time": {"t0": 0.0, "T": 100.0},
        "grid": {"nx": 500, "ny": 500},
        "seeds": {"nx": 100, "ny": 100},
        "planes": {"periodic": 150},
        "experiments": {"tracers": {"T": 25.0}},
    }),
    # hyperbolic: flow map over [0, 5] on the same plane family
    "chaotic-abc-strain": _merge(BASE, {
        "field": {"forcing": "tabulated"},
        "time": {"t0": 0.0, "T": 5.0},
        "grid": {"nx": 500, "ny": 500},
        "seeds": {"nx": 100, "ny": 100},
        "planes": {"periodic": 150},
    }),
}


def set_dotted(cfg: dict, key: str, value: Any) -> None:
    parts = key.split(".")
    if parts[0] == "planes" and len(parts) == 2:
        cfg["planes"] = {parts[1]: value}  # a plane family replaces the previous one
        return
    d = cfg
    for p in parts[:-1]:
        if not isinstance(d.get(p), dict):
            raise ConfigError(f"unknown config section {p!r} in {key!r}")
        d = d[p]
    if parts[-1] not in d:
        raise ConfigError(f"unknown config key {key!r}")
    d[parts[-1]] = value


def parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(path: Optional[str] = None, preset: Optional[str] = None,
                overrides: Optional[dict] = None) -> dict:
    """Preset (or base) < config file < dotted overrides. A run manifest is
    accepted as a config file (its embedded resolved config is used)."""
    if preset is not None and preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    cfg = copy.deepcopy(PRESETS[preset] if preset else BASE)
    if path is not None:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if isinstance(user, dict) and "config" in user and "planes_status" in user:
            user = user["config"]
        unknown = set(user) - set(BASE)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = _merge(cfg, user)
    for k, v in (overrides or {}).items():
        set_dotted(cfg, k, v)
    validate(cfg)
    return cfg


def plane_values(cfg: dict) -> list[float]:
    p = cfg["planes"]
    if "s1" in p and p["s1"] is not None and not ("uniform" in p or "periodic" in p):
        return [float(v) for v in p["s1"]]
    if "uniform" in p:
        lo, hi, n = p["uniform"]
        return [float(v) for v in np.linspace(lo, hi, int(n))]
    if "periodic" in p:
        n = int(p["periodic"])
        return [float(v) for v in TWO_PI * np.arange(n) / n]
    raise ConfigError("planes needs one of s1, uniform or periodic")


def validate(cfg: dict) -> None:
    g = cfg["grid"]
    if int(g["nx"]) < 8 or int(g["ny"]) < 8:
        raise ConfigError("grid dims must be at least 8 x 8")
    s = cfg["seeds"]
    if int(s["nx"]) < 1 or int(s["ny"]) < 1:
        raise ConfigError("seed dims must be positive")
    if int(s["nx"]) > int(g["nx"]) or int(s["ny"]) > int(g["ny"]):
        raise ConfigError("seed lattice must not be finer than the grid")
    if not float(cfg["time"]["T"]) != 0:
        raise ConfigError("time.T must be nonzero")
    for k in ("dt", "grad_h", "gap_tol", "resolution_tol"):
        if not float(g[k]) > 0:
            raise ConfigError(f"grid.{k} must be positive")
    if g["extent"] is not None:
        xa, xb, ya, yb = g["extent"]
        if not (xb > xa and yb > ya):
            raise ConfigError("grid.extent must be [xmin, xmax, ymin, ymax] with max > min")
    f = cfg["field"]
    if f["model"] != "abc":
        raise ConfigError(f"unknown field model {f['model']!r}")
    if f["forcing"] not in ("none", "sinusoidal", "tabulated"):
        raise ConfigError(f"unknown forcing {f['forcing']!r}")
    if f["forcing_file"] is not None and not Path(f["forcing_file"]).exists():
        raise ConfigError(f"forcing file not found: {f['forcing_file']}")
    sf = cfg["surfaces"]
    if sf["center_file"] is not None and not Path(sf["center_file"]).exists():
        raise ConfigError(f"center curve file not found: {sf['center_file']}")
    vals = plane_values(cfg)
    if len(vals) == 0 or np.any(np.diff(vals) <= 0):
        raise ConfigError("plane offsets must be nonempty and strictly increasing")
    if int(cfg["workers"]) < 1:
        raise ConfigError("workers must be >= 1")
    ln = cfg["lines"]
    for k, v in ln["eps0"].items():
        if not float(v) > 0:
            raise ConfigError(f"lines.eps0.{k} must be positive")
    for k in ("step", "window", "closure_tol", "d0", "max_arclength"):
        if ln[k] is not None and not float(ln[k]) > 0:
            raise ConfigError(f"lines.{k} must be positive")


def build_field(cfg: dict, forcing_out: Optional[Path] = None) -> VelocityField:
    """Velocity field from the config; a missing tabulated forcing is generated
    (covering the run's time window) and written to ``forcing_out``."""
    f = cfg["field"]
    signal = None
    if f["forcing"] == "tabulated":
        if f["forcing_file"] is not None:
            signal = ForcingSignal.from_csv(f["forcing_file"])
        else:
            t0, T = float(cfg["time"]["t0"]), float(cfg["time"]["T"])
            lo = min(t0, t0 + T, 0.0)
            hi = max(t0, t0 + T, t0 + float(cfg["experiments"]["tracers"]["T"])) + 1.0
            signal = generate_duffing_forcing(t_span=(lo, hi))
            if forcing_out is not None:
                signal.to_csv(forcing_out)
    p = AbcParams(float(f["A"]), float(f["B"]), float(f["C"]), f["forcing"],
                  float(f["amplitude"]), signal, bool(f["printed_y_equation"]))
    return abc_field(p)


def integrator_config(cfg: dict) -> IntegratorConfig:
    return IntegratorConfig(float(cfg["grid"]["dt"]), float(cfg["grid"]["grad_h"]))


def domain_width(cfg: dict) -> float:
    return TWO_PI


def line_config(cfg: dict, grid, kind: str) -> LineConfig:
    ln = cfg["lines"]
    base = "shear" if kind.startswith("shear") else kind
    kw = {k: ln[k] for k in ("step", "window", "closure_tol", "d0", "max_arclength")
          if ln[k] is not None}
    return LineConfig.for_grid(grid, float(ln["eps0"][base]), domain_width=domain_width(cfg),
                               min_winding=float(ln["min_winding"]),
                               hausdorff_max=bool(ln["hausdorff_max"]), **kw)
