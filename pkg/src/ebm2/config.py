"""JSON run configuration: defaults, strict key checking, conversion to model objects.

Every error names the offending key path, e.g. ``model.eps_a``.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass

import numpy as np

from .integrator import StepControls
from .legendre import SpectralField, SpectralGrid
from .model import Coalbedo, Forcing, ModelParams, StateVec, validate
from .qualitative import random_state

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


DEFAULTS = {
    "schema": SCHEMA_VERSION,
    "model": {
        "gamma_a": 1.0,
        "gamma_s": 4.0,
        "kappa_a": 0.3,
        "kappa_s": 0.1,
        "sigma_b": 1.0,
        "eps_a": 1.0,
        "lam": 0.5,
    },
    "forcing": {
        "q": {"kind": "p2", "q0": 1.0, "s2": -0.3},
        "r": {"kind": "constant", "r0": 1.0},
        "beta_a": {"kind": "constant", "value": 0.0},
        "beta_s": {"kind": "constant", "value": 0.7},
    },
    "grid": {"n_modes": 24, "n_quad": None},
    "ic": {"kind": "constant", "t_a": 1.0, "t_s": 1.0},
    "run": {
        "t_max": 10.0,
        "dt_init": 1e-3,
        "rel_tol": 1e-7,
        "dt_min": 1e-30,
        "blowup_threshold": 1e8,
        "record_every": 0.1,
        "expect_blowup": False,
    },
    "outputs": {"dir": "ebm2_out", "formats": ["coeffs", "nodal", "energy"]},
    "scan": {"parameter": "model.eps_a", "values": []},
}

# per-kind allowed keys for the polymorphic sections
_KIND_KEYS = {
    "forcing.q": {
        "constant": {"q0"},
        "p2": {"q0", "s2"},
        "bump": {"q0", "power"},
        "legendre": {"coeffs"},
    },
    "forcing.r": {"constant": {"r0"}, "sinusoidal": {"r0", "delta", "omega"}},
    "forcing.beta_a": {"constant": {"value"}, "smooth-ramp": {"beta_min", "beta_max", "t_low", "t_high"}},
    "forcing.beta_s": {"constant": {"value"}, "smooth-ramp": {"beta_min", "beta_max", "t_low", "t_high"}},
    "ic": {
        "constant": {"t_a", "t_s"},
        "legendre-coeffs": {"t_a", "t_s"},
        "random": {"seed", "mean", "amp", "n_active"},
    },
}
FORMATS = ("coeffs", "nodal", "energy")


def _merge(base: dict, user: dict, path: str) -> dict:
    out = copy.deepcopy(base)
    for k, v in user.items():
        key = f"{path}.{k}" if path else k
        poly = key in _KIND_KEYS
        if k not in base and not poly:
            raise ConfigError(key, "unknown key")
        if isinstance(v, dict):
            if key in _KIND_KEYS:
                out[k] = _merge_kind(base.get(k, {}), v, key)
            elif isinstance(base.get(k), dict):
                out[k] = _merge(base[k], v, key)
            else:
                raise ConfigError(key, "unexpected object")
        else:
            if isinstance(base.get(k), dict):
                raise ConfigError(key, "expected an object")
            out[k] = v
    return out


def _merge_kind(base: dict, user: dict, path: str) -> dict:
    kind = user.get("kind", base.get("kind"))
    allowed = _KIND_KEYS[path]
    if kind not in allowed:
        raise ConfigError(f"{path}.kind", f"unknown kind {kind!r}; expected one of {sorted(allowed)}")
    # defaults of the base only carry over when the kind is unchanged
    out = dict(base) if kind == base.get("kind") else {"kind": kind}
    for k, v in user.items():
        if k != "kind" and k not in allowed[kind]:
            raise ConfigError(f"{path}.{k}", f"unknown key for kind {kind!r}")
        out[k] = v
    return out


def _num(cfg: dict, key: str, section: str, positive=False, nonneg=False, integer=False):
    path = f"{section}.{key}"
    if key not in cfg:
        raise ConfigError(path, "missing")
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"expected a number, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(path, "must be finite")
    if integer and (not float(v).is_integer()):
        raise ConfigError(path, f"expected an integer, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(path, f"must be > 0, got {v!r}")
    if nonneg and v < 0:
        raise ConfigError(path, f"must be >= 0, got {v!r}")
    return int(v) if integer else float(v)


def _num_list(v, path: str, length: int | None = None) -> list[float]:
    if not isinstance(v, list) or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in v):
        raise ConfigError(path, f"expected a list of numbers, got {v!r}")
    if length is not None and len(v) != length:
        raise ConfigError(path, f"expected {length} numbers, got {len(v)}")
    if not all(math.isfinite(x) for x in v):
        raise ConfigError(path, "must be finite")
    return [float(x) for x in v]


def merge_config(user: dict) -> dict:
    """Defaults overlaid with ``user``; unknown keys and a wrong schema are errors."""
    if not isinstance(user, dict):
        raise ConfigError("", "top level must be a JSON object")
    if "schema" not in user:
        raise ConfigError("schema", "missing (expected 1)")
    if user["schema"] != SCHEMA_VERSION or isinstance(user["schema"], bool):
        raise ConfigError("schema", f"unsupported version {user['schema']!r}")
    return _merge(DEFAULTS, user, "")


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            user = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON in {path}: {exc}") from None
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc.strerror}") from None
    return merge_config(user)


@dataclass
class RunConfig:
    params: ModelParams
    forcing: Forcing
    grid: SpectralGrid
    T0: StateVec
    t_max: float
    controls: StepControls
    expect_blowup: bool
    out_dir: str
    formats: tuple[str, ...]
    raw: dict


def _coalbedo(c: dict, path: str) -> Coalbedo:
    if c["kind"] == "constant":
        return Coalbedo.constant(_num(c, "value", path, nonneg=True))
    vals = [_num(c, k, path) for k in ("beta_min", "beta_max", "t_low", "t_high")]
    if vals[0] < 0:
        raise ConfigError(f"{path}.beta_min", "must be >= 0")
    if vals[1] < vals[0]:
        raise ConfigError(f"{path}.beta_max", "must be >= beta_min")
    if not vals[3] > vals[2]:
        raise ConfigError(f"{path}.t_high", "must be > t_low")
    return Coalbedo.ramp(*vals)


def _q_field(c: dict, grid: SpectralGrid) -> SpectralField:
    path = "forcing.q"
    kind = c["kind"]
    if kind == "legendre":
        coeffs = _num_list(c.get("coeffs"), f"{path}.coeffs")
        if len(coeffs) > grid.n_modes:
            raise ConfigError(f"{path}.coeffs", "more coefficients than grid.n_modes")
        return SpectralField(grid, np.pad(coeffs, (0, grid.n_modes - len(coeffs))))
    q0 = _num(c, "q0", path, nonneg=True)
    if kind == "constant":
        return Forcing.q_constant(grid, q0)
    if kind == "p2":
        s2 = _num(c, "s2", path)
        if not -1.0 < s2 < 1.0:
            raise ConfigError(f"{path}.s2", "must lie in (-1, 1)")
        if grid.n_modes < 3 and s2 != 0:
            raise ConfigError("grid.n_modes", "must be >= 3 for a P2 insolation profile")
        return Forcing.q_p2(grid, q0, s2)
    c.setdefault("power", 2)
    power = _num(c, "power", path, positive=True, integer=True)
    if 2 * power > grid.n_modes - 1:
        raise ConfigError(f"{path}.power", "bump degree exceeds the grid")
    return Forcing.q_bump(grid, q0, power)


def _forcing(cfg: dict, grid: SpectralGrid) -> Forcing:
    f = cfg["forcing"]
    r = f["r"]
    r0 = _num(r, "r0", "forcing.r", positive=True)
    if r["kind"] == "sinusoidal":
        delta = _num(r, "delta", "forcing.r", nonneg=True)
        if not delta < 1.0:
            raise ConfigError("forcing.r.delta", "must be < 1 so that r stays positive")
        omega = _num(r, "omega", "forcing.r")
        kw = dict(r_kind="sinusoidal", r0=r0, r_delta=delta, r_omega=omega)
    else:
        kw = dict(r_kind="constant", r0=r0)
    return Forcing(
        q=_q_field(f["q"], grid),
        beta_a=_coalbedo(f["beta_a"], "forcing.beta_a"),
        beta_s=_coalbedo(f["beta_s"], "forcing.beta_s"),
        **kw,
    )


def _initial_state(cfg: dict, grid: SpectralGrid, seed: int | None) -> StateVec:
    ic = cfg["ic"]
    kind = ic["kind"]
    if kind == "constant":
        return StateVec.constant(grid, _num(ic, "t_a", "ic"), _num(ic, "t_s", "ic"))
    if kind == "legendre-coeffs":
        U = np.zeros((2, grid.n_modes))
        for c, name in enumerate(("t_a", "t_s")):
            vals = _num_list(ic.get(name), f"ic.{name}")
            if not 1 <= len(vals) <= grid.n_modes:
                raise ConfigError(f"ic.{name}", f"expected 1..{grid.n_modes} coefficients")
            U[c, : len(vals)] = vals
        return StateVec.from_coeffs(grid, U)
    # random: the seed must be explicit
    if seed is None:
        if "seed" not in ic:
            raise ConfigError("ic.seed", "random initial data need an explicit seed (config or --seed)")
        seed = _num(ic, "seed", "ic", nonneg=True, integer=True)
    if not 0 <= seed < 2**64:
        raise ConfigError("ic.seed", "must be an unsigned 64-bit integer")
    ic["seed"] = seed  # the effective config records the seed actually used
    mean = _num_list(ic.setdefault("mean", [1.0, 1.0]), "ic.mean", 2)
    ic.setdefault("amp", 0.3)
    ic.setdefault("n_active", 8)
    amp = _num(ic, "amp", "ic", nonneg=True)
    n_active = _num(ic, "n_active", "ic", positive=True, integer=True)
    return random_state(grid, np.random.default_rng(seed), mean=mean, amp=amp, n_active=n_active)


def build(cfg: dict, seed: int | None = None, out_dir: str | None = None) -> RunConfig:
    """Turn a merged config dict into validated model objects."""
    m = cfg["model"]
    vals = {}
    for k in DEFAULTS["model"]:
        vals[k] = _num(m, k, "model", nonneg=(k == "lam"), positive=(k != "lam"))
    params = ModelParams(**vals)
    g = cfg["grid"]
    n_modes = _num(g, "n_modes", "grid", positive=True, integer=True)
    n_quad = g.get("n_quad")
    if n_quad is not None:
        n_quad = _num(g, "n_quad", "grid", positive=True, integer=True)
    try:
        grid = SpectralGrid(n_modes, n_quad)
    except ValueError as exc:
        raise ConfigError("grid.n_quad", str(exc)) from None
    forcing = _forcing(cfg, grid)
    problems = validate(params, forcing)
    if problems:
        raise ConfigError("forcing", "; ".join(problems))
    T0 = _initial_state(cfg, grid, seed)
    r = cfg["run"]
    t_max = _num(r, "t_max", "run", positive=True)
    ctrl = {k: _num(r, k, "run", positive=True) for k in ("dt_init", "rel_tol", "dt_min", "blowup_threshold", "record_every")}
    if not ctrl["dt_min"] < ctrl["dt_init"]:
        raise ConfigError("run.dt_min", "must be < run.dt_init")
    if not isinstance(r.get("expect_blowup"), bool):
        raise ConfigError("run.expect_blowup", "expected true or false")
    o = cfg["outputs"]
    if not isinstance(o.get("dir"), str) or not o["dir"]:
        raise ConfigError("outputs.dir", "expected a non-empty string")
    fmts = o.get("formats")
    if not isinstance(fmts, list) or any(f not in FORMATS for f in fmts):
        raise ConfigError("outputs.formats", f"expected a list drawn from {list(FORMATS)}")
    return RunConfig(
        params=params,
        forcing=forcing,
        grid=grid,
        T0=T0,
        t_max=t_max,
        controls=StepControls(**ctrl),
        expect_blowup=r["expect_blowup"],
        out_dir=out_dir or o["dir"],
        formats=tuple(fmts),
        raw=cfg,
    )


def set_path(cfg: dict, dotted: str, value) -> dict:
    """Copy of cfg with one dotted key replaced (used by scans)."""
    out = copy.deepcopy(cfg)
    node = out
    parts = dotted.split(".")
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ConfigError(dotted, "not a parameter path")
        node = node[p]
    if parts[-1] not in node or isinstance(node[parts[-1]], (dict, list)):
        raise ConfigError(dotted, "not a scalar parameter")
    node[parts[-1]] = value
    return out
