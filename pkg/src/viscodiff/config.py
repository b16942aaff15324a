"""Scenario configuration: flat dotted key-value files, presets, builders.

A scenario file is a sequence of ``section.key = value`` lines, for
example::

    mesh.N = 256
    model.beta0 = "tanh"
    model.beta0.beta_R = 2.0

Values are ints, floats, booleans (true/false), quoted strings, or
bracketed numeric lists.  A ``preset = "name"`` line starts from the
named built-in scenario and overrides it.  Parsing applies the defaults
table below and reports unknown or ill-typed keys with line numbers;
serialize/parse round-trips are semantically exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .coefficients import (
    Box,
    PhysicalCoefficients,
    ScalarModel,
    TransformedModel,
    make_scalar_model,
    physical_from_models,
    transform,
)
from .discretization import BoundaryData, Mesh, build_mesh
from .output import read_snapshot
from .solver import InitialData, SolverConfig

__all__ = [
    "ConfigError",
    "ScenarioConfig",
    "parse_config",
    "serialize_config",
    "preset_config",
    "PRESET_NAMES",
    "DEFAULTS",
    "build_mesh_from",
    "build_physical",
    "build_model",
    "build_boundary",
    "build_initial",
    "build_solver_config",
    "longtime_box",
]


class ConfigError(Exception):
    def __init__(self, message: str, line: Optional[int] = None,
                 key: Optional[str] = None):
        self.line = line
        self.key = key
        where = ""
        if line is not None:
            where += f" (line {line})"
        if key is not None:
            where += f" [key {key!r}]"
        super().__init__(message + where)


MODEL_ROLES = ("D0", "E0", "M0", "beta0", "mu0", "nu0")

# defaults table: a minimal file inherits all of these
DEFAULTS: dict[str, object] = {
    "mesh.L": 1.0,
    "mesh.N": 64,
    "time.dt": 1e-3,
    "time.T_end": 1.0,
    "time.output_every": 0,          # 0: snapshot only first and last state
    "epsilon": 0.0,
    "stress_scheme": "implicit-decay",
    "model.D0": "constant", "model.D0.value": 1.0,
    "model.E0": "constant", "model.E0.value": 0.0,
    "model.M0": "constant", "model.M0.value": 0.0,
    "model.beta0": "constant", "model.beta0.value": 1.0,
    "model.mu0": "constant", "model.mu0.value": 0.0,
    "model.nu0": "constant", "model.nu0.value": 0.0,
    "initial.u0": "constant", "initial.u0.value": 0.0,
    "initial.sigma0": "constant", "initial.sigma0.value": 0.0,
    "boundary.phi_left": "zero",
    "boundary.phi_right": "zero",
    "check.mass_balance": True,
    "check.lyapunov": False,
    "signature": "none",
}

_SIMPLE_SCHEMA: dict[str, type] = {
    "mesh.L": float,
    "mesh.N": int,
    "time.dt": float,
    "time.T_end": float,
    "time.output_every": int,
    "epsilon": float,
    "stress_scheme": str,
    "check.mass_balance": bool,
    "check.lyapunov": bool,
    "check.analytic": str,
    "check.analytic_tol": float,
    "signature": str,
    "front.threshold": float,
    "longtime.Gamma": float,
    "longtime.gamma_grid": list,
    "longtime.n_samples": int,
    "longtime.box.t": list,
    "longtime.box.x": list,
    "longtime.box.u": list,
    "longtime.box.s": list,
}

_FIELD_KINDS = {
    "constant": {"value": None},
    "cosine": {"mean": 0.0, "amplitude": None, "mode": 1},
    "step": {"left": None, "right": None, "x0": None},
    "file": {"path": None},
}
_SIGNAL_KINDS = {
    "zero": {},
    "constant": {"value": None},
    "sinusoid": {"amplitude": None, "omega": None, "phase": 0.0},
    "pulse": {"value": None, "t_on": 0.0, "t_off": None},
}
_SIGNATURES = ("none", "overshoot", "undershoot", "front")
_GROUP_HEADS = tuple(f"model.{r}" for r in MODEL_ROLES) + (
    "initial.u0", "initial.sigma0", "boundary.phi_left", "boundary.phi_right")


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario with defaults applied; semantics live in ``values``."""

    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    def group(self, head: str) -> tuple[str, dict]:
        """(kind name, params) for a model/field/signal group key."""
        name = self.values[head]
        prefix = head + "."
        params = {k[len(prefix):]: v for k, v in self.values.items()
                  if k.startswith(prefix) and "." not in k[len(prefix):]}
        return name, params


# ---------------------------------------------------------------------------
# parsing


def _parse_scalar(tok: str):
    if len(tok) >= 2 and tok[0] == tok[-1] == '"':
        return tok[1:-1]
    if tok == "true":
        return True
    if tok == "false":
        return False
    try:
        return int(tok)
    except ValueError:
        pass
    try:
        return float(tok)
    except ValueError:
        pass
    return tok  # bare word: treated as a string


def _parse_value(tok: str, line_no: int):
    tok = tok.strip()
    if not tok:
        raise ConfigError("empty value", line=line_no)
    if tok.startswith("["):
        if not tok.endswith("]"):
            raise ConfigError("unterminated list", line=line_no)
        inner = tok[1:-1].strip()
        if not inner:
            return []
        items = []
        for part in inner.split(","):
            v = _parse_scalar(part.strip())
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise ConfigError(f"list entries must be numbers, got {part!r}",
                                  line=line_no)
            items.append(float(v))
        return items
    return _parse_scalar(tok)


def _raw_pairs(text: str):
    pairs = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}",
                              line=line_no)
        key, _, val = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError("missing key", line=line_no)
        pairs.append((key, _parse_value(val, line_no), line_no))
    return pairs


def _overlay(base: dict, pairs) -> dict:
    """Apply updates; changing a group's kind drops the group's old params."""
    out = dict(base)
    for key, value, _line in pairs:
        if key in _GROUP_HEADS and out.get(key) != value:
            prefix = key + "."
            for stale in [k for k in out if k.startswith(prefix)]:
                del out[stale]
        out[key] = value
    return out


def _is_known_key(key: str) -> bool:
    if key in _SIMPLE_SCHEMA:
        return True
    for head in _GROUP_HEADS:
        if key == head:
            return True
        if key.startswith(head + ".") and "." not in key[len(head) + 1:]:
            return True
    return False


def _coerce(key: str, value, want: type, line: Optional[int]):
    if want is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if want is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}",
                              line=line, key=key)
        return value
    if not isinstance(value, want) or (want is not bool and isinstance(value, bool)):
        raise ConfigError(f"expected {want.__name__}, got {value!r}",
                          line=line, key=key)
    return value


def _validate_group(values: dict, head: str, kinds: dict, lines: dict):
    name = values.get(head)
    if not isinstance(name, str) or name not in kinds:
        raise ConfigError(
            f"unknown kind {name!r}; expected one of {sorted(kinds)}",
            line=lines.get(head), key=head)
    schema = kinds[name]
    prefix = head + "."
    present = {k[len(prefix):] for k in values if k.startswith(prefix)}
    for extra in sorted(present - set(schema)):
        raise ConfigError(f"parameter {extra!r} not valid for kind {name!r}",
                          line=lines.get(prefix + extra), key=prefix + extra)
    for pname, default in schema.items():
        key = prefix + pname
        if key not in values:
            if default is None:
                raise ConfigError(f"kind {name!r} requires parameter {pname!r}",
                                  key=key)
            values[key] = default
        elif pname == "path":
            values[key] = _coerce(key, values[key], str, lines.get(key))
        elif pname == "mode":
            values[key] = _coerce(key, values[key], int, lines.get(key))
        else:
            values[key] = _coerce(key, values[key], float, lines.get(key))


def parse_config(text: str) -> ScenarioConfig:
    """Parse, expand any preset, apply defaults, and validate a scenario."""
    pairs = _raw_pairs(text)
    lines = {k: ln for k, _v, ln in pairs}

    preset_name = None
    body = []
    for key, value, line_no in pairs:
        if key == "preset":
            if not isinstance(value, str):
                raise ConfigError("preset must be a name", line=line_no,
                                  key="preset")
            preset_name = value
        else:
            body.append((key, value, line_no))

    base = dict(DEFAULTS)
    if preset_name is not None:
        if preset_name not in PRESETS:
            raise ConfigError(
                f"unknown preset {preset_name!r}; available: "
                f"{sorted(PRESETS)}", line=lines.get("preset"), key="preset")
        base = _overlay(base, _raw_pairs(PRESETS[preset_name]))

    for key, _value, line_no in body:
        if not _is_known_key(key):
            raise ConfigError(f"unknown configuration key {key!r}",
                              line=line_no, key=key)
    values = _overlay(base, body)

    for key, want in _SIMPLE_SCHEMA.items():
        if key in values:
            if want is list:
                if not isinstance(values[key], list):
                    raise ConfigError(f"expected a list, got {values[key]!r}",
                                      line=lines.get(key), key=key)
            else:
                values[key] = _coerce(key, values[key], want, lines.get(key))

    # numeric sanity
    if values["mesh.L"] <= 0:
        raise ConfigError("mesh.L must be positive", key="mesh.L",
                          line=lines.get("mesh.L"))
    if values["mesh.N"] < 2:
        raise ConfigError("mesh.N must be at least 2", key="mesh.N",
                          line=lines.get("mesh.N"))
    if values["time.dt"] <= 0:
        raise ConfigError("time.dt must be positive", key="time.dt",
                          line=lines.get("time.dt"))
    if values["time.T_end"] < 0:
        raise ConfigError("time.T_end must be non-negative", key="time.T_end",
                          line=lines.get("time.T_end"))
    if values["time.output_every"] < 0:
        raise ConfigError("time.output_every must be non-negative",
                          key="time.output_every",
                          line=lines.get("time.output_every"))
    if values["epsilon"] < 0:
        raise ConfigError("epsilon must be non-negative", key="epsilon",
                          line=lines.get("epsilon"))
    if values["stress_scheme"] not in ("implicit-decay", "explicit"):
        raise ConfigError(f"unknown stress_scheme {values['stress_scheme']!r}",
                          key="stress_scheme", line=lines.get("stress_scheme"))
    if values["signature"] not in _SIGNATURES:
        raise ConfigError(f"unknown signature {values['signature']!r}",
                          key="signature", line=lines.get("signature"))

    # coefficient models must exist in the registry and accept their params
    for role in MODEL_ROLES:
        head = f"model.{role}"
        name = values.get(head)
        prefix = head + "."
        params = {k[len(prefix):]: v for k, v in values.items()
                  if k.startswith(prefix)}
        try:
            make_scalar_model(name, **params)
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"invalid coefficient model for {role}: {exc}",
                              key=head, line=lines.get(head)) from exc

    _validate_group(values, "initial.u0", _FIELD_KINDS, lines)
    _validate_group(values, "initial.sigma0", _FIELD_KINDS, lines)
    _validate_group(values, "boundary.phi_left", _SIGNAL_KINDS, lines)
    _validate_group(values, "boundary.phi_right", _SIGNAL_KINDS, lines)

    for key in ("longtime.box.t", "longtime.box.x", "longtime.box.u",
                "longtime.box.s", "longtime.gamma_grid"):
        if key in values:
            vals = values[key]
            if (key != "longtime.gamma_grid" and len(vals) != 2) or not all(
                    isinstance(v, float) and math.isfinite(v) for v in vals):
                raise ConfigError(f"expected a finite numeric range for {key}",
                                  key=key, line=lines.get(key))

    return ScenarioConfig(values=values)


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return f'"{v}"'
    if isinstance(v, list):
        return "[" + ", ".join(repr(float(x)) for x in v) + "]"
    raise TypeError(f"cannot serialize {v!r}")


def serialize_config(cfg: ScenarioConfig) -> str:
    """Canonical text form; parse(serialize(cfg)) reproduces cfg exactly."""
    return "\n".join(f"{k} = {_format_value(v)}"
                     for k, v in sorted(cfg.values.items())) + "\n"


# ---------------------------------------------------------------------------
# builders


def build_mesh_from(cfg: ScenarioConfig) -> Mesh:
    return build_mesh(cfg["mesh.L"], cfg["mesh.N"])


def _scalar_models(cfg: ScenarioConfig) -> dict[str, ScalarModel]:
    out = {}
    for role in MODEL_ROLES:
        name, params = cfg.group(f"model.{role}")
        out[role] = make_scalar_model(name, **params)
    return out


def build_physical(cfg: ScenarioConfig) -> PhysicalCoefficients:
    m = _scalar_models(cfg)
    try:
        return physical_from_models(m["D0"], m["E0"], m["M0"],
                                    m["beta0"], m["mu0"], m["nu0"])
    except ValueError as exc:
        raise ConfigError(str(exc), key="model.nu0") from exc


def build_model(cfg: ScenarioConfig) -> TransformedModel:
    return transform(build_physical(cfg))


def _signal(kind: str, params: dict):
    if kind == "zero":
        return lambda t: 0.0
    if kind == "constant":
        v = params["value"]
        return lambda t: v
    if kind == "sinusoid":
        a, w, p = params["amplitude"], params["omega"], params["phase"]
        return lambda t: a * math.sin(w * t + p)
    if kind == "pulse":
        v, t_on, t_off = params["value"], params["t_on"], params["t_off"]
        return lambda t: v if t_on < t <= t_off else 0.0
    raise ConfigError(f"unknown boundary signal kind {kind!r}")


def build_boundary(cfg: ScenarioConfig) -> BoundaryData:
    lk, lp = cfg.group("boundary.phi_left")
    rk, rp = cfg.group("boundary.phi_right")
    return BoundaryData(phi_left=_signal(lk, lp), phi_right=_signal(rk, rp))


def _field(kind: str, params: dict, mesh: Mesh, column: str) -> np.ndarray:
    x = mesh.nodes
    if kind == "constant":
        return np.full_like(x, params["value"])
    if kind == "cosine":
        return params["mean"] + params["amplitude"] * np.cos(
            params["mode"] * math.pi * x / mesh.L)
    if kind == "step":
        return np.where(x < params["x0"], params["left"], params["right"])
    if kind == "file":
        data = read_snapshot(params["path"])
        vals = np.asarray(data[column], dtype=float)
        if vals.shape != x.shape:
            raise ConfigError(
                f"snapshot {params['path']!r} has {vals.size} nodes, "
                f"mesh has {x.size}")
        return vals
    raise ConfigError(f"unknown field kind {kind!r}")


def build_initial(cfg: ScenarioConfig, mesh: Mesh,
                  phys: PhysicalCoefficients) -> InitialData:
    uk, up = cfg.group("initial.u0")
    sk, sp = cfg.group("initial.sigma0")
    u0 = _field(uk, up, mesh, "u")
    sigma0 = _field(sk, sp, mesh, "sigma")
    return InitialData(u0, sigma0, phys)


def build_solver_config(cfg: ScenarioConfig) -> SolverConfig:
    return SolverConfig(dt=cfg["time.dt"], T_end=cfg["time.T_end"],
                        epsilon=cfg["epsilon"],
                        stress_scheme=cfg["stress_scheme"])


def longtime_box(cfg: ScenarioConfig) -> Box:
    def rng(key, default):
        v = cfg.get(key)
        return (v[0], v[1]) if v else default
    return Box(
        t=rng("longtime.box.t", (0.0, cfg["time.T_end"])),
        x=rng("longtime.box.x", (0.0, cfg["mesh.L"])),
        u=rng("longtime.box.u", (0.0, 1.0)),
        s=rng("longtime.box.s", (-1.0, 1.0)),
    )


def has_longtime(cfg: ScenarioConfig) -> bool:
    return any(k.startswith("longtime.") for k in cfg.values)


# ---------------------------------------------------------------------------
# presets


PRESETS: dict[str, str] = {
    # pure Fickian limit: constant diffusivity, decoupled stress, closed
    # boundary; compares against the decaying cosine mode
    "fickian": """
mesh.L = 1.0
mesh.N = 256
time.dt = 1e-4
time.T_end = 0.1
time.output_every = 100
model.D0 = "constant"
model.D0.value = 1.0
model.beta0 = "constant"
model.beta0.value = 1.0
initial.u0 = "cosine"
initial.u0.mean = 0.0
initial.u0.amplitude = 1.0
initial.u0.mode = 1
check.analytic = "heat-cosine"
check.analytic_tol = 5e-3
""",
    # homogenization regime: constant coefficients satisfying the coupled
    # quadratic-form condition, no forcing, closed boundary
    "homogenize": """
mesh.L = 1.0
mesh.N = 64
time.dt = 1e-3
time.T_end = 50.0
time.output_every = 5000
model.D0 = "constant"
model.D0.value = 1.0
model.E0 = "constant"
model.E0.value = 0.1
model.beta0 = "constant"
model.beta0.value = 1.0
model.mu0 = "constant"
model.mu0.value = 0.5
initial.u0 = "cosine"
initial.u0.mean = 0.5
initial.u0.amplitude = 0.3
initial.u0.mode = 1
initial.sigma0 = "constant"
initial.sigma0.value = 0.25
longtime.Gamma = 1.0
longtime.box.t = [0.0, 50.0]
longtime.box.x = [0.0, 1.0]
longtime.box.u = [0.0, 1.0]
longtime.box.s = [0.0, 1.0]
check.lyapunov = true
""",
    # sorption with glass/rubber coefficients: influx pulse, overshoot scan
    "sorption": """
mesh.L = 1.0
mesh.N = 128
time.dt = 5e-4
time.T_end = 4.0
time.output_every = 400
model.D0 = "tanh"
model.D0.lo = 0.1
model.D0.hi = 1.0
model.D0.delta = 0.1
model.D0.center = 0.4
model.E0 = "cohen-e0"
model.E0.alpha_1 = 1.0
model.E0.alpha_2 = 0.05
model.beta0 = "tanh"
model.beta0.beta_G = 0.1
model.beta0.beta_R = 2.0
model.beta0.delta = 0.05
model.beta0.u_RG = 0.4
model.mu0 = "constant"
model.mu0.value = 1.0
model.nu0 = "constant"
model.nu0.value = 0.5
initial.u0 = "constant"
initial.u0.value = 0.01
boundary.phi_left = "pulse"
boundary.phi_left.value = 1.0
boundary.phi_left.t_off = 1.0
signature = "overshoot"
""",
    # desorption: start wet, withdraw penetrant through the left boundary;
    # transitions kept soft so the profile re-equilibrates after the pulse
    "desorption": """
mesh.L = 1.0
mesh.N = 128
time.dt = 5e-4
time.T_end = 6.0
time.output_every = 400
model.D0 = "tanh"
model.D0.lo = 0.1
model.D0.hi = 1.0
model.D0.delta = 0.2
model.D0.center = 0.4
model.E0 = "cohen-e0"
model.E0.alpha_1 = 0.5
model.E0.alpha_2 = 0.05
model.beta0 = "tanh"
model.beta0.beta_G = 0.1
model.beta0.beta_R = 2.0
model.beta0.delta = 0.2
model.beta0.u_RG = 0.4
model.mu0 = "constant"
model.mu0.value = 1.0
model.nu0 = "constant"
model.nu0.value = 0.5
initial.u0 = "constant"
initial.u0.value = 0.9
initial.sigma0 = "constant"
initial.sigma0.value = 0.9
boundary.phi_left = "pulse"
boundary.phi_left.value = -0.25
boundary.phi_left.t_off = 2.0
signature = "undershoot"
""",
    # sharp-front regime: steep diffusivity/relaxation transition, steady
    # influx; front midpoint position fitted linear-in-t vs sqrt-t
    "case2-front": """
mesh.L = 1.0
mesh.N = 256
time.dt = 2e-4
time.T_end = 2.0
time.output_every = 100
model.D0 = "tanh"
model.D0.lo = 0.01
model.D0.hi = 1.0
model.D0.delta = 0.05
model.D0.center = 0.5
model.E0 = "cohen-e0"
model.E0.alpha_1 = 2.0
model.E0.alpha_2 = 0.05
model.beta0 = "tanh"
model.beta0.beta_G = 0.05
model.beta0.beta_R = 10.0
model.beta0.delta = 0.05
model.beta0.u_RG = 0.5
model.mu0 = "constant"
model.mu0.value = 1.0
model.nu0 = "constant"
model.nu0.value = 0.5
initial.u0 = "constant"
initial.u0.value = 0.0
boundary.phi_left = "constant"
boundary.phi_left.value = 0.45
signature = "front"
front.threshold = 0.5
""",
    # base scenario for the regularization-strength scan; starts off the
    # stress equilibrium so the stress transient is dominated by its
    # spatially uniform component
    "eps-scan": """
mesh.L = 1.0
mesh.N = 64
time.dt = 1e-3
time.T_end = 1.0
time.output_every = 100
model.D0 = "tanh"
model.D0.lo = 0.2
model.D0.hi = 1.0
model.D0.delta = 0.1
model.D0.center = 0.5
model.E0 = "cohen-e0"
model.E0.alpha_1 = 1.0
model.E0.alpha_2 = 0.05
model.beta0 = "tanh"
model.beta0.beta_G = 0.5
model.beta0.beta_R = 2.0
model.beta0.delta = 0.1
model.beta0.u_RG = 0.5
model.mu0 = "constant"
model.mu0.value = 0.5
model.nu0 = "constant"
model.nu0.value = 0.1
initial.u0 = "constant"
initial.u0.value = 0.5
boundary.phi_left = "pulse"
boundary.phi_left.value = 0.2
boundary.phi_left.t_off = 0.5
""",
}

PRESET_NAMES = tuple(sorted(PRESETS))


def preset_config(name: str) -> ScenarioConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: "
                          f"{sorted(PRESETS)}")
    return parse_config(PRESETS[name])
