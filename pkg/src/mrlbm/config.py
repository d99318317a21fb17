"""Run configuration: TOML in, validated dataclass out.

Top-level keys hold the multiresolution and time-loop parameters; the
``[scheme]``, ``[initial]``, ``[obstacle]`` and ``[output]`` tables hold the
problem-specific and output settings. Unknown keys are errors; missing keys
take per-problem defaults. The README lists the full schema.
"""

from __future__ import annotations

import copy
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    pass


PROBLEMS = ("euler_cfg3", "euler_cfg12", "ns_cylinder", "advection3d", "custom")

_EULER_SCHEME = {"s_q": [1.9, 1.75, 1.75, 1.75], "s_xy": [1.0, 1.0, 1.0, 1.0], "gamma_gas": 1.4}

DEFAULTS = {
    "euler_cfg3": dict(min_level=2, max_level=7, eps=1e-3, mu=0, lam=5.0, t_final=0.3,
                       scheme=_EULER_SCHEME, initial={}, obstacle={}),
    "euler_cfg12": dict(min_level=2, max_level=7, eps=1e-3, mu=0, lam=5.0, t_final=0.25,
                        scheme=_EULER_SCHEME, initial={}, obstacle={}),
    "ns_cylinder": dict(min_level=2, max_level=7, eps=7.5e-4, mu=1, lam=1.0, t_final=40.0,
                        scheme={"Re": 1200.0, "rho0": 1.0, "u0": 0.05, "s1": 1.5},
                        initial={},
                        obstacle={"center": [0.5, 0.508], "radius": 0.05, "samples": 16}),
    "advection3d": dict(min_level=1, max_level=8, eps=1e-3, mu=2, lam=1.0, t_final=0.78125,
                        scheme={"V": [0.25, 0.25, 0.25], "s1": 1.4, "s2": 1.0},
                        initial={"center": [0.3, 0.3, 0.3], "radius": 0.15}, obstacle={}),
    "custom": dict(min_level=2, max_level=6, eps=1e-3, mu=1, lam=1.0, t_final=0.0,
                   scheme={"dim": 1, "V": [0.5], "s1": 1.5, "s2": 1.0, "boundary": "copy"},
                   initial={"profile": "step", "center": [0.3], "radius": 0.15,
                            "inside": 1.0, "outside": 0.0},
                   obstacle={}),
}

OUTPUT_DEFAULTS = {"dir": "runs/out", "snapshot_every": 0, "dump_finest": False,
                   "track_reference": False}
TOP_KEYS = ("problem", "min_level", "max_level", "eps", "mu", "gamma", "pair_sign", "lam",
            "t_final", "max_steps", "ghost_eval")


@dataclass
class OutputConfig:
    dir: str = "runs/out"
    snapshot_every: int = 0
    dump_finest: bool = False
    track_reference: bool = False


@dataclass
class RunConfig:
    problem: str
    min_level: int
    max_level: int
    eps: float
    mu: int
    lam: float
    t_final: float
    gamma: int = 1
    pair_sign: int = 1
    max_steps: int = -1
    ghost_eval: str = "direct"
    scheme: dict = field(default_factory=dict)
    initial: dict = field(default_factory=dict)
    obstacle: dict = field(default_factory=dict)
    output: OutputConfig = field(default_factory=OutputConfig)

    def __post_init__(self):
        validate(self)

    @property
    def dim(self) -> int:
        if self.problem.startswith(("euler", "ns")):
            return 2
        if self.problem == "advection3d":
            return 3
        return int(self.scheme["dim"])

    @property
    def dt(self) -> float:
        return 2.0 ** -self.max_level / self.lam

    @property
    def n_steps(self) -> int:
        n = int(round(self.t_final / self.dt)) if self.t_final > 0 else self.max_steps
        return n if self.max_steps < 0 else min(n, self.max_steps)

    def to_dict(self) -> dict:
        return asdict(self)


def _type_check(path: str, value, like):
    if isinstance(like, bool):
        ok = isinstance(value, bool)
    elif isinstance(like, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(like, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif isinstance(like, str):
        ok = isinstance(value, str)
    elif isinstance(like, list):
        ok = isinstance(value, list) and all(isinstance(v, (int, float)) and not isinstance(v, bool)
                                             for v in value)
    else:
        ok = True
    if not ok:
        raise ConfigError(f"{path}: expected {type(like).__name__}, got {value!r}")
    if isinstance(like, float):
        return float(value)
    if isinstance(like, list):
        return [float(v) for v in value]
    return value


def _merge_section(name: str, given: dict, defaults: dict) -> dict:
    if not isinstance(given, dict):
        raise ConfigError(f"{name}: expected a table")
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        if k not in defaults:
            raise ConfigError(f"{name}.{k}: unknown key")
        out[k] = _type_check(f"{name}.{k}", v, defaults[k])
    return out


def from_dict(raw: dict) -> RunConfig:
    raw = dict(raw)
    problem = raw.get("problem")
    if problem not in PROBLEMS:
        raise ConfigError(f"problem: expected one of {PROBLEMS}, got {problem!r}")
    d = DEFAULTS[problem]
    top = {"problem": problem, "gamma": 1, "pair_sign": 1, "max_steps": -1, "ghost_eval": "direct"}
    top.update({k: d[k] for k in ("min_level", "max_level", "eps", "mu", "lam", "t_final")})
    sections = {"scheme", "initial", "obstacle", "output"}
    for k, v in raw.items():
        if k in sections or k == "problem":
            continue
        if k not in TOP_KEYS:
            raise ConfigError(f"{k}: unknown key")
        top[k] = _type_check(k, v, top[k])
    scheme = _merge_section("scheme", raw.get("scheme", {}), d["scheme"])
    initial = _merge_section("initial", raw.get("initial", {}), d["initial"])
    obstacle = _merge_section("obstacle", raw.get("obstacle", {}), d["obstacle"])
    output = OutputConfig(**_merge_section("output", raw.get("output", {}), OUTPUT_DEFAULTS))
    return RunConfig(scheme=scheme, initial=initial, obstacle=obstacle, output=output, **top)


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} not found") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return from_dict(raw)


def validate(c: RunConfig):
    if not 0 <= c.min_level < c.max_level:
        raise ConfigError("min_level/max_level: need 0 <= min_level < max_level")
    if c.max_level > 12:
        raise ConfigError("max_level: at most 12")
    if not (c.eps >= 0 and math.isfinite(c.eps)):
        raise ConfigError("eps: must be a finite nonnegative number")
    if c.gamma not in (1, 2, 3):
        raise ConfigError("gamma: must be 1, 2 or 3")
    if not 0 <= c.mu <= 2 * c.gamma + 1:
        raise ConfigError(f"mu: must lie in [0, {2 * c.gamma + 1}]")
    if c.pair_sign not in (1, -1):
        raise ConfigError("pair_sign: must be 1 or -1")
    if c.lam <= 0:
        raise ConfigError("lam: must be positive")
    if c.t_final < 0:
        raise ConfigError("t_final: must be nonnegative")
    if c.ghost_eval not in ("direct", "reconstruct"):
        raise ConfigError("ghost_eval: must be 'direct' or 'reconstruct'")
    if c.t_final == 0 and c.max_steps < 0:
        raise ConfigError("t_final or max_steps must be set")
    if c.output.snapshot_every < 0:
        raise ConfigError("output.snapshot_every: must be nonnegative")
    if c.problem == "custom":
        s, ini = c.scheme, c.initial
        if s["dim"] not in (1, 2, 3):
            raise ConfigError("scheme.dim: must be 1, 2 or 3")
        if len(s["V"]) != s["dim"]:
            raise ConfigError("scheme.V: one component per dimension")
        if s["boundary"] not in ("copy", "bounce_back", "anti_bounce_back"):
            raise ConfigError("scheme.boundary: unknown boundary kind")
        if ini["profile"] not in ("step", "sphere", "gaussian"):
            raise ConfigError("initial.profile: must be step, sphere or gaussian")
        if len(ini["center"]) != s["dim"]:
            raise ConfigError("initial.center: one component per dimension")
    if c.problem == "advection3d" and len(c.scheme["V"]) != 3:
        raise ConfigError("scheme.V: three components expected")
    if c.problem in ("advection3d", "custom"):
        # equilibrium populations stay nonnegative only for |V_i| <= lam / d;
        # past that the schemes blow up even on the uniform grid
        if max(abs(v) for v in c.scheme["V"]) > c.lam / len(c.scheme["V"]):
            raise ConfigError(f"scheme.V: each component must satisfy |V_i| <= lam / {len(c.scheme['V'])}")
    if c.problem.startswith("euler"):
        for k in ("s_q", "s_xy"):
            if len(c.scheme[k]) != 4:
                raise ConfigError(f"scheme.{k}: four entries expected")
    if c.problem == "ns_cylinder":
        if len(c.obstacle["center"]) != 2 or c.obstacle["radius"] <= 0:
            raise ConfigError("obstacle: center needs two entries and radius must be positive")


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, int):
        return str(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialise {v!r}")


def dump_config(c: RunConfig) -> str:
    d = c.to_dict()
    lines = [f"{k} = {_toml_value(d[k])}" for k in TOP_KEYS]
    for sec in ("scheme", "initial", "obstacle", "output"):
        if d[sec]:
            lines.append(f"\n[{sec}]")
            lines += [f"{k} = {_toml_value(v)}" for k, v in d[sec].items()]
    return "\n".join(lines) + "\n"
