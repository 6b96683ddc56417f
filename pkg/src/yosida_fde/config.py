"""TOML run configurations with parse-time validation.

A configuration has the top-level keys ``mode`` (``"finite"`` or
``"halfline"``), ``seed`` and ``output_dir`` and the sections
``operator``, ``geometry``, ``solver``, ``history``, ``verify``,
``asymptotics`` and ``oracle``.  Unknown keys are rejected.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError, YosidaError
from .grid import DelayGeometry, HistorySegment
from .operators import (ResolventMethod, cubic_delay, exp_memory, laplacian_reaction,
                        linear_delay)
from .scheme import LambdaSchedule, SolverConfig, check_halfline_margin
from .timefunctions import TimeFunction

VARIANTS = ("linear_delay", "cubic_delay", "laplacian_reaction", "exp_memory")
VERIFY_CHECKS = ("integral_solution", "mild_solution", "resolvent_properties",
                 "control_inequality", "inequalities")
SWEEP_AXES = ("lambda0", "h", "K0", "omega", "horizon")

_TOP_KEYS = {"mode", "seed", "output_dir", "name", "operator", "geometry", "solver", "history",
             "verify", "asymptotics", "oracle"}
_OPERATOR_KEYS = {
    "linear_delay": {"a", "c"},
    "cubic_delay": {"c"},
    "laplacian_reaction": {"nu", "c"},
    "exp_memory": {"c", "kappa"},
}
_OPERATOR_COMMON = {"variant", "omega", "dim", "method", "max_iter", "resolvent_tol",
                    "assumption", "norm", "forcing"}
_GEOMETRY_KEYS = {"kind", "r", "truncation_radius", "tail_rate"}
_SOLVER_KEYS = {"h", "lambda0", "ratio", "levels", "horizon", "windows", "tol_fix", "tol_n",
                "tol_lambda", "max_sweeps", "n_max", "inner_mode", "warm_start", "rate_margin"}
_HISTORY_KEYS = {"shape", "value", "slope", "amplitude", "frequency", "phase", "file", "h"}
_VERIFY_KEYS = {"checks", "samples", "tol_scale", "audit_samples"}
_ASYMPTOTICS_KEYS = {"period", "harmonics", "frequencies", "tail", "decay_threshold",
                     "window_fractions", "ap_tolerance"}
_ORACLE_KEYS = {"kind"}
ORACLE_KINDS = ("linear_delay", "method_of_steps", "exp_memory")


def _check_keys(section, data, allowed):
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")


@dataclass
class RunConfig:
    """A parsed and validated run configuration.

    ``raw`` keeps the source dictionary so that sweeps can override single
    values and re-parse.
    """

    mode: str
    seed: int
    output_dir: str
    operator: object
    history: HistorySegment
    solver: SolverConfig
    verify: dict = field(default_factory=dict)
    asymptotics: dict = field(default_factory=dict)
    oracle: dict | None = None
    name: str = "run"
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, data, base_dir=None):
        return parse_config(data, base_dir)

    @classmethod
    def from_toml(cls, path):
        return load_config(path)

    def echo(self):
        """JSON-ready copy of the source configuration."""
        return copy.deepcopy(self.raw)


def load_config(path):
    """Read and validate a TOML configuration file."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"configuration file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return parse_config(data, path.parent)


def bundled_scenarios():
    """Names of the scenario files shipped with the package."""
    root = resources.files("yosida_fde") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def bundled_scenario_path(name):
    """Filesystem path of a shipped scenario (``name`` with or without ``.toml``)."""
    stem = name[:-5] if name.endswith(".toml") else name
    path = resources.files("yosida_fde") / "scenarios" / f"{stem}.toml"
    if not path.is_file():
        raise ConfigError(f"no bundled scenario named {stem!r}")
    return Path(str(path))


def load_bundled(name):
    return load_config(bundled_scenario_path(name))


# ---------------------------------------------------------------------------
# sections


def _build_geometry(g):
    _check_keys("geometry", g, _GEOMETRY_KEYS)
    kind = g.get("kind", "finite")
    try:
        if kind == "finite":
            if "r" not in g:
                raise ConfigError("[geometry] finite kind needs r")
            return DelayGeometry.finite(g["r"])
        if kind == "infinite":
            return DelayGeometry.infinite(g.get("truncation_radius", 30.0), g.get("tail_rate", 1.0))
    except YosidaError as exc:
        raise ConfigError(f"[geometry] {exc}") from exc
    raise ConfigError(f"[geometry] unknown kind {kind!r}")


def _build_operator(o, geom):
    variant = o.get("variant")
    if variant not in VARIANTS:
        raise ConfigError(f"[operator] variant must be one of {VARIANTS}, got {variant!r}")
    _check_keys("operator", o, _OPERATOR_COMMON | _OPERATOR_KEYS[variant])
    forcing = TimeFunction.from_dict(o.get("forcing"))
    common = {"omega": float(o.get("omega", 0.0)), "forcing": forcing,
              "assumption_kind": o.get("assumption", "og"), "norm": o.get("norm", "euclidean")}
    if "method" in o:
        common["method"] = ResolventMethod(o["method"], int(o.get("max_iter", 100)),
                                           float(o.get("resolvent_tol", 1e-12)))
    dim = int(o.get("dim", 4 if variant == "laplacian_reaction" else 1))
    try:
        if variant == "exp_memory":
            if geom.kind != "infinite":
                raise ConfigError("exp_memory needs an infinite geometry")
            return exp_memory(c=float(o.get("c", 0.5)), kappa=float(o.get("kappa", 1.0)),
                              R=geom.truncation_radius, tail_rate=geom.tail_rate, dim=dim,
                              **common)
        if geom.kind != "finite":
            raise ConfigError(f"{variant} needs a finite geometry")
        if variant == "linear_delay":
            return linear_delay(a=float(o.get("a", -2.0)), c=float(o.get("c", 0.5)), r=geom.r,
                                dim=dim, **common)
        if variant == "cubic_delay":
            return cubic_delay(c=float(o.get("c", 0.5)), r=geom.r, dim=dim, **common)
        return laplacian_reaction(dim=dim, nu=float(o.get("nu", 1.0)), c=float(o.get("c", 0.5)),
                                  r=geom.r, **common)
    except ConfigError:
        raise
    except YosidaError as exc:
        raise ConfigError(f"[operator] {exc}") from exc


def _build_history(hcfg, geom, dim, base_dir):
    _check_keys("history", hcfg, _HISTORY_KEYS)
    shape = hcfg.get("shape", "constant")
    value = np.broadcast_to(np.asarray(hcfg.get("value", 1.0), dtype=float), (dim,)).copy()
    h = float(hcfg.get("h", geom.length / 64))
    if shape == "constant":
        return HistorySegment.constant(geom, value)
    if shape == "ramp":
        slope = np.broadcast_to(np.asarray(hcfg.get("slope", 1.0), dtype=float), (dim,))
        return HistorySegment.from_function(geom, lambda s: value + slope * s, h)
    if shape == "sinusoid":
        amp = float(hcfg.get("amplitude", 1.0))
        freq = float(hcfg.get("frequency", 1.0))
        phase = float(hcfg.get("phase", 0.0))
        return HistorySegment.from_function(geom, lambda s: value + amp * np.sin(freq * s + phase),
                                            h)
    if shape == "table":
        if "file" not in hcfg:
            raise ConfigError("[history] table shape needs file")
        path = Path(hcfg["file"])
        if not path.is_absolute() and base_dir is not None:
            path = Path(base_dir) / path
        try:
            data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        except OSError as exc:
            raise ConfigError(f"[history] cannot read {path}") from exc
        if data.shape[1] != dim + 1:
            raise ConfigError("[history] table needs columns s,x0..x{d-1}")
        try:
            return HistorySegment(geom, data[:, 0], data[:, 1:])
        except YosidaError as exc:
            raise ConfigError(f"[history] {exc}") from exc
    raise ConfigError(f"[history] unknown shape {shape!r}")


def _build_solver(s, mode):
    _check_keys("solver", s, _SOLVER_KEYS)
    for key in ("h", "lambda0", "horizon"):
        if key not in s:
            raise ConfigError(f"[solver] missing {key}")
    windows = tuple(s.get("windows", ()))
    if mode == "halfline" and not windows:
        windows = (float(s["horizon"]),)
    try:
        schedule = LambdaSchedule(float(s["lambda0"]), float(s.get("ratio", 0.5)),
                                  int(s.get("levels", 1)))
        return SolverConfig(
            h=float(s["h"]), horizon=float(s["horizon"]), schedule=schedule,
            tol_fix=float(s.get("tol_fix", 1e-10)), tol_n=float(s.get("tol_n", 1e-10)),
            tol_lambda=float(s.get("tol_lambda", 1e-2)),
            max_sweeps=int(s.get("max_sweeps", 2000)), n_max=int(s.get("n_max", 100)),
            inner_mode=s.get("inner_mode", "march"), windows=windows,
            warm_start=bool(s.get("warm_start", True)),
            rate_margin=float(s.get("rate_margin", 0.05)))
    except ConfigError:
        raise
    except (YosidaError, TypeError, ValueError) as exc:
        raise ConfigError(f"[solver] {exc}") from exc


def parse_config(data, base_dir=None):
    """Validate a configuration dictionary and build the run objects."""
    data = copy.deepcopy(dict(data))
    _check_keys("top level", data, _TOP_KEYS)
    mode = data.get("mode", "finite")
    if mode not in ("finite", "halfline"):
        raise ConfigError(f"mode must be 'finite' or 'halfline', got {mode!r}")
    for section in ("operator", "geometry", "solver"):
        if section not in data:
            raise ConfigError(f"missing [{section}] section")
    geom = _build_geometry(data["geometry"])
    op = _build_operator(data["operator"], geom)
    history = _build_history(data.get("history", {}), geom, op.dim, base_dir)
    solver = _build_solver(data["solver"], mode)
    try:
        solver.schedule.validate(op.omega)
    except YosidaError as exc:
        raise ConfigError(f"[solver] {exc}") from exc
    if mode == "halfline":
        # raises StabilityMarginError
        check_halfline_margin(op)
    ver = dict(data.get("verify", {}))
    _check_keys("verify", ver, _VERIFY_KEYS)
    checks = list(ver.get("checks", []))
    bad = set(checks) - set(VERIFY_CHECKS)
    if bad:
        raise ConfigError(f"[verify] unknown checks {sorted(bad)}")
    ver["checks"] = checks
    asy = dict(data.get("asymptotics", {}))
    _check_keys("asymptotics", asy, _ASYMPTOTICS_KEYS)
    oracle = data.get("oracle")
    if oracle is not None:
        _check_keys("oracle", oracle, _ORACLE_KEYS)
        if oracle.get("kind") not in ORACLE_KINDS:
            raise ConfigError(f"[oracle] kind must be one of {ORACLE_KINDS}")
    seed = int(data.get("seed", 0))
    if seed < 0:
        raise ConfigError("seed must be nonnegative")
    return RunConfig(mode, seed, str(data.get("output_dir", "out")), op, history, solver, ver,
                     asy, oracle, str(data.get("name", "run")), data)


# ---------------------------------------------------------------------------
# sweeps


def apply_overrides(data, overrides, tie_h_to_lambda=False):
    """Copy of a configuration dictionary with sweep-axis values replaced.

    ``K0`` is realised through the coupling coefficient ``c`` of the
    variant, keeping its sign.
    """
    data = copy.deepcopy(data)
    unknown = set(overrides) - set(SWEEP_AXES)
    if unknown:
        raise ConfigError(f"unknown sweep axes {sorted(unknown)}")
    solver = data.setdefault("solver", {})
    op = data.setdefault("operator", {})
    for key, value in overrides.items():
        value = float(value)
        if key == "lambda0":
            solver["lambda0"] = value
            if tie_h_to_lambda:
                solver["h"] = value * float(solver.get("ratio", 0.5)) ** (
                    int(solver.get("levels", 1)) - 1)
        elif key == "h":
            solver["h"] = value
        elif key == "horizon":
            solver["horizon"] = value
            if solver.get("windows"):
                solver["windows"] = [w for w in solver["windows"] if w < value] + [value]
        elif key == "omega":
            op["omega"] = value
        elif key == "K0":
            sign = -1.0 if float(op.get("c", 0.5)) < 0 else 1.0
            if op.get("variant") == "exp_memory":
                kappa = float(op.get("kappa", 1.0))
                R = float(data.get("geometry", {}).get("truncation_radius", 30.0))
                op["c"] = sign * value * kappa / -math.expm1(-kappa * R)
            else:
                op["c"] = sign * value
    return data
