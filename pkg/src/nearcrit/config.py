"""Run configuration: YAML parsing with strict unknown-key rejection.

The file is a key-value tree; every section is optional except ``model``
(commands validate that the sections they need are present). Unknown keys
anywhere fail validation with the offending path, so a typo cannot
silently fall back to a default.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError
from .model import (
    CounterexampleParams,
    DriftProfile,
    ModelSpec,
    default_counterexample_params,
    make_counterexample_model,
    make_embedded_model,
    make_lamperti_model,
    profile_from_spec,
)
from .spectral import normalize_to_critical

MODEL_FAMILIES = ("lamperti", "counterexample", "embedded_counterexample")


def _require(cond: bool, path: str, message: str):
    if not cond:
        raise ConfigError(f"{path}: {message}")


def _check_keys(section: dict, path: str, allowed: set[str]):
    if not isinstance(section, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(section).__name__}")
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}; allowed: {sorted(allowed)}")


def _as_float(section, key, path, default=None, required=False):
    if key not in section or section[key] is None:
        _require(not required, f"{path}.{key}", "required")
        return default
    v = section[key]
    _require(isinstance(v, (int, float)) and not isinstance(v, bool),
             f"{path}.{key}", f"expected a number, got {v!r}")
    return float(v)


def _as_int(section, key, path, default=None, required=False):
    if key not in section or section[key] is None:
        _require(not required, f"{path}.{key}", "required")
        return default
    v = section[key]
    _require(isinstance(v, int) and not isinstance(v, bool),
             f"{path}.{key}", f"expected an integer, got {v!r}")
    return int(v)


def _as_grid(section, key, path, default=None):
    if key not in section or section[key] is None:
        return default
    g = section[key]
    _check_keys(g, f"{path}.{key}", {"start", "stop", "num", "spacing"})
    start = _as_float(g, "start", f"{path}.{key}", required=True)
    stop = _as_float(g, "stop", f"{path}.{key}", required=True)
    num = _as_int(g, "num", f"{path}.{key}", required=True)
    spacing = g.get("spacing", "log")
    _require(spacing in ("log", "linear"), f"{path}.{key}.spacing", "log or linear")
    _require(num >= 2 and start > 0 and stop > start, f"{path}.{key}", "need stop > start > 0, num >= 2")
    if spacing == "log":
        return tuple(np.logspace(np.log10(start), np.log10(stop), num))
    return tuple(np.linspace(start, stop, num))


def _profile_spec(section, key, path, default=None):
    if key not in section or section[key] is None:
        return default
    spec = section[key]
    _check_keys(spec, f"{path}.{key}", {"kind", "exponent", "kappa", "source"})
    _require(spec.get("kind") in ("power", "log_decay", "expr"),
             f"{path}.{key}.kind", "one of power, log_decay, expr")
    return dict(spec)


@dataclass(frozen=True)
class ModelCfg:
    family: str
    matrix: tuple | None
    theta: float
    sigma_profile: dict | None
    sigma_bar: dict | None
    g_bar: dict | None
    p: float


@dataclass(frozen=True)
class NormCfg:
    epsilon: float | None


@dataclass(frozen=True)
class LyapunovCfg:
    alpha: float
    beta: float
    gamma: float
    j: int
    s: float
    mode: str
    n_samples: int
    lx_grid: tuple
    offsets: tuple
    auto_shift: bool


@dataclass(frozen=True)
class ConditionsCfg:
    epsilon: float
    a: float
    b: float
    kappa: float
    n_t: int
    span: float
    u_grid: tuple
    t_grid: tuple


@dataclass(frozen=True)
class SimulateCfg:
    x0: tuple | None
    x0_ray: float | None
    s: float
    K: float
    n_max: int
    n_traj: int
    series_keep: int


@dataclass(frozen=True)
class CounterexampleCfg:
    n_steps_structure: int
    t_probes: tuple
    n_samples_stats: int
    crosscheck_steps: int
    demo_thetas: tuple
    demo_s: float
    demo_K: float
    demo_n_max: int
    demo_n_traj: int
    x0_scale: float


@dataclass(frozen=True)
class RunConfig:
    seed: int
    model: ModelCfg
    norm: NormCfg
    lyapunov: LyapunovCfg | None
    conditions: ConditionsCfg | None
    simulate: SimulateCfg | None
    counterexample: CounterexampleCfg | None
    output_dir: str
    raw: dict = field(repr=False, default_factory=dict)


def _parse_model(section, path="model") -> ModelCfg:
    _check_keys(section, path, {"family", "matrix", "theta", "sigma_profile",
                                "sigma_bar", "g_bar", "p"})
    family = section.get("family")
    _require(family in MODEL_FAMILIES, f"{path}.family", f"one of {MODEL_FAMILIES}")
    matrix = section.get("matrix")
    if matrix is not None:
        _require(isinstance(matrix, list) and all(isinstance(r, list) for r in matrix),
                 f"{path}.matrix", "expected a list of row lists")
        arr = np.asarray(matrix, dtype=float)
        _require(arr.ndim == 2 and arr.shape[0] == arr.shape[1], f"{path}.matrix", "must be square")
        _require(bool(np.all(arr >= 0)), f"{path}.matrix", "entries must be nonnegative")
        matrix = tuple(tuple(float(v) for v in row) for row in matrix)
    theta = _as_float(section, "theta", path, default=0.5)
    _require(theta >= 0, f"{path}.theta", "must be >= 0")
    p = _as_float(section, "p", path, default=3.0)
    _require(2.0 < p <= 3.0, f"{path}.p", "must lie in (2, 3]")
    if family == "lamperti":
        _require(matrix is not None, f"{path}.matrix", "required for the lamperti family")
    return ModelCfg(family=family, matrix=matrix, theta=theta,
                    sigma_profile=_profile_spec(section, "sigma_profile", path),
                    sigma_bar=_profile_spec(section, "sigma_bar", path),
                    g_bar=_profile_spec(section, "g_bar", path), p=p)


def _parse_lyapunov(section, path="lyapunov") -> LyapunovCfg:
    _check_keys(section, path, {"alpha", "beta", "gamma", "j", "s", "mode",
                                "n_samples", "lx_grid", "offsets", "auto_shift"})
    mode = section.get("mode", "recurrence")
    _require(mode in ("recurrence", "transience"), f"{path}.mode",
             "recurrence or transience")
    offsets = section.get("offsets", [0.0])
    _require(isinstance(offsets, list) and all(isinstance(v, (int, float)) for v in offsets),
             f"{path}.offsets", "expected a list of numbers")
    lx_grid = _as_grid(section, "lx_grid", path)
    _require(lx_grid is not None, f"{path}.lx_grid", "required")
    auto_shift = section.get("auto_shift", False)
    _require(isinstance(auto_shift, bool), f"{path}.auto_shift", "expected a boolean")
    return LyapunovCfg(
        alpha=_as_float(section, "alpha", path, required=True),
        beta=_as_float(section, "beta", path, default=-1.0),
        gamma=_as_float(section, "gamma", path, default=0.0),
        j=_as_int(section, "j", path, default=1),
        s=_as_float(section, "s", path, required=True),
        mode=mode,
        n_samples=_as_int(section, "n_samples", path, default=100_000),
        lx_grid=lx_grid,
        offsets=tuple(float(v) for v in offsets),
        auto_shift=auto_shift,
    )


def _parse_conditions(section, path="conditions") -> ConditionsCfg:
    _check_keys(section, path, {"epsilon", "a", "b", "kappa", "n_t", "span",
                                "u_grid", "t_grid"})
    u_grid = section.get("u_grid", [10.0, 100.0, 1000.0])
    _require(isinstance(u_grid, list) and all(isinstance(v, (int, float)) for v in u_grid),
             f"{path}.u_grid", "expected a list of numbers")
    t_grid = _as_grid(section, "t_grid", path,
                      default=tuple(np.logspace(1, 8, 200)))
    return ConditionsCfg(
        epsilon=_as_float(section, "epsilon", path, default=0.4),
        a=_as_float(section, "a", path, default=10.0),
        b=_as_float(section, "b", path, default=1.0),
        kappa=_as_float(section, "kappa", path, default=1.0),
        n_t=_as_int(section, "n_t", path, default=24),
        span=_as_float(section, "span", path, default=1e4),
        u_grid=tuple(float(v) for v in u_grid),
        t_grid=t_grid,
    )


def _parse_simulate(section, path="simulate") -> SimulateCfg:
    _check_keys(section, path, {"x0", "x0_ray", "s", "K", "n_max", "n_traj",
                                "series_keep"})
    x0 = section.get("x0")
    if x0 is not None:
        _require(isinstance(x0, list) and all(isinstance(v, (int, float)) for v in x0),
                 f"{path}.x0", "expected a list of numbers")
        x0 = tuple(float(v) for v in x0)
    x0_ray = _as_float(section, "x0_ray", path)
    _require((x0 is None) != (x0_ray is None), path, "give exactly one of x0, x0_ray")
    return SimulateCfg(
        x0=x0, x0_ray=x0_ray,
        s=_as_float(section, "s", path, default=10.0),
        K=_as_float(section, "K", path, default=1e4),
        n_max=_as_int(section, "n_max", path, default=1_000_000),
        n_traj=_as_int(section, "n_traj", path, default=500),
        series_keep=_as_int(section, "series_keep", path, default=10),
    )


def _parse_counterexample(section, path="counterexample") -> CounterexampleCfg:
    _check_keys(section, path, {"n_steps_structure", "t_probes", "n_samples_stats",
                                "crosscheck_steps", "demo"})
    t_probes = section.get("t_probes", [1e2, 1e4, 1e6])
    _require(isinstance(t_probes, list) and all(isinstance(v, (int, float)) for v in t_probes),
             f"{path}.t_probes", "expected a list of numbers")
    demo = section.get("demo", {})
    _check_keys(demo, f"{path}.demo", {"thetas", "s", "K", "n_max", "n_traj", "x0_scale"})
    thetas = demo.get("thetas", [0.75, 1.5])
    _require(isinstance(thetas, list) and all(isinstance(v, (int, float)) for v in thetas),
             f"{path}.demo.thetas", "expected a list of numbers")
    return CounterexampleCfg(
        n_steps_structure=_as_int(section, "n_steps_structure", path, default=100_000),
        t_probes=tuple(float(v) for v in t_probes),
        n_samples_stats=_as_int(section, "n_samples_stats", path, default=100_000),
        crosscheck_steps=_as_int(section, "crosscheck_steps", path, default=5_000),
        demo_thetas=tuple(float(v) for v in thetas),
        demo_s=_as_float(demo, "s", f"{path}.demo", default=10.0),
        demo_K=_as_float(demo, "K", f"{path}.demo", default=1e4),
        demo_n_max=_as_int(demo, "n_max", f"{path}.demo", default=1_000_000),
        demo_n_traj=_as_int(demo, "n_traj", f"{path}.demo", default=500),
        x0_scale=_as_float(demo, "x0_scale", f"{path}.demo", default=25.0),
    )


def parse_config(tree: dict, source: str = "<config>") -> RunConfig:
    _check_keys(tree, source, {"seed", "model", "norm", "lyapunov", "conditions",
                               "simulate", "counterexample", "output"})
    _require("model" in tree, f"{source}.model", "required section")
    model = _parse_model(tree["model"])
    norm_section = tree.get("norm", {}) or {}
    _check_keys(norm_section, "norm", {"epsilon"})
    norm = NormCfg(epsilon=_as_float(norm_section, "epsilon", "norm"))
    output = tree.get("output", {}) or {}
    _check_keys(output, "output", {"dir"})
    out_dir = output.get("dir", "out")
    _require(isinstance(out_dir, str), "output.dir", "expected a string")
    seed = _as_int(tree, "seed", source, default=0)
    return RunConfig(
        seed=seed,
        model=model,
        norm=norm,
        lyapunov=_parse_lyapunov(tree["lyapunov"]) if "lyapunov" in tree else None,
        conditions=_parse_conditions(tree.get("conditions", {}) or {}),
        simulate=_parse_simulate(tree["simulate"]) if "simulate" in tree else None,
        counterexample=_parse_counterexample(tree.get("counterexample", {}) or {}),
        output_dir=out_dir,
        raw=tree,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        tree = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"could not parse {path}: {exc}") from exc
    if not isinstance(tree, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return parse_config(tree, source=str(path))


def counterexample_params_from_cfg(model_cfg: ModelCfg) -> CounterexampleParams:
    if model_cfg.sigma_bar is None and model_cfg.g_bar is None:
        return default_counterexample_params(model_cfg.theta)
    sigma_bar = (profile_from_spec(model_cfg.sigma_bar)
                 if model_cfg.sigma_bar is not None
                 else default_counterexample_params(model_cfg.theta).sigma_bar)
    g_bar = (profile_from_spec(model_cfg.g_bar) if model_cfg.g_bar is not None
             else DriftProfile(model_cfg.theta, sigma_bar))
    return CounterexampleParams(g_bar=g_bar, sigma_bar=sigma_bar, theta=model_cfg.theta)


def build_model(cfg: RunConfig) -> ModelSpec:
    """Construct the configured model; lamperti matrices are rescaled to
    dominant eigenvalue 1 first."""
    m = cfg.model
    if m.family == "lamperti":
        _, sd = normalize_to_critical(np.asarray(m.matrix, dtype=float))
        profile = profile_from_spec(m.sigma_profile) if m.sigma_profile else None
        return make_lamperti_model(sd, m.theta, profile, p=m.p)
    params = counterexample_params_from_cfg(m)
    if m.family == "counterexample":
        return make_counterexample_model(params, p=m.p)
    return make_embedded_model(params, p=m.p)
