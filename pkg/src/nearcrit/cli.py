"""Command-line front end: analyze, check, certify, simulate, counterexample.

Exit codes: 0 success, 2 configuration error, 3 numerical or model error,
4 counterexample structure violation (an implementation bug).
"""
from __future__ import annotations

import argparse
import copy
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .conditions import (
    check_noise_moment_bound,
    check_recurrence_drift,
    check_sigma_log_decay,
    check_slab_drift,
    check_transience_drift,
)
from .config import RunConfig, build_model, counterexample_params_from_cfg, load_config
from .errors import ConfigError, NearCritError, NoEscapers, StructureViolation
from .geometry import (
    L1Norm,
    build_contraction_norm,
    cone_constant,
    norm_equivalence_bounds,
    transverse_recursion_constants,
)
from .lyapunov import LyapunovParams, RegionSpec, certify_region
from .model import CounterexampleParams, DriftProfile, default_counterexample_params
from .reporting import config_hash, to_jsonable, write_csv, write_json
from .simulate import (
    classify_ensemble,
    counterexample_dichotomy_demo,
    crosscheck_uv_against_engine,
    embedded_chain_stats,
    ray_diagnostic,
    run_trajectory,
    verify_counterexample_structure,
)
from .spectral import normalize_to_critical


def _resolved_tree(cfg: RunConfig) -> dict:
    # the hash covers the computational configuration; where the artifacts
    # land must not change their bytes
    tree = copy.deepcopy(cfg.raw)
    tree["seed"] = cfg.seed
    tree.pop("output", None)
    return tree


class Emitter:
    """Writes JSON/CSV artifacts honoring the --format switch."""

    def __init__(self, cfg: RunConfig, fmt: str):
        self.out = Path(cfg.output_dir)
        self.fmt = fmt
        self.cfg_hash = config_hash(_resolved_tree(cfg))
        self.seed = cfg.seed

    def json(self, name: str, payload: dict):
        if self.fmt != "csv":
            write_json(self.out / f"{name}.json", payload, self.cfg_hash, self.seed)

    def csv(self, name: str, header, rows):
        if self.fmt != "json":
            write_csv(self.out / f"{name}.csv", header, rows, self.cfg_hash, self.seed)


def _model_matrix(cfg: RunConfig) -> np.ndarray:
    if cfg.model.family == "lamperti":
        return np.asarray(cfg.model.matrix, dtype=float)
    if cfg.model.family == "counterexample":
        return 0.5 * np.ones((2, 2))
    return np.array([[1.0]])


def _spectral_pipeline(cfg: RunConfig):
    _, sd = normalize_to_critical(_model_matrix(cfg))
    nb = build_contraction_norm(sd, cfg.norm.epsilon)
    return sd, nb


def _run_norm(cfg: RunConfig, nb):
    # The gated counterexample is stated in the l1 norm; everything else
    # runs in the certified contraction norm.
    if cfg.model.family in ("counterexample", "embedded_counterexample"):
        return L1Norm()
    return nb


def cmd_analyze(cfg: RunConfig, args) -> int:
    sd, nb = _spectral_pipeline(cfg)
    lam_w = cone_constant(sd, nb)
    lam_l1 = cone_constant(sd, L1Norm())
    c1, c2 = norm_equivalence_bounds(nb)
    rho, c_g, c_xi = transverse_recursion_constants(sd, nb)
    payload = {
        "spectral": {"eig": sd.eig, "ell": sd.ell, "r": sd.r,
                     "primitivity_power": sd.primitivity_power, "rho": sd.rho},
        "norm": {"rho_certified": nb.rho_certified, "epsilon_used": nb.epsilon_used,
                 "cond_W": nb.cond, "W": nb.W},
        "cone": {"lambda_w": lam_w.lam, "vertex_w": lam_w.attaining_vertex,
                 "lambda_l1": lam_l1.lam, "vertex_l1": lam_l1.attaining_vertex},
        "norm_equivalence": {"c1": c1, "c2": c2},
        "transverse_recursion": {"rho": rho, "c_g": c_g, "c_xi": c_xi},
    }
    em = Emitter(cfg, args.format)
    em.json("analyze", payload)
    print(f"analyze: eig={sd.eig:.12g} rho={sd.rho:.6g} "
          f"rho_certified={nb.rho_certified:.6g} lambda_w={lam_w.lam:.6g} "
          f"lambda_l1={lam_l1.lam:.6g}")
    return 0


def cmd_check(cfg: RunConfig, args) -> int:
    sd, nb = _spectral_pipeline(cfg)
    model = build_model(cfg)
    norm = _run_norm(cfg, nb)
    cc = cfg.conditions
    reports = {
        "recurrence_drift": check_recurrence_drift(
            model, norm, cc.epsilon, cc.b, cc.a, rng=cfg.seed),
        "transience_drift": check_transience_drift(
            model, norm, cc.epsilon, cc.b, cc.a, rng=cfg.seed),
        "noise_pth_moment": check_noise_moment_bound(model, a=cc.a, rng=cfg.seed),
        "slab_drift_lower_bound": check_slab_drift(model, cc.u_grid, rng=cfg.seed),
        "sigma_log_decay": check_sigma_log_decay(model, cc.kappa, cc.t_grid),
    }
    em = Emitter(cfg, args.format)
    em.json("check", {"conditions": reports})
    rows = []
    for rep in reports.values():
        for v in rep.violations:
            rows.append((rep.condition_id, v.state, v.lhs, v.rhs))
    em.csv("check_violations", ["condition", "state", "lhs", "rhs"], rows)
    for name, rep in reports.items():
        print(f"check {name}: {rep.verdict} "
              f"({rep.tested_states} tested, {len(rep.violations)} violations)")
    return 0


def cmd_certify(cfg: RunConfig, args) -> int:
    if cfg.lyapunov is None:
        raise ConfigError("certify requires a lyapunov section")
    sd, nb = _spectral_pipeline(cfg)
    model = build_model(cfg)
    norm = _run_norm(cfg, nb)
    ly = cfg.lyapunov
    lx_values = list(ly.lx_grid)
    if ly.auto_shift and min(lx_values) < ly.s:
        # shift the probe region up the ray instead of rejecting it
        shift = ly.s - min(lx_values)
        lx_values = [v + shift for v in lx_values]
    lp = LyapunovParams(alpha=ly.alpha, beta=ly.beta, gamma=ly.gamma, j=ly.j,
                        s=ly.s, norm=norm)
    region = RegionSpec(lx_values=tuple(lx_values), offsets=ly.offsets)
    report = certify_region(model, lp, region, ly.n_samples, ly.mode,
                            base_seed=cfg.seed, workers=args.workers)
    em = Emitter(cfg, args.format)
    em.json("certify", {"certification": report})
    em.csv("certify",
           ["state", "drift_mean", "drift_se", "remainder", "verdict"],
           [(e.state, e.drift_mean, e.drift_se, e.remainder_term, e.verdict)
            for e in report.estimates])
    print(f"certify: mode={report.mode} pass_fraction={report.pass_fraction:.3f} "
          f"worst_statistic={report.worst_statistic}")
    return 0


def cmd_simulate(cfg: RunConfig, args) -> int:
    if cfg.simulate is None:
        raise ConfigError("simulate requires a simulate section")
    sd, nb = _spectral_pipeline(cfg)
    model = build_model(cfg)
    norm = _run_norm(cfg, nb)
    sim = cfg.simulate
    x0 = np.asarray(sim.x0, float) if sim.x0 is not None else sim.x0_ray * model.sd.r
    summary, per_traj = classify_ensemble(model, x0, sim.s, sim.K, sim.n_max,
                                          sim.n_traj, cfg.seed, norm=norm,
                                          workers=args.workers)
    try:
        diag = ray_diagnostic(per_traj)
    except NoEscapers:
        diag = None
    em = Emitter(cfg, args.format)
    em.json("simulate", {"ensemble": summary, "ray_diagnostic": diag,
                         "trajectories": per_traj})
    rows = []
    for sm in per_traj[: sim.series_keep]:
        rec = run_trajectory(model, x0, sim.s, sim.K, sim.n_max, sm.seed, norm=norm)
        for i in range(len(rec.series.n)):
            rows.append((sm.seed, int(rec.series.n[i]), rec.series.lx[i],
                         rec.series.check_norm[i], rec.series.angle[i]))
    em.csv("trajectories", ["seed", "n", "lx", "check_norm", "angle"], rows)
    print(f"simulate: escape={summary.escape_fraction:.3f} "
          f"[{summary.escape_ci_low:.3f}, {summary.escape_ci_high:.3f}] "
          f"return={summary.return_fraction:.3f} undecided={summary.undecided_fraction:.3f}")
    return 0


def cmd_counterexample(cfg: RunConfig, args) -> int:
    if cfg.model.family != "counterexample":
        raise ConfigError("counterexample command requires model.family: counterexample")
    params = counterexample_params_from_cfg(cfg.model)
    cx = cfg.counterexample
    structure = verify_counterexample_structure(params, cx.n_steps_structure, cfg.seed)
    crosscheck = crosscheck_uv_against_engine(params, cx.crosscheck_steps, cfg.seed)
    stats = embedded_chain_stats(params, cx.t_probes, cx.n_samples_stats, cfg.seed)
    model = build_model(cfg)
    band_holds = check_transience_drift(model, L1Norm(), cfg.conditions.epsilon,
                                        b=1.0, a=cfg.conditions.a, rng=cfg.seed)
    band_wide = check_transience_drift(model, L1Norm(), cfg.conditions.epsilon,
                                       b=2.0, a=cfg.conditions.a, rng=cfg.seed)
    demos = {}
    for theta in cx.demo_thetas:
        p_theta = CounterexampleParams(
            g_bar=DriftProfile(theta, params.sigma_bar),
            sigma_bar=params.sigma_bar, theta=theta)
        demos[f"theta={theta:g}"] = counterexample_dichotomy_demo(
            p_theta, cx.demo_s, cx.demo_K, cx.demo_n_max, cx.demo_n_traj,
            cfg.seed, x0_scale=cx.x0_scale, workers=args.workers)
    em = Emitter(cfg, args.format)
    em.json("counterexample", {
        "structure": structure,
        "uv_engine_crosscheck_max_dev": crosscheck,
        "embedded_moments": stats,
        "growth_condition_on_band": band_holds,
        "growth_condition_wide_band": band_wide,
        "dichotomy_demo": demos,
    })
    em.csv("embedded_moments",
           ["t", "mean_mc", "mean_se", "tau2_closed", "tau2_mc", "tau2_se",
            "ratio_closed", "ratio_mc"],
           [(m.t, m.mean_mc, m.mean_se, m.tau2_closed, m.tau2_mc, m.tau2_se,
             m.ratio_closed, m.ratio_mc) for m in stats])
    print(f"counterexample: structure_ok={structure.ok} "
          f"crosscheck_dev={crosscheck:.3g} "
          f"band_b1={band_holds.verdict} band_b2={band_wide.verdict}")
    for key, demo in demos.items():
        print(f"  {key}: full_escape={demo.full_chain.escape_fraction:.3f} "
              f"embedded_escape={demo.embedded_chain.escape_fraction:.3f}")
    if not structure.ok:
        raise StructureViolation(
            f"{len(structure.violations)} parity violations", structure)
    return 0


COMMANDS = {
    "analyze": cmd_analyze,
    "check": cmd_check,
    "certify": cmd_certify,
    "simulate": cmd_simulate,
    "counterexample": cmd_counterexample,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nearcrit",
        description="Certification and simulation toolkit for near-critical "
                    "processes on the positive orthant.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--format", choices=("json", "csv", "both"), default="both")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.out is not None:
            cfg = replace(cfg, output_dir=args.out)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except StructureViolation as exc:
        print(f"structure violation: {exc}", file=sys.stderr)
        return 4
    except NearCritError as exc:
        print(f"error: {exc.__class__.__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
