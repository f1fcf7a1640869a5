"""Sampled checks of the drift conditions and moment/decay assumptions.

Every condition here is universally quantified over a region of states, so
sampling can only refute it, never prove it; the verdicts are accordingly
"holds_on_sample" or "violated". Sampling is band-targeted: the premises
only bite in thin neighborhoods of the dominant ray, which uniform orthant
sampling would almost never hit.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyPremiseSet, PremiseCoverageWarning
from .geometry import L1Norm
from .model import ModelSpec
from .seeding import rng_from

_REL_TOL = 1e-12


@dataclass(frozen=True)
class Violation:
    state: tuple
    lhs: float
    rhs: float


@dataclass(frozen=True, eq=False)
class ConditionReport:
    condition_id: str
    parameters: dict
    tested_states: int
    total_sampled: int
    violations: tuple
    verdict: str
    coverage_ok: bool
    notes: dict = field(default_factory=dict)


def _finish(condition_id: str, parameters: dict, tested: int, total: int,
            violations: list, coverage_ok: bool = True, notes: dict | None = None
            ) -> ConditionReport:
    return ConditionReport(
        condition_id=condition_id,
        parameters=parameters,
        tested_states=tested,
        total_sampled=total,
        violations=tuple(violations),
        verdict="holds_on_sample" if not violations else "violated",
        coverage_ok=coverage_ok,
        notes=notes or {},
    )


# ---------------------------------------------------------------------------
# band-targeted state sampling

DEFAULT_FRACTIONS = (0.05, 0.15, 0.3, 0.5, 0.65, 0.8, 0.95)


@dataclass(frozen=True)
class BandSampler:
    """States t*r + radius*w with t log-spaced in [a, span*a].

    ``radius`` runs over the given fractions of a per-state target band
    radius (supplied by the condition being checked), in a set of
    transverse directions and both orientations, clipped into the orthant.
    Vertex rays t * e_i / ell_i are added as off-band probes.
    """

    a: float
    n_t: int = 24
    span: float = 1e4
    fractions: tuple = DEFAULT_FRACTIONS
    n_directions: int = 2
    include_vertices: bool = True

    def directions(self, sd, rng) -> list[np.ndarray]:
        d = sd.d
        if d == 1:
            return []
        proj = np.eye(d) - sd.ray_projector
        dirs = []
        for k in range(d):
            v = proj[:, k]
            nv = float(np.linalg.norm(v))
            if nv > 1e-14:
                dirs.append(v / nv)
            if len(dirs) >= self.n_directions:
                break
        while len(dirs) < self.n_directions:
            v = proj @ rng.normal(size=d)
            nv = float(np.linalg.norm(v))
            if nv > 1e-10:
                dirs.append(v / nv)
        return dirs

    def states(self, sd, radius_fn, rng) -> list[np.ndarray]:
        rng = rng_from(rng)
        t_values = np.logspace(np.log10(self.a), np.log10(self.span * self.a), self.n_t)
        dirs = self.directions(sd, rng)
        out: list[np.ndarray] = []
        for t in t_values:
            x_ray = t * sd.r
            out.append(x_ray)
            target = float(radius_fn(x_ray))
            if target <= 0:
                continue
            for w in dirs:
                neg = w < 0
                for sign in (1.0, -1.0):
                    ww = sign * w
                    neg = ww < 0
                    cap = float(np.min(x_ray[neg] / -ww[neg])) if neg.any() else np.inf
                    for f in self.fractions:
                        radius = min(f * target, 0.95 * cap)
                        if radius > 0:
                            out.append(x_ray + radius * ww)
        if self.include_vertices and sd.d > 1:
            for t in (self.a, self.span * self.a):
                for i in range(sd.d):
                    e = np.zeros(sd.d)
                    e[i] = t / float(sd.ell[i])
                    out.append(e)
        return out


# ---------------------------------------------------------------------------
# drift conditions

def check_recurrence_drift(model: ModelSpec, norm=None, epsilon: float = 0.5,
                           b: float = 1.0, a: float = 10.0,
                           sampler: BandSampler | None = None, rng=0,
                           states=None) -> ConditionReport:
    """Near the ray, the ray drift must stay below (1-epsilon)/2 * sigma^2.

    Premise: ||x|| >= a and ||x_check||^2 <= b ||x|| ||g(x)||. Conclusion
    tested: (ell x)(ell g(x)) <= (1-epsilon)/2 * sigma(x)^2.
    """
    if not (0 < epsilon < 1 and a > 0 and b > 0):
        raise ValueError("need 0 < epsilon < 1, a > 0, b > 0")
    norm = norm if norm is not None else L1Norm()
    sd = model.sd
    if states is None:
        sampler = sampler or BandSampler(a=a)

        def radius(x_ray):
            gn = float(norm.vector(model.g(x_ray)))
            return float(np.sqrt(b * float(norm.vector(x_ray)) * gn)) if gn > 0 else 0.0

        states = sampler.states(sd, radius, rng)
    tested = 0
    violations: list[Violation] = []
    for x in states:
        if float(norm.vector(x)) < a:
            continue
        lx = float(x @ sd.ell)
        x_check = x - lx * sd.r
        gx = model.g(x)
        lhs_premise = float(norm.vector(x_check)) ** 2
        rhs_premise = b * float(norm.vector(x)) * float(norm.vector(gx))
        if lhs_premise > rhs_premise * (1 + _REL_TOL):
            continue
        tested += 1
        lhs = lx * float(gx @ sd.ell)
        rhs = 0.5 * (1.0 - epsilon) * model.sigma(x) ** 2
        if lhs > rhs + _REL_TOL * max(1.0, abs(rhs)):
            violations.append(Violation(tuple(map(float, x)), lhs, rhs))
    coverage_ok = tested > 0
    if not coverage_ok:
        warnings.warn("no sampled state satisfied the premise; coverage inconclusive",
                      PremiseCoverageWarning)
    return _finish("recurrence_drift", {"epsilon": epsilon, "b": b, "a": a},
                   tested, len(states), violations, coverage_ok)


def check_transience_drift(model: ModelSpec, norm=None, epsilon: float = 0.5,
                           b: float = 1.0, a: float = 10.0,
                           sampler: BandSampler | None = None, rng=0,
                           states=None) -> ConditionReport:
    """Near the ray, the ray drift must exceed (1+epsilon)/2 * sigma^2.

    Premise: ||x|| >= a and ||x_check|| <= b * sigma(x). Conclusion tested:
    (ell x)(ell g(x)) >= (1+epsilon)/2 * sigma(x)^2.
    """
    if not (epsilon > 0 and a > 0 and b > 0):
        raise ValueError("need epsilon > 0, a > 0, b > 0")
    norm = norm if norm is not None else L1Norm()
    sd = model.sd
    if states is None:
        sampler = sampler or BandSampler(a=a)
        states = sampler.states(sd, lambda x_ray: b * model.sigma(x_ray), rng)
    tested = 0
    violations: list[Violation] = []
    for x in states:
        if float(norm.vector(x)) < a:
            continue
        lx = float(x @ sd.ell)
        x_check = x - lx * sd.r
        if float(norm.vector(x_check)) > b * model.sigma(x) * (1 + _REL_TOL):
            continue
        tested += 1
        lhs = lx * float(model.g(x) @ sd.ell)
        rhs = 0.5 * (1.0 + epsilon) * model.sigma(x) ** 2
        if lhs < rhs - _REL_TOL * max(1.0, abs(rhs)):
            violations.append(Violation(tuple(map(float, x)), lhs, rhs))
    coverage_ok = tested > 0
    if not coverage_ok:
        warnings.warn("no sampled state satisfied the premise; coverage inconclusive",
                      PremiseCoverageWarning)
    return _finish("transience_drift", {"epsilon": epsilon, "b": b, "a": a},
                   tested, len(states), violations, coverage_ok)


# ---------------------------------------------------------------------------
# moment and decay assumptions

def check_noise_moment_bound(model: ModelSpec, a: float = 10.0,
                             n_states: int = 8, n_samples: int = 4000,
                             rng=0, norm=None) -> ConditionReport:
    """Empirical p-th moment of ||xi|| against c_moment * sigma(x)^p.

    A state violates when its sampled moment ratio exceeds
    c_moment * (1 + 4 SE_rel).
    """
    if model.p <= 2:
        raise ValueError("model must declare p > 2")
    rng = rng_from(rng)
    sd = model.sd
    t_values = np.logspace(np.log10(a), np.log10(1e4 * a), n_states)
    violations: list[Violation] = []
    ratios = []
    for t in t_values:
        x = t * sd.r
        sig = model.sigma(x)
        if sig <= 0:
            continue
        xi = model.noise_batch(x, n_samples, rng)
        if norm is None:
            xin = np.abs(xi).sum(axis=1)
        else:
            xin = np.asarray(norm.vector(xi))
        mom = xin ** model.p
        ratio = float(mom.mean() / sig ** model.p)
        se_rel = float(mom.std(ddof=1) / np.sqrt(n_samples) / max(mom.mean(), 1e-300))
        ratios.append(ratio)
        if ratio > model.c_moment * (1.0 + 4.0 * se_rel):
            violations.append(Violation(tuple(map(float, x)), ratio, model.c_moment))
    return _finish("noise_pth_moment", {"p": model.p, "c_moment": model.c_moment, "a": a},
                   len(ratios), len(t_values), violations,
                   notes={"max_ratio": max(ratios) if ratios else None})


def check_sigma_log_decay(model: ModelSpec, kappa: float,
                          t_grid=None, norm=None) -> ConditionReport:
    """Boundedness proxy for sigma(x) = O(||x|| / log^kappa ||x||) on the ray.

    Evaluates sigma(t r) * log(||t r||)^kappa / ||t r|| on a log grid and
    flags a violation when the final decade of the grid raises the running
    supremum by more than 1%. The link to the moment exponent (kappa > 1 /
    (p - 2)) is recorded but not enforced.
    """
    if kappa <= 0:
        raise ValueError("kappa must be > 0")
    norm = norm if norm is not None else L1Norm()
    if t_grid is None:
        t_grid = np.logspace(1.0, 8.0, 200)
    t_grid = np.asarray(t_grid, dtype=float)
    sd = model.sd
    ratios = []
    for t in t_grid:
        x = t * sd.r
        size = float(norm.vector(x))
        if size <= 1.0:
            continue
        ratios.append(model.sigma(x) * np.log(size) ** kappa / size)
    ratios = np.asarray(ratios)
    running = np.maximum.accumulate(ratios)
    cut = int(np.searchsorted(t_grid, t_grid[-1] / 10.0))
    cut = min(max(cut, 1), len(ratios) - 1)
    sup_before, sup_final = float(running[cut - 1]), float(running[-1])
    violated = sup_final > 1.01 * sup_before
    violations = [Violation((float(t_grid[-1]),), sup_final, 1.01 * sup_before)] if violated else []
    delta = model.p - 2.0
    return _finish("sigma_log_decay", {"kappa": kappa}, len(ratios), len(t_grid),
                   violations,
                   notes={"sup_before_last_decade": sup_before,
                          "sup_final": sup_final,
                          "kappa_exceeds_inverse_delta": bool(kappa > 1.0 / delta)})


def check_slab_drift(model: ModelSpec, u_grid, n_t: int = 8, rng=0,
                     tolerance: float = 1e-8, norm=None) -> ConditionReport:
    """Sampled infimum of ell g(x) over slabs {u <= ell x <= u + 1}.

    A slab violates when its estimated infimum falls below the tolerance;
    that blocks the easy sufficient route to ruling out finite limit
    points, though the model may still rule them out by direct argument.
    """
    rng = rng_from(rng)
    sd = model.sd
    d = sd.d
    proj = np.eye(d) - sd.ray_projector
    dirs = []
    for k in range(d):
        v = proj[:, k]
        nv = float(np.linalg.norm(v))
        if nv > 1e-14:
            dirs.append(v / nv)
    violations: list[Violation] = []
    infima = {}
    for u in u_grid:
        if u <= 0:
            raise ValueError("slab anchors must be positive")
        t_values = np.linspace(float(u), float(u) + 1.0, n_t)
        slab_states = []
        for t in t_values:
            x_ray = t * sd.r
            slab_states.append(x_ray)
            sig = model.sigma(x_ray)
            radii = [0.25 * sig, 0.5 * sig, 1.001 * sig, 2.0 * sig, 0.01 * t, 0.1 * t]
            for w in dirs:
                for sign in (1.0, -1.0):
                    ww = sign * w
                    neg = ww < 0
                    cap = float(np.min(x_ray[neg] / -ww[neg])) if neg.any() else np.inf
                    for radius in radii:
                        radius = min(radius, 0.95 * cap)
                        if radius > 0:
                            slab_states.append(x_ray + radius * ww)
        if not slab_states:
            raise EmptyPremiseSet(f"slab [{u}, {u + 1}] produced no states")
        inf_lg = min(float(model.g(x) @ sd.ell) for x in slab_states)
        infima[float(u)] = inf_lg
        if inf_lg < tolerance:
            worst = min(slab_states, key=lambda x: float(model.g(x) @ sd.ell))
            violations.append(Violation(tuple(map(float, worst)), inf_lg, tolerance))
    return _finish("slab_drift_lower_bound", {"u_grid": [float(u) for u in u_grid],
                                              "tolerance": tolerance},
                   len(infima), len(infima), violations,
                   notes={"slab_infima": infima})
