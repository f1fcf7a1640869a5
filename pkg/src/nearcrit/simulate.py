"""Trajectory engine, ensemble classification, and counterexample checks.

Divergence to infinity is proxied by first passage above a ceiling K before
dropping below a floor s; trajectories that cross neither within the
horizon are reported as undecided, never silently dropped. Trajectory i of
an ensemble uses the integer seed base_seed + i, so aggregation is a pure
function of the configuration and any worker layout reproduces it exactly.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import NoEscapers, StructureViolation
from .geometry import L1Norm
from .model import (
    CounterexampleParams,
    ModelSpec,
    make_counterexample_model,
    make_embedded_model,
    step,
    validate_counterexample_params,
)
from .seeding import draw_signs, rng_from, trajectory_seed

OUTCOMES = ("returned_below_s", "exceeded_K", "undecided")


@dataclass(frozen=True, eq=False)
class TrajectorySeries:
    n: np.ndarray
    lx: np.ndarray
    check_norm: np.ndarray
    angle: np.ndarray


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    seed: int
    n_max: int
    stride: int
    outcome: str
    first_passage: dict
    n_final: int
    final_state: tuple
    series: TrajectorySeries
    recursion_margin: float | None = None

    @property
    def final_angle(self) -> float:
        return float(self.series.angle[-1])

    def angle_at_half_horizon(self) -> float:
        idx = int(np.searchsorted(self.series.n, self.n_final / 2.0))
        idx = min(idx, len(self.series.n) - 1)
        return float(self.series.angle[idx])


@dataclass(frozen=True)
class TrajectorySummary:
    seed: int
    outcome: str
    n_final: int
    lx_final: float
    final_angle: float
    half_angle: float


def default_stride(n_max: int) -> int:
    return max(1, n_max // 10_000)


def run_trajectory(model: ModelSpec, x0, s: float, K: float, n_max: int,
                   seed: int, norm=None, stride: int | None = None,
                   recursion_check: tuple | None = None) -> TrajectoryRecord:
    """Simulate until ell X drops below s, exceeds K, or the horizon ends.

    The thinned series records (n, ell X, ||X_check||, angle to the ray)
    every ``stride`` steps plus the initial and final states; threshold
    crossings are detected at every step regardless of thinning.

    ``recursion_check`` optionally carries (norm_basis, (rho, c_g, c_xi));
    when given, the record reports the largest per-step excess of
    ||X'_check|| over rho ||X_check|| + c_g ell g + c_xi ||xi|| in that
    basis (nonpositive up to rounding for a correct engine).
    """
    norm = norm if norm is not None else L1Norm()
    if stride is None:
        stride = default_stride(n_max)
    x = np.asarray(x0, dtype=float)
    sd = model.sd
    ell, r = sd.ell, sd.r
    lx = float(x @ ell)
    if not (s < lx < K):
        raise ValueError(f"x0 must start strictly between s and K, got ell x0 = {lx:g}")
    rng = rng_from(seed)
    r_unit = r / norm.vector(r)

    def check_and_angle(xv, lxv):
        xc = xv - lxv * r
        cn = float(norm.vector(xc))
        ang = float(norm.vector(xv / norm.vector(xv) - r_unit))
        return cn, ang

    ns, lxs, cns, angs = [0], [lx], [], []
    cn, ang = check_and_angle(x, lx)
    cns.append(cn)
    angs.append(ang)
    outcome = "undecided"
    first_passage = {"below_s": None, "above_K": None}
    margin = None
    if recursion_check is not None:
        nb, (rho, c_g, c_xi) = recursion_check
        margin = -math.inf
    n = 0
    for n in range(1, n_max + 1):
        if recursion_check is not None:
            tv0 = float(nb.vector(x - float(x @ ell) * r))
            base = model.M @ x + model.g(x)
            lg = float(model.g(x) @ ell)
        x_new = step(model, x, rng)
        if recursion_check is not None:
            xi = x_new - base
            tv1 = float(nb.vector(x_new - float(x_new @ ell) * r))
            bound = rho * tv0 + c_g * lg + c_xi * float(nb.vector(xi))
            margin = max(margin, tv1 - bound)
        x = x_new
        lx = float(x @ ell)
        crossed = lx < s or lx > K
        if crossed or n % stride == 0 or n == n_max:
            cn, ang = check_and_angle(x, lx)
            ns.append(n)
            lxs.append(lx)
            cns.append(cn)
            angs.append(ang)
        if lx < s:
            outcome = "returned_below_s"
            first_passage["below_s"] = n
            break
        if lx > K:
            outcome = "exceeded_K"
            first_passage["above_K"] = n
            break
    series = TrajectorySeries(n=np.asarray(ns), lx=np.asarray(lxs),
                              check_norm=np.asarray(cns), angle=np.asarray(angs))
    return TrajectoryRecord(seed=seed, n_max=n_max, stride=stride, outcome=outcome,
                            first_passage=first_passage, n_final=n,
                            final_state=tuple(map(float, x)), series=series,
                            recursion_margin=margin)


def summarize_record(rec: TrajectoryRecord) -> TrajectorySummary:
    return TrajectorySummary(seed=rec.seed, outcome=rec.outcome, n_final=rec.n_final,
                             lx_final=float(rec.series.lx[-1]),
                             final_angle=rec.final_angle,
                             half_angle=rec.angle_at_half_horizon())


# ---------------------------------------------------------------------------
# ensembles

@dataclass(frozen=True, eq=False)
class EnsembleSummary:
    n_traj: int
    escaped: int
    returned: int
    undecided: int
    escape_fraction: float
    escape_ci_low: float
    escape_ci_high: float
    return_fraction: float
    undecided_fraction: float
    median_final_angle_escapers: float | None
    base_seed: int

    @property
    def counts_consistent(self) -> bool:
        return self.escaped + self.returned + self.undecided == self.n_traj


def wilson_interval(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion."""
    if n == 0:
        return 0.0, 1.0
    p = k / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def _run_batch(payload):
    model, x0, s, K, n_max, norm, stride, seeds = payload
    out = []
    for sd_ in seeds:
        rec = run_trajectory(model, x0, s, K, n_max, sd_, norm=norm, stride=stride)
        out.append(summarize_record(rec))
    return out


def classify_ensemble(model: ModelSpec, x0, s: float, K: float, n_max: int,
                      n_traj: int, base_seed: int, norm=None,
                      stride: int | None = None, workers: int = 1
                      ) -> tuple[EnsembleSummary, list[TrajectorySummary]]:
    """Aggregate run_trajectory over seeds base_seed .. base_seed + n_traj - 1."""
    if n_traj < 100:
        raise ValueError("n_traj must be >= 100")
    norm = norm if norm is not None else L1Norm()
    seeds = [trajectory_seed(base_seed, i) for i in range(n_traj)]
    if workers > 1:
        chunks = np.array_split(np.asarray(seeds), workers * 4)
        payloads = [(model, x0, s, K, n_max, norm, stride, [int(s_) for s_ in ch])
                    for ch in chunks if len(ch)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_batch, payloads))
        summaries = [sm for part in parts for sm in part]
    else:
        summaries = _run_batch((model, x0, s, K, n_max, norm, stride, seeds))
    summaries.sort(key=lambda sm: sm.seed)
    escaped = sum(sm.outcome == "exceeded_K" for sm in summaries)
    returned = sum(sm.outcome == "returned_below_s" for sm in summaries)
    undecided = n_traj - escaped - returned
    lo, hi = wilson_interval(escaped, n_traj)
    angles = sorted(sm.final_angle for sm in summaries if sm.outcome == "exceeded_K")
    median_angle = float(np.median(angles)) if angles else None
    summary = EnsembleSummary(n_traj=n_traj, escaped=escaped, returned=returned,
                              undecided=undecided,
                              escape_fraction=escaped / n_traj,
                              escape_ci_low=lo, escape_ci_high=hi,
                              return_fraction=returned / n_traj,
                              undecided_fraction=undecided / n_traj,
                              median_final_angle_escapers=median_angle,
                              base_seed=base_seed)
    return summary, summaries


@dataclass(frozen=True)
class RayDiagnostic:
    n_escapers: int
    median_final_angle: float
    p90_final_angle: float
    median_half_angle: float
    decreasing_fraction: float

    @property
    def trend_decreasing(self) -> bool:
        return self.median_final_angle < self.median_half_angle


def ray_diagnostic(summaries: list[TrajectorySummary]) -> RayDiagnostic:
    """Angle-to-ray statistics over the escaping trajectories."""
    esc = [sm for sm in summaries if sm.outcome == "exceeded_K"]
    if not esc:
        raise NoEscapers("no trajectory exceeded the ceiling")
    finals = np.asarray([sm.final_angle for sm in esc])
    halves = np.asarray([sm.half_angle for sm in esc])
    return RayDiagnostic(n_escapers=len(esc),
                         median_final_angle=float(np.median(finals)),
                         p90_final_angle=float(np.quantile(finals, 0.9)),
                         median_half_angle=float(np.median(halves)),
                         decreasing_fraction=float(np.mean(finals < halves)))


# ---------------------------------------------------------------------------
# counterexample chain in reduced coordinates

# The chain is absorbed at the origin; in floats, states below this floor
# are inside the denormal range where relative precision (and with it the
# exact parity identities) degrades, so the reduced stepper absorbs there.
UV_ABSORB_FLOOR = 1e-300


def counterexample_uv_trajectory(params: CounterexampleParams, n_steps: int,
                                 seed: int, u0: float = 1.0
                                 ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Simulate the gated chain in (u, v) = (ell x, (x1 - x2)/2) coordinates.

    In these coordinates the averaging matrix wipes v each step, the gate
    reads 2|v| <= sigma_bar(u), and the update writes v' = +-sigma_bar(u)
    on the band and exactly 0.0 off it, so the even/odd parity identities
    hold with zero float tolerance. The sign stream matches the full
    two-dimensional engine draw for draw.
    """
    rng = rng_from(seed)
    u = np.empty(n_steps + 1)
    v = np.empty(n_steps + 1)
    gate = np.empty(n_steps + 1, dtype=bool)
    u[0], v[0] = float(u0), 0.0
    for n in range(n_steps):
        un, vn = u[n], v[n]
        if un <= UV_ABSORB_FLOOR:
            u[n + 1] = 0.0
            v[n + 1] = 0.0
            gate[n] = False
            continue
        sig = float(params.sigma_bar(un))
        g = 2.0 * abs(vn) <= sig
        gate[n] = g
        s1, s2 = draw_signs(rng)
        u[n + 1] = un + (float(params.g_bar(un)) if g else 0.0) + sig * s1
        v[n + 1] = sig * s2 if g else 0.0
    gate[n_steps] = 2.0 * abs(v[n_steps]) <= float(params.sigma_bar(u[n_steps])) \
        if u[n_steps] > UV_ABSORB_FLOOR else False
    return u, v, gate


def uv_to_state(u: float, v: float) -> np.ndarray:
    return np.array([u + v, u - v])


@dataclass(frozen=True, eq=False)
class StructureReport:
    n_steps: int
    checks: dict
    violations: tuple
    ok: bool


def verify_counterexample_structure(params: CounterexampleParams, n_steps: int,
                                    seed: int, raise_on_violation: bool = False
                                    ) -> StructureReport:
    """Check the parity identities of the gated chain along one trajectory.

    (i) the transverse part vanishes exactly at even steps; (ii) one step
    later its l1 norm equals 2 sigma(previous state) exactly; (iii) the
    noise scale at odd steps stays strictly below the transverse norm; and
    (iv) the drift/second noise component are active exactly at even steps.
    Any violation is an implementation bug, not sampling noise.

    The identities are checked up to absorption: a recurrent run may decay
    below the float floor of the stepper, after which the state is pinned
    at the absorbing origin; the absorption step, if any, is reported.
    """
    validate_counterexample_params(params)
    u, v, gate = counterexample_uv_trajectory(params, n_steps, seed)
    absorbed = np.flatnonzero(u <= UV_ABSORB_FLOOR)
    absorbed_at = int(absorbed[0]) if absorbed.size else None
    n_checked = absorbed_at if absorbed_at is not None else n_steps + 1
    violations = []
    counts = {"even_transverse_zero": 0, "odd_transverse_norm": 0,
              "odd_scale_below_transverse": 0, "gate_parity": 0,
              "absorbed_at": absorbed_at}

    def note(step_idx, kind, detail):
        if len(violations) < 50:
            violations.append((int(step_idx), kind, detail))

    for n in range(n_checked):
        even = n % 2 == 0
        if even:
            counts["even_transverse_zero"] += 1
            if v[n] != 0.0:
                note(n, "even_transverse_zero", float(v[n]))
            counts["gate_parity"] += 1
            if not gate[n]:
                note(n, "gate_parity", "gate off at even step")
        else:
            sig_prev = float(params.sigma_bar(u[n - 1]))
            counts["odd_transverse_norm"] += 1
            if 2.0 * abs(v[n]) != 2.0 * sig_prev:
                note(n, "odd_transverse_norm", (2.0 * abs(v[n]), 2.0 * sig_prev))
            sig_here = float(params.sigma_bar(u[n]))
            counts["odd_scale_below_transverse"] += 1
            if not sig_here < 2.0 * abs(v[n]):
                note(n, "odd_scale_below_transverse", (sig_here, 2.0 * abs(v[n])))
            counts["gate_parity"] += 1
            if gate[n]:
                note(n, "gate_parity", "gate on at odd step")
    report = StructureReport(n_steps=n_steps, checks=counts,
                             violations=tuple(violations), ok=not violations)
    if violations and raise_on_violation:
        raise StructureViolation(
            f"{len(violations)} parity violations in {n_steps} steps", report)
    return report


def crosscheck_uv_against_engine(params: CounterexampleParams, n_steps: int,
                                 seed: int) -> float:
    """Max deviation between the reduced stepper and the generic engine.

    Both consume the same sign stream; the reduced coordinates are exact
    while the engine works in x-space floats, so the deviation is pure
    rounding (comfortably below 1e-9 for moderate horizons).
    """
    u, v, _ = counterexample_uv_trajectory(params, n_steps, seed)
    model = make_counterexample_model(params)
    rng = rng_from(seed)
    x = uv_to_state(u[0], v[0])
    worst = 0.0
    for n in range(1, n_steps + 1):
        x = step(model, x, rng)
        lx = float(x @ model.sd.ell)
        check_l1 = float(np.abs(x - lx * model.sd.r).sum())
        worst = max(worst, abs(lx - u[n]), abs(check_l1 - 2.0 * abs(v[n])))
    return worst


# ---------------------------------------------------------------------------
# the watched-at-even-times chain

@dataclass(frozen=True)
class EmbeddedMoment:
    t: float
    n_samples: int
    mean_mc: float
    mean_se: float
    tau2_closed: float
    tau2_mc: float
    tau2_se: float
    ratio_closed: float
    ratio_mc: float


def embedded_increment_tau2(params: CounterexampleParams, t: float) -> float:
    """Closed-form two-step variance: sigma^2(t) plus the mean of sigma^2
    one step later."""
    s = float(params.sigma_bar(t))
    mid = t + float(params.g_bar(t))
    up = float(params.sigma_bar(mid + s))
    dn = float(params.sigma_bar(mid - s))
    return s * s + 0.5 * (up * up + dn * dn)


def embedded_chain_stats(params: CounterexampleParams, t_probes, n_samples: int,
                         seed: int) -> list[EmbeddedMoment]:
    """Monte Carlo and closed-form moments of the even-time increments.

    Probes start on the ray (transverse part zero). The centered increment
    is ell X_2 - ell X_0 - g_bar(ell X_0); its conditional mean vanishes by
    sign symmetry and its variance has the closed form above.
    """
    rng = rng_from(seed)
    out = []
    for t in t_probes:
        t = float(t)
        signs = draw_signs(rng, n_samples)
        s = float(params.sigma_bar(t))
        mid = t + float(params.g_bar(t))
        u1 = mid + s * signs[:, 0]
        s_next = np.asarray(params.sigma_bar(u1), dtype=float)
        xi = s * signs[:, 0] + s_next * signs[:, 1]
        tau2_closed = embedded_increment_tau2(params, t)
        sq = xi * xi
        tau2_mc = float(sq.mean())
        sig2 = s * s
        out.append(EmbeddedMoment(
            t=t, n_samples=n_samples,
            mean_mc=float(xi.mean()),
            mean_se=float(xi.std(ddof=1) / np.sqrt(n_samples)),
            tau2_closed=tau2_closed,
            tau2_mc=tau2_mc,
            tau2_se=float(sq.std(ddof=1) / np.sqrt(n_samples)),
            ratio_closed=tau2_closed / sig2,
            ratio_mc=tau2_mc / sig2,
        ))
    return out


@dataclass(frozen=True, eq=False)
class DichotomyDemo:
    theta: float
    full_chain: EnsembleSummary
    embedded_chain: EnsembleSummary


def counterexample_dichotomy_demo(params: CounterexampleParams, s: float, K: float,
                                  n_max: int, n_traj: int, base_seed: int,
                                  x0_scale: float = 25.0, workers: int = 1
                                  ) -> DichotomyDemo:
    """Ensemble classification of the gated chain and its even-time chain.

    Both start at ray coordinate ``x0_scale`` and use the l1 norm. The
    full chain's drift satisfies the near-ray growth condition whenever
    theta >= (1+epsilon)/2 on the band, yet for theta < 1 the even-time
    chain (whose effective variance is about twice sigma_bar^2) pulls the
    process back, so both summaries show recurrence-style behavior.
    """
    full_model = make_counterexample_model(params)
    emb_model = make_embedded_model(params)
    norm = L1Norm()
    full, _ = classify_ensemble(full_model, x0_scale * full_model.sd.r, s, K, n_max,
                                n_traj, base_seed, norm=norm, workers=workers)
    emb, _ = classify_ensemble(emb_model, np.array([x0_scale]), s, K, n_max,
                               n_traj, base_seed, norm=norm, workers=workers)
    return DichotomyDemo(theta=float(getattr(params, "theta", float("nan"))),
                         full_chain=full, embedded_chain=emb)
