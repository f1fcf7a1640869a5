"""Lyapunov functionals, scalar expansion bounds, and drift certification.

Two functionals are provided. The recurrence functional

    ||x_check||^2 / (ell x)^2 + alpha * log(ell x)

has nonpositive one-step drift on {ell x >= s} for noise-dominated models
once alpha is large enough. The general four-parameter family

    (1 + gamma x_j / ell x) ||x_check||^2 / ((ell x)^2 (log ell x)^(beta+1))
        + alpha (log ell x)^(-beta)

is the transience certificate; its drift inequality carries the surcharge
sigma(x)^p / (ell x)^p on the left-hand side.

Both drift statements are almost-sure conditional inequalities; here they
are estimated by Monte Carlo with a one-sided 3-standard-error criterion,
so a "pass" is statistical evidence, not a proof.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .geometry import L1Norm
from .model import ModelSpec, step_batch
from .seeding import spawned_rng
from .spectral import SpectralData

RECURRENCE_MIN_LX = 1.0
TRANSIENCE_MIN_LX = 3.0


# ---------------------------------------------------------------------------
# functionals

@dataclass(frozen=True, eq=False)
class LyapunovParams:
    """Parameters (alpha, beta, gamma, j, s) plus the norm handle.

    beta is either exactly -1 (recurrence form) or > 0 (transience form);
    j is 1-based. s is the certification threshold on ell x and must exceed
    e so the log factors are > 1 on the certified region.
    """

    alpha: float
    beta: float
    gamma: float
    j: int
    s: float
    norm: object

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if not (self.beta == -1.0 or self.beta > 0):
            raise ValueError("beta must equal -1 or be > 0")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.j < 1:
            raise ValueError("j is a 1-based component index")
        if not self.s > math.e:
            raise ValueError("s must exceed e so log(ell x) > 1 on the region")

    def min_lx(self) -> float:
        return RECURRENCE_MIN_LX if self.beta == -1.0 else TRANSIENCE_MIN_LX


def validate_weight_contraction(lp: LyapunovParams, sd: SpectralData) -> None:
    """The weighted transverse term contracts only if (1+gamma/ell_j) rho^2 < 1."""
    if lp.j > sd.d:
        raise ValueError(f"j={lp.j} exceeds dimension {sd.d}")
    if lp.gamma > 0:
        factor = (1.0 + lp.gamma / float(sd.ell[lp.j - 1])) * sd.rho ** 2
        if not factor < 1.0:
            raise ValueError(
                f"(1 + gamma/ell_j) * rho^2 = {factor:.6g} >= 1; reduce gamma"
            )


def _lyap_kernel(lx, tv, xj_over_lx, alpha, beta, gamma):
    # Single expression shared by both functionals so the beta=-1, gamma=0
    # reduction is exact to the last bit.
    logl = np.log(lx)
    lead = (1.0 + gamma * xj_over_lx) * (tv * tv) / ((lx * lx) * logl ** (beta + 1.0))
    return lead + alpha * logl ** (-beta)


def _split(x, sd: SpectralData, norm):
    x = np.asarray(x, dtype=float)
    lx = x @ sd.ell
    x_check = x - (np.multiply.outer(lx, sd.r) if x.ndim > 1 else lx * sd.r)
    tv = np.asarray(norm.vector(x_check), dtype=float)
    return np.asarray(lx, dtype=float), tv


def lyap_recurrence(x, alpha: float, sd: SpectralData, norm) -> float | np.ndarray:
    """||x_check||^2/(ell x)^2 + alpha log(ell x), defined for ell x >= 1."""
    lx, tv = _split(x, sd, norm)
    if np.any(lx < RECURRENCE_MIN_LX):
        raise DomainError("lyap_recurrence requires ell x >= 1")
    out = _lyap_kernel(lx, tv, 0.0, alpha, -1.0, 0.0)
    return float(out) if np.ndim(out) == 0 else out


def lyap_general(x, lp: LyapunovParams, sd: SpectralData) -> float | np.ndarray:
    """The four-parameter functional at x, using lp.norm for the transverse part."""
    lx, tv = _split(x, sd, lp.norm)
    if np.any(lx < lp.min_lx()):
        raise DomainError(
            f"lyap_general with beta={lp.beta} requires ell x >= {lp.min_lx():g}"
        )
    if lp.gamma > 0:
        xj = np.asarray(x, dtype=float)[..., lp.j - 1]
        xj_over_lx = xj / lx
    else:
        xj_over_lx = 0.0
    out = _lyap_kernel(lx, tv, xj_over_lx, lp.alpha, lp.beta, lp.gamma)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# scalar expansion bounds

def log_increment_bound(t, h, eta) -> float | np.ndarray:
    """Upper bound for log(t+h): log t + h/t - h^2/(2(1+eta)t^2) when h <= eta t.

    Domain: t > 0, h > -t, eta > 0. Vectorized over t and h.
    """
    t = np.asarray(t, dtype=float)
    h = np.asarray(h, dtype=float)
    if np.any(t <= 0) or np.any(h <= -t) or np.any(np.asarray(eta) <= 0):
        raise DomainError("log_increment_bound requires t > 0, h > -t, eta > 0")
    penalty = (h * h) / (2.0 * (1.0 + eta) * t * t) * (h <= eta * t)
    out = np.log(t) + h / t - penalty
    return float(out) if np.ndim(out) == 0 else out


def _invlog_derivatives(t, beta):
    logt = np.log(t)
    f = logt ** (-beta)
    fp = -beta * logt ** (-beta - 1.0) / t
    fpp = (beta * (beta + 1.0) * logt ** (-beta - 2.0) + beta * logt ** (-beta - 1.0)) / (t * t)
    return f, fp, fpp


def invlog_increment_bound(t, h, beta: float, p: float, c: float) -> float | np.ndarray:
    """Upper bound for (log(t+h))**(-beta) by second-order expansion at t.

    Value: f(t) + f'(t) h + f''(t) h^2 / 2 + c|h|^p / ((log t)^(beta+1) t^p)
    plus 1 whenever h <= -t/2. Domain: t >= 3, h > 3 - t, beta > 0,
    2 < p <= 3, c >= 0.
    """
    t = np.asarray(t, dtype=float)
    h = np.asarray(h, dtype=float)
    if not (beta > 0 and 2.0 < p <= 3.0 and c >= 0):
        raise DomainError("invlog_increment_bound requires beta > 0, p in (2,3], c >= 0")
    if np.any(t < 3.0) or np.any(h <= 3.0 - t):
        raise DomainError("invlog_increment_bound requires t >= 3 and h > 3 - t")
    f, fp, fpp = _invlog_derivatives(t, beta)
    out = (f + fp * h + 0.5 * fpp * h * h
           + c * np.abs(h) ** p / (np.log(t) ** (beta + 1.0) * t ** p)
           + (h <= -t / 2.0))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class BoundGrid:
    """Evaluation grid: outer product of t values and h/t ratios."""

    t_values: np.ndarray
    h_fracs: np.ndarray

    def refine(self, factor: int) -> "BoundGrid":
        def densify(a):
            a = np.asarray(a, dtype=float)
            pieces = [np.linspace(a[i], a[i + 1], factor + 1)[:-1] for i in range(len(a) - 1)]
            return np.concatenate(pieces + [a[-1:]])
        return BoundGrid(densify(self.t_values), densify(self.h_fracs))


def default_bound_grid() -> BoundGrid:
    t_base = np.logspace(np.log10(3.0), 6.0, 100)
    neg = -np.logspace(np.log10(0.49), -3, 40)
    pos = np.logspace(-3, 1, 40)
    # The needed constant peaks where t + h approaches the domain edge t+h=3
    # with h/t at its most negative value; resolve those corner points
    # explicitly so grid refinement cannot reveal a larger requirement.
    corners = 3.0 / (1.0 + neg)
    cluster = np.concatenate([corners, corners * 0.995, corners * 1.005])
    t_values = np.unique(np.concatenate([t_base, cluster[cluster >= 3.0]]))
    return BoundGrid(t_values, np.concatenate([neg, [0.0], pos]))


def find_invlog_bound_constant(beta: float, p: float, grid: BoundGrid | None = None) -> float:
    """Smallest constant making the expansion bound hold on the grid, times 1.1.

    Points where the absorbing indicator h <= -t/2 fires hold for every c
    (the right-hand side then exceeds 1 > f(t+h)) and are excluded from the
    maximization. Points outside the domain h > 3 - t are skipped.
    """
    if grid is None:
        grid = default_bound_grid()
    if not (beta > 0 and 2.0 < p <= 3.0):
        raise DomainError("find_invlog_bound_constant requires beta > 0, p in (2,3]")
    c_needed = 0.0
    for t in grid.t_values:
        h = grid.h_fracs * t
        keep = (h > 3.0 - t) & (h > -t / 2.0) & (h != 0.0)
        if not keep.any():
            continue
        h = h[keep]
        f, fp, fpp = _invlog_derivatives(t, beta)
        lhs = np.log(t + h) ** (-beta)
        taylor = f + fp * h + 0.5 * fpp * h * h
        scale = np.abs(h) ** p / (np.log(t) ** (beta + 1.0) * t ** p)
        c_needed = max(c_needed, float(np.max((lhs - taylor) / scale)))
    return 1.1 * max(c_needed, 0.0)


def suggest_alpha(c_hat: float, epsilon: float) -> float:
    """Heuristic weight for the log term given an empirical moment constant
    and a drift margin; final choice stays with the user."""
    if not (c_hat > 0 and 0 < epsilon < 1):
        raise ValueError("need c_hat > 0 and epsilon in (0, 1)")
    return max(6.0 * c_hat / epsilon - c_hat, 1.0)


# ---------------------------------------------------------------------------
# Monte Carlo drift certification

MODES = ("recurrence", "transience")


@dataclass(frozen=True)
class DriftEstimate:
    """One-step conditional drift of the functional at a single state."""

    state: tuple
    n_samples: int
    drift_mean: float
    drift_se: float
    remainder_term: float
    verdict: str

    @property
    def statistic(self) -> float:
        return self.drift_mean + self.remainder_term


def _functional_value(x, model: ModelSpec, lp: LyapunovParams, mode: str):
    if mode == "recurrence":
        return lyap_recurrence(x, lp.alpha, model.sd, lp.norm)
    return lyap_general(x, lp, model.sd)


def estimate_drift(model: ModelSpec, lp: LyapunovParams, x, n_samples: int,
                   mode: str, rng) -> DriftEstimate:
    """Monte Carlo estimate of E[L(X') | X = x] - L(x).

    In transience mode the surcharge sigma(x)^p / (ell x)^p is added to the
    drift before the verdict. Verdicts: pass when mean + remainder + 3 SE
    <= 0, fail when mean + remainder - 3 SE > 0, else inconclusive.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if n_samples < 1000:
        raise ValueError("n_samples must be >= 1000")
    if mode == "transience":
        if not lp.beta > 0:
            raise ValueError("transience mode requires beta > 0")
        validate_weight_contraction(lp, model.sd)
    x = np.asarray(x, dtype=float)
    lx0 = float(x @ model.sd.ell)
    if lx0 < lp.s:
        raise DomainError(f"state has ell x = {lx0:g} below the threshold s = {lp.s:g}")
    l0 = _functional_value(x, model, lp, mode)
    x1 = step_batch(model, x, n_samples, rng)
    lx1 = x1 @ model.sd.ell
    min_lx = lp.min_lx()
    if np.any(lx1 < min_lx):
        bad = x1[int(np.argmin(lx1))]
        raise DomainError(
            f"a sampled next state {bad} has ell x < {min_lx:g}; "
            f"the threshold s = {lp.s:g} is too small for this model"
        )
    diffs = np.asarray(_functional_value(x1, model, lp, mode)) - l0
    mean = float(diffs.mean())
    se = float(diffs.std(ddof=1) / np.sqrt(n_samples))
    remainder = model.sigma(x) ** model.p / lx0 ** model.p if mode == "transience" else 0.0
    stat = mean + remainder
    if stat + 3.0 * se <= 0.0:
        verdict = "pass"
    elif stat - 3.0 * se > 0.0:
        verdict = "fail"
    else:
        verdict = "inconclusive"
    return DriftEstimate(state=tuple(map(float, x)), n_samples=n_samples,
                         drift_mean=mean, drift_se=se,
                         remainder_term=float(remainder), verdict=verdict)


@dataclass(frozen=True)
class RegionSpec:
    """States t*r + offset*sigma*w over a grid of ray coordinates t.

    ``offsets`` are transverse radii in units of sigma at the on-ray state;
    offsets that would leave the orthant are shrunk to 95% of the largest
    admissible radius. ``n_directions`` transverse directions are taken
    from the projected coordinate axes.
    """

    lx_values: tuple
    offsets: tuple = (0.0,)
    n_directions: int = 1


def region_states(model: ModelSpec, region: RegionSpec) -> list[np.ndarray]:
    sd = model.sd
    d = sd.d
    dirs: list[np.ndarray] = []
    if d > 1:
        proj = np.eye(d) - sd.ray_projector
        for k in range(min(region.n_directions, d)):
            v = proj[:, k]
            nv = float(np.linalg.norm(v))
            if nv > 1e-14:
                dirs.append(v / nv)
    states = []
    seen = set()
    for t in region.lx_values:
        x_ray = float(t) * sd.r
        candidates = [x_ray]
        sig = model.sigma(x_ray)
        for w in dirs:
            neg = w < 0
            cap = float(np.min(x_ray[neg] / -w[neg])) if neg.any() else np.inf
            for off in region.offsets:
                if off == 0.0:
                    continue
                radius = min(abs(off) * sig, 0.95 * cap)
                if radius <= 0:
                    continue
                candidates.append(x_ray + np.sign(off) * radius * w)
        for x in candidates:
            key = tuple(np.round(x, 12))
            if key not in seen:
                seen.add(key)
                states.append(x)
    return states


@dataclass(frozen=True, eq=False)
class CertificationReport:
    mode: str
    alpha: float
    beta: float
    gamma: float
    j: int
    s: float
    n_samples: int
    base_seed: int
    estimates: tuple
    pass_fraction: float
    worst_state: tuple | None
    worst_statistic: float | None
    beta_margin: float | None = None

    @property
    def all_pass(self) -> bool:
        return all(e.verdict == "pass" for e in self.estimates)

    @property
    def all_fail(self) -> bool:
        return all(e.verdict == "fail" for e in self.estimates)


def _beta_margin(model: ModelSpec, lp: LyapunovParams, mode: str) -> float | None:
    # Reported diagnostic: the transience functional needs beta < kappa*delta - 1,
    # where kappa is the log-decay rate of the model's sigma profile.
    if mode != "transience":
        return None
    profile = model.params.get("profile", {})
    if profile.get("kind") != "log_decay":
        return None
    delta = model.p - 2.0
    return profile["kappa"] * delta - 1.0 - lp.beta


def _certify_one(payload):
    model, lp, x, n_samples, mode, base_seed, index = payload
    return index, estimate_drift(model, lp, x, n_samples, mode,
                                 spawned_rng(base_seed, index))


def certify_region(model: ModelSpec, lp: LyapunovParams, region: RegionSpec,
                   n_samples: int, mode: str, base_seed: int = 0,
                   workers: int = 1) -> CertificationReport:
    """Drift estimates over a state region, aggregated order-independently.

    Each state gets its own spawned stream, so any worker count yields the
    identical report. An empty region has pass fraction 1 by convention.
    """
    states = region_states(model, region)
    payloads = [(model, lp, x, n_samples, mode, base_seed, i)
                for i, x in enumerate(states)]
    if workers > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = dict(pool.map(_certify_one, payloads))
        estimates = tuple(results[i] for i in range(len(payloads)))
    else:
        estimates = tuple(_certify_one(pl)[1] for pl in payloads)
    if estimates:
        n_pass = sum(e.verdict == "pass" for e in estimates)
        pass_fraction = n_pass / len(estimates)
        worst = max(estimates, key=lambda e: e.statistic + 3.0 * e.drift_se)
        worst_state, worst_stat = worst.state, worst.statistic
    else:
        pass_fraction, worst_state, worst_stat = 1.0, None, None
    return CertificationReport(mode=mode, alpha=lp.alpha, beta=lp.beta,
                               gamma=lp.gamma, j=lp.j, s=lp.s,
                               n_samples=n_samples, base_seed=base_seed,
                               estimates=estimates, pass_fraction=pass_fraction,
                               worst_state=worst_state, worst_statistic=worst_stat,
                               beta_margin=_beta_margin(model, lp, mode))


@dataclass(frozen=True, eq=False)
class SweepEntry:
    alpha: float
    s: float
    report: CertificationReport


def drift_sweep(model: ModelSpec, norm, alphas, s_values, mode: str = "recurrence",
                n_states: int = 20, span: float = 2.0, n_samples: int = 100_000,
                base_seed: int = 0, offsets: tuple = (0.0,)) -> list[SweepEntry]:
    """Certification sweep over (alpha, s) pairs.

    Each pair probes ``n_states`` log-spaced on-ray states in [s, span*s].
    The window is kept narrow so the 3 SE criterion stays decisive at the
    given sample size: for the scalar noise-dominated family the drift mean
    scales like 1/lx while its standard error scales like 1/sqrt(lx *
    n_samples), so statistical resolution is lost when lx grows past
    roughly n_samples / 144.
    """
    entries = []
    for alpha in alphas:
        for s in s_values:
            lp = LyapunovParams(alpha=float(alpha), beta=-1.0 if mode == "recurrence" else 1.0,
                                gamma=0.0, j=1, s=float(s), norm=norm)
            region = RegionSpec(lx_values=tuple(np.logspace(np.log10(s), np.log10(span * s),
                                                            n_states)),
                                offsets=offsets)
            report = certify_region(model, lp, region, n_samples, mode, base_seed)
            entries.append(SweepEntry(alpha=float(alpha), s=float(s), report=report))
    return entries
