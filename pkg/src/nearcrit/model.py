"""Process specifications X' = M X + g(X) + xi and the built-in families.

All shipped noise distributions are bounded two-point mixtures, so the
conditional moment contracts (mean-zero along ell, variance sigma^2, p-th
moment bounded by c * sigma^p) hold exactly rather than approximately, and
orthant invariance can be enforced by construction.

Families:

* ``make_lamperti_model``: drift g = (theta/2) * sigma_bar(lx)^2 / lx * r
  along the dominant ray plus ray/transverse two-point noise. The parameter
  theta is calibrated so that 2 * lx * (ell g) / sigma^2 == theta: theta < 1
  is the noise-dominated (recurrent) regime, theta > 1 drift-dominated.
* ``make_counterexample_model``: the two-dimensional chain whose drift and
  transverse noise switch off outside the band ||x_check||_1 <= sigma(x).
  Here t * g_bar(t) == theta * sigma_bar(t)^2.
* ``make_embedded_model``: the one-dimensional chain obtained by watching
  the counterexample at even times; its effective variance is tau^2(t) =
  sigma_bar^2(t) + mean of sigma_bar^2 one step later.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import OrthantViolation, ParamContractViolation, ProfileViolatesSmallO
from .exprs import ScalarExpr
from .seeding import draw_signs, rng_from
from .spectral import SpectralData, perron_decompose

_CAP_SHAVE = 1.0 - 1e-9  # keeps the transverse cap inside the orthant under rounding
_ORTHANT_TOL = 1e-9


# ---------------------------------------------------------------------------
# scalar noise-scale profiles sigma_bar(t)

@dataclass(frozen=True)
class PowerProfile:
    """sigma_bar(t) = t**exponent, with exponent < 1."""

    exponent: float = 0.5

    def __call__(self, t):
        if isinstance(t, float):
            return t ** self.exponent
        return np.asarray(t, dtype=float) ** self.exponent if np.ndim(t) else float(t) ** self.exponent

    def derivative(self, t):
        return self.exponent * np.asarray(t, dtype=float) ** (self.exponent - 1.0)

    def describe(self) -> dict:
        return {"kind": "power", "exponent": self.exponent}


@dataclass(frozen=True)
class LogDecayProfile:
    """sigma_bar(t) = t / (2 + log(1 + t))**kappa."""

    kappa: float = 1.0

    def __call__(self, t):
        if isinstance(t, float):
            return t / (2.0 + math.log1p(t)) ** self.kappa
        t = np.asarray(t, dtype=float)
        out = t / (2.0 + np.log1p(t)) ** self.kappa
        return float(out) if np.ndim(out) == 0 else out

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        base = 2.0 + np.log1p(t)
        out = base ** (-self.kappa) - self.kappa * t * base ** (-self.kappa - 1.0) / (1.0 + t)
        return float(out) if np.ndim(out) == 0 else out

    def describe(self) -> dict:
        return {"kind": "log_decay", "kappa": self.kappa}


@dataclass(frozen=True)
class ExprProfile:
    """Profile defined by a user expression in t (see exprs.ScalarExpr)."""

    expr: ScalarExpr

    def __call__(self, t):
        if np.ndim(t) == 0:
            return self.expr(float(t))
        return np.array([self.expr(float(ti)) for ti in np.asarray(t).ravel()]).reshape(np.shape(t))

    def derivative(self, t, rel_step: float = 1e-6):
        t = np.asarray(t, dtype=float)
        h = rel_step * np.maximum(np.abs(t), 1.0)
        out = (self(t + h) - self(t - h)) / (2.0 * h)
        return float(out) if np.ndim(out) == 0 else out

    def describe(self) -> dict:
        return {"kind": "expr", "source": self.expr.source}


def profile_from_spec(spec: dict):
    kind = spec.get("kind")
    if kind == "power":
        return PowerProfile(float(spec.get("exponent", 0.5)))
    if kind == "log_decay":
        return LogDecayProfile(float(spec.get("kappa", 1.0)))
    if kind == "expr":
        return ExprProfile(ScalarExpr(spec["source"]))
    raise ValueError(f"unknown profile kind: {kind!r}")


@dataclass(frozen=True)
class DriftProfile:
    """g_bar(t) = theta * sigma_bar(t)^2 / t, so t * g_bar(t) = theta * sigma_bar(t)^2."""

    theta: float
    sigma_bar: Callable

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        s = np.asarray(self.sigma_bar(t), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(t > 0, self.theta * s * s / np.where(t > 0, t, 1.0), 0.0)
        return float(out) if np.ndim(out) == 0 else out

    def describe(self) -> dict:
        return {"kind": "theta_over_t", "theta": self.theta}


# ---------------------------------------------------------------------------
# model spec and family callables

@dataclass(frozen=True, eq=False)
class ModelSpec:
    """A process specification with exact conditional-moment contracts.

    ``sigma`` maps a state to the conditional standard deviation of ell xi;
    ``noise(x, rng, base=None)`` draws one increment (``base`` optionally
    carries the precomputed M x + g(x) so steppers avoid a second matvec);
    ``noise_batch(x, n, rng)`` draws n increments from the same state,
    vectorized. ``p`` = 2 + delta and ``c_moment`` bound the p-th moment of
    ||xi||_1 by c_moment * sigma(x)**p.
    """

    d: int
    M: np.ndarray
    sd: SpectralData
    g: Callable
    sigma: Callable
    noise: Callable
    noise_batch: Callable
    p: float
    c_moment: float
    state_guard: Callable
    family: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class OrthantGuard:
    def __call__(self, x) -> bool:
        return bool(np.all(np.asarray(x) >= 0))


@dataclass(frozen=True, eq=False)
class ProfileSigma:
    """sigma(x) = sigma_bar(ell x)."""

    sigma_bar: Callable
    ell: np.ndarray

    def __call__(self, x) -> float:
        return float(self.sigma_bar(float(x @ self.ell)))


@dataclass(frozen=True, eq=False)
class CappedRaySigma:
    """sigma(x) = min(sigma_bar(ell x), ell x / 2).

    The cap only acts near the origin (profiles are o(t), so it is inactive
    for large states); it keeps the ray noise inside the orthant all the
    way down without touching the asymptotics the drift conditions test.
    """

    sigma_bar: Callable
    ell: np.ndarray

    def __call__(self, x) -> float:
        lx = float(x @ self.ell)
        if lx <= 0.0:
            return 0.0
        return min(float(self.sigma_bar(lx)), 0.5 * lx)


@dataclass(frozen=True, eq=False)
class LampertiDrift:
    """g(x) = (theta/2) * sigma(x)^2 / (ell x) * r  (zero at the origin).

    Uses the model's capped sigma so 2 (ell x)(ell g) / sigma^2 equals
    theta identically, at every state.
    """

    theta: float
    sigma: Callable
    ell: np.ndarray
    r: np.ndarray

    def __call__(self, x) -> np.ndarray:
        lx = float(x @ self.ell)
        if lx <= 0.0:
            return np.zeros_like(self.r)
        s = self.sigma(x)
        return (0.5 * self.theta * s * s / lx) * self.r


@dataclass(frozen=True, eq=False)
class LampertiNoise:
    """Ray two-point noise +-sigma(x)*r plus an orthant-capped transverse kick.

    The transverse amplitude is min(sigma(x), available headroom), so the
    ell-moments are exact for any cap and every step stays in the orthant.
    """

    M: np.ndarray
    g: Callable
    sigma: Callable
    r: np.ndarray
    ell: np.ndarray
    w: np.ndarray | None  # unit transverse direction, None in dimension 1
    abs_w: np.ndarray | None = None  # |w| floored away from 0, set by the factory

    def _amplitudes(self, x, base=None) -> tuple[np.ndarray, float, float]:
        if base is None:
            base = self.M @ x + self.g(x)
        sig = self.sigma(x)
        if self.w is None:
            return base, sig, 0.0
        slack = base - sig * self.r
        lo = float(slack.min())
        if lo < -_ORTHANT_TOL * (1.0 + float(base.max())):
            raise OrthantViolation(
                f"ray noise amplitude {sig:.3g} exceeds orthant headroom at x={np.asarray(x)}"
            )
        if lo < 0.0:
            slack = np.maximum(slack, 0.0)
        headroom = float((slack / self.abs_w).min())
        return base, sig, min(sig, _CAP_SHAVE * headroom)

    def __call__(self, x, rng, base=None) -> np.ndarray:
        _, sig, cap = self._amplitudes(x, base)
        s1, s2 = draw_signs(rng)
        xi = sig * s1 * self.r
        if self.w is not None and cap > 0.0:
            xi = xi + cap * s2 * self.w
        return xi

    def batch(self, x, n: int, rng) -> np.ndarray:
        _, sig, cap = self._amplitudes(x)
        signs = draw_signs(rng, n)
        xi = sig * signs[:, :1] * self.r[None, :]
        if self.w is not None and cap > 0.0:
            xi = xi + cap * signs[:, 1:] * self.w[None, :]
        return xi


CHI = np.array([1.0, 1.0])
ZETA = np.array([1.0, -1.0])


@dataclass(frozen=True, eq=False)
class CounterexampleParams:
    """Scalar profiles of the band-gated chain.

    Contract on the probe grid: 0 < g_bar(t) <= sigma_bar(t) <= t/2, the
    derivative of sigma_bar has magnitude < 1/2 and tends to 0.
    """

    g_bar: Callable
    sigma_bar: Callable
    theta: float


def default_counterexample_params(theta: float = 0.75) -> CounterexampleParams:
    sigma_bar = LogDecayProfile(kappa=1.0)
    return CounterexampleParams(g_bar=DriftProfile(theta, sigma_bar),
                                sigma_bar=sigma_bar, theta=theta)


def validate_counterexample_params(params: CounterexampleParams,
                                   t_grid: np.ndarray | None = None) -> None:
    """Grid-check the profile contract; raises ParamContractViolation."""
    if t_grid is None:
        t_grid = np.logspace(0.0, 8.0, 200)
    t = np.asarray(t_grid, dtype=float)
    sig = np.asarray([params.sigma_bar(ti) for ti in t])
    gbr = np.asarray([params.g_bar(ti) for ti in t])
    problems = []
    if not np.all(gbr > 0):
        problems.append("g_bar must be strictly positive")
    if not np.all(gbr <= sig * (1 + 1e-12)):
        problems.append("g_bar must not exceed sigma_bar")
    if not np.all(sig <= t / 2 * (1 + 1e-12)):
        problems.append("sigma_bar must not exceed t/2")
    if hasattr(params.sigma_bar, "derivative"):
        deriv = np.asarray(params.sigma_bar.derivative(t), dtype=float)
    else:
        h = 1e-6 * np.maximum(t, 1.0)
        deriv = np.asarray([(params.sigma_bar(ti + hi) - params.sigma_bar(ti - hi)) / (2 * hi)
                            for ti, hi in zip(t, h)])
    if not np.all(np.abs(deriv) < 0.5):
        problems.append("|sigma_bar'| must stay below 1/2 on the grid")
    last_decade = t >= t[-1] / 10.0
    first_decade = t <= t[0] * 10.0
    if np.max(np.abs(deriv[last_decade])) > min(0.1, np.max(np.abs(deriv[first_decade]))):
        problems.append("sigma_bar' does not tend to zero on the grid")
    if problems:
        raise ParamContractViolation("; ".join(problems))


def _band_gate(x: np.ndarray, sigma_val: float, r: np.ndarray, ell: np.ndarray) -> bool:
    """||x_check||_1 <= sigma(x), the switch of the gated family."""
    u = float(x @ ell)
    return float(np.abs(x - u * r).sum()) <= sigma_val


@dataclass(frozen=True, eq=False)
class GatedDrift:
    g_bar: Callable
    sigma_bar: Callable
    r: np.ndarray
    ell: np.ndarray

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        u = float(x @ self.ell)
        if u <= 0.0:
            return np.zeros(2)
        if _band_gate(x, float(self.sigma_bar(u)), self.r, self.ell):
            return float(self.g_bar(u)) * self.r
        return np.zeros(2)


@dataclass(frozen=True, eq=False)
class GatedNoise:
    """xi = sigma(x) * (+-(1,1)) plus sigma(x) * (+-(1,-1)) inside the band.

    Both signs are drawn every step (the second is discarded off the band)
    so stream layout matches the reduced-coordinate stepper exactly.
    """

    sigma_bar: Callable
    r: np.ndarray
    ell: np.ndarray

    def __call__(self, x, rng, base=None) -> np.ndarray:
        x = np.asarray(x, float)
        u = float(x @ self.ell)
        s1, s2 = draw_signs(rng)
        if u <= 0.0:
            return np.zeros(2)
        sig = float(self.sigma_bar(u))
        xi = sig * s1 * CHI
        if _band_gate(x, sig, self.r, self.ell):
            xi = xi + sig * s2 * ZETA
        return xi

    def batch(self, x, n: int, rng) -> np.ndarray:
        x = np.asarray(x, float)
        u = float(x @ self.ell)
        signs = draw_signs(rng, n)
        if u <= 0.0:
            return np.zeros((n, 2))
        sig = float(self.sigma_bar(u))
        xi = sig * signs[:, :1] * CHI[None, :]
        if _band_gate(x, sig, self.r, self.ell):
            xi = xi + sig * signs[:, 1:] * ZETA[None, :]
        return xi


@dataclass(frozen=True, eq=False)
class EmbeddedDrift:
    g_bar: Callable

    def __call__(self, x) -> np.ndarray:
        t = float(np.asarray(x, float)[0])
        return np.array([float(self.g_bar(t))]) if t > 0 else np.zeros(1)


@dataclass(frozen=True, eq=False)
class EmbeddedSigma:
    """tau(t): two-step noise scale of the watched-at-even-times chain."""

    g_bar: Callable
    sigma_bar: Callable

    def tau2(self, t: float) -> float:
        s = float(self.sigma_bar(t))
        mid = t + float(self.g_bar(t))
        up = float(self.sigma_bar(mid + s))
        dn = float(self.sigma_bar(mid - s))
        return s * s + 0.5 * (up * up + dn * dn)

    def __call__(self, x) -> float:
        t = float(np.asarray(x, float)[0])
        return float(np.sqrt(self.tau2(t))) if t > 0 else 0.0


@dataclass(frozen=True, eq=False)
class EmbeddedNoise:
    g_bar: Callable
    sigma_bar: Callable

    def __call__(self, x, rng, base=None) -> np.ndarray:
        t = float(x[0])
        if t <= 0:
            return np.zeros(1)
        s1, s2 = draw_signs(rng)
        s = float(self.sigma_bar(t))
        u1 = t + float(self.g_bar(t)) + s * s1
        return np.array([s * s1 + float(self.sigma_bar(u1)) * s2])

    def batch(self, x, n: int, rng) -> np.ndarray:
        t = float(x[0])
        if t <= 0:
            return np.zeros((n, 1))
        signs = draw_signs(rng, n)
        s = float(self.sigma_bar(t))
        u1 = t + float(self.g_bar(t)) + s * signs[:, 0]
        s_next = np.asarray(self.sigma_bar(u1), dtype=float)
        return (s * signs[:, 0] + s_next * signs[:, 1])[:, None]


# ---------------------------------------------------------------------------
# factories

def _check_small_o(sigma_bar, what: str = "sigma profile") -> None:
    t = np.logspace(0.0, 8.0, 60)
    vals = np.asarray([float(sigma_bar(ti)) for ti in t])
    if np.any(vals <= 0):
        raise ProfileViolatesSmallO(f"{what} must be positive on the test grid")
    ratio = vals / t
    if np.any(np.diff(ratio) > 1e-9 * ratio[:-1]) or not ratio[-1] < 0.9 * ratio[0]:
        raise ProfileViolatesSmallO(
            f"{what} does not satisfy sigma_bar(t)/t decreasing to smaller values "
            f"on t in [1, 1e8]"
        )


def make_lamperti_model(sd: SpectralData, theta: float, sigma_profile=None,
                        p: float = 3.0) -> ModelSpec:
    """Tunable drift-vs-noise family around the dominant ray of sd.M.

    Requires sd normalized to eigenvalue 1. ``sigma_profile`` must satisfy
    sigma_bar(t) = o(t) on the test grid; the effective noise scale is
    additionally capped at (ell x)/2 so the process cannot exit the orthant
    near the origin. Probes a few on-ray states for orthant headroom at
    construction time; off-ray headroom is enforced step by step.
    """
    if theta < 0:
        raise ValueError("theta must be >= 0")
    if not 2.0 < p <= 3.0:
        raise ValueError("p must lie in (2, 3]")
    profile = sigma_profile if sigma_profile is not None else PowerProfile(0.5)
    _check_small_o(profile)
    d = sd.d
    sigma = CappedRaySigma(sigma_bar=profile, ell=sd.ell)
    g = LampertiDrift(theta=theta, sigma=sigma, ell=sd.ell, r=sd.r)
    if d >= 2:
        v = (np.eye(d) - sd.ray_projector)[:, 0]
        w = v / np.linalg.norm(v)
    else:
        w = None
    abs_w = np.maximum(np.abs(w), 1e-300) if w is not None else None
    noise = LampertiNoise(M=sd.M, g=g, sigma=sigma, r=sd.r, ell=sd.ell, w=w,
                          abs_w=abs_w)
    for t_probe in (1.0, 10.0, 100.0, 1e4):
        x = t_probe * sd.r
        base = sd.M @ x + g(x)
        if np.any(base - sigma(x) * sd.r < -_ORTHANT_TOL * (1 + t_probe)):
            raise OrthantViolation(
                f"on-ray probe at ell x = {t_probe:g} cannot afford the ray noise"
            )
    w_l1 = float(np.abs(w).sum()) if w is not None else 0.0
    c_moment = (float(np.abs(sd.r).sum()) + w_l1) ** p
    describe = profile.describe() if hasattr(profile, "describe") else {"kind": "custom"}
    return ModelSpec(d=d, M=sd.M, sd=sd, g=g, sigma=sigma, noise=noise,
                     noise_batch=noise.batch, p=p, c_moment=c_moment,
                     state_guard=OrthantGuard(), family="lamperti",
                     params={"theta": theta, "profile": describe, "p": p})


def make_counterexample_model(params: CounterexampleParams, p: float = 3.0) -> ModelSpec:
    """The exact band-gated chain on the averaging matrix [[1,1],[1,1]]/2.

    The band test uses the l1 norm. The origin is absorbing. Odd/even
    parity of the transverse part is exact in the reduced (u, v)
    coordinates, see simulate.counterexample_uv_trajectory.
    """
    if not 2.0 < p <= 3.0:
        raise ValueError("p must lie in (2, 3]")
    validate_counterexample_params(params)
    sd = perron_decompose(0.5 * np.ones((2, 2)))
    g = GatedDrift(g_bar=params.g_bar, sigma_bar=params.sigma_bar, r=sd.r, ell=sd.ell)
    sigma = ProfileSigma(sigma_bar=params.sigma_bar, ell=sd.ell)
    noise = GatedNoise(sigma_bar=params.sigma_bar, r=sd.r, ell=sd.ell)
    theta = getattr(params, "theta", None)
    return ModelSpec(d=2, M=sd.M, sd=sd, g=g, sigma=sigma, noise=noise,
                     noise_batch=noise.batch, p=p, c_moment=4.0 ** p,
                     state_guard=OrthantGuard(), family="counterexample",
                     params={"theta": theta, "p": p})


def make_embedded_model(params: CounterexampleParams, p: float = 3.0) -> ModelSpec:
    """One-dimensional chain tracking the gated chain at even times."""
    if not 2.0 < p <= 3.0:
        raise ValueError("p must lie in (2, 3]")
    validate_counterexample_params(params)
    sd = perron_decompose(np.array([[1.0]]))
    g = EmbeddedDrift(g_bar=params.g_bar)
    sigma = EmbeddedSigma(g_bar=params.g_bar, sigma_bar=params.sigma_bar)
    noise = EmbeddedNoise(g_bar=params.g_bar, sigma_bar=params.sigma_bar)
    return ModelSpec(d=1, M=sd.M, sd=sd, g=g, sigma=sigma, noise=noise,
                     noise_batch=noise.batch, p=p, c_moment=3.0 ** p,
                     state_guard=OrthantGuard(), family="embedded_counterexample",
                     params={"theta": getattr(params, "theta", None), "p": p})


# ---------------------------------------------------------------------------
# stepping

def _enforce_orthant(x_next: np.ndarray, scale: float) -> np.ndarray:
    lo = float(x_next.min())
    if lo >= 0.0:
        return x_next
    if lo >= -_ORTHANT_TOL * (1.0 + scale):
        return np.clip(x_next, 0.0, None)
    raise OrthantViolation(f"step left the positive orthant: {x_next}")


def step(model: ModelSpec, x: np.ndarray, rng) -> np.ndarray:
    """One transition M x + g(x) + xi; raises OrthantViolation on model bugs."""
    x = np.asarray(x, dtype=float)
    rng = rng_from(rng)
    base = model.M @ x + model.g(x)
    nxt = base + model.noise(x, rng, base=base)
    return _enforce_orthant(nxt, float(x.max()))


def step_batch(model: ModelSpec, x: np.ndarray, n: int, rng) -> np.ndarray:
    """n independent one-step transitions from the same state, shape (n, d)."""
    x = np.asarray(x, dtype=float)
    rng = rng_from(rng)
    base = model.M @ x + model.g(x)
    xi = model.noise_batch(x, n, rng)
    nxt = base[None, :] + xi
    if np.all(nxt >= 0.0):
        return nxt
    if np.min(nxt) >= -_ORTHANT_TOL * (1.0 + float(np.abs(x).max())):
        return np.clip(nxt, 0.0, None)
    raise OrthantViolation("batch step left the positive orthant")


# ---------------------------------------------------------------------------
# moment contract probing

@dataclass(frozen=True)
class NoiseMomentReport:
    state: tuple
    n_samples: int
    mean_ray: float
    mean_ray_se: float
    var_ratio: float
    var_ratio_se: float
    p_moment_ratio: float
    c_moment: float
    flags: tuple
    ok: bool


def noise_moments_check(model: ModelSpec, x: np.ndarray, n_samples: int,
                        rng=0, norm=None) -> NoiseMomentReport:
    """Sample xi at a fixed state and compare against the moment contracts.

    Flags when |mean of ell xi| > 4 SE, when the variance ratio leaves
    1 +- 4 SE, or when the p-moment ratio exceeds c_moment. The p-th moment
    uses the l1 norm unless another norm handle is given.
    """
    if n_samples < 1000:
        raise ValueError("n_samples must be >= 1000")
    x = np.asarray(x, dtype=float)
    rng = rng_from(rng)
    xi = model.noise_batch(x, n_samples, rng)
    lxi = xi @ model.sd.ell
    sig = model.sigma(x)
    if sig <= 0:
        raise ValueError("sigma(x) must be positive at the probed state")
    mean = float(lxi.mean())
    mean_se = float(lxi.std(ddof=1) / np.sqrt(n_samples))
    sq = lxi * lxi
    var_ratio = float(sq.mean() / (sig * sig))
    var_ratio_se = float(sq.std(ddof=1) / np.sqrt(n_samples) / (sig * sig))
    if norm is None:
        xi_norm = np.abs(xi).sum(axis=1)
    else:
        xi_norm = np.asarray(norm.vector(xi))
    p_ratio = float(np.mean(xi_norm ** model.p) / sig ** model.p)
    flags = []
    if abs(mean) > 4 * mean_se:
        flags.append("mean")
    # the 1e-12 dust term keeps degenerate (zero-variance) samples, whose
    # SE vanishes, from tripping on accumulated rounding
    if abs(var_ratio - 1.0) > 4 * var_ratio_se + 1e-12:
        flags.append("variance")
    if p_ratio > model.c_moment:
        flags.append("p_moment")
    return NoiseMomentReport(state=tuple(map(float, x)), n_samples=n_samples,
                             mean_ray=mean, mean_ray_se=mean_se,
                             var_ratio=var_ratio, var_ratio_se=var_ratio_se,
                             p_moment_ratio=p_ratio, c_moment=model.c_moment,
                             flags=tuple(flags), ok=not flags)
