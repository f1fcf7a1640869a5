"""Perron-Frobenius analysis of nonnegative primitive matrices.

Provides primitivity checking, dominant eigenpair computation by power
iteration, rescaling to a critical (eigenvalue 1) matrix, and the
decomposition of a state into its component along the dominant ray and the
transverse remainder.

Conventions: the left eigenvector ``ell`` and right eigenvector ``r`` are
scaled so that ``ell @ r == 1`` and additionally ``sum(r) == d``, which fixes
a unique representative for reproducible output.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConvergenceFailure, NotPrimitiveWithin

POWER_ITER_BUDGET = 100_000
POWER_ITER_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Dominant eigenstructure of a nonnegative primitive matrix.

    Attributes:
        M: the matrix this data describes (critical after normalization).
        ell: positive left eigenvector, shape (d,), with ell @ r == 1.
        r: positive right eigenvector, shape (d,), with sum(r) == d.
        eig: dominant eigenvalue of the matrix originally analyzed
            (kept through normalization so reports show the raw value).
        primitivity_power: smallest k with M**k entrywise positive.
        rho: spectral radius of M/eig - r*ell, always < 1.
    """

    M: np.ndarray
    ell: np.ndarray
    r: np.ndarray
    eig: float
    primitivity_power: int
    rho: float

    @property
    def d(self) -> int:
        return self.r.shape[0]

    @property
    def ray_projector(self) -> np.ndarray:
        """The rank-one projector r*ell onto the dominant ray."""
        return np.outer(self.r, self.ell)


def wielandt_bound(d: int) -> int:
    """Sharp worst-case power at which a primitive matrix turns positive."""
    return d * d - 2 * d + 2


def check_primitive(M: np.ndarray, k_max: int | None = None) -> int:
    """Return the smallest k <= k_max with M**k entrywise positive.

    Works on the boolean support pattern, so entry magnitudes cannot
    overflow. Raises NotPrimitiveWithin if no power works; with the default
    ``k_max`` (the Wielandt bound) that is a proof of non-primitivity.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
        raise ValueError("M must be a square d x d matrix with d >= 1")
    if np.any(M < 0):
        raise ValueError("M must be entrywise nonnegative")
    d = M.shape[0]
    if k_max is None:
        k_max = wielandt_bound(d)
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    support = M > 0
    power = support.copy()
    for k in range(1, k_max + 1):
        if power.all():
            return k
        power = (power.astype(np.int64) @ support.astype(np.int64)) > 0
    raise NotPrimitiveWithin(k_max)


def _power_iteration(M: np.ndarray, tol: float, max_iter: int) -> tuple[np.ndarray, float]:
    """Dominant eigenpair of a primitive nonnegative matrix.

    Iterates v -> Mv / ||Mv||_1 from the uniform vector; all iterates stay
    strictly positive. Stops when ||Mv - lam*v||_inf <= tol * lam.
    """
    d = M.shape[0]
    v = np.full(d, 1.0 / d)
    for _ in range(max_iter):
        w = M @ v
        lam = float(w.sum())
        if not np.isfinite(lam) or lam <= 0.0:
            raise ConvergenceFailure("power iteration produced a nonpositive iterate")
        if float(np.max(np.abs(w - lam * v))) <= tol * max(lam, tol):
            return v, lam
        v = w / lam
    raise ConvergenceFailure(
        f"power iteration did not reach residual {tol:g} in {max_iter} iterations"
    )


def perron_decompose(M: np.ndarray) -> SpectralData:
    """Dominant eigenvalue and positive left/right eigenvectors of M.

    Requires primitivity (checked). The returned vectors satisfy
    ell @ r == 1 and sum(r) == d; ``rho`` refers to the critical rescaling
    M/eig, so it is < 1 for every valid decomposition.
    """
    M = np.asarray(M, dtype=float)
    k = check_primitive(M)
    r_raw, eig = _power_iteration(M, POWER_ITER_TOL, POWER_ITER_BUDGET)
    ell_raw, eig_left = _power_iteration(M.T, POWER_ITER_TOL, POWER_ITER_BUDGET)
    if abs(eig - eig_left) > 1e-9 * max(1.0, eig):
        raise ConvergenceFailure(
            f"left/right eigenvalue estimates disagree: {eig} vs {eig_left}"
        )
    d = M.shape[0]
    r = d * r_raw  # sum(r_raw) == 1 by construction
    ell = ell_raw / float(ell_raw @ r)
    critical = M / eig
    rho = float(np.max(np.abs(np.linalg.eigvals(critical - np.outer(r, ell)))))
    return SpectralData(M=M, ell=ell, r=r, eig=eig, primitivity_power=k, rho=rho)


def normalize_to_critical(M: np.ndarray) -> tuple[np.ndarray, SpectralData]:
    """Rescale M by its dominant eigenvalue and return the critical matrix.

    The eigenvectors are unchanged; ``eig`` in the returned SpectralData
    keeps the dominant eigenvalue of the input matrix.
    """
    sd = perron_decompose(M)
    critical = sd.M / sd.eig
    return critical, replace(sd, M=critical)


def project(x: np.ndarray, sd: SpectralData) -> tuple[np.ndarray, np.ndarray]:
    """Split x into its ray component (ell x) * r and the transverse rest.

    The transverse part is computed as x - x_hat (never via the projector
    matrix I - r*ell), so re-summing the parts recovers x to within one
    rounding of each component. Accepts batches with shape (..., d).
    """
    x = np.asarray(x, dtype=float)
    lx = x @ sd.ell
    x_hat = np.multiply.outer(lx, sd.r) if x.ndim > 1 else lx * sd.r
    x_check = x - x_hat
    return x_hat, x_check


def ray_component(x: np.ndarray, sd: SpectralData) -> np.ndarray | float:
    """ell @ x for a single state or a batch of states."""
    x = np.asarray(x, dtype=float)
    out = x @ sd.ell
    return float(out) if np.ndim(out) == 0 else out
