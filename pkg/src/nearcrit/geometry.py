"""Weighted norms in which the off-ray dynamics contract.

The mean matrix M of a critical primitive decomposition satisfies
spectral_radius(M - r*ell) < 1, but the Euclidean operator norm of
M - r*ell may exceed 1. This module constructs an invertible basis W such
that the norm ||x||_W := ||W x||_2 certifies

    ||(M - r*ell) x||_W <= rho_certified * ||x||_W,   rho_certified < 1,

by direct singular-value computation. It also computes the cone constant
lambda with ||x_check||_W <= lambda * (ell x) on the positive orthant, and
ships a plain l1 norm so norm-dependent operations can run in either norm.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import SlackTooSmall, SpectralRadiusNotLessThanOne
from .spectral import SpectralData

SCALING_STEPS = 200


@dataclass(frozen=True, eq=False)
class NormBasis:
    """Invertible basis W defining the weighted Euclidean norm ||W x||_2.

    ``rho_certified`` is the verified operator norm of M - r*ell in this
    norm (it includes a rounding pad, see build_contraction_norm).
    ``cond`` reports the 2-norm condition number of W.
    """

    W: np.ndarray
    W_inv: np.ndarray
    rho_certified: float
    epsilon_used: float
    cond: float

    @property
    def d(self) -> int:
        return self.W.shape[0]

    def vector(self, x: np.ndarray) -> float | np.ndarray:
        """||W x||_2; accepts batches with shape (..., d)."""
        x = np.asarray(x, dtype=float)
        out = np.linalg.norm(x @ self.W.T, axis=-1)
        return float(out) if np.ndim(out) == 0 else out

    def operator(self, A: np.ndarray) -> float:
        """Largest singular value of W A W^-1 (the induced operator norm)."""
        return float(np.linalg.norm(self.W @ np.asarray(A, float) @ self.W_inv, 2))

    def unit(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, float) / self.vector(x)


@dataclass(frozen=True)
class L1Norm:
    """Plain l1 norm with its induced operator norm (max column sum)."""

    def vector(self, x: np.ndarray) -> float | np.ndarray:
        out = np.abs(np.asarray(x, dtype=float)).sum(axis=-1)
        return float(out) if np.ndim(out) == 0 else out

    def operator(self, A: np.ndarray) -> float:
        return float(np.abs(np.asarray(A, float)).sum(axis=0).max())

    def unit(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, float) / self.vector(x)


@dataclass(frozen=True)
class ConeConstant:
    """Smallest lambda with ||x_check|| <= lambda * (ell x) on the orthant."""

    lam: float
    attaining_vertex: int


def _schur_blocks(T: np.ndarray) -> np.ndarray:
    """Map each row of a real quasi-triangular T to its diagonal-block ordinal."""
    d = T.shape[0]
    block = np.zeros(d, dtype=int)
    idx = 0
    i = 0
    while i < d:
        block[i] = idx
        if i + 1 < d and T[i + 1, i] != 0.0:
            block[i + 1] = idx
            i += 2
        else:
            i += 1
        idx += 1
    return block


def _block_balance(T: np.ndarray) -> np.ndarray:
    """Per-row scaling that equalizes the off-diagonal pair of each 2x2 block.

    A standardized 2x2 block [[a, b], [c, a]] with b*c < 0 becomes a scaled
    rotation under diag(1, sqrt(|c/b|)) conjugation, so its 2-norm equals the
    eigenvalue modulus exactly.
    """
    d = T.shape[0]
    bal = np.ones(d)
    i = 0
    while i < d - 1:
        if T[i + 1, i] != 0.0:
            b, c = T[i, i + 1], T[i + 1, i]
            bal[i + 1] = np.sqrt(abs(c / b))
            i += 2
        else:
            i += 1
    return bal


def build_contraction_norm(sd: SpectralData, epsilon: float | None = None) -> NormBasis:
    """Construct a basis certifying contraction of M - r*ell.

    The search conjugates the real Schur form of A = M - r*ell by a
    block-respecting diagonal diag(t**block_index) times a within-block
    balancing, halving t from 1 until the singular-value certificate reaches
    spectral_radius(A) + epsilon (and < 1). Default epsilon is
    (1 - spectral_radius)/2 so success always certifies a true contraction.

    The certificate is computed from the scaled Schur form and padded by a
    bound on the Schur factorization's backward error amplified through the
    diagonal scaling, so ``rho_certified`` is safe against rounding.
    """
    M = np.asarray(sd.M, dtype=float)
    d = M.shape[0]
    A = M - np.outer(sd.r, sd.ell)
    spec_rad = float(np.max(np.abs(np.linalg.eigvals(A))))
    if spec_rad >= 1.0 - 1e-12:
        raise SpectralRadiusNotLessThanOne(
            f"spectral radius of M - r*ell is {spec_rad:.6g}; input is not a "
            f"critical primitive decomposition"
        )
    if epsilon is None:
        epsilon = (1.0 - spec_rad) / 2.0
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    target = spec_rad + epsilon

    if not A.any():
        # M - r*ell vanishes identically (d = 1, or M equal to its ray
        # projector); the identity basis certifies 0 exactly.
        eye = np.eye(d)
        return NormBasis(W=eye, W_inv=eye.copy(), rho_certified=0.0,
                         epsilon_used=float(epsilon), cond=1.0)

    T, Q = scipy.linalg.schur(A, output="real")
    block = _schur_blocks(T)
    bal = _block_balance(T)
    schur_err = float(np.linalg.norm(Q @ T @ Q.T - A, 2))

    t = 1.0
    best = None
    for _ in range(SCALING_STEPS):
        delta = bal * t ** block
        amp = float(delta.max() / delta.min())
        # Scale T analytically: exact zeros below the blocks stay zero, so
        # the scaling cannot amplify factorization noise.
        T_scaled = T * (delta[None, :] / delta[:, None])
        pad = amp * (schur_err + 1e-15 * np.linalg.norm(A, 2))
        nrm = float(np.linalg.norm(T_scaled, 2)) + pad
        if nrm <= target and nrm < 1.0:
            W = (Q / delta).T  # diag(1/delta) @ Q.T
            W_inv = Q * delta  # Q @ diag(delta)
            return NormBasis(W=W, W_inv=W_inv, rho_certified=nrm,
                             epsilon_used=float(epsilon),
                             cond=float(np.linalg.cond(W)))
        if best is None or nrm < best:
            best = nrm
        t *= 0.5
    raise SlackTooSmall(
        f"could not certify operator norm <= {target:.6g} within "
        f"{SCALING_STEPS} scaling steps (best {best:.6g}); raise epsilon"
    )


def operator_norm(nb: NormBasis, A: np.ndarray) -> float:
    """Induced operator norm of A under the basis norm."""
    return nb.operator(A)


def vector_norm(nb, x: np.ndarray) -> float | np.ndarray:
    """Vector norm of x under the given norm handle (NormBasis or L1Norm)."""
    return nb.vector(x)


def cone_constant(sd: SpectralData, norm) -> ConeConstant:
    """Exact cone constant: sup of ||x_check|| / (ell x) over the orthant.

    The ratio is a convex, positively homogeneous function of x, so its
    maximum over the simplex {x >= 0, ell x = 1} is attained at a vertex
    e_i / ell_i; the vertex scan is therefore exact, not a sample bound.
    """
    d = sd.d
    proj = np.eye(d) - sd.ray_projector
    best, best_i = -1.0, 0
    for i in range(d):
        val = float(norm.vector(proj[:, i])) / float(sd.ell[i])
        if val > best:
            best, best_i = val, i
    return ConeConstant(lam=best, attaining_vertex=best_i)


def norm_equivalence_bounds(nb: NormBasis) -> tuple[float, float]:
    """Constants c1, c2 with c1*||x||_1 <= ||x||_W <= c2*||x||_1 for all x.

    c2 is exact (max over the l1 ball's vertices); c1 uses the rigorous
    bound sigma_min(W)/sqrt(d), valid everywhere though not tight.
    """
    d = nb.d
    c2 = float(max(np.linalg.norm(nb.W[:, i]) for i in range(d)))
    sigma_min = float(np.linalg.svd(nb.W, compute_uv=False)[-1])
    c1 = sigma_min / np.sqrt(d)
    return c1, c2


def transverse_recursion_constants(sd: SpectralData, nb: NormBasis) -> tuple[float, float, float]:
    """Constants (rho, c_g, c_xi) for the per-step transverse bound.

    Along any trajectory X' = M X + g(X) + xi with g >= 0 entrywise,

        ||X'_check||_W <= rho * ||X_check||_W + c_g * ell g(X) + c_xi * ||xi||_W

    with rho the certified contraction rate, c_g the cone constant (g lies
    in the orthant) and c_xi the operator norm of I - r*ell.
    """
    c_g = cone_constant(sd, nb).lam
    c_xi = nb.operator(np.eye(sd.d) - sd.ray_projector)
    return nb.rho_certified, c_g, c_xi
