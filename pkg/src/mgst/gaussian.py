"""Multivariate normal primitives used by all three engines."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidCovarianceError, ScheduleOrderError

PIVOT_TOL = 1e-12
SYMMETRY_TOL = 1e-12


def as_vector(x, name: str = "vector") -> np.ndarray:
    v = np.atleast_1d(np.asarray(x, dtype=float))
    if v.ndim != 1 or v.size == 0:
        raise InvalidCovarianceError(f"{name} must be a non-empty 1-d array")
    if not np.all(np.isfinite(v)):
        raise InvalidCovarianceError(f"{name} has non-finite entries")
    return v


def cholesky_pd(cov) -> np.ndarray:
    """Lower Cholesky factor of ``cov``, raising if it is not positive definite.

    Pivots are required to exceed ``PIVOT_TOL * max(diag)``.
    """
    c = np.atleast_2d(np.asarray(cov, dtype=float))
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise InvalidCovarianceError(f"covariance must be square, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise InvalidCovarianceError("covariance has non-finite entries")
    scale = max(float(np.max(np.abs(c))), 1e-300)
    if np.max(np.abs(c - c.T)) > SYMMETRY_TOL * scale:
        raise InvalidCovarianceError("covariance is not symmetric")
    p = c.shape[0]
    tol = PIVOT_TOL * max(float(np.max(np.diag(c))), 0.0)
    L = np.zeros_like(c)
    for j in range(p):
        pivot = c[j, j] - L[j, :j] @ L[j, :j]
        if not pivot > tol:
            raise InvalidCovarianceError(f"covariance is not positive definite (pivot {j} = {pivot:.3g})")
        L[j, j] = np.sqrt(pivot)
        for i in range(j + 1, p):
            L[i, j] = (c[i, j] - L[i, :j] @ L[j, :j]) / L[j, j]
    return L


def validate_cov(cov) -> np.ndarray:
    c = np.atleast_2d(np.asarray(cov, dtype=float))
    cholesky_pd(c)
    return c


def mvn_density(x, mean, cov) -> float:
    """Density of N_p(mean, cov) at ``x``."""
    x = as_vector(x, "x")
    mean = as_vector(mean, "mean")
    L = cholesky_pd(cov)
    if x.size != mean.size or L.shape[0] != x.size:
        raise InvalidCovarianceError("dimension mismatch between x, mean and cov")
    return float(mvn_density_batch(x[None, :], mean, L)[0])


def mvn_density_batch(points: np.ndarray, mean: np.ndarray, chol: np.ndarray) -> np.ndarray:
    """Vectorised density at the rows of ``points`` given a precomputed Cholesky factor."""
    p = chol.shape[0]
    z = np.linalg.solve(chol, (np.asarray(points, dtype=float) - mean).T)
    quad = np.einsum("ij,ij->j", z, z)
    log_norm = 0.5 * p * np.log(2.0 * np.pi) + np.sum(np.log(np.diag(chol)))
    return np.exp(-0.5 * quad - log_norm)


@dataclass(frozen=True)
class ConditionalLaw:
    """Law of the stage-k estimate given the stage-(k-1) estimate."""

    mean: np.ndarray
    cov: np.ndarray


def information_gain_check(sigma_prev: np.ndarray, sigma_curr: np.ndarray, rtol: float = 1e-9) -> None:
    diff = sigma_prev - sigma_curr
    diff = 0.5 * (diff + diff.T)
    scale = max(float(np.max(np.abs(sigma_prev))), 1e-300)
    if np.min(np.linalg.eigvalsh(diff)) < -rtol * scale:
        raise ScheduleOrderError("information decreases between consecutive analyses")


def regression_matrix(sigma_prev, sigma_curr) -> np.ndarray:
    """Sigma_curr @ inv(Sigma_prev), the slope of the conditional mean."""
    return np.linalg.solve(np.asarray(sigma_prev, float).T, np.asarray(sigma_curr, float).T).T


def conditional_law(theta, sigma_prev, sigma_curr, x_prev) -> ConditionalLaw:
    """Distribution of the next estimate given the previous one under independent increments.

    mean = theta + S_k S_{k-1}^{-1} (x - theta), cov = S_k - S_k S_{k-1}^{-1} S_k.
    The covariance is symmetrised and may be exactly zero when no information is added.
    """
    theta = as_vector(theta, "theta")
    x_prev = as_vector(x_prev, "x_prev")
    sp = validate_cov(sigma_prev)
    sc = validate_cov(sigma_curr)
    information_gain_check(sp, sc)
    A = regression_matrix(sp, sc)
    mean = theta + A @ (x_prev - theta)
    cov = sc - A @ sc
    cov = 0.5 * (cov + cov.T)
    if np.array_equal(sp, sc):
        cov = np.zeros_like(sc)
        mean = x_prev.copy()
    return ConditionalLaw(mean=mean, cov=cov)


def information(cov) -> float:
    """Determinant-based information level |cov|^(-1/2)."""
    L = cholesky_pd(cov)
    return float(np.exp(-np.sum(np.log(np.diag(L)))))
