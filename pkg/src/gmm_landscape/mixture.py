"""True and fitted Gaussian mixtures with shared isotropic variance.

Centers are stored column-wise: a ``d x k`` matrix whose j-th column is the
j-th center. A one-dimensional array is read as ``d = 1``.

All density work happens in the log domain; associations are a softmax over
``-||x - beta_j||^2 / (2 sigma^2)`` shifted by the row maximum.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidArgumentError

LOG_2PI = float(np.log(2.0 * np.pi))


def as_center_matrix(centers, name: str = "centers") -> np.ndarray:
    """Coerce ``centers`` to a float ``d x k`` matrix (1-D input means d = 1)."""
    arr = np.array(centers, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidArgumentError(f"{name} must be a non-empty d x k matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains non-finite entries")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TrueMixture:
    """Ground-truth equally weighted mixture ``(1/k*) sum_s N(theta_s, sigma^2 I_d)``."""

    centers: np.ndarray
    sigma: float = 1.0
    delta_min: float = field(init=False)
    delta_max: float = field(init=False)

    def __post_init__(self):
        centers = as_center_matrix(self.centers)
        sigma = float(self.sigma)
        if not np.isfinite(sigma) or sigma <= 0:
            raise InvalidArgumentError(f"sigma must be positive, got {self.sigma}")
        object.__setattr__(self, "centers", _frozen(centers))
        object.__setattr__(self, "sigma", sigma)
        dists = [
            float(np.linalg.norm(centers[:, s] - centers[:, t]))
            for s, t in combinations(range(centers.shape[1]), 2)
        ]
        object.__setattr__(self, "delta_min", min(dists) if dists else 0.0)
        object.__setattr__(self, "delta_max", max(dists) if dists else 0.0)

    @property
    def d(self) -> int:
        return self.centers.shape[0]

    @property
    def k_star(self) -> int:
        return self.centers.shape[1]

    @property
    def snr(self) -> float:
        return self.delta_min / self.sigma

    @property
    def mean(self) -> np.ndarray:
        return self.centers.mean(axis=1)

    def translated(self, shift) -> "TrueMixture":
        return TrueMixture(self.centers + np.asarray(shift, float)[:, None], self.sigma)

    def transformed(self, rotation, shift=None) -> "TrueMixture":
        """Apply ``x -> U x + v`` to every center."""
        U = np.asarray(rotation, float)
        v = np.zeros(self.d) if shift is None else np.asarray(shift, float)
        return TrueMixture(U @ self.centers + v[:, None], self.sigma)


@dataclass(frozen=True)
class FittedCenters:
    """Candidate solution beta, a ``d x k`` matrix. Duplicate columns are allowed."""

    centers: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "centers", _frozen(as_center_matrix(self.centers, "beta")))

    @property
    def d(self) -> int:
        return self.centers.shape[0]

    @property
    def k(self) -> int:
        return self.centers.shape[1]

    def column(self, j: int) -> np.ndarray:
        return self.centers[:, j]

    def check_dimension(self, model: TrueMixture) -> None:
        if self.d != model.d:
            raise InvalidArgumentError(
                f"fitted centers live in R^{self.d} but the true mixture lives in R^{model.d}"
            )


def coerce_beta(beta, model: TrueMixture | None = None) -> np.ndarray:
    """Return the ``d x k`` center matrix of ``beta`` (FittedCenters or array-like)."""
    mat = beta.centers if isinstance(beta, FittedCenters) else as_center_matrix(beta, "beta")
    if model is not None and mat.shape[0] != model.d:
        raise InvalidArgumentError(
            f"fitted centers live in R^{mat.shape[0]} but the true mixture lives in R^{model.d}"
        )
    return mat


@dataclass(frozen=True)
class PointEvaluation:
    log_component_densities: np.ndarray
    associations: np.ndarray
    log_mixture_density: float


def component_log_density(x, center, sigma: float) -> float:
    """``log phi(x | center, sigma^2 I_d)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    center = np.atleast_1d(np.asarray(center, dtype=float))
    if x.shape != center.shape or x.ndim != 1:
        raise InvalidArgumentError(f"dimension mismatch: x {x.shape} vs center {center.shape}")
    if sigma <= 0:
        raise InvalidArgumentError("sigma must be positive")
    d = x.shape[0]
    sq = float(np.sum((x - center) ** 2))
    return -d * (0.5 * LOG_2PI + np.log(sigma)) - sq / (2.0 * sigma**2)


def log_densities(X: np.ndarray, centers: np.ndarray, sigma: float) -> np.ndarray:
    """Log component densities for a batch: ``X`` is ``n x d``, result ``n x k``."""
    d = centers.shape[0]
    sq = squared_distances(X, centers)
    return -d * (0.5 * LOG_2PI + np.log(sigma)) - sq / (2.0 * sigma**2)


def squared_distances(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # explicit differences rather than the ||x||^2 - 2<x,b> + ||b||^2 expansion:
    # the expansion cancels catastrophically for far-away points
    diff = X[:, :, None] - centers[None, :, :]
    return np.einsum("nak,nak->nk", diff, diff)


def log_associations(X: np.ndarray, centers: np.ndarray, sigma: float) -> np.ndarray:
    """``log psi_j(x)`` for a batch of points (``n x k``)."""
    a = -squared_distances(X, centers) / (2.0 * sigma**2)
    return a - logsumexp(a, axis=1, keepdims=True)


def associations(X: np.ndarray, centers: np.ndarray, sigma: float) -> np.ndarray:
    """Soft-argmax associations ``psi_j(x)`` for a batch (``n x k``, rows sum to one)."""
    a = -squared_distances(X, centers) / (2.0 * sigma**2)
    a -= a.max(axis=1, keepdims=True)
    p = np.exp(a)
    p /= p.sum(axis=1, keepdims=True)
    return p


def evaluate_point(x, beta, sigma: float) -> PointEvaluation:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("x contains non-finite coordinates")
    centers = coerce_beta(beta)
    if x.shape != (centers.shape[0],):
        raise InvalidArgumentError(f"dimension mismatch: x {x.shape} vs d={centers.shape[0]}")
    logf = log_densities(x[None, :], centers, sigma)[0]
    lse = logsumexp(logf)
    psi = np.exp(logf - lse)
    return PointEvaluation(
        log_component_densities=logf,
        associations=psi,
        log_mixture_density=float(lse - np.log(centers.shape[1])),
    )
