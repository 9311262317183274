"""Voronoi cells of fitted centers, their soft enlargements, and cell masses.

Fitted indices are 0-based throughout. For a pair (i, l) write
``m_il = (beta_i + beta_l) / 2``. The alpha-enlarged cell of ``beta_i`` is

    V_i^alpha = {x : <x - m_il, beta_i - m_il> >= -alpha * sigma^2 for all l != i}

and the soft boundary slab between i and j is
``{x : |<x - m_ij, beta_i - m_ij>| <= alpha * sigma^2}``. With
``convention="log_ratio"`` the inner product is doubled, which turns the
condition into a bound on ``log(phi_i(x) / phi_l(x))``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import InvalidArgumentError
from .expectation import ExpectationEngine
from .mixture import TrueMixture, associations, coerce_beta, squared_distances

CONVENTIONS = ("literal", "log_ratio")
# Voronoi masses by Monte Carlo use at most this many draws per true component
# when the engine itself is a quadrature engine
DEFAULT_MC_SAMPLES = 200_000
_BATCH = 1 << 16


@dataclass(frozen=True)
class VoronoiQuery:
    beta: np.ndarray
    alpha: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "beta", coerce_beta(self.beta))
        if not self.alpha >= 0:
            raise InvalidArgumentError(f"alpha must be nonnegative, got {self.alpha}")
        if not self.sigma > 0:
            raise InvalidArgumentError(f"sigma must be positive, got {self.sigma}")

    @property
    def k(self) -> int:
        return self.beta.shape[1]


def _point(x, d: int) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (d,):
        raise InvalidArgumentError(f"dimension mismatch: x {x.shape} vs d={d}")
    return x


def hard_membership(x, query: VoronoiQuery, rtol: float = 1e-12) -> tuple[int, ...]:
    """All indices i minimizing ``||x - beta_i||`` (ties within ``rtol`` included)."""
    x = _point(x, query.beta.shape[0])
    sq = squared_distances(x[None, :], query.beta)[0]
    best = sq.min()
    return tuple(int(i) for i in np.flatnonzero(sq <= best + rtol * max(best, 1.0)))


def pair_margins(x, beta, convention: str = "literal") -> np.ndarray:
    """``k x k`` matrix with entry (i, l) = ``<x - m_il, beta_i - m_il>`` (doubled for log_ratio)."""
    if convention not in CONVENTIONS:
        raise InvalidArgumentError(f"convention must be one of {CONVENTIONS}")
    b = coerce_beta(beta)
    x = _point(x, b.shape[0])
    mid = (b[:, :, None] + b[:, None, :]) / 2.0  # d x k x k
    margins = np.einsum("ail,ail->il", x[:, None, None] - mid, b[:, :, None] - mid)
    if convention == "log_ratio":
        margins *= 2.0
    return margins


@dataclass(frozen=True)
class SoftMembership:
    cells: np.ndarray  # length k booleans: x in V_i^alpha
    boundaries: np.ndarray  # k x k booleans: x in the slab between i and j (diagonal True)


def soft_membership(x, query: VoronoiQuery, convention: str = "literal") -> SoftMembership:
    margins = pair_margins(x, query.beta, convention)
    thresh = query.alpha * query.sigma**2
    k = query.k
    off = ~np.eye(k, dtype=bool)
    cells = np.all((margins >= -thresh) | ~off, axis=1)
    boundaries = np.abs(margins) <= thresh
    boundaries[~off] = True
    return SoftMembership(cells, boundaries)


def in_soft_cell(x, i: int, query: VoronoiQuery, convention: str = "literal") -> bool:
    return bool(soft_membership(x, query, convention).cells[i])


def in_soft_boundary(x, i: int, j: int, query: VoronoiQuery, convention: str = "literal") -> bool:
    return bool(soft_membership(x, query, convention).boundaries[i, j])


def in_pair_region(x, i: int, j: int, beta, sigma: float = 1.0) -> bool:
    """Membership in ``G_ij = {x : psi_i(x) psi_j(x) >= 1 / (4 k^2)}``."""
    b = coerce_beta(beta)
    x = _point(x, b.shape[0])
    psi = associations(x[None, :], b, sigma)[0]
    k = b.shape[1]
    return bool(psi[i] * psi[j] >= 1.0 / (4.0 * k * k))


@dataclass(frozen=True)
class VoronoiMass:
    probs: np.ndarray  # k* x k, entry (s, i) = P_s(V_i)
    method: str  # "interval_exact" | "monte_carlo"
    std_error: np.ndarray  # zeros for interval_exact
    duplicate_groups: tuple[tuple[int, ...], ...] = ()

    @property
    def has_duplicates(self) -> bool:
        return bool(self.duplicate_groups)


def _distinct(beta: np.ndarray):
    uniq, inverse = np.unique(beta, axis=1, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    groups = tuple(
        tuple(int(i) for i in np.flatnonzero(inverse == g))
        for g in range(uniq.shape[1])
    )
    return uniq, inverse, groups


def _interval_masses(points: np.ndarray, theta: float, sigma: float) -> np.ndarray:
    """Gaussian masses of the 1-D Voronoi cells of sorted distinct ``points``."""
    mids = (points[1:] + points[:-1]) / 2.0
    lo = np.concatenate([[-np.inf], (mids - theta) / sigma])
    hi = np.concatenate([(mids - theta) / sigma, [np.inf]])
    # lower-tail difference left of the mean, upper-tail difference right of it
    left = ndtr(hi) - ndtr(lo)
    right = ndtr(-lo) - ndtr(-hi)
    return np.where(hi <= 0, left, right)


def voronoi_mass(
    model: TrueMixture,
    query: VoronoiQuery,
    engine: ExpectationEngine | None = None,
    method: str | None = None,
    samples: int | None = None,
) -> VoronoiMass:
    """``P_s(V_i)`` for every true component s and fitted center i.

    Duplicate fitted centers share one cell; its mass is split equally among
    them and the group is listed in ``duplicate_groups``.
    """
    beta = coerce_beta(query.beta, model)
    if method is None:
        method = "interval_exact" if model.d == 1 else "monte_carlo"
    if method not in ("interval_exact", "monte_carlo"):
        raise InvalidArgumentError(f"unknown Voronoi mass method {method!r}")
    if method == "interval_exact" and model.d != 1:
        raise InvalidArgumentError("interval_exact masses need d = 1")
    engine = engine or ExpectationEngine()
    uniq, inverse, groups = _distinct(beta)
    m = uniq.shape[1]
    probs_u = np.zeros((model.k_star, m))
    se_u = np.zeros((model.k_star, m))
    if method == "interval_exact":
        # np.unique sorts, so uniq[0] is increasing
        for s in range(model.k_star):
            probs_u[s] = _interval_masses(uniq[0], model.centers[0, s], model.sigma)
    else:
        n = samples or (engine.mc_samples if engine.mode == "monte_carlo" else DEFAULT_MC_SAMPLES)
        for s in range(model.k_star):
            rng = np.random.default_rng([int(engine.seed), int(s), 1])
            counts = np.zeros(m)
            done = 0
            while done < n:
                b = min(_BATCH, n - done)
                X = model.centers[:, s] + model.sigma * rng.standard_normal((b, model.d))
                # argmin breaks ties toward the lowest index
                counts += np.bincount(np.argmin(squared_distances(X, uniq), axis=1), minlength=m)
                done += b
            p = counts / n
            probs_u[s] = p
            se_u[s] = np.sqrt(p * (1.0 - p) / n)
    sizes = np.array([len(g) for g in groups], dtype=float)
    probs = probs_u[:, inverse] / sizes[inverse]
    se = se_u[:, inverse] / sizes[inverse]
    dups = tuple(g for g in groups if len(g) > 1)
    return VoronoiMass(probs=probs, method=method, std_error=se, duplicate_groups=dups)
