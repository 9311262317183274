"""Numeric verifiers for the quantitative inequalities behind the landscape results.

Each verifier evaluates an inequality on a grid and returns a
:class:`BoundCheckResult`. Margins are taken in the log domain
(``log rhs - log lhs`` style, so ``>= 0`` means the inequality holds) because
the quantities involved range down to ``e^-300``.
"""

from __future__ import annotations

from dataclasses import dataclass

import mpmath
import numpy as np
from scipy.special import expit, log_softmax

from .errors import InvalidArgumentError
from .expectation import ExpectationEngine, log_expect_component
from .geometry import CONVENTIONS
from .mixture import TrueMixture, log_associations

# log-domain slack allowed for inequalities that are tight (equalities at a grid point)
EQUALITY_TOL = 1e-12


@dataclass(frozen=True)
class BoundCheckResult:
    name: str
    grid_size: int
    violations: int
    worst_margin: float

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "grid_size": self.grid_size,
            "violations": self.violations,
            "worst_margin": self.worst_margin,
            "passed": self.passed,
        }


def _check_grid(grid, name):
    arr = np.asarray(grid, dtype=float)
    if arr.size == 0:
        raise InvalidArgumentError(f"{name}: empty grid")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name}: grid contains non-finite values")
    return arr


def gaussian_tail_terms(t: float, dps: int = 50) -> tuple:
    """``(phi(t)/(t+1), sqrt(2/pi) e^{-t^2/2}/(t+sqrt(t^2+4)), P(Z>=t), e^{-t^2/2})`` as mpf."""
    with mpmath.workdps(dps):
        t = mpmath.mpf(t)
        gauss = mpmath.exp(-t * t / 2)
        phi = gauss / mpmath.sqrt(2 * mpmath.pi)
        return (
            phi / (t + 1),
            mpmath.sqrt(2 / mpmath.pi) * gauss / (t + mpmath.sqrt(t * t + 4)),
            mpmath.erfc(t / mpmath.sqrt(2)) / 2,
            gauss,
        )


def verify_gaussian_tails(grid=None) -> BoundCheckResult:
    """Check ``phi(t)/(t+1) <= c(t) e^{-t^2/2} <= P(Z >= t) <= e^{-t^2/2}`` on ``grid``."""
    ts = np.round(np.linspace(0.0, 10.0, 101), 10) if grid is None else _check_grid(grid, "gaussian_tails")
    if np.any(ts < 0):
        raise InvalidArgumentError("gaussian_tails: grid values must be nonnegative")
    violations, worst = 0, np.inf
    for t in ts:
        terms = gaussian_tail_terms(float(t))
        with mpmath.workdps(50):
            gaps = [float(mpmath.log(terms[a + 1]) - mpmath.log(terms[a])) for a in range(3)]
        m = min(gaps)
        worst = min(worst, m)
        violations += m < -EQUALITY_TOL
    return BoundCheckResult("gaussian_tails", int(ts.size), int(violations), float(worst))


def logistic_variance(a: float, w: float, order: int = 80) -> float:
    """``Var(1 / (1 + exp(-(X - a) w)))`` for standard normal X by Gauss-Hermite quadrature."""
    x, wt = np.polynomial.hermite.hermgauss(order)
    z = np.sqrt(2.0) * x
    wt = wt / wt.sum()
    y = expit((z - a) * w)
    mean = wt @ y
    return float(wt @ (y - mean) ** 2)


def default_variance_grid() -> np.ndarray:
    """All (a, w) on the 0.25-spaced grid of [-3, 3]^2 (625 points)."""
    vals = np.round(np.arange(-3.0, 3.0 + 1e-9, 0.25), 10)
    a, w = np.meshgrid(vals, vals, indexing="ij")
    return np.column_stack([a.ravel(), w.ravel()])


def verify_variance_lower_bound(grid=None, order: int = 80) -> BoundCheckResult:
    """Check ``Var(Y) >= |w|^5 / 48 * exp(-4 (|w| + 2|a|)^2)`` on ``(a, w)`` pairs."""
    pts = default_variance_grid() if grid is None else _check_grid(grid, "variance_lower_bound")
    pts = np.atleast_2d(pts)
    if pts.shape[1] != 2:
        raise InvalidArgumentError("variance_lower_bound: grid must be a list of (a, w) pairs")
    violations, worst = 0, np.inf
    for a, w in pts:
        var = logistic_variance(a, w, order)
        if w == 0.0:
            # Y is constant: both sides vanish
            margin = 0.0 if var <= 1e-300 else np.inf
        else:
            log_bound = 5 * np.log(abs(w)) - np.log(48.0) - 4.0 * (abs(w) + 2 * abs(a)) ** 2
            margin = np.log(var) - log_bound if var > 0 else -np.inf
        worst = min(worst, margin)
        violations += margin < -EQUALITY_TOL
    return BoundCheckResult("variance_lower_bound", int(len(pts)), int(violations), float(worst))


@dataclass(frozen=True)
class AssociationConfig:
    """One instance for the exponential-association check (sigma = 1)."""

    theta: np.ndarray  # true center theta_s, length d
    beta: np.ndarray  # d x k fitted centers
    i: int  # dominating center
    j: int  # dominated center
    D: float

    def __post_init__(self):
        object.__setattr__(self, "theta", np.atleast_1d(np.asarray(self.theta, float)))
        b = np.asarray(self.beta, float)
        object.__setattr__(self, "beta", b[None, :] if b.ndim == 1 else b)


def association_engine() -> ExpectationEngine:
    """Wide, fine trapezoid rule for 1-D log-domain association integrals."""
    return ExpectationEngine(rule="trapezoid", order=16001, half_width=80.0)


def log_mean_association(cfg: AssociationConfig, engine: ExpectationEngine | None = None) -> float:
    """``log E_s[Psi_j]`` with X ~ N(theta_s, I)."""
    engine = engine or association_engine()
    model = TrueMixture(cfg.theta[:, None], 1.0)
    return log_expect_component(0, lambda X: log_associations(X, cfg.beta, 1.0)[:, cfg.j], model, engine)


def check_association_precondition(cfg: AssociationConfig) -> None:
    if cfg.D < 35:
        raise InvalidArgumentError(f"exponential association needs D >= 35, got D = {cfg.D}")
    k = cfg.beta.shape[1]
    if not (0 <= cfg.i < k and 0 <= cfg.j < k) or cfg.i == cfg.j:
        raise InvalidArgumentError("i and j must be distinct fitted indices")
    di = np.linalg.norm(cfg.beta[:, cfg.i] - cfg.theta)
    dj = np.linalg.norm(cfg.beta[:, cfg.j] - cfg.theta)
    if dj < di + 5.0 * cfg.D / 6.0 - 1e-12:
        raise InvalidArgumentError(
            f"distance condition fails: ||beta_j - theta|| = {dj:.6g} < {di:.6g} + 5D/6 = {di + 5 * cfg.D / 6:.6g}"
        )


def default_association_configs() -> list[AssociationConfig]:
    out = []
    offsets = [0.0, 1.5, -2.0, 0.5, 3.0]
    for n, D in enumerate(np.linspace(35.0, 60.0, 10)):
        bi = offsets[n % len(offsets)]
        sign = 1.0 if n % 2 == 0 else -1.0
        bj = sign * (abs(bi) + 5.0 * D / 6.0)
        cols = [bi, bj]
        if n % 3 == 2:
            cols.append(-sign * (abs(bj) + 10.0))  # a third, far-away center
        out.append(AssociationConfig(theta=[0.0], beta=[cols], i=0, j=1, D=float(D)))
    return out


def verify_exponential_association(
    configs=None, engine: ExpectationEngine | None = None, divisor: float = 33.0
) -> BoundCheckResult:
    """Check ``E_s[Psi_j] <= exp(-D^2 / divisor)`` for dominated centers.

    ``divisor`` exists for negative controls; the inequality under test uses 33.
    """
    cfgs = default_association_configs() if configs is None else list(configs)
    if not cfgs:
        raise InvalidArgumentError("exponential_association: empty grid")
    violations, worst = 0, np.inf
    for cfg in cfgs:
        check_association_precondition(cfg)
        margin = -cfg.D**2 / divisor - log_mean_association(cfg, engine)
        worst = min(worst, margin)
        violations += margin < 0
    return BoundCheckResult("exponential_association", len(cfgs), int(violations), float(worst))


def _batch_margins(B: np.ndarray, X: np.ndarray, convention: str) -> np.ndarray:
    """Pair margins ``<x - m_il, b_i - m_il>`` for a batch: B is n x k x d, X is n x d."""
    mid = (B[:, :, None, :] + B[:, None, :, :]) / 2.0
    M = np.einsum("nild,nild->nil", X[:, None, None, :] - mid, B[:, :, None, :] - mid)
    return 2.0 * M if convention == "log_ratio" else M


def _cell_slack(M: np.ndarray, i: int, alpha: float) -> np.ndarray:
    """min over l != i of margin + alpha (>= 0 means x is in the enlarged cell)."""
    k = M.shape[1]
    others = [l for l in range(k) if l != i]
    if not others:
        return np.full(M.shape[0], np.inf)
    return M[:, i, others].min(axis=1) + alpha


def verify_geometry_inclusions(
    samples: int = 100_000, seed: int = 7, convention: str = "literal", k_values=(1, 2, 3, 4),
    duplicate_rate: float = 0.1,
) -> BoundCheckResult:
    """Sampled check of the inclusions between soft Voronoi sets and association levels.

    For each probe (random d in {1,2}, k in ``k_values``, centers in [-3,3]^d,
    x in [-5,5]^d, sigma = 1) and c in {1, 2, 4}:

    * x in V_i^{log c}                      =>  psi_i >= 1/(ck)
    * psi_i >= 1/(ck)                       =>  x in V_i^{log ck}
    * x in V_i^{log 2} and V_j^{log 2}      =>  psi_i psi_j >= 1/(4k^2)
    * psi_i psi_j >= 1/(4k^2)               =>  x in V_i^{2 log 2k} and V_j^{2 log 2k}
    * x in the slab dV_ij^{log c} and V_j^{log c}  =>  psi_i psi_j >= 1/(c^3 k^2)

    With probability ``duplicate_rate`` the second center duplicates the first.
    """
    if convention not in CONVENTIONS:
        raise InvalidArgumentError(f"convention must be one of {CONVENTIONS}")
    if samples < 1:
        raise InvalidArgumentError("samples must be positive")
    rng = np.random.default_rng(seed)
    d_all = rng.integers(1, 3, size=samples)
    k_all = rng.choice(np.asarray(k_values), size=samples)
    violations, checks, worst = 0, 0, np.inf

    def record(premise, slack):
        nonlocal violations, checks, worst
        checks += int(premise.size)
        if premise.any():
            s = slack[premise]
            violations += int(np.sum(s < 0))
            worst = min(worst, float(s.min()))

    for d in (1, 2):
        for k in sorted(set(int(v) for v in k_values)):
            n = int(np.sum((d_all == d) & (k_all == k)))
            if n == 0:
                continue
            sub = np.random.default_rng([seed, d, k])
            B = sub.uniform(-3.0, 3.0, size=(n, k, d))
            if k >= 2:
                dup = sub.random(n) < duplicate_rate
                B[dup, 1] = B[dup, 0]
            X = sub.uniform(-5.0, 5.0, size=(n, d))
            sq = np.einsum("nkd,nkd->nk", X[:, None, :] - B, X[:, None, :] - B)
            logpsi = log_softmax(-0.5 * sq, axis=1)
            M = _batch_margins(B, X, convention)
            i, j = 0, min(1, k - 1)
            for c in (1.0, 2.0, 4.0):
                a = np.log(c)
                record(_cell_slack(M, i, a) >= 0, logpsi[:, i] + np.log(c * k))
                record(logpsi[:, i] >= -np.log(c * k), _cell_slack(M, i, np.log(c * k)))
                if k >= 2:
                    slab = np.abs(M[:, i, j]) <= a
                    premise = slab & (_cell_slack(M, j, a) >= 0)
                    record(premise, logpsi[:, i] + logpsi[:, j] + np.log(c**3 * k * k))
            if k >= 2:
                a2 = np.log(2.0)
                both = (_cell_slack(M, i, a2) >= 0) & (_cell_slack(M, j, a2) >= 0)
                pair = logpsi[:, i] + logpsi[:, j] + np.log(4.0 * k * k)
                record(both, pair)
                big = 2.0 * np.log(2.0 * k)
                record(pair >= 0, np.minimum(_cell_slack(M, i, big), _cell_slack(M, j, big)))
    name = "geometry_inclusions" if convention == "literal" else f"geometry_inclusions[{convention}]"
    return BoundCheckResult(name, checks, violations, float(worst))


def run_battery(divisor: float = 33.0, geometry_samples: int = 100_000, seed: int = 7) -> list[BoundCheckResult]:
    return [
        verify_gaussian_tails(),
        verify_variance_lower_bound(),
        verify_exponential_association(divisor=divisor),
        verify_geometry_inclusions(samples=geometry_samples, seed=seed),
    ]
