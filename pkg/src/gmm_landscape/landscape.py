"""Population negative log-likelihood L(beta) and its calculus.

Derivatives are exact for the discretized objective: the engine's nodes and
weights define a fixed weighted point cloud, and every quantity below is the
derivative of the loss on that cloud. Gradient and Hessian carry the 1/sigma^2
and 1/sigma^4 factors, so finite differences agree for any sigma.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DegenerateComponentError, EngineAccuracyError, InvalidArgumentError
from .expectation import ExpectationEngine, NodeSet, mixture_nodes
from .mixture import LOG_2PI, FittedCenters, TrueMixture, coerce_beta, squared_distances

TERMINATIONS = ("gradient_tol", "step_tol", "max_iters", "runaway")
DEGENERATE_MASS = 1e-300
# scaled tolerance of the second-order test: min eig >= -LOCAL_MIN_RTOL * (1 + ||H||_2)
LOCAL_MIN_RTOL = 1e-7


class _Pass(NamedTuple):
    loss: float
    P: np.ndarray  # N x k associations
    mass: np.ndarray  # E_*[Psi_j], shape (k,)
    weighted_x: np.ndarray  # E_*[Psi_j X], shape (d, k)


def _single_pass(beta: np.ndarray, nodes: NodeSet, sigma: float) -> _Pass:
    d, k = beta.shape
    a = -squared_distances(nodes.X, beta) / (2.0 * sigma**2)
    amax = a.max(axis=1, keepdims=True)
    e = np.exp(a - amax)
    tot = e.sum(axis=1, keepdims=True)
    P = e / tot
    log_f = (amax + np.log(tot))[:, 0] - np.log(k) - d * (0.5 * LOG_2PI + np.log(sigma))
    WP = nodes.W[:, None] * P
    return _Pass(
        loss=float(-(nodes.W @ log_f)),
        P=P,
        mass=WP.sum(axis=0),
        weighted_x=nodes.X.T @ WP,
    )


def _grad_from(beta: np.ndarray, ev: _Pass, sigma: float) -> np.ndarray:
    return (beta * ev.mass - ev.weighted_x) / sigma**2


@dataclass(frozen=True)
class LandscapeValue:
    loss: float
    kl_gap: float | None = None


def loss(beta, model: TrueMixture, engine: ExpectationEngine) -> LandscapeValue:
    """``L(beta) = -E_*[log f(X)]``; ``kl_gap = L(beta) - L(theta*)`` when k = k*."""
    b = coerce_beta(beta, model)
    nodes = mixture_nodes(model, engine)
    value = _single_pass(b, nodes, model.sigma).loss
    gap = None
    if b.shape[1] == model.k_star:
        gap = value - _single_pass(np.array(model.centers), nodes, model.sigma).loss
    return LandscapeValue(value, gap)


def gradient(beta, model: TrueMixture, engine: ExpectationEngine) -> np.ndarray:
    """``d x k`` matrix; column j is ``E_*[Psi_j (beta_j - X)] / sigma^2``."""
    b = coerce_beta(beta, model)
    ev = _single_pass(b, mixture_nodes(model, engine), model.sigma)
    return _grad_from(b, ev, model.sigma)


def _hessian_from(beta: np.ndarray, nodes: NodeSet, P: np.ndarray, sigma: float, symmetrize=True):
    d, k = beta.shape
    n = nodes.X.shape[0]
    R = beta.T[None, :, :] - nodes.X[:, None, :]  # n x k x d, beta_i - X
    M = (P[:, :, None] * R).reshape(n, k * d)
    H = M.T @ (nodes.W[:, None] * M)
    WP = nodes.W[:, None] * P
    for i in range(k):
        Ri = R[:, i, :]
        blk = slice(i * d, (i + 1) * d)
        H[blk, blk] -= Ri.T @ (WP[:, i : i + 1] * Ri)
    H /= sigma**4
    H[np.diag_indices(k * d)] += np.repeat(WP.sum(axis=0), d) / sigma**2
    if symmetrize:
        H = 0.5 * (H + H.T)
    return H


def hessian(beta, model: TrueMixture, engine: ExpectationEngine, symmetrize: bool = True) -> np.ndarray:
    """``(dk) x (dk)`` Hessian; variables ordered as the stacked columns beta_1, ..., beta_k."""
    b = coerce_beta(beta, model)
    nodes = mixture_nodes(model, engine)
    ev = _single_pass(b, nodes, model.sigma)
    return _hessian_from(b, nodes, ev.P, model.sigma, symmetrize)


def _em_from(ev: _Pass) -> np.ndarray:
    bad = np.flatnonzero(ev.mass < DEGENERATE_MASS)
    if bad.size:
        raise DegenerateComponentError(int(bad[0]), float(ev.mass[bad[0]]))
    return ev.weighted_x / ev.mass


def em_step(beta, model: TrueMixture, engine: ExpectationEngine) -> FittedCenters:
    """One population EM update ``beta_j <- E_*[Psi_j X] / E_*[Psi_j]``."""
    b = coerce_beta(beta, model)
    ev = _single_pass(b, mixture_nodes(model, engine), model.sigma)
    return FittedCenters(_em_from(ev))


@dataclass
class DescentTrace:
    iterates: np.ndarray  # T x d x k
    losses: np.ndarray
    termination: str
    iterations: int = 0
    grad_inf_norms: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def final(self) -> FittedCenters:
        return FittedCenters(self.iterates[-1])


def descend(
    beta0,
    model: TrueMixture,
    engine: ExpectationEngine,
    method: str = "em",
    tol_grad: float = 1e-9,
    tol_step: float = 1e-12,
    max_iters: int = 50_000,
    keep_iterates: bool = True,
) -> DescentTrace:
    """Run population EM or backtracking gradient descent from ``beta0``.

    Stops when the gradient sup-norm drops below ``tol_grad``, the step sup-norm
    below ``tol_step``, after ``max_iters`` updates, or when a center runs off
    beyond ``1e6 * max(delta_max, sigma)`` ("runaway").
    """
    if method not in ("em", "gradient_descent"):
        raise InvalidArgumentError(f"unknown descent method {method!r}")
    if max_iters < 1:
        raise InvalidArgumentError("max_iters must be >= 1")
    sigma = model.sigma
    nodes = mixture_nodes(model, engine)
    beta = np.array(coerce_beta(beta0, model))
    runaway = 1e6 * max(model.delta_max, sigma)

    iterates, losses, gnorms = [beta.copy()], [], []
    ev = _single_pass(beta, nodes, sigma)
    termination = "max_iters"
    n_iter = 0
    for _ in range(max_iters):
        grad = _grad_from(beta, ev, sigma)
        gnorm = float(np.max(np.abs(grad)))
        losses.append(ev.loss)
        gnorms.append(gnorm)
        if gnorm < tol_grad:
            termination = "gradient_tol"
            break
        if method == "em":
            new = _em_from(ev)
            new_ev = _single_pass(new, nodes, sigma)
            if new_ev.loss > ev.loss + 1e-6:
                raise EngineAccuracyError(
                    f"EM increased the loss by {new_ev.loss - ev.loss:.3e}; "
                    "raise the quadrature order or Monte Carlo sample size"
                )
        else:
            new, new_ev = _armijo_step(beta, grad, ev.loss, nodes, sigma)
        step = float(np.max(np.abs(new - beta)))
        beta, ev = new, new_ev
        n_iter += 1
        if keep_iterates:
            iterates.append(beta.copy())
        if step < tol_step:
            termination = "step_tol"
            break
        if np.max(np.linalg.norm(beta, axis=0)) > runaway:
            termination = "runaway"
            break
    if termination != "gradient_tol":
        grad = _grad_from(beta, ev, sigma)
        losses.append(ev.loss)
        gnorms.append(float(np.max(np.abs(grad))))
    if not keep_iterates:
        iterates = [np.array(coerce_beta(beta0, model)), beta]
        losses = [losses[0], losses[-1]]
        gnorms = [gnorms[0], gnorms[-1]]
    return DescentTrace(
        iterates=np.array(iterates),
        losses=np.array(losses),
        termination=termination,
        iterations=n_iter,
        grad_inf_norms=np.array(gnorms),
    )


def _armijo_step(beta, grad, current_loss, nodes, sigma, armijo=1e-4, max_halvings=60):
    gsq = float(np.sum(grad**2))
    t = 1.0
    for _ in range(max_halvings):
        cand = beta - t * grad
        ev = _single_pass(cand, nodes, sigma)
        if ev.loss <= current_loss - armijo * t * gsq:
            return cand, ev
        t *= 0.5
    return beta, _single_pass(beta, nodes, sigma)


@dataclass(frozen=True)
class ComponentStats:
    """Per true component s: E_s[Psi_i] (k* x k), E_s[Psi_i Psi_j] (k* x k x k), E_s[Psi_i X] (k* x d x k)."""

    mean_assoc: np.ndarray
    pair_assoc: np.ndarray
    assoc_x: np.ndarray


def component_stats(beta, model: TrueMixture, engine: ExpectationEngine) -> ComponentStats:
    b = coerce_beta(beta, model)
    nodes = mixture_nodes(model, engine)
    P = _single_pass(b, nodes, model.sigma).P
    means, pairs, xs = [], [], []
    for s in range(model.k_star):
        sl = nodes.component(s)
        w, Ps, Xs = nodes.w[sl], P[sl], nodes.X[sl]
        wP = w[:, None] * Ps
        means.append(wP.sum(axis=0))
        pairs.append(Ps.T @ wP)
        xs.append(Xs.T @ wP)
    pair = np.array(pairs)
    pair = 0.5 * (pair + pair.transpose(0, 2, 1))
    return ComponentStats(np.array(means), pair, np.array(xs))


@dataclass(frozen=True)
class StationarityReport:
    grad_inf_norm: float
    em_residual: float
    stein_residual: float
    raw_stein_residual: float
    hessian_min_eigenvalue: float
    hessian_norm: float
    second_order: str  # "local_minimum" | "saddle_or_degenerate"

    def to_dict(self) -> dict:
        return {
            "grad_inf_norm": self.grad_inf_norm,
            "em_residual": self.em_residual,
            "stein_residual": self.stein_residual,
            "raw_stein_residual": self.raw_stein_residual,
            "hessian_min_eigenvalue": self.hessian_min_eigenvalue,
            "hessian_norm": self.hessian_norm,
            "second_order": self.second_order,
        }


def stein_residuals(beta, model: TrueMixture, stats: ComponentStats) -> tuple[float, float]:
    """(equivalent-condition residual, raw Stein-identity residual).

    The first is ``max_i || sum_j beta_j sum_s E_s[Psi_i Psi_j] - sum_s theta_s E_s[Psi_i] ||``
    and vanishes exactly at stationary points. The second is
    ``max_{i,s} || E_s[Psi_i X] - theta_s E_s[Psi_i] - beta_i E_s[Psi_i] + sum_j beta_j E_s[Psi_i Psi_j] ||``,
    an identity that holds at every beta.
    """
    b = coerce_beta(beta, model)
    theta = model.centers
    pair_sum = stats.pair_assoc.sum(axis=0)  # k x k
    lhs = b @ pair_sum  # column i: sum_j beta_j sum_s E_s[Psi_i Psi_j]
    rhs = theta @ stats.mean_assoc  # column i: sum_s theta_s E_s[Psi_i]
    equiv = float(np.max(np.linalg.norm(lhs - rhs, axis=0)))
    raw = 0.0
    for s in range(model.k_star):
        m = stats.mean_assoc[s]
        res = stats.assoc_x[s] - np.outer(theta[:, s], m) - b * m + b @ stats.pair_assoc[s]
        raw = max(raw, float(np.max(np.linalg.norm(res, axis=0))))
    return equiv, raw


def classify_second_order(H: np.ndarray) -> tuple[float, float, str]:
    eig = np.linalg.eigvalsh(H)
    norm = float(np.max(np.abs(eig)))
    lam = float(eig[0])
    label = "local_minimum" if lam >= -LOCAL_MIN_RTOL * (1.0 + norm) else "saddle_or_degenerate"
    return lam, norm, label


def stationarity_report(beta, model: TrueMixture, engine: ExpectationEngine) -> StationarityReport:
    b = coerce_beta(beta, model)
    nodes = mixture_nodes(model, engine)
    ev = _single_pass(b, nodes, model.sigma)
    grad = _grad_from(b, ev, model.sigma)
    em_res = float(np.max(np.abs(_em_from(ev) - b)))
    stats = component_stats(b, model, engine)
    equiv, raw = stein_residuals(b, model, stats)
    lam, norm, label = classify_second_order(_hessian_from(b, nodes, ev.P, model.sigma))
    return StationarityReport(
        grad_inf_norm=float(np.max(np.abs(grad))),
        em_residual=em_res,
        stein_residual=equiv,
        raw_stein_residual=raw,
        hessian_min_eigenvalue=lam,
        hessian_norm=norm,
        second_order=label,
    )


def check_mean_consistency(beta, model: TrueMixture, engine: ExpectationEngine) -> float:
    """``|| sum_j beta_j E_*[Psi_j] - mean(theta*) ||``; zero at every stationary point."""
    b = coerce_beta(beta, model)
    ev = _single_pass(b, mixture_nodes(model, engine), model.sigma)
    return float(np.linalg.norm(b @ ev.mass - model.mean))


def span_projector(model: TrueMixture, rank_tol: float = 1e-10) -> np.ndarray:
    U, svals, _ = np.linalg.svd(model.centers, full_matrices=False)
    if svals.size == 0 or svals[0] == 0.0:
        return np.zeros((model.d, model.d))
    basis = U[:, svals > rank_tol * max(1.0, svals[0])]
    return basis @ basis.T


def check_span(beta, model: TrueMixture, rank_tol: float = 1e-10) -> float:
    """Largest distance of a fitted center from the linear span of the true centers."""
    b = coerce_beta(beta, model)
    Pr = span_projector(model, rank_tol)
    return float(np.max(np.linalg.norm(b - Pr @ b, axis=0)))
