"""Deterministic evaluation of E_s[g(X)] and E_*[g(X)].

``X ~ N(theta_s, sigma^2 I_d)`` under component ``s``; the mixture expectation
is the plain average over components. Two modes:

* ``tensor_quadrature``: a product rule on standardized nodes ``z``, mapped by
  ``x = theta_s + sigma * z``. The per-axis rule is either a uniform trapezoid
  grid on ``[-half_width, half_width]`` with Gaussian weights (default) or
  Gauss-Hermite (``z = sqrt(2) * node``, weights normalized by ``pi^{-1/2}``).
* ``monte_carlo``: seeded standard-normal draws, one stream per component
  derived from ``(seed, s)`` so results do not depend on evaluation order.

Integrands are vectorized: ``g`` receives an ``n x d`` array of points and
returns an array whose first axis has length ``n``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidArgumentError, UnsupportedConfigurationError
from .mixture import TrueMixture

MODES = ("tensor_quadrature", "monte_carlo")
RULES = ("trapezoid", "gauss_hermite")
MAX_TENSOR_NODES = 10**6

# per-dimension defaults: (trapezoid order, trapezoid half width, Gauss-Hermite order)
_DEFAULTS = {1: (501, 10.0, 60), 2: (161, 10.0, 40), 3: (61, 8.0, 24)}


@dataclass(frozen=True)
class ExpectationEngine:
    """Configuration of the expectation evaluator (immutable, hashable)."""

    mode: str = "tensor_quadrature"
    rule: str = "trapezoid"
    order: int | None = None
    half_width: float | None = None
    mc_samples: int = 2_000_000
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidArgumentError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.rule not in RULES:
            raise InvalidArgumentError(f"rule must be one of {RULES}, got {self.rule!r}")
        if self.order is not None and int(self.order) < 1:
            raise InvalidArgumentError("quadrature order must be a positive integer")
        if self.half_width is not None and not self.half_width > 0:
            raise InvalidArgumentError("half_width must be positive")
        if int(self.mc_samples) < 2:
            raise InvalidArgumentError("mc_samples must be at least 2")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidArgumentError("seed must be a 64-bit unsigned integer")

    @classmethod
    def for_dimension(cls, d: int, **overrides) -> "ExpectationEngine":
        """Default engine for dimension ``d``: quadrature up to d = 3, Monte Carlo beyond."""
        if d > 3:
            overrides.setdefault("mode", "monte_carlo")
        return cls(**overrides)

    def resolved_order(self, d: int) -> int:
        if self.order is not None:
            return int(self.order)
        trap_order, _, gh_order = _DEFAULTS.get(d, _DEFAULTS[3])
        return trap_order if self.rule == "trapezoid" else gh_order

    def resolved_half_width(self, d: int) -> float:
        if self.half_width is not None:
            return float(self.half_width)
        return _DEFAULTS.get(d, _DEFAULTS[3])[1]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "rule": self.rule,
            "order": self.order,
            "half_width": self.half_width,
            "samples": int(self.mc_samples),
            "seed": int(self.seed),
        }


@dataclass(frozen=True)
class ExpectationResult:
    value: np.ndarray | float
    mc_std_error: np.ndarray | float


def _axis_rule(rule: str, order: int, half_width: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Standardized 1-D nodes, normalized weights and their logs."""
    if rule == "gauss_hermite":
        x, w = np.polynomial.hermite.hermgauss(order)
        z = np.sqrt(2.0) * x
        w = w / np.sqrt(np.pi)
        w = w / w.sum()
        return z, w, np.log(w)
    if order == 1:
        return np.zeros(1), np.ones(1), np.zeros(1)
    z = np.linspace(-half_width, half_width, order)
    logw = -0.5 * z**2
    logw -= logsumexp(logw)
    return z, np.exp(logw), logw


@lru_cache(maxsize=64)
def _tensor_nodes(rule: str, order: int, half_width: float, d: int):
    z1, _, lw1 = _axis_rule(rule, order, half_width)
    grids = np.meshgrid(*([z1] * d), indexing="ij")
    Z = np.stack([g.ravel() for g in grids], axis=1)
    lgrids = np.meshgrid(*([lw1] * d), indexing="ij")
    logw = sum(g.ravel() for g in lgrids)
    logw = logw - logsumexp(logw)
    w = np.exp(logw)
    for arr in (Z, w, logw):
        arr.setflags(write=False)
    return Z, w, logw


@lru_cache(maxsize=8)
def _mc_nodes(samples: int, seed: int, s: int, d: int):
    rng = np.random.default_rng([int(seed), int(s)])
    Z = rng.standard_normal((samples, d))
    w = np.full(samples, 1.0 / samples)
    logw = np.full(samples, -np.log(samples))
    for arr in (Z, w, logw):
        arr.setflags(write=False)
    return Z, w, logw


def standard_nodes(engine: ExpectationEngine, d: int, s: int = 0):
    """``(Z, w, log_w)`` for ``N(0, I_d)``; ``s`` only matters for Monte Carlo streams."""
    if engine.mode == "monte_carlo":
        return _mc_nodes(int(engine.mc_samples), int(engine.seed), int(s), int(d))
    if d > 3:
        raise UnsupportedConfigurationError(
            f"tensor quadrature is limited to d <= 3 (got d = {d}); use mode='monte_carlo'"
        )
    order = engine.resolved_order(d)
    if order**d > MAX_TENSOR_NODES:
        raise UnsupportedConfigurationError(
            f"order {order} in d = {d} gives {order**d} nodes (> {MAX_TENSOR_NODES})"
        )
    return _tensor_nodes(engine.rule, order, engine.resolved_half_width(d), int(d))


def component_nodes(s: int, model: TrueMixture, engine: ExpectationEngine):
    """Points ``X`` (``n x d``), weights and log weights for true component ``s``."""
    if not 0 <= s < model.k_star:
        raise InvalidArgumentError(f"component index {s} outside [0, {model.k_star})")
    Z, w, logw = standard_nodes(engine, model.d, s)
    X = model.centers[:, s][None, :] + model.sigma * Z
    return X, w, logw


@dataclass(frozen=True)
class NodeSet:
    """All nodes of the mixture stacked: ``W`` already includes the 1/k* factor."""

    X: np.ndarray
    W: np.ndarray
    w: np.ndarray
    slices: tuple[slice, ...]

    def component(self, s: int) -> slice:
        return self.slices[s]


def mixture_nodes(model: TrueMixture, engine: ExpectationEngine) -> NodeSet:
    Xs, ws, slices = [], [], []
    start = 0
    for s in range(model.k_star):
        X, w, _ = component_nodes(s, model, engine)
        Xs.append(X)
        ws.append(w)
        slices.append(slice(start, start + len(w)))
        start += len(w)
    w_all = np.concatenate(ws)
    return NodeSet(
        X=np.concatenate(Xs, axis=0),
        W=w_all / model.k_star,
        w=w_all,
        slices=tuple(slices),
    )


def _reduce(values: np.ndarray, w: np.ndarray, monte_carlo: bool):
    values = np.asarray(values, dtype=float)
    if values.shape[0] != w.shape[0]:
        raise InvalidArgumentError("integrand must return one value per node along axis 0")
    flat = values.reshape(values.shape[0], -1)
    if not np.all(np.isfinite(flat)):
        raise InvalidArgumentError("integrand is not finite on the node set")
    mean = w @ flat
    if monte_carlo:
        n = flat.shape[0]
        var = ((flat - mean) ** 2).sum(axis=0) / (n - 1)
        se = np.sqrt(var / n)
    else:
        se = np.zeros_like(mean)
    shape = values.shape[1:]
    if shape == ():
        return float(mean[0]), float(se[0])
    return mean.reshape(shape), se.reshape(shape)


def expect_component(s: int, g: Callable, model: TrueMixture, engine: ExpectationEngine) -> ExpectationResult:
    """``E_s[g(X)]`` for ``X ~ N(theta_s, sigma^2 I_d)``."""
    X, w, _ = component_nodes(s, model, engine)
    value, se = _reduce(g(X), w, engine.mode == "monte_carlo")
    return ExpectationResult(value, se)


def expect_mixture(g: Callable, model: TrueMixture, engine: ExpectationEngine) -> ExpectationResult:
    """``E_*[g(X)] = (1/k*) sum_s E_s[g(X)]``; MC errors combined as sqrt(sum se_s^2) / k*."""
    parts = [expect_component(s, g, model, engine) for s in range(model.k_star)]
    value = sum(np.asarray(p.value, dtype=float) for p in parts) / model.k_star
    se = np.sqrt(sum(np.asarray(p.mc_std_error, dtype=float) ** 2 for p in parts)) / model.k_star
    if np.ndim(value) == 0:
        return ExpectationResult(float(value), float(se))
    return ExpectationResult(value, se)


def log_expect_component(s: int, log_g: Callable, model: TrueMixture, engine: ExpectationEngine) -> float:
    """``log E_s[g(X)]`` computed from ``log g`` without leaving the log domain."""
    X, _, logw = component_nodes(s, model, engine)
    vals = np.asarray(log_g(X), dtype=float)
    if vals.shape != logw.shape:
        raise InvalidArgumentError("log integrand must return one scalar per node")
    return float(logsumexp(logw + vals))
