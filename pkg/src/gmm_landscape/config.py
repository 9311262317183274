"""Experiment configuration: JSON schema 1, parsed into plain dataclasses.

Every validation failure raises :class:`ConfigError` with a dotted field path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classifier import Thresholds
from .errors import ConfigError, InvalidArgumentError
from .expectation import ExpectationEngine
from .mixture import TrueMixture

SCHEMA_VERSION = 1
GENERATORS = ("line", "simplex", "random")
INIT_KINDS = ("random_box", "perturb_truth", "explicit")


@dataclass(frozen=True)
class ModelSpec:
    d: int
    k_star: int
    sigma: float
    centers: np.ndarray | None = None  # explicit d x k*
    generator: str | None = None
    delta: float | None = None
    seed: int = 0

    def build(self, delta: float | None = None) -> TrueMixture:
        if self.centers is not None:
            return TrueMixture(self.centers, self.sigma)
        return TrueMixture(generate_centers(self.generator, self.d, self.k_star, delta or self.delta, self.seed), self.sigma)


@dataclass(frozen=True)
class InitSpec:
    kind: str = "random_box"
    scale: float = 0.01
    beta: np.ndarray | None = None


@dataclass(frozen=True)
class DescentSpec:
    method: str = "em"
    tol_grad: float = 1e-9
    tol_step: float = 1e-12
    max_iters: int = 50_000
    restarts: int = 1
    init: InitSpec = field(default_factory=InitSpec)


@dataclass(frozen=True)
class SweepSpec:
    deltas: tuple[float, ...] = (4.0, 6.0, 8.0, 10.0)
    k: int = 3
    split: float = 0.0


@dataclass(frozen=True)
class TheorySpec:
    divisor: float = 33.0
    geometry_samples: int = 100_000
    geometry_seed: int = 7
    geometry_convention: str = "literal"
    tail_grid: tuple[float, ...] | None = None
    variance_grid: tuple[tuple[float, float], ...] | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSpec
    k: int
    engine: ExpectationEngine
    descent: DescentSpec
    thresholds: Thresholds
    sweep: SweepSpec
    theory: TheorySpec
    seed: int = 0
    beta: np.ndarray | None = None


def generate_centers(kind: str, d: int, k_star: int, delta: float, seed: int = 0) -> np.ndarray:
    """Centers for the built-in generators.

    ``line``: theta_s = (s - (k* - 1)/2) * delta * e_1.
    ``simplex``: theta_s = delta / sqrt(2) * e_s (pairwise distance delta, needs d >= k*).
    ``random``: uniform in a cube, rejection-sampled until every pairwise distance is >= delta.
    """
    if kind == "line":
        c = np.zeros((d, k_star))
        c[0] = (np.arange(k_star) - (k_star - 1) / 2.0) * delta
        return c
    if kind == "simplex":
        if d < k_star:
            raise InvalidArgumentError(f"simplex generator needs d >= k_star (d={d}, k_star={k_star})")
        c = np.zeros((d, k_star))
        c[np.arange(k_star), np.arange(k_star)] = delta / np.sqrt(2.0)
        return c
    if kind == "random":
        rng = np.random.default_rng(seed)
        half = delta * max(1.0, k_star ** (1.0 / d))
        for _ in range(10_000):
            c = rng.uniform(-half, half, size=(d, k_star))
            diff = c[:, :, None] - c[:, None, :]
            dist = np.sqrt((diff**2).sum(axis=0))
            if k_star == 1 or dist[np.triu_indices(k_star, 1)].min() >= delta:
                return c
            half *= 1.05
        raise InvalidArgumentError("random generator failed to place separated centers")
    raise InvalidArgumentError(f"unknown generator {kind!r}")


class _Reader:
    def __init__(self, data, path):
        if not isinstance(data, dict):
            raise ConfigError(path or "<root>", "expected a JSON object")
        self.data, self.path = data, path

    def sub(self, key) -> "_Reader":
        return _Reader(self.data.get(key, {}), self._p(key))

    def _p(self, key):
        return f"{self.path}.{key}" if self.path else key

    def has(self, key):
        return key in self.data and self.data[key] is not None

    def get(self, key, kind, default=None, required=False):
        if not self.has(key):
            if required:
                raise ConfigError(self._p(key), "missing required field")
            return default
        val = self.data[key]
        try:
            if kind is int:
                if isinstance(val, bool) or float(val) != int(val):
                    raise ValueError
                return int(val)
            if kind is float:
                if isinstance(val, bool):
                    raise ValueError
                out = float(val)
                if not np.isfinite(out):
                    raise ValueError
                return out
            if kind is str:
                if not isinstance(val, str):
                    raise ValueError
                return val
        except (TypeError, ValueError):
            raise ConfigError(self._p(key), f"expected {kind.__name__}, got {val!r}") from None
        return val

    def matrix(self, key, d=None):
        """Centers given as a list of columns (or a flat list when d = 1)."""
        val = self.data.get(key)
        try:
            arr = np.array(val, dtype=float)
        except (TypeError, ValueError):
            raise ConfigError(self._p(key), "expected a list of center columns") from None
        if arr.ndim == 1:
            arr = arr[:, None] if d in (None, 1) else arr[None, :]
        if arr.ndim != 2 or arr.size == 0 or not np.all(np.isfinite(arr)):
            raise ConfigError(self._p(key), "expected a non-empty list of finite center columns")
        mat = arr.T  # columns -> d x k
        if d is not None and mat.shape[0] != d:
            raise ConfigError(self._p(key), f"centers have dimension {mat.shape[0]}, expected d = {d}")
        return mat


def parse_config(data: dict, seed_override: int | None = None) -> ExperimentConfig:
    root = _Reader(data, "")
    schema = root.get("schema", int, required=True)
    if schema != SCHEMA_VERSION:
        raise ConfigError("schema", f"unsupported schema version {schema} (expected {SCHEMA_VERSION})")

    m = root.sub("model")
    sigma = m.get("sigma", float, 1.0)
    if sigma <= 0:
        raise ConfigError("model.sigma", "must be positive")
    if m.has("centers"):
        centers = m.matrix("centers", m.get("d", int))
        model = ModelSpec(d=centers.shape[0], k_star=centers.shape[1], sigma=sigma, centers=centers)
    elif m.has("generator"):
        gen = m.get("generator", str)
        if gen not in GENERATORS:
            raise ConfigError("model.generator", f"must be one of {GENERATORS}")
        d = m.get("d", int, required=True)
        k_star = m.get("k_star", int, required=True)
        delta = m.get("delta", float, required=True)
        if d < 1:
            raise ConfigError("model.d", "must be >= 1")
        if k_star < 1:
            raise ConfigError("model.k_star", "must be >= 1")
        if delta <= 0:
            raise ConfigError("model.delta", "must be positive")
        if gen == "simplex" and d < k_star:
            raise ConfigError("model.d", "simplex generator needs d >= k_star")
        model = ModelSpec(d=d, k_star=k_star, sigma=sigma, generator=gen, delta=delta, seed=m.get("seed", int, 0))
    else:
        raise ConfigError("model", "give either 'centers' or 'generator'")

    k = root.get("k", int, model.k_star)
    if k < 1:
        raise ConfigError("k", "must be >= 1")

    beta = None
    if root.has("beta"):
        beta = root.matrix("beta", model.d)
        if root.has("k") and beta.shape[1] != k:
            raise ConfigError("beta", f"has {beta.shape[1]} columns but k = {k}")
        k = beta.shape[1]

    e = root.sub("engine")
    try:
        engine = ExpectationEngine.for_dimension(
            model.d,
            **{
                key: val
                for key, val in {
                    "mode": e.get("mode", str),
                    "rule": e.get("rule", str),
                    "order": e.get("order", int),
                    "half_width": e.get("half_width", float),
                    "mc_samples": e.get("samples", int),
                    "seed": e.get("seed", int),
                }.items()
                if val is not None
            },
        )
    except InvalidArgumentError as exc:
        raise ConfigError("engine", str(exc)) from None

    ds = root.sub("descent")
    method = ds.get("method", str, "em")
    if method not in ("em", "gradient_descent"):
        raise ConfigError("descent.method", "must be 'em' or 'gradient_descent'")
    restarts = ds.get("restarts", int, 1)
    if restarts < 1:
        raise ConfigError("descent.restarts", "must be >= 1")
    max_iters = ds.get("max_iters", int, 50_000)
    if max_iters < 1:
        raise ConfigError("descent.max_iters", "must be >= 1")
    ini = ds.sub("init")
    kind = ini.get("kind", str, "random_box")
    if kind not in INIT_KINDS:
        raise ConfigError("descent.init.kind", f"must be one of {INIT_KINDS}")
    init_beta = None
    if kind == "explicit":
        if not ini.has("beta"):
            raise ConfigError("descent.init.beta", "missing required field for explicit init")
        init_beta = ini.matrix("beta", model.d)
        k = init_beta.shape[1]
    descent = DescentSpec(
        method=method,
        tol_grad=ds.get("tol_grad", float, 1e-9),
        tol_step=ds.get("tol_step", float, 1e-12),
        max_iters=max_iters,
        restarts=restarts,
        init=InitSpec(kind=kind, scale=ini.get("scale", float, 0.01), beta=init_beta),
    )

    c = root.sub("classifier")
    thresholds = Thresholds(
        tau_fit=c.get("tau_fit", float, 0.6),
        tau_empty=c.get("tau_empty", float),
        tau_dup=c.get("tau_dup", float, 1.0),
    )

    sw = root.sub("sweep")
    deltas = sw.data.get("deltas", [4.0, 6.0, 8.0, 10.0])
    if not isinstance(deltas, list) or not deltas:
        raise ConfigError("sweep.deltas", "expected a non-empty list of positive numbers")
    try:
        deltas = tuple(float(v) for v in deltas)
    except (TypeError, ValueError):
        raise ConfigError("sweep.deltas", "expected a non-empty list of positive numbers") from None
    if any(not np.isfinite(v) or v <= 0 for v in deltas):
        raise ConfigError("sweep.deltas", "deltas must be positive")
    sweep_k = sw.get("k", int, 3)
    if sweep_k not in (2, 3):
        raise ConfigError("sweep.k", "must be 2 or 3")
    sweep = SweepSpec(deltas=deltas, k=sweep_k, split=sw.get("split", float, 0.0))

    th = root.sub("theory")
    tail_grid = th.data.get("tail_grid")
    var_grid = th.data.get("variance_grid")
    for key, grid in (("tail_grid", tail_grid), ("variance_grid", var_grid)):
        if grid is not None and (not isinstance(grid, list) or len(grid) == 0):
            raise ConfigError(f"theory.{key}", "empty grid")
    theory = TheorySpec(
        divisor=th.get("divisor", float, 33.0),
        geometry_samples=th.get("geometry_samples", int, 100_000),
        geometry_seed=th.get("geometry_seed", int, 7),
        geometry_convention=th.get("geometry_convention", str, "literal"),
        tail_grid=None if tail_grid is None else tuple(float(t) for t in tail_grid),
        variance_grid=None if var_grid is None else tuple((float(a), float(w)) for a, w in var_grid),
    )
    if theory.geometry_convention not in ("literal", "log_ratio"):
        raise ConfigError("theory.geometry_convention", "must be 'literal' or 'log_ratio'")
    if theory.geometry_samples < 1:
        raise ConfigError("theory.geometry_samples", "must be >= 1")

    seed = root.get("seed", int, 0) if seed_override is None else int(seed_override)
    if not 0 <= seed < 2**64:
        raise ConfigError("seed", "must be a 64-bit unsigned integer")
    return ExperimentConfig(
        model=model, k=k, engine=engine, descent=descent, thresholds=thresholds,
        sweep=sweep, theory=theory, seed=seed, beta=beta,
    )


def load_config(path, seed_override: int | None = None) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(str(p), "config file does not exist")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(str(p), f"invalid JSON: {exc}") from None
    return parse_config(data, seed_override)
