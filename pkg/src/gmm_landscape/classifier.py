"""Structural decomposition of converged points.

A fitted configuration is split into near-empty centers, one-fit-many groups
(a single fitted center serving one or more true centers) and many-fit-one
groups (several fitted centers collapsed on one true center). Classification
reads only observable statistics: mean associations E_s[Psi_i], Voronoi
masses P_s(V_i) and center distances.

Indices are 0-based in every returned structure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .expectation import ExpectationEngine, mixture_nodes
from .geometry import VoronoiMass, VoronoiQuery, voronoi_mass
from .landscape import component_stats
from .mixture import TrueMixture, associations, coerce_beta

ONE_FIT_MANY = "one_fit_many"
MANY_FIT_ONE = "many_fit_one"


@dataclass(frozen=True)
class AssociationStats:
    mean_assoc: np.ndarray  # k* x k
    pair_assoc: np.ndarray  # k* x k x k
    voronoi_mass: VoronoiMass
    center_distances: np.ndarray  # k* x k

    @property
    def k_star(self) -> int:
        return self.mean_assoc.shape[0]

    @property
    def k(self) -> int:
        return self.mean_assoc.shape[1]


def association_stats(beta, model: TrueMixture, engine: ExpectationEngine) -> AssociationStats:
    b = coerce_beta(beta, model)
    cs = component_stats(b, model, engine)
    vm = voronoi_mass(model, VoronoiQuery(b, 0.0, model.sigma), engine)
    dist = np.linalg.norm(model.centers[:, :, None] - b[:, None, :], axis=0)
    return AssociationStats(cs.mean_assoc, cs.pair_assoc, vm, dist)


@dataclass(frozen=True)
class Thresholds:
    tau_fit: float = 0.6
    tau_empty: float | None = None  # None means 0.25 / k
    tau_dup: float = 1.0

    def resolved_empty(self, k: int) -> float:
        return 0.25 / k if self.tau_empty is None else float(self.tau_empty)

    def to_dict(self, k: int | None = None) -> dict:
        return {
            "tau_fit": self.tau_fit,
            "tau_empty": self.tau_empty if k is None else self.resolved_empty(k),
            "tau_dup": self.tau_dup,
        }


@dataclass(frozen=True)
class Group:
    fitted: tuple[int, ...]
    true: tuple[int, ...]
    kind: str
    error: float  # distance to the ideal location of the group
    max_center_error: float  # max over pairs (i, s) in the group of ||beta_i - theta_s||


@dataclass(frozen=True)
class StructureReport:
    s0: tuple[int, ...]
    groups: tuple[Group, ...]
    unclassified: tuple[int, ...]
    unmatched_true: tuple[int, ...]
    many_fit_many: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]
    thresholds_used: dict
    k: int
    k_star: int

    def signature(self) -> str:
        parts = sorted(f"{len(g.fitted)}:{len(g.true)}" for g in self.groups)
        sig = ",".join(parts) if parts else "-"
        if self.s0:
            sig += f"|empty={len(self.s0)}"
        if self.unclassified:
            sig += f"|unclassified={len(self.unclassified)}"
        return sig

    @property
    def is_exact_fit(self) -> bool:
        return (
            not self.s0
            and not self.unclassified
            and len(self.groups) == self.k_star
            and all(len(g.fitted) == 1 and len(g.true) == 1 for g in self.groups)
        )

    @property
    def is_classified(self) -> bool:
        return not self.unclassified

    def to_dict(self) -> dict:
        return {
            "signature": self.signature(),
            "s0": list(self.s0),
            "groups": [
                {
                    "fitted": list(g.fitted),
                    "true": list(g.true),
                    "kind": g.kind,
                    "error": g.error,
                    "max_center_error": g.max_center_error,
                }
                for g in self.groups
            ],
            "unclassified": list(self.unclassified),
            "unmatched_true": list(self.unmatched_true),
            "many_fit_many": [[list(f), list(t)] for f, t in self.many_fit_many],
            "thresholds": self.thresholds_used,
        }


def _make_group(fitted, true, kind, beta, theta) -> Group:
    fitted, true = tuple(sorted(fitted)), tuple(sorted(true))
    target = theta[:, list(true)].mean(axis=1)
    error = max(float(np.linalg.norm(beta[:, i] - target)) for i in fitted)
    worst = max(float(np.linalg.norm(beta[:, i] - theta[:, s])) for i in fitted for s in true)
    return Group(fitted, true, kind, error, worst)


def classify(stats: AssociationStats, beta, model: TrueMixture, thresholds: Thresholds | None = None) -> StructureReport:
    """Partition fitted centers into near-empty, one-fit-many and many-fit-one sets.

    1. Many-fit-one: for each true center s, the fitted centers whose nearest
       true center is s and that lie within ``tau_dup * sigma`` of it. Two or
       more of them form a group when their summed mean association and summed
       Voronoi mass under component s both reach ``tau_fit``.
    2. One-fit-many: each remaining fitted center i collects the unused true
       centers s with ``E_s[Psi_i] >= tau_fit`` and ``P_s(V_i) >= tau_fit``.
    3. Near-empty: remaining centers with ``E_*[Psi_i] <= tau_empty`` and
       ``P_*(V_i) <= tau_empty``.
    Everything else is unclassified; connected blocks of unclassified fitted
    and unmatched true centers with at least two of each are reported as
    many-fit-many.
    """
    th = thresholds or Thresholds()
    b = coerce_beta(beta, model)
    theta = model.centers
    k_star, k = model.k_star, b.shape[1]
    if stats.mean_assoc.shape != (k_star, k) or stats.voronoi_mass.probs.shape != (k_star, k):
        raise InvalidArgumentError(
            f"statistics have shape {stats.mean_assoc.shape}, expected {(k_star, k)}"
        )
    tau_empty = th.resolved_empty(k)
    A, P, D = stats.mean_assoc, stats.voronoi_mass.probs, stats.center_distances

    groups: list[Group] = []
    used_fit: set[int] = set()
    used_true: set[int] = set()

    nearest = np.argmin(D, axis=0)  # nearest true center of each fitted center
    for s in range(k_star):
        members = [i for i in range(k) if nearest[i] == s and D[s, i] <= th.tau_dup * model.sigma]
        if len(members) >= 2 and A[s, members].sum() >= th.tau_fit and P[s, members].sum() >= th.tau_fit:
            groups.append(_make_group(members, [s], MANY_FIT_ONE, b, theta))
            used_fit.update(members)
            used_true.add(s)

    for i in range(k):
        if i in used_fit:
            continue
        served = [s for s in range(k_star) if s not in used_true and A[s, i] >= th.tau_fit and P[s, i] >= th.tau_fit]
        if served:
            groups.append(_make_group([i], served, ONE_FIT_MANY, b, theta))
            used_fit.add(i)
            used_true.update(served)

    s0 = []
    for i in range(k):
        if i not in used_fit and A[:, i].mean() <= tau_empty and P[:, i].mean() <= tau_empty:
            s0.append(i)
            used_fit.add(i)

    unclassified = tuple(i for i in range(k) if i not in used_fit)
    unmatched = tuple(s for s in range(k_star) if s not in used_true)
    groups.sort(key=lambda g: g.fitted[0])
    return StructureReport(
        s0=tuple(s0),
        groups=tuple(groups),
        unclassified=unclassified,
        unmatched_true=unmatched,
        many_fit_many=_many_fit_many(unclassified, unmatched, A, tau_empty),
        thresholds_used=th.to_dict(k),
        k=k,
        k_star=k_star,
    )


def _many_fit_many(fitted, true, A, tau):
    """Connected components of the (unclassified fitted, unmatched true) association graph."""
    nodes = [("f", i) for i in fitted] + [("t", s) for s in true]
    parent = {n: n for n in nodes}

    def find(n):
        while parent[n] != n:
            parent[n] = parent[parent[n]]
            n = parent[n]
        return n

    for i in fitted:
        for s in true:
            if A[s, i] >= tau:
                parent[find(("f", i))] = find(("t", s))
    comps: dict = {}
    for n in nodes:
        comps.setdefault(find(n), []).append(n)
    out = []
    for members in comps.values():
        f = tuple(sorted(i for kind, i in members if kind == "f"))
        t = tuple(sorted(s for kind, s in members if kind == "t"))
        if len(f) >= 2 and len(t) >= 2:
            out.append((f, t))
    return tuple(sorted(out))


def bipartite_graph(report: StructureReport) -> list[tuple[int, int]]:
    """Edges (fitted i, true s) of the disjoint union of complete bipartite graphs."""
    return sorted((i, s) for g in report.groups for i in g.fitted for s in g.true)


def to_dot(report: StructureReport, name: str = "structure") -> str:
    lines = [f"graph {name} {{", "  rankdir=LR;"]
    for i in range(report.k):
        style = ' style=dashed' if i in report.s0 else (' style=dotted' if i in report.unclassified else "")
        lines.append(f'  b{i} [label="beta_{i}" shape=circle{style}];')
    for s in range(report.k_star):
        lines.append(f'  t{s} [label="theta_{s}" shape=box];')
    for i, s in bipartite_graph(report):
        lines.append(f"  b{i} -- t{s};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _adjacent_pairs(theta_line: np.ndarray):
    order = np.argsort(theta_line, kind="stable")
    return [tuple(sorted((int(order[a]), int(order[a + 1])))) for a in range(len(order) - 1)]


def line_structure_label(report: StructureReport, model: TrueMixture) -> str:
    """Name the structure in the 1-D three-true-center setting.

    Returns ``exact_fit``, ``pair_outer_empty`` (one center fits an adjacent pair,
    one fits the remaining outer center, one is near-empty), ``pair_outer_twin``
    (adjacent pair plus two centers on the remaining outer center),
    ``pair_outer`` (k = 2: adjacent pair plus the outer center) or ``other``.
    """
    if report.unclassified or model.k_star != 3 or model.d != 1:
        return "other"
    if report.is_exact_fit and report.k == 3:
        return "exact_fit"
    pairs = _adjacent_pairs(model.centers[0])
    middle = int(np.argsort(model.centers[0], kind="stable")[1])
    pair_groups = [g for g in report.groups if len(g.fitted) == 1 and tuple(g.true) in pairs]
    if len(pair_groups) != 1:
        return "other"
    pg = pair_groups[0]
    rest = [g for g in report.groups if g is not pg]
    outer = [s for s in range(3) if s not in pg.true]
    if len(rest) != 1 or list(rest[0].true) != outer or outer[0] == middle:
        return "other"
    n_rest = len(rest[0].fitted)
    s0 = len(report.s0)
    if report.k == 3 and n_rest == 1 and s0 == 1:
        return "pair_outer_empty"
    if report.k == 3 and n_rest == 2 and s0 == 0:
        return "pair_outer_twin"
    if report.k == 2 and n_rest == 1 and s0 == 0:
        return "pair_outer"
    return "other"


@dataclass(frozen=True)
class SecondOrderRecord:
    cond1: np.ndarray  # k x k slack 1 - ||b_i - b_j||^2 E[Psi_i Psi_j] / sigma^2 (diagonal nan)
    cond4: np.ndarray  # k x k x k*: slack 1 - E[Psi_i Psi_j <b_i - X, u_{s->i}>^2] / sigma^2
    skipped: tuple[tuple[int, int], ...]  # (i, s) with beta_i = theta_s
    worst_slack: float
    holds: bool = field(default=True)


def check_second_order_consequences(beta, model: TrueMixture, engine: ExpectationEngine) -> SecondOrderRecord:
    """Evaluate the two Hessian test-direction inequalities at ``beta``.

    Quadratic terms are divided by sigma^2, which is the form the inequalities
    take for a general component variance.
    """
    b = coerce_beta(beta, model)
    k = b.shape[1]
    sig2 = model.sigma**2
    nodes = mixture_nodes(model, engine)
    P = associations(nodes.X, b, model.sigma)
    WP = nodes.W[:, None] * P
    pair = P.T @ WP  # E_*[Psi_i Psi_j]
    diff = b[:, :, None] - b[:, None, :]
    sqd = np.einsum("aij,aij->ij", diff, diff)
    cond1 = 1.0 - sqd * pair / sig2
    np.fill_diagonal(cond1, np.nan)

    cond4 = np.full((k, k, model.k_star), np.nan)
    skipped = []
    for i in range(k):
        for s in range(model.k_star):
            u = b[:, i] - model.centers[:, s]
            nu = np.linalg.norm(u)
            if nu == 0.0:
                skipped.append((i, s))
                continue
            proj = (b[:, i][None, :] - nodes.X) @ (u / nu)
            vals = (WP[:, i] * proj**2) @ P  # E_*[Psi_i Psi_j proj^2] for all j
            cond4[i, :, s] = 1.0 - vals / sig2
        cond4[i, i, :] = np.nan
    finite = np.concatenate([cond1[np.isfinite(cond1)], cond4[np.isfinite(cond4)]])
    worst = float(finite.min()) if finite.size else float("inf")
    return SecondOrderRecord(cond1, cond4, tuple(skipped), worst, worst >= 0.0)


def pairwise_boundary_mass(stats: AssociationStats) -> np.ndarray:
    """``E_*[Psi_i Psi_j]`` as a ``k x k`` matrix."""
    return stats.pair_assoc.mean(axis=0)

