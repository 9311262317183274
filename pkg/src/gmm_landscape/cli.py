"""Command-line driver: eval, descend, sweep-snr, verify-theory.

Outputs go to ``--out``: report.json (deterministic, no timings), runs.csv,
sweep.csv and graph.dot depending on the subcommand.

Exit codes: 0 success, 2 configuration error, 3 theory-check violation,
4 engine error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import landscape
from .classifier import Thresholds, association_stats, classify, line_structure_label, to_dot
from .config import ExperimentConfig, load_config
from .errors import ConfigError, LandscapeError
from .expectation import ExpectationEngine
from .mixture import TrueMixture
from .theory import (
    verify_exponential_association,
    verify_gaussian_tails,
    verify_geometry_inclusions,
    verify_variance_lower_bound,
)

log = logging.getLogger("gmm_landscape")

EXIT_OK, EXIT_CONFIG, EXIT_THEORY, EXIT_ENGINE = 0, 2, 3, 4
SPURIOUS_GAP = 1e-6


def _columns(beta) -> list:
    """d x k matrix to the column-major JSON layout."""
    return np.asarray(beta, float).T.tolist()


def _quantiles(values) -> dict:
    if not values:
        return {}
    q = np.quantile(np.asarray(values, float), [0.0, 0.5, 0.9, 1.0])
    return {"min": float(q[0]), "median": float(q[1]), "q90": float(q[2]), "max": float(q[3])}


def analyze_point(beta, model: TrueMixture, engine: ExpectationEngine, thresholds: Thresholds):
    """Loss, stationarity and structure of one fitted configuration."""
    value = landscape.loss(beta, model, engine)
    rep = landscape.stationarity_report(beta, model, engine)
    structure = classify(association_stats(beta, model, engine), beta, model, thresholds)
    out = {
        "beta": _columns(beta),
        "loss": value.loss,
        "kl_gap": value.kl_gap,
        "stationarity": rep.to_dict(),
        "mean_consistency": landscape.check_mean_consistency(beta, model, engine),
        "span_residual": landscape.check_span(beta, model),
        "structure": structure.to_dict(),
    }
    if model.d == 1 and model.k_star == 3:
        out["line_structure_label"] = line_structure_label(structure, model)
    return out, structure


# ---------------------------------------------------------------- initialization


def init_box(model: TrueMixture) -> tuple[np.ndarray, np.ndarray]:
    """Per-coordinate box [min theta - width, max theta + width]."""
    width = model.delta_max if model.k_star > 1 else max(model.delta_max, 5.0 * model.sigma)
    return model.centers.min(axis=1) - width, model.centers.max(axis=1) + width


def initial_point(cfg: ExperimentConfig, model: TrueMixture, seed: int) -> np.ndarray:
    init = cfg.descent.init
    rng = np.random.default_rng(seed)
    if init.kind == "explicit":
        return np.array(init.beta)
    if init.kind == "perturb_truth":
        base = model.centers[:, np.arange(cfg.k) % model.k_star]
        scale = init.scale * max(model.delta_min, model.sigma)
        return base + scale * rng.standard_normal(base.shape)
    lo, hi = init_box(model)
    return rng.uniform(lo[:, None], hi[:, None], size=(model.d, cfg.k))


# ---------------------------------------------------------------- descend


def _run_restart(payload) -> dict:
    r, seed, cfg, model = payload
    record = {"restart": r, "seed": seed}
    beta0 = initial_point(cfg, model, seed)
    record["init"] = _columns(beta0)
    try:
        trace = landscape.descend(
            beta0, model, cfg.engine, method=cfg.descent.method, tol_grad=cfg.descent.tol_grad,
            tol_step=cfg.descent.tol_step, max_iters=cfg.descent.max_iters, keep_iterates=False,
        )
        point, structure = analyze_point(trace.final.centers, model, cfg.engine, cfg.thresholds)
    except LandscapeError as exc:
        record.update({"error": f"{type(exc).__name__}: {exc}", "termination": "error"})
        return record
    record.update(
        {
            "termination": trace.termination,
            "iterations": trace.iterations,
            "terminal": point.pop("beta"),
            **point,
            "error": None,
        }
    )
    gap = point["kl_gap"]
    record["spurious"] = None if gap is None else bool(gap > SPURIOUS_GAP)
    record["dot"] = to_dot(structure, name=f"restart_{r}")
    return record


def run_descend(cfg: ExperimentConfig, workers: int = 1) -> list[dict]:
    model = cfg.model.build()
    payloads = [(r, cfg.seed + r, cfg, model) for r in range(cfg.descent.restarts)]
    if workers <= 1:
        return [_run_restart(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_restart, payloads, chunksize=max(1, len(payloads) // (4 * workers))))


def aggregate(records: list[dict]) -> dict:
    hist: dict[str, int] = {}
    labels: dict[str, int] = {}
    errors: dict[str, list] = {}
    spurious, judged, mfm, local_min = 0, 0, 0, 0
    for rec in records:
        if rec.get("error"):
            sig = "error"
        else:
            sig = rec["structure"]["signature"]
            groups = rec["structure"]["groups"]
            if groups:
                errors.setdefault(sig, []).append(max(g["error"] for g in groups))
            mfm += bool(rec["structure"]["many_fit_many"])
            local_min += rec["stationarity"]["second_order"] == "local_minimum"
            if "line_structure_label" in rec:
                labels[rec["line_structure_label"]] = labels.get(rec["line_structure_label"], 0) + 1
            if rec["spurious"] is not None:
                judged += 1
                spurious += rec["spurious"]
        hist[sig] = hist.get(sig, 0) + 1
    return {
        "restarts": len(records),
        "structure_histogram": dict(sorted(hist.items())),
        "line_structure_labels": dict(sorted(labels.items())),
        "fraction_spurious": spurious / judged if judged else None,
        "spurious_count": spurious,
        "many_fit_many_count": mfm,
        "local_minimum_count": local_min,
        "error_quantiles": {k: _quantiles(v) for k, v in sorted(errors.items())},
    }


RUN_FIELDS = [
    "restart", "seed", "termination", "iterations", "loss", "kl_gap", "grad_inf_norm",
    "stein_residual", "hessian_min_eigenvalue", "second_order", "signature", "line_structure_label",
    "spurious", "terminal", "error",
]


def _run_row(rec: dict) -> dict:
    row = {key: rec.get(key) for key in ("restart", "seed", "termination", "iterations", "loss", "kl_gap", "spurious", "error")}
    if not rec.get("error"):
        st = rec["stationarity"]
        row.update(
            grad_inf_norm=st["grad_inf_norm"],
            stein_residual=st["stein_residual"],
            hessian_min_eigenvalue=st["hessian_min_eigenvalue"],
            second_order=st["second_order"],
            signature=rec["structure"]["signature"],
            line_structure_label=rec.get("line_structure_label"),
            terminal=json.dumps(rec["terminal"]),
        )
    return {key: ("" if row.get(key) is None else _fmt(row.get(key))) for key in RUN_FIELDS}


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value


def write_csv(path: Path, fields, rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


# ---------------------------------------------------------------- sweep


def sweep_ideal(model: TrueMixture, k: int) -> np.ndarray:
    """Ideal point ((theta_1 + theta_2)/2, theta_3[, theta_3]) for centers sorted on the line."""
    t = np.sort(model.centers[0])
    cols = [(t[0] + t[1]) / 2.0, t[2]] + ([t[2]] if k == 3 else [])
    return np.array([cols])


def sweep_error(beta, model: TrueMixture, k: int) -> float:
    """Max coordinate distance to the ideal point, minimized over labels and the mirror image."""
    b = np.sort(np.asarray(beta)[0])
    ideal = sweep_ideal(model, k)[0]
    mirror = np.sort(-sweep_ideal(TrueMixture(-model.centers, model.sigma), k)[0])
    return float(min(np.max(np.abs(b - np.sort(ideal))), np.max(np.abs(b - mirror))))


def run_sweep(cfg: ExperimentConfig) -> list[dict]:
    spec = cfg.model
    if spec.centers is not None or spec.generator != "line" or spec.d != 1 or spec.k_star != 3:
        raise ConfigError("model", "sweep-snr needs the 'line' generator with d = 1 and k_star = 3")
    rows = []
    for delta in cfg.sweep.deltas:
        model = spec.build(delta)
        beta0 = sweep_ideal(model, cfg.sweep.k)
        if cfg.sweep.k == 3 and cfg.sweep.split:
            beta0[0, 1] -= cfg.sweep.split * model.sigma
            beta0[0, 2] += cfg.sweep.split * model.sigma
        row = {"delta": delta, "k": cfg.sweep.k}
        try:
            trace = landscape.descend(
                beta0, model, cfg.engine, method=cfg.descent.method, tol_grad=cfg.descent.tol_grad,
                tol_step=cfg.descent.tol_step, max_iters=cfg.descent.max_iters, keep_iterates=False,
            )
            beta = trace.final.centers
            err = sweep_error(beta, model, cfg.sweep.k)
            rep = landscape.stationarity_report(beta, model, cfg.engine)
            structure = classify(association_stats(beta, model, cfg.engine), beta, model, cfg.thresholds)
            flags = []
            if trace.termination not in ("gradient_tol", "step_tol"):
                flags.append(f"nonconverged:{trace.termination}")
            if err == 0.0:
                flags.append("underflow")
            row.update(
                err=err,
                log_err=float(np.log(err)) if err > 0 else None,
                label=line_structure_label(structure, model),
                signature=structure.signature(),
                termination=trace.termination,
                iterations=trace.iterations,
                hessian_min_eigenvalue=rep.hessian_min_eigenvalue,
                local_minimum=rep.second_order == "local_minimum",
                terminal=_columns(beta),
                flag=";".join(flags),
            )
        except LandscapeError as exc:
            row.update(err=None, log_err=None, label="error", flag=f"error:{type(exc).__name__}: {exc}")
        rows.append(row)
    return rows


def sweep_slope(rows: list[dict]) -> float | None:
    """Least-squares slope of log err against delta^2 over rows with a finite log error."""
    pts = [(r["delta"] ** 2, r["log_err"]) for r in rows if r.get("log_err") is not None]
    if len(pts) < 2:
        return None
    x, y = np.array(pts).T
    return float(np.polyfit(x, y, 1)[0])


SWEEP_FIELDS = [
    "delta", "k", "err", "log_err", "label", "signature", "termination", "iterations",
    "hessian_min_eigenvalue", "local_minimum", "flag",
]


# ---------------------------------------------------------------- theory


def run_theory(cfg: ExperimentConfig) -> list:
    th = cfg.theory
    return [
        verify_gaussian_tails(th.tail_grid),
        verify_variance_lower_bound(th.variance_grid),
        verify_exponential_association(divisor=th.divisor),
        verify_geometry_inclusions(samples=th.geometry_samples, seed=th.geometry_seed, convention=th.geometry_convention),
    ]


# ---------------------------------------------------------------- plumbing


def _report_header(cfg: ExperimentConfig, command: str) -> dict:
    return {
        "schema": 1,
        "command": command,
        "seed": cfg.seed,
        "engine": cfg.engine.to_dict(),
        "descent": {
            "method": cfg.descent.method,
            "tol_grad": cfg.descent.tol_grad,
            "tol_step": cfg.descent.tol_step,
            "max_iters": cfg.descent.max_iters,
            "restarts": cfg.descent.restarts,
            "init": cfg.descent.init.kind,
        },
        "thresholds": cfg.thresholds.to_dict(),
    }


def write_json(path: Path, report: dict) -> None:
    path.write_text(json.dumps(report, indent=2, sort_keys=True, allow_nan=True) + "\n")


def cmd_eval(cfg: ExperimentConfig, out: Path) -> int:
    if cfg.beta is None:
        raise ConfigError("beta", "eval needs explicit fitted centers")
    model = cfg.model.build()
    point, structure = analyze_point(cfg.beta, model, cfg.engine, cfg.thresholds)
    report = _report_header(cfg, "eval")
    report.update(model={"centers": _columns(model.centers), "sigma": model.sigma}, point=point)
    write_json(out / "report.json", report)
    (out / "graph.dot").write_text(to_dot(structure, "eval"))
    st = point["stationarity"]
    print(f"loss = {point['loss']:.12g}")
    if point["kl_gap"] is not None:
        print(f"kl_gap = {point['kl_gap']:.6g}")
    print(f"grad_inf_norm = {st['grad_inf_norm']:.3e}  em_residual = {st['em_residual']:.3e}")
    print(f"stein_residual = {st['stein_residual']:.3e}  raw_stein_residual = {st['raw_stein_residual']:.3e}")
    print(f"hessian_min_eigenvalue = {st['hessian_min_eigenvalue']:.6g} ({st['second_order']})")
    print(f"structure = {point['structure']['signature']}")
    return EXIT_OK


def cmd_descend(cfg: ExperimentConfig, out: Path, workers: int) -> int:
    model = cfg.model.build()
    records = run_descend(cfg, workers)
    dots, seen = [], set()
    for rec in records:
        dot = rec.pop("dot", None)
        sig = rec.get("structure", {}).get("signature")
        if dot and sig not in seen:
            seen.add(sig)
            dots.append(dot)
    report = _report_header(cfg, "descend")
    report.update(
        model={"centers": _columns(model.centers), "sigma": model.sigma},
        k=cfg.k,
        runs=records,
        aggregate=aggregate(records),
    )
    write_json(out / "report.json", report)
    write_csv(out / "runs.csv", RUN_FIELDS, [_run_row(r) for r in records])
    (out / "graph.dot").write_text("".join(dots))
    agg = report["aggregate"]
    print(f"{agg['restarts']} restarts")
    for sig, count in agg["structure_histogram"].items():
        print(f"  {sig}: {count}")
    if agg["fraction_spurious"] is not None:
        print(f"fraction spurious = {agg['fraction_spurious']:.4f}")
    return EXIT_OK


def cmd_sweep_snr(cfg: ExperimentConfig, out: Path) -> int:
    rows = run_sweep(cfg)
    slope = sweep_slope(rows)
    report = _report_header(cfg, "sweep-snr")
    report.update(sweep={"k": cfg.sweep.k, "rows": rows, "slope_log_err_vs_delta_sq": slope})
    write_json(out / "report.json", report)
    write_csv(
        out / "sweep.csv",
        SWEEP_FIELDS,
        [{f: ("" if r.get(f) is None else _fmt(r.get(f))) for f in SWEEP_FIELDS} for r in rows],
    )
    for r in rows:
        err = "nan" if r.get("err") is None else f"{r['err']:.4e}"
        print(f"delta = {r['delta']:g}  err = {err}  label = {r['label']}  {r.get('flag', '')}")
    if slope is not None:
        print(f"slope of log err vs delta^2 = {slope:.5f}")
    return EXIT_OK


def cmd_verify_theory(cfg: ExperimentConfig, out: Path) -> int:
    results = run_theory(cfg)
    report = _report_header(cfg, "verify-theory")
    report["theory_checks"] = [r.to_dict() for r in results]
    write_json(out / "report.json", report)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.name}: {r.violations} violations / {r.grid_size}, worst margin {r.worst_margin:.4g}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_THEORY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gmm-landscape", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("eval", "evaluate loss, residuals and structure at an explicit point"),
        ("descend", "multi-start EM / gradient descent with classification"),
        ("sweep-snr", "track the one-fit-two point across separations"),
        ("verify-theory", "run the inequality verification battery"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--workers", type=int, default=1, help="worker processes for restarts")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, args.seed)
        if args.workers < 1:
            raise ConfigError("--workers", "must be >= 1")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "eval":
            return cmd_eval(cfg, out)
        if args.command == "descend":
            return cmd_descend(cfg, out, args.workers)
        if args.command == "sweep-snr":
            return cmd_sweep_snr(cfg, out)
        return cmd_verify_theory(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LandscapeError as exc:
        print(f"engine error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ENGINE


if __name__ == "__main__":
    sys.exit(main())
