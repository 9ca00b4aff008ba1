"""The benchmarking protocol: splits, hyperparameter sweeps, selection,
aggregation, refit, and repetition bookkeeping.

Each repetition draws a fresh 50/20/30 split, tunes k (KNN) and mtry (DRF)
on the validation set, selects between the tuned candidates (MS) and finds
their best convex combination (CA) on the same validation set, refits all
four on train+validation, and scores them on the test set. Repetitions use
derived seed streams, so results are independent of execution order and the
emitted per-repetition table is byte-identical across runs.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._version import __version__
from .data import Dataset, make_splits
from .drf import DrfHyper, drf_fit
from .ensemble import CandidateSet, aggregate_convex, mixture_empirical_risk, validation_risks
from .errors import ConfigError, InputError
from .models import KnnModel
from .risk import empirical_risk
from .rng import stream_key

_MIN_PIPELINE_ROWS = 10


@dataclass(frozen=True)
class BenchConfig:
    """Knobs for the benchmark protocol; defaults match the reference setup."""

    reps: int = 100
    seed: int = 0
    kmax: int = 50
    num_trees: int = 500
    sample_fraction: float = 0.9
    min_node_size: int = 1
    standardize_knn: bool = False
    jobs: int = 1

    def drf_hyper(self, mtry: int = 1) -> DrfHyper:
        return DrfHyper(self.num_trees, mtry, self.sample_fraction, self.min_node_size)


def sweep_knn(train: Dataset, val: Dataset, k_grid=None, standardize: bool = False):
    """Validation-risk curve over k; returns (k_hat, [(k, risk), ...])."""
    from . import _kernels
    from .models import knn_neighbor_responses

    if k_grid is None:
        k_grid = range(1, min(50, train.n) + 1)
    ks = np.asarray(sorted(set(int(k) for k in k_grid)), dtype=np.int64)
    if ks.size == 0 or ks[0] < 1 or ks[-1] > train.n:
        raise InputError(f"k grid must lie within [1, {train.n}]")
    probe = KnnModel(1, train.X, train.Y, standardize)
    neighbors = knn_neighbor_responses(probe, val.X, int(ks[-1]))
    risks = _kernels.knn_sweep_risks(np.ascontiguousarray(neighbors), val.Y, ks)
    best = int(np.argmin(risks))  # first minimum = smallest k on ties
    curve = [(int(k), float(r)) for k, r in zip(ks, risks)]
    return int(ks[best]), curve


def _sweep_drf_keep_models(train: Dataset, val: Dataset, mtry_grid, hyper: DrfHyper, seed: int):
    if mtry_grid is None:
        mtry_grid = range(1, train.d + 1)
    grid = sorted(set(int(m) for m in mtry_grid))
    if not grid or grid[0] < 1 or grid[-1] > train.d:
        raise InputError(f"mtry grid must lie within [1, {train.d}]")
    curve = []
    best = None
    for mtry in grid:
        model = drf_fit(train.X, train.Y, hyper.with_mtry(mtry), seed)
        risk = empirical_risk(model, val, keep_scores=False).value
        curve.append((mtry, float(risk)))
        if best is None or risk < best[1]:
            best = (mtry, risk, model)
    return best[0], curve, best[2]


def sweep_drf(train: Dataset, val: Dataset, mtry_grid=None, hyper: DrfHyper = DrfHyper(), seed: int = 0):
    """Validation-risk curve over mtry; returns (mtry_hat, [(mtry, risk), ...])."""
    mtry_hat, curve, _ = _sweep_drf_keep_models(train, val, mtry_grid, hyper, seed)
    return mtry_hat, curve


@dataclass(frozen=True)
class RepRecord:
    rep: int
    k_hat: int
    mtry_hat: int
    selected: str
    weight_knn: float
    weight_drf: float
    val_knn: float
    val_drf: float
    val_ms: float
    val_ca: float
    test_knn: float
    test_drf: float
    test_ms: float
    test_ca: float
    ok: bool


_METHODS = ("knn", "drf", "ms", "ca")


@dataclass
class ExperimentReport:
    source: str
    n: int
    d: int
    config: dict
    records: list
    curves: dict
    summary: dict
    n_failed: int
    version: str = __version__

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "source": self.source,
            "n": self.n,
            "d": self.d,
            "config": self.config,
            "summary": self.summary,
            "n_failed": self.n_failed,
            "curves": self.curves,
            "per_rep": [vars(r) for r in self.records],
        }


def _run_rep(dataset: Dataset, rep: int, cfg: BenchConfig):
    rep_seed = stream_key(cfg.seed, "rep", rep)
    split = make_splits(dataset.n, rep_seed)
    train = dataset.take(split.train)
    val = dataset.take(split.val)
    test = dataset.take(split.test)

    k_hat, k_curve = sweep_knn(train, val, range(1, min(cfg.kmax, train.n) + 1), cfg.standardize_knn)
    mtry_hat, mtry_curve, drf_train = _sweep_drf_keep_models(
        train, val, None, cfg.drf_hyper(), stream_key(rep_seed, "drf-sweep")
    )
    knn_train = KnnModel(k_hat, train.X, train.Y, cfg.standardize_knn)
    cands = CandidateSet(("knn", "drf"), (knn_train, drf_train))
    vrisks = validation_risks(cands, val)
    selected = int(np.argmin(vrisks))
    agg = aggregate_convex(cands, val, seed=rep_seed)

    refit_idx = np.sort(np.concatenate([split.train, split.val]))
    refit = dataset.take(refit_idx)
    knn_refit = KnnModel(min(k_hat, refit.n), refit.X, refit.Y, cfg.standardize_knn)
    drf_refit = drf_fit(refit.X, refit.Y, cfg.drf_hyper(mtry_hat), stream_key(rep_seed, "drf-refit"))
    test_knn = empirical_risk(knn_refit, test, keep_scores=False).value
    test_drf = empirical_risk(drf_refit, test, keep_scores=False).value
    test_ms = test_knn if selected == 0 else test_drf
    test_ca = mixture_empirical_risk((knn_refit, drf_refit), agg.weights, test).value

    record = RepRecord(
        rep=rep,
        k_hat=k_hat,
        mtry_hat=mtry_hat,
        selected=cands.names[selected],
        weight_knn=float(agg.weights[0]),
        weight_drf=float(agg.weights[1]),
        val_knn=float(vrisks[0]),
        val_drf=float(vrisks[1]),
        val_ms=float(vrisks[selected]),
        val_ca=float(agg.risk),
        test_knn=float(test_knn),
        test_drf=float(test_drf),
        test_ms=float(test_ms),
        test_ca=float(test_ca),
        ok=bool(agg.converged),
    )
    return record, {"knn": k_curve, "drf": mtry_curve}


def _summarize(records) -> tuple[dict, int]:
    ok_records = [r for r in records if r.ok]
    n_failed = len(records) - len(ok_records)
    summary = {}
    for method in _METHODS:
        col = np.array([getattr(r, f"test_{method}") for r in ok_records])
        if col.size == 0:
            summary[method] = {"mean": float("nan"), "stderr": float("nan"), "reps": 0}
        else:
            stderr = float(np.std(col, ddof=1) / np.sqrt(col.size)) if col.size > 1 else float("nan")
            summary[method] = {"mean": float(col.mean()), "stderr": stderr, "reps": int(col.size)}
    return summary, n_failed


def run_benchmark(dataset: Dataset, reps: int = None, seed: int = None, cfg: BenchConfig = BenchConfig()) -> ExperimentReport:
    """Full protocol over repeated random splits.

    A repetition whose aggregation optimizer stalls is recorded with
    ok=False and excluded from the summary. With cfg.jobs > 1 repetitions
    run in separate processes; derived per-repetition streams keep the
    output identical to a sequential run.
    """
    if reps is not None or seed is not None:
        cfg = BenchConfig(
            reps=reps if reps is not None else cfg.reps,
            seed=seed if seed is not None else cfg.seed,
            kmax=cfg.kmax,
            num_trees=cfg.num_trees,
            sample_fraction=cfg.sample_fraction,
            min_node_size=cfg.min_node_size,
            standardize_knn=cfg.standardize_knn,
            jobs=cfg.jobs,
        )
    if dataset.n < _MIN_PIPELINE_ROWS:
        raise ConfigError(f"pipeline runs need at least {_MIN_PIPELINE_ROWS} rows")
    if cfg.reps < 1:
        raise ConfigError("reps must be >= 1")

    results = [None] * cfg.reps
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            futures = {pool.submit(_run_rep, dataset, rep, cfg): rep for rep in range(cfg.reps)}
            for future, rep in futures.items():
                results[rep] = future.result()
    else:
        for rep in range(cfg.reps):
            results[rep] = _run_rep(dataset, rep, cfg)

    records = [record for record, _ in results]
    curves = results[0][1]
    summary, n_failed = _summarize(records)
    config = {
        "reps": cfg.reps,
        "seed": cfg.seed,
        "kmax": cfg.kmax,
        "num_trees": cfg.num_trees,
        "sample_fraction": cfg.sample_fraction,
        "min_node_size": cfg.min_node_size,
        "standardize_knn": cfg.standardize_knn,
    }
    return ExperimentReport(
        source=dataset.source,
        n=dataset.n,
        d=dataset.d,
        config=config,
        records=records,
        curves=curves,
        summary=summary,
        n_failed=n_failed,
    )


_PER_REP_COLUMNS = (
    "rep",
    "k_hat",
    "mtry_hat",
    "selected",
    "weight_knn",
    "weight_drf",
    "val_knn",
    "val_drf",
    "val_ms",
    "val_ca",
    "test_knn",
    "test_drf",
    "test_ms",
    "test_ca",
    "ok",
)


def emit_report(report: ExperimentReport, out_dir, formats=("json", "csv")) -> list:
    """Write report.json plus per_rep.csv / curves.csv; returns written paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    if "json" in formats:
        path = os.path.join(out_dir, "report.json")
        with open(path, "w") as handle:
            json.dump(report.to_dict(), handle, indent=2)
            handle.write("\n")
        written.append(path)
    if "csv" in formats:
        path = os.path.join(out_dir, "per_rep.csv")
        with open(path, "w") as handle:
            handle.write(",".join(_PER_REP_COLUMNS) + "\n")
            for r in report.records:
                fields = [repr(v) if isinstance(v, float) else str(v) for v in (getattr(r, c) for c in _PER_REP_COLUMNS)]
                handle.write(",".join(fields) + "\n")
        written.append(path)
        path = os.path.join(out_dir, "curves.csv")
        with open(path, "w") as handle:
            handle.write("model,hyperparameter,value,val_risk\n")
            for model, curve in report.curves.items():
                name = "k" if model == "knn" else "mtry"
                for value, risk in curve:
                    handle.write(f"{model},{name},{value},{risk!r}\n")
        written.append(path)
    return written
