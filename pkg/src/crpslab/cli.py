"""Command-line surface.

Subcommands: score, fit, sweep, bench, aggregate, verify-bounds, bounds.
Every subcommand accepts --config pointing at a flat key=value file whose
keys mirror the flags; explicit flags override the file, and the
CRPSLAB_SEED environment variable is the seed fallback of last resort.
"""

from __future__ import annotations

import argparse
import json
import sys

from ._version import __version__
from .bounds import (
    BoundInputs,
    CoverageConfig,
    bound_aggregation_regret,
    bound_aggregation_regret_expect,
    bound_estimation,
    bound_estimation_expect,
    bound_selection_regret,
    bound_selection_regret_expect,
    coverage_experiment,
    rate_exponent_heavy_tail,
)
from .data import load_csv, make_splits
from .distributions import crps
from .drf import DrfHyper
from .ensemble import CandidateSet, aggregate_convex
from .errors import CapabilityError, ConfigError, InputError, NumericalError
from .models import KnnModel
from .pipeline import BenchConfig, emit_report, run_benchmark, sweep_knn, _sweep_drf_keep_models
from .risk import fit_drn, fit_emos
from .rng import resolve_seed, stream_key
from .serialize import dist_from_dict, model_from_dict, model_to_dict


def _read_config(path) -> dict:
    values = {}
    with open(path) as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.rstrip()!r}")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values


class _Options:
    """Flag > config-file > default resolution."""

    def __init__(self, args):
        self.args = args
        self.config = _read_config(args.config) if getattr(args, "config", None) else {}

    def get(self, key, default=None, cast=str):
        flag = getattr(self.args, key.replace("-", "_"), None)
        if flag is not None:
            return flag
        if key in self.config:
            raw = self.config[key]
            if cast is bool:
                return raw.lower() in ("1", "true", "yes")
            return cast(raw)
        return default

    def seed(self) -> int:
        return resolve_seed(self.get("seed", None, int))


def _json_payload(arg: str):
    text = arg.strip()
    if text.startswith("{"):
        return json.loads(text)
    with open(arg) as handle:
        return json.load(handle)


def _load_dataset(opts, path_key="data"):
    path = opts.get(path_key)
    if path is None:
        raise ConfigError(f"missing --{path_key}")
    preset = opts.get("preset")
    delimiter = opts.get("delimiter", ",")
    return load_csv(path, target_column=opts.get("target"), delimiter=delimiter, preset=preset)


def _write_json(path, payload):
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2)
        handle.write("\n")


def _cmd_score(opts) -> int:
    dist = dist_from_dict(_json_payload(opts.get("dist")))
    value = crps(dist, float(opts.get("y")))
    print(repr(value))
    return 0


def _cmd_fit(opts) -> int:
    from .optim import OptimizerConfig

    model = opts.get("model")
    train = _load_dataset(opts, "train")
    seed = opts.seed()
    optimizer = OptimizerConfig.from_flat_dict(opts.config)  # optimizer.* keys
    if model == "emos":
        fit = fit_emos(train, opt=optimizer, seed=seed)
    elif model == "drn":
        fit = fit_drn(train, hidden=opts.get("hidden", 8, int), opt=optimizer, seed=seed)
    else:
        raise ConfigError(f"unknown model {model!r}; choose emos or drn")
    payload = {
        "model": model,
        "risk": fit.risk,
        "converged": fit.converged,
        "seed": fit.seed,
        "params": model_to_dict(fit.params),
    }
    _write_json(opts.get("out"), payload)
    print(f"{model}: train CRPS {fit.risk:.6g} (converged={fit.converged})")
    return 0


def _cmd_sweep(opts) -> int:
    model = opts.get("model")
    dataset = _load_dataset(opts)
    seed = opts.seed()
    split = make_splits(dataset.n, seed)
    train = dataset.take(split.train)
    val = dataset.take(split.val)
    if model == "knn":
        kmax = opts.get("kmax", 50, int)
        k_hat, curve = sweep_knn(train, val, range(1, min(kmax, train.n) + 1))
        fitted = KnnModel(k_hat, train.X, train.Y)
        payload = {
            "model": "knn",
            "k_hat": k_hat,
            "curve": [{"k": k, "val_risk": r} for k, r in curve],
            "fitted": model_to_dict(fitted),
        }
        best = min(curve, key=lambda kr: kr[1])
        print(f"knn: k_hat={k_hat} validation CRPS {best[1]:.6g}")
    elif model == "drf":
        hyper = DrfHyper(num_trees=opts.get("num-trees", 500, int))
        mtry_hat, curve, fitted = _sweep_drf_keep_models(
            train, val, None, hyper, stream_key(seed, "drf-sweep")
        )
        payload = {
            "model": "drf",
            "mtry_hat": mtry_hat,
            "curve": [{"mtry": m, "val_risk": r} for m, r in curve],
            "fitted": model_to_dict(fitted),
        }
        best = min(curve, key=lambda kr: kr[1])
        print(f"drf: mtry_hat={mtry_hat} validation CRPS {best[1]:.6g}")
    else:
        raise ConfigError(f"unknown model {model!r}; choose knn or drf")
    _write_json(opts.get("out"), payload)
    return 0


def _cmd_bench(opts) -> int:
    dataset = _load_dataset(opts)
    cfg = BenchConfig(
        reps=opts.get("reps", 100, int),
        seed=opts.seed(),
        kmax=opts.get("kmax", 50, int),
        num_trees=opts.get("num-trees", 500, int),
        jobs=opts.get("jobs", 1, int),
    )
    report = run_benchmark(dataset, cfg=cfg)
    paths = emit_report(report, opts.get("out-dir"))
    for method, stats in report.summary.items():
        print(f"{method}: mean test CRPS {stats['mean']:.4f} (stderr {stats['stderr']:.4f}, reps {stats['reps']})")
    if report.n_failed:
        print(f"failed repetitions excluded from summary: {report.n_failed}")
    for path in paths:
        print(f"wrote {path}")
    return 0


def _cmd_aggregate(opts) -> int:
    files = opts.get("candidates")
    if not files or len(files) < 1:
        raise ConfigError("need at least one candidate JSON")
    models, names = [], []
    for path in files:
        payload = _json_payload(path)
        payload = payload.get("fitted", payload.get("params", payload))
        models.append(model_from_dict(payload))
        base = path.rsplit("/", 1)[-1].rsplit(".", 1)[0]
        name = base
        suffix = 1
        while name in names:
            suffix += 1
            name = f"{base}-{suffix}"
        names.append(name)
    val = _load_dataset(opts, "val")
    result = aggregate_convex(CandidateSet(tuple(names), tuple(models)), val, seed=opts.seed())
    payload = {
        "names": names,
        "weights": result.weights.tolist(),
        "val_risk": result.risk,
        "converged": result.converged,
    }
    _write_json(opts.get("out"), payload)
    print("weights: " + ", ".join(f"{n}={w:.4f}" for n, w in zip(names, result.weights)))
    return 0


def _cmd_verify_bounds(opts) -> int:
    cfg = CoverageConfig(
        scenario=opts.get("scenario"),
        reps=opts.get("reps", 200, int),
        delta=opts.get("delta", 0.1, float),
        seed=opts.seed(),
    )
    report = coverage_experiment(cfg)
    _write_json(opts.get("out"), report.to_dict())
    for point, cov, bound in zip(report.grid, report.coverage, report.bound_values):
        print(f"{report.scenario} @ {point}: coverage {cov:.3f} (target >= {1 - report.delta}), bound {bound:.4g}")
    return 0


def _cmd_bounds(opts) -> int:
    params = _json_payload(opts.get("params"))
    known = set(BoundInputs.__dataclass_fields__)
    unknown = set(params) - known
    if unknown:
        raise ConfigError(f"unknown bound parameters: {sorted(unknown)}")
    b = BoundInputs(**params)
    theorem = int(opts.get("theorem"))
    if theorem == 1:
        out = {
            "high_probability": vars(bound_estimation(b)),
            "expectation": vars(bound_estimation_expect(b)),
        }
    elif theorem == 2:
        out = {
            "high_probability": vars(bound_selection_regret(b)),
            "expectation": vars(bound_selection_regret_expect(b)),
        }
    elif theorem == 3:
        out = {
            "high_probability": vars(bound_aggregation_regret(b)),
            "expectation": vars(bound_aggregation_regret_expect(b)),
        }
    elif theorem == 4:
        out = {"rate_exponent": rate_exponent_heavy_tail(b.p, b.K)}
    else:
        raise ConfigError("theorem must be 1, 2, 3 or 4")
    print(json.dumps(out, indent=2))
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crpslab", description=__doc__)
    parser.add_argument("--version", action="version", version=f"crpslab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **flags):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None)
        for flag, spec in flags.items():
            p.add_argument(f"--{flag}", **spec)
        p.set_defaults(fn=fn)
        return p

    add("score", _cmd_score, dist={"required": True}, y={"required": True, "type": float})
    add(
        "fit",
        _cmd_fit,
        model={"choices": ["emos", "drn"], "required": True},
        train={"required": True},
        target={"default": None},
        hidden={"type": int, "default": None},
        seed={"type": int, "default": None},
        out={"required": True},
        preset={"default": None},
        delimiter={"default": None},
    )
    add(
        "sweep",
        _cmd_sweep,
        model={"choices": ["knn", "drf"], "required": True},
        data={"required": True},
        target={"default": None},
        kmax={"type": int, "default": None},
        seed={"type": int, "default": None},
        out={"required": True},
        preset={"default": None},
        delimiter={"default": None},
        **{"num-trees": {"type": int, "default": None}},
    )
    add(
        "bench",
        _cmd_bench,
        data={"required": True},
        target={"default": None},
        reps={"type": int, "default": None},
        seed={"type": int, "default": None},
        preset={"default": None},
        delimiter={"default": None},
        jobs={"type": int, "default": None},
        kmax={"type": int, "default": None},
        **{"out-dir": {"required": True}, "num-trees": {"type": int, "default": None}},
    )
    add(
        "aggregate",
        _cmd_aggregate,
        candidates={"nargs": "+", "required": True},
        val={"required": True},
        target={"default": None},
        out={"required": True},
        seed={"type": int, "default": None},
        preset={"default": None},
        delimiter={"default": None},
    )
    add(
        "verify-bounds",
        _cmd_verify_bounds,
        scenario={"choices": ["estimation", "selection", "aggregation"], "required": True},
        reps={"type": int, "default": None},
        delta={"type": float, "default": None},
        seed={"type": int, "default": None},
        out={"required": True},
    )
    add(
        "bounds",
        _cmd_bounds,
        theorem={"choices": ["1", "2", "3", "4"], "required": True},
        params={"required": True},
    )
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    opts = _Options(args)
    try:
        return args.fn(opts)
    except (InputError, ConfigError, CapabilityError, NumericalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
