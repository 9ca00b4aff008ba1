"""Optimizers for CRPS empirical-risk minimization.

``nelder_mead``: the standard simplex method (reflection 1, expansion 2,
contraction 1/2, shrink 1/2) with every trial point projected coordinatewise
into the feasible box. ``projected_sgd``: mini-batch gradient descent with
box projection after each step and step halving on plateau.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class OptimizerConfig:
    """Settings shared by the fitting routines; serializable to flat key=value."""

    method: str = "auto"  # nelder-mead | gd | auto
    n_starts: int = 5
    max_evals_factor: int = 2000  # evaluation budget = factor * K
    tol: float = 1e-9  # simplex risk-spread stopping threshold
    stall_evals_factor: int = 50  # stall window = factor * K evaluations
    stall_improvement: float = 1e-10
    simplex_edge_frac: float = 0.1  # initial simplex edge as fraction of box width
    batch_size: int = 32
    step_size: float = 1e-2
    epochs: int = 200

    def to_flat_dict(self) -> dict:
        return {f"optimizer.{k}": v for k, v in asdict(self).items()}

    @classmethod
    def from_flat_dict(cls, flat: dict) -> "OptimizerConfig":
        kwargs = {}
        for key, value in flat.items():
            if not key.startswith("optimizer."):
                continue
            name = key[len("optimizer.") :]
            if name not in cls.__dataclass_fields__:
                raise ConfigError(f"unknown optimizer key {key!r}")
            if name == "method":
                kwargs[name] = str(value)
            elif name in ("n_starts", "max_evals_factor", "stall_evals_factor", "batch_size", "epochs"):
                kwargs[name] = int(value)
            else:
                kwargs[name] = float(value)
        return cls(**kwargs)


@dataclass
class OptimResult:
    x: np.ndarray
    fx: float
    trace: list
    converged: bool
    n_evals: int


def nelder_mead(
    fn,
    x0,
    box=None,
    max_evals: int = 2000,
    tol: float = 1e-9,
    stall_evals: int = 200,
    stall_improvement: float = 1e-10,
    edge=None,
) -> OptimResult:
    """Minimize fn from x0; trial points are clipped into ``box`` when given.

    ``edge`` sets the initial simplex edge per coordinate (defaults to 10% of
    the box width, or 0.5 without a box). The trace records the running best
    value at each accepted improvement, hence is nonincreasing.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    k = x0.size

    def project(x):
        return box.project(x) if box is not None else x

    if edge is None:
        edge = 0.1 * box.width if box is not None else np.full(k, 0.5)
    edge = np.broadcast_to(np.asarray(edge, dtype=np.float64), (k,))

    evals = 0

    def call(x):
        nonlocal evals
        evals += 1
        return float(fn(x))

    x0 = project(x0)
    simplex = [x0]
    for i in range(k):
        step = np.zeros(k)
        step[i] = edge[i] if edge[i] > 0 else 0.0
        simplex.append(project(x0 + step))
    values = [call(p) for p in simplex]

    best = min(values)
    trace = [best]
    last_improve_eval = evals
    converged = False

    while evals < max_evals:
        order = np.argsort(values, kind="stable")
        simplex = [simplex[i] for i in order]
        values = [values[i] for i in order]
        if values[0] < best - stall_improvement:
            best = values[0]
            trace.append(best)
            last_improve_eval = evals
        if values[-1] - values[0] < tol:
            converged = True
            break
        if evals - last_improve_eval > stall_evals:
            break

        centroid = np.mean(simplex[:-1], axis=0)
        worst = simplex[-1]
        reflected = project(centroid + (centroid - worst))
        f_reflected = call(reflected)
        if values[0] <= f_reflected < values[-2]:
            simplex[-1], values[-1] = reflected, f_reflected
            continue
        if f_reflected < values[0]:
            expanded = project(centroid + 2.0 * (centroid - worst))
            f_expanded = call(expanded)
            if f_expanded < f_reflected:
                simplex[-1], values[-1] = expanded, f_expanded
            else:
                simplex[-1], values[-1] = reflected, f_reflected
            continue
        contracted = project(centroid + 0.5 * (worst - centroid))
        f_contracted = call(contracted)
        if f_contracted < values[-1]:
            simplex[-1], values[-1] = contracted, f_contracted
            continue
        for i in range(1, k + 1):
            simplex[i] = project(simplex[0] + 0.5 * (simplex[i] - simplex[0]))
            values[i] = call(simplex[i])

    order = int(np.argmin(values))
    if values[order] < best:
        best = values[order]
        trace.append(best)
    return OptimResult(simplex[order], values[order], trace, converged, evals)


def projected_sgd(risk_fn, grad_fn, x0, box, cfg: OptimizerConfig, n_samples: int, rng) -> OptimResult:
    """Mini-batch gradient descent with box projection after each step.

    ``grad_fn(x, idx)`` returns the mean gradient over the batch indices;
    ``risk_fn(x)`` the full-sample risk, evaluated once per epoch for the
    trace. The step halves after 10 epochs without improvement.
    """
    x = box.project(np.asarray(x0, dtype=np.float64))
    step = cfg.step_size
    best_x = x.copy()
    best_risk = float(risk_fn(x))
    trace = [best_risk]
    stale = 0
    for _ in range(cfg.epochs):
        perm = rng.permutation(n_samples)
        for start in range(0, n_samples, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            x = box.project(x - step * grad_fn(x, idx))
        risk = float(risk_fn(x))
        if risk < best_risk - cfg.stall_improvement:
            best_risk = risk
            best_x = x.copy()
            trace.append(best_risk)
            stale = 0
        else:
            stale += 1
            if stale >= 10:
                step *= 0.5
                stale = 0
                if step < 1e-6 * cfg.step_size:
                    break
    converged = len(trace) > 1
    return OptimResult(best_x, best_risk, trace, converged, cfg.epochs * max(1, n_samples // cfg.batch_size))
