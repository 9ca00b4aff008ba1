"""Empirical and theoretical CRPS risk, and ERM fitting of EMOS and DRN.

The empirical risk of a fitted model on a sample is the mean CRPS of its
per-point predictive distributions. Fitting minimizes that risk over a
compact coordinatewise box: Nelder-Mead for EMOS (low dimension), mini-batch
gradient descent on the analytic CRPS gradient for DRN (Nelder-Mead fallback
at hidden width <= 2). Multi-start with fixed sub-seeds guards against the
non-convexity of the DRN landscape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from . import _kernels
from .data import Dataset
from .distributions import _INV_SQRT_PI, _gaussian_divergence, cdf_l2_divergence, crps
from .drf import DrfModel, drf_predict, drf_weights_matrix
from .errors import InputError
from .models import (
    DrnParams,
    EmosParams,
    KnnModel,
    ParamBox,
    drn_grad_batch,
    drn_location_scale,
    drn_predict,
    emos_location_scale,
    emos_predict,
    inv_softplus,
    knn_neighbor_responses,
    knn_predict,
)
from .optim import OptimizerConfig, nelder_mead, projected_sgd
from .rng import generator


@dataclass(frozen=True)
class RiskEstimate:
    """Mean CRPS over a sample, optionally retaining the per-sample scores."""

    value: float
    n: int
    per_sample: np.ndarray = None

    @property
    def stderr(self) -> float:
        if self.per_sample is None or self.n < 2:
            return float("nan")
        return float(np.std(self.per_sample, ddof=1) / math.sqrt(self.n))


@dataclass(frozen=True)
class FitResult:
    """Outcome of one ERM fit: parameters, final risk, and optimizer trace."""

    params: object
    risk: float
    trace: tuple
    converged: bool
    seed: int
    n_evals: int


class ConstantPredictor:
    """Model emitting the same predictive distribution at every x."""

    def __init__(self, dist):
        self.dist = dist

    def predict_dist(self, x):
        return self.dist


def predict_dist(model, x):
    """Predictive distribution of any fitted model at a single point."""
    if isinstance(model, EmosParams):
        return emos_predict(model, x)
    if isinstance(model, DrnParams):
        return drn_predict(model, x)
    if isinstance(model, KnnModel):
        return knn_predict(model, x)
    if isinstance(model, DrfModel):
        return drf_predict(model, x)
    if hasattr(model, "predict_dist"):
        return model.predict_dist(x)
    raise InputError(f"unsupported model type {type(model).__name__}")


def gaussian_crps_values(m, sigma, y) -> np.ndarray:
    """Vectorized closed-form Gaussian CRPS."""
    m = np.asarray(m, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    z = (y - m) / sigma
    phi = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    return sigma * (z * (2.0 * ndtr(z) - 1.0) + 2.0 * phi - _INV_SQRT_PI)


def model_scores(model, X, Y) -> np.ndarray:
    """Per-sample CRPS of a fitted model on (X, Y); batched per model type."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.asarray(Y, dtype=np.float64).ravel()
    if isinstance(model, EmosParams):
        m, sigma = emos_location_scale(model, X)
        return gaussian_crps_values(m, sigma, Y)
    if isinstance(model, DrnParams):
        m, sigma = drn_location_scale(model, X)
        return gaussian_crps_values(m, sigma, Y)
    if isinstance(model, KnnModel):
        resp = np.sort(knn_neighbor_responses(model, X, model.k), axis=1)
        k = model.k
        atoms = np.ascontiguousarray(resp.ravel())
        weights = np.full(atoms.size, 1.0 / k)
        offsets = np.arange(Y.size + 1, dtype=np.int64) * k
        return _kernels.crps_ragged(atoms, weights, offsets, Y)
    if isinstance(model, DrfModel):
        W = drf_weights_matrix(model, X)
        return _kernels.crps_rows_shared_atoms(model.y_sorted, W, Y)
    return np.array([crps(predict_dist(model, x), y) for x, y in zip(X, Y)])


def empirical_risk(model, sample: Dataset, keep_scores: bool = True) -> RiskEstimate:
    """Mean CRPS of the model over the sample."""
    if sample.n == 0:
        raise InputError("empty sample")
    scores = model_scores(model, sample.X, sample.Y)
    return RiskEstimate(float(scores.mean()), sample.n, scores if keep_scores else None)


# ---------------------------------------------------------------------------
# ERM fitting
# ---------------------------------------------------------------------------


def _emos_risk_vec(vec, X, Y, d):
    from .models import softplus, _clamped_scale_arg

    m = vec[0] + X @ vec[1 : 1 + d]
    s, _ = _clamped_scale_arg(vec[1 + d] + X @ vec[2 + d :])
    return float(gaussian_crps_values(m, np.sqrt(softplus(s)), Y).mean())


def _moment_init(Y, dim, d):
    """alpha = mean(Y), scale head matching var(Y), slopes zero."""
    init = np.zeros(dim)
    init[0] = Y.mean()
    init[1 + d] = float(inv_softplus(max(float(Y.var()), 1e-6)))
    return init


def _multistart_nelder_mead(objective, starts, box, cfg: OptimizerConfig):
    k = box.dim
    best = None
    total_evals = 0
    for x0 in starts:
        res = nelder_mead(
            objective,
            x0,
            box=box,
            max_evals=cfg.max_evals_factor * k,
            tol=cfg.tol,
            stall_evals=cfg.stall_evals_factor * k,
            stall_improvement=cfg.stall_improvement,
            edge=cfg.simplex_edge_frac * box.width,
        )
        total_evals += res.n_evals
        if best is None or res.fx < best.fx:
            best = res
    return best, total_evals


def fit_emos(
    train: Dataset, box: ParamBox = None, opt: OptimizerConfig = OptimizerConfig(), seed: int = 0
) -> FitResult:
    """Minimum-CRPS estimation of the EMOS parameters over a compact box.

    Multi-start Nelder-Mead (moment-based start plus seeded uniform draws in
    the box); every iterate is projected coordinatewise into the box.
    """
    d = train.d
    dim = 2 * (1 + d)
    if train.n < dim:
        raise InputError(f"need at least K={dim} training points, got {train.n}")
    init = _moment_init(train.Y, dim, d)
    if box is None:
        box = ParamBox.centered(init, 50.0)
    X, Y = train.X, train.Y

    def objective(vec):
        return _emos_risk_vec(vec, X, Y, d)

    starts = [box.project(init)]
    for j in range(1, max(1, opt.n_starts)):
        starts.append(box.sample_uniform(generator(seed, "emos-start", j)))
    best, total_evals = _multistart_nelder_mead(objective, starts, box, opt)
    params = EmosParams.from_vector(best.x, d, box)
    return FitResult(params, best.fx, tuple(best.trace), best.converged, int(seed), total_evals)


def _drn_start(init, hidden, d, rng):
    """Moment-based output heads with small random hidden weights."""
    vec = init.copy()
    if hidden > 0:
        h = hidden
        vec[1 : 1 + h] = rng.normal(0.0, 0.5 / math.sqrt(h), h)
        vec[2 + h : 2 + 2 * h] = rng.normal(0.0, 0.5 / math.sqrt(h), h)
        vec[2 + 2 * h : 2 + 3 * h] = rng.normal(0.0, 0.5, h)
        vec[2 + 3 * h :] = rng.normal(0.0, 1.5 / math.sqrt(d), h * d)
    return vec


def fit_drn(
    train: Dataset,
    hidden: int,
    box: ParamBox = None,
    opt: OptimizerConfig = OptimizerConfig(),
    seed: int = 0,
    activation: str = "tanh",
) -> FitResult:
    """Minimum-CRPS estimation of a one-hidden-layer DRN.

    Mini-batch gradient descent on the analytic CRPS gradient with box
    projection after every step; Nelder-Mead for hidden width <= 2. The
    moment-based output initialization is shared across the seeded starts.
    """
    d = train.d
    hidden = int(hidden)
    if hidden < 0:
        raise InputError("hidden width must be >= 0")
    dim = (d + 3) * hidden + 2
    if train.n < dim:
        raise InputError(f"need at least K={dim} training points, got {train.n}")
    init = np.zeros(dim)
    init[0] = train.Y.mean()
    init[1 + hidden] = float(inv_softplus(max(float(train.Y.var()), 1e-6)))
    if box is None:
        box = ParamBox.centered(init, 50.0)
    X, Y = train.X, train.Y

    def risk_of(vec):
        p = DrnParams.from_vector(box.project(vec), hidden, d, activation, box)
        m, sigma = drn_location_scale(p, X)
        return float(gaussian_crps_values(m, sigma, Y).mean())

    method = opt.method
    if method == "auto":
        method = "nelder-mead" if hidden <= 2 else "gd"

    starts = [box.project(_drn_start(init, hidden, d, generator(seed, "drn-start", j))) for j in range(max(1, opt.n_starts))]
    total_evals = 0
    best = None
    if method == "nelder-mead":
        best, total_evals = _multistart_nelder_mead(risk_of, starts, box, opt)
        best_x, best_fx, trace, converged = best.x, best.fx, best.trace, best.converged
    else:

        def grad_fn_factory():
            def grad_fn(vec, idx):
                p = DrnParams.from_vector(vec, hidden, d, activation, box)
                g, _ = drn_grad_batch(p, X[idx], Y[idx])
                return g

            return grad_fn

        best_res = None
        for j, x0 in enumerate(starts):
            res = projected_sgd(
                risk_of, grad_fn_factory(), x0, box, opt, train.n, generator(seed, "drn-sgd", j)
            )
            total_evals += res.n_evals
            if best_res is None or res.fx < best_res.fx:
                best_res = res
        best_x, best_fx, trace, converged = best_res.x, best_res.fx, best_res.trace, best_res.converged
    params = DrnParams.from_vector(box.project(best_x), hidden, d, activation, box)
    return FitResult(params, best_fx, tuple(trace), converged, int(seed), total_evals)


# ---------------------------------------------------------------------------
# Theoretical risk and excess risk against a synthetic truth
# ---------------------------------------------------------------------------


def theoretical_risk_mc(model, truth, n_mc: int, seed: int = 0) -> RiskEstimate:
    """Monte-Carlo estimate of E[S(F_X, Y)] under the synthetic truth."""
    if n_mc < 2:
        raise InputError("n_mc must be >= 2")
    X, Y = truth.sample_xy(n_mc, generator(seed, "risk-mc"))
    scores = model_scores(model, X, Y)
    return RiskEstimate(float(scores.mean()), n_mc, scores)


def excess_risk_exact(model, truth, x_mc: int = 4096, seed: int = 0) -> float:
    """Monte-Carlo over X of the exact cdf L2 divergence to the truth.

    For Gaussian-output models the per-x divergence has a closed form, so the
    only randomness is the X sample (drawn with a fixed stream per seed).
    """
    X = truth.sample_x(x_mc, generator(seed, "excess-x"))
    m_star, s_star = truth.location_scale(X)
    if isinstance(model, (EmosParams, DrnParams)) and np.all(s_star > 0):
        if isinstance(model, EmosParams):
            m_hat, s_hat = emos_location_scale(model, X)
        else:
            m_hat, s_hat = drn_location_scale(model, X)
        return float(_gaussian_divergence(m_hat, s_hat, m_star, s_star).mean())
    total = 0.0
    for i, x in enumerate(X):
        total += cdf_l2_divergence(predict_dist(model, x), truth.truth_at(x))
    return total / X.shape[0]
