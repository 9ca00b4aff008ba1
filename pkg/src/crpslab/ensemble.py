"""Model selection and convex aggregation on a validation sample.

Selection picks the candidate with minimal validation CRPS. Aggregation
searches the simplex through a softmax reparametrization with Nelder-Mead,
starting from uniform weights, every (near-)vertex, and a softmin point of
the per-candidate validation risks; vertex starts guarantee the aggregate is
never worse than the best single candidate on validation. Mixture scores go
through the flattened empirical representation, whose per-point sorted
support is cached once so each weight vector costs a single prefix pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .data import Dataset
from .distributions import DiscretizationConfig, GaussianLS, MixtureSpec, WeightedEmpirical, flatten_mixture
from .drf import DrfModel, drf_weights_matrix
from .errors import CapabilityError, InputError
from .models import DrnParams, EmosParams, KnnModel, drn_location_scale, emos_location_scale, knn_neighbor_responses
from .optim import OptimizerConfig, nelder_mead
from .risk import RiskEstimate, empirical_risk, model_scores, predict_dist
from .rng import generator
from scipy.special import ndtri


@dataclass(frozen=True)
class CandidateSet:
    """Named fitted models trained on the same training sample."""

    names: tuple
    models: tuple

    def __post_init__(self):
        if len(self.names) != len(self.models) or len(self.models) == 0:
            raise InputError("need one name per model and at least one model")
        if len(set(self.names)) != len(self.names):
            raise InputError("candidate names must be unique")

    @property
    def M(self) -> int:
        return len(self.models)


@dataclass(frozen=True)
class AggregationResult:
    """Simplex weights selected on validation, with the optimizer trail."""

    weights: np.ndarray
    risk: float
    trace: tuple
    converged: bool
    seed: int


def validation_risks(c: CandidateSet, val: Dataset) -> np.ndarray:
    """Per-candidate empirical CRPS on the validation sample."""
    if val.n == 0:
        raise InputError("empty validation set")
    return np.array([empirical_risk(m, val, keep_scores=False).value for m in c.models])


def select_model(c: CandidateSet, val: Dataset) -> int:
    """Index of the candidate with minimal validation risk (ties: lowest index)."""
    return int(np.argmin(validation_risks(c, val)))


def _dist_atoms(dist, probes):
    if isinstance(dist, WeightedEmpirical):
        return dist.atoms, dist.weights
    if isinstance(dist, GaussianLS):
        n = probes.size
        return dist.m + dist.sigma * probes, np.full(n, 1.0 / n)
    if isinstance(dist, MixtureSpec):
        flat = flatten_mixture(dist, DiscretizationConfig(probes.size))
        return flat.atoms, flat.weights
    raise InputError(f"unsupported distribution {type(dist).__name__}")


def _model_atom_lists(model, X, probes):
    """Per-point (atoms, weights) arrays for one candidate."""
    n = X.shape[0]
    if isinstance(model, (EmosParams, DrnParams)):
        loc_scale = emos_location_scale if isinstance(model, EmosParams) else drn_location_scale
        m, s = loc_scale(model, X)
        q = probes.size
        atoms = m[:, None] + s[:, None] * probes[None, :]
        w = np.full(q, 1.0 / q)
        return [atoms[i] for i in range(n)], [w] * n
    if isinstance(model, KnnModel):
        resp = knn_neighbor_responses(model, X, model.k)
        w = np.full(model.k, 1.0 / model.k)
        return [resp[i] for i in range(n)], [w] * n
    if isinstance(model, DrfModel):
        W = drf_weights_matrix(model, X)
        atoms_list, weights_list = [], []
        for i in range(n):
            keep = W[i] > 0
            atoms_list.append(model.y_sorted[keep])
            weights_list.append(W[i][keep])
        return atoms_list, weights_list
    atoms_list, weights_list = [], []
    for x in X:
        a, w = _dist_atoms(predict_dist(model, x), probes)
        atoms_list.append(a)
        weights_list.append(w)
    return atoms_list, weights_list


def _stack_predictions(models, X, disc: DiscretizationConfig):
    """Sorted per-point union support with one aligned weight row per candidate."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n = X.shape[0]
    m_count = len(models)
    probes = ndtri((np.arange(disc.n_quantiles) + 0.5) / disc.n_quantiles)
    per_model = [_model_atom_lists(model, X, probes) for model in models]
    offsets = np.zeros(n + 1, dtype=np.int64)
    atom_chunks = []
    weight_chunks = [[] for _ in range(m_count)]
    for i in range(n):
        parts = [per_model[m][0][i] for m in range(m_count)]
        sizes = [p.size for p in parts]
        merged = np.concatenate(parts)
        order = np.argsort(merged, kind="stable")
        atom_chunks.append(merged[order])
        start = 0
        for m in range(m_count):
            row = np.zeros(merged.size)
            row[start : start + sizes[m]] = per_model[m][1][i]
            weight_chunks[m].append(row[order])
            start += sizes[m]
        offsets[i + 1] = offsets[i] + merged.size
    atoms_flat = np.ascontiguousarray(np.concatenate(atom_chunks))
    weight_stack = np.ascontiguousarray(
        np.stack([np.concatenate(weight_chunks[m]) for m in range(m_count)])
    )
    return atoms_flat, weight_stack, offsets


def _softmax(u):
    z = np.exp(u - np.max(u))
    return z / z.sum()


def aggregate_convex(
    c: CandidateSet,
    val: Dataset,
    opt: OptimizerConfig = OptimizerConfig(),
    seed: int = 0,
    disc: DiscretizationConfig = DiscretizationConfig(),
) -> AggregationResult:
    """Validation-risk-minimizing convex combination of the candidates."""
    if val.n == 0:
        raise InputError("empty validation set")
    m_count = c.M
    if m_count == 1:
        risk = empirical_risk(c.models[0], val, keep_scores=False).value
        return AggregationResult(np.array([1.0]), risk, (risk,), True, int(seed))

    atoms_flat, weight_stack, offsets = _stack_predictions(c.models, val.X, disc)
    ys = val.Y

    def risk_of(lam):
        return float(_kernels.mixture_risk(np.ascontiguousarray(lam), atoms_flat, weight_stack, offsets, ys))

    def objective(u):
        return risk_of(_softmax(u))

    vertex_risks = np.array([risk_of(np.eye(m_count)[m]) for m in range(m_count)])
    spread = float(np.std(vertex_risks))
    starts = [np.zeros(m_count)]
    for m in range(m_count):
        starts.append(30.0 * np.eye(m_count)[m])
    starts.append(-(vertex_risks - vertex_risks.mean()) / max(spread, 1e-12))

    best = None
    for u0 in starts:
        res = nelder_mead(
            objective,
            u0,
            box=None,
            max_evals=opt.max_evals_factor * m_count,
            tol=opt.tol,
            stall_evals=opt.stall_evals_factor * m_count,
            stall_improvement=opt.stall_improvement,
            edge=np.full(m_count, 0.5),
        )
        if best is None or res.fx < best.fx:
            best = res
    weights = _softmax(best.x)
    risk = risk_of(weights)
    trace = tuple(best.trace)
    converged = best.converged
    vmin = int(np.argmin(vertex_risks))
    if risk > vertex_risks[vmin] + 1e-9:
        # vertex starts should prevent this; fall back to the best vertex
        weights = np.eye(m_count)[vmin]
        risk = float(vertex_risks[vmin])
    return AggregationResult(weights, risk, trace, converged, int(seed))


def mixture_empirical_risk(
    models, weights, data: Dataset, disc: DiscretizationConfig = DiscretizationConfig()
) -> RiskEstimate:
    """Mean CRPS of the fixed convex mixture of the models on a sample."""
    weights = np.ascontiguousarray(np.asarray(weights, dtype=np.float64))
    atoms_flat, weight_stack, offsets = _stack_predictions(models, data.X, disc)
    value = float(_kernels.mixture_risk(weights, atoms_flat, weight_stack, offsets, data.Y))
    return RiskEstimate(value, data.n)


def regret_selection(c: CandidateSet, truth, val: Dataset, n_mc: int = 4000, seed: int = 0) -> float:
    """Theoretical-risk regret of validation selection against the oracle pick.

    Candidate risks are Monte-Carlo estimates on one shared draw, so the
    reported regret can dip a few MC standard errors below zero; the raw
    value is returned unclipped.
    """
    chosen = select_model(c, val)
    X, Y = truth.sample_xy(n_mc, generator(seed, "regret-mc"))
    risks = np.array([model_scores(m, X, Y).mean() for m in c.models])
    return float(risks[chosen] - risks.min())


def simplex_grid(m: int, step: float = 0.02) -> np.ndarray:
    """All simplex points with coordinates on a grid of the given step."""
    if m > 4:
        raise CapabilityError("simplex grid oracle is limited to M <= 4 candidates")
    r = int(round(1.0 / step))
    points = []

    def rec(prefix, remaining, slots):
        if slots == 1:
            points.append(prefix + [remaining])
            return
        for i in range(remaining + 1):
            rec(prefix + [i], remaining - i, slots - 1)

    rec([], r, m)
    return np.asarray(points, dtype=np.float64) / r


def regret_aggregation(
    c: CandidateSet,
    truth,
    val: Dataset,
    grid_step: float = 0.02,
    n_mc: int = 4000,
    seed: int = 0,
    disc: DiscretizationConfig = DiscretizationConfig(),
) -> float:
    """Theoretical-risk regret of the aggregated weights against a grid oracle.

    The infimum over the simplex is approximated on a grid of the given step
    (M <= 4); theoretical risks use one shared Monte-Carlo draw.
    """
    lam_hat = aggregate_convex(c, val, seed=seed, disc=disc).weights
    X, Y = truth.sample_xy(n_mc, generator(seed, "regret-mc"))
    atoms_flat, weight_stack, offsets = _stack_predictions(c.models, X, disc)

    def risk_of(lam):
        return float(_kernels.mixture_risk(np.ascontiguousarray(lam), atoms_flat, weight_stack, offsets, Y))

    grid = simplex_grid(c.M, grid_step)
    grid_min = min(risk_of(g) for g in grid)
    return risk_of(lam_hat) - grid_min
