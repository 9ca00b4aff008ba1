"""Predictive model families: EMOS, DRN, and distributional KNN.

EMOS maps a covariate vector to a Gaussian whose location is linear in x and
whose variance is softplus of a linear form. The DRN inserts one shared
hidden layer before both output heads; with zero hidden width it degenerates
to a constant-parameter EMOS. KNN returns the empirical distribution of the
k nearest training responses. The random forest lives in ``drf.py``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import GaussianLS, WeightedEmpirical
from .errors import InputError

_SOFTPLUS_CLAMP = -30.0  # below this the scale head is clamped (sigma ~ 3e-7)


def softplus(u):
    """log(1 + e^u), overflow-safe for large |u|."""
    u = np.asarray(u, dtype=np.float64)
    return np.where(u > 0, u + np.log1p(np.exp(-np.abs(u))), np.log1p(np.exp(np.minimum(u, 0.0))))


def inv_softplus(v):
    """Inverse of softplus on (0, inf): log(e^v - 1)."""
    v = np.asarray(v, dtype=np.float64)
    if np.any(v <= 0):
        raise InputError("inv_softplus needs a positive argument")
    return np.where(v > 30.0, v, np.log(np.expm1(np.minimum(v, 30.0))))


def _clamped_scale_arg(s):
    clamped = s < _SOFTPLUS_CLAMP
    return np.maximum(s, _SOFTPLUS_CLAMP), clamped


@dataclass(frozen=True)
class ParamBox:
    """Coordinatewise box enforcing the compact parameter space."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=np.float64).ravel()
        upper = np.asarray(self.upper, dtype=np.float64).ravel()
        if lower.shape != upper.shape or lower.size == 0:
            raise InputError("box bounds must be equal-length, nonempty vectors")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise InputError("box bounds must be finite")
        if np.any(lower > upper):
            raise InputError("box lower bounds must not exceed upper bounds")
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def centered(cls, center, half_width) -> "ParamBox":
        center = np.asarray(center, dtype=np.float64)
        return cls(center - half_width, center + half_width)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def circumradius(self) -> float:
        """Radius of the smallest ball containing the box (half the diagonal)."""
        return 0.5 * float(np.linalg.norm(self.width))

    def contains(self, theta, atol=1e-9) -> bool:
        theta = np.asarray(theta, dtype=np.float64)
        return bool(np.all(theta >= self.lower - atol) and np.all(theta <= self.upper + atol))

    def project(self, theta) -> np.ndarray:
        return np.clip(np.asarray(theta, dtype=np.float64), self.lower, self.upper)

    def sample_uniform(self, rng) -> np.ndarray:
        return rng.uniform(self.lower, self.upper)


# ---------------------------------------------------------------------------
# EMOS
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EmosParams:
    """Location-scale regression: m = alpha + beta.x, var = softplus(alpha_s + beta_s.x)."""

    alpha: float
    beta: np.ndarray
    alpha_s: float
    beta_s: np.ndarray
    box: ParamBox

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64).ravel()
        beta_s = np.asarray(self.beta_s, dtype=np.float64).ravel()
        if beta.shape != beta_s.shape:
            raise InputError("beta and beta_s must have the same length")
        vec = np.concatenate([[self.alpha], beta, [self.alpha_s], beta_s])
        if not np.all(np.isfinite(vec)):
            raise InputError("EMOS parameters must be finite")
        if self.box.dim != vec.size:
            raise InputError(f"box dimension {self.box.dim} != parameter dimension {vec.size}")
        if not self.box.contains(vec):
            raise InputError("EMOS parameters fall outside their box")
        beta.setflags(write=False)
        beta_s.setflags(write=False)
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "alpha_s", float(self.alpha_s))
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "beta_s", beta_s)

    @property
    def d(self) -> int:
        return self.beta.size

    @property
    def dim(self) -> int:
        return 2 * (1 + self.d)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([[self.alpha], self.beta, [self.alpha_s], self.beta_s])

    @classmethod
    def from_vector(cls, vec, d: int, box: ParamBox) -> "EmosParams":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != 2 * (1 + d):
            raise InputError("EMOS vector has wrong length")
        return cls(vec[0], vec[1 : 1 + d], vec[1 + d], vec[2 + d :], box)


def emos_location_scale(p: EmosParams, X) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized (m, sigma) for rows of X; scale argument clamped at -30."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != p.d:
        raise InputError(f"covariate dimension {X.shape[1]} != model dimension {p.d}")
    m = p.alpha + X @ p.beta
    s, _ = _clamped_scale_arg(p.alpha_s + X @ p.beta_s)
    return m, np.sqrt(softplus(s))


def emos_predict(p: EmosParams, x) -> GaussianLS:
    """Predictive Gaussian at a single covariate vector."""
    m, sigma = emos_location_scale(p, np.asarray(x, dtype=np.float64).reshape(1, -1))
    return GaussianLS(float(m[0]), float(sigma[0]))


# ---------------------------------------------------------------------------
# DRN
# ---------------------------------------------------------------------------

_ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class DrnParams:
    """One-hidden-layer distributional regression network.

    Both output heads share the hidden layer h = g(gamma + delta @ x):
    m = alpha + beta.h and var = softplus(alpha_s + beta_s.h). The parameter
    vector lives in dimension (d+3)H + 2.
    """

    alpha: float
    beta: np.ndarray
    alpha_s: float
    beta_s: np.ndarray
    gamma: np.ndarray
    delta: np.ndarray
    activation: str
    box: ParamBox

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64).ravel()
        beta_s = np.asarray(self.beta_s, dtype=np.float64).ravel()
        gamma = np.asarray(self.gamma, dtype=np.float64).ravel()
        delta = np.atleast_2d(np.asarray(self.delta, dtype=np.float64))
        h = beta.size
        if beta_s.size != h or gamma.size != h:
            raise InputError("beta, beta_s and gamma must share the hidden width")
        if h == 0:
            delta = delta.reshape(0, delta.shape[1] if delta.size else delta.shape[-1])
        elif delta.shape[0] != h:
            raise InputError("delta must have one row per hidden unit")
        if self.activation not in _ACTIVATIONS:
            raise InputError(f"activation must be one of {_ACTIVATIONS}")
        vec = np.concatenate([[self.alpha], beta, [self.alpha_s], beta_s, gamma, delta.ravel()])
        if not np.all(np.isfinite(vec)):
            raise InputError("DRN parameters must be finite")
        if self.box.dim != vec.size:
            raise InputError(f"box dimension {self.box.dim} != parameter dimension {vec.size}")
        if not self.box.contains(vec):
            raise InputError("DRN parameters fall outside their box")
        for arr in (beta, beta_s, gamma, delta):
            arr.setflags(write=False)
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "alpha_s", float(self.alpha_s))
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "beta_s", beta_s)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "delta", delta)

    @property
    def hidden(self) -> int:
        return self.beta.size

    @property
    def d(self) -> int:
        return self.delta.shape[1]

    @property
    def dim(self) -> int:
        return (self.d + 3) * self.hidden + 2

    def to_vector(self) -> np.ndarray:
        return np.concatenate(
            [[self.alpha], self.beta, [self.alpha_s], self.beta_s, self.gamma, self.delta.ravel()]
        )

    @classmethod
    def from_vector(cls, vec, hidden: int, d: int, activation: str, box: ParamBox) -> "DrnParams":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != (d + 3) * hidden + 2:
            raise InputError("DRN vector has wrong length")
        h = hidden
        alpha = vec[0]
        beta = vec[1 : 1 + h]
        alpha_s = vec[1 + h]
        beta_s = vec[2 + h : 2 + 2 * h]
        gamma = vec[2 + 2 * h : 2 + 3 * h]
        delta = vec[2 + 3 * h :].reshape(h, d)
        return cls(alpha, beta, alpha_s, beta_s, gamma, delta, activation, box)


def _activation(name, u):
    if name == "relu":
        return np.maximum(u, 0.0)
    return np.tanh(u)


def _activation_grad(name, u):
    if name == "relu":
        return (u > 0.0).astype(np.float64)  # subgradient at 0 taken as 0
    t = np.tanh(u)
    return 1.0 - t * t


def drn_location_scale(p: DrnParams, X) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized (m, sigma) for rows of X."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != p.d:
        raise InputError(f"covariate dimension {X.shape[1]} != model dimension {p.d}")
    if p.hidden == 0:
        m = np.full(X.shape[0], p.alpha)
        s = np.full(X.shape[0], p.alpha_s)
    else:
        h = _activation(p.activation, p.gamma + X @ p.delta.T)
        m = p.alpha + h @ p.beta
        s = p.alpha_s + h @ p.beta_s
    s, _ = _clamped_scale_arg(s)
    return m, np.sqrt(softplus(s))


def drn_predict(p: DrnParams, x) -> GaussianLS:
    """Predictive Gaussian at a single covariate vector."""
    m, sigma = drn_location_scale(p, np.asarray(x, dtype=np.float64).reshape(1, -1))
    return GaussianLS(float(m[0]), float(sigma[0]))


def drn_grad_batch(p: DrnParams, X, y) -> tuple[np.ndarray, bool]:
    """Mean CRPS gradient over a batch, in to_vector() parameter order.

    Backpropagates the closed-form Gaussian CRPS gradient through the
    network. Returns (gradient, clamp_hit); where the scale argument is
    clamped the scale head receives zero gradient.
    """
    from .distributions import _INV_SQRT_PI  # shared constant
    from scipy.special import ndtr

    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).ravel()
    n = X.shape[0]
    if y.size != n:
        raise InputError("batch X and y lengths differ")
    hdim = p.hidden
    if hdim == 0:
        hval = np.zeros((n, 0))
        m = np.full(n, p.alpha)
        s_raw = np.full(n, p.alpha_s)
    else:
        u = p.gamma + X @ p.delta.T
        hval = _activation(p.activation, u)
        m = p.alpha + hval @ p.beta
        s_raw = p.alpha_s + hval @ p.beta_s
    s, clamped = _clamped_scale_arg(s_raw)
    var = softplus(s)
    sigma = np.sqrt(var)

    z = (y - m) / sigma
    phi = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    d_m = -(2.0 * ndtr(z) - 1.0)
    d_sigma = 2.0 * phi - _INV_SQRT_PI
    # sigma = sqrt(softplus(s)); d sigma / d s = sigmoid(s) / (2 sigma)
    sigmoid = np.where(s >= 0, 1.0 / (1.0 + np.exp(-s)), np.exp(s) / (1.0 + np.exp(s)))
    d_s = d_sigma * sigmoid / (2.0 * sigma)
    d_s = np.where(clamped, 0.0, d_s)

    g_alpha = d_m.mean()
    g_alpha_s = d_s.mean()
    if hdim == 0:
        grad = np.array([g_alpha, g_alpha_s])
        return grad, bool(np.any(clamped))
    g_beta = hval.T @ d_m / n
    g_beta_s = hval.T @ d_s / n
    d_h = np.outer(d_m, p.beta) + np.outer(d_s, p.beta_s)
    d_u = d_h * _activation_grad(p.activation, u)
    g_gamma = d_u.mean(axis=0)
    g_delta = d_u.T @ X / n
    grad = np.concatenate([[g_alpha], g_beta, [g_alpha_s], g_beta_s, g_gamma, g_delta.ravel()])
    return grad, bool(np.any(clamped))


def drn_grad(p: DrnParams, x, y: float) -> np.ndarray:
    """CRPS gradient at one sample, ordered as to_vector()."""
    grad, _ = drn_grad_batch(p, np.asarray(x, dtype=np.float64).reshape(1, -1), [y])
    return grad


# ---------------------------------------------------------------------------
# Distributional KNN
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KnnModel:
    """k nearest neighbors under the Euclidean metric, uniform 1/k weights."""

    k: int
    train_x: np.ndarray
    train_y: np.ndarray
    standardize: bool = False
    scale: np.ndarray = field(default=None)

    def __post_init__(self):
        train_x = np.atleast_2d(np.asarray(self.train_x, dtype=np.float64))
        train_y = np.asarray(self.train_y, dtype=np.float64).ravel()
        if train_x.shape[0] != train_y.size or train_y.size == 0:
            raise InputError("training covariates and responses must align and be nonempty")
        if not 1 <= self.k <= train_y.size:
            raise InputError(f"k={self.k} outside [1, {train_y.size}]")
        if self.standardize:
            scale = train_x.std(axis=0)
            scale = np.where(scale > 0, scale, 1.0)
        else:
            scale = np.ones(train_x.shape[1])
        for arr in (train_x, train_y, scale):
            arr.setflags(write=False)
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "train_x", train_x)
        object.__setattr__(self, "train_y", train_y)
        object.__setattr__(self, "scale", scale)

    @property
    def n(self) -> int:
        return self.train_y.size

    @property
    def d(self) -> int:
        return self.train_x.shape[1]


def knn_fit(train_x, train_y, k: int, standardize: bool = False) -> KnnModel:
    return KnnModel(k, train_x, train_y, standardize)


def knn_neighbor_responses(model: KnnModel, Xq, kmax: int = None) -> np.ndarray:
    """Responses of the kmax nearest training points per query, closest first.

    Distance ties break by lowest training index (stable argsort).
    """
    kmax = model.k if kmax is None else int(kmax)
    Xq = np.atleast_2d(np.asarray(Xq, dtype=np.float64))
    if Xq.shape[1] != model.d:
        raise InputError(f"covariate dimension {Xq.shape[1]} != model dimension {model.d}")
    a = Xq / model.scale
    b = model.train_x / model.scale
    d2 = np.sum(a * a, axis=1)[:, None] - 2.0 * a @ b.T + np.sum(b * b, axis=1)[None, :]
    order = np.argsort(d2, axis=1, kind="stable")  # stable = lowest index on ties
    return model.train_y[order[:, :kmax]]


def knn_predict(model: KnnModel, x) -> WeightedEmpirical:
    """Uniform empirical distribution over the k nearest responses."""
    responses = knn_neighbor_responses(model, np.asarray(x, dtype=np.float64).reshape(1, -1))
    return WeightedEmpirical(responses[0], np.full(model.k, 1.0 / model.k))


def subgauss_proxy(train_y) -> float:
    """Sub-Gaussian parameter of KNN/DRF predictive moments: max_i |Y_i|."""
    train_y = np.asarray(train_y, dtype=np.float64).ravel()
    if train_y.size == 0:
        raise InputError("empty response vector")
    return float(np.max(np.abs(train_y)))
