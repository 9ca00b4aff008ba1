"""Predictive distributions on the real line and their CRPS machinery.

Three representations cover everything the toolkit produces: a weighted
empirical distribution (atoms + weights), a Gaussian location-scale
distribution, and a finite convex mixture of the former two. All types are
frozen after construction, so every operation below is a pure function and
thread-safe.

The continuous ranked probability score of a cdf F at an observation y is

    S(F, y) = integral of (1{y <= z} - F(z))^2 dz.

``crps_integral`` evaluates that integral by adaptive quadrature and is the
oracle against which the closed forms (``crps_empirical``,
``crps_gaussian``) are tested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import ConfigError, InputError, NumericalError

_WEIGHT_TOL = 1e-12
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_INV_SQRT_PI = 1.0 / math.sqrt(math.pi)


@dataclass(frozen=True)
class QuadratureConfig:
    """Adaptive-Simpson settings for the integral oracle.

    Gaussian tails are clipped ``tail_sigmas`` standard deviations beyond the
    support; at the default 10 the omitted tail mass contributes below 1e-12.
    """

    abs_tol: float = 1e-9
    tail_sigmas: float = 10.0
    max_depth: int = 48


@dataclass(frozen=True)
class DiscretizationConfig:
    """Quantile-grid resolution used when flattening Gaussian mixture parts."""

    n_quantiles: int = 512


@dataclass(frozen=True)
class WeightedEmpirical:
    """Discrete distribution sum_i w_i * delta(atoms_i) with sorted atoms.

    Construction sorts the atoms, merges exactly-equal atoms by summing their
    weights, and validates that weights are nonnegative and sum to one within
    1e-12. Inputs are copied; instances are immutable.
    """

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=np.float64).ravel()
        weights = np.asarray(self.weights, dtype=np.float64).ravel()
        if atoms.size == 0:
            raise InputError("empirical distribution needs at least one atom")
        if atoms.shape != weights.shape:
            raise InputError("atoms and weights must have equal length")
        if not np.all(np.isfinite(atoms)):
            raise InputError("atoms must be finite")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise InputError("weights must be finite and nonnegative")
        total = float(weights.sum())
        if abs(total - 1.0) > _WEIGHT_TOL:
            raise InputError(f"weights sum to {total!r}, expected 1 within {_WEIGHT_TOL}")
        order = np.argsort(atoms, kind="stable")
        atoms = atoms[order]
        weights = weights[order]
        # merge exactly-equal atoms so the representation is canonical
        if atoms.size > 1 and np.any(atoms[1:] == atoms[:-1]):
            uniq, inverse = np.unique(atoms, return_inverse=True)
            merged = np.zeros_like(uniq)
            np.add.at(merged, inverse, weights)
            atoms, weights = uniq, merged
        atoms.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @property
    def n_atoms(self) -> int:
        return self.atoms.size


@dataclass(frozen=True)
class GaussianLS:
    """Gaussian location-scale distribution with mean ``m`` and sd ``sigma``."""

    m: float
    sigma: float

    def __post_init__(self):
        m = float(self.m)
        sigma = float(self.sigma)
        if not (math.isfinite(m) and math.isfinite(sigma)):
            raise InputError("Gaussian parameters must be finite")
        if sigma <= 0.0:
            raise InputError(f"sigma must be positive, got {sigma!r}")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "sigma", sigma)


@dataclass(frozen=True)
class MixtureSpec:
    """Convex mixture of predictive distributions with simplex weights."""

    components: tuple
    weights: np.ndarray

    def __post_init__(self):
        components = tuple(self.components)
        weights = np.asarray(self.weights, dtype=np.float64).ravel()
        if len(components) == 0:
            raise InputError("mixture needs at least one component")
        if weights.shape != (len(components),):
            raise InputError("one weight per component required")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise InputError("mixture weights must be finite and nonnegative")
        total = float(weights.sum())
        if abs(total - 1.0) > _WEIGHT_TOL:
            raise InputError(f"mixture weights sum to {total!r}, expected 1 within {_WEIGHT_TOL}")
        for c in components:
            if not isinstance(c, (WeightedEmpirical, GaussianLS, MixtureSpec)):
                raise InputError(f"unsupported mixture component {type(c).__name__}")
        weights.setflags(write=False)
        object.__setattr__(self, "components", components)
        object.__setattr__(self, "weights", weights)


PredictiveDistribution = Union[WeightedEmpirical, GaussianLS, MixtureSpec]


def point_mass(y: float) -> WeightedEmpirical:
    """Dirac mass at ``y``."""
    return WeightedEmpirical(np.array([y]), np.array([1.0]))


def cdf(dist: PredictiveDistribution, z) -> np.ndarray:
    """Evaluate the cdf at ``z`` (scalar or array); right-continuous."""
    z = np.asarray(z, dtype=np.float64)
    if isinstance(dist, WeightedEmpirical):
        cum = np.cumsum(dist.weights)
        idx = np.searchsorted(dist.atoms, z, side="right")
        out = np.where(idx > 0, cum[np.minimum(idx, dist.atoms.size) - 1], 0.0)
        return out
    if isinstance(dist, GaussianLS):
        return ndtr((z - dist.m) / dist.sigma)
    if isinstance(dist, MixtureSpec):
        out = np.zeros_like(z, dtype=np.float64)
        for lam, comp in zip(dist.weights, dist.components):
            out += lam * cdf(comp, z)
        return out
    raise InputError(f"unsupported distribution {type(dist).__name__}")


def _breakpoints(dist, tail_sigmas):
    """Jump locations and an interval outside which cdf is within tail mass of {0,1}."""
    if isinstance(dist, WeightedEmpirical):
        return dist.atoms, float(dist.atoms[0]), float(dist.atoms[-1])
    if isinstance(dist, GaussianLS):
        lo = dist.m - tail_sigmas * dist.sigma
        hi = dist.m + tail_sigmas * dist.sigma
        return np.empty(0), lo, hi
    points, los, his = [], [], []
    for comp in dist.components:
        p, lo, hi = _breakpoints(comp, tail_sigmas)
        points.append(p)
        los.append(lo)
        his.append(hi)
    return np.concatenate(points) if points else np.empty(0), min(los), max(his)


def _adaptive_simpson(f, segments, abs_tol, max_depth):
    """Integrate f over the given (a, b) segments, refining where needed.

    Segment right endpoints are evaluated one ulp to the left so that step
    functions (empirical cdfs broken at their atoms) integrate exactly.
    Returns (value, residual_error_estimate).
    """
    a = np.asarray([s[0] for s in segments], dtype=np.float64)
    b = np.asarray([s[1] for s in segments], dtype=np.float64)
    keep = b > a
    a, b = a[keep], b[keep]
    if a.size == 0:
        return 0.0, 0.0
    total_width = float(np.sum(b - a))
    fa = f(a)
    fb = f(np.nextafter(b, -np.inf))
    m = 0.5 * (a + b)
    fm = f(m)
    s1 = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    tol = abs_tol * (b - a) / total_width
    depth = np.zeros(a.size, dtype=np.int64)

    value = 0.0
    residual = 0.0
    while a.size:
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        flm = f(lm)
        frm = f(rm)
        s_left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        s_right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        s2 = s_left + s_right
        err = (s2 - s1) / 15.0
        done = (np.abs(err) <= tol) | (depth >= max_depth)
        value += float(np.sum(s2[done] + err[done]))
        hard = done & (depth >= max_depth) & (np.abs(err) > tol)
        residual += float(np.sum(np.abs(err[hard])))
        split = ~done
        a, m_old, b = a[split], m[split], b[split]
        fa, fm_old, fb = fa[split], fm[split], fb[split]
        lm, rm, flm, frm = lm[split], rm[split], flm[split], frm[split]
        s_left, s_right = s_left[split], s_right[split]
        tol = 0.5 * tol[split]
        depth = depth[split] + 1
        a = np.concatenate([a, m_old])
        b = np.concatenate([m_old, b])
        fa = np.concatenate([fa, fm_old])
        fb = np.concatenate([fm_old, fb])
        m = np.concatenate([lm, rm])
        fm = np.concatenate([flm, frm])
        s1 = np.concatenate([s_left, s_right])
        tol = np.concatenate([tol, tol])
        depth = np.concatenate([depth, depth])
    return value, residual


def _quad_segments(dist, extra_points, quad):
    points, lo, hi = _breakpoints(dist, quad.tail_sigmas)
    pts = np.concatenate([points, np.asarray(extra_points, dtype=np.float64)])
    lo = min(lo, pts.min()) if pts.size else lo
    hi = max(hi, pts.max()) if pts.size else hi
    knots = np.unique(np.concatenate([pts, [lo, hi]]))
    return list(zip(knots[:-1], knots[1:]))


def crps_integral(dist: PredictiveDistribution, y: float, quad: QuadratureConfig = QuadratureConfig()) -> float:
    """CRPS by adaptive quadrature of (1{y<=z} - F(z))^2; the oracle path."""
    y = float(y)
    if not math.isfinite(y):
        raise InputError("observation must be finite")
    segments = _quad_segments(dist, [y], quad)

    def integrand(z):
        return (np.where(z >= y, 1.0, 0.0) - cdf(dist, z)) ** 2

    value, residual = _adaptive_simpson(integrand, segments, quad.abs_tol, quad.max_depth)
    if residual > quad.abs_tol:
        raise NumericalError(
            f"quadrature residual {residual:.3e} exceeds tolerance {quad.abs_tol:.3e}",
            estimate=value,
        )
    return max(value, 0.0)


def crps_empirical(dist: WeightedEmpirical, y: float) -> float:
    """Exact CRPS of a discrete distribution via sorted prefix sums.

    Equals sum_i w_i |y_i - y| - 1/2 sum_{i != j} w_i w_j |y_i - y_j|,
    rearranged to the O(n) form 2 sum_i w_i (y_i - y)(1{y < y_i} - W_i + w_i/2)
    with W_i the cumulative weight through atom i.
    """
    if not isinstance(dist, WeightedEmpirical):
        raise InputError("crps_empirical expects a WeightedEmpirical")
    y = float(y)
    if not math.isfinite(y):
        raise InputError("observation must be finite")
    atoms, weights = dist.atoms, dist.weights
    w_mid = np.cumsum(weights) - 0.5 * weights
    out = 2.0 * np.sum(weights * (atoms - y) * ((y < atoms) - w_mid))
    return max(float(out), 0.0)


def crps_gaussian(dist: GaussianLS, y: float) -> float:
    """Closed-form CRPS of a Gaussian: sigma * [z(2Phi(z)-1) + 2phi(z) - 1/sqrt(pi)]."""
    if not isinstance(dist, GaussianLS):
        raise InputError("crps_gaussian expects a GaussianLS")
    y = float(y)
    if not math.isfinite(y):
        raise InputError("observation must be finite")
    z = (y - dist.m) / dist.sigma
    phi = math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    return dist.sigma * (z * (2.0 * float(ndtr(z)) - 1.0) + 2.0 * phi - _INV_SQRT_PI)


def crps_gaussian_grad(dist: GaussianLS, y: float) -> tuple[float, float]:
    """Gradient of crps_gaussian in (m, sigma): (-(2Phi(z)-1), 2phi(z) - 1/sqrt(pi))."""
    if not isinstance(dist, GaussianLS):
        raise InputError("crps_gaussian_grad expects a GaussianLS")
    y = float(y)
    if not math.isfinite(y):
        raise InputError("observation must be finite")
    z = (y - dist.m) / dist.sigma
    phi = math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    d_m = -(2.0 * float(ndtr(z)) - 1.0)
    d_sigma = 2.0 * phi - _INV_SQRT_PI
    return d_m, d_sigma


def crps(dist: PredictiveDistribution, y: float, disc: DiscretizationConfig = DiscretizationConfig()) -> float:
    """CRPS via the closed form matching the distribution type.

    Mixtures are scored through ``flatten_mixture`` (CRPS is not linear in F,
    so component scores cannot simply be averaged).
    """
    if isinstance(dist, WeightedEmpirical):
        return crps_empirical(dist, y)
    if isinstance(dist, GaussianLS):
        return crps_gaussian(dist, y)
    if isinstance(dist, MixtureSpec):
        return crps_empirical(flatten_mixture(dist, disc), y)
    raise InputError(f"unsupported distribution {type(dist).__name__}")


def _folded_normal_mean(mu: float, tau: float) -> float:
    """E|N(mu, tau^2)| for tau >= 0."""
    if tau == 0.0:
        return abs(mu)
    r = mu / tau
    return tau * _SQRT_2_OVER_PI * math.exp(-0.5 * r * r) + mu * (2.0 * float(ndtr(r)) - 1.0)


def first_abs_moment(dist: PredictiveDistribution) -> float:
    """First absolute moment m1(F) = integral |y| dF(y); equals W1(F, delta_0)."""
    if isinstance(dist, WeightedEmpirical):
        return float(np.sum(dist.weights * np.abs(dist.atoms)))
    if isinstance(dist, GaussianLS):
        return _folded_normal_mean(dist.m, dist.sigma)
    if isinstance(dist, MixtureSpec):
        return float(sum(lam * first_abs_moment(c) for lam, c in zip(dist.weights, dist.components)))
    raise InputError(f"unsupported distribution {type(dist).__name__}")


def _w1_empirical_pair(f: WeightedEmpirical, g: WeightedEmpirical) -> float:
    grid = np.union1d(f.atoms, g.atoms)
    if grid.size < 2:
        return 0.0
    diff = np.abs(cdf(f, grid[:-1]) - cdf(g, grid[:-1]))
    return float(np.sum(diff * np.diff(grid)))


def w1_distance(f: PredictiveDistribution, g: PredictiveDistribution, quad: QuadratureConfig = QuadratureConfig()) -> float:
    """Wasserstein-1 distance: the L1 distance between the two cdfs."""
    if isinstance(f, WeightedEmpirical) and isinstance(g, WeightedEmpirical):
        return _w1_empirical_pair(f, g)
    if isinstance(f, GaussianLS) and isinstance(g, GaussianLS):
        # comonotone coupling: W1 = E|dm + dsigma * Z|
        return _folded_normal_mean(f.m - g.m, abs(f.sigma - g.sigma))
    segments = _quad_segments_pair(f, g, quad)

    def integrand(z):
        return np.abs(cdf(f, z) - cdf(g, z))

    value, residual = _adaptive_simpson(integrand, segments, quad.abs_tol, quad.max_depth)
    if residual > quad.abs_tol:
        raise NumericalError(
            f"quadrature residual {residual:.3e} exceeds tolerance {quad.abs_tol:.3e}",
            estimate=value,
        )
    return max(value, 0.0)


def _quad_segments_pair(f, g, quad):
    pf, lof, hif = _breakpoints(f, quad.tail_sigmas)
    pg, log_, hig = _breakpoints(g, quad.tail_sigmas)
    lo = min(lof, log_)
    hi = max(hif, hig)
    knots = np.unique(np.concatenate([pf, pg, [lo, hi]]))
    return list(zip(knots[:-1], knots[1:]))


def _gaussian_divergence(m1, s1, m2, s2):
    """Exact integral of (Phi_1 - Phi_2)^2 for two Gaussian cdfs (vectorized).

    From the divergence identity: Sbar(F,G) - Sbar(G,G)
    = E|N(m1-m2, s1^2+s2^2)| - s1/sqrt(pi) - s2/sqrt(pi).
    """
    m1, s1, m2, s2 = (np.asarray(v, dtype=np.float64) for v in (m1, s1, m2, s2))
    tau = np.sqrt(s1 * s1 + s2 * s2)
    mu = m1 - m2
    r = np.divide(mu, tau, out=np.zeros_like(tau), where=tau > 0)
    folded = tau * _SQRT_2_OVER_PI * np.exp(-0.5 * r * r) + mu * (2.0 * ndtr(r) - 1.0)
    return np.maximum(folded - (s1 + s2) * _INV_SQRT_PI, 0.0)


def cdf_l2_divergence(f: PredictiveDistribution, g: PredictiveDistribution, quad: QuadratureConfig = QuadratureConfig()) -> float:
    """Integral of (F(z) - G(z))^2 dz; zero iff the distributions coincide.

    This is the excess-risk integrand of the CRPS: the mean score of F under
    truth G exceeds the score of G itself by exactly this quantity.
    """
    if isinstance(f, WeightedEmpirical) and isinstance(g, WeightedEmpirical):
        grid = np.union1d(f.atoms, g.atoms)
        if grid.size < 2:
            return 0.0
        diff = cdf(f, grid[:-1]) - cdf(g, grid[:-1])
        return float(np.sum(diff * diff * np.diff(grid)))
    if isinstance(f, GaussianLS) and isinstance(g, GaussianLS):
        return float(_gaussian_divergence(f.m, f.sigma, g.m, g.sigma))
    segments = _quad_segments_pair(f, g, quad)

    def integrand(z):
        d = cdf(f, z) - cdf(g, z)
        return d * d

    value, residual = _adaptive_simpson(integrand, segments, quad.abs_tol, quad.max_depth)
    if residual > quad.abs_tol:
        raise NumericalError(
            f"quadrature residual {residual:.3e} exceeds tolerance {quad.abs_tol:.3e}",
            estimate=value,
        )
    return max(value, 0.0)


def flatten_mixture(mix: MixtureSpec, disc: DiscretizationConfig = DiscretizationConfig()) -> WeightedEmpirical:
    """Collapse a mixture to a single WeightedEmpirical.

    Empirical components keep their atoms with weights scaled by the mixture
    weight; Gaussian components are discretized at ``n_quantiles`` midpoint
    quantile levels; nested mixtures flatten recursively. The result is
    sorted, tie-merged and renormalized.
    """
    if not isinstance(mix, MixtureSpec):
        raise InputError("flatten_mixture expects a MixtureSpec")
    if disc.n_quantiles < 1:
        raise ConfigError("n_quantiles must be >= 1")
    atoms, weights = [], []
    levels = (np.arange(disc.n_quantiles) + 0.5) / disc.n_quantiles
    probes = ndtri(levels)

    def emit(component, lam):
        if lam == 0.0:
            return
        if isinstance(component, WeightedEmpirical):
            atoms.append(component.atoms)
            weights.append(lam * component.weights)
        elif isinstance(component, GaussianLS):
            atoms.append(component.m + component.sigma * probes)
            weights.append(np.full(disc.n_quantiles, lam / disc.n_quantiles))
        elif isinstance(component, MixtureSpec):
            for sub_lam, sub in zip(component.weights, component.components):
                emit(sub, lam * float(sub_lam))
        else:
            raise InputError(f"unsupported mixture component {type(component).__name__}")

    for lam, comp in zip(mix.weights, mix.components):
        emit(comp, float(lam))
    all_atoms = np.concatenate(atoms)
    all_weights = np.concatenate(weights)
    all_weights = all_weights / all_weights.sum()
    return WeightedEmpirical(all_atoms, all_weights)
