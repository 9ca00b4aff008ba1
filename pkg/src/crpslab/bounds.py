"""Concentration-bound calculators and their Monte-Carlo coverage harness.

The calculators evaluate the closed-form high-probability and expectation
bounds for the estimation error of CRPS empirical-risk minimization and for
the regret of validation-based model selection and convex aggregation,
together with the heavy-tail rate exponents. The coverage harness replays
the fit/select/aggregate pipeline on synthetic truths with analytically
derived sub-Gaussian and Lipschitz constants and reports how often the
measured error stays below the bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .distributions import GaussianLS, point_mass
from .errors import ConfigError, InputError
from .models import KnnModel, ParamBox, softplus
from .optim import OptimizerConfig
from .rng import generator

# max over u of d sqrt(softplus(u)) / du = sigmoid(u) / (2 sqrt(softplus(u)));
# the numerical maximum is ~0.3191 near u ~ 0.95, padded up for safety.
_SOFTPLUS_SCALE_LIP = 0.32
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class BoundInputs:
    """Inputs for the bound calculators; only the fields a theorem needs are read."""

    n: int = None
    N: int = None
    K: int = None
    M: int = None
    delta: float = None
    beta1: float = None
    beta2: float = None
    beta_n: float = None
    L: float = 0.0
    R: float = 0.0
    p: float = None
    D: float = None
    D_n: float = None


@dataclass(frozen=True)
class BoundValue:
    """A bound together with its sample-size validity flag."""

    value: float
    valid: bool
    condition: str


def _require(b: BoundInputs, names):
    for name in names:
        if getattr(b, name) is None:
            raise InputError(f"bound requires input {name!r}")


def _check_delta(delta):
    if not 0.0 < delta < 1.0:
        raise InputError(f"delta must lie in (0, 1), got {delta!r}")


def _log_2nK_over_delta(n, K, delta=None):
    out = math.log(2.0) + K * math.log(n)
    if delta is not None:
        out -= math.log(delta)
    return out


def bound_estimation(b: BoundInputs) -> BoundValue:
    """High-probability estimation-error bound sqrt(c_b log(2 n^K / delta) / n).

    c_b = 64 (beta1^2 + beta2^2); holds with probability >= 1 - delta
    provided n log(2 n^K / delta) >= (48 L R)^2 / c_b.
    """
    _require(b, ("n", "K", "delta", "beta1", "beta2"))
    _check_delta(b.delta)
    if b.n < 1 or b.K < 1:
        raise InputError("need n >= 1 and K >= 1")
    c_beta = 64.0 * (b.beta1**2 + b.beta2**2)
    log_term = _log_2nK_over_delta(b.n, b.K, b.delta)
    threshold = (48.0 * b.L * b.R) ** 2 / c_beta
    return BoundValue(
        value=math.sqrt(c_beta * log_term / b.n),
        valid=b.n * log_term >= threshold,
        condition=f"n log(2 n^K / delta) >= (48 L R)^2 / c_beta = {threshold:.6g}",
    )


def bound_estimation_expect(b: BoundInputs) -> BoundValue:
    """Expected estimation-error bound 2 sqrt(c_b log(2 n^K) / n)."""
    _require(b, ("n", "K", "beta1", "beta2"))
    if b.n < 1 or b.K < 1:
        raise InputError("need n >= 1 and K >= 1")
    c_beta = 64.0 * (b.beta1**2 + b.beta2**2)
    log_term = _log_2nK_over_delta(b.n, b.K)
    threshold = (48.0 * b.L * b.R) ** 2 / c_beta
    return BoundValue(
        value=2.0 * math.sqrt(c_beta * log_term / b.n),
        valid=b.n * log_term >= threshold,
        condition=f"n log(2 n^K) >= (48 L R)^2 / c_beta = {threshold:.6g}",
    )


def bound_selection_regret(b: BoundInputs) -> BoundValue:
    """High-probability selection-regret bound 4 sqrt(c_n log(2M/delta) / N)."""
    _require(b, ("N", "M", "delta", "beta1", "beta_n"))
    _check_delta(b.delta)
    if b.N < 1 or b.M < 1:
        raise InputError("need N >= 1 and M >= 1")
    c_n = b.beta1**2 + b.beta_n**2
    value = 4.0 * math.sqrt(c_n * math.log(2.0 * b.M / b.delta) / b.N)
    return BoundValue(value=value, valid=True, condition="no sample-size condition")


def bound_selection_regret_expect(b: BoundInputs) -> BoundValue:
    """Expected selection-regret bound 8 sqrt(c_n log(2M) / N)."""
    _require(b, ("N", "M", "beta1", "beta_n"))
    if b.N < 1 or b.M < 1:
        raise InputError("need N >= 1 and M >= 1")
    c_n = b.beta1**2 + b.beta_n**2
    value = 8.0 * math.sqrt(c_n * math.log(2.0 * b.M) / b.N)
    return BoundValue(value=value, valid=True, condition="no sample-size condition")


def bound_aggregation_regret(b: BoundInputs) -> BoundValue:
    """High-probability aggregation-regret bound 8 sqrt(c_n log(2 N^M / delta) / N).

    Valid provided N log(2 N^M / delta) >= 48^2 / c_n.
    """
    _require(b, ("N", "M", "delta", "beta1", "beta_n"))
    _check_delta(b.delta)
    if b.N < 1 or b.M < 1:
        raise InputError("need N >= 1 and M >= 1")
    c_n = b.beta1**2 + b.beta_n**2
    log_term = _log_2nK_over_delta(b.N, b.M, b.delta)
    threshold = 48.0**2 / c_n
    return BoundValue(
        value=8.0 * math.sqrt(c_n * log_term / b.N),
        valid=b.N * log_term >= threshold,
        condition=f"N log(2 N^M / delta) >= 48^2 / c_n = {threshold:.6g}",
    )


def bound_aggregation_regret_expect(b: BoundInputs) -> BoundValue:
    """Expected aggregation-regret bound 2 sqrt(c_n log(2 N^M) / N)."""
    _require(b, ("N", "M", "beta1", "beta_n"))
    if b.N < 1 or b.M < 1:
        raise InputError("need N >= 1 and M >= 1")
    c_n = b.beta1**2 + b.beta_n**2
    log_term = _log_2nK_over_delta(b.N, b.M)
    threshold = 48.0**2 / c_n
    return BoundValue(
        value=2.0 * math.sqrt(c_n * log_term / b.N),
        valid=b.N * log_term >= threshold,
        condition=f"N log(2 N^M) >= 48^2 / c_n = {threshold:.6g}",
    )


def rate_exponent_heavy_tail(p: float, K: int) -> float:
    """Rate exponent p / (2 (p + K)) of the heavy-tail estimation bound.

    Tends to the parametric exponent 1/2 as p grows; K = 0 is allowed as the
    degenerate edge.
    """
    if p < 2:
        raise InputError("moment order p must be >= 2")
    if K < 0:
        raise InputError("dimension K must be >= 0")
    return p / (2.0 * (p + K))


def bound_selection_moment(b: BoundInputs) -> BoundValue:
    """Heavy-tail selection-regret bound 2 (c'(p) max(D, D_n) M)^(1/p) / sqrt(N).

    The Rosenthal-type constant c'(p) is not pinned down by the theory; the
    value below sets it to 1, so the result is meaningful up to that constant.
    """
    _require(b, ("N", "M", "p", "D"))
    if b.p < 2:
        raise InputError("moment order p must be >= 2")
    d_eff = max(b.D, b.D_n) if b.D_n is not None else b.D
    value = 2.0 * (d_eff * b.M) ** (1.0 / b.p) / math.sqrt(b.N)
    return BoundValue(value=value, valid=True, condition="up to the unspecified constant c'(p); rate N^-1/2")


def bound_aggregation_moment(b: BoundInputs) -> BoundValue:
    """Heavy-tail aggregation-regret bound (L^K max(D, D_n) N^(-p/2))^(1/(p+K)).

    Here K plays the role of the simplex dimension M and L of
    sqrt(M) max_m m1; the leading constant C(p, K) is unspecified and set
    to 1. The rate exponent in N is p / (2 (p + K)).
    """
    _require(b, ("N", "K", "p", "D", "L"))
    if b.p < 2:
        raise InputError("moment order p must be >= 2")
    d_eff = max(b.D, b.D_n) if b.D_n is not None else b.D
    exponent = rate_exponent_heavy_tail(b.p, b.K)
    value = (b.L**b.K * d_eff) ** (1.0 / (b.p + b.K)) * b.N ** (-exponent)
    return BoundValue(
        value=value,
        valid=True,
        condition=f"up to the unspecified constant C(p, K); rate N^-{exponent:.6g}",
    )


# ---------------------------------------------------------------------------
# Synthetic truths with closed-form conditional distributions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticGenerator:
    """Heteroscedastic Gaussian truth Y = m*(X) + s*(X) eps, X uniform on [0,1]^d.

    kinds:
      linear    m* = a0 + a.x, s*^2 = softplus(b0 + b.x)  (EMOS-realizable)
      sine      m* = amp sin(2 pi x_0), s* = s0 + s1 x_0  (DRN-favoring)
      constant  m* = c, s* = sigma0 (sigma0 = 0 gives a point mass)
    """

    kind: str
    d: int = 1
    a0: float = 2.0
    a: tuple = (3.0,)
    b0: float = -1.0
    b: tuple = (2.0,)
    amp: float = 1.0
    s0: float = 0.1
    s1: float = 0.2
    c: float = 1.0
    sigma0: float = 0.0

    def __post_init__(self):
        if self.kind not in ("linear", "sine", "constant"):
            raise ConfigError(f"unknown generator kind {self.kind!r}")

    def sample_x(self, n: int, rng) -> np.ndarray:
        return rng.uniform(0.0, 1.0, size=(n, self.d))

    def location_scale(self, X) -> tuple[np.ndarray, np.ndarray]:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.kind == "linear":
            m = self.a0 + X @ np.asarray(self.a)
            s = np.sqrt(softplus(self.b0 + X @ np.asarray(self.b)))
        elif self.kind == "sine":
            m = self.amp * np.sin(2.0 * math.pi * X[:, 0])
            s = self.s0 + self.s1 * X[:, 0]
        else:
            m = np.full(X.shape[0], self.c)
            s = np.full(X.shape[0], self.sigma0)
        return m, s

    def sample_xy(self, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
        X = self.sample_x(n, rng)
        m, s = self.location_scale(X)
        return X, m + s * rng.standard_normal(n)

    def sample_dataset(self, n: int, rng) -> Dataset:
        X, Y = self.sample_xy(n, rng)
        return Dataset(X, Y, tuple(f"x{i}" for i in range(self.d)), source=f"synthetic:{self.kind}")

    def truth_at(self, x):
        m, s = self.location_scale(np.asarray(x, dtype=np.float64).reshape(1, -1))
        if s[0] == 0.0:
            return point_mass(float(m[0]))
        return GaussianLS(float(m[0]), float(s[0]))

    def sub_gaussian_beta1(self) -> float:
        """Valid (conservative) sub-Gaussian parameter of Y.

        m*(X) has bounded range [lo, hi] so is (hi-lo)/2-sub-Gaussian; the
        noise term is smax-sub-Gaussian conditionally; their sum is
        sqrt(2 (b_m^2 + b_s^2))-sub-Gaussian.
        """
        if self.kind == "linear":
            a = np.asarray(self.a)
            lo = self.a0 + np.sum(np.minimum(a, 0.0))
            hi = self.a0 + np.sum(np.maximum(a, 0.0))
            b_arg = np.asarray(self.b)
            smax = math.sqrt(float(softplus(self.b0 + np.sum(np.maximum(b_arg, 0.0)))))
        elif self.kind == "sine":
            lo, hi = -abs(self.amp), abs(self.amp)
            smax = self.s0 + max(self.s1, 0.0)
        else:
            lo = hi = self.c
            smax = self.sigma0
        b_m = 0.5 * (hi - lo)
        return math.sqrt(2.0 * (b_m**2 + smax**2))


def synthetic_generator(spec) -> SyntheticGenerator:
    """Build a generator from a preset name or an explicit field dict."""
    if isinstance(spec, SyntheticGenerator):
        return spec
    if isinstance(spec, str):
        presets = {
            "linear": dict(kind="linear"),
            "sine": dict(kind="sine"),
            "constant": dict(kind="constant", c=1.0, sigma0=0.0),
        }
        if spec not in presets:
            raise ConfigError(f"unknown generator preset {spec!r}; choose from {sorted(presets)}")
        return SyntheticGenerator(**presets[spec])
    if isinstance(spec, dict):
        return SyntheticGenerator(**spec)
    raise ConfigError("generator spec must be a name, dict, or SyntheticGenerator")


# ---------------------------------------------------------------------------
# Scenario presets with analytically derived constants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EstimationScenario:
    """EMOS-realizable linear truth with a tight box around the true parameters.

    The fitting box is theta* +- half_width per coordinate. On it, with
    x in [0,1]^d:
      location range  |m| <= |alpha|_max + sum |beta|_max
      scale range     sigma <= sqrt(softplus(max scale argument))
      m1(F_theta,x) <= |m|_max + sigma_max sqrt(2/pi), a bounded variable,
      giving beta2 = range/2; W1 is Lipschitz in theta with
      L = sqrt(1+d) sqrt(1 + (0.32 sqrt(2/pi))^2) (0.32 bounds the softplus
      scale derivative), and R is the box circumradius.
    """

    generator: SyntheticGenerator
    box: ParamBox
    half_width: float

    @classmethod
    def default(cls, half_width: float = 2.0) -> "EstimationScenario":
        gen = synthetic_generator("linear")
        theta_star = np.concatenate([[gen.a0], gen.a, [gen.b0], gen.b])
        box = ParamBox.centered(theta_star, half_width)
        return cls(gen, box, half_width)

    @property
    def K(self) -> int:
        return self.box.dim

    def constants(self) -> BoundInputs:
        gen = self.generator
        d = gen.d
        lo, up = self.box.lower, self.box.upper
        loc_max = max(abs(lo[0]), abs(up[0])) + float(np.sum(np.maximum(np.abs(lo[1 : 1 + d]), np.abs(up[1 : 1 + d]))))
        scale_arg_max = up[1 + d] + float(np.sum(np.maximum(up[2 + d :], 0.0)))
        sigma_max = math.sqrt(float(softplus(scale_arg_max)))
        m1_max = loc_max + sigma_max * _SQRT_2_OVER_PI
        beta2 = 0.5 * m1_max
        lip = math.sqrt(1.0 + d) * math.sqrt(1.0 + (_SOFTPLUS_SCALE_LIP * _SQRT_2_OVER_PI) ** 2)
        return BoundInputs(
            K=self.K,
            beta1=gen.sub_gaussian_beta1(),
            beta2=beta2,
            L=lip,
            R=self.box.circumradius,
        )


@dataclass(frozen=True)
class SelectionScenario:
    """Two KNN candidates on the sine truth; beta_n = max |Y_i| per repetition."""

    generator: SyntheticGenerator
    n_train: int = 300
    candidate_ks: tuple = (4, 40)

    @classmethod
    def default(cls) -> "SelectionScenario":
        return cls(synthetic_generator("sine"))


# ---------------------------------------------------------------------------
# Coverage experiment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoverageConfig:
    scenario: str  # estimation | selection | aggregation
    reps: int = 100
    grid: tuple = None  # n grid (estimation) or N grid (selection/aggregation)
    delta: float = 0.1
    seed: int = 0
    n_mc: int = 4000
    x_mc: int = 4096
    oracle_factor: int = 50
    grid_step: float = 0.02


@dataclass
class CoverageReport:
    scenario: str
    delta: float
    reps: int
    grid: tuple
    values: list  # per grid point: array of per-rep measured errors/regrets
    bound_values: list
    bound_valid: list
    coverage: list
    medians: list
    slope: float
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "delta": self.delta,
            "reps": self.reps,
            "grid": list(self.grid),
            "per_rep_values": [np.asarray(v).tolist() for v in self.values],
            "bound_values": list(self.bound_values),
            "bound_valid": list(self.bound_valid),
            "coverage": list(self.coverage),
            "medians": list(self.medians),
            "median_loglog_slope": self.slope,
            **self.extras,
        }


def _loglog_slope(grid, medians):
    grid = np.asarray(grid, dtype=np.float64)
    medians = np.asarray(medians, dtype=np.float64)
    ok = medians > 0
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(grid[ok]), np.log(medians[ok]), 1)[0])


def estimation_error_study(
    n_grid=(250, 1000, 4000),
    reps: int = 20,
    seed: int = 0,
    scenario: EstimationScenario = None,
    x_mc: int = 4096,
    oracle_factor: int = 50,
    opt: OptimizerConfig = OptimizerConfig(),
):
    """Estimation errors of EMOS ERM across sample sizes on the linear truth.

    The unreachable inf over the box is replaced by an oracle fit on an
    independent sample of size oracle_factor * max(n_grid); each repetition
    reports excess(theta_hat) - excess(theta_oracle), both computed by exact
    Gaussian divergence over a shared X sample (common random numbers).
    Returns (per-grid-point error arrays, parameter distances, oracle fit).
    """
    from .risk import excess_risk_exact, fit_emos

    scenario = scenario or EstimationScenario.default()
    gen = scenario.generator
    if min(n_grid) < scenario.K:
        raise ConfigError(f"grid point {min(n_grid)} below parameter dimension {scenario.K}")
    oracle_ds = gen.sample_dataset(oracle_factor * max(n_grid), generator(seed, "cov-oracle"))
    oracle_fit = fit_emos(oracle_ds, box=scenario.box, opt=opt, seed=seed)
    oracle_excess = excess_risk_exact(oracle_fit.params, gen, x_mc=x_mc, seed=seed)
    errors = []
    param_dists = []
    theta_orc = oracle_fit.params.to_vector()
    for n in n_grid:
        errs = np.empty(reps)
        dists = np.empty(reps)
        for r in range(reps):
            ds = gen.sample_dataset(n, generator(seed, "cov-est", n, r))
            fit = fit_emos(ds, box=scenario.box, opt=opt, seed=seed + r)
            errs[r] = excess_risk_exact(fit.params, gen, x_mc=x_mc, seed=seed) - oracle_excess
            dists[r] = float(np.linalg.norm(fit.params.to_vector() - theta_orc))
        errors.append(errs)
        param_dists.append(dists)
    return errors, param_dists, oracle_fit


def _coverage_estimation(cfg: CoverageConfig) -> CoverageReport:
    scenario = EstimationScenario.default()
    grid = tuple(cfg.grid or (250, 1000, 4000))
    errors, param_dists, _ = estimation_error_study(
        n_grid=grid,
        reps=cfg.reps,
        seed=cfg.seed,
        scenario=scenario,
        x_mc=cfg.x_mc,
        oracle_factor=cfg.oracle_factor,
    )
    consts = scenario.constants()
    bounds, valid, coverage, medians = [], [], [], []
    for n, errs in zip(grid, errors):
        bv = bound_estimation(
            BoundInputs(
                n=n,
                K=consts.K,
                delta=cfg.delta,
                beta1=consts.beta1,
                beta2=consts.beta2,
                L=consts.L,
                R=consts.R,
            )
        )
        bounds.append(bv.value)
        valid.append(bv.valid)
        coverage.append(float(np.mean(errs <= bv.value)))
        medians.append(float(np.median(errs)))
    extras = {
        "median_param_distance": [float(np.median(d)) for d in param_dists],
        "param_distance_loglog_slope": _loglog_slope(grid, [np.median(d) for d in param_dists]),
        "constants": {
            "beta1": consts.beta1,
            "beta2": consts.beta2,
            "L": consts.L,
            "R": consts.R,
            "K": consts.K,
        },
    }
    return CoverageReport(
        "estimation", cfg.delta, cfg.reps, grid, errors, bounds, valid, coverage, medians,
        _loglog_slope(grid, medians), extras,
    )


def _selection_candidates(scenario: SelectionScenario, ds: Dataset):
    from .ensemble import CandidateSet

    models, names = [], []
    for k in scenario.candidate_ks:
        models.append(KnnModel(min(k, ds.n), ds.X, ds.Y))
        names.append(f"knn{k}")
    return CandidateSet(tuple(names), tuple(models))


def _coverage_regret(cfg: CoverageConfig, aggregated: bool) -> CoverageReport:
    from .ensemble import regret_aggregation, regret_selection

    scenario = SelectionScenario.default()
    gen = scenario.generator
    beta1 = gen.sub_gaussian_beta1()
    grid = tuple(cfg.grid or (1000,))
    values, bounds, valid, coverage, medians = [], [], [], [], []
    lipschitz_l1, lipschitz_l2 = [], []
    for N in grid:
        regrets = np.empty(cfg.reps)
        bound_per_rep = np.empty(cfg.reps)
        valid_all = True
        for r in range(cfg.reps):
            train = gen.sample_dataset(scenario.n_train, generator(cfg.seed, "cov-train", N, r))
            cands = _selection_candidates(scenario, train)
            val = gen.sample_dataset(N, generator(cfg.seed, "cov-val", N, r))
            beta_n = float(np.max(np.abs(train.Y)))
            if aggregated:
                # the simplex Lipschitz constant of the mixture map: the l1 form
                # is max_m m1, the Euclidean form carries the extra sqrt(M)
                m1_max = float(np.max(np.abs(train.Y)))
                lipschitz_l1.append(m1_max)
                lipschitz_l2.append(math.sqrt(cands.M) * m1_max)
            inputs = BoundInputs(N=N, M=cands.M, delta=cfg.delta, beta1=beta1, beta_n=beta_n)
            if aggregated:
                regrets[r] = regret_aggregation(
                    cands, gen, val, grid_step=cfg.grid_step, n_mc=cfg.n_mc, seed=cfg.seed + r
                )
                bv = bound_aggregation_regret(inputs)
            else:
                regrets[r] = regret_selection(cands, gen, val, n_mc=cfg.n_mc, seed=cfg.seed + r)
                bv = bound_selection_regret(inputs)
            bound_per_rep[r] = bv.value
            valid_all = valid_all and bv.valid
        values.append(regrets)
        bounds.append(float(np.mean(bound_per_rep)))
        valid.append(valid_all)
        coverage.append(float(np.mean(regrets <= bound_per_rep)))
        medians.append(float(np.median(regrets)))
    name = "aggregation" if aggregated else "selection"
    extras = {}
    if aggregated:
        extras["simplex_lipschitz_l1_mean"] = float(np.mean(lipschitz_l1))
        extras["simplex_lipschitz_euclidean_mean"] = float(np.mean(lipschitz_l2))
    return CoverageReport(
        name, cfg.delta, cfg.reps, grid, values, bounds, valid, coverage, medians,
        _loglog_slope(grid, medians), extras,
    )


def coverage_experiment(cfg: CoverageConfig) -> CoverageReport:
    """Empirical coverage of the concentration bounds on a synthetic scenario."""
    if cfg.reps < 50:
        raise ConfigError("coverage experiments need reps >= 50")
    _check_delta(cfg.delta)
    if cfg.scenario == "estimation":
        return _coverage_estimation(cfg)
    if cfg.scenario == "selection":
        return _coverage_regret(cfg, aggregated=False)
    if cfg.scenario == "aggregation":
        return _coverage_regret(cfg, aggregated=True)
    raise ConfigError(f"unknown scenario {cfg.scenario!r}")
