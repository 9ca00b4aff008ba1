"""crpslab: distributional regression by CRPS minimization.

Fits, selects and convexly aggregates predictive-distribution models
(EMOS, DRN, distributional KNN, distributional random forests) by
minimizing the continuous ranked probability score, and verifies the
matching concentration bounds on synthetic scenarios.
"""

from ._version import __version__
from .bounds import (
    BoundInputs,
    BoundValue,
    CoverageConfig,
    CoverageReport,
    SyntheticGenerator,
    bound_aggregation_regret,
    bound_aggregation_regret_expect,
    bound_estimation,
    bound_estimation_expect,
    bound_selection_regret,
    bound_selection_regret_expect,
    coverage_experiment,
    rate_exponent_heavy_tail,
    synthetic_generator,
)
from .data import Dataset, SplitPlan, load_csv, make_splits
from .distributions import (
    DiscretizationConfig,
    GaussianLS,
    MixtureSpec,
    PredictiveDistribution,
    QuadratureConfig,
    WeightedEmpirical,
    cdf,
    cdf_l2_divergence,
    crps,
    crps_empirical,
    crps_gaussian,
    crps_gaussian_grad,
    crps_integral,
    first_abs_moment,
    flatten_mixture,
    point_mass,
    w1_distance,
)
from .drf import DrfHyper, DrfModel, drf_fit, drf_predict, drf_weights
from .ensemble import (
    AggregationResult,
    CandidateSet,
    aggregate_convex,
    regret_aggregation,
    regret_selection,
    select_model,
    validation_risks,
)
from .errors import CapabilityError, ConfigError, InputError, NumericalError
from .models import (
    DrnParams,
    EmosParams,
    KnnModel,
    ParamBox,
    drn_grad,
    drn_predict,
    emos_predict,
    knn_fit,
    knn_predict,
    subgauss_proxy,
)
from .optim import OptimizerConfig
from .pipeline import BenchConfig, ExperimentReport, emit_report, run_benchmark, sweep_drf, sweep_knn
from .risk import (
    ConstantPredictor,
    FitResult,
    RiskEstimate,
    empirical_risk,
    excess_risk_exact,
    fit_drn,
    fit_emos,
    predict_dist,
    theoretical_risk_mc,
)

__all__ = [name for name in dir() if not name.startswith("_")]
