"""Inference under multi-way cluster dependence with heterogeneous clusters."""

from mwclust.clusters import (
    ClusterScheme,
    NeighborhoodIndex,
    WeightedSample,
    build_index,
    pair_weight_sums,
)
from mwclust.variance import (
    VarianceEstimate,
    cgm_demeaned,
    cgm_raw,
    psd_project,
    smallest_eigenvalue,
    weighted_mean,
)
from mwclust.regression import (
    InferenceResult,
    RegressionData,
    SingularDesignError,
    fixed_design_inference,
    fwl_residualize,
    ols_fit,
    stochastic_design_inference,
    theta_inference,
)
from mwclust.diagnostics import (
    DiagnosticsReport,
    assumption_ratios,
    leverage_L,
    rank_condition,
)
from mwclust.dgp import DgpSpec, MomentOracle, generate, structure, true_bias_term
from mwclust.stein import BoundReport, kolmogorov_bound, wasserstein_bound
from mwclust.harness import McReport, ks_statistic, run_consistency, run_coverage

__all__ = [
    "BoundReport",
    "ClusterScheme",
    "DgpSpec",
    "DiagnosticsReport",
    "InferenceResult",
    "McReport",
    "MomentOracle",
    "NeighborhoodIndex",
    "RegressionData",
    "SingularDesignError",
    "VarianceEstimate",
    "WeightedSample",
    "assumption_ratios",
    "build_index",
    "cgm_demeaned",
    "cgm_raw",
    "fixed_design_inference",
    "fwl_residualize",
    "generate",
    "kolmogorov_bound",
    "ks_statistic",
    "leverage_L",
    "ols_fit",
    "pair_weight_sums",
    "psd_project",
    "rank_condition",
    "run_consistency",
    "run_coverage",
    "smallest_eigenvalue",
    "stochastic_design_inference",
    "structure",
    "theta_inference",
    "true_bias_term",
    "wasserstein_bound",
    "weighted_mean",
]
