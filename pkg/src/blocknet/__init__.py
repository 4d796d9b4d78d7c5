"""Low-rank logistic network formation models with latent communities.

Estimation pipeline: nuclear-norm penalized logistic fits of the
coefficient matrices, split-sample singular-vector refinement through
row- and column-wise logistic regressions, K-means community recovery
with likelihood-based split selection, singular-value-ratio rank
selection, and post-classification inference for the block matrices.
"""

__version__ = "0.1.0"

from .community import (
    CommunityFit,
    SplitPlan,
    align_labels,
    assign_membership,
    build_embedding,
    kmeans,
    select_split,
    split_loglik,
)
from .core import (
    BlockMatrix,
    CovariateSet,
    LowRankFactors,
    Membership,
    ModelParams,
    Network,
    edge_probability,
    logistic,
    standardize_covariates,
)
from .dgp import DgpConfig, draw_membership, make_additive_theta0, make_block_theta, simulate, zeta_n
from .errors import BlocknetError, ConfigError, DegenerateCovariateError, NumericalError
from .inference import InferenceResult, chi_index, fit_block_logistic, fit_tetrad, tetrad_score
from .metrics import mse_theta, nmi, prop_correct, rand_index
from .nucnorm import AlmConfig, LowRankEstimate, alm_fit, lambda_n, truncated_svd, two_stage_fit
from .pipeline import PipelineConfig, PipelineResult, run_montecarlo, run_pipeline
from .rank import RankConfig, mean_degree_stat, select_rank
from .refine import (
    EmbeddingSet,
    column_regression,
    full_sample_iterate,
    newton_logistic,
    row_regression,
)

__all__ = [
    "__version__",
    "AlmConfig",
    "BlockMatrix",
    "BlocknetError",
    "CommunityFit",
    "ConfigError",
    "CovariateSet",
    "DegenerateCovariateError",
    "DgpConfig",
    "EmbeddingSet",
    "InferenceResult",
    "LowRankEstimate",
    "LowRankFactors",
    "Membership",
    "ModelParams",
    "Network",
    "NumericalError",
    "PipelineConfig",
    "PipelineResult",
    "RankConfig",
    "SplitPlan",
    "align_labels",
    "alm_fit",
    "assign_membership",
    "build_embedding",
    "chi_index",
    "column_regression",
    "draw_membership",
    "edge_probability",
    "fit_block_logistic",
    "fit_tetrad",
    "full_sample_iterate",
    "kmeans",
    "lambda_n",
    "logistic",
    "make_additive_theta0",
    "make_block_theta",
    "mean_degree_stat",
    "mse_theta",
    "newton_logistic",
    "nmi",
    "prop_correct",
    "rand_index",
    "row_regression",
    "run_montecarlo",
    "run_pipeline",
    "select_rank",
    "select_split",
    "simulate",
    "split_loglik",
    "standardize_covariates",
    "tetrad_score",
    "truncated_svd",
    "two_stage_fit",
    "zeta_n",
]
