"""atlas-kit: multilingual scaling-law toolkit.

Fit saturation/transfer-aware loss laws to training-run tables, evaluate them
with a five-axis holdout suite, score language-to-language transfer from
learning curves (completing the grid with a forest estimator), plan model and
data growth when adding languages, and locate pretrain-vs-finetune crossover
points.
"""

from .capacity import (
    CapacityParams,
    FrontierPoint,
    PlanMultipliers,
    baseline_weights,
    compute_optimal_multipliers,
    compute_optimal_weights,
    derive_capacity_observations,
    frontier_sweep,
    isoloss_constraint_residual,
    isoloss_solve,
    marginal_sensitivities,
    multipliers_from_ratios,
    predict_capacity_loss,
)
from .crossover import CrossoverFit, crossover_tokens, decide, fit_crossover_law
from .errors import AtlasKitError, DomainError, FitError, SchemaError
from .fitter import FitConfig, FitResult, fit, fit_capacity, residuals
from .forest import Forest, RegressionTree, cross_validate, rf_train
from .holdout_eval import EvalReport, SplitSpec, evaluate_suite, r_squared, split
from .laws import (
    FittedLaw,
    LawParams,
    LawSpec,
    LossLaw,
    effective_data,
    predict_loss,
    predict_run_loss,
    saturation,
)
from .run_data import (
    CorpusCatalog,
    LearningCurve,
    RunRecord,
    RunSet,
    TokenBreakdown,
    parse_catalog,
    parse_curves,
    parse_runs,
    select_transfer_set,
    serialize_catalog,
    serialize_curves,
    serialize_runs,
    token_accounting,
)
from .synth import SynthDesign, generate_curves, generate_runs
from .transfer import (
    TransferFeatures,
    TransferMatrix,
    bts,
    build_features,
    fas,
    loss_at,
    smooth_non_increasing,
    tokens_to_reach,
    transfer_matrix,
)

__version__ = "0.1.0"
