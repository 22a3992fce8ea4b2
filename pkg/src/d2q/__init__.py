"""Duration-deconfounded watch-time prediction.

Quantile-based deconfounding of video duration for watch-time models (d2q,
resd2q) next to value-regression and weighted-logistic baselines (vr, wlr),
with ranking metrics and a synthetic causal world for exact-oracle testing.
"""

from .data import (DataError, Dataset, DatasetSchema, InteractionRecord,
                   load_dataset, save_dataset, split_train_test)
from .grouping import (DurationGroups, GroupingError, assign_group, assign_groups,
                       fit_duration_groups, group_sizes)
from .distribution import (DistributionError, EmpiricalCdf, GroupCdfs, cdf_label,
                           compress_ecdf, fit_ecdf, fit_group_cdfs, inverse_cdf)
from .model import (Batch, ModelConfig, ModelError, NetParams, TrainDivergedError,
                    backward, forward, init_params, loss_mse, loss_weighted_logloss,
                    sigmoid, swish, train)
from .predictors import (KINDS, Predictor, PredictorError, backdoor_estimate,
                         make_d2q_labels, make_wlr_labels, predict, predict_dataset,
                         train_predictor)
from .metrics import (EvalReport, GroupMetrics, MetricsError, duration_bias_report,
                      evaluate_predictions, mae, xauc_exact, xauc_sampled, xgauc)
from .synthgen import (DiscreteToyWorld, GenConfig, GenError, World, generate_world,
                       interest, make_toy_world, sample_logged_interactions,
                       sample_toy_interactions, sample_unbiased_test,
                       true_expected_watch_time)

__version__ = "0.1.0"
