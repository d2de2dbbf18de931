"""Content-moderation experiments: view-trajectory data, hindsight
regressors, review indices and the review-queue simulator."""

from .data import (TrajectoryDataset, gen_ads, gen_ugc, hawkes_mean, load_dataset, to_csv, split,
                   perturb_pviolating, gamma_percentile, features, future_views, history_tree)
from .regressor import (CappedViewRegressor, GradientBoostedTrees, BinnedLookupRegressor,
                        train_regressor, save_models, load_models)
from .indices import ContentKind, ContentState, content_index, index_table
from .sim import (ContentSimConfig, ContentMetrics, RATIO_GRID, content_sim, sweep, vio_table,
                  reviewer_hour_savings, tune_gamma, GammaTuning)
