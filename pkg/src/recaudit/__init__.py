"""recaudit: audits rating-prediction recommenders for accuracy gaps,
miscalibration, and popularity lift across popularity-inclination user
groups, over a seeded cross-validation protocol."""

__version__ = "0.1.0"

from .config import AuditConfig, validate_config
from .corpus import (GenreCatalog, GroupAssignment, PopularityIndex,
                     RatingTable, compute_popularity, dataset_stats,
                     implicit_to_explicit, load_dataset, normalize_playcounts,
                     split_user_groups, write_dataset)
from .engines import (ALGORITHMS, HyperParams, TrainData, TrainedModel, fit,
                      load_model, save_model)
from .errors import (AuditError, ConfigError, DatasetError, EngineError,
                     LoadError, StageError)
from .evaluation import (FoldPlan, GroupMetrics, RecommendationList,
                         aggregate, evaluate_fold, make_folds, top_n)
from .genreprobe import (GenreAttribution, GenrePopularityProfile,
                         attribute_mc, genre_popularity, select_display_genres)
from .metrics import (genre_distribution, mae_user, miscalibration,
                      popularity_lift, precision_recall, welch_t_test)
from .runner import AuditReport, run_audit

__all__ = [
    "__version__",
    "AuditConfig", "validate_config",
    "RatingTable", "GenreCatalog", "PopularityIndex", "GroupAssignment",
    "load_dataset", "write_dataset", "normalize_playcounts",
    "implicit_to_explicit", "compute_popularity", "split_user_groups",
    "dataset_stats",
    "ALGORITHMS", "HyperParams", "TrainData", "TrainedModel", "fit",
    "save_model", "load_model",
    "FoldPlan", "make_folds", "top_n", "RecommendationList", "GroupMetrics",
    "aggregate", "evaluate_fold",
    "mae_user", "precision_recall", "genre_distribution", "miscalibration",
    "popularity_lift", "welch_t_test",
    "GenreAttribution", "GenrePopularityProfile", "attribute_mc",
    "genre_popularity", "select_display_genres",
    "AuditReport", "run_audit",
    "AuditError", "LoadError", "DatasetError", "ConfigError", "EngineError",
    "StageError",
]
