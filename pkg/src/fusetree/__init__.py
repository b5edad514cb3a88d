"""Regularization paths of the weighted l1 fusion penalty on group means,
computed as a fusion tree."""

__version__ = "0.1.0"

from .consensus import (adjusted_rand_index, best_ari_over_cuts, consensus,
                        fit_multivariate, meet)
from .cv import (ClusterTestStats, CvReport, LambdaGrid, cross_validate,
                 cv_error_curve_embedded, cv_error_curve_naive, make_grid)
from .errors import (ContractError, DataError, DegenerateGridError, EmptyDataError,
                     FuseTreeError, InfiniteWeightError, InvariantError,
                     MissingGroupError, ParseError, SchemaError, VersionError)
from .model import (Dataset, FoldSplit, GroupStats, group_stats, ingest_csv, read_csv,
                    split_folds, summarize)
from .path import OrderNotGuaranteedWarning, fit_univariate
from .tree import (FusionEvent, FusionTree, Partition, beta_at, cut, cut_k, from_json,
                   parse_newick, to_json, to_newick)
from .weights import WeightScheme, initial_slopes, pairwise_weight

__all__ = [
    "ClusterTestStats", "ContractError", "CvReport", "DataError", "Dataset",
    "DegenerateGridError", "EmptyDataError", "FoldSplit", "FuseTreeError",
    "FusionEvent", "FusionTree", "GroupStats", "InfiniteWeightError", "InvariantError",
    "LambdaGrid", "MissingGroupError", "OrderNotGuaranteedWarning", "ParseError",
    "Partition", "SchemaError", "VersionError", "WeightScheme", "adjusted_rand_index",
    "best_ari_over_cuts", "beta_at", "consensus", "cross_validate",
    "cv_error_curve_embedded", "cv_error_curve_naive", "cut", "cut_k", "fit_multivariate",
    "fit_univariate", "from_json", "group_stats", "ingest_csv", "initial_slopes",
    "make_grid", "meet", "pairwise_weight", "parse_newick", "read_csv", "split_folds",
    "summarize", "to_json", "to_newick",
]
