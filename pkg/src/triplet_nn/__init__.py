"""Nearest-neighbor search from triplet comparisons alone."""

from .baselines import AxisSplitTree, build_baseline, build_kdtree, build_patree, build_rptree, defeatist_query
from .bench import BenchConfig, BenchRow, generate_synthetic, leave_one_out_error, relative_distance_error, run_benchmark
from .comptree import CompTree, SearchReport, StrandedQueryError, build_comptree, leaf_candidates, nn_search, tree_stats
from .kernels import BACKEND
from .metrics import (
    CategoricalDataset,
    DataError,
    GraphDataset,
    OraclePurityError,
    Query,
    Triplet,
    TripletOracle,
    VectorDataset,
    brute_force_nn,
    distance,
    metric_for,
    triplet_query,
)
from .theory import (
    empirical_expansion_rate,
    error_bound,
    estimate_growth_exponent,
    height_bound,
    split_balance_trial,
    unbalanced_split_bound,
)

__version__ = "0.1.0"
