"""Recovery of semi-labeled weighted trees from distance oracles."""

from .errors import (
    EstimateDegenerate,
    InfiniteDistance,
    InvalidCorrelation,
    InvalidDelta,
    InvalidTreeError,
    LatreeError,
    NewickParseError,
    NoiseTooLarge,
    NotATreeMetric,
    RoundBudgetExceeded,
    SingularMarginal,
    StoreConflictError,
    UnknownNodeError,
)
from .models import (
    CorrelationTree,
    SampleMatrix,
    empirical_kendall,
    median_of_means,
    mom_block_count,
    required_sample_size,
    sample_gaussian,
    sample_ising,
    sample_oracle,
    streamed_sample_oracle,
)
from .newick import parse, serialize
from .noisy import (
    NoisyConfig,
    basic_noisy,
    explode_noisy,
    perturbation_bound,
    recover_noisy,
)
from .oracle import (
    DistanceOracle,
    ExactOracle,
    MatrixOracle,
    NoiseBudget,
    NoisyOracle,
    corr_to_distance,
    exact_oracle,
    gmm_tau,
    kendall_to_distance,
    linear_tau,
    matrix_oracle,
    noisy_oracle,
)
from .recovery import (
    Bag,
    LatentRecord,
    RecoveryStats,
    Skeleton,
    assemble,
    basic,
    bigsplit,
    explode,
    recover,
    small_bag_reconstruct,
)
from .tree import (
    DistanceMatrix,
    FourPointResult,
    NodeId,
    SemiLabeledTree,
    check_four_point,
    matrix_from_csv,
    matrix_to_csv,
    random_tree,
    trees_isomorphic,
)

__version__ = "0.1.0"

__all__ = [
    "Bag",
    "CorrelationTree",
    "DistanceMatrix",
    "DistanceOracle",
    "EstimateDegenerate",
    "ExactOracle",
    "FourPointResult",
    "InfiniteDistance",
    "InvalidCorrelation",
    "InvalidDelta",
    "InvalidTreeError",
    "LatentRecord",
    "LatreeError",
    "MatrixOracle",
    "NewickParseError",
    "NodeId",
    "NoiseBudget",
    "NoiseTooLarge",
    "NoisyConfig",
    "NoisyOracle",
    "NotATreeMetric",
    "RecoveryStats",
    "RoundBudgetExceeded",
    "SampleMatrix",
    "SemiLabeledTree",
    "SingularMarginal",
    "Skeleton",
    "StoreConflictError",
    "UnknownNodeError",
    "assemble",
    "basic",
    "basic_noisy",
    "bigsplit",
    "check_four_point",
    "corr_to_distance",
    "empirical_kendall",
    "exact_oracle",
    "explode",
    "explode_noisy",
    "gmm_tau",
    "kendall_to_distance",
    "linear_tau",
    "matrix_from_csv",
    "matrix_oracle",
    "matrix_to_csv",
    "median_of_means",
    "mom_block_count",
    "noisy_oracle",
    "parse",
    "perturbation_bound",
    "random_tree",
    "recover",
    "recover_noisy",
    "required_sample_size",
    "sample_gaussian",
    "sample_ising",
    "sample_oracle",
    "serialize",
    "small_bag_reconstruct",
    "streamed_sample_oracle",
    "trees_isomorphic",
]
