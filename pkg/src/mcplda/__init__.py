"""Semi-supervised linear discriminant analysis by maximum contrastive
pessimistic likelihood (MCPL), with baselines and a benchmark harness."""

from .baselines import fit_constrained, fit_optimal, fit_self_training
from .dataset import (
    LabeledDataset,
    Preprocessor,
    PreprocessModel,
    RawDataset,
    SplitSpec,
    UnlabeledSet,
    apply_preprocess,
    fit_preprocess,
    load_csv,
    split,
)
from .estimators import ConstrainedLDA, MCPLDA, SelfTrainingLDA, SupervisedLDA
from .harness import aggregate, permutation_test, run_benchmark, run_repetition
from .lda import (
    IllPosedError,
    LdaModel,
    WellPosedness,
    classify,
    error_rate,
    fit_supervised,
    fit_weighted,
    joint_log_density,
    joint_log_densities,
    log_likelihood,
    posteriors,
)
from .mcpl import (
    SolverConfig,
    SolveResult,
    contrastive_likelihood,
    pessimistic_gain,
    project_simplex,
    q_gradient,
    solve,
)

__version__ = "0.1.0"
