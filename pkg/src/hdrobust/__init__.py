"""Robust classification toolkit for high-dimension low-sample-size data.

Seven method families (classic and MCD-robust linear discriminants, diagonal
discriminant analysis, four projection-pursuit variants, robust SIMCA and a
random-subspace-learning forest), an epsilon-contaminated Gaussian simulator,
and a replicated average-test-error benchmark harness.
"""

from .dataset import (
    ClassMembership,
    DataError,
    LabeledDataset,
    SplitPlan,
    class_membership,
    load_csv,
    normalize_log_median,
    save_csv,
    split,
    split_indices,
)
from .estimators import (
    LocationScatter,
    McdInfeasibleError,
    RegularizationSpec,
    UnivariateEstimate,
    c_step_refine,
    default_h,
    location_scale,
    mcd_exact,
    mcd_fast,
    pooled_cov,
    regularize,
    sample_mean_cov,
    univariate,
)
from .classifiers import (
    DdaModel,
    DiscriminantModel,
    PPModel,
    SimcaModel,
    SingularCovarianceError,
    dda_fit,
    discriminant_scores,
    lda_fit,
    linda_fit,
    pp_fit,
    pp_predict,
    rsimca_fit,
    rsimca_predict,
)
from .forest import (
    DecisionTree,
    ForestConfig,
    ForestModel,
    TreeConfig,
    forest_predict,
    majority_vote,
    oob_probability,
    rsl_fit,
    tree_fit,
)
from .methods import METHOD_NAMES, MethodConfig, fit_method
from .evaluate import (
    AvteResult,
    BenchmarkReport,
    EvalConfig,
    ReplicationResult,
    apparent_error,
    avte,
    compare,
    zero_one_loss,
)
from .synth import (
    ContaminationSpec,
    CovSpec,
    SimDesign,
    build_cov,
    default_design,
    generate,
    sample_contaminated_class,
    sample_mvn,
)
from .seeds import derive_seed

__version__ = "0.1.0"
