"""Port-scan detection with a from-scratch random forest and a reproducible trial harness."""
__version__ = "0.1.0"

from .dataset import (
    CsvSchema,
    Dataset,
    FlowRecord,
    PreprocessPolicy,
    SplitPlan,
    Technique,
    Tool,
    load_csv,
    preprocess,
    stratified_kfold,
    stratified_split,
    write_csv,
)
from .forest import ForestModel, HyperparamSet, fit, predict, predict_score
from .metrics import (
    BUILTIN_BASELINES,
    compare_to_baselines,
    confusion,
    efficacy,
    group_breakdown,
    paired_ttest,
)
from .scangen import GeneratorConfig, feature_schema, generate_corpus
from .tuning import (
    BUILTIN_SPACES,
    SearchSpace,
    TrialReport,
    enumerate_grid,
    grid_search,
    random_search,
    run_trial,
)

__all__ = [
    "BUILTIN_BASELINES", "BUILTIN_SPACES", "CsvSchema", "Dataset", "FlowRecord", "ForestModel",
    "GeneratorConfig", "HyperparamSet", "PreprocessPolicy", "SearchSpace", "SplitPlan",
    "Technique", "Tool", "TrialReport", "compare_to_baselines", "confusion", "efficacy",
    "enumerate_grid", "feature_schema", "fit", "generate_corpus", "grid_search",
    "group_breakdown", "load_csv", "paired_ttest", "predict", "predict_score", "preprocess",
    "random_search", "run_trial", "stratified_kfold", "stratified_split", "write_csv",
]
