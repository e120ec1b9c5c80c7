"""Class-grouped LLM imputation for imbalanced tabular data."""

from .analysis import AnalysisResult, analyze
from .association import (
    AssociationMatrix,
    AssociationProfile,
    DegenerateSeriesWarning,
    association_matrix,
    association_profile,
    cramers_v,
    eta_ratio,
    pearson_r,
)
from .backend import BackendConfig, HttpChatClient, complete, mock_impute
from .dataset import (
    ColumnKind,
    ColumnRole,
    ColumnSchema,
    Dataset,
    MissingnessSpec,
    class_partition,
    inject_missingness,
    load_csv,
    load_schema,
    split_complete_incomplete,
    write_csv,
)
from .estimators import CorrelationThresholdSelector, GroupwiseLLMImputer
from .evaluation import EvaluationReport, classification_report, encode, evaluate_imputation
from .forest import ForestConfig, RandomForest
from .orchestrator import ImputationPlan, build_plan, run
from .prompts import PromptConfig, PromptStyle, RenderedPrompt, parse_response, render_grouped, render_ungrouped
from .threshold import PredictorSet, SelectionPolicy, detect_elbow, resolve_policy, select_predictors

__version__ = "0.1.0"

__all__ = [
    "AnalysisResult",
    "AssociationMatrix",
    "AssociationProfile",
    "BackendConfig",
    "ColumnKind",
    "ColumnRole",
    "ColumnSchema",
    "CorrelationThresholdSelector",
    "Dataset",
    "DegenerateSeriesWarning",
    "EvaluationReport",
    "ForestConfig",
    "GroupwiseLLMImputer",
    "HttpChatClient",
    "ImputationPlan",
    "MissingnessSpec",
    "PredictorSet",
    "PromptConfig",
    "PromptStyle",
    "RandomForest",
    "RenderedPrompt",
    "SelectionPolicy",
    "analyze",
    "association_matrix",
    "association_profile",
    "build_plan",
    "class_partition",
    "classification_report",
    "complete",
    "cramers_v",
    "detect_elbow",
    "encode",
    "eta_ratio",
    "evaluate_imputation",
    "inject_missingness",
    "load_csv",
    "load_schema",
    "mock_impute",
    "parse_response",
    "pearson_r",
    "render_grouped",
    "render_ungrouped",
    "resolve_policy",
    "run",
    "select_predictors",
    "split_complete_incomplete",
    "write_csv",
]
