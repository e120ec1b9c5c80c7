"""scikit-learn style wrappers around the analysis and imputation pipeline.

Both estimators accept either a :class:`~impute_forge.dataset.Dataset` or a
pandas DataFrame together with a column schema; DataFrame input yields
DataFrame output.
"""

from __future__ import annotations

import warnings
from typing import Sequence

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .analysis import analyze
from .backend import BackendConfig
from .dataset import ColumnSchema, Dataset, load_schema
from .exceptions import SchemaMismatch
from .orchestrator import build_plan, run
from .prompts import PromptConfig, PromptStyle
from .threshold import PolicyMode, SelectionPolicy


def check_schema(schema) -> tuple[ColumnSchema, ...]:
    if schema is None:
        raise SchemaMismatch("a schema is required for DataFrame input")
    if isinstance(schema, (list, tuple)):
        return tuple(schema)
    return load_schema(schema)


def check_dataset(X, schema=None, y=None) -> Dataset:
    """Coerce ``X`` (and optionally a separate target ``y``) to a Dataset."""
    if isinstance(X, Dataset):
        if y is not None:
            raise ValueError("y must be None when X is a Dataset; the target is a column of X")
        return X
    import pandas as pd

    if not isinstance(X, pd.DataFrame):
        raise TypeError(f"expected Dataset or pandas.DataFrame, got {type(X).__name__}")
    schema = check_schema(schema)
    frame = X
    target = next(c.name for c in schema if c.is_target)
    if y is not None:
        frame = X.assign(**{target: list(y)})
    elif target not in X.columns:
        raise SchemaMismatch(f"target column {target!r} is absent; pass the labels as y")
    frame = frame[[c.name for c in schema]] if set(c.name for c in schema) <= set(frame.columns) else frame
    return Dataset.from_frame(frame.reset_index(drop=True), schema)


def _policy(policy: str, threshold) -> SelectionPolicy:
    mode = PolicyMode(policy)
    if mode is PolicyMode.FIXED:
        if threshold is None:
            raise ValueError("policy='fixed' needs a threshold")
        return SelectionPolicy.fixed(float(threshold))
    if threshold is not None:
        warnings.warn(f"threshold={threshold} is ignored under policy={policy!r}; use policy='fixed'", UserWarning,
                      stacklevel=3)
    return SelectionPolicy(mode)


class CorrelationThresholdSelector(BaseEstimator):
    """Pick, for each imputation feature, the columns associated with it above a threshold.

    Parameters
    ----------
    features : "auto" or list of str, default="auto"
        "auto" selects every feature column that has missing cells.
    policy : {"elbow", "global-min", "fixed"}, default="elbow"
    threshold : float, optional
        Required when ``policy="fixed"``; ignored (with a warning) otherwise.
    schema : sequence of ColumnSchema or path, optional
        Needed for DataFrame input.
    force_target : bool, default=True
        Keep the target in every predictor set.
    missing_token : str, optional
        Count missing categorical cells as this category when measuring
        association.

    Attributes
    ----------
    matrix_, profiles_, elbows_, thresholds_, predictor_sets_, reduction_pct_
    """

    def __init__(self, features="auto", policy="elbow", threshold=None, schema=None, force_target=True,
                 missing_token=None):
        self.features = features
        self.policy = policy
        self.threshold = threshold
        self.schema = schema
        self.force_target = force_target
        self.missing_token = missing_token

    def fit(self, X, y=None):
        d = check_dataset(X, self.schema, y)
        result = analyze(d, self.features, _policy(self.policy, self.threshold),
                         force_target=self.force_target, missing_token=self.missing_token)
        self.result_ = result
        self.matrix_ = result.matrix
        self.profiles_ = result.profiles
        self.elbows_ = result.elbows
        self.thresholds_ = result.thresholds
        self.predictor_sets_ = result.predictor_sets
        self.reduction_pct_ = result.reduction_pct
        self.features_ = list(result.features)
        return self

    def get_support(self, feature: str) -> list[str]:
        check_is_fitted(self, "predictor_sets_")
        return list(self.predictor_sets_[feature].predictors)


class GroupwiseLLMImputer(BaseEstimator, TransformerMixin):
    """Fill missing cells by prompting a language model with class-grouped examples.

    Predictor columns are chosen in ``fit`` from association strengths on the
    training data; ``transform`` imputes whatever is missing in the given
    data, one feature at a time.

    Parameters
    ----------
    schema : sequence of ColumnSchema or path, optional
        Needed for DataFrame input.
    features : "auto" or list of str, default="auto"
    policy : {"elbow", "global-min", "fixed"}, default="elbow"
    threshold : float, optional
    style : {"grouped", "ungrouped"}, default="grouped"
    examples_per_group : int, default=10
    num_example_sets : int, default=2
    missing_display : str, default="No Record"
    backend : BackendConfig, optional
        Defaults to the offline mock backend.
    seed : int, default=0
    dump_dir : path, optional
        Write every rendered prompt there.
    max_workers : int, default=1
    """

    def __init__(self, schema=None, features="auto", policy="elbow", threshold=None, style="grouped",
                 examples_per_group=10, num_example_sets=2, missing_display="No Record",
                 backend: BackendConfig | None = None, seed=0, dump_dir=None, max_workers=1):
        self.schema = schema
        self.features = features
        self.policy = policy
        self.threshold = threshold
        self.style = style
        self.examples_per_group = examples_per_group
        self.num_example_sets = num_example_sets
        self.missing_display = missing_display
        self.backend = backend
        self.seed = seed
        self.dump_dir = dump_dir
        self.max_workers = max_workers

    def fit(self, X, y=None):
        self.selector_ = CorrelationThresholdSelector(
            self.features, self.policy, self.threshold, self.schema).fit(X, y)
        self.predictor_sets_ = self.selector_.predictor_sets_
        self.thresholds_ = self.selector_.thresholds_
        return self

    def prompt_config(self) -> PromptConfig:
        return PromptConfig(num_example_sets=self.num_example_sets, examples_per_group=self.examples_per_group,
                            missing_display=self.missing_display, style=PromptStyle(self.style))

    def fit_transform(self, X, y=None, **fit_params):
        # prompts are grouped by class, so transform needs the labels too
        return self.fit(X, y).transform(X, y)

    def transform(self, X, y=None):
        """Impute the missing cells of ``X``.

        Class labels are required: pass them as ``y`` or keep the target
        column in ``X``.
        """
        check_is_fitted(self, "predictor_sets_")
        d = check_dataset(X, self.schema, y)
        sets = {f: s for f, s in self.predictor_sets_.items() if d.missing(f).any()}
        plan = build_plan(d, sets, self.prompt_config(), self.seed)
        out, log = run(plan, d, self.backend or BackendConfig.mock(), dump_dir=self.dump_dir,
                       max_workers=self.max_workers)
        self.plan_, self.log_ = plan, log
        if isinstance(X, Dataset):
            return out
        frame = out.to_frame().reset_index(drop=True)
        if y is not None:
            frame = frame.drop(columns=[out.target_name])
        frame.index = X.index
        return frame

    def imputed_features(self) -> Sequence[str]:
        check_is_fitted(self, "predictor_sets_")
        return list(self.predictor_sets_)
