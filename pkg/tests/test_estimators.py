import numpy as np
import pandas as pd
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from impute_forge.estimators import CorrelationThresholdSelector, GroupwiseLLMImputer, check_dataset
from impute_forge.exceptions import SchemaMismatch
from impute_forge.synthetic import TRAVEL_SCHEMA


def test_selector_params_and_clone():
    sel = CorrelationThresholdSelector(policy="fixed", threshold=0.2)
    assert sel.get_params() == {"features": "auto", "policy": "fixed", "threshold": 0.2, "schema": None,
                                "force_target": True, "missing_token": None}
    assert clone(sel).get_params() == sel.get_params()
    imp = GroupwiseLLMImputer(examples_per_group=3, seed=4)
    assert clone(imp).get_params()["examples_per_group"] == 3


def test_selector_fit(travel):
    sel = CorrelationThresholdSelector(policy="fixed", threshold=0.2).fit(travel)
    assert sel.features_ == ["FrequentFlyer"]
    assert sel.get_support("FrequentFlyer")[-1] == "Target" or "Target" in sel.get_support("FrequentFlyer")
    assert sel.reduction_pct_ == 66.67
    with pytest.raises(ValueError):
        CorrelationThresholdSelector(policy="fixed").fit(travel)


def test_imputer_on_dataset(travel):
    imp = GroupwiseLLMImputer(policy="fixed", threshold=0.2, examples_per_group=5)
    with pytest.raises(NotFittedError):
        imp.transform(travel)
    out = imp.fit(travel).transform(travel)
    assert out.missing_mask.sum() == 0
    assert imp.log_.complete and imp.imputed_features() == ["FrequentFlyer"]


def test_imputer_dataframe_round_trip(travel):
    frame = travel.to_frame()
    frame.index = pd.RangeIndex(1000, 1000 + len(frame))
    X, y = frame.drop(columns=["Target"]), frame["Target"]
    imp = GroupwiseLLMImputer(schema=list(TRAVEL_SCHEMA), policy="fixed", threshold=0.2, examples_per_group=5)
    out = imp.fit_transform(X, y)
    assert isinstance(out, pd.DataFrame)
    assert list(out.columns) == list(X.columns)
    assert out.index.equals(X.index)
    assert not out["FrequentFlyer"].isna().any()
    observed = X["FrequentFlyer"].notna()
    assert (out.loc[observed, "FrequentFlyer"] == X.loc[observed, "FrequentFlyer"]).all()
    same = GroupwiseLLMImputer(schema=list(TRAVEL_SCHEMA), policy="fixed", threshold=0.2,
                               examples_per_group=5).fit_transform(X, y)
    assert out.equals(same)


def test_check_dataset_validation(travel):
    with pytest.raises(SchemaMismatch):
        check_dataset(travel.to_frame())
    with pytest.raises(TypeError):
        check_dataset(np.zeros((2, 2)), list(TRAVEL_SCHEMA))
    with pytest.raises(ValueError):
        check_dataset(travel, y=[1])


def test_threshold_ignored_outside_fixed_policy_warns(travel):
    with pytest.warns(UserWarning, match="ignored"):
        CorrelationThresholdSelector(policy="elbow", threshold=0.2).fit(travel)
