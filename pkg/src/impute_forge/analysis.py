"""Association analysis feeding threshold selection for a set of imputation features."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .association import AssociationMatrix, AssociationProfile, association_matrix, association_profile
from .dataset import ColumnKind, Dataset
from .exceptions import UnknownFeature
from .threshold import (
    ElbowResult,
    PredictorSet,
    SelectionPolicy,
    detect_elbow,
    feature_space_reduction,
    resolve_policy,
    select_predictors,
)


def imputation_features(d: Dataset, features: Sequence[str] | str | None = "auto") -> list[str]:
    """Resolve ``"auto"`` to the feature columns that have missing cells, in schema order."""
    if features is None or features == "auto":
        counts = d.missing_counts()
        return [name for name in d.feature_names if counts[name] > 0]
    out = []
    for name in features:
        spec = d.column_schema(name)
        if spec.is_target:
            raise UnknownFeature(f"{name!r} is the target column, not an imputation feature")
        out.append(name)
    return out


@dataclass(frozen=True, eq=False)
class AnalysisResult:
    matrix: AssociationMatrix
    features: tuple[str, ...]
    profiles: dict[str, AssociationProfile]
    elbows: dict[str, ElbowResult]
    thresholds: dict[str, float]
    predictor_sets: dict[str, PredictorSet]
    force_target: bool = True

    @property
    def reduction_pct(self) -> float:
        if not self.predictor_sets:
            return 0.0
        return feature_space_reduction(list(self.predictor_sets.values()))

    def thresholds_json(self) -> dict:
        return {
            f: {
                "elbow_value": self.elbows[f].elbow_value,
                "elbow_index": self.elbows[f].elbow_index,
                "elbow_fallback": self.elbows[f].fallback_used,
                "resolved_threshold": self.thresholds[f],
                "predictors": list(self.predictor_sets[f].predictors),
                "retention": self.predictor_sets[f].retention(),
                "reduction_ratio": self.predictor_sets[f].reduction_ratio,
            }
            for f in self.features
        }


def missing_as_category(d: Dataset, token: str = "?") -> Dataset:
    """Copy of ``d`` where missing categorical cells hold the literal ``token``.

    Numerical missing cells stay missing. Used to compute associations the
    way a plain CSV reader would, with the sentinel as one more category.
    """
    out = d
    for spec in d.schema:
        if spec.kind is ColumnKind.CATEGORICAL:
            rows = np.flatnonzero(d.missing(spec.name))
            if len(rows):
                out = out.with_values(spec.name, rows, [token] * len(rows))
    return out


def analyze(d: Dataset, features: Sequence[str] | str | None = "auto",
            policy: SelectionPolicy | None = None, matrix: AssociationMatrix | None = None,
            force_target: bool = True, missing_token: str | None = None) -> AnalysisResult:
    """Association profiles, elbows, thresholds and predictor sets.

    Parameters
    ----------
    force_target : bool, default=True
        Keep the target in every predictor set regardless of its strength.
    missing_token : str, optional
        When given, missing categorical cells count as this category while
        computing associations instead of being excluded pairwise.
    """
    policy = policy or SelectionPolicy()
    feats = imputation_features(d, features)
    if matrix is None:
        matrix = association_matrix(missing_as_category(d, missing_token) if missing_token else d)
    profiles = {f: association_profile(matrix, f) for f in feats}
    elbows = {f: detect_elbow(p) for f, p in profiles.items() if len(p) >= 2}
    if len(elbows) != len(profiles):
        short = [f for f in profiles if f not in elbows]
        raise ValueError(f"profiles too short for elbow detection: {short}")
    thresholds = resolve_policy(profiles, policy, elbows) if feats else {}
    sets = {f: select_predictors(profiles[f], thresholds[f], d.target_name, force_target) for f in feats}
    return AnalysisResult(matrix, tuple(feats), profiles, elbows, thresholds, sets, force_target)


def predictor_sets_at(result: AnalysisResult, threshold: float, target: str) -> dict[str, PredictorSet]:
    return {f: select_predictors(result.profiles[f], threshold, target, result.force_target)
            for f in result.features}
