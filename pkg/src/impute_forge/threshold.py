"""Elbow-based correlation thresholds and predictor-set selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .association import AssociationProfile
from .exceptions import ProfileTooShort

COLLINEAR_TOL = 1e-9
CLOSENESS_BAND = 0.05
ROUNDING_STEP = 0.05


@dataclass(frozen=True)
class ElbowResult:
    elbow_index: int
    elbow_value: float
    method: str = "max-chord-distance"
    fallback_used: bool = False


def chord_distances(values: Sequence[float]) -> np.ndarray:
    """Perpendicular distance of each point ``(i, v_i)`` to the first-last chord."""
    v = np.asarray(values, dtype=np.float64)
    m = len(v)
    x = np.arange(1, m + 1, dtype=np.float64)
    x1, y1, x2, y2 = x[0], v[0], x[-1], v[-1]
    dy, dx = y2 - y1, x2 - x1
    norm = math.hypot(dx, dy)
    if norm == 0.0:
        return np.zeros(m)
    return np.abs(dy * x - dx * v + x2 * y1 - y2 * x1) / norm


def detect_elbow(profile) -> ElbowResult:
    """Locate the elbow of a descending profile.

    The elbow is the point farthest from the straight line joining the first
    and last points; ties go to the smaller index. When every point lies on
    that line (distance below 1e-9) the median position is returned and
    ``fallback_used`` is set.
    """
    values = profile.strengths if isinstance(profile, AssociationProfile) else list(profile)
    m = len(values)
    if m < 2:
        raise ProfileTooShort(f"elbow detection needs at least 2 values, got {m}")
    dist = chord_distances(values)
    best = int(np.argmax(dist))
    if dist[best] < COLLINEAR_TOL:
        idx = (m - 1) // 2
        return ElbowResult(idx, float(values[idx]), fallback_used=True)
    return ElbowResult(best, float(values[best]))


class PolicyMode(str, Enum):
    PER_FEATURE = "elbow"
    GLOBAL_MIN = "global-min"
    FIXED = "fixed"


@dataclass
class SelectionPolicy:
    mode: PolicyMode = PolicyMode.PER_FEATURE
    threshold: float | None = None
    threshold_by_feature: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        self.mode = PolicyMode(self.mode)
        if self.mode is PolicyMode.FIXED:
            if self.threshold is None or not 0.0 <= self.threshold <= 1.0:
                raise ValueError(f"fixed threshold must be in [0, 1], got {self.threshold!r}")

    @classmethod
    def fixed(cls, threshold: float) -> "SelectionPolicy":
        return cls(PolicyMode.FIXED, float(threshold))


def round_up(value: float, step: float = ROUNDING_STEP) -> float:
    # guard against 0.2 / 0.05 == 4.000000000000001
    return round(math.ceil(round(value / step, 9)) * step, 10)


def resolve_policy(profiles: Mapping[str, AssociationProfile], policy: SelectionPolicy,
                   elbows: Mapping[str, ElbowResult] | None = None) -> dict[str, float]:
    """Map every feature to its selection threshold under ``policy``.

    For the elbow-driven modes, when all elbow values sit within 0.05 of one
    another they are treated as one shared value: their mean rounded up to
    the next multiple of 0.05. The result is also stored on
    ``policy.threshold_by_feature``.
    """
    features = list(profiles)
    if policy.mode is PolicyMode.FIXED:
        resolved = {f: float(policy.threshold) for f in features}
    else:
        if elbows is None:
            elbows = {f: detect_elbow(profiles[f]) for f in features}
        values = {f: elbows[f].elbow_value for f in features}
        if values and max(values.values()) - min(values.values()) <= CLOSENESS_BAND + 1e-12:
            shared = round_up(sum(values.values()) / len(values))
            resolved = {f: shared for f in features}
        elif policy.mode is PolicyMode.GLOBAL_MIN:
            low = min(values.values())
            resolved = {f: low for f in features}
        else:
            resolved = dict(values)
    policy.threshold_by_feature = dict(resolved)
    return resolved


@dataclass(frozen=True)
class PredictorSet:
    feature: str
    threshold: float
    predictors: tuple[str, ...]
    total_candidates: int

    @property
    def retained(self) -> int:
        return len(self.predictors)

    @property
    def removed(self) -> int:
        return self.total_candidates - self.retained

    @property
    def reduction_ratio(self) -> float:
        return self.removed / self.total_candidates if self.total_candidates else 0.0

    def retention(self) -> str:
        return f"{self.retained}/{self.total_candidates}"

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "predictors": list(self.predictors),
            "retained": self.retained,
            "total_candidates": self.total_candidates,
            "reduction_ratio": self.reduction_ratio,
        }


def select_predictors(profile: AssociationProfile, threshold: float, target: str,
                      force_target: bool = True) -> PredictorSet:
    """Keep candidates whose strength is strictly above ``threshold``.

    By default the target column is always kept because group-wise prompts
    need the class label in every row; ``force_target=False`` counts it only
    when it clears the threshold like any other column. Retained and total
    counts both include the target, matching how retention is tabulated
    (e.g. ``3/14``).
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    kept = tuple(e.predictor for e in profile.entries
                 if e.strength > threshold or (force_target and e.predictor == target))
    return PredictorSet(profile.feature, float(threshold), kept, len(profile.entries))


def feature_space_reduction(sets: Sequence[PredictorSet], baseline_total: int | None = None) -> float:
    """Pooled percentage of candidate columns removed, to 2 decimals."""
    if baseline_total is None:
        baseline_total = sum(s.total_candidates for s in sets)
    if baseline_total <= 0:
        raise ValueError("baseline_total must be positive")
    removed = sum(s.removed for s in sets)
    return round(100.0 * removed / baseline_total, 2)


def format_reduction(pct: float) -> str:
    return "-" if pct == 0 else f"{pct:.2f}%"


def retention_table(profiles: Mapping[str, AssociationProfile], thresholds: Sequence[float],
                    target: str, force_target: bool = True) -> list[dict]:
    """One row per threshold: retained counts per feature and pooled reduction."""
    rows = []
    for t in thresholds:
        sets = [select_predictors(profiles[f], t, target, force_target) for f in profiles]
        rows.append({
            "threshold": float(t),
            "retention": {s.feature: s.retention() for s in sets},
            "reduction_pct": feature_space_reduction(sets),
        })
    return rows
