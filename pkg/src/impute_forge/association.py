"""Pairwise association strengths across mixed-type columns.

Numerical pairs use Pearson's r, categorical pairs Cramér's V and mixed pairs
the correlation ratio (eta). Each pair is computed on the rows observed in
both columns. Degenerate inputs (constant series, a single category, fewer
than two rows) score 0 and raise :class:`DegenerateSeriesWarning` instead of
failing, so the matrix is always total.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np

from .dataset import ColumnKind, Dataset
from .exceptions import UnknownFeature


class DegenerateSeriesWarning(UserWarning):
    pass


class AssociationMeasure(str, Enum):
    PEARSON_R = "pearson_r"
    CRAMERS_V = "cramers_v"
    ETA_RATIO = "eta_ratio"


def measure_for(kind_a: ColumnKind, kind_b: ColumnKind) -> AssociationMeasure:
    if kind_a is ColumnKind.NUMERICAL and kind_b is ColumnKind.NUMERICAL:
        return AssociationMeasure.PEARSON_R
    if kind_a is ColumnKind.CATEGORICAL and kind_b is ColumnKind.CATEGORICAL:
        return AssociationMeasure.CRAMERS_V
    return AssociationMeasure.ETA_RATIO


# -- scalar kernels ------------------------------------------------------------
# Each returns (value, degenerate).

def _pearson(x: np.ndarray, y: np.ndarray) -> tuple[float, bool]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) != len(y):
        raise ValueError("series differ in length")
    if len(x) < 2:
        return 0.0, True
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        return 0.0, True
    r = float(np.dot(dx, dy)) / np.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r))), False


def _codes(values: np.ndarray) -> tuple[np.ndarray, int]:
    _, inverse = np.unique(np.asarray(values).astype(str), return_inverse=True)
    inverse = inverse.ravel()
    return inverse, int(inverse.max()) + 1 if len(inverse) else 0


def contingency_table(a, b) -> np.ndarray:
    ca, ra = _codes(a)
    cb, rb = _codes(b)
    table = np.zeros((ra, rb), dtype=np.float64)
    np.add.at(table, (ca, cb), 1.0)
    return table


def _cramers_v_table(table: np.ndarray) -> tuple[float, bool]:
    table = np.asarray(table, dtype=np.float64)
    # drop empty margins so r and c count observed categories only
    table = table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]
    n = table.sum()
    if n < 2 or table.size == 0:
        return 0.0, True
    k = min(table.shape[0] - 1, table.shape[1] - 1)
    if k == 0:
        return 0.0, True
    expected = np.outer(table.sum(axis=1), table.sum(axis=0)) / n
    pos = expected > 0
    chi2 = float((((table - expected) ** 2)[pos] / expected[pos]).sum())
    v = np.sqrt(chi2 / (n * k))
    return float(min(1.0, v)), False


def _cramers_v(a, b) -> tuple[float, bool]:
    if len(a) != len(b):
        raise ValueError("series differ in length")
    if len(a) < 2:
        return 0.0, True
    return _cramers_v_table(contingency_table(a, b))


def _eta(groups, y) -> tuple[float, bool]:
    y = np.asarray(y, dtype=np.float64)
    if len(groups) != len(y):
        raise ValueError("series differ in length")
    if len(y) < 2:
        return 0.0, True
    codes, k = _codes(groups)
    mean = y.mean()
    total = float(((y - mean) ** 2).sum())
    if total == 0.0:
        return 0.0, True
    counts = np.bincount(codes, minlength=k).astype(np.float64)
    sums = np.bincount(codes, weights=y, minlength=k)
    group_means = sums / counts
    between = float((counts * (group_means - mean) ** 2).sum())
    return float(min(1.0, np.sqrt(between / total))), False


def _warn_degenerate(name):
    warnings.warn(f"{name}: degenerate input, association defined as 0",
                  DegenerateSeriesWarning, stacklevel=3)


def pearson_r(x, y) -> float:
    """Signed Pearson correlation, clamped to [-1, 1]."""
    r, degenerate = _pearson(x, y)
    if degenerate:
        _warn_degenerate("pearson_r")
    return r


def cramers_v(a, b) -> float:
    """Cramér's V between two categorical series (no continuity correction)."""
    v, degenerate = _cramers_v(a, b)
    if degenerate:
        _warn_degenerate("cramers_v")
    return v


def cramers_v_from_table(table) -> float:
    v, degenerate = _cramers_v_table(np.asarray(table))
    if degenerate:
        _warn_degenerate("cramers_v")
    return v


def eta_ratio(groups, y) -> float:
    """Correlation ratio of a numerical series ``y`` on categorical ``groups``."""
    v, degenerate = _eta(groups, y)
    if degenerate:
        _warn_degenerate("eta_ratio")
    return v


# -- matrix --------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AssociationMatrix:
    columns: tuple[str, ...]
    values: np.ndarray
    measures: tuple[tuple[AssociationMeasure, ...], ...]
    support: np.ndarray
    degenerate: np.ndarray

    def index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise UnknownFeature(f"unknown column {name!r}") from None

    def get(self, a: str, b: str) -> float:
        return float(self.values[self.index(a), self.index(b)])

    def to_dict(self) -> dict:
        return {
            "columns": list(self.columns),
            "values": self.values.tolist(),
            "measures": [[m.value for m in row] for row in self.measures],
            "support": self.support.tolist(),
            "degenerate": self.degenerate.tolist(),
        }


def _pair(d: Dataset, i: int, j: int) -> tuple[float, AssociationMeasure, int, bool]:
    ki, kj = d.schema[i].kind, d.schema[j].kind
    measure = measure_for(ki, kj)
    keep = ~(d.missing_mask[:, i] | d.missing_mask[:, j])
    a = d.columns[i][keep]
    b = d.columns[j][keep]
    support = int(keep.sum())
    if measure is AssociationMeasure.PEARSON_R:
        v, deg = _pearson(a, b)
        v = abs(v)
    elif measure is AssociationMeasure.CRAMERS_V:
        v, deg = _cramers_v(a, b)
    elif ki is ColumnKind.CATEGORICAL:
        v, deg = _eta(a, b)
    else:
        v, deg = _eta(b, a)
    return v, measure, support, deg


def association_matrix(d: Dataset) -> AssociationMatrix:
    """Absolute association for every column pair of ``d``.

    Warns once with :class:`DegenerateSeriesWarning` listing the pairs that
    were scored 0 because of degenerate input; the same pairs are flagged in
    ``degenerate``.
    """
    p = len(d.schema)
    if p < 2:
        raise ValueError("association_matrix needs at least two columns")
    values = np.eye(p)
    support = np.zeros((p, p), dtype=np.int64)
    degenerate = np.zeros((p, p), dtype=bool)
    measures = [[measure_for(a.kind, b.kind) for b in d.schema] for a in d.schema]
    for i in range(p):
        support[i, i] = int((~d.missing_mask[:, i]).sum())
        for j in range(i + 1, p):
            v, _, s, deg = _pair(d, i, j)
            values[i, j] = values[j, i] = v
            support[i, j] = support[j, i] = s
            degenerate[i, j] = degenerate[j, i] = deg
    flagged = [(d.names[i], d.names[j]) for i in range(p) for j in range(i + 1, p) if degenerate[i, j]]
    if flagged:
        warnings.warn(f"degenerate column pairs scored 0: {flagged}", DegenerateSeriesWarning, stacklevel=2)
    return AssociationMatrix(tuple(d.names), values,
                             tuple(tuple(row) for row in measures), support, degenerate)


# -- profiles ------------------------------------------------------------------

class ProfileEntry(NamedTuple):
    predictor: str
    strength: float
    measure: AssociationMeasure
    support: int


@dataclass(frozen=True)
class AssociationProfile:
    feature: str
    entries: tuple[ProfileEntry, ...]

    @property
    def strengths(self) -> list[float]:
        return [e.strength for e in self.entries]

    @property
    def predictors(self) -> list[str]:
        return [e.predictor for e in self.entries]

    def __len__(self):
        return len(self.entries)

    def strength_of(self, name: str) -> float:
        for e in self.entries:
            if e.predictor == name:
                return e.strength
        raise UnknownFeature(f"{name!r} is not a candidate predictor of {self.feature!r}")


def association_profile(m: AssociationMatrix, feature: str) -> AssociationProfile:
    """Candidates for ``feature`` sorted by descending strength, ties in column order."""
    i = m.index(feature)
    order = sorted((j for j in range(len(m.columns)) if j != i),
                   key=lambda j: (-m.values[i, j], j))
    entries = tuple(ProfileEntry(m.columns[j], float(m.values[i, j]), m.measures[i][j],
                                 int(m.support[i, j])) for j in order)
    return AssociationProfile(feature, entries)


def profiles_to_json(profiles: Sequence[AssociationProfile]) -> str:
    return json.dumps({
        p.feature: [{"predictor": e.predictor, "strength": e.strength,
                     "measure": e.measure.value, "support": e.support} for e in p.entries]
        for p in profiles
    }, indent=2)
