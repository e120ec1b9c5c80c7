"""Downstream evaluation: train on complete original rows, test on imputed rows."""

from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.exceptions import UndefinedMetricWarning
from sklearn.metrics import precision_recall_fscore_support, roc_auc_score

from .dataset import ColumnKind, Dataset, class_partition, split_complete_incomplete
from .exceptions import DataError, LengthMismatch, SchemaMismatch
from .forest import ForestConfig, ForestMode, RandomForest

logger = logging.getLogger(__name__)


class UnseenCategoryWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class EncodedMatrix:
    X: np.ndarray
    y: np.ndarray                                  # 1 = positive (minority) class
    encoding_map: dict[str, tuple[str, ...]]       # column -> emitted dimension names
    positive_label: str

    @property
    def feature_names(self) -> list[str]:
        return [name for dims in self.encoding_map.values() for name in dims]


def _categories(train: Dataset, name: str) -> list[str]:
    return sorted({v for v in train.column(name) if v is not None})


def _encode_one(d: Dataset, cats: dict[str, list[str]], positive: str, warn: bool) -> EncodedMatrix:
    blocks, enc = [], {}
    for name in d.feature_names:
        values = d.column(name)
        if d.column_schema(name).kind is ColumnKind.NUMERICAL:
            blocks.append(np.asarray(values, dtype=np.float64)[:, None])
            enc[name] = (name,)
            continue
        levels = cats[name]
        pos = {v: i for i, v in enumerate(levels)}
        block = np.zeros((len(values), len(levels)))
        unseen = set()
        for r, v in enumerate(values):
            j = pos.get(v)
            if j is None:
                unseen.add(v)
            else:
                block[r, j] = 1.0
        if unseen and warn:
            warnings.warn(f"{name}: categories unseen in training map to zeros: {sorted(map(str, unseen))}",
                          UnseenCategoryWarning, stacklevel=3)
        blocks.append(block)
        enc[name] = tuple(f"{name}={v}" for v in levels)
    X = np.hstack(blocks) if blocks else np.zeros((d.n_rows, 0))
    y = np.array([lab == positive for lab in d.labels], dtype=np.int64)
    return EncodedMatrix(X, y, enc, positive)


def encode(train: Dataset, test: Dataset, positive_label: str | None = None) -> tuple[EncodedMatrix, EncodedMatrix]:
    """One-hot encode categoricals using categories seen in ``train`` only.

    Numerical columns pass through unscaled. The positive label defaults to
    the minority class of ``train``.
    """
    if train.schema != test.schema:
        raise SchemaMismatch("train and test schemas differ")
    if test.missing_mask.any():
        cols = [n for n, c in test.missing_counts().items() if c]
        raise DataError(f"test rows must be fully observed; missing cells in {cols}")
    if positive_label is None:
        positive_label = class_partition(train).minority
    cats = {n: _categories(train, n) for n in train.feature_names
            if train.column_schema(n).kind is ColumnKind.CATEGORICAL}
    return _encode_one(train, cats, positive_label, False), _encode_one(test, cats, positive_label, True)


def train_forest(m: EncodedMatrix, cfg: ForestConfig | None = None) -> RandomForest:
    return (cfg or ForestConfig()).build().fit(m.X, m.y)


def predict_proba(model: RandomForest, m: EncodedMatrix | np.ndarray) -> np.ndarray:
    """Fraction of trees voting the positive class."""
    X = m.X if isinstance(m, EncodedMatrix) else m
    proba = model.predict_proba(X)
    pos = np.flatnonzero(model.classes_ == 1)
    return proba[:, pos[0]] if len(pos) else np.zeros(len(X))


# -- metrics ---------------------------------------------------------------------

@dataclass
class EvaluationReport:
    per_class: dict[str, dict[str, float]]
    macro_f1: float
    weighted_f1: float
    balanced_accuracy: float
    roc_auc: float
    support: dict[str, int]
    positive_label: str
    reduction_stats: dict = field(default_factory=dict)
    tags: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def minority(self) -> dict[str, float]:
        return self.per_class[self.positive_label]

    def to_dict(self) -> dict:
        return {
            "tags": self.tags,
            "positive_label": self.positive_label,
            "per_class": self.per_class,
            "support": self.support,
            "macro_f1": self.macro_f1,
            "weighted_f1": self.weighted_f1,
            "balanced_accuracy": self.balanced_accuracy,
            "roc_auc": self.roc_auc,
            "reduction_stats": self.reduction_stats,
            "warnings": self.warnings,
        }

    def summary_row(self) -> dict:
        m = self.minority()
        return {
            "model": self.tags.get("model", ""),
            "threshold": self.tags.get("threshold", ""),
            "minority_precision": round(m["precision"], 4),
            "minority_recall": round(m["recall"], 4),
            "minority_f1": round(m["f1"], 4),
            "macro_f1": round(self.macro_f1, 4),
            "weighted_f1": round(self.weighted_f1, 4),
            "balanced_accuracy": round(self.balanced_accuracy, 4),
            "roc_auc": round(self.roc_auc, 4),
        }


def classification_report(y_true, y_pred, scores, labels: Sequence | None = None,
                          positive=None) -> EvaluationReport:
    """Per-class precision/recall/F1, macro and weighted F1, balanced accuracy, ROC AUC.

    Parameters
    ----------
    y_true, y_pred : array-like
        True and predicted labels.
    scores : array-like
        Positive-class scores used for ROC AUC.
    labels : sequence, optional
        Class order; defaults to the sorted union of observed labels.
    positive : optional
        Positive class for AUC; defaults to the last entry of ``labels``.

    Zero denominators yield 0 together with a warning.
    """
    y_true, y_pred, scores = np.asarray(y_true), np.asarray(y_pred), np.asarray(scores, dtype=np.float64)
    if not (len(y_true) == len(y_pred) == len(scores)) or len(y_true) == 0:
        raise LengthMismatch(f"lengths differ or empty: {len(y_true)}, {len(y_pred)}, {len(scores)}")
    if labels is None:
        labels = sorted(set(y_true.tolist()) | set(y_pred.tolist()))
    labels = list(labels)
    positive = labels[-1] if positive is None else positive
    notes: list[str] = []

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", UndefinedMetricWarning)
        p, r, f, s = precision_recall_fscore_support(y_true, y_pred, labels=labels, zero_division="warn")
    for w in caught:
        notes.append(str(w.message))
        warnings.warn(str(w.message), UndefinedMetricWarning, stacklevel=2)

    total = s.sum()
    weighted = float((f * s).sum() / total) if total else 0.0
    bal = float(np.mean(r))

    is_pos = y_true == positive
    if is_pos.all() or not is_pos.any():
        msg = "ROC AUC undefined with a single class in y_true; reporting 0"
        warnings.warn(msg, UndefinedMetricWarning, stacklevel=2)
        notes.append(msg)
        auc = 0.0
    else:
        auc = float(roc_auc_score(is_pos.astype(int), scores))

    keys = [str(c) for c in labels]
    return EvaluationReport(
        per_class={k: {"precision": float(p[i]), "recall": float(r[i]), "f1": float(f[i])}
                   for i, k in enumerate(keys)},
        macro_f1=float(np.mean(f)),
        weighted_f1=weighted,
        balanced_accuracy=bal,
        roc_auc=auc,
        support={k: int(s[i]) for i, k in enumerate(keys)},
        positive_label=str(positive),
        warnings=notes,
    )


def evaluate_imputation(original: Dataset, imputed_rows: Dataset, cfg: ForestConfig | None = None,
                        tags: dict | None = None, reduction_stats: dict | None = None) -> EvaluationReport:
    """Train on the complete rows of ``original`` and score ``imputed_rows``."""
    cfg = cfg or ForestConfig()
    train, _ = split_complete_incomplete(original)
    part = class_partition(train)
    positive, negative = part.minority, part.majority
    tr, te = encode(train, imputed_rows, positive)
    model = train_forest(tr, cfg)
    proba = predict_proba(model, te)
    pred = (proba >= 0.5).astype(int)
    to_label = np.array([negative, positive], dtype=object)
    report = classification_report(to_label[te.y], to_label[pred], proba, labels=[negative, positive],
                                   positive=positive)
    report.tags = {"model": cfg.mode.value, **(tags or {})}
    report.reduction_stats = dict(reduction_stats or {})
    logger.info("%s: minority F1 %.4f, AUC %.4f on %d rows", report.tags.get("model"),
                report.minority()["f1"], report.roc_auc, imputed_rows.n_rows)
    return report


SUMMARY_FIELDS = ["model", "threshold", "minority_precision", "minority_recall", "minority_f1",
                  "macro_f1", "weighted_f1", "balanced_accuracy", "roc_auc"]


def write_summary_csv(reports: Sequence[EvaluationReport], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS, lineterminator="\n")
        w.writeheader()
        for rep in reports:
            w.writerow(rep.summary_row())
    return path


def write_report_json(report: EvaluationReport, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return path


def models_for(cfg: ForestConfig) -> list[ForestConfig]:
    """The configured forest and its second-model counterpart."""
    out = []
    for mode in (ForestMode.RANDOM_FOREST, ForestMode.GRADIENT_STUB):
        out.append(ForestConfig(cfg.n_trees, cfg.max_depth, cfg.features_per_split, cfg.min_samples_leaf,
                                cfg.bootstrap, cfg.seed, mode, cfg.n_jobs))
    return out
