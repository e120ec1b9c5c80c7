"""Typed tabular datasets with an explicit missing mask and a binary target."""

from __future__ import annotations

import csv
import json
import logging
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .exceptions import (
    EmptyDataset,
    InfeasibleCount,
    InsufficientCompleteRows,
    IoFailure,
    MissingTarget,
    NonBinaryTarget,
    SchemaMismatch,
    UnknownFeature,
    UnparsableNumeric,
)

logger = logging.getLogger(__name__)

DEFAULT_SENTINELS = ("", "?", "NA", "No Record")

_DECIMAL = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?")


class ColumnKind(str, Enum):
    CATEGORICAL = "categorical"
    NUMERICAL = "numerical"


class ColumnRole(str, Enum):
    TARGET = "target"
    FEATURE = "feature"


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: ColumnKind
    description: str
    role: ColumnRole = ColumnRole.FEATURE

    def __post_init__(self):
        object.__setattr__(self, "kind", ColumnKind(self.kind))
        object.__setattr__(self, "role", ColumnRole(self.role))
        if not self.name:
            raise SchemaMismatch("column name must be non-empty")
        if not self.description or not self.description.strip():
            raise SchemaMismatch(f"column {self.name!r}: description must be non-empty")
        if "\n" in self.description or "\r" in self.description:
            raise SchemaMismatch(f"column {self.name!r}: description must be a single line")

    @property
    def is_target(self) -> bool:
        return self.role is ColumnRole.TARGET

    @property
    def is_numerical(self) -> bool:
        return self.kind is ColumnKind.NUMERICAL

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind.value,
            "description": self.description,
            "role": self.role.value,
        }


@dataclass(frozen=True)
class AuditEntry:
    """Ground truth removed by :func:`inject_missingness`."""

    row_index: int
    column: str
    original_value: object

    def to_dict(self) -> dict:
        value = self.original_value
        if isinstance(value, float):
            value = format_number(value)
        return {"row_index": self.row_index, "column": self.column, "original_value": value}


def format_number(value: float) -> str:
    """Shortest decimal text that round-trips; integral values lose the fraction."""
    value = float(value)
    if value.is_integer() and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def parse_number(text: str) -> float | None:
    """Parse a finite decimal, returning None when ``text`` is not one."""
    text = text.strip()
    if not _DECIMAL.fullmatch(text):
        return None
    value = float(text)
    return value if math.isfinite(value) else None


def _freeze(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Dataset:
    """Column-major table; missing cells hold ``None`` (categorical) or NaN (numerical).

    Instances are never mutated. Every operation that changes cells returns a
    new dataset. ``row_ids`` keeps the row's index in the originally loaded
    file so subsets can be mapped back.
    """

    schema: tuple[ColumnSchema, ...]
    columns: tuple[np.ndarray, ...]
    missing_mask: np.ndarray
    row_ids: np.ndarray
    provenance: str = ""
    sentinels: tuple[str, ...] = DEFAULT_SENTINELS
    audit: tuple[AuditEntry, ...] = field(default=())

    def __post_init__(self):
        schema = tuple(self.schema)
        object.__setattr__(self, "schema", schema)
        names = [c.name for c in schema]
        if len(set(names)) != len(names):
            raise SchemaMismatch(f"duplicate column names in schema: {names}")
        targets = [c for c in schema if c.is_target]
        if len(targets) != 1:
            raise SchemaMismatch(f"schema must have exactly one target column, found {len(targets)}")
        if targets[0].is_numerical:
            raise SchemaMismatch(f"target column {targets[0].name!r} must be categorical")
        if len(self.columns) != len(schema):
            raise SchemaMismatch("column count does not match schema length")
        n = len(self.row_ids)
        mask = np.asarray(self.missing_mask, dtype=bool).reshape(n, len(schema))
        object.__setattr__(self, "missing_mask", _freeze(mask))
        object.__setattr__(self, "row_ids", _freeze(np.asarray(self.row_ids, dtype=np.int64)))
        cols = []
        for spec, col in zip(schema, self.columns):
            col = np.array(col, dtype=np.float64 if spec.is_numerical else object)
            if col.shape != (n,):
                raise SchemaMismatch(f"column {spec.name!r} has {col.shape[0]} cells, expected {n}")
            cols.append(_freeze(col))
        object.__setattr__(self, "columns", tuple(cols))
        t = self.index(self.target_name)
        if mask[:, t].any():
            row = int(np.flatnonzero(mask[:, t])[0])
            raise MissingTarget(int(self.row_ids[row]), self.target_name)
        labels = set(self.columns[t].tolist())
        if len(labels) > 2:
            raise NonBinaryTarget(f"target {self.target_name!r} has {len(labels)} distinct values: {sorted(labels)}")

    # -- schema helpers --------------------------------------------------------

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.schema]

    @property
    def target(self) -> ColumnSchema:
        return next(c for c in self.schema if c.is_target)

    @property
    def target_name(self) -> str:
        return self.target.name

    @property
    def feature_names(self) -> list[str]:
        return [c.name for c in self.schema if not c.is_target]

    @property
    def n_rows(self) -> int:
        return len(self.row_ids)

    def __len__(self):
        return self.n_rows

    def index(self, name: str) -> int:
        for i, c in enumerate(self.schema):
            if c.name == name:
                return i
        raise UnknownFeature(f"unknown column {name!r}")

    def column_schema(self, name: str) -> ColumnSchema:
        return self.schema[self.index(name)]

    def column(self, name: str) -> np.ndarray:
        return self.columns[self.index(name)]

    def missing(self, name: str) -> np.ndarray:
        return self.missing_mask[:, self.index(name)]

    @property
    def labels(self) -> np.ndarray:
        return self.column(self.target_name)

    # -- row views -------------------------------------------------------------

    @property
    def rows(self) -> list[tuple]:
        """Row-major records; missing cells are ``None``."""
        out = []
        for i in range(self.n_rows):
            out.append(tuple(None if self.missing_mask[i, j] else _cell(col[i])
                             for j, col in enumerate(self.columns)))
        return out

    def cell(self, row: int, name: str):
        j = self.index(name)
        return None if self.missing_mask[row, j] else _cell(self.columns[j][row])

    def format_cell(self, row: int, name: str, missing: str | None = None) -> str:
        j = self.index(name)
        if self.missing_mask[row, j]:
            return self.sentinels[0] if missing is None else missing
        value = self.columns[j][row]
        return format_number(value) if self.schema[j].is_numerical else str(value)

    def complete_rows(self) -> np.ndarray:
        return ~self.missing_mask.any(axis=1)

    def missing_counts(self) -> dict[str, int]:
        return {c.name: int(self.missing_mask[:, j].sum()) for j, c in enumerate(self.schema)}

    def category_domain(self, name: str) -> list[str]:
        """Observed categories in first-appearance order."""
        col = self.column(name)
        seen = dict.fromkeys(col[~self.missing(name)].tolist())
        return list(seen)

    # -- derivations -----------------------------------------------------------

    def take(self, positions: Iterable[int]) -> "Dataset":
        pos = np.asarray(list(positions), dtype=np.int64)
        return Dataset(
            schema=self.schema,
            columns=tuple(col[pos] for col in self.columns),
            missing_mask=self.missing_mask[pos],
            row_ids=self.row_ids[pos],
            provenance=self.provenance,
            sentinels=self.sentinels,
            audit=self.audit,
        )

    def with_values(self, name: str, positions: Sequence[int], values: Sequence) -> "Dataset":
        """Return a copy with ``name`` set at ``positions`` and those cells marked observed."""
        j = self.index(name)
        spec = self.schema[j]
        pos = np.asarray(list(positions), dtype=np.int64)
        if len(pos) != len(values):
            raise ValueError("positions and values differ in length")
        col = self.columns[j].copy()
        mask = self.missing_mask.copy()
        if spec.is_numerical:
            col[pos] = np.asarray([float(v) for v in values], dtype=np.float64)
        else:
            arr = np.empty(len(values), dtype=object)
            arr[:] = [str(v) for v in values]
            col[pos] = arr
        mask[pos, j] = False
        columns = list(self.columns)
        columns[j] = col
        return Dataset(self.schema, tuple(columns), mask, self.row_ids, self.provenance,
                       self.sentinels, self.audit)

    def with_missing(self, name: str, positions: Sequence[int]) -> "Dataset":
        j = self.index(name)
        col = self.columns[j].copy()
        mask = self.missing_mask.copy()
        pos = np.asarray(list(positions), dtype=np.int64)
        mask[pos, j] = True
        col[pos] = np.nan if self.schema[j].is_numerical else None
        columns = list(self.columns)
        columns[j] = col
        return Dataset(self.schema, tuple(columns), mask, self.row_ids, self.provenance,
                       self.sentinels, self.audit)

    def equals(self, other: "Dataset") -> bool:
        """Cell-value, mask and schema equality (provenance is ignored)."""
        if [c.to_dict() for c in self.schema] != [c.to_dict() for c in other.schema]:
            return False
        if not np.array_equal(self.missing_mask, other.missing_mask):
            return False
        return self.rows == other.rows

    # -- interop ---------------------------------------------------------------

    def to_frame(self):
        import pandas as pd

        data = {}
        for j, spec in enumerate(self.schema):
            col = self.columns[j]
            if spec.is_numerical:
                data[spec.name] = col.copy()
            else:
                values = col.copy()
                values[self.missing_mask[:, j]] = None
                data[spec.name] = values
        return pd.DataFrame(data, index=self.row_ids.copy())

    @classmethod
    def from_frame(cls, frame, schema: Sequence[ColumnSchema], provenance: str = "<frame>",
                   sentinels: Sequence[str] = DEFAULT_SENTINELS) -> "Dataset":
        """Build from a pandas frame; NaN/None cells become missing."""
        import pandas as pd

        names = [c.name for c in schema]
        if list(frame.columns) != names:
            raise SchemaMismatch(f"frame columns {list(frame.columns)} != schema {names}")
        columns, mask = [], []
        for spec in schema:
            series = frame[spec.name]
            miss = series.isna().to_numpy()
            if spec.is_numerical:
                values = pd.to_numeric(series, errors="raise").to_numpy(dtype=np.float64)
            else:
                values = np.array([None if m else str(v) for v, m in zip(series.tolist(), miss)],
                                  dtype=object)
            columns.append(values)
            mask.append(miss)
        return cls(tuple(schema), tuple(columns), np.column_stack(mask) if mask else np.zeros((len(frame), 0)),
                   np.arange(len(frame)), provenance, tuple(sentinels))


def _cell(value):
    if isinstance(value, np.floating):
        return float(value)
    return value


# -- schema file ---------------------------------------------------------------

def load_schema(path) -> tuple[ColumnSchema, ...]:
    """Read a JSON schema file (array of {name, kind, description, role})."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read schema {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaMismatch(f"schema {path} is not valid JSON: {exc}") from exc
    return parse_schema(raw)


def parse_schema(raw) -> tuple[ColumnSchema, ...]:
    if not isinstance(raw, list):
        raise SchemaMismatch("schema must be a JSON array of column objects")
    out = []
    for entry in raw:
        try:
            kind = ColumnKind(entry["kind"])
            role = ColumnRole(entry.get("role", "feature"))
            if role is ColumnRole.TARGET and kind is ColumnKind.NUMERICAL:
                # class labels are dispatched as categories regardless of spelling
                logger.warning("target %r declared numerical; treating as categorical", entry["name"])
                kind = ColumnKind.CATEGORICAL
            out.append(ColumnSchema(entry["name"], kind, entry["description"], role))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaMismatch(f"invalid schema entry {entry!r}: {exc}") from exc
    return tuple(out)


def write_schema(schema: Sequence[ColumnSchema], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([c.to_dict() for c in schema], fh, indent=2)
        fh.write("\n")


# -- CSV I/O -------------------------------------------------------------------

def load_csv(path, schema, sentinels: Sequence[str] = DEFAULT_SENTINELS) -> Dataset:
    """Load an RFC-4180 CSV file against a schema.

    Parameters
    ----------
    path : path-like
        UTF-8 CSV with a header row.
    schema : path-like or sequence of ColumnSchema
        Column definitions; names must equal the header in order.
    sentinels : sequence of str
        Cell texts (after trimming whitespace) that denote a missing value.
        The first one is used when writing missing cells back out.

    Raises
    ------
    SchemaMismatch, UnparsableNumeric, MissingTarget, EmptyDataset, IoFailure
    """
    if not isinstance(schema, (list, tuple)):
        schema = load_schema(schema)
    schema = tuple(schema)
    sentinels = tuple(sentinels)
    sentinel_set = {s.strip() for s in sentinels}
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise SchemaMismatch(f"{path}: no header row") from None
            names = [c.name for c in schema]
            if header != names:
                raise SchemaMismatch(f"{path}: header {header} does not match schema {names}")
            p = len(schema)
            cells: list[list[str]] = []
            for lineno, record in enumerate(reader):
                if not record or (len(record) == 1 and not record[0].strip() and p > 1):
                    continue
                if len(record) != p:
                    raise SchemaMismatch(f"{path}: data row {lineno} has {len(record)} cells, expected {p}")
                cells.append([c.strip() for c in record])
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc

    if not cells:
        raise EmptyDataset(f"{path}: no data rows")
    n = len(cells)
    mask = np.zeros((n, len(schema)), dtype=bool)
    columns = []
    for j, spec in enumerate(schema):
        if spec.is_numerical:
            col = np.full(n, np.nan)
        else:
            col = np.empty(n, dtype=object)
        for i in range(n):
            text = cells[i][j]
            if text in sentinel_set:
                mask[i, j] = True
                if spec.is_target:
                    raise MissingTarget(i, spec.name)
                continue
            if spec.is_numerical:
                value = parse_number(text)
                if value is None:
                    raise UnparsableNumeric(i, spec.name, text)
                col[i] = value
            else:
                col[i] = text
        columns.append(col)
    d = Dataset(schema, tuple(columns), mask, np.arange(n), str(path), sentinels)
    n_labels = len(set(d.labels.tolist()))
    if n_labels != 2:
        raise NonBinaryTarget(f"{path}: target {d.target_name!r} has {n_labels} distinct values, expected 2")
    return d


def write_csv(d: Dataset, path) -> None:
    """Write ``d`` so that :func:`load_csv` with the same sentinels reproduces it."""
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(d.names)
            for i in range(d.n_rows):
                writer.writerow([d.format_cell(i, name) for name in d.names])
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def write_audit(d: Dataset, path) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump([e.to_dict() for e in d.audit], fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


# -- partitions ----------------------------------------------------------------

def split_complete_incomplete(d: Dataset) -> tuple[Dataset, Dataset]:
    complete = d.complete_rows()
    return d.take(np.flatnonzero(complete)), d.take(np.flatnonzero(~complete))


@dataclass(frozen=True)
class ClassPartition:
    group_labels: tuple[str, str]  # (majority, minority)
    row_indices_by_label: Mapping[str, tuple[int, ...]]

    @property
    def majority(self) -> str:
        return self.group_labels[0]

    @property
    def minority(self) -> str:
        return self.group_labels[1]

    def label_of(self) -> dict[int, str]:
        return {i: lab for lab, rows in self.row_indices_by_label.items() for i in rows}


def class_partition(d: Dataset, labels: Sequence[str] | None = None) -> ClassPartition:
    """Split row positions by target label.

    The majority label is the more frequent one; on a tie the
    lexicographically smaller label is taken as majority. ``labels`` lets a
    caller pin the label pair when a subset may contain a single class.
    """
    y = d.labels
    counts: dict[str, int] = {}
    for lab in y.tolist():
        counts[lab] = counts.get(lab, 0) + 1
    if labels is not None:
        labels = [str(lab) for lab in labels]
        extra = set(counts) - set(labels)
        if len(labels) != 2 or extra:
            raise NonBinaryTarget(f"labels {labels} do not cover observed {sorted(counts)}")
        for lab in labels:
            counts.setdefault(lab, 0)
    if len(counts) != 2:
        raise NonBinaryTarget(f"target {d.target_name!r} has {len(counts)} distinct values, expected 2")
    ordered = sorted(counts, key=lambda lab: (-counts[lab], lab))
    by_label = {lab: tuple(int(i) for i in np.flatnonzero(y == lab)) for lab in ordered}
    return ClassPartition((ordered[0], ordered[1]), by_label)


# -- missingness injection -----------------------------------------------------

@dataclass(frozen=True)
class MissingnessSpec:
    feature: str
    per_class_count: Mapping[str, int]
    seed: int = 0


def inject_missingness(d: Dataset, spec: MissingnessSpec) -> Dataset:
    """Mask ``per_class_count[label]`` extra cells of ``spec.feature`` in each class.

    Cells are drawn uniformly without replacement from the class's complete
    rows, so each injected cell adds exactly one incomplete row. Removed
    values are appended to ``audit``; they are never read back by the
    imputation path.
    """
    col = d.column_schema(spec.feature)
    if col.is_target:
        raise InfeasibleCount(f"{spec.feature!r} is the target column")
    part = class_partition(d)
    complete = d.complete_rows()
    rng = np.random.default_rng(spec.seed)
    chosen: list[int] = []
    for label in sorted(part.row_indices_by_label):
        count = int(spec.per_class_count.get(label, 0))
        if count < 0:
            raise InfeasibleCount(f"negative count for class {label!r}")
        pool = np.array([i for i in part.row_indices_by_label[label] if complete[i]], dtype=np.int64)
        if count > len(pool):
            raise InfeasibleCount(
                f"class {label!r}: {count} cells requested but only {len(pool)} complete rows")
        if count:
            chosen.extend(sorted(int(i) for i in rng.choice(pool, size=count, replace=False)))
    unknown = set(spec.per_class_count) - set(part.row_indices_by_label)
    if unknown:
        raise InfeasibleCount(f"unknown class labels {sorted(unknown)}")
    if not chosen:
        return d
    chosen.sort()
    audit = tuple(AuditEntry(int(d.row_ids[i]), spec.feature, d.cell(i, spec.feature)) for i in chosen)
    out = d.with_missing(spec.feature, chosen)
    return Dataset(out.schema, out.columns, out.missing_mask, out.row_ids, out.provenance,
                   out.sentinels, d.audit + audit)


def per_class_totals_to_counts(d: Dataset, feature: str, totals: Mapping[str, int]) -> dict[str, int]:
    """Convert target per-class missing totals into additional-cell counts."""
    part = class_partition(d)
    miss = d.missing(feature)
    out = {}
    for label, total in totals.items():
        rows = part.row_indices_by_label.get(str(label))
        if rows is None:
            raise InfeasibleCount(f"unknown class label {label!r}")
        existing = int(miss[list(rows)].sum())
        if total < existing:
            raise InfeasibleCount(f"class {label!r} already has {existing} missing cells (> {total})")
        out[str(label)] = int(total) - existing
    return out


# -- example sampling ----------------------------------------------------------

def sample_examples(complete: Dataset, partition: ClassPartition, k_per_group: int,
                    num_sets: int, seed) -> list[dict[str, list[int]]]:
    """Draw ``num_sets`` example sets of ``k_per_group`` rows per class.

    Rows are drawn without replacement across all sets, so a single prompt
    never repeats an example. Returned positions index into ``complete``.
    """
    rng = np.random.default_rng(seed)
    sets: list[dict[str, list[int]]] = [dict() for _ in range(num_sets)]
    need = k_per_group * num_sets
    for label in partition.group_labels:
        pool = np.asarray(partition.row_indices_by_label.get(label, ()), dtype=np.int64)
        if need > len(pool):
            raise InsufficientCompleteRows(
                f"class {label!r}: need {need} complete rows, have {len(pool)}")
        picks = rng.choice(pool, size=need, replace=False).tolist() if need else []
        for s in range(num_sets):
            sets[s][label] = [int(i) for i in picks[s * k_per_group:(s + 1) * k_per_group]]
    return sets


def sample_flat(rows: Sequence[int], size: int, seed) -> list[int]:
    """Plain random sample of ``size`` positions from ``rows``, ignoring class."""
    if size > len(rows):
        raise InsufficientCompleteRows(f"need {size} complete rows, have {len(rows)}")
    rng = np.random.default_rng(seed)
    pool = np.asarray(rows, dtype=np.int64)
    return [int(i) for i in rng.choice(pool, size=size, replace=False)] if size else []
