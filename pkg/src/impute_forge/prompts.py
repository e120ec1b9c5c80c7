"""Group-wise CSV-style prompt rendering and completion parsing."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

from .dataset import ColumnKind, Dataset, format_number, parse_number
from .exceptions import (
    ColumnCollision,
    CountMismatch,
    DomainViolation,
    IncompleteExample,
    NumericParseFailure,
)
from .threshold import PredictorSet

BRIDGE_LINE = "Given the above data, fill in the missing values in the data sample below:"

DEFAULT_INSTRUCTION = (
    "You are given records from a tabular dataset in CSV format. Study the completed "
    "example records and use them to impute the missing values of the feature "
    "\"{feature_name}\" in the records at the end, where missing cells are shown as "
    "\"{missing_display}\". Output the imputed {feature_name} column only, one value per "
    "line in the order the records appear, and nothing else. There are exactly "
    "{missing_count} records with missing values{group_counts}."
)

_GROUP_MARKER = re.compile(r"^[A-Z]\.$")
_QUOTES = "\"'`"


class PromptStyle(str, Enum):
    GROUPED = "grouped"
    UNGROUPED = "ungrouped"


@dataclass(frozen=True)
class GroupLabel:
    value: str
    display: str
    letter: str


def group_letters(values: Sequence[str], displays: Mapping[str, str] | None = None) -> tuple[GroupLabel, ...]:
    """Assign "A.", "B.", ... to class values in the given order."""
    displays = displays or {}
    return tuple(GroupLabel(str(v), displays.get(str(v), str(v)), f"{chr(ord('A') + i)}.")
                 for i, v in enumerate(values))


@dataclass
class PromptConfig:
    num_example_sets: int = 2
    examples_per_group: int = 10
    group_labels: tuple[GroupLabel, ...] = ()
    missing_display: str = "No Record"
    style: PromptStyle = PromptStyle.GROUPED
    instruction_template: str = DEFAULT_INSTRUCTION
    target_alias: str | None = None

    def __post_init__(self):
        self.style = PromptStyle(self.style)
        self.group_labels = tuple(self.group_labels)
        if self.num_example_sets < 0 or self.examples_per_group < 0:
            raise ValueError("example counts must be non-negative")
        if "\n" in self.missing_display:
            raise ValueError("missing_display must be a single line")

    def group(self, value: str) -> GroupLabel:
        for g in self.group_labels:
            if g.value == value:
                return g
        raise KeyError(f"class {value!r} has no configured group")

    def to_dict(self) -> dict:
        return {
            "num_example_sets": self.num_example_sets,
            "examples_per_group": self.examples_per_group,
            "group_labels": [[g.value, g.display, g.letter] for g in self.group_labels],
            "missing_display": self.missing_display,
            "style": self.style.value,
            "instruction_template": self.instruction_template,
            "target_alias": self.target_alias,
        }


@dataclass(frozen=True)
class MockContext:
    """Structured view of a prompt's content for the offline backend."""

    feature: str
    kind: ColumnKind
    examples_by_label: Mapping[str, tuple[str, ...]]
    missing_labels: tuple[str, ...]


@dataclass(frozen=True)
class RenderedPrompt:
    text: str
    manifest: tuple[int, ...]
    estimated_tokens: int
    included_columns: tuple[str, ...]
    feature: str
    style: PromptStyle
    group_counts: Mapping[str, int] = field(default_factory=dict)
    warnings: tuple[str, ...] = ()
    context: MockContext | None = None

    def manifest_dict(self, d: Dataset | None = None) -> dict:
        out = {
            "feature": self.feature,
            "style": self.style.value,
            "expected_count": len(self.manifest),
            "row_indices": list(self.manifest),
            "group_counts": dict(self.group_counts),
            "included_columns": list(self.included_columns),
            "estimated_tokens": self.estimated_tokens,
            "warnings": list(self.warnings),
        }
        if d is not None:
            out["source_row_ids"] = [int(d.row_ids[i]) for i in self.manifest]
        return out


def estimate_tokens(text: str) -> int:
    """Rough token count: UTF-8 bytes / 4, rounded up."""
    return math.ceil(len(text.encode("utf-8")) / 4)


def included_columns(predictor_set: PredictorSet, target: str) -> tuple[str, ...]:
    """Target first, then predictors by descending association, feature last."""
    middle = [p for p in predictor_set.predictors if p not in (target, predictor_set.feature)]
    return (target, *middle, predictor_set.feature)


def _check_collision(d: Dataset, feature: str, missing_display: str) -> None:
    spec = d.column_schema(feature)
    if spec.kind is ColumnKind.NUMERICAL:
        if parse_number(missing_display) is not None:
            raise ColumnCollision(f"missing_display {missing_display!r} parses as a number")
        return
    lowered = missing_display.strip().lower()
    for value in d.category_domain(feature):
        if value.lower() == lowered:
            raise ColumnCollision(f"missing_display {missing_display!r} collides with category {value!r} of {feature!r}")


class _Renderer:
    def __init__(self, d: Dataset, cfg: PromptConfig, predictor_set: PredictorSet):
        self.d = d
        self.cfg = cfg
        self.feature = predictor_set.feature
        self.target = d.target_name
        self.columns = included_columns(predictor_set, self.target)
        for name in self.columns:
            d.index(name)
        self.warnings: list[str] = []
        _check_collision(d, self.feature, cfg.missing_display)

    def header(self) -> str:
        names = [self.cfg.target_alias or self.target, *self.columns[1:]]
        return ", ".join(names)

    def label_display(self, label: str) -> str:
        for g in self.cfg.group_labels:
            if g.value == label:
                return g.display
        return label

    def example_row(self, i: int) -> str:
        cells = []
        for name in self.columns:
            if self.d.missing_mask[i, self.d.index(name)]:
                raise IncompleteExample(f"example row {int(self.d.row_ids[i])} is missing {name!r}")
            cells.append(self.cell(i, name))
        return ", ".join(cells)

    def missing_row(self, i: int) -> str:
        cells = []
        for name in self.columns:
            if name == self.feature:
                cells.append(self.cfg.missing_display)
            elif self.d.missing_mask[i, self.d.index(name)]:
                self.warnings.append(
                    f"row {int(self.d.row_ids[i])}: predictor {name!r} is also missing; shown as "
                    f"{self.cfg.missing_display!r}")
                cells.append(self.cfg.missing_display)
            else:
                cells.append(self.cell(i, name))
        return ", ".join(cells)

    def cell(self, i: int, name: str) -> str:
        if name == self.target:
            return self.label_display(self.d.labels[i])
        return self.d.format_cell(i, name)

    def preamble(self, missing_count: int, group_counts: str) -> list[str]:
        instruction = self.cfg.instruction_template.format(
            feature_name=self.feature,
            missing_count=missing_count,
            missing_display=self.cfg.missing_display,
            group_counts=group_counts,
        )
        lines = [instruction, ""]
        for name in self.columns:
            spec = self.d.column_schema(name)
            shown = self.cfg.target_alias if name == self.target and self.cfg.target_alias else name
            lines.append(f"{shown}: {spec.description},")
        return lines


def _value_strings(d: Dataset, feature: str, rows: Sequence[int]) -> tuple[str, ...]:
    return tuple(d.format_cell(i, feature) for i in rows)


def render_grouped(d: Dataset, example_sets: Sequence[Mapping[str, Sequence[int]]],
                   missing: Mapping[str, Sequence[int]], cfg: PromptConfig,
                   predictor_set: PredictorSet) -> RenderedPrompt:
    """Render a group-wise prompt.

    Parameters
    ----------
    d : Dataset
        Working dataset; ``example_sets`` and ``missing`` hold positions in it.
    example_sets : sequence of {class value: positions}
        Completed examples, one mapping per repeated set.
    missing : {class value: positions}
        Rows whose ``predictor_set.feature`` cell is to be imputed.
    cfg : PromptConfig
        ``cfg.group_labels`` fixes group order and letters.
    predictor_set : PredictorSet
        Columns allowed in the prompt besides the target and the feature.
    """
    r = _Renderer(d, cfg, predictor_set)
    groups = cfg.group_labels
    known = {g.value for g in groups}
    for block in [*example_sets, missing]:
        stray = set(block) - known
        if stray:
            raise KeyError(f"classes {sorted(stray)} have no configured group")

    manifest: list[int] = []
    counts: dict[str, int] = {}
    for g in groups:
        rows = list(missing.get(g.value, ()))
        if rows:
            counts[g.letter.rstrip(".")] = len(rows)
            manifest.extend(rows)
    count_text = ", ".join(f"{n} in group {letter}" for letter, n in counts.items())
    lines = r.preamble(len(manifest), f" ({count_text})" if count_text else "")

    examples_by_label: dict[str, list[str]] = {g.value: [] for g in groups}
    for example in example_sets:
        if not any(example.get(g.value) for g in groups):
            continue  # an empty set renders nothing
        lines.append("")
        lines.append(r.header())
        for g in groups:
            lines.append(g.letter)
            for i in example.get(g.value, ()):
                lines.append(r.example_row(i))
                examples_by_label[g.value].append(d.format_cell(i, r.feature))

    lines.append("")
    lines.append(BRIDGE_LINE)
    missing_labels: list[str] = []
    for g in groups:
        rows = list(missing.get(g.value, ()))
        if not rows:
            continue
        lines.append(g.letter)
        for i in rows:
            lines.append(r.missing_row(i))
            missing_labels.append(g.value)

    text = "\n".join(lines) + "\n"
    kind = d.column_schema(r.feature).kind
    return RenderedPrompt(
        text=text,
        manifest=tuple(int(i) for i in manifest),
        estimated_tokens=estimate_tokens(text),
        included_columns=r.columns,
        feature=r.feature,
        style=PromptStyle.GROUPED,
        group_counts=counts,
        warnings=tuple(r.warnings),
        context=MockContext(r.feature, kind,
                            {k: tuple(v) for k, v in examples_by_label.items()},
                            tuple(missing_labels)),
    )


def render_ungrouped(d: Dataset, example_sets: Sequence[Sequence[int]], missing: Sequence[int],
                     cfg: PromptConfig, predictor_set: PredictorSet) -> RenderedPrompt:
    """Same layout as :func:`render_grouped` without group marker lines.

    Example rows appear in sampled order and the missing rows in the order
    given, so nothing in the text separates the classes.
    """
    r = _Renderer(d, cfg, predictor_set)
    manifest = [int(i) for i in missing]
    lines = r.preamble(len(manifest), "")
    labels = d.labels
    examples_by_label: dict[str, list[str]] = {}
    for example in example_sets:
        if not len(example):
            continue
        lines.append("")
        lines.append(r.header())
        for i in example:
            lines.append(r.example_row(i))
            examples_by_label.setdefault(labels[i], []).append(d.format_cell(i, r.feature))
    lines.append("")
    lines.append(BRIDGE_LINE)
    for i in manifest:
        lines.append(r.missing_row(i))
    text = "\n".join(lines) + "\n"
    counts: dict[str, int] = {}
    for i in manifest:
        counts[labels[i]] = counts.get(labels[i], 0) + 1
    return RenderedPrompt(
        text=text,
        manifest=tuple(manifest),
        estimated_tokens=estimate_tokens(text),
        included_columns=r.columns,
        feature=r.feature,
        style=PromptStyle.UNGROUPED,
        group_counts=counts,
        warnings=tuple(r.warnings),
        context=MockContext(r.feature, d.column_schema(r.feature).kind,
                            {k: tuple(v) for k, v in examples_by_label.items()},
                            tuple(labels[i] for i in manifest)),
    )


# -- parsing -------------------------------------------------------------------

@dataclass(frozen=True)
class ParsedResponse:
    values: tuple[str, ...]
    diagnostics: tuple[str, ...] = ()


def _tokens(raw: str) -> tuple[list[str], list[str]]:
    diagnostics = []
    out = []
    for line in raw.splitlines():
        line = line.strip()
        if not line:
            continue
        if _GROUP_MARKER.match(line):
            diagnostics.append(f"stripped group marker {line!r}")
            continue
        for token in line.split(","):
            token = token.strip().strip(_QUOTES).strip()
            if token:
                out.append(token)
    return out, diagnostics


def parse_response(raw: str, expected: int, feature_kind: ColumnKind,
                   domain: Sequence[str] | None = None) -> ParsedResponse:
    """Turn a completion into exactly ``expected`` column values.

    Values may be newline- or comma-separated. Group marker lines and blank
    lines are ignored. Categorical values are matched case-insensitively
    against ``domain`` and returned in the dataset's spelling; numerical
    values are returned in canonical decimal form.

    Raises
    ------
    CountMismatch, DomainViolation, NumericParseFailure
        Each error lists the offending response positions in ``positions``.
    """
    if expected <= 0:
        raise ValueError("expected must be positive")
    feature_kind = ColumnKind(feature_kind)
    tokens, diagnostics = _tokens(raw)
    if len(tokens) != expected:
        lo, hi = sorted((len(tokens), expected))
        raise CountMismatch(f"expected {expected} values, got {len(tokens)}", range(lo, hi))

    if feature_kind is ColumnKind.NUMERICAL:
        values, bad = [], []
        for pos, token in enumerate(tokens):
            number = parse_number(token)
            if number is None:
                bad.append(pos)
            else:
                values.append(format_number(number))
        if bad:
            raise NumericParseFailure(f"non-numeric values at positions {bad}: "
                                      f"{[tokens[p] for p in bad]}", bad)
        return ParsedResponse(tuple(values), tuple(diagnostics))

    canonical: dict[str, str] = {}
    for value in domain or ():
        canonical.setdefault(value.lower(), value)
    values, bad = [], []
    for pos, token in enumerate(tokens):
        match = canonical.get(token.lower())
        if match is None:
            bad.append(pos)
            continue
        if match != token:
            diagnostics.append(f"position {pos}: canonicalized {token!r} to {match!r}")
        values.append(match)
    if bad:
        raise DomainViolation(f"values outside the category domain at positions {bad}: "
                              f"{[tokens[p] for p in bad]}", bad)
    return ParsedResponse(tuple(values), tuple(diagnostics))


def format_answer(values: Sequence) -> str:
    """One value per line, the format the instruction asks for."""
    return "\n".join(format_number(v) if isinstance(v, float) else str(v) for v in values) + "\n"
