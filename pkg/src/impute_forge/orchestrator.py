"""Multi-feature imputation planning and execution."""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .backend import BackendConfig, BackendKind, CompletionExchange, HttpChatClient, complete, mock_impute
from .dataset import ClassPartition, Dataset, class_partition, sample_examples, sample_flat
from .exceptions import AuthMissing, BackendError, NoExamplesForClass, ParseError
from .prompts import (
    PromptConfig,
    PromptStyle,
    RenderedPrompt,
    group_letters,
    included_columns,
    parse_response,
    render_grouped,
    render_ungrouped,
)
from .threshold import PredictorSet

logger = logging.getLogger(__name__)

Chunk = dict  # class value -> list of row positions


def relevance_order(features: Sequence[str], predictor_sets: Mapping[str, PredictorSet],
                    missing_counts: Mapping[str, int] | None = None,
                    schema_order: Sequence[str] | None = None) -> list[str]:
    """Order features so the most widely used predictor is imputed first.

    A feature's score is the number of other imputation features whose
    predictor set contains it. Ties go to fewer missing cells, then schema
    order.
    """
    missing_counts = missing_counts or {}
    position = {name: i for i, name in enumerate(schema_order or features)}
    score = {f: sum(1 for g in features if g != f and f in predictor_sets[g].predictors) for f in features}
    return sorted(features, key=lambda f: (-score[f], missing_counts.get(f, 0), position.get(f, len(position))))


def chunk_missing(rows_by_label: Mapping[str, Sequence[int]], labels: Sequence[str], k_per_group: int) -> list[Chunk]:
    """Split each class's missing rows into runs of at most ``k_per_group`` and zip them.

    Chunk ``c`` holds the ``c``-th run of every class that still has one, so
    trailing chunks can be unbalanced or single-class.
    """
    if k_per_group < 1:
        raise ValueError("k_per_group must be >= 1")
    runs = {}
    for label in labels:
        rows = sorted(int(i) for i in rows_by_label.get(label, ()))
        runs[label] = [rows[s:s + k_per_group] for s in range(0, len(rows), k_per_group)]
    n_chunks = max((len(r) for r in runs.values()), default=0)
    chunks = []
    for c in range(n_chunks):
        chunks.append({label: runs[label][c] for label in labels if c < len(runs[label])})
    return chunks


@dataclass
class ImputationPlan:
    ordered_features: list[str]
    predictor_sets: dict[str, PredictorSet]
    chunks: dict[str, list[Chunk]]
    prompt_config: PromptConfig
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "ordered_features": list(self.ordered_features),
            "predictor_sets": {f: s.to_dict() for f, s in self.predictor_sets.items()},
            "chunks": {f: [{k: list(v) for k, v in c.items()} for c in cs] for f, cs in self.chunks.items()},
            "prompt_config": self.prompt_config.to_dict(),
            "seed": self.seed,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def default_groups(d: Dataset, displays: Mapping[str, str] | None = None):
    """Minority class first, as group "A."."""
    part = class_partition(d)
    return group_letters([part.minority, part.majority], displays)


def build_plan(d: Dataset, predictor_sets: Mapping[str, PredictorSet], cfg: PromptConfig | None = None,
               seed: int = 0) -> ImputationPlan:
    cfg = cfg or PromptConfig()
    if not cfg.group_labels:
        cfg = replace(cfg, group_labels=default_groups(d))
    features = list(predictor_sets)
    order = relevance_order(features, predictor_sets, d.missing_counts(), d.names)
    labels = d.labels
    k = max(1, cfg.examples_per_group)
    chunks = {}
    for f in order:
        rows = np.flatnonzero(d.missing(f))
        by_label = {g.value: [int(i) for i in rows if labels[i] == g.value] for g in cfg.group_labels}
        chunks[f] = chunk_missing(by_label, [g.value for g in cfg.group_labels], k)
    return ImputationPlan(order, dict(predictor_sets), chunks, cfg, seed)


@dataclass
class ChunkRecord:
    feature: str
    chunk_id: int
    style: str
    prompt_tokens: int
    attempt_count: int
    fallback: bool
    rows: int
    warnings: list[str] = field(default_factory=list)
    prompt_sha256: str = ""

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ImputationLog:
    records: list[ChunkRecord] = field(default_factory=list)
    mode: str = ""
    complete: bool = False

    @property
    def total_prompt_tokens(self) -> int:
        return sum(r.prompt_tokens for r in self.records)

    def tokens_by_feature(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for r in self.records:
            out[r.feature] = out.get(r.feature, 0) + r.prompt_tokens
        return out

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "complete": self.complete,
            "total_prompt_tokens": self.total_prompt_tokens,
            "records": [r.to_dict() for r in self.records],
        }


def _example_partition(d: Dataset, columns: Sequence[str], labels: Sequence[str]) -> ClassPartition:
    idx = [d.index(c) for c in columns]
    ok = ~d.missing_mask[:, idx].any(axis=1)
    y = d.labels
    by_label = {lab: tuple(int(i) for i in np.flatnonzero(ok & (y == lab))) for lab in labels}
    return ClassPartition((labels[0], labels[1] if len(labels) > 1 else labels[0]), by_label)


def _render_chunk(d: Dataset, plan: ImputationPlan, feature: str, feat_idx: int, chunk_id: int,
                  chunk: Chunk, pool: ClassPartition, cfg: PromptConfig) -> RenderedPrompt:
    pset = plan.predictor_sets[feature]
    seed = (plan.seed, feat_idx, chunk_id)
    if cfg.style is PromptStyle.GROUPED:
        examples = sample_examples(d, pool, cfg.examples_per_group, cfg.num_example_sets, seed)
        return render_grouped(d, examples, chunk, cfg, pset)
    # equal example budget: the same number of rows, drawn without regard to class
    flat_pool = sorted(i for rows in pool.row_indices_by_label.values() for i in rows)
    per_set = cfg.examples_per_group * len(cfg.group_labels)
    picks = sample_flat(flat_pool, per_set * cfg.num_example_sets, seed)
    examples = [picks[s * per_set:(s + 1) * per_set] for s in range(cfg.num_example_sets)]
    missing = sorted(i for rows in chunk.values() for i in rows)
    return render_ungrouped(d, examples, missing, cfg, pset)


def _fallback_values(d: Dataset, feature: str, prompt: RenderedPrompt, pool: ClassPartition) -> list[str]:
    examples = {lab: [d.format_cell(i, feature) for i in rows] for lab, rows in pool.row_indices_by_label.items()}
    labels = [d.labels[i] for i in prompt.manifest]
    text = mock_impute(examples, labels, d.column_schema(feature).kind)
    return text.splitlines()


def _attempt(d: Dataset, feature: str, prompt: RenderedPrompt, backend: BackendConfig,
             client: HttpChatClient | None) -> tuple[list[str] | None, int, list[str]]:
    """Complete and parse, retrying parse failures. Returns (values or None, attempts, notes)."""
    spec = d.column_schema(feature)
    domain = None if spec.is_numerical else d.category_domain(feature)
    notes: list[str] = []
    attempts = 0
    for _ in range(backend.max_retries + 1):
        try:
            exchange: CompletionExchange = complete(backend, prompt, client=client)
        except AuthMissing:
            raise
        except (BackendError, NoExamplesForClass) as exc:
            # the client already retried transport errors; go straight to fallback
            attempts += 1
            notes.append(f"backend failure: {exc}")
            break
        attempts += exchange.attempt_count
        try:
            parsed = parse_response(exchange.response_text, len(prompt.manifest), spec.kind, domain)
        except ParseError as exc:
            notes.append(f"parse failure: {exc}")
            continue
        notes.extend(parsed.diagnostics)
        return list(parsed.values), attempts, notes
    return None, attempts, notes


def _dump(dump_dir: Path, seq: int, prompt: RenderedPrompt, d: Dataset, chunk_id: int) -> None:
    dump_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{seq:04d}_{prompt.feature}_chunk{chunk_id:03d}"
    (dump_dir / f"{stem}.txt").write_text(prompt.text, encoding="utf-8")
    meta = prompt.manifest_dict(d)
    meta["chunk_id"] = chunk_id
    (dump_dir / f"{stem}.manifest.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")


def run(plan: ImputationPlan, dataset: Dataset, backend: BackendConfig, *,
        dump_dir=None, max_workers: int = 1, client: HttpChatClient | None = None,
        log: ImputationLog | None = None) -> tuple[Dataset, ImputationLog]:
    """Impute every planned feature in plan order.

    Each chunk gets freshly sampled examples, a rendered prompt restricted to
    the feature's predictor set, and one backend call (retried on parse or
    transport failure). When retries run out the chunk is filled by
    class-conditional mode/median over all usable example rows and flagged
    as a fallback. A finished feature is fully observed and serves as
    context for the features after it.

    ``log`` may be passed in to observe progress; it is filled in place.
    """
    log = log if log is not None else ImputationLog()
    log.mode = f"{backend.kind.value}/{plan.prompt_config.style.value}/workers={max_workers}"
    d = dataset
    cfg = plan.prompt_config
    if not cfg.group_labels:
        cfg = replace(cfg, group_labels=default_groups(d))
    labels = [g.value for g in cfg.group_labels]
    dump_dir = Path(dump_dir) if dump_dir is not None else None
    seq = len(log.records)

    for feat_idx, feature in enumerate(plan.ordered_features):
        chunks = plan.chunks.get(feature, [])
        if not chunks:
            continue
        columns = included_columns(plan.predictor_sets[feature], d.target_name)
        pool = _example_partition(d, columns, labels)
        prompts = [_render_chunk(d, plan, feature, feat_idx, c, chunk, pool, cfg)
                   for c, chunk in enumerate(chunks)]
        if dump_dir is not None:
            for c, prompt in enumerate(prompts):
                _dump(dump_dir, seq + c, prompt, d, c)
        seq += len(prompts)

        if max_workers > 1 and backend.kind is BackendKind.HTTP:
            with ThreadPoolExecutor(max_workers=max_workers) as pool_exec:
                results = list(pool_exec.map(lambda p: _attempt(d, feature, p, backend, client), prompts))
        else:
            results = [_attempt(d, feature, p, backend, client) for p in prompts]

        positions: list[int] = []
        values: list[str] = []
        for c, (prompt, (parsed, attempts, notes)) in enumerate(zip(prompts, results)):
            fallback = parsed is None
            if fallback:
                logger.warning("%s chunk %d: falling back to mode/median imputation", feature, c)
                parsed = _fallback_values(d, feature, prompt, pool)
            positions.extend(prompt.manifest)
            values.extend(parsed)
            log.records.append(ChunkRecord(
                feature=feature, chunk_id=c, style=prompt.style.value,
                prompt_tokens=prompt.estimated_tokens, attempt_count=attempts, fallback=fallback,
                rows=len(prompt.manifest), warnings=list(prompt.warnings) + notes,
                prompt_sha256=hashlib.sha256(prompt.text.encode()).hexdigest(),
            ))
        d = d.with_values(feature, positions, values)
        logger.info("imputed %d cells of %s in %d chunks", len(positions), feature, len(chunks))

    log.complete = True
    return d, log


def ablation_run(dataset: Dataset, backend: BackendConfig, style: PromptStyle | str,
                 predictor_sets: Mapping[str, PredictorSet], cfg: PromptConfig | None = None,
                 seed: int = 0, **kwargs) -> tuple[Dataset, ImputationLog]:
    """Run the same plan with the prompt style forced to ``style``.

    Both styles present the same number of example rows per prompt
    (``examples_per_group`` x classes x sets) and the same chunks.
    """
    cfg = replace(cfg or PromptConfig(), style=PromptStyle(style))
    plan = build_plan(dataset, predictor_sets, cfg, seed)
    return run(plan, dataset, backend, **kwargs)


def render_plan_prompts(plan: ImputationPlan, dataset: Dataset) -> dict[str, list[RenderedPrompt]]:
    """Render every chunk's prompt against ``dataset`` without calling a backend.

    Later features see the same context they would in :func:`run` only if
    earlier features are already imputed in ``dataset``; this is meant for
    token accounting on a single feature or on already-complete context.
    """
    cfg = plan.prompt_config
    if not cfg.group_labels:
        cfg = replace(cfg, group_labels=default_groups(dataset))
    labels = [g.value for g in cfg.group_labels]
    out = {}
    for feat_idx, feature in enumerate(plan.ordered_features):
        columns = included_columns(plan.predictor_sets[feature], dataset.target_name)
        pool = _example_partition(dataset, columns, labels)
        out[feature] = [_render_chunk(dataset, plan, feature, feat_idx, c, chunk, pool, cfg)
                        for c, chunk in enumerate(plan.chunks.get(feature, []))]
    return out
