"""Command-line entry point: ``impute-forge {analyze,impute,evaluate,ablation}``.

A run is described by a JSON config; flags override the file. Every
subcommand writes into a fixed layout under ``--out``::

    analysis/  prompts/  imputed/  reports/  manifest.json

The manifest embeds the resolved config and its hash, so
``--config <out>/manifest.json`` replays a run.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .analysis import analyze, predictor_sets_at
from .backend import BackendConfig
from .dataset import (
    DEFAULT_SENTINELS,
    Dataset,
    MissingnessSpec,
    inject_missingness,
    load_csv,
    load_schema,
    per_class_totals_to_counts,
    split_complete_incomplete,
    write_audit,
    write_csv,
)
from .evaluation import ForestConfig, evaluate_imputation, write_report_json, write_summary_csv
from .exceptions import ImputeForgeError, SchemaMismatch, UsageError
from .forest import ForestMode
from .orchestrator import ImputationLog, build_plan, default_groups, run
from .prompts import DEFAULT_INSTRUCTION, PromptConfig, PromptStyle, group_letters
from .threshold import PolicyMode, SelectionPolicy, feature_space_reduction, retention_table

logger = logging.getLogger("impute_forge")

EXIT_OK, EXIT_USAGE = 0, 1
EXIT_INTERRUPTED = 130


@dataclass
class RunConfig:
    dataset: str | None = None
    schema: str | None = None
    sentinels: list[str] = field(default_factory=lambda: list(DEFAULT_SENTINELS))
    features: list[str] | str = "auto"
    policy: str = "elbow"
    thresholds: list[float] = field(default_factory=list)
    prompt: dict = field(default_factory=dict)
    backend: dict = field(default_factory=lambda: {"kind": "mock"})
    evaluation: dict = field(default_factory=dict)
    missingness: list[dict] = field(default_factory=list)
    association: dict = field(default_factory=dict)
    seed: int = 0
    out: str = "run"
    dump_prompts: bool | str = False

    def __post_init__(self):
        try:
            mode = PolicyMode(self.policy)
        except ValueError:
            raise UsageError(f"unknown policy {self.policy!r}") from None
        self.thresholds = [float(t) for t in self.thresholds]
        if mode is PolicyMode.FIXED and not self.thresholds:
            raise UsageError("policy 'fixed' needs at least one --threshold")
        if any(not 0.0 <= t <= 1.0 for t in self.thresholds):
            raise UsageError(f"thresholds must lie in [0, 1]: {self.thresholds}")

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        # the output location does not change results
        blob = {k: v for k, v in self.to_dict().items() if k not in ("out", "dump_prompts")}
        return hashlib.sha256(json.dumps(blob, sort_keys=True).encode()).hexdigest()

    # -- derived objects ---------------------------------------------------------

    def selection_policies(self) -> list[tuple[str, SelectionPolicy]]:
        mode = PolicyMode(self.policy)
        if mode is PolicyMode.FIXED:
            return [(f"t{t:g}", SelectionPolicy.fixed(t)) for t in self.thresholds]
        return [(mode.value, SelectionPolicy(mode))]

    def prompt_config(self, d: Dataset, style: str | None = None) -> PromptConfig:
        p = dict(self.prompt)
        displays = p.pop("group_displays", None)
        order = p.pop("group_order", None)
        if order:
            groups = group_letters(order, displays)
        else:
            groups = default_groups(d, displays)
        if style is not None:
            p["style"] = style
        p.setdefault("instruction_template", DEFAULT_INSTRUCTION)
        try:
            return PromptConfig(group_labels=groups, **p)
        except TypeError as exc:
            raise UsageError(f"bad prompt config: {exc}") from None

    def association_options(self) -> dict:
        """Keyword arguments for :func:`analyze`: force_target, missing_token."""
        opts = {"force_target": True, "missing_token": None}
        unknown = set(self.association) - set(opts)
        if unknown:
            raise UsageError(f"unknown association options: {sorted(unknown)}")
        opts.update(self.association)
        return opts

    def backend_config(self) -> BackendConfig:
        try:
            return BackendConfig(**self.backend)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad backend config: {exc}") from None

    def forest_configs(self) -> list[ForestConfig]:
        e = dict(self.evaluation)
        models = e.pop("models", [m.value for m in ForestMode])
        e.setdefault("seed", self.seed)
        try:
            return [ForestConfig(mode=m, **e) for m in models]
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad evaluation config: {exc}") from None


# -- helpers -----------------------------------------------------------------------

def load_input(cfg: RunConfig) -> Dataset:
    """Load the dataset and apply any configured missingness injection."""
    if not cfg.dataset or not cfg.schema:
        raise UsageError("both a dataset and a schema are required (--dataset/--schema or config)")
    d = load_csv(cfg.dataset, load_schema(cfg.schema), cfg.sentinels)
    for entry in cfg.missingness:
        entry = dict(entry)
        feature = entry["feature"]
        seed = int(entry.get("seed", cfg.seed))
        if "per_class_total" in entry:
            counts = per_class_totals_to_counts(d, feature, entry["per_class_total"])
        else:
            counts = {str(k): int(v) for k, v in entry.get("per_class_count", {}).items()}
        d = inject_missingness(d, MissingnessSpec(feature, counts, seed))
    return d


def _layout(out: Path) -> dict[str, Path]:
    dirs = {name: out / name for name in ("analysis", "prompts", "imputed", "reports")}
    for p in dirs.values():
        p.mkdir(parents=True, exist_ok=True)
    return dirs


def _write_manifest(out: Path, cfg: RunConfig, command: str, complete: bool, **extra) -> Path:
    manifest = {"command": command, "complete": complete, "config": cfg.to_dict(),
                "config_hash": cfg.hash(), **extra}
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _resolve_features(cfg: RunConfig, d: Dataset):
    return cfg.features if cfg.features == "auto" else list(cfg.features)


# -- subcommands -------------------------------------------------------------------

def cmd_analyze(cfg: RunConfig, emit_thresholds: bool = False) -> int:
    out = Path(cfg.out)
    d = load_input(cfg)  # fail before touching the output tree
    dirs = _layout(out)
    a_dir = dirs["analysis"]
    policies = cfg.selection_policies()
    result = analyze(d, _resolve_features(cfg, d), policies[0][1], **cfg.association_options())
    if not result.features:
        print("notice: dataset has no missing cells; nothing to impute")
    (a_dir / "association_matrix.json").write_text(json.dumps(result.matrix.to_dict(), indent=2) + "\n")
    with (a_dir / "profiles.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "rank", "predictor", "strength", "measure", "support"])
        for f in result.features:
            for rank, e in enumerate(result.profiles[f].entries, start=1):
                w.writerow([f, rank, e.predictor, f"{e.strength:.6f}", e.measure.value, e.support])
    thresholds = result.thresholds_json()
    (a_dir / "thresholds.json").write_text(json.dumps(thresholds, indent=2) + "\n")

    # retention table over the fixed thresholds, plus the policy's own choice
    reductions = {}
    grid = sorted(set(cfg.thresholds) | {0.0})
    if result.features:
        table = retention_table(result.profiles, grid, d.target_name, result.force_target)
        with (a_dir / "retention.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["threshold", *result.features, "reduction_pct"])
            for row in table:
                w.writerow([f"{row['threshold']:g}", *[row["retention"][f] for f in result.features],
                            f"{row['reduction_pct']:.2f}"])
        for t in grid:
            reductions[f"t{t:g}"] = feature_space_reduction(list(predictor_sets_at(result, t, d.target_name).values()))
        reductions[policies[0][0]] = result.reduction_pct
    (a_dir / "reduction.json").write_text(json.dumps(reductions, indent=2, sort_keys=True) + "\n")
    _write_manifest(out, cfg, "analyze", True, imputation_features=list(result.features),
                    reduction_pct=reductions)
    if emit_thresholds:
        print(json.dumps(thresholds, indent=2))
    for f in result.features:
        e = result.elbows[f]
        print(f"{f}: elbow {e.elbow_value:.4f} at rank {e.elbow_index + 1}, threshold {result.thresholds[f]:g}, "
              f"kept {result.predictor_sets[f].retention()}")
    return EXIT_OK


def _dump_dir(cfg: RunConfig, dirs, tag: str) -> Path | None:
    if not cfg.dump_prompts:
        return None
    base = dirs["prompts"] if cfg.dump_prompts is True else Path(cfg.dump_prompts)
    return base / tag


def _impute_all(cfg: RunConfig, d: Dataset, dirs, runs: list, style: str | None = None,
                tag_suffix: str = "") -> list[dict]:
    backend = cfg.backend_config()
    for tag, policy in cfg.selection_policies():
        tag = tag + tag_suffix
        result = analyze(d, _resolve_features(cfg, d), policy, **cfg.association_options())
        pcfg = cfg.prompt_config(d, style)
        plan = build_plan(d, result.predictor_sets, pcfg, cfg.seed)
        log = ImputationLog()
        entry = {"tag": tag, "plan_hash": plan.config_hash(), "complete": False,
                 "reduction_pct": result.reduction_pct, "thresholds": result.thresholds}
        runs.append(entry)
        dump = _dump_dir(cfg, dirs, tag)
        try:
            imputed, log = run(plan, d, backend, dump_dir=dump, log=log)
        finally:
            entry["log"] = log.to_dict()
            entry["total_prompt_tokens"] = log.total_prompt_tokens
            entry["tokens_by_feature"] = log.tokens_by_feature()
        path = dirs["imputed"] / f"{tag}.csv"
        write_csv(imputed, path)
        entry.update(complete=True, imputed=str(path.relative_to(Path(cfg.out))),
                     imputed_cells=int(d.missing_mask.sum() - imputed.missing_mask.sum()),
                     fallback_chunks=sum(r.fallback for r in log.records))
        print(f"{tag}: imputed {entry['imputed_cells']} cells, ~{log.total_prompt_tokens} prompt tokens "
              f"-> {path}")
    return runs


def cmd_impute(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    d = load_input(cfg)
    dirs = _layout(out)
    write_csv(d, dirs["imputed"] / "input.csv")
    write_audit(d, dirs["imputed"] / "input.audit.json")
    runs: list[dict] = []
    try:
        _impute_all(cfg, d, dirs, runs)
    except KeyboardInterrupt:
        _write_manifest(out, cfg, "impute", False, runs=runs, note="interrupted")
        raise
    except ImputeForgeError:
        _write_manifest(out, cfg, "impute", False, runs=runs)
        raise
    _write_manifest(out, cfg, "impute", True, runs=runs)
    return EXIT_OK


def _imputed_rows(original: Dataset, imputed_path) -> Dataset:
    imputed = load_csv(imputed_path, original.schema, original.sentinels)
    if imputed.n_rows != original.n_rows:
        raise SchemaMismatch(f"{imputed_path}: {imputed.n_rows} rows, original has {original.n_rows}")
    incomplete = [i for i, ok in enumerate(original.complete_rows()) if not ok]
    return imputed.take(incomplete)


def _evaluate_runs(cfg: RunConfig, d: Dataset, dirs, runs: list[dict]) -> list:
    reports = []
    for entry in runs:
        if not entry.get("complete"):
            continue
        test = _imputed_rows(d, Path(cfg.out) / entry["imputed"])
        stats = {"reduction_pct": entry.get("reduction_pct"), "total_prompt_tokens": entry.get("total_prompt_tokens")}
        for fcfg in cfg.forest_configs():
            rep = evaluate_imputation(d, test, fcfg, tags={"threshold": entry["tag"]}, reduction_stats=stats)
            write_report_json(rep, dirs["reports"] / f"{entry['tag']}_{fcfg.mode.value}.json")
            reports.append(rep)
    return reports


def cmd_evaluate(cfg: RunConfig, imputed: list[str] | None = None) -> int:
    out = Path(cfg.out)
    d = load_input(cfg)
    dirs = _layout(out)
    if imputed:
        runs = [{"tag": Path(p).stem, "imputed": str(Path(p).resolve()), "complete": True} for p in imputed]
    else:
        manifest = out / "manifest.json"
        if not manifest.exists():
            raise UsageError(f"no manifest at {manifest}; run 'impute' first or pass --imputed")
        runs = json.loads(manifest.read_text()).get("runs", [])
    reports = _evaluate_runs(cfg, d, dirs, runs)
    summary = write_summary_csv(reports, dirs["reports"] / "summary.csv")
    print(summary.read_text(), end="")
    return EXIT_OK


ABLATION_FIELDS = ["prompt_design", "minority_precision", "minority_recall", "minority_f1",
                   "overall_f1_weighted", "overall_f1_macro", "status"]


def cmd_ablation(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    d = load_input(cfg)
    dirs = _layout(out)
    tag, policy = cfg.selection_policies()[0]
    result = analyze(d, _resolve_features(cfg, d), policy, **cfg.association_options())
    backend = cfg.backend_config()
    fcfg = cfg.forest_configs()[0]
    _, incomplete = split_complete_incomplete(d)
    rows, runs = [], []
    for style in (PromptStyle.GROUPED, PromptStyle.UNGROUPED):
        name = f"{style.value}"
        entry = {"tag": f"{tag}_{name}", "style": name, "complete": False}
        runs.append(entry)
        try:
            plan = build_plan(d, result.predictor_sets, cfg.prompt_config(d, style.value), cfg.seed)
            dump = _dump_dir(cfg, dirs, entry["tag"])
            imputed, log = run(plan, d, backend, dump_dir=dump)
            path = dirs["imputed"] / f"{entry['tag']}.csv"
            write_csv(imputed, path)
            test = imputed.take([i for i, ok in enumerate(d.complete_rows()) if not ok])
            rep = evaluate_imputation(d, test, fcfg, tags={"threshold": tag, "style": name})
            write_report_json(rep, dirs["reports"] / f"ablation_{name}.json")
            m = rep.minority()
            rows.append({"prompt_design": name, "minority_precision": round(m["precision"], 4),
                         "minority_recall": round(m["recall"], 4), "minority_f1": round(m["f1"], 4),
                         "overall_f1_weighted": round(rep.weighted_f1, 4),
                         "overall_f1_macro": round(rep.macro_f1, 4), "status": "ok"})
            entry.update(complete=True, imputed=str(path.relative_to(out)),
                         total_prompt_tokens=log.total_prompt_tokens,
                         prompt_hashes=[r.prompt_sha256 for r in log.records])
        except ImputeForgeError as exc:
            logger.error("%s run failed: %s", name, exc)
            rows.append({"prompt_design": name, **{k: "" for k in ABLATION_FIELDS[1:-1]},
                         "status": f"failed: {type(exc).__name__}: {exc}"})
            entry["error"] = f"{type(exc).__name__}: {exc}"
    table = dirs["reports"] / "ablation.csv"
    with table.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=ABLATION_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    complete = all(r["status"] == "ok" for r in rows)
    _write_manifest(out, cfg, "ablation", complete, runs=runs)
    print(table.read_text(), end="")
    return EXIT_OK if complete else 4


# -- argument parsing ----------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config (or a manifest.json to replay)")
    common.add_argument("--dataset")
    common.add_argument("--schema")
    common.add_argument("--threshold", type=float, action="append", dest="thresholds",
                        help="fixed correlation threshold; repeat for several")
    common.add_argument("--policy", choices=[m.value for m in PolicyMode])
    common.add_argument("--backend", choices=["http", "mock"])
    common.add_argument("--seed", type=int)
    common.add_argument("--dump-prompts", nargs="?", const=True, default=None, metavar="DIR",
                        help="write rendered prompts and manifests (default DIR: <out>/prompts)")
    common.add_argument("--out")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = _Parser(prog="impute-forge", description="Class-grouped LLM imputation for tabular data.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("analyze", parents=[common], help="association profiles, elbows and predictor sets")
    p.add_argument("--emit-thresholds", action="store_true", help="print resolved thresholds as JSON")
    sub.add_parser("impute", parents=[common], help="impute missing cells")
    p = sub.add_parser("evaluate", parents=[common], help="train on complete rows, test on imputed rows")
    p.add_argument("--imputed", action="append", help="imputed CSV (defaults to the runs in the manifest)")
    sub.add_parser("ablation", parents=[common], help="grouped vs ungrouped prompt comparison")
    return parser


def resolve_config(args) -> RunConfig:
    raw: dict = {}
    expected_hash = None
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {args.config} is not valid JSON: {exc}") from None
        if "config" in raw and "config_hash" in raw:
            expected_hash = raw["config_hash"]
            raw = raw["config"]
    cfg = RunConfig.from_dict(raw)
    if expected_hash is not None and cfg.hash() != expected_hash:
        raise UsageError("manifest config does not match its recorded hash")
    if args.dataset:
        cfg.dataset = args.dataset
    if args.schema:
        cfg.schema = args.schema
    if args.thresholds:
        cfg.thresholds = list(args.thresholds)
        if args.policy is None:
            cfg.policy = PolicyMode.FIXED.value
    if args.policy:
        cfg.policy = args.policy
    if args.backend:
        cfg.backend = {**cfg.backend, "kind": args.backend}
    if args.seed is not None:
        cfg.seed = args.seed
    if args.dump_prompts:
        cfg.dump_prompts = args.dump_prompts
    if args.out:
        cfg.out = args.out
    cfg.__post_init__()
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help or a usage error
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = None
    try:
        cfg = resolve_config(args)
        if args.command == "analyze":
            return cmd_analyze(cfg, args.emit_thresholds)
        if args.command == "impute":
            return cmd_impute(cfg)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.imputed)
        return cmd_ablation(cfg)
    except ImputeForgeError as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        print("interrupted; partial manifest written", file=sys.stderr)
        return EXIT_INTERRUPTED


if __name__ == "__main__":
    sys.exit(main())
