"""Command-line pipeline: extract, eval, compare, stats, synth.

Every run is driven by a JSON config file plus flag overrides (flags win),
resolved into a :class:`RunConfig`. Reports are machine-readable (JSON and
CSV), contain no timestamps, and embed the resolved config hash and master
seed, so re-running a command with the same config produces byte-identical
outputs regardless of the worker thread count.

Exit codes: 0 success, 1 internal error, 2 invalid input or configuration.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import embed_io, evaluation, features, glm, stats, synth
from .embed_io import DataFormatError
from .schema import SchemaError, TaskSchema, default_schema, load_schema

__all__ = ["RunConfig", "main"]

_ENV_THREADS = "VISRISK_THREADS"


@dataclass
class RunConfig:
    schema: str = "builtin"  # schema file path, or "builtin"
    mode: str = "similarities"  # embeddings | similarities | user_vectors
    embeddings: str | None = None
    similarities: str | None = None
    user_vectors: str | None = None
    users: str | None = None  # cohort users.csv
    images: str | None = None  # cohort images.csv
    temperature: float = features.DEFAULT_TEMPERATURE
    min_images: int | str | None = None  # integer threshold or "median"
    seed: int = 0
    repeats: int = 1000
    train_fraction: float = 0.7
    ttest_mode: str = "pooled"
    fdr_alpha: float = 0.05
    l2_lambda: float = 0.0
    standardize: bool = False
    model_name: str = "model"
    out_dir: str = "out"
    threads: int = 1
    store_runs: bool = True
    plot_data: bool = False

    def validate(self) -> None:
        if self.mode not in ("embeddings", "similarities", "user_vectors"):
            raise ValueError(f"unknown input mode {self.mode!r}")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must be in (0, 1)")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.ttest_mode not in ("pooled", "welch"):
            raise ValueError(f"unknown t-test mode {self.ttest_mode!r}")
        if not 0.0 <= self.fdr_alpha <= 1.0:
            raise ValueError("fdr_alpha must be in [0, 1]")
        if self.l2_lambda < 0.0:
            raise ValueError("l2_lambda must be >= 0")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.min_images is not None and self.min_images != "median":
            if not isinstance(self.min_images, int) or self.min_images < 1:
                raise ValueError("min_images must be a positive integer or 'median'")

    def hash(self) -> str:
        """Hash of the semantic configuration.

        Execution-only knobs (worker threads, output directory) are excluded:
        they must not change any report content, so they cannot change its
        provenance hash either.
        """
        payload = dataclasses.asdict(self)
        payload.pop("threads")
        payload.pop("out_dir")
        return hashlib.sha256(
            json.dumps(payload, sort_keys=True).encode()
        ).hexdigest()[:16]


def _load_config(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, dict):
            raise ValueError(f"{args.config}: config must be a JSON object")
        unknown = set(loaded) - {f.name for f in dataclasses.fields(RunConfig)}
        if unknown:
            raise ValueError(f"{args.config}: unknown config key(s) {sorted(unknown)}")
        values.update(loaded)
    for field_ in dataclasses.fields(RunConfig):
        override = getattr(args, field_.name, None)
        if override is not None:
            values[field_.name] = override
    if "threads" not in values and os.environ.get(_ENV_THREADS):
        values["threads"] = int(os.environ[_ENV_THREADS])
    if isinstance(values.get("min_images"), str) and values["min_images"] != "median":
        values["min_images"] = int(values["min_images"])
    config = RunConfig(**values)
    config.validate()
    return config


def _resolve_schema(config: RunConfig) -> TaskSchema:
    if config.schema == "builtin":
        return default_schema()
    return load_schema(config.schema)


def _extract_pipeline(config: RunConfig, schema: TaskSchema):
    """Score every image and aggregate per user (modes with raw inputs)."""
    if config.mode == "similarities":
        if not config.similarities:
            raise ValueError("mode 'similarities' needs the similarities path")
        matrix = embed_io.load_similarities(config.similarities, schema)
    elif config.mode == "embeddings":
        if not config.embeddings:
            raise ValueError("mode 'embeddings' needs the embeddings path")
        records = embed_io.load_embeddings(config.embeddings)
        images = [r for r in records if r.kind == "image"]
        by_id = {r.id: r for r in records if r.kind == "query"}
        missing = [qid for qid in schema.query_ids if qid not in by_id]
        if missing:
            raise DataFormatError(
                f"{config.embeddings}: no query record for schema id(s) {missing}"
            )
        if not images:
            raise DataFormatError(f"{config.embeddings}: no image records")
        queries = [by_id[qid] for qid in schema.query_ids]
        matrix = embed_io.cosine_similarities(images, queries)
    else:
        raise ValueError(f"mode {config.mode!r} has no raw image inputs to extract")

    feats = features.score_similarity_matrix(matrix, schema, config.temperature)

    users = None
    if config.users and config.images:
        manifest = embed_io.load_cohort(config.users, config.images)
        if config.min_images is not None:
            manifest = embed_io.filter_min_images(manifest, config.min_images)
        by_image = {f.image_id: f for f in feats}
        users = []
        for user in manifest.users:
            missing = [i for i in user.image_ids if i not in by_image]
            if missing:
                raise DataFormatError(
                    f"user {user.user_id!r}: no similarity rows for image(s) "
                    f"{missing[:5]}{'...' if len(missing) > 5 else ''}"
                )
            users.append(
                features.aggregate_user(
                    [by_image[i] for i in user.image_ids], user.user_id, user.label
                )
            )
    return feats, users


def _load_user_vectors(config: RunConfig, schema: TaskSchema) -> list[features.UserVector]:
    if config.mode == "user_vectors":
        if not config.user_vectors:
            raise ValueError("mode 'user_vectors' needs the user_vectors path")
        return features.read_user_vectors_csv(config.user_vectors, schema)
    _, users = _extract_pipeline(config, schema)
    if users is None:
        raise ValueError(
            "user vectors require the cohort files (users/images CSVs) in "
            f"mode {config.mode!r}"
        )
    return users


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _report_from_eval(report: evaluation.EvalReport, config: RunConfig,
                      n_users: int, n_features: int) -> dict:
    doc = {
        "model_name": report.model_name,
        "plan": {
            "master_seed": report.plan.master_seed,
            "n_repeats": report.plan.n_repeats,
            "train_fraction": report.plan.train_fraction,
        },
        "mean_auc": report.mean_auc,
        "ci95": list(report.ci95) if report.ci95 is not None else None,
        "cohens_d": report.cohens_d,
        "n_skipped": report.n_skipped,
        "n_users": n_users,
        "n_features": n_features,
        "config_hash": config.hash(),
    }
    if report.ci95 is None:
        doc["note"] = "single repeat: no confidence interval"
    if config.store_runs:
        doc["aucs"] = [float(a) for a in report.aucs]
    return doc


def cmd_extract(config: RunConfig) -> int:
    schema = _resolve_schema(config)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    feats, users = _extract_pipeline(config, schema)
    features.write_image_features_csv(out / "image_features.csv", feats, schema)
    print(f"scored {len(feats)} images x {schema.dimension} features")
    summary = {
        "config_hash": config.hash(),
        "n_images": len(feats),
        "dimension": schema.dimension,
        "temperature": config.temperature,
    }
    if users is not None:
        features.write_user_vectors_csv(out / "user_vectors.csv", users, schema)
        print(f"aggregated {len(users)} users")
        summary["n_users"] = len(users)
    _write_json(out / "extract_summary.json", summary)
    return 0


def cmd_eval(config: RunConfig) -> int:
    schema = _resolve_schema(config)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    users = _load_user_vectors(config, schema)
    design = features.build_design_matrix(users, schema)
    plan = evaluation.SplitPlan(
        master_seed=config.seed,
        n_repeats=config.repeats,
        train_fraction=config.train_fraction,
    )
    report = evaluation.repeated_splits(
        design.X, design.y, plan,
        trainer=evaluation.irls_trainer(config.l2_lambda),
        model_name=config.model_name,
        n_threads=config.threads,
    )
    doc = _report_from_eval(report, config, len(users), schema.dimension)
    _write_json(out / "eval_report.json", doc)
    if config.plot_data:
        _write_plot_data(out, report, design)
    ci = f" ci95=({report.ci95[0]:.4f}, {report.ci95[1]:.4f})" if report.ci95 else ""
    print(f"{report.model_name}: mean AUC {report.mean_auc:.4f}{ci} "
          f"over {plan.n_repeats} splits ({report.n_skipped} redraws)")
    return 0


def _write_plot_data(out: Path, report: evaluation.EvalReport,
                     design: features.DesignMatrix) -> None:
    edges = np.linspace(0.0, 1.0, 51)
    counts, _ = np.histogram(report.aucs, bins=edges)
    with open(out / "auc_histogram.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("bin_low,bin_high,count\n")
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            fh.write(f"{lo!r},{hi!r},{int(c)}\n")
    model = glm.fit_irls(design.X, design.y)
    scores = glm.predict_proba(model, design.X)
    points = evaluation.roc_points(scores, design.y)
    with open(out / "roc_points.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("threshold,fpr,tpr\n")
        for thr, fpr, tpr in points:
            fh.write(f"{thr!r},{fpr!r},{tpr!r}\n")


def cmd_compare(config: RunConfig, report_a: str, report_b: str) -> int:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    docs = []
    for path in (report_a, report_b):
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        if "aucs" not in doc:
            raise DataFormatError(
                f"{path}: report has no per-run AUCs; re-run eval with store_runs"
            )
        docs.append(doc)
    result = evaluation.compare_models_ttest(
        np.array(docs[0]["aucs"]), np.array(docs[1]["aucs"])
    )
    comparison = {
        "model_a": docs[0].get("model_name"),
        "model_b": docs[1].get("model_name"),
        "mean_a": result.mean_a,
        "mean_b": result.mean_b,
        "delta": result.delta,
        "t": result.t,
        "p": result.p,
        "df": result.df,
        "config_hash": config.hash(),
    }
    _write_json(out / "comparison.json", comparison)
    print(f"{comparison['model_a']} vs {comparison['model_b']}: "
          f"t={result.t:.3f} p={result.p:.3g}")
    return 0


def cmd_stats(config: RunConfig) -> int:
    schema = _resolve_schema(config)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    users = _load_user_vectors(config, schema)
    comparisons = stats.feature_group_comparisons(users, schema, mode=config.ttest_mode)
    comparisons, fdr = stats.apply_fdr(comparisons, alpha=config.fdr_alpha)
    significant = [c for c in comparisons if c.significant_fdr]
    pruned = stats.prune_complements(significant, schema)

    regression = None
    regression_note = None
    if len(pruned.kept) >= 2:
        try:
            regression = stats.full_sample_regression(
                users, [c.feature_id for c in pruned.kept], schema,
                l2_lambda=config.l2_lambda, standardize=config.standardize,
            )
        except (ValueError, RuntimeError) as exc:
            regression_note = f"regression skipped: {exc}"
    else:
        regression_note = (
            f"regression skipped: only {len(pruned.kept)} significant feature(s) "
            "after pruning"
        )

    stats.write_feature_report_csv(out / "stats_report.csv", comparisons, regression)
    summary = {
        "ttest_mode": config.ttest_mode,
        "fdr_alpha": fdr.alpha,
        "n_features": fdr.m,
        "n_significant": fdr.n_rejected,
        "dropped_complements": list(pruned.dropped_ids),
        "regression_features": [c.feature_id for c in pruned.kept],
        "config_hash": config.hash(),
    }
    if regression is not None:
        summary["regression"] = {
            "intercept": regression.intercept,
            "intercept_se": regression.intercept_se,
            "rows": [dataclasses.asdict(r) for r in regression.rows],
        }
    if regression_note:
        summary["note"] = regression_note
    _write_json(out / "stats_summary.json", summary)
    print(f"{fdr.n_rejected}/{fdr.m} features FDR-significant at alpha={fdr.alpha}; "
          f"{len(pruned.dropped_ids)} complement(s) pruned")
    return 0


def cmd_synth(config: RunConfig, preset: str, spec_path: str | None,
              level: str, n_pos: int | None, n_neg: int | None,
              latent_rho: float | None) -> int:
    schema = _resolve_schema(config)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if spec_path:
        spec = _cohort_spec_from_json(spec_path, config.seed, level)
    else:
        kwargs = {}
        if n_pos is not None:
            kwargs["n_pos"] = n_pos
        if n_neg is not None:
            kwargs["n_neg"] = n_neg
        if preset == "table4":
            if latent_rho is not None:
                kwargs["latent_rho"] = latent_rho
            spec = synth.table4_preset(seed=config.seed, level=level, **kwargs)
        elif preset == "zero-effect":
            spec = synth.zero_effect_preset(seed=config.seed, level=level, **kwargs)
        else:
            raise ValueError(f"unknown preset {preset!r}")
    cohort = synth.generate_cohort(spec, schema)
    if spec.level == "user_vectors":
        features.write_user_vectors_csv(out / "user_vectors.csv", cohort, schema)
        print(f"wrote {len(cohort)} synthetic user vectors")
    else:
        embed_io.write_similarities(out / "similarities.jsonl", cohort.similarities)
        embed_io.write_cohort(out / "users.csv", out / "images.csv", cohort.manifest)
        print(f"wrote {len(cohort.similarities.image_ids)} synthetic images for "
              f"{len(cohort.manifest.users)} users")
    _write_json(out / "synth_summary.json", {
        "config_hash": config.hash(),
        "seed": spec.seed,
        "level": spec.level,
        "n_pos": spec.n_pos,
        "n_neg": spec.n_neg,
    })
    return 0


def _cohort_spec_from_json(path: str, seed: int, level: str) -> synth.CohortSpec:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    feats = {
        qid: synth.FeatureEffect(**moments)
        for qid, moments in doc.pop("features").items()
    }
    doc.setdefault("seed", seed)
    doc.setdefault("level", level)
    if "images_per_user" in doc:
        doc["images_per_user"] = tuple(doc["images_per_user"])
    return synth.CohortSpec(features=feats, **doc)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override it")
    parser.add_argument("--schema", help="schema file path, or 'builtin'")
    parser.add_argument("--mode", choices=["embeddings", "similarities", "user_vectors"])
    parser.add_argument("--embeddings", help="embeddings JSONL path")
    parser.add_argument("--similarities", help="similarities JSONL path")
    parser.add_argument("--user-vectors", dest="user_vectors", help="user-vector CSV path")
    parser.add_argument("--users", help="cohort users.csv")
    parser.add_argument("--images", help="cohort images.csv")
    parser.add_argument("--temperature", type=float)
    parser.add_argument("--min-images", dest="min_images",
                        help="minimum images per user (integer or 'median')")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--repeats", type=int)
    parser.add_argument("--train-fraction", dest="train_fraction", type=float)
    parser.add_argument("--ttest-mode", dest="ttest_mode", choices=["pooled", "welch"])
    parser.add_argument("--fdr-alpha", dest="fdr_alpha", type=float)
    parser.add_argument("--l2-lambda", dest="l2_lambda", type=float)
    parser.add_argument("--standardize", action="store_const", const=True, default=None)
    parser.add_argument("--model-name", dest="model_name")
    parser.add_argument("--out-dir", dest="out_dir")
    parser.add_argument("--threads", type=int,
                        help=f"worker threads (default ${_ENV_THREADS} or 1)")
    parser.add_argument("--no-per-run", dest="store_runs", action="store_const",
                        const=False, default=None,
                        help="omit per-run AUCs from eval reports")
    parser.add_argument("--plot-data", dest="plot_data", action="store_const",
                        const=True, default=None,
                        help="emit ROC points and AUC histogram CSVs")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="visrisk",
        description="Interpretable image-feature risk prediction pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_extract = sub.add_parser("extract", help="score images and aggregate users")
    _add_config_flags(p_extract)

    p_eval = sub.add_parser("eval", help="repeated-split AUC evaluation")
    _add_config_flags(p_eval)

    p_compare = sub.add_parser("compare", help="t-test two eval reports")
    _add_config_flags(p_compare)
    p_compare.add_argument("report_a")
    p_compare.add_argument("report_b")

    p_stats = sub.add_parser("stats", help="full-sample feature statistics")
    _add_config_flags(p_stats)

    p_synth = sub.add_parser("synth", help="generate a synthetic cohort")
    _add_config_flags(p_synth)
    p_synth.add_argument("--preset", default="table4",
                         choices=["table4", "zero-effect"])
    p_synth.add_argument("--spec", dest="spec_path",
                         help="CohortSpec JSON (overrides --preset)")
    p_synth.add_argument("--level", default="user_vectors",
                         choices=["user_vectors", "image_logits"])
    p_synth.add_argument("--n-pos", dest="n_pos", type=int)
    p_synth.add_argument("--n-neg", dest="n_neg", type=int)
    p_synth.add_argument("--latent-rho", dest="latent_rho", type=float)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        config = _load_config(args)
        if args.command == "extract":
            return cmd_extract(config)
        if args.command == "eval":
            return cmd_eval(config)
        if args.command == "compare":
            return cmd_compare(config, args.report_a, args.report_b)
        if args.command == "stats":
            return cmd_stats(config)
        if args.command == "synth":
            return cmd_synth(config, args.preset, args.spec_path, args.level,
                             args.n_pos, args.n_neg, args.latent_rho)
        parser.error(f"unknown command {args.command!r}")
    except (SchemaError, DataFormatError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0
