"""Command-line interface: build systems, run queries, reproduce studies.

Every command takes --seed/--threads/--deterministic/--config; flag
values beat config-file values beat defaults. Logs go to stderr, data to
files or stdout. Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .corpus import (
    corpus_stats,
    cut_year_filter,
    halve_sample,
    ingest,
    load_default_stopwords,
    load_stopwords,
    load_tokenized,
    save_corpus,
    stats_tsv,
    tokenize_corpus,
)
from .errors import HypnetError
from .network import load_backbone
from .query import QueryConfig, run_query
from .ranking import PolyModel
from .system import HypothesisSystem, PipelineConfig, build_system, digest_file
from .validation import (
    ScoreTable,
    build_validation_set,
    compare_systems,
    evaluate_batch,
    fit_table_poly,
    load_predicates,
    load_score_table,
    load_validation_set,
    save_score_table,
    save_validation_set,
)

logger = logging.getLogger(__name__)

_CONFIG_FIELDS = {f.name: f.type for f in dataclasses.fields(PipelineConfig)}


class UsageError(Exception):
    pass


def _read_config_file(path) -> dict:
    """Flat key=value text; types coerced against the pipeline config."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, _, raw = line.partition("=")
            key, raw = key.strip(), raw.strip()
            if key not in _CONFIG_FIELDS:
                raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
            default = getattr(PipelineConfig(), key)
            if isinstance(default, bool):
                values[key] = raw.lower() in ("1", "true", "yes")
            elif isinstance(default, int):
                values[key] = int(raw)
            elif isinstance(default, float):
                values[key] = float(raw)
            else:
                values[key] = raw
    return values


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--deterministic", action=argparse.BooleanOptionalAction,
                        default=None)
    parser.add_argument("--config", type=Path, default=None,
                        help="flat key=value config file")


def _add_overrides(parser: argparse.ArgumentParser) -> None:
    for name in ("dim", "knn-k", "cross-top-m", "p", "k-topics", "lda-iterations",
                 "cut-year", "window", "negatives", "epochs", "min-count",
                 "max-ngram", "phrase-min-count", "walk-neighbors"):
        parser.add_argument(f"--{name}", type=int, default=None)
    parser.add_argument("--learning-rate", type=float, default=None)
    parser.add_argument("--phrase-min-score", type=float, default=None)
    parser.add_argument("--knn-method", choices=["exact", "rp_tree"], default=None)


def _build_config(args) -> PipelineConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(_read_config_file(args.config))
    mapping = {
        "seed": "seed",
        "threads": "thread_count",
        "deterministic": "deterministic",
    }
    for name in _CONFIG_FIELDS:
        mapping.setdefault(name, name)
    for arg_name, cfg_name in mapping.items():
        value = getattr(args, arg_name, None)
        if value is not None:
            values[cfg_name] = value
    try:
        return PipelineConfig.from_dict(values) if set(values) else PipelineConfig()
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {p}")
    return p


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_build(args) -> int:
    config = _build_config(args)
    corpus_path = _require_file(args.corpus, "corpus")
    inputs = {str(corpus_path): digest_file(corpus_path)}
    backbone = None
    if args.backbone:
        backbone_path = _require_file(args.backbone, "backbone")
        backbone = load_backbone(backbone_path)
        inputs[str(backbone_path)] = digest_file(backbone_path)
    stopwords = load_default_stopwords()
    if args.stopwords:
        stopwords = load_stopwords(_require_file(args.stopwords, "stopword list"))

    out = Path(args.out)
    corpus = ingest(corpus_path)
    logger.info("ingested %d documents (%d rejected)", len(corpus), corpus.n_rejected)
    system, stages = build_system(corpus, config, backbone=backbone,
                                  stopwords=stopwords, system_id=out.name)
    system.save(out, input_digests=inputs, stages=stages)
    logger.info("system written to %s", out)
    return 0


def cmd_stats(args) -> int:
    rows = []
    for path in args.corpus:
        p = _require_file(path, "corpus")
        with open(p, encoding="utf-8") as fh:
            head = fh.readline()
        if '"tokens"' in head:
            tokenized = load_tokenized(p)
        else:
            tokenized = tokenize_corpus(ingest(p), load_default_stopwords())
        rows.append((p.name, corpus_stats(tokenized)))
    sys.stdout.write(stats_tsv(rows))
    return 0


def cmd_sample(args) -> int:
    config = _build_config(args)
    corpus_path = _require_file(args.corpus, "corpus")
    corpus = ingest(corpus_path)
    if args.cut_year is not None:
        corpus = cut_year_filter(corpus, config.cut_year)
    levels = halve_sample(corpus, levels=args.levels, seed=config.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, level in enumerate(levels):
        path = out / f"corpus_{i}.jsonl"
        save_corpus(level, path)
        logger.info("level %d: %d documents -> %s", i, len(level), path)
    return 0


def cmd_query(args) -> int:
    config = _build_config(args)
    system = HypothesisSystem.load(_require_file(args.system, "system directory"))
    qc = QueryConfig(p=config.p, k=config.k_topics,
                     lda_iterations=config.lda_iterations, seed=config.seed)
    result = run_query(system, args.a, args.c, qc)
    report = json.dumps(result.to_json_dict(), indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(report + "\n", encoding="utf-8")
    else:
        sys.stdout.write(report + "\n")
    return 0


def cmd_validate(args) -> int:
    config = _build_config(args)
    system = HypothesisSystem.load(_require_file(args.system, "system directory"))
    qc = QueryConfig(p=config.p, k=config.k_topics,
                     lda_iterations=config.lda_iterations, seed=config.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.pairs:
        vset = load_validation_set(_require_file(args.pairs, "validation set"))
    else:
        if not args.predicates:
            raise UsageError("validate needs --predicates or --pairs")
        records = load_predicates(_require_file(args.predicates, "predicate file"))
        vset = build_validation_set(records, system.resolvable_terms(),
                                    cut_year=config.cut_year, seed=config.seed,
                                    size=args.size)
        save_validation_set(vset, out / "validation_set.tsv")
    table = evaluate_batch(system, vset, qc, threads=config.effective_threads,
                           neighbors_n=config.walk_neighbors,
                           system_id=system.system_id)
    save_score_table(table, out / "score_table.tsv", out / "score_metadata.json")
    logger.info("scored %d pairs (%d flagged) -> %s", len(table.rows),
                table.metadata["n_flagged"], out / "score_table.tsv")
    return 0


def cmd_fit_metric(args) -> int:
    config = _build_config(args)
    table_path = _require_file(args.scores, "score table")
    meta_path = Path(args.scores).with_name("score_metadata.json")
    table = load_score_table(table_path, meta_path if meta_path.exists() else None)
    model = fit_table_poly(table, budget=args.budget, seed=config.seed)
    save_score_table(table, table_path, meta_path if meta_path.exists() else None)
    Path(args.model_out).write_text(model.to_json() + "\n", encoding="utf-8")
    logger.info("fitted combined metric: training AUC %.4f", model.training_auc)
    return 0


def cmd_compare(args) -> int:
    tables = []
    for path in args.tables:
        p = _require_file(path, "score table")
        meta = p.with_name("score_metadata.json")
        tables.append(load_score_table(p, meta if meta.exists() else None))
    summary = compare_systems(tables, args.out)
    sys.stdout.write(json.dumps(summary["best"], indent=2, sort_keys=True) + "\n")
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hypnet",
        description="literature-based hypothesis generation over knowledge networks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="build a system from a JSONL corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--backbone", default=None)
    p.add_argument("--stopwords", default=None)
    p.add_argument("--out", required=True)
    _add_common(p)
    _add_overrides(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("stats", help="corpus statistics as TSV")
    p.add_argument("corpus", nargs="+")
    _add_common(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("sample", help="nested halves of a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--levels", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--cut-year", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("query", help="run one term-pair query")
    p.add_argument("--system", required=True)
    p.add_argument("--a", required=True)
    p.add_argument("--c", required=True)
    p.add_argument("--out", default=None)
    _add_common(p)
    _add_overrides(p)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("validate", help="score a validation set on a system")
    p.add_argument("--system", required=True)
    p.add_argument("--predicates", default=None)
    p.add_argument("--pairs", default=None, help="reuse a saved validation set")
    p.add_argument("--size", type=int, default=2000)
    p.add_argument("--out", required=True)
    _add_common(p)
    _add_overrides(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("fit-metric", help="fit the combined metric on a score table")
    p.add_argument("--scores", required=True)
    p.add_argument("--model-out", required=True)
    p.add_argument("--budget", type=int, default=1_000_000)
    _add_common(p)
    p.set_defaults(func=cmd_fit_metric)

    p = sub.add_parser("compare", help="compare score tables across systems")
    p.add_argument("--tables", nargs="+", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except HypnetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
