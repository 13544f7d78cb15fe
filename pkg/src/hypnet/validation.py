"""Cut-year validation: labeled pairs, batch scoring, ROC curves, reports.

Positive pairs are predicates whose first publication year falls after
the cut year; noise pairs are sampled term pairs that appear in no
predicate at all. Both are scored with every ranking metric and compared
by rank-based AUC.
"""

from __future__ import annotations

import json
import logging
import resource
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import HypnetError
from .query import QueryConfig, run_query
from .ranking import (
    METRIC_NAMES,
    ORIENTATIONS,
    MetricVector,
    PolyModel,
    compute_metric_vector,
    fit_poly_multi,
    score,
)

logger = logging.getLogger(__name__)

NOISE_ATTEMPT_FACTOR = 1000
DEFAULT_VALIDATION_SIZE = 2000


@dataclass(frozen=True)
class PredicateRecord:
    subject: str
    object: str
    first_year: int


def load_predicates(path) -> list[PredicateRecord]:
    """TSV: subject, object, first_year. Malformed lines are skipped."""
    records = []
    skipped = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                skipped += 1
                logger.warning("predicate line %d skipped: wrong column count", lineno)
                continue
            subject, obj, year_text = parts
            try:
                year = int(year_text)
            except ValueError:
                skipped += 1
                logger.warning("predicate line %d skipped: bad year %r", lineno, year_text)
                continue
            if year <= 0 or not subject or not obj or subject == obj:
                skipped += 1
                logger.warning("predicate line %d skipped: invalid record", lineno)
                continue
            records.append(PredicateRecord(subject, obj, year))
    if skipped:
        logger.warning("%d malformed predicate line(s) skipped", skipped)
    return records


def _unordered(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


def build_positive_set(records: list[PredicateRecord], cut_year: int,
                       resolvable) -> list[tuple[str, str]]:
    """Unordered pairs first published after the cut year, both terms
    resolvable. A pair counts as published at its earliest record."""
    first_year: dict[tuple[str, str], int] = {}
    for rec in records:
        pair = _unordered(rec.subject, rec.object)
        year = first_year.get(pair)
        if year is None or rec.first_year < year:
            first_year[pair] = rec.first_year
    out = [
        pair for pair, year in first_year.items()
        if year > cut_year and pair[0] in resolvable and pair[1] in resolvable
    ]
    return sorted(out)


def sample_noise_set(records: list[PredicateRecord], resolvable, n: int,
                     seed: int) -> list[tuple[str, str]]:
    """n distinct unordered pairs of resolvable terms with no record of
    any year, drawn uniformly by rejection sampling."""
    terms = sorted(resolvable)
    if len(terms) < 2:
        raise HypnetError("need at least 2 resolvable terms to sample noise pairs")
    published = {_unordered(r.subject, r.object) for r in records}
    rng = np.random.default_rng(seed)
    chosen: set[tuple[str, str]] = set()
    budget = NOISE_ATTEMPT_FACTOR * n
    attempts = 0
    while len(chosen) < n and attempts < budget:
        attempts += 1
        i, j = rng.integers(0, len(terms), 2)
        if i == j:
            continue
        pair = _unordered(terms[int(i)], terms[int(j)])
        if pair in published or pair in chosen:
            continue
        chosen.add(pair)
    if len(chosen) < n:
        raise HypnetError(
            f"could not sample {n} noise pairs within {budget} attempts "
            f"({len(chosen)} found)")
    return sorted(chosen)


@dataclass
class ValidationSet:
    positives: list[tuple[str, str]]
    negatives: list[tuple[str, str]]
    cut_year: int

    def __post_init__(self):
        if len(self.positives) != len(self.negatives):
            raise HypnetError("positives and negatives must be equal-sized")
        if set(self.positives) & set(self.negatives):
            raise HypnetError("a pair appears in both positives and negatives")

    def labeled_pairs(self) -> list[tuple[tuple[str, str], str]]:
        return ([(p, "positive") for p in self.positives]
                + [(p, "noise") for p in self.negatives])


def build_validation_set(records: list[PredicateRecord], resolvable,
                         cut_year: int, seed: int,
                         size: int = DEFAULT_VALIDATION_SIZE) -> ValidationSet:
    """Equal parts published and noise; scales down when fewer positives
    exist than size/2."""
    positives = build_positive_set(records, cut_year, resolvable)
    n = min(size // 2, len(positives))
    if n == 0:
        raise HypnetError("no resolvable positive pairs after the cut year")
    if n < size // 2:
        logger.warning("only %d positive pairs available; validation set scaled down", n)
    if n < len(positives):
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(len(positives), size=n, replace=False))
        positives = [positives[i] for i in idx]
    negatives = sample_noise_set(records, resolvable, n, seed)
    return ValidationSet(positives, negatives, cut_year)


def save_validation_set(vset: ValidationSet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# cut_year\t{vset.cut_year}\n")
        for (a, b), label in vset.labeled_pairs():
            fh.write(f"{a}\t{b}\t{label}\n")


def load_validation_set(path) -> ValidationSet:
    positives, negatives = [], []
    cut_year = 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("# cut_year"):
                cut_year = int(line.split("\t")[1])
                continue
            if not line.strip():
                continue
            a, b, label = line.split("\t")
            (positives if label == "positive" else negatives).append((a, b))
    return ValidationSet(positives, negatives, cut_year)


# ---------------------------------------------------------------------------
# Batch evaluation
# ---------------------------------------------------------------------------

@dataclass
class ScoreRow:
    pair: tuple[str, str]
    label: str
    metrics: MetricVector
    flag: bool = False


@dataclass
class ScoreTable:
    rows: list[ScoreRow]
    metadata: dict = field(default_factory=dict)

    def column(self, metric: str) -> np.ndarray:
        return np.array([row.metrics.get(metric) for row in self.rows], dtype=np.float64)

    def labels(self) -> list[str]:
        return [row.label for row in self.rows]


WORST_CASE_NATURAL = {"topic_corr": -1.0, "topic_walk_btwn": 0.0}


def _worst_case_fill(rows: list[ScoreRow]) -> None:
    """Give failed pairs the worst value per metric so they can never
    inflate AUC by dropping out.

    Bounded metrics take their true worst value; unbounded (lower-is-
    better) ones take one past the worst observed in this batch.
    """
    good = [r.metrics for r in rows if not r.flag]
    for name in METRIC_NAMES:
        if name in WORST_CASE_NATURAL:
            worst = WORST_CASE_NATURAL[name]
        elif good:
            worst = max(m.get(name) for m in good) + 1.0
        else:
            worst = 1.0
        for row in rows:
            if row.flag:
                setattr(row.metrics, name, worst)


def evaluate_batch(system, vset: ValidationSet, config: QueryConfig,
                   threads: int = 1, neighbors_n: int = 3,
                   system_id: str = "system") -> ScoreTable:
    """Run every validation pair through the query pipeline and score it.

    Pairs whose query fails (unknown term, disconnected, degenerate
    topics) are flagged and given worst-case metric values; the table is
    always complete and ordered like the validation set. Results are
    independent of thread count.
    """
    pairs = vset.labeled_pairs()
    results: list[ScoreRow] = [None] * len(pairs)
    times: list[float] = [0.0] * len(pairs)

    def work(index: int):
        (a, c), label = pairs[index]
        pair_config = replace(config, seed=(config.seed * 1_000_003 + index) % 2**31)
        start = time.perf_counter()
        try:
            res = run_query(system, a, c, pair_config)
            mv = compute_metric_vector(system.space, res.pair.a.key, res.pair.c.key,
                                       res.topics, neighbors_n)
            row = ScoreRow((a, c), label, mv, flag=False)
        except HypnetError as exc:
            logger.warning("pair (%s, %s) failed: %s; worst-case scores assigned",
                           a, c, exc)
            row = ScoreRow((a, c), label,
                           MetricVector(np.nan, np.nan, np.nan, np.nan, np.nan),
                           flag=True)
        times[index] = time.perf_counter() - start
        results[index] = row

    wall_start = time.perf_counter()
    if threads <= 1:
        for i in range(len(pairs)):
            work(i)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, range(len(pairs))))
    wall = time.perf_counter() - wall_start

    _worst_case_fill(results)
    metadata = {
        "system": system_id,
        "seed": config.seed,
        "config": {"p": config.p, "k": config.k,
                   "lda_iterations": config.lda_iterations},
        "n_pairs": len(pairs),
        "n_flagged": sum(r.flag for r in results),
        "runtime_seconds": wall,
        "mean_query_seconds": float(np.mean(times)) if times else 0.0,
        "peak_memory_bytes": resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024,
    }
    return ScoreTable(list(results), metadata)


def fit_table_poly(table: ScoreTable, budget: int = 1_000_000, seed: int = 0) -> PolyModel:
    """Fit the combined metric on a score table and fill its poly column."""
    training = [(row.metrics, row.label) for row in table.rows]
    model = fit_poly_multi(training, budget=budget, seed=seed)
    apply_poly(table, model)
    return model


def apply_poly(table: ScoreTable, model: PolyModel) -> None:
    for row in table.rows:
        row.metrics.poly_multi = score(model, row.metrics)


_TSV_COLUMNS = ["pair_a", "pair_b", "label", *METRIC_NAMES, "poly_multi", "flag"]


def save_score_table(table: ScoreTable, path, metadata_path=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(_TSV_COLUMNS) + "\n")
        for row in table.rows:
            poly = "" if row.metrics.poly_multi is None else repr(float(row.metrics.poly_multi))
            cells = [row.pair[0], row.pair[1], row.label,
                     *(repr(float(row.metrics.get(m))) for m in METRIC_NAMES),
                     poly, "1" if row.flag else "0"]
            fh.write("\t".join(cells) + "\n")
    if metadata_path is not None:
        with open(metadata_path, "w", encoding="utf-8") as fh:
            json.dump(table.metadata, fh, indent=2, sort_keys=True)
            fh.write("\n")


def load_score_table(path, metadata_path=None) -> ScoreTable:
    rows = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header != _TSV_COLUMNS:
            raise HypnetError(f"unexpected score table columns in {path}")
        for line in fh:
            cells = line.rstrip("\n").split("\t")
            metrics = MetricVector(*(float(c) for c in cells[3:8]),
                                   poly_multi=float(cells[8]) if cells[8] else None)
            rows.append(ScoreRow((cells[0], cells[1]), cells[2], metrics,
                                 flag=cells[9] == "1"))
    metadata = {}
    if metadata_path is not None and Path(metadata_path).exists():
        metadata = json.loads(Path(metadata_path).read_text())
    return ScoreTable(rows, metadata)


# ---------------------------------------------------------------------------
# ROC
# ---------------------------------------------------------------------------

@dataclass
class RocCurve:
    points: list[tuple[float, float]]
    auc: float
    metric: str


def roc(scores, labels, metric: str = "") -> RocCurve:
    """Step ROC curve and rank-statistic AUC (ties count 1/2).

    Higher score must mean "predicted positive"; orientation is applied
    by the caller.
    """
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.array([lab == "positive" for lab in labels])
    n_pos = int(positive.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise HypnetError("roc needs both positive and noise labels")

    order = np.argsort(-scores, kind="stable")
    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < len(order):
        j = i
        while j < len(order) and scores[order[j]] == scores[order[i]]:
            tp += bool(positive[order[j]])
            fp += not positive[order[j]]
            j += 1
        points.append((fp / n_neg, tp / n_pos))
        i = j

    auc = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        auc += (x1 - x0) * (y0 + y1) / 2.0
    return RocCurve(points, float(auc), metric)


def table_metrics(table: ScoreTable) -> list[str]:
    metrics = list(METRIC_NAMES)
    if all(row.metrics.poly_multi is not None for row in table.rows):
        metrics.append("poly_multi")
    return metrics


def table_roc(table: ScoreTable, metric: str) -> RocCurve:
    oriented = table.column(metric) * ORIENTATIONS[metric]
    return roc(oriented, table.labels(), metric)


# ---------------------------------------------------------------------------
# Comparison report
# ---------------------------------------------------------------------------

def compare_systems(tables: list[ScoreTable], out_dir) -> dict:
    """AUC matrix TSV, one ROC SVG per system, and a JSON summary with
    runtime and peak-memory figures. Returns the summary dict."""
    if not tables:
        raise HypnetError("compare_systems needs at least one score table")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    metric_sets = [table_metrics(t) for t in tables]
    metrics = [m for m in metric_sets[0] if all(m in s for s in metric_sets)]

    summary = {"systems": [], "best": {}}
    matrix_rows = []
    for table in tables:
        system_id = table.metadata.get("system", f"system{len(matrix_rows)}")
        aucs = {}
        curves = {}
        for metric in metrics:
            curve = table_roc(table, metric)
            aucs[metric] = curve.auc
            curves[metric] = curve
        matrix_rows.append((system_id, aucs))
        summary["systems"].append({
            "system": system_id,
            "auc": aucs,
            "runtime_seconds": table.metadata.get("runtime_seconds"),
            "mean_query_seconds": table.metadata.get("mean_query_seconds"),
            "peak_memory_bytes": table.metadata.get("peak_memory_bytes"),
            "n_flagged": table.metadata.get("n_flagged"),
        })
        _plot_roc(curves, out / f"roc_{system_id}.svg", system_id)

    for metric in metrics:
        best = max(matrix_rows, key=lambda row: row[1][metric])
        summary["best"][metric] = best[0]

    with open(out / "auc_matrix.tsv", "w", encoding="utf-8") as fh:
        fh.write("system\t" + "\t".join(metrics) + "\n")
        for system_id, aucs in matrix_rows:
            fh.write(system_id + "\t"
                     + "\t".join(f"{aucs[m]:.6f}" for m in metrics) + "\n")

    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def _plot_roc(curves: dict[str, RocCurve], path, title: str) -> None:
    from matplotlib.figure import Figure

    fig = Figure(figsize=(5, 5))
    ax = fig.add_subplot(1, 1, 1)
    for metric, curve in curves.items():
        xs = [p[0] for p in curve.points]
        ys = [p[1] for p in curve.points]
        ax.plot(xs, ys, label=f"{metric} ({curve.auc:.3f})")
    ax.plot([0, 1], [0, 1], linestyle=":", color="grey", linewidth=0.8)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title(title)
    ax.legend(loc="lower right", fontsize=8)
    fig.savefig(path, format="svg")
