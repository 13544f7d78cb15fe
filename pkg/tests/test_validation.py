import itertools
import json
import math

import numpy as np
import pytest

from hypnet.errors import HypnetError
from hypnet.query import QueryConfig
from hypnet.ranking import METRIC_NAMES, ORIENTATIONS
from hypnet.system import PipelineConfig, build_system
from hypnet.validation import (
    PredicateRecord,
    ScoreRow,
    ScoreTable,
    ValidationSet,
    build_positive_set,
    build_validation_set,
    compare_systems,
    evaluate_batch,
    fit_table_poly,
    load_predicates,
    load_score_table,
    load_validation_set,
    roc,
    sample_noise_set,
    save_score_table,
    save_validation_set,
    table_roc,
)

from synth import bridge_corpus


def rec(s, o, y):
    return PredicateRecord(s, o, y)


class TestLoadPredicates:
    def test_three_valid_lines(self, tmp_path):
        path = tmp_path / "preds.tsv"
        path.write_text("alpha\tbeta\t2015\ngamma\tdelta\t2012\nx\ty\t2016\n")
        records = load_predicates(path)
        assert len(records) == 3
        assert records[0] == PredicateRecord("alpha", "beta", 2015)

    def test_bad_year_skipped(self, tmp_path, caplog):
        path = tmp_path / "preds.tsv"
        path.write_text("a\tb\t2015\nc\td\tnot-a-year\n")
        with caplog.at_level("WARNING"):
            records = load_predicates(path)
        assert len(records) == 1
        assert any("bad year" in m for m in caplog.messages)

    def test_wrong_columns_and_self_pairs_skipped(self, tmp_path):
        path = tmp_path / "preds.tsv"
        path.write_text("a\tb\n" "a\ta\t2015\n" "ok\tpair\t2015\n")
        assert len(load_predicates(path)) == 1

    def test_unreadable_fatal(self, tmp_path):
        with pytest.raises(OSError):
            load_predicates(tmp_path / "missing.tsv")

    def test_1000_line_fixture_line_count_oracle(self, tmp_path):
        rng = np.random.default_rng(0)
        path = tmp_path / "preds.tsv"
        n_bad = 0
        with open(path, "w") as fh:
            for i in range(1000):
                if rng.random() < 0.1:
                    fh.write(f"bad line {i}\n")
                    n_bad += 1
                else:
                    fh.write(f"s{i}\to{i}\t{2000 + i % 20}\n")
        with open(path) as fh:
            n_lines = sum(1 for _ in fh)
        records = load_predicates(path)
        assert n_lines == 1000
        assert len(records) == 1000 - n_bad


class TestBuildPositiveSet:
    def test_earlier_occurrence_excludes(self):
        records = [rec("a", "b", 2013), rec("a", "b", 2016)]
        assert build_positive_set(records, 2014, {"a", "b"}) == []

    def test_first_after_cut_included(self):
        records = [rec("a", "b", 2015)]
        assert build_positive_set(records, 2014, {"a", "b"}) == [("a", "b")]

    def test_unresolvable_terms_excluded(self):
        records = [rec("a", "b", 2016), rec("c", "d", 2016)]
        assert build_positive_set(records, 2014, {"a", "b", "c"}) == [("a", "b")]

    def test_pairs_unordered_and_deduplicated(self):
        records = [rec("b", "a", 2016), rec("a", "b", 2017)]
        assert build_positive_set(records, 2014, {"a", "b"}) == [("a", "b")]

    def test_matches_groupby_min_year_oracle(self):
        rng = np.random.default_rng(1)
        terms = [f"t{i}" for i in range(12)]
        records = []
        for _ in range(300):
            i, j = rng.integers(0, len(terms), 2)
            if i == j:
                continue
            records.append(rec(terms[i], terms[j], int(rng.integers(2005, 2020))))
        resolvable = set(terms[:9])
        got = build_positive_set(records, 2014, resolvable)

        by_pair = {}
        for r in records:
            key = tuple(sorted((r.subject, r.object)))
            by_pair.setdefault(key, []).append(r.first_year)
        expected = sorted(
            pair for pair, years in by_pair.items()
            if min(years) > 2014 and pair[0] in resolvable and pair[1] in resolvable)
        assert got == expected


class TestSampleNoiseSet:
    def test_exhaustion_error(self):
        records = [rec("a", "b", 2010)]
        with pytest.raises(HypnetError):
            sample_noise_set(records, {"a", "b"}, n=1, seed=0)

    def test_samples_only_from_unpublished_pairs(self):
        # 4 terms, one published pair -> 5 candidate noise pairs
        records = [rec("a", "b", 2010)]
        terms = {"a", "b", "c", "d"}
        all_pairs = {tuple(sorted(p)) for p in itertools.combinations(sorted(terms), 2)}
        candidates = all_pairs - {("a", "b")}
        assert len(candidates) == 5
        got = sample_noise_set(records, terms, n=5, seed=3)
        assert set(got) == candidates
        for _ in range(5):
            sub = sample_noise_set(records, terms, n=2, seed=_)
            assert set(sub) <= candidates

    def test_deterministic(self):
        records = [rec("a", "b", 2010)]
        terms = {f"t{i}" for i in range(30)}
        s1 = sample_noise_set(records, terms, n=10, seed=9)
        s2 = sample_noise_set(records, terms, n=10, seed=9)
        assert s1 == s2

    def test_disjoint_from_positives(self):
        rng = np.random.default_rng(2)
        terms = [f"t{i}" for i in range(15)]
        records = []
        for _ in range(80):
            i, j = rng.integers(0, len(terms), 2)
            if i != j:
                records.append(rec(terms[i], terms[j], int(rng.integers(2010, 2020))))
        positives = build_positive_set(records, 2014, set(terms))
        noise = sample_noise_set(records, set(terms), n=10, seed=0)
        assert not (set(positives) & set(noise))


class TestValidationSet:
    def test_equal_sizes_enforced(self):
        with pytest.raises(HypnetError):
            ValidationSet([("a", "b")], [], 2014)

    def test_overlap_rejected(self):
        with pytest.raises(HypnetError):
            ValidationSet([("a", "b")], [("a", "b")], 2014)

    def test_round_trip(self, tmp_path):
        vset = ValidationSet([("a", "b"), ("c", "d")], [("e", "f"), ("g", "h")], 2014)
        path = tmp_path / "vset.tsv"
        save_validation_set(vset, path)
        loaded = load_validation_set(path)
        assert loaded.positives == vset.positives
        assert loaded.negatives == vset.negatives
        assert loaded.cut_year == 2014

    def test_build_scales_down(self, caplog):
        records = [rec("a", "b", 2016), rec("c", "d", 2016)]
        terms = {"a", "b", "c", "d", "e", "f"}
        with caplog.at_level("WARNING"):
            vset = build_validation_set(records, terms, cut_year=2014, seed=0, size=2000)
        assert len(vset.positives) == 2
        assert len(vset.negatives) == 2
        assert any("scaled down" in m for m in caplog.messages)


class TestRoc:
    def test_perfect_separation(self):
        curve = roc([0.9, 0.8, 0.7, 0.1], ["positive", "positive", "noise", "noise"])
        assert curve.auc == 1.0

    def test_three_of_four_ordered(self):
        curve = roc([0.9, 0.4, 0.7, 0.1], ["positive", "positive", "noise", "noise"])
        assert curve.auc == pytest.approx(0.75, rel=1e-12)

    def test_swapped_labels_zero(self):
        curve = roc([0.9, 0.8, 0.7, 0.1], ["noise", "noise", "positive", "positive"])
        assert curve.auc == 0.0

    def test_single_label_error(self):
        with pytest.raises(HypnetError):
            roc([0.5, 0.6], ["positive", "positive"])

    def test_curve_anchored_and_monotone(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            n = int(rng.integers(4, 50))
            scores = rng.standard_normal(n)
            labels = ["positive" if rng.random() < 0.5 else "noise" for _ in range(n)]
            if len(set(labels)) < 2:
                continue
            curve = roc(scores, labels)
            assert curve.points[0] == (0.0, 0.0)
            assert curve.points[-1] == (1.0, 1.0)
            xs = [p[0] for p in curve.points]
            ys = [p[1] for p in curve.points]
            assert all(a <= b + 1e-15 for a, b in zip(xs, xs[1:]))
            assert all(a <= b + 1e-15 for a, b in zip(ys, ys[1:]))

    def test_ties_count_half(self):
        curve = roc([0.5, 0.5], ["positive", "noise"])
        assert curve.auc == pytest.approx(0.5, rel=1e-12)

    def test_matches_pair_counting_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            n = int(rng.integers(4, 60))
            scores = np.round(rng.standard_normal(n), 1)  # force some ties
            labels = ["positive" if rng.random() < 0.5 else "noise" for _ in range(n)]
            if len(set(labels)) < 2:
                continue
            curve = roc(scores, labels)
            pos = [s for s, l in zip(scores, labels) if l == "positive"]
            neg = [s for s, l in zip(scores, labels) if l == "noise"]
            wins = sum(1.0 if p > q else 0.5 if p == q else 0.0
                       for p in pos for q in neg)
            assert curve.auc == pytest.approx(wins / (len(pos) * len(neg)), abs=1e-12)

    def test_invariant_under_increasing_transform(self):
        rng = np.random.default_rng(5)
        scores = rng.standard_normal(40)
        labels = ["positive" if i < 20 else "noise" for i in range(40)]
        a1 = roc(scores, labels).auc
        a2 = roc(np.exp(scores) * 3 + 7, labels).auc
        assert a1 == pytest.approx(a2, abs=1e-12)

    def test_random_balanced_near_half(self):
        hits = 0
        for seed in range(40):
            rng = np.random.default_rng(seed)
            scores = rng.random(2000)
            labels = ["positive"] * 1000 + ["noise"] * 1000
            auc = roc(scores, labels).auc
            hits += 0.45 <= auc <= 0.55
        assert hits >= 38


@pytest.fixture(scope="module")
def small_system():
    corpus, records, triples = bridge_corpus(seed=7, n_triples=12, docs_per_link=8,
                                             n_distractors=25, distractor_docs=80,
                                             pad=6)
    config = PipelineConfig(dim=32, knn_k=4, cross_top_m=4, p=20, k_topics=3,
                            lda_iterations=40, cut_year=2014, seed=7,
                            phrase_min_count=10**6, epochs=4)
    system, _ = build_system(corpus, config, system_id="small")
    return system, records, config


class TestEvaluateBatch:
    def test_smoke_four_pairs(self, small_system):
        system, records, config = small_system
        vset = ValidationSet(
            [("anode00", "cnode00"), ("anode01", "cnode01")],
            [("anode00", "cnode05"), ("filler000", "filler013")],
            cut_year=2014)
        table = evaluate_batch(system, vset, config.query_config())
        assert len(table.rows) == 4
        for row in table.rows:
            assert np.isfinite(row.metrics.as_array()).all()
        assert [r.label for r in table.rows] == ["positive", "positive", "noise", "noise"]

    def test_unknown_pair_flagged_worst_case(self, small_system):
        system, records, config = small_system
        vset = ValidationSet(
            [("anode00", "cnode00")],
            [("anode01", "zz-unknown-term")],
            cut_year=2014)
        table = evaluate_batch(system, vset, config.query_config())
        flagged = [r for r in table.rows if r.flag]
        assert len(flagged) == 1
        good = [r for r in table.rows if not r.flag]
        for name in METRIC_NAMES:
            worst = flagged[0].metrics.get(name)
            for row in good:
                oriented_w = worst * ORIENTATIONS[name]
                oriented_g = row.metrics.get(name) * ORIENTATIONS[name]
                assert oriented_w <= oriented_g

    def test_deterministic_rerun(self, small_system, tmp_path):
        system, records, config = small_system
        vset = build_validation_set(records, system.resolvable_terms(),
                                    cut_year=2014, seed=1, size=8)
        qc = config.query_config()
        t1 = evaluate_batch(system, vset, qc)
        t2 = evaluate_batch(system, vset, qc)
        p1, p2 = tmp_path / "a.tsv", tmp_path / "b.tsv"
        save_score_table(t1, p1)
        save_score_table(t2, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_thread_count_does_not_change_results(self, small_system, tmp_path):
        system, records, config = small_system
        vset = build_validation_set(records, system.resolvable_terms(),
                                    cut_year=2014, seed=2, size=8)
        qc = config.query_config()
        t1 = evaluate_batch(system, vset, qc, threads=1)
        t4 = evaluate_batch(system, vset, qc, threads=4)
        p1, p4 = tmp_path / "t1.tsv", tmp_path / "t4.tsv"
        save_score_table(t1, p1)
        save_score_table(t4, p4)
        assert p1.read_bytes() == p4.read_bytes()

    def test_metadata_recorded(self, small_system):
        system, records, config = small_system
        vset = build_validation_set(records, system.resolvable_terms(),
                                    cut_year=2014, seed=3, size=4)
        table = evaluate_batch(system, vset, config.query_config(), system_id="sysX")
        md = table.metadata
        assert md["system"] == "sysX"
        assert md["n_pairs"] == len(table.rows)
        assert md["runtime_seconds"] > 0
        assert md["peak_memory_bytes"] > 0


class TestScoreTableIo:
    def make_table(self, with_poly=False):
        rows = []
        rng = np.random.default_rng(6)
        for i in range(12):
            from hypnet.ranking import MetricVector
            mv = MetricVector(*rng.uniform(0.1, 2.0, size=5))
            if with_poly:
                mv.poly_multi = float(rng.random())
            rows.append(ScoreRow((f"a{i}", f"b{i}"),
                                 "positive" if i % 2 else "noise", mv, flag=i == 3))
        return ScoreTable(rows, {"system": "io-test", "n_flagged": 1})

    def test_round_trip(self, tmp_path):
        table = self.make_table()
        path = tmp_path / "scores.tsv"
        meta = tmp_path / "meta.json"
        save_score_table(table, path, meta)
        loaded = load_score_table(path, meta)
        assert len(loaded.rows) == len(table.rows)
        for r1, r2 in zip(loaded.rows, table.rows):
            assert r1.pair == r2.pair
            assert r1.label == r2.label
            assert r1.flag == r2.flag
            assert np.array_equal(r1.metrics.as_array(), r2.metrics.as_array())
        assert loaded.metadata["system"] == "io-test"

    def test_round_trip_with_poly(self, tmp_path):
        table = self.make_table(with_poly=True)
        path = tmp_path / "scores.tsv"
        save_score_table(table, path)
        loaded = load_score_table(path)
        for r1, r2 in zip(loaded.rows, table.rows):
            assert r1.metrics.poly_multi == r2.metrics.poly_multi

    def test_fit_table_poly_fills_column(self):
        table = self.make_table()
        model = fit_table_poly(table, budget=100, seed=0)
        assert all(r.metrics.poly_multi is not None for r in table.rows)
        assert 0.0 <= model.training_auc <= 1.0


class TestCompareSystems:
    def table_for(self, seed, system_id, n=30, quality=2.0):
        from hypnet.ranking import MetricVector
        rng = np.random.default_rng(seed)
        rows = []
        for i in range(n):
            positive = i < n // 2
            mv = MetricVector(
                l2=float(rng.uniform(0, 1) - (quality if positive else 0)),
                centr_l2=float(rng.uniform(0, 1)),
                topic_per_word=float(rng.uniform(0, 1)),
                topic_corr=float(rng.uniform(-1, 1)),
                topic_walk_btwn=float(rng.uniform(0, 0.5)),
            )
            rows.append(ScoreRow((f"x{i}", f"y{i}"),
                                 "positive" if positive else "noise", mv))
        return ScoreTable(rows, {"system": system_id, "runtime_seconds": 1.0,
                                 "mean_query_seconds": 0.1,
                                 "peak_memory_bytes": 1 << 20, "n_flagged": 0})

    def test_single_system_single_metric_matrix(self, tmp_path):
        table = self.table_for(0, "only")
        summary = compare_systems([table], tmp_path)
        matrix = (tmp_path / "auc_matrix.tsv").read_text().strip().split("\n")
        assert matrix[0].split("\t")[0] == "system"
        assert matrix[1].split("\t")[0] == "only"
        assert (tmp_path / "roc_only.svg").exists()
        assert (tmp_path / "summary.json").exists()

    def test_matrix_matches_roc_recomputation(self, tmp_path):
        tables = [self.table_for(1, "s1", quality=2.0),
                  self.table_for(2, "s2", quality=0.2)]
        compare_systems(tables, tmp_path)
        lines = (tmp_path / "auc_matrix.tsv").read_text().strip().split("\n")
        header = lines[0].split("\t")[1:]
        for line, table in zip(lines[1:], tables):
            cells = line.split("\t")
            for metric, cell in zip(header, cells[1:]):
                expected = table_roc(table, metric).auc
                assert float(cell) == pytest.approx(expected, abs=5e-7)

    def test_input_order_preserved_and_best_flagged(self, tmp_path):
        tables = [self.table_for(3, "weak", quality=0.1),
                  self.table_for(4, "strong", quality=3.0)]
        summary = compare_systems(tables, tmp_path)
        lines = (tmp_path / "auc_matrix.tsv").read_text().strip().split("\n")
        assert [l.split("\t")[0] for l in lines[1:]] == ["weak", "strong"]
        assert summary["best"]["l2"] == "strong"
        data = json.loads((tmp_path / "summary.json").read_text())
        assert data["best"]["l2"] == "strong"
        assert data["systems"][0]["system"] == "weak"

    def test_empty_tables_error(self, tmp_path):
        with pytest.raises(HypnetError):
            compare_systems([], tmp_path)
