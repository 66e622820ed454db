"""Statistics table, frequency histograms, and concept overlap."""

import random

import pytest

from multigrain.cleanse import FrequencyTable, compute_frequencies
from multigrain.errors import ConfigError, MultigrainError
from multigrain.regions import build_regions
from multigrain.reporting import (
    CorpusSlice,
    OverlapReport,
    compute_stats,
    concept_overlap,
    frequency_histogram,
)
from multigrain.schema import AnnotatedImage, BoundingBox, LabelEntry, LabelTable, ObjectAnnotation
from multigrain.sequence import MODALITY_SPECIAL, MODALITY_TEXT, MODALITY_VISUAL, TokenizedSample


def _slice_with(images, labels, regions):
    return CorpusSlice(images=images, regions=regions, labels=labels)


def _sample(source, image_id, text=5, visual=7, region_indices=(0,)):
    ids = [0] + [10] * text + [2] + [40000] * visual + [3] + [1]
    modality = (
        [MODALITY_SPECIAL]
        + [MODALITY_TEXT] * text
        + [MODALITY_SPECIAL]
        + [MODALITY_VISUAL] * visual
        + [MODALITY_SPECIAL, MODALITY_SPECIAL]
    )
    return TokenizedSample(
        ids=ids,
        modality=modality,
        provenance={
            "source": source,
            "image_id": image_id,
            "repetition_index": 0,
            "region_indices": list(region_indices),
        },
    )


def _mini_corpus():
    table = LabelTable()
    table.add(LabelEntry("dog", "object", description="a canine"))
    table.add(LabelEntry("cat", "object", description="a feline"))
    images = [
        AnnotatedImage(
            id="a",
            source_width=224,
            source_height=224,
            objects=[
                ObjectAnnotation("a1", "a", BoundingBox(0, 0, 50, 50), "dog"),
                ObjectAnnotation("a2", "a", BoundingBox(100, 100, 60, 60), "cat"),
            ],
        ),
        AnnotatedImage(
            id="b",
            source_width=224,
            source_height=224,
            objects=[
                ObjectAnnotation("b1", "b", BoundingBox(10, 10, 40, 40), "dog"),
                ObjectAnnotation("b2", "b", BoundingBox(60, 60, 50, 50), "dog"),
                ObjectAnnotation("b3", "b", BoundingBox(150, 20, 44, 44), "cat"),
            ],
        ),
    ]
    regions = {im.id: build_regions(im, table) for im in images}
    return images, table, regions


class TestComputeStats:
    def test_hand_counted_fixture(self):
        images, table, regions = _mini_corpus()
        corpus = {"srcA": _slice_with(images, table, regions)}
        samples = [
            _sample("srcA", "a", text=10, visual=30, region_indices=(0, 1)),
            _sample("srcA", "b", text=8, visual=20, region_indices=(0,)),
            _sample("srcA", "b", text=9, visual=25, region_indices=(0, 1, 2)),
        ]
        report = compute_stats(corpus, samples)
        row = report.per_source["srcA"]
        assert row.images == 2
        assert row.regions == sum(len(v) for v in regions.values()) == 5
        assert row.concepts == 2  # (dog, a canine), (cat, a feline)
        assert row.samples == 3
        assert row.used_regions == 2 + 1 + 3
        assert row.visual_tokens == 30 + 20 + 25
        assert row.textual_tokens == 10 + 8 + 9
        total = report.total
        assert total.to_json() == row.to_json()

    def test_totals_are_column_sums(self):
        images, table, regions = _mini_corpus()
        corpus = {
            "srcA": _slice_with(images[:1], table, {"a": regions["a"]}),
            "srcB": _slice_with(images[1:], table, {"b": regions["b"]}),
        }
        samples = [_sample("srcA", "a"), _sample("srcB", "b"), _sample("srcB", "b")]
        report = compute_stats(corpus, samples)
        total = report.total
        for column in ("regions", "images", "concepts", "visual_tokens", "textual_tokens", "used_regions", "samples"):
            assert getattr(total, column) == sum(
                getattr(row, column) for row in report.per_source.values()
            )

    def test_empty_corpus_all_zero(self):
        report = compute_stats({"src": _slice_with([], LabelTable(), {})}, [])
        assert report.per_source["src"].to_json() == {
            "regions": 0,
            "images": 0,
            "concepts": 0,
            "visual_tokens": 0,
            "textual_tokens": 0,
            "used_regions": 0,
            "samples": 0,
        }

    def test_sample_corpus_mismatch_is_error(self):
        images, table, regions = _mini_corpus()
        corpus = {"srcA": _slice_with(images, table, regions)}
        with pytest.raises(MultigrainError):
            compute_stats(corpus, [_sample("ghost", "a")])
        with pytest.raises(MultigrainError):
            compute_stats(corpus, [_sample("srcA", "ghost-image")])

    def test_rename_counts_in_concepts(self):
        images, table, regions = _mini_corpus()
        from multigrain.schema import apply_rename_map

        renamed, _ = apply_rename_map(table, {("dog", "object"): "dog (canine)"})
        corpus = {"srcA": _slice_with(images, renamed, regions)}
        report = compute_stats(corpus, [])
        assert report.per_source["srcA"].concepts == 2


class TestFrequencyHistogram:
    def _table(self, counts):
        table = FrequencyTable()
        for (name, kind), count in counts.items():
            table.bump(name, kind, count)
        return table

    def test_sort_and_tie_break(self):
        table = self._table({("a", "object"): 3, ("b", "object"): 3, ("c", "object"): 10})
        series, _ = frequency_histogram(table, "object")
        assert series == [("c", 10), ("a", 3), ("b", 3)]

    def test_all_frequent_share_zero(self):
        table = self._table({("a", "object"): 5, ("b", "object"): 9})
        _, share = frequency_histogram(table, "object")
        assert share == 0.0

    def test_low_share_counts_below_five(self):
        table = self._table({("a", "object"): 1, ("b", "object"): 4, ("c", "object"): 5, ("d", "object"): 50})
        _, share = frequency_histogram(table, "object")
        assert share == 0.5

    def test_random_table_matches_resort_oracle(self):
        rng = random.Random(0)
        counts = {(f"l{i}", "attribute"): rng.randint(1, 40) for i in range(60)}
        table = self._table(counts)
        series, _ = frequency_histogram(table, "attribute")
        oracle = sorted(((n, c) for (n, _), c in counts.items()), key=lambda t: (-t[1], t[0]))
        assert series == oracle
        assert sum(c for _, c in series) == sum(counts.values())

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError):
            frequency_histogram(FrequencyTable(), "verbs")

    def test_kind_filtered(self):
        table = self._table({("x", "object"): 2, ("x", "attribute"): 7})
        series, _ = frequency_histogram(table, "attribute")
        assert series == [("x", 7)]


class TestConceptOverlap:
    def test_identical_sets(self):
        report = concept_overlap({"a", "b"}, {"a", "b"})
        assert report.percentage == 100.0

    def test_disjoint_sets(self):
        report = concept_overlap({"a"}, {"b"})
        assert report.percentage == 0.0

    def test_two_thirds(self):
        report = concept_overlap({"a", "b", "c"}, {"b", "c", "d"})
        assert report.covered == 2 and report.total == 3
        assert report.percentage == pytest.approx(66.6666, abs=1e-3)

    def test_normalization(self):
        report = concept_overlap({"  Big   Dog "}, {"big dog"})
        assert report.percentage == 100.0

    def test_empty_eval_is_error(self):
        with pytest.raises(MultigrainError):
            concept_overlap({"a"}, set())
        with pytest.raises(MultigrainError):
            concept_overlap({"a"}, {"   "})

    def test_monotone_in_train_set(self):
        rng = random.Random(1)
        universe = [f"c{i}" for i in range(50)]
        eval_set = set(rng.sample(universe, 20))
        train = set()
        last = 0.0
        for concept in universe:
            train.add(concept)
            pct = concept_overlap(train, eval_set).percentage
            assert pct >= last
            last = pct

    def test_matches_set_oracle_on_random_pairs(self):
        rng = random.Random(2)
        for _ in range(100):
            train = {f"c{rng.randint(0, 30)}" for _ in range(rng.randint(1, 25))}
            eval_set = {f"c{rng.randint(0, 30)}" for _ in range(rng.randint(1, 25))}
            report = concept_overlap(train, eval_set)
            assert report.covered == len(train & eval_set)
            assert report.total == len(eval_set)
            assert report.percentage == pytest.approx(len(train & eval_set) / len(eval_set) * 100)

    def test_bounds(self):
        assert 0.0 <= OverlapReport(0, 5).percentage <= 100.0
        assert 0.0 <= OverlapReport(5, 5).percentage <= 100.0
