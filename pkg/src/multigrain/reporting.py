"""Corpus analytics: statistics table, frequency histograms, concept overlap."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Set, Tuple

from .cleanse import FrequencyTable
from .errors import ConfigError, MultigrainError
from .schema import KINDS, AnnotatedImage, LabelTable, normalize_text
from .sequence import MODALITY_TEXT, MODALITY_VISUAL, TokenizedSample

LOW_FREQ_THRESHOLD = 5


@dataclass
class StatsRow:
    regions: int = 0
    images: int = 0
    concepts: int = 0
    visual_tokens: int = 0
    textual_tokens: int = 0
    used_regions: int = 0
    samples: int = 0

    def add(self, other: "StatsRow") -> None:
        self.regions += other.regions
        self.images += other.images
        self.concepts += other.concepts
        self.visual_tokens += other.visual_tokens
        self.textual_tokens += other.textual_tokens
        self.used_regions += other.used_regions
        self.samples += other.samples

    def to_json(self) -> dict:
        return {
            "regions": self.regions,
            "images": self.images,
            "concepts": self.concepts,
            "visual_tokens": self.visual_tokens,
            "textual_tokens": self.textual_tokens,
            "used_regions": self.used_regions,
            "samples": self.samples,
        }


@dataclass
class StatsReport:
    per_source: Dict[str, StatsRow] = field(default_factory=dict)

    @property
    def total(self) -> StatsRow:
        total = StatsRow()
        for row in self.per_source.values():
            total.add(row)
        return total

    def to_json(self) -> dict:
        return {
            "sources": {name: row.to_json() for name, row in sorted(self.per_source.items())},
            "total": self.total.to_json(),
        }


@dataclass
class CorpusSlice:
    """One source's kept corpus, as the stats computation sees it."""

    images: List[AnnotatedImage]
    regions: Dict[str, list]  # image_id -> [RegionSpec]
    labels: LabelTable


def _concept_pairs(slice_: CorpusSlice) -> Set[Tuple[str, str]]:
    pairs = set()
    for image in slice_.images:
        keys = {(obj.label, "object") for obj in image.objects}
        keys.update((attr.label, "attribute") for attr in image.attributes)
        keys.update((rel.label, "relationship") for rel in image.relationships)
        for name, kind in keys:
            entry = slice_.labels.get(name, kind)
            if entry is not None:
                pairs.add((entry.display_name, entry.description or ""))
    return pairs


def compute_stats(
    corpus: Dict[str, CorpusSlice], samples: Iterable[TokenizedSample]
) -> StatsReport:
    """Exact per-source counts in the statistics-table schema.

    Token counts come from emitted samples' modality tags; concepts are
    unique (display name, description) pairs occurring in the slice.
    """
    report = StatsReport()
    image_source: Dict[str, str] = {}
    for name, slice_ in corpus.items():
        row = StatsRow(
            regions=sum(len(v) for v in slice_.regions.values()),
            images=len(slice_.images),
            concepts=len(_concept_pairs(slice_)),
        )
        report.per_source[name] = row
        for image in slice_.images:
            image_source[image.id] = name

    for sample in samples:
        source = sample.provenance.get("source")
        image_id = sample.provenance.get("image_id")
        if source not in report.per_source:
            raise MultigrainError(f"sample source {source!r} not in corpus")
        if image_id not in image_source or image_source[image_id] != source:
            raise MultigrainError(f"sample image {image_id!r} not in source {source!r}")
        row = report.per_source[source]
        row.samples += 1
        row.used_regions += len(sample.provenance.get("region_indices", ()))
        row.visual_tokens += sum(1 for tag in sample.modality if tag == MODALITY_VISUAL)
        row.textual_tokens += sum(1 for tag in sample.modality if tag == MODALITY_TEXT)
    return report


def frequency_histogram(
    freqs: FrequencyTable, kind: str, low_threshold: int = LOW_FREQ_THRESHOLD
) -> Tuple[List[Tuple[str, int]], float]:
    """Descending-count label series for a kind, plus the low-frequency share.

    Ties break lexicographically; the share is the fraction of labels
    with count < low_threshold.
    """
    if kind not in KINDS:
        raise ConfigError(f"unknown label kind {kind!r}")
    entries = [(name, count) for (name, k), count in freqs.items() if k == kind]
    entries.sort(key=lambda item: (-item[1], item[0]))
    if not entries:
        return [], 0.0
    low = sum(1 for _, count in entries if count < low_threshold)
    return entries, low / len(entries)


@dataclass(frozen=True)
class OverlapReport:
    covered: int
    total: int

    @property
    def percentage(self) -> float:
        return self.covered / self.total * 100.0

    def to_json(self) -> dict:
        return {"covered": self.covered, "total": self.total, "percentage": self.percentage}


def concept_overlap(train_concepts: Iterable[str], eval_concepts: Iterable[str]) -> OverlapReport:
    """Share of evaluation concepts covered by training concepts (set semantics)."""
    train = {normalize_text(c).lower() for c in train_concepts}
    train.discard("")
    eval_set = {normalize_text(c).lower() for c in eval_concepts}
    eval_set.discard("")
    if not eval_set:
        raise MultigrainError("overlap undefined for an empty evaluation concept set")
    return OverlapReport(covered=len(eval_set & train), total=len(eval_set))


def write_stats_json(path, report: StatsReport) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_histogram_csv(path, series: Sequence[Tuple[str, int]], kind: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "kind", "count"])
        for name, count in series:
            writer.writerow([name, kind, count])
