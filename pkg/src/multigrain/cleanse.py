"""Cleaning passes: frequency pruning, geometry filters, canvas resize,
and coverage-preserving caption downsampling."""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Set, Tuple, Union

from .errors import ConfigError
from .schema import CANVAS, AnnotatedImage, BoundingBox, LabelTable
from .seeding import rng_for

DROP_SHORT_EDGE = "short_edge"
DROP_ASPECT_RATIO = "aspect_ratio"
DROP_NO_OBJECTS = "no_objects"


@dataclass(frozen=True)
class CleanseConfig:
    min_short_edge: int = 224
    aspect_ratio_max: float = 3.0
    aspect_ratio_min: float = 0.33
    label_min_freq: Dict[str, int] = field(default_factory=dict)  # kind -> min count
    repeat_factor: int = 1

    def __post_init__(self):
        if self.min_short_edge < 1:
            raise ConfigError("min_short_edge must be positive")
        if not (0 < self.aspect_ratio_min <= self.aspect_ratio_max):
            raise ConfigError("aspect ratio bounds must satisfy 0 < min <= max")
        if any(v < 0 for v in self.label_min_freq.values()):
            raise ConfigError("label frequency thresholds must be >= 0")
        if self.repeat_factor < 1:
            raise ConfigError("repeat_factor must be >= 1")


class FrequencyTable:
    """Occurrence counts per (label name, kind) over a corpus."""

    def __init__(self):
        self.counts: Dict[Tuple[str, str], int] = {}

    def bump(self, name: str, kind: str, by: int = 1) -> None:
        self.counts[(name, kind)] = self.counts.get((name, kind), 0) + by

    def get(self, name: str, kind: str) -> int:
        return self.counts.get((name, kind), 0)

    def items(self):
        return self.counts.items()

    def total(self) -> int:
        return sum(self.counts.values())

    def __len__(self) -> int:
        return len(self.counts)


def compute_frequencies(images: Iterable[AnnotatedImage]) -> FrequencyTable:
    """Count one occurrence per annotation record, keyed by (name, kind)."""
    table = FrequencyTable()
    for image in images:
        for obj in image.objects:
            table.bump(obj.label, "object")
        for attr in image.attributes:
            table.bump(attr.label, "attribute")
        for rel in image.relationships:
            table.bump(rel.label, "relationship")
    return table


@dataclass
class PruneResult:
    images: List[AnnotatedImage]
    labels: LabelTable
    removed_labels: List[Tuple[str, str]]
    removed_annotations: int


def prune_labels(
    images: Iterable[AnnotatedImage],
    labels: LabelTable,
    freqs: FrequencyTable,
    min_freq: Dict[str, int],
) -> PruneResult:
    """Drop labels under their per-kind threshold, cascading removals.

    Annotations referencing a removed label go, and attribute or
    relationship annotations whose member objects were removed go too.
    """
    doomed: Set[Tuple[str, str]] = set()
    for (name, kind), count in freqs.items():
        if count < min_freq.get(kind, 0):
            doomed.add((name, kind))

    new_labels = labels.copy()
    for name, kind in doomed:
        new_labels.remove(name, kind)

    removed_annotations = 0
    out_images = []
    for image in images:
        kept_objects = [o for o in image.objects if (o.label, "object") not in doomed]
        kept_ids = {o.id for o in kept_objects}
        kept_attrs = [
            a
            for a in image.attributes
            if (a.label, "attribute") not in doomed
            and all(m in kept_ids for m in a.member_ids)
        ]
        kept_rels = [
            r
            for r in image.relationships
            if (r.label, "relationship") not in doomed
            and r.subject_id in kept_ids
            and r.object_id in kept_ids
        ]
        removed_annotations += (
            len(image.objects)
            - len(kept_objects)
            + len(image.attributes)
            - len(kept_attrs)
            + len(image.relationships)
            - len(kept_rels)
        )
        out_images.append(
            replace(image, objects=kept_objects, attributes=kept_attrs, relationships=kept_rels)
        )
    return PruneResult(
        images=out_images,
        labels=new_labels,
        removed_labels=sorted(doomed),
        removed_annotations=removed_annotations,
    )


@dataclass(frozen=True)
class Drop:
    image_id: str
    reason: str

    def to_json(self) -> dict:
        return {"image_id": self.image_id, "reason": self.reason}


def _round_half_even(value: Fraction) -> int:
    floor = value.numerator // value.denominator
    rem2 = 2 * (value - floor)
    if rem2 > 1:
        return floor + 1
    if rem2 < 1:
        return floor
    return floor if floor % 2 == 0 else floor + 1


def _as_fraction(value) -> Fraction:
    # str() keeps the decimal a JSON float was written as
    return Fraction(value) if isinstance(value, int) else Fraction(str(value))


def _rescale_box(box: BoundingBox, sw: int, sh: int) -> Optional[BoundingBox]:
    fx = _as_fraction(box.x) * CANVAS / sw
    fy = _as_fraction(box.y) * CANVAS / sh
    fw = _as_fraction(box.w) * CANVAS / sw
    fh = _as_fraction(box.h) * CANVAS / sh
    x, y, w, h = (_round_half_even(v) for v in (fx, fy, fw, fh))
    w = min(w, CANVAS - x)
    h = min(h, CANVAS - y)
    if w <= 0 or h <= 0:
        return None
    return BoundingBox(x, y, w, h)


def filter_and_resize(
    image: AnnotatedImage, config: Optional[CleanseConfig] = None
) -> Union[AnnotatedImage, Drop]:
    """Apply the short-edge/aspect gates then map boxes onto the canvas.

    Kept images come back with 224x224 dimensions and integer boxes;
    drops carry a machine-readable reason.  Idempotent on its output.
    """
    config = config or CleanseConfig()
    sw, sh = image.source_width, image.source_height
    if min(sw, sh) < config.min_short_edge:
        return Drop(image.id, DROP_SHORT_EDGE)
    ratio = Fraction(sw, sh)
    if ratio > _as_fraction(config.aspect_ratio_max) or ratio < _as_fraction(
        config.aspect_ratio_min
    ):
        return Drop(image.id, DROP_ASPECT_RATIO)

    kept_objects = []
    for obj in image.objects:
        new_box = _rescale_box(obj.box, sw, sh)
        if new_box is None:
            continue  # degenerate after rounding: illegal coordinates
        kept_objects.append(replace(obj, box=new_box))
    if not kept_objects:
        return Drop(image.id, DROP_NO_OBJECTS)

    kept_ids = {o.id for o in kept_objects}
    kept_attrs = [a for a in image.attributes if all(m in kept_ids for m in a.member_ids)]
    kept_rels = [
        r for r in image.relationships if r.subject_id in kept_ids and r.object_id in kept_ids
    ]
    return replace(
        image,
        source_width=CANVAS,
        source_height=CANVAS,
        objects=kept_objects,
        attributes=kept_attrs,
        relationships=kept_rels,
    )


def coverage_downsample(
    caption_concepts: Iterable[Tuple[str, Iterable[str]]],
    min_freq: int = 20,
    cap: int = 50,
    seed: int = 0,
) -> Set[str]:
    """Select caption ids so every frequent concept keeps coverage.

    Concepts are visited in ascending frequency (ties by name); a
    concept under min_freq contributes nothing, one over the cap
    contributes a seeded uniform sample of `cap` of its captions.
    """
    if cap < 1:
        raise ConfigError("cap must be >= 1")
    concept_captions: Dict[str, Set[str]] = defaultdict(set)
    for caption_id, concepts in caption_concepts:
        for concept in concepts:
            concept_captions[concept].add(caption_id)

    selected: Set[str] = set()
    order = sorted(concept_captions, key=lambda c: (len(concept_captions[c]), c))
    for concept in order:
        captions = concept_captions[concept]
        if len(captions) < min_freq:
            continue
        if len(captions) > cap:
            rng = rng_for(seed, "coverage", concept)
            selected.update(rng.sample(sorted(captions), cap))
        else:
            selected.update(captions)
    return selected


def read_concept_lists(path) -> List[Tuple[str, List[str]]]:
    """Read the JSONL {caption_id, concepts:[...]} sidecar."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            out.append((str(record["caption_id"]), [str(c) for c in record["concepts"]]))
    return out


def write_drop_report(path, drops: Iterable[Drop]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for drop in drops:
            fh.write(json.dumps(drop.to_json(), ensure_ascii=False) + "\n")
