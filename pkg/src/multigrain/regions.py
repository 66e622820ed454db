"""Square region cropping, IoA label merging, dedup, and grid naming.

Each object box is wrapped in the smallest containing square, labels of
neighbor boxes mostly covered by that square are merged in, duplicate
regions collapse, and undersized/oversized squares are gated out.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, List, Optional, Sequence

from . import geometry
from .errors import ConfigError
from .schema import CANVAS, AnnotatedImage, LabelTable, ObjectAnnotation

GRID_NAMES = (
    "Top Left",
    "Top Middle",
    "Top Right",
    "Middle Left",
    "Center",
    "Middle Right",
    "Bottom Left",
    "Bottom Middle",
    "Bottom Right",
)


@dataclass(frozen=True)
class RegionConfig:
    min_side: int = 28
    max_side: int = 182
    merge_threshold: float = 0.8
    pad_factor: float = 1.0  # side multiplier; 1.0 keeps the minimal square

    def __post_init__(self):
        if not (0 < self.min_side <= self.max_side <= CANVAS):
            raise ConfigError("region side gate must satisfy 0 < min <= max <= canvas")
        if not (0 < self.merge_threshold <= 1):
            raise ConfigError("merge threshold must be in (0, 1]")
        if self.pad_factor < 1.0:
            raise ConfigError("pad factor must be >= 1.0")

    def threshold_fraction(self) -> Fraction:
        # built from the decimal string so 0.8 means exactly 4/5
        return Fraction(str(self.merge_threshold))


@dataclass(frozen=True)
class RegionSpec:
    """One square crop with merged labels and a 3x3 grid location."""

    square: tuple  # (x0, y0, side)
    source_object_id: str
    labels: tuple  # display names, ordered by first qualifying object id
    location: str

    def to_json(self, image_id: str) -> dict:
        x0, y0, side = self.square
        return {
            "image_id": image_id,
            "region": {"x0": x0, "y0": y0, "side": side},
            "labels": list(self.labels),
            "location": self.location,
            "source_object_id": self.source_object_id,
        }


def square_crop(box, canvas: int = CANVAS, pad_factor: float = 1.0) -> tuple:
    """Smallest containing square for a box, optionally padded.

    Returns (x0, y0, side).  Raises ValueError when the box itself is
    wider than the canvas (cannot occur after resize; defensive).
    """
    x, y, w, h = int(box.x), int(box.y), int(box.w), int(box.h)
    if pad_factor == 1.0:
        return geometry.square_crop(x, y, w, h, canvas)
    side = max(max(w, h), min(canvas, round(max(w, h) * pad_factor)))
    return _place(x, y, w, h, side, canvas)


def _place(x: int, y: int, w: int, h: int, side: int, canvas: int) -> tuple:
    # same placement rule as the kernel, for caller-chosen sides
    def axis(pos, dim):
        lo = max(0, pos + dim - side)
        hi = min(pos, canvas - side)
        cand = (2 * pos + dim - side) // 2
        return min(max(cand, lo), hi)

    return axis(x, w), axis(y, h), side


def ioa(square: tuple, box) -> float:
    """IoA(S, R) = Area(S ∩ R) / Area(R)."""
    x0, y0, side = square
    return geometry.ioa(x0, y0, side, int(box.x), int(box.y), int(box.w), int(box.h))


def ioa_exact(square: tuple, box) -> Fraction:
    x0, y0, side = square
    inter, area = geometry.ioa_parts(
        x0, y0, side, int(box.x), int(box.y), int(box.w), int(box.h)
    )
    return Fraction(inter, area)


def merge_labels(
    square: tuple,
    source_index: int,
    objects: Sequence[ObjectAnnotation],
    table: LabelTable,
    threshold: Fraction = Fraction(4, 5),
) -> tuple:
    """Labels of the source object plus neighbors with IoA >= threshold.

    Deduplicated by display name; ordered by the id of the first
    (lowest-id) object contributing each name.
    """
    x0, y0, side = square
    xs = [int(o.box.x) for o in objects]
    ys = [int(o.box.y) for o in objects]
    ws = [int(o.box.w) for o in objects]
    hs = [int(o.box.h) for o in objects]
    hits = geometry.qualifying_neighbors(
        x0, y0, side, xs, ys, ws, hs,
        threshold.numerator, threshold.denominator, source_index,
    )
    source = objects[source_index]
    first_id = {table.display(source.label, "object"): source.id}
    for j in hits:
        name = table.display(objects[j].label, "object")
        oid = objects[j].id
        if name not in first_id or oid < first_id[name]:
            first_id[name] = oid
    return tuple(sorted(first_id, key=lambda name: first_id[name]))


def grid_location(square: tuple, canvas: int = CANVAS) -> str:
    """Grid-cell name holding the square's center (3x3, row-major)."""
    x0, y0, side = square
    return GRID_NAMES[geometry.grid_cell(x0, y0, side, canvas)]


def dedup_regions(regions: Iterable[RegionSpec]) -> List[RegionSpec]:
    """Collapse regions with identical (geometry, label set).

    The survivor is the one with the smallest source object id, so the
    result is independent of input order.
    """
    ordered = sorted(regions, key=lambda r: r.source_object_id)
    seen = set()
    out = []
    for region in ordered:
        key = (region.square, tuple(sorted(region.labels)))
        if key in seen:
            continue
        seen.add(key)
        out.append(region)
    return out


def build_regions(
    image: AnnotatedImage,
    table: LabelTable,
    config: Optional[RegionConfig] = None,
) -> List[RegionSpec]:
    """Full per-image region pipeline: crop, merge, dedup, size gate."""
    config = config or RegionConfig()
    threshold = config.threshold_fraction()
    objects = sorted(image.objects, key=lambda o: o.id)
    candidates = []
    for i, obj in enumerate(objects):
        square = square_crop(obj.box, pad_factor=config.pad_factor)
        labels = merge_labels(square, i, objects, table, threshold)
        candidates.append(
            RegionSpec(
                square=square,
                source_object_id=obj.id,
                labels=labels,
                location=grid_location(square),
            )
        )
    unique = dedup_regions(candidates)
    kept = [r for r in unique if config.min_side <= r.square[2] <= config.max_side]
    for region in kept:
        _check_region(region, image)
    return kept


def _check_region(region: RegionSpec, image: AnnotatedImage) -> None:
    # hard invariants, asserted on every build
    x0, y0, side = region.square
    if not (0 <= x0 and 0 <= y0 and x0 + side <= CANVAS and y0 + side <= CANVAS):
        raise AssertionError(f"region {region} escapes canvas (image {image.id})")
    source = image.object_by_id()[region.source_object_id]
    bx, by, bw, bh = int(source.box.x), int(source.box.y), int(source.box.w), int(source.box.h)
    if not (x0 <= bx and y0 <= by and bx + bw <= x0 + side and by + bh <= y0 + side):
        raise AssertionError(f"region {region} does not contain its box (image {image.id})")
    if not region.labels:
        raise AssertionError(f"region {region} has no labels (image {image.id})")


def write_region_manifest(path, entries: Iterable[tuple]) -> None:
    """entries: iterable of (image_id, RegionSpec)."""
    with open(path, "w", encoding="utf-8") as fh:
        for image_id, region in entries:
            fh.write(json.dumps(region.to_json(image_id), ensure_ascii=False) + "\n")
