"""Structured document templates.

Renders an annotated image (plus its cropped regions) into an ordered
list of text/image segments under a recipe of content toggles, in
either image-first or text-first order.  The exact byte layout is
frozen by golden fixtures; `parse_document` is the inverse used by the
round-trip checks.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from .errors import ConfigError, EmptyDocumentError
from .regions import RegionSpec
from .schema import AnnotatedImage, LabelTable

IMAGE_FIRST = "image_first"
TEXT_FIRST = "text_first"

HEADER = "# Detailed Analysis of Objects in the Image"
REGION_SECTION_HEADER = "## Overview of Selected Object Regions"
REGION_HEADER = "### Overview of a Selected Object Region"
LOCATION_PREFIX = "Location of the selected region in the image: "

_OBJECT_HEADERS = {True: "Objects and their descriptions:", False: "Objects:"}
_ATTRIBUTE_HEADERS = {True: "Attributes of objects and their descriptions:", False: "Attributes of objects:"}
_RELATIONSHIP_HEADERS = {
    True: "Relationships between objects and their descriptions:",
    False: "Relationships between objects:",
}


@dataclass(frozen=True)
class RecipeConfig:
    """Content toggles: C(aption), L(abels), D(escriptions), R(egions)."""

    caption: bool = True
    labels: bool = True
    descriptions: bool = True
    regions: bool = True

    def __post_init__(self):
        if self.descriptions and not self.labels:
            raise ConfigError("descriptions require labels (D implies L)")

    @classmethod
    def from_flags(cls, flags: str) -> "RecipeConfig":
        """Build from a compact flag string like "CLDR" or "CL"."""
        known = set("CLDR")
        upper = flags.upper()
        bad = set(upper) - known
        if bad:
            raise ConfigError(f"unknown recipe flags: {''.join(sorted(bad))}")
        return cls(
            caption="C" in upper,
            labels="L" in upper,
            descriptions="D" in upper,
            regions="R" in upper,
        )

    def to_flags(self) -> str:
        return "".join(
            flag
            for flag, on in zip("CLDR", (self.caption, self.labels, self.descriptions, self.regions))
            if on
        )


@dataclass(frozen=True)
class Variant:
    template_kind: str  # image_first | text_first
    with_descriptions: bool


def choose_variant(rng: random.Random, recipe: RecipeConfig) -> Variant:
    """Two independent fair draws; the recipe can veto descriptions."""
    kind = IMAGE_FIRST if rng.random() < 0.5 else TEXT_FIRST
    with_desc = rng.random() < 0.5
    return Variant(kind, with_desc and recipe.descriptions)


@dataclass(frozen=True)
class Text:
    text: str


@dataclass(frozen=True)
class ImageRef:
    image_id: str


@dataclass(frozen=True)
class RegionRef:
    index: int  # position in the document's region tuple


@dataclass(frozen=True)
class RenderedDocument:
    image_id: str
    segments: tuple
    template_kind: str
    with_descriptions: bool
    regions: tuple  # RegionSpec, in rendered order
    regions_included: tuple  # indices into the image's full region pool

    def to_text(self) -> str:
        """Plain-text form with [IMG] placeholders (the golden format)."""
        parts = []
        for segment in self.segments:
            parts.append(segment.text if isinstance(segment, Text) else "[IMG]")
        return "".join(parts)


class _Builder:
    def __init__(self):
        self.segments: List[object] = []

    def text(self, chunk: str) -> None:
        if not chunk:
            return
        if self.segments and isinstance(self.segments[-1], Text):
            self.segments[-1] = Text(self.segments[-1].text + chunk)
        else:
            self.segments.append(Text(chunk))

    def ref(self, segment) -> None:
        self.segments.append(segment)


def _object_bullets(image: AnnotatedImage, table: LabelTable, with_desc: bool) -> List[str]:
    lines = []
    seen = set()
    for obj in image.objects:
        name = table.display(obj.label, "object")
        if name in seen:
            continue
        seen.add(name)
        entry = table.get(obj.label, "object")
        description = entry.description if entry else None
        if with_desc and description:
            lines.append(f"- {name}: {description}")
        else:
            lines.append(f"- {name}")
    return lines


def _grouped_bullets(labels_in_order, members_by_label, descriptions, with_desc) -> List[str]:
    lines = []
    for label in labels_in_order:
        members = ", ".join(members_by_label[label])
        line = f"- {label} {{{members}}}"
        description = descriptions.get(label)
        if with_desc and description:
            line += f" : {description}"
        lines.append(line)
    return lines


def _attribute_bullets(image: AnnotatedImage, table: LabelTable, with_desc: bool) -> List[str]:
    objects = image.object_by_id()
    order: List[str] = []
    members: dict = {}
    descriptions: dict = {}
    for attr in image.attributes:
        display = table.display(attr.label, "attribute")
        if display not in members:
            members[display] = []
            order.append(display)
            entry = table.get(attr.label, "attribute")
            descriptions[display] = entry.description if entry else None
        for member_id in attr.member_ids:
            name = table.display(objects[member_id].label, "object")
            if name not in members[display]:
                members[display].append(name)
    return _grouped_bullets(order, members, descriptions, with_desc)


def _relationship_bullets(image: AnnotatedImage, table: LabelTable, with_desc: bool) -> List[str]:
    objects = image.object_by_id()
    order: List[str] = []
    members: dict = {}
    descriptions: dict = {}
    for rel in image.relationships:
        display = table.display(rel.label, "relationship")
        if display not in members:
            members[display] = []
            order.append(display)
            entry = table.get(rel.label, "relationship")
            descriptions[display] = entry.description if entry else None
        subject = table.display(objects[rel.subject_id].label, "object")
        obj = table.display(objects[rel.object_id].label, "object")
        pair = f"{subject}-{obj}"
        if pair not in members[display]:
            members[display].append(pair)
    return _grouped_bullets(order, members, descriptions, with_desc)


def _annotation_lines(image, table, recipe, with_desc) -> List[str]:
    lines: List[str] = []
    if not recipe.labels:
        return lines
    if image.objects:
        lines.append(_OBJECT_HEADERS[with_desc])
        lines.extend(_object_bullets(image, table, with_desc))
    if image.attributes:
        lines.append(_ATTRIBUTE_HEADERS[with_desc])
        lines.extend(_attribute_bullets(image, table, with_desc))
    if image.relationships:
        lines.append(_RELATIONSHIP_HEADERS[with_desc])
        lines.extend(_relationship_bullets(image, table, with_desc))
    return lines


def _caption_lines(image, recipe) -> List[str]:
    lines = []
    if recipe.caption and image.caption:
        lines.append(f"Caption: {image.caption}")
    if recipe.caption and image.localized_narrative:
        lines.append(f"Localized narrative caption: {image.localized_narrative}")
    return lines


def render_document(
    image: AnnotatedImage,
    regions: Sequence[RegionSpec],
    table: LabelTable,
    recipe: RecipeConfig,
    variant: Variant,
    region_indices: Optional[Sequence[int]] = None,
) -> RenderedDocument:
    """Instantiate the structured template for one image.

    `regions` is the ordered subset to include; `region_indices` records
    their positions in the image's full pool for provenance.
    """
    if not (recipe.caption or recipe.labels or recipe.regions):
        raise EmptyDocumentError(f"recipe {recipe.to_flags() or '(none)'} renders nothing")
    with_desc = variant.with_descriptions and recipe.descriptions
    include = regions if recipe.regions else ()
    if region_indices is None:
        region_indices = tuple(range(len(include)))

    builder = _Builder()
    builder.text(f"{HEADER}\n\n")

    annotation = _annotation_lines(image, table, recipe, with_desc)
    captions = _caption_lines(image, recipe)

    if variant.template_kind == IMAGE_FIRST:
        builder.text("Image: ")
        builder.ref(ImageRef(image.id))
        builder.text("\n")
        for line in captions:
            builder.text(line + "\n")
        if annotation:
            builder.text("\n")
            for line in annotation:
                builder.text(line + "\n")
    elif variant.template_kind == TEXT_FIRST:
        for line in annotation:
            builder.text(line + "\n")
        if annotation:
            builder.text("\n")
        for line in captions:
            builder.text(line + "\n")
        builder.text("Image: ")
        builder.ref(ImageRef(image.id))
        builder.text("\n")
    else:
        raise ConfigError(f"unknown template kind {variant.template_kind!r}")

    if include:
        builder.text(f"\n{REGION_SECTION_HEADER}\n")
        for i, region in enumerate(include):
            builder.text(f"\n{REGION_HEADER}\n\n")
            if variant.template_kind == IMAGE_FIRST:
                builder.text("Region: ")
                builder.ref(RegionRef(i))
                builder.text("\n")
                builder.text(f"{LOCATION_PREFIX}{region.location}\n")
                builder.text("Objects:\n")
                for label in region.labels:
                    builder.text(f"- {label}\n")
            else:
                builder.text(f"{LOCATION_PREFIX}{region.location}\n")
                builder.text("Objects:\n")
                for label in region.labels:
                    builder.text(f"- {label}\n")
                builder.text("Region: ")
                builder.ref(RegionRef(i))
                builder.text("\n")

    return RenderedDocument(
        image_id=image.id,
        segments=tuple(builder.segments),
        template_kind=variant.template_kind,
        with_descriptions=with_desc,
        regions=tuple(include),
        regions_included=tuple(region_indices),
    )


def render_caption_pair(image_id: str, caption: str, detailed_caption: str, variant: Variant):
    """Minor dual-caption template (config-selectable; see docs)."""
    builder = _Builder()
    if variant.template_kind == IMAGE_FIRST:
        builder.text("Image: ")
        builder.ref(ImageRef(image_id))
        builder.text(f"\nCaption: {caption}\nDetailed caption: {detailed_caption}\n")
    else:
        builder.text(f"Caption: {caption}\nDetailed caption: {detailed_caption}\nImage: ")
        builder.ref(ImageRef(image_id))
        builder.text("\n")
    return RenderedDocument(
        image_id=image_id,
        segments=tuple(builder.segments),
        template_kind=variant.template_kind,
        with_descriptions=False,
        regions=(),
        regions_included=(),
    )


# --- inverse parser ----------------------------------------------------------

_BULLET = re.compile(r"^- (.*)$")


@dataclass
class ParsedDocument:
    """What the inverse parser recovers from a rendered document."""

    caption: Optional[str] = None
    localized_narrative: Optional[str] = None
    object_labels: List[str] = field(default_factory=list)
    attribute_labels: List[str] = field(default_factory=list)
    relationship_labels: List[str] = field(default_factory=list)
    regions: List[Tuple[str, Tuple[str, ...]]] = field(default_factory=list)


def _strip_description(line: str, grouped: bool) -> str:
    if grouped:
        # "- label {m1, m2} : description" -> label before the group
        return line.split(" {", 1)[0]
    return line.split(": ", 1)[0]


def parse_document(text: str) -> ParsedDocument:
    """Recover caption, label sets, and region locations from a rendering.

    Works for every recipe/variant combination; relies on label names
    being free of braces, newlines, and ": " (enforced at parse time).
    """
    out = ParsedDocument()
    if REGION_SECTION_HEADER in text:
        image_part, region_part = text.split(REGION_SECTION_HEADER, 1)
    else:
        image_part, region_part = text, ""

    section = None
    for line in image_part.splitlines():
        if line.startswith("Caption: "):
            out.caption = line[len("Caption: "):]
            section = None
        elif line.startswith("Localized narrative caption: "):
            out.localized_narrative = line[len("Localized narrative caption: "):]
            section = None
        elif line in (_OBJECT_HEADERS[True], _OBJECT_HEADERS[False]):
            section = ("object", line == _OBJECT_HEADERS[True])
        elif line in (_ATTRIBUTE_HEADERS[True], _ATTRIBUTE_HEADERS[False]):
            section = ("attribute", line == _ATTRIBUTE_HEADERS[True])
        elif line in (_RELATIONSHIP_HEADERS[True], _RELATIONSHIP_HEADERS[False]):
            section = ("relationship", line == _RELATIONSHIP_HEADERS[True])
        else:
            match = _BULLET.match(line)
            if match and section is not None:
                kind, with_desc = section
                body = match.group(1)
                if kind == "object":
                    out.object_labels.append(body.split(": ", 1)[0] if with_desc else body)
                elif kind == "attribute":
                    out.attribute_labels.append(_strip_description(body, grouped=True))
                else:
                    out.relationship_labels.append(_strip_description(body, grouped=True))
            elif not line.strip():
                continue
            elif section is not None and not match:
                section = None

    for block in region_part.split(REGION_HEADER)[1:]:
        location = None
        labels: List[str] = []
        in_objects = False
        for line in block.splitlines():
            if line.startswith(LOCATION_PREFIX):
                location = line[len(LOCATION_PREFIX):]
            elif line == "Objects:":
                in_objects = True
            elif in_objects:
                match = _BULLET.match(line)
                if match:
                    labels.append(match.group(1))
                else:
                    in_objects = False
        if location is None:
            raise ValueError("region block without a location line")
        out.regions.append((location, tuple(labels)))
    return out
