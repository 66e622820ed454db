"""Canonical data model and input parsing.

The corpus arrives as one annotation JSON file (images, objects,
attributes, relationships) plus a JSONL label table and an optional
JSONL rename map.  Everything downstream consumes the validated types
defined here.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

from .errors import MultigrainError, ParseError, RecordIssue

CANVAS = 224

KINDS = ("object", "attribute", "relationship")

# Label names appear inside template grouping syntax ("{a, b}", "a-b" pairs)
# and "- name: description" bullets, so braces, newlines, and the ": "
# separator are rejected outright to keep rendered documents parseable.
_BAD_NAME_CHARS = re.compile(r"[{}\n\r]|: ")

_WS = re.compile(r"\s+")


def normalize_text(text: str) -> str:
    """Collapse whitespace runs to single spaces and strip the ends."""
    return _WS.sub(" ", text).strip()


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in pixels: (left, top, width, height)."""

    x: float
    y: float
    w: float
    h: float

    def legality_error(self, width: float, height: float) -> Optional[str]:
        """Reason this box is unusable on a width x height image, or None."""
        if self.w <= 0 or self.h <= 0 or self.x < 0 or self.y < 0:
            return "illegal coordinates"
        if self.x + self.w > width or self.y + self.h > height:
            return "exceeds image bounds"
        return None


@dataclass(frozen=True)
class LabelEntry:
    name: str
    kind: str
    description: Optional[str] = None
    rename: Optional[str] = None

    @property
    def display_name(self) -> str:
        """Name used verbatim in all rendered text."""
        return self.rename if self.rename is not None else self.name


@dataclass(frozen=True)
class ObjectAnnotation:
    id: str
    image_id: str
    box: BoundingBox
    label: str


@dataclass(frozen=True)
class AttributeAnnotation:
    label: str
    member_ids: tuple


@dataclass(frozen=True)
class RelationshipAnnotation:
    label: str
    subject_id: str
    object_id: str


@dataclass
class AnnotatedImage:
    id: str
    source_width: int
    source_height: int
    caption: Optional[str] = None
    localized_narrative: Optional[str] = None
    objects: list = field(default_factory=list)
    attributes: list = field(default_factory=list)
    relationships: list = field(default_factory=list)

    def object_by_id(self) -> dict:
        return {obj.id: obj for obj in self.objects}


class LabelTable:
    """Corpus-wide label registry keyed by (name, kind)."""

    def __init__(self):
        self._entries: dict = {}

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key) -> bool:
        return key in self._entries

    def get(self, name: str, kind: str) -> Optional[LabelEntry]:
        return self._entries.get((name, kind))

    def add(self, entry: LabelEntry) -> None:
        key = (entry.name, entry.kind)
        if key in self._entries:
            raise MultigrainError(f"duplicate label {key}")
        self._entries[key] = entry

    def display(self, name: str, kind: str) -> str:
        entry = self._entries.get((name, kind))
        return entry.display_name if entry else name

    def entries(self) -> list:
        """All entries ordered by (kind, name)."""
        return [self._entries[k] for k in sorted(self._entries, key=lambda k: (k[1], k[0]))]

    def remove(self, name: str, kind: str) -> None:
        self._entries.pop((name, kind), None)

    def copy(self) -> "LabelTable":
        out = LabelTable()
        out._entries = dict(self._entries)
        return out


def _expect(record: dict, key: str, locus: str):
    if key not in record:
        raise ParseError(f"missing field '{key}'", locus)
    return record[key]


def _label_entry_from_record(record: dict, locus: str) -> LabelEntry:
    name = _expect(record, "name", locus)
    kind = _expect(record, "kind", locus)
    if not isinstance(name, str) or not name:
        raise ParseError("label name must be a non-empty string", locus)
    if kind not in KINDS:
        raise ParseError(f"unknown label kind {kind!r}", locus)
    if _BAD_NAME_CHARS.search(name):
        raise ParseError("label name contains brace or newline characters", locus)
    description = record.get("description")
    if description is not None:
        description = normalize_text(str(description))
    return LabelEntry(name=name, kind=kind, description=description)


def parse_label_table(path) -> tuple:
    """Parse the JSONL label file into a LabelTable.

    Returns (table, issues); duplicate (name, kind) records are reported
    and the first occurrence wins.
    """
    table = LabelTable()
    issues = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            locus = f"{path}:{lineno}"
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", locus) from exc
            if not isinstance(record, dict):
                raise ParseError("label record must be an object", locus)
            entry = _label_entry_from_record(record, locus)
            if (entry.name, entry.kind) in table:
                issues.append(
                    RecordIssue("label", locus, f"duplicate label ({entry.name}, {entry.kind})")
                )
                continue
            table.add(entry)
    return table, issues


def parse_rename_map(path) -> dict:
    """Parse the JSONL rename map into {(name, kind): rename}."""
    renames = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            locus = f"{path}:{lineno}"
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", locus) from exc
            name = _expect(record, "name", locus)
            kind = _expect(record, "kind", locus)
            rename = _expect(record, "rename", locus)
            if kind not in KINDS:
                raise ParseError(f"unknown label kind {kind!r}", locus)
            if not isinstance(rename, str) or not rename:
                raise ParseError("rename must be a non-empty string", locus)
            if _BAD_NAME_CHARS.search(rename):
                raise ParseError("rename contains brace or newline characters", locus)
            renames[(name, kind)] = rename
    return renames


def apply_rename_map(table: LabelTable, renames: dict) -> tuple:
    """Store renames on the matching entries.

    Returns (new_table, issues).  Unknown (name, kind) keys are reported
    as issues.  A rename that would alias two distinct labels of the
    same kind is a hard error.
    """
    out = table.copy()
    issues = []
    for (name, kind), rename in sorted(renames.items()):
        entry = out.get(name, kind)
        if entry is None:
            issues.append(
                RecordIssue("rename", f"({name}, {kind})", "rename key not in label table")
            )
            continue
        out._entries[(name, kind)] = replace(entry, rename=rename)

    seen: dict = {}
    for entry in out.entries():
        key = (entry.kind, entry.display_name)
        if key in seen:
            raise MultigrainError(
                f"rename collision: {seen[key]!r} and {entry.name!r} both display as "
                f"{entry.display_name!r} ({entry.kind})"
            )
        seen[key] = entry.name
    return out, issues


def _parse_box(raw, locus: str) -> BoundingBox:
    if (
        not isinstance(raw, (list, tuple))
        or len(raw) != 4
        or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in raw)
    ):
        raise ParseError("bbox must be [x, y, w, h] numbers", locus)
    return BoundingBox(*raw)


def parse_corpus(annotation_path, label_path, rename_path=None) -> tuple:
    """Parse and validate a corpus.

    Returns (images, label_table, issues) where images are sorted by id.
    Structural problems (bad JSON, wrong field shapes) raise ParseError;
    per-record semantic violations land in the issue list and the record
    is dropped while everything else is kept.
    """
    table, issues = parse_label_table(label_path)
    if rename_path is not None:
        renames = parse_rename_map(rename_path)
        table, rename_issues = apply_rename_map(table, renames)
        issues.extend(rename_issues)

    with open(annotation_path, encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(
                f"invalid JSON ({exc.msg})", f"{annotation_path}:{exc.lineno}"
            ) from exc
    if not isinstance(payload, dict):
        raise ParseError("annotation file must be a JSON object", str(annotation_path))

    images: dict = {}
    for i, record in enumerate(payload.get("images", [])):
        locus = f"images[{i}]"
        image_id = str(_expect(record, "id", locus))
        width = _expect(record, "width", locus)
        height = _expect(record, "height", locus)
        if not isinstance(width, int) or not isinstance(height, int) or width <= 0 or height <= 0:
            issues.append(RecordIssue("image", locus, "width/height must be positive integers"))
            continue
        if image_id in images:
            issues.append(RecordIssue("image", locus, f"duplicate image id {image_id!r}"))
            continue
        caption = record.get("caption")
        narrative = record.get("localized_narrative")
        images[image_id] = AnnotatedImage(
            id=image_id,
            source_width=width,
            source_height=height,
            caption=normalize_text(str(caption)) or None if caption is not None else None,
            localized_narrative=(
                normalize_text(str(narrative)) or None if narrative is not None else None
            ),
        )

    accepted_objects: dict = {}
    for i, record in enumerate(payload.get("objects", [])):
        locus = f"objects[{i}]"
        obj_id = str(_expect(record, "id", locus))
        image_id = str(_expect(record, "image_id", locus))
        label = str(_expect(record, "label", locus))
        box = _parse_box(_expect(record, "bbox", locus), locus)
        if obj_id in accepted_objects:
            issues.append(RecordIssue("object", locus, f"duplicate object id {obj_id!r}"))
            continue
        image = images.get(image_id)
        if image is None:
            issues.append(RecordIssue("object", locus, f"unknown image_id {image_id!r}"))
            continue
        reason = box.legality_error(image.source_width, image.source_height)
        if reason is not None:
            issues.append(RecordIssue("object", locus, reason))
            continue
        entry = table.get(label, "object")
        if entry is None:
            issues.append(RecordIssue("object", locus, f"label {label!r} not an object label"))
            continue
        obj = ObjectAnnotation(id=obj_id, image_id=image_id, box=box, label=label)
        accepted_objects[obj_id] = obj
        image.objects.append(obj)

    for i, record in enumerate(payload.get("attributes", [])):
        locus = f"attributes[{i}]"
        label = str(_expect(record, "label", locus))
        raw_members = _expect(record, "object_ids", locus)
        if not isinstance(raw_members, list) or not raw_members:
            issues.append(RecordIssue("attribute", locus, "object_ids must be non-empty"))
            continue
        member_ids = tuple(str(m) for m in raw_members)
        if table.get(label, "attribute") is None:
            issues.append(
                RecordIssue("attribute", locus, f"label {label!r} not an attribute label")
            )
            continue
        members = [accepted_objects.get(m) for m in member_ids]
        if any(m is None for m in members):
            issues.append(RecordIssue("attribute", locus, "member object not in corpus"))
            continue
        image_ids = {m.image_id for m in members}
        if len(image_ids) != 1:
            issues.append(RecordIssue("attribute", locus, "members span multiple images"))
            continue
        images[image_ids.pop()].attributes.append(
            AttributeAnnotation(label=label, member_ids=member_ids)
        )

    for i, record in enumerate(payload.get("relationships", [])):
        locus = f"relationships[{i}]"
        label = str(_expect(record, "label", locus))
        subject_id = str(_expect(record, "subject_id", locus))
        object_id = str(_expect(record, "object_id", locus))
        if table.get(label, "relationship") is None:
            issues.append(
                RecordIssue("relationship", locus, f"label {label!r} not a relationship label")
            )
            continue
        if subject_id == object_id:
            issues.append(RecordIssue("relationship", locus, "subject equals object"))
            continue
        subject = accepted_objects.get(subject_id)
        obj = accepted_objects.get(object_id)
        if subject is None or obj is None:
            issues.append(RecordIssue("relationship", locus, "endpoint object not in corpus"))
            continue
        if subject.image_id != obj.image_id:
            issues.append(RecordIssue("relationship", locus, "endpoints span multiple images"))
            continue
        images[subject.image_id].relationships.append(
            RelationshipAnnotation(label=label, subject_id=subject_id, object_id=object_id)
        )

    ordered = [images[k] for k in sorted(images)]
    return ordered, table, issues


def serialize_corpus(images: Iterable[AnnotatedImage], table: LabelTable) -> tuple:
    """Inverse of parse_corpus: (annotation JSON text, label JSONL text)."""
    payload = {"images": [], "objects": [], "attributes": [], "relationships": []}
    for image in images:
        record = {"id": image.id, "width": image.source_width, "height": image.source_height}
        if image.caption is not None:
            record["caption"] = image.caption
        if image.localized_narrative is not None:
            record["localized_narrative"] = image.localized_narrative
        payload["images"].append(record)
        for obj in image.objects:
            payload["objects"].append(
                {
                    "id": obj.id,
                    "image_id": obj.image_id,
                    "bbox": [obj.box.x, obj.box.y, obj.box.w, obj.box.h],
                    "label": obj.label,
                }
            )
        for attr in image.attributes:
            payload["attributes"].append(
                {"label": attr.label, "object_ids": list(attr.member_ids)}
            )
        for rel in image.relationships:
            payload["relationships"].append(
                {
                    "label": rel.label,
                    "subject_id": rel.subject_id,
                    "object_id": rel.object_id,
                }
            )
    label_lines = []
    for entry in table.entries():
        record = {"name": entry.name, "kind": entry.kind}
        if entry.description is not None:
            record["description"] = entry.description
        label_lines.append(json.dumps(record, ensure_ascii=False))
    return json.dumps(payload, ensure_ascii=False, indent=1), "\n".join(label_lines) + "\n"
