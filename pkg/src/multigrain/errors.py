"""Exception hierarchy and record-level issue reporting."""

from __future__ import annotations

from dataclasses import dataclass


class MultigrainError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(MultigrainError):
    """Malformed input file; carries a file/record locus."""

    def __init__(self, message: str, locus: str = ""):
        self.locus = locus
        super().__init__(f"{locus}: {message}" if locus else message)


class ConfigError(MultigrainError):
    """Invalid pipeline or operation configuration."""


class ScorerError(MultigrainError):
    """Fatal similarity-scorer failure (missing score, protocol breach)."""


class ScorerTransportError(ScorerError):
    """Retriable transport failure while talking to a scorer bridge."""


class MissingCaptionError(MultigrainError):
    """No caption candidate exists for an image that needs one."""


class VocabularyOverflowError(MultigrainError):
    """Mock text tokenizer ran out of vocabulary slots."""


class EmptyDocumentError(MultigrainError):
    """A recipe with every part disabled cannot render a document."""


class SpanError(MultigrainError):
    """A loss span boundary falls inside a visual token run."""


@dataclass(frozen=True)
class RecordIssue:
    """One rejected or suspicious input record.

    Parsing is total: every record is either emitted into the corpus or
    shows up exactly once in the issue report.
    """

    record_kind: str  # image | object | attribute | relationship | label | rename
    locus: str  # e.g. "objects[3]" or the record's id
    message: str

    def to_json(self) -> dict:
        return {
            "record_kind": self.record_kind,
            "locus": self.locus,
            "message": self.message,
        }
