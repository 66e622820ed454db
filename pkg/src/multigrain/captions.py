"""Caption candidate filtering and selection cascade.

Candidates are generated elsewhere; this module applies the
length/similarity filters per round, picks the top survivor, and falls
back to the global best-scoring candidate when every round fails.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence

from .errors import ConfigError, MissingCaptionError, MultigrainError


@dataclass(frozen=True)
class CaptionFilterConfig:
    min_words: int = 5
    max_words: int = 25
    min_score: float = 0.25
    max_rounds: int = 10

    def __post_init__(self):
        if self.min_words > self.max_words:
            raise ConfigError("min_words must be <= max_words")
        if self.max_rounds < 1:
            raise ConfigError("max_rounds must be >= 1")


@dataclass(frozen=True)
class CaptionCandidate:
    image_id: str
    text: str
    score: float
    round: int

    def __post_init__(self):
        if self.round < 1:
            raise MultigrainError(f"candidate round must be >= 1, got {self.round}")

    @property
    def word_count(self) -> int:
        return len(self.text.split())


def filter_round(
    candidates: Sequence[CaptionCandidate], config: CaptionFilterConfig
) -> Optional[CaptionCandidate]:
    """Best surviving candidate of one round, or None.

    Rejects word_count < min_words, word_count > max_words, and
    score < min_score; all three boundaries are strict, so a candidate
    at exactly the threshold passes.  Ties on score break by
    lexicographically smallest text.
    """
    if candidates:
        image_ids = {c.image_id for c in candidates}
        rounds = {c.round for c in candidates}
        if len(image_ids) != 1 or len(rounds) != 1:
            raise MultigrainError("filter_round expects one image and one round")
    survivors = [
        c
        for c in candidates
        if c.word_count >= config.min_words
        and c.word_count <= config.max_words
        and c.score >= config.min_score
    ]
    if not survivors:
        return None
    return min(survivors, key=lambda c: (-c.score, c.text))


def select_caption(
    rounds: Sequence[Sequence[CaptionCandidate]], config: CaptionFilterConfig
) -> CaptionCandidate:
    """First round with a survivor wins; otherwise the global argmax.

    Only the first max_rounds rounds are considered.  The fallback
    ignores the filters entirely, per the cascade's last resort.
    """
    considered = list(rounds[: config.max_rounds])
    everything = [c for chunk in considered for c in chunk]
    if not everything:
        raise MissingCaptionError("no caption candidates supplied")
    for chunk in considered:
        best = filter_round(chunk, config)
        if best is not None:
            return best
    return min(everything, key=lambda c: (-c.score, c.text))


def group_rounds(candidates: Iterable[CaptionCandidate]) -> Dict[str, List[List[CaptionCandidate]]]:
    """Group a candidate stream into per-image round lists (round order 1..n)."""
    by_image: Dict[str, Dict[int, List[CaptionCandidate]]] = {}
    for cand in candidates:
        by_image.setdefault(cand.image_id, {}).setdefault(cand.round, []).append(cand)
    out: Dict[str, List[List[CaptionCandidate]]] = {}
    for image_id, per_round in by_image.items():
        out[image_id] = [per_round[r] for r in sorted(per_round)]
    return out


def read_candidate_file(path) -> List[dict]:
    """Read JSONL {image_id, round, text} candidate records."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            out.append(
                {
                    "image_id": str(record["image_id"]),
                    "round": int(record["round"]),
                    "text": str(record["text"]),
                }
            )
    return out
