"""Similarity-score acquisition for caption candidates.

Scores come either from a static JSONL file or from an external bridge
process speaking line-delimited JSON over stdio (selected with the
MGIC_SCORER_CMD environment variable or pipeline config).  The scorer
is a contract, never an embedded model.
"""

from __future__ import annotations

import hashlib
import json
import shlex
import subprocess
from dataclasses import dataclass
from typing import Dict, List, Sequence

from .errors import ParseError, ScorerError, ScorerTransportError

SCORER_CMD_ENV = "MGIC_SCORER_CMD"


def text_hash(text: str) -> str:
    """Stable caption fingerprint used by static score files."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ScoreRequest:
    id: str
    image_ref: str
    caption: str


class StaticScoreFile:
    """Score lookup from JSONL {image_id, round, text_hash, score}."""

    def __init__(self, path):
        self._scores: Dict[tuple, float] = {}
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
                key = (str(record["image_id"]), int(record["round"]), str(record["text_hash"]))
                score = float(record["score"])
                if key in self._scores and self._scores[key] != score:
                    raise ScorerError(f"{locus}: conflicting duplicate score for {key}")
                self._scores[key] = score

    def lookup(self, image_id: str, round_no: int, text: str) -> float:
        key = (image_id, round_no, text_hash(text))
        if key not in self._scores:
            raise ScorerError(f"no score for image {image_id!r} round {round_no}")
        return self._scores[key]


class BridgeClient:
    """One-shot batch client for the stdio JSONL scorer bridge."""

    def __init__(self, command: str, timeout: float = 60.0):
        if not command:
            raise ScorerError("no scorer command configured")
        self.command = command
        self.timeout = timeout

    def fetch(self, requests: Sequence[ScoreRequest]) -> Dict[str, float]:
        seen = set()
        for request in requests:
            if request.id in seen:
                raise ScorerError(f"duplicate request id {request.id!r}")
            seen.add(request.id)
        payload = "".join(
            json.dumps(
                {"id": r.id, "image_ref": r.image_ref, "caption": r.caption},
                ensure_ascii=False,
            )
            + "\n"
            for r in requests
        )
        try:
            proc = subprocess.run(
                shlex.split(self.command),
                input=payload,
                capture_output=True,
                text=True,
                timeout=self.timeout,
            )
        except subprocess.TimeoutExpired as exc:
            raise ScorerTransportError(f"scorer timed out after {self.timeout}s") from exc
        except OSError as exc:
            raise ScorerTransportError(f"cannot launch scorer: {exc}") from exc
        if proc.returncode != 0:
            raise ScorerTransportError(
                f"scorer exited with {proc.returncode}: {proc.stderr.strip()[:500]}"
            )
        scores: Dict[str, float] = {}
        for line in proc.stdout.splitlines():
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ScorerTransportError(f"unparseable scorer response: {line[:200]}") from exc
            if record.get("error") is not None:
                raise ScorerError(f"scorer error for id {record.get('id')!r}: {record['error']}")
            rid = record.get("id")
            if rid in scores:
                raise ScorerError(f"duplicate response id {rid!r}")
            scores[rid] = float(record["score"])
        missing = [r.id for r in requests if r.id not in scores]
        if missing:
            raise ScorerError(f"scorer left {len(missing)} requests unanswered: {missing[:5]}")
        return scores


def request_scores(pairs: Sequence[tuple], client: BridgeClient) -> List[float]:
    """Score (image_ref, caption) pairs through a bridge, order preserved."""
    requests = [
        ScoreRequest(id=f"q{i}", image_ref=ref, caption=caption)
        for i, (ref, caption) in enumerate(pairs)
    ]
    scores = client.fetch(requests)
    return [scores[r.id] for r in requests]
