"""Line-delimited JSON scoring service.

Reads one request object per stdin line: {"id", "image_ref", "caption"}.
Writes one response per request, flushed immediately:
  {"id": ..., "score": ...}   on success
  {"id": ..., "error": ...}   on a malformed or duplicate request
Responses may arrive in any order; EOF on stdin means a clean exit.

The default scorer is a deterministic mock: the Jaccard similarity of
lowercase word sets between the caption and a per-image reference text
supplied with --refs.  A real CLIP-style scorer can be plugged in with
--model clip (requires an importable `clip_scorer` module exposing
score(image_ref, caption) -> float).
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Callable, Dict, Optional, TextIO


def jaccard_score(a: str, b: str) -> float:
    """Jaccard similarity of lowercase word sets; 1.0 for two empty texts."""
    words_a = set(a.lower().split())
    words_b = set(b.lower().split())
    union = words_a | words_b
    if not union:
        return 1.0
    return len(words_a & words_b) / len(union)


def load_references(path: str) -> Dict[str, str]:
    """Read the JSONL {image_ref, text} sidecar mapping."""
    refs: Dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            try:
                refs[str(record["image_ref"])] = str(record["text"])
            except (TypeError, KeyError) as exc:
                raise SystemExit(f"{path}:{lineno}: bad reference record: {exc}")
    return refs


def mock_score(
    image_ref: str, caption: str, refs: Dict[str, str], log: Optional[TextIO] = None
) -> float:
    """Deterministic stand-in for a learned similarity model."""
    reference = refs.get(image_ref)
    if reference is None:
        if log is not None:
            log.write(f"scorer: unknown image_ref {image_ref!r}, scoring 0.0\n")
        return 0.0
    return jaccard_score(caption, reference)


def serve(
    stdin: TextIO,
    stdout: TextIO,
    score_fn: Callable[[str, str], float],
    log: Optional[TextIO] = None,
) -> int:
    """Answer every request exactly once; never crash on bad input."""
    seen = set()
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
            request_id = request["id"]
            image_ref = str(request["image_ref"])
            caption = str(request["caption"])
        except (json.JSONDecodeError, TypeError, KeyError) as exc:
            _reply(stdout, {"id": None, "error": f"malformed request: {exc}"})
            continue
        if request_id in seen:
            _reply(stdout, {"id": request_id, "error": "duplicate request id"})
            continue
        seen.add(request_id)
        try:
            score = float(score_fn(image_ref, caption))
        except Exception as exc:  # a scorer bug must not kill the session
            _reply(stdout, {"id": request_id, "error": f"scorer failure: {exc}"})
            continue
        _reply(stdout, {"id": request_id, "score": score})
    return 0


def _reply(stdout: TextIO, payload: dict) -> None:
    stdout.write(json.dumps(payload, ensure_ascii=False) + "\n")
    stdout.flush()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="stdio JSONL image-caption scorer")
    parser.add_argument("--refs", required=True, help="JSONL {image_ref, text} reference file")
    parser.add_argument("--model", choices=("mock", "clip"), default="mock")
    args = parser.parse_args(argv)

    refs = load_references(args.refs)
    if args.model == "clip":
        try:
            import clip_scorer  # type: ignore
        except ImportError:
            parser.error("--model clip requires an importable clip_scorer module")
        score_fn = clip_scorer.score
    else:
        score_fn = lambda image_ref, caption: mock_score(  # noqa: E731
            image_ref, caption, refs, log=sys.stderr
        )
    return serve(sys.stdin, sys.stdout, score_fn, log=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
