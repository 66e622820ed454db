"""Stdio JSONL sidecar that scores image-caption similarity."""

from .server import jaccard_score, load_references, mock_score, serve

__all__ = ["jaccard_score", "load_references", "mock_score", "serve"]
