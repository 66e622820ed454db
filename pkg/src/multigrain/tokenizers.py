"""Tokenizer contracts with deterministic mocks.

Real text/visual tokenizers live outside this package; the mocks here
are stable stand-ins: the text mock grows a persisted first-seen
vocabulary, the visual mock derives a dynamic-length id sequence from a
hash of the region key.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import dataclass
from typing import Dict, List, Optional

from .errors import ConfigError, MultigrainError, VocabularyOverflowError


@dataclass(frozen=True)
class TokenizerSpec:
    text_vocab_size: int = 32768
    visual_codebook_size: int = 16384
    bos_id: int = 0
    eos_id: int = 1
    img_open_id: int = 2
    img_close_id: int = 3

    def __post_init__(self):
        specials = (self.bos_id, self.eos_id, self.img_open_id, self.img_close_id)
        if len(set(specials)) != 4:
            raise ConfigError("special token ids must be pairwise distinct")
        if self.text_vocab_size < 1 or self.visual_codebook_size < 1:
            raise ConfigError("vocabulary sizes must be positive")
        content_lo = self.text_base
        content_hi = self.visual_base + self.visual_codebook_size
        if any(content_lo <= s < content_hi for s in specials):
            raise ConfigError("special ids overlap content id ranges")

    @property
    def text_base(self) -> int:
        return 1 + max(self.bos_id, self.eos_id, self.img_open_id, self.img_close_id)

    @property
    def visual_base(self) -> int:
        return self.text_base + self.text_vocab_size

    @property
    def special_ids(self) -> frozenset:
        return frozenset((self.bos_id, self.eos_id, self.img_open_id, self.img_close_id))


_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)

VISUAL_LEN_MIN = 32
VISUAL_LEN_MAX = 256


class MockTextTokenizer:
    """Whitespace/punctuation splitter with a stable first-seen vocabulary."""

    def __init__(
        self,
        spec: TokenizerSpec,
        vocab: Optional[Dict[str, int]] = None,
        frozen: bool = False,
    ):
        self.spec = spec
        self.vocab: Dict[str, int] = dict(vocab) if vocab else {}
        self.frozen = frozen

    def pieces(self, text: str) -> List[str]:
        return _TOKEN_RE.findall(text)

    def feed(self, text: str) -> None:
        """Grow the vocabulary without emitting ids (pre-pass)."""
        for piece in self.pieces(text):
            self._intern(piece)

    def tokenize(self, text: str) -> List[int]:
        base = self.spec.text_base
        return [base + self._intern(piece) for piece in self.pieces(text)]

    def _intern(self, piece: str) -> int:
        idx = self.vocab.get(piece)
        if idx is not None:
            return idx
        if self.frozen:
            raise MultigrainError(f"token {piece!r} missing from frozen vocabulary")
        idx = len(self.vocab)
        if idx >= self.spec.text_vocab_size:
            raise VocabularyOverflowError(
                f"text vocabulary exceeds {self.spec.text_vocab_size} entries"
            )
        self.vocab[piece] = idx
        return idx

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.vocab, fh, ensure_ascii=False)

    @classmethod
    def load(cls, path, spec: TokenizerSpec, frozen: bool = True) -> "MockTextTokenizer":
        with open(path, encoding="utf-8") as fh:
            return cls(spec, vocab=json.load(fh), frozen=frozen)


def visual_key_for_image(image_id: str) -> str:
    return f"image\x1f{image_id}"


def visual_key_for_region(image_id: str, square: tuple) -> str:
    x0, y0, side = square
    return f"region\x1f{image_id}\x1f{x0}\x1f{y0}\x1f{side}"


class MockVisualTokenizer:
    """Hash-seeded stand-in for a frozen VQ visual tokenizer.

    Emits a dynamic-length sequence (32..256 ids) that depends only on
    the key and codebook size, so the same image or region always maps
    to the same tokens.
    """

    def __init__(self, spec: TokenizerSpec):
        self.spec = spec

    def tokenize(self, key: str) -> List[int]:
        digest = hashlib.blake2b(key.encode("utf-8"), digest_size=16).digest()
        span = VISUAL_LEN_MAX - VISUAL_LEN_MIN + 1
        length = VISUAL_LEN_MIN + int.from_bytes(digest[:8], "big") % span
        rng = random.Random(int.from_bytes(digest[8:], "big"))
        base = self.spec.visual_base
        codebook = self.spec.visual_codebook_size
        return [base + rng.randrange(codebook) for _ in range(length)]
