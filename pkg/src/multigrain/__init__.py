"""Compiler for multi-grained, image-text interleaved multimodal training corpora.

Turns object-detection-style annotations (boxes, labels, attributes,
relationships, captions) into structured interleaved documents and
discrete token sequences with per-token loss weights, plus the
analytics to audit the result.
"""

from .geometry import KERNEL_IMPLEMENTATION

__version__ = "0.1.0"

__all__ = ["KERNEL_IMPLEMENTATION", "__version__"]
