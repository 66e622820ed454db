"""Token sequence assembly, budget packing, and loss-weight emission."""

from __future__ import annotations

import json
import random
import struct
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

from .compose import (
    REGION_HEADER,
    REGION_SECTION_HEADER,
    ImageRef,
    RecipeConfig,
    RegionRef,
    RenderedDocument,
    Text,
    Variant,
    choose_variant,
    render_document,
)
from .errors import ConfigError, SpanError
from .schema import AnnotatedImage, LabelTable
from .seeding import rng_for
from .sft import SftSample
from .tokenizers import (
    MockTextTokenizer,
    MockVisualTokenizer,
    TokenizerSpec,
    visual_key_for_image,
    visual_key_for_region,
)

MODALITY_TEXT = 0
MODALITY_VISUAL = 1
MODALITY_SPECIAL = 2

MAX_TOKENS = 2048


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 0.1  # visual-token loss scale
    mask_prob: float = 0.9  # per-sample probability of zeroing visual loss

    def __post_init__(self):
        if not 0.0 <= self.mask_prob <= 1.0:
            raise ConfigError("mask_prob must lie in [0, 1]")
        if self.alpha < 0:
            raise ConfigError("alpha must be >= 0")


@dataclass
class TokenizedSample:
    ids: List[int]
    modality: List[int]
    weights: Optional[List[float]] = None
    provenance: dict = field(default_factory=dict)
    answer_spans: Optional[List[Tuple[int, int]]] = None  # SFT only

    def __len__(self) -> int:
        return len(self.ids)

    def to_json(self) -> dict:
        return {
            "ids": self.ids,
            "modality": self.modality,
            "weights": self.weights,
            "provenance": self.provenance,
        }


@dataclass(frozen=True)
class Discard:
    image_id: str
    repetition_index: int
    reason: str = "over_budget"


@dataclass
class Tokenizers:
    spec: TokenizerSpec
    text: MockTextTokenizer
    visual: MockVisualTokenizer

    @classmethod
    def fresh(cls, spec: Optional[TokenizerSpec] = None) -> "Tokenizers":
        spec = spec or TokenizerSpec()
        return cls(spec=spec, text=MockTextTokenizer(spec), visual=MockVisualTokenizer(spec))


def _visual_run(ids, modality, toks: Tokenizers, key: str) -> None:
    spec = toks.spec
    visual = toks.visual.tokenize(key)
    ids.append(spec.img_open_id)
    modality.append(MODALITY_SPECIAL)
    ids.extend(visual)
    modality.extend([MODALITY_VISUAL] * len(visual))
    ids.append(spec.img_close_id)
    modality.append(MODALITY_SPECIAL)


def assemble(doc: RenderedDocument, toks: Tokenizers) -> TokenizedSample:
    """Tokenize a rendered document: <s> ... </s> with framed visual runs."""
    spec = toks.spec
    ids: List[int] = [spec.bos_id]
    modality: List[int] = [MODALITY_SPECIAL]
    for segment in doc.segments:
        if isinstance(segment, Text):
            text_ids = toks.text.tokenize(segment.text)
            ids.extend(text_ids)
            modality.extend([MODALITY_TEXT] * len(text_ids))
        elif isinstance(segment, ImageRef):
            _visual_run(ids, modality, toks, visual_key_for_image(segment.image_id))
        elif isinstance(segment, RegionRef):
            region = doc.regions[segment.index]
            _visual_run(ids, modality, toks, visual_key_for_region(doc.image_id, region.square))
        else:
            raise TypeError(f"unknown segment {segment!r}")
    ids.append(spec.eos_id)
    modality.append(MODALITY_SPECIAL)
    return TokenizedSample(
        ids=ids,
        modality=modality,
        provenance={
            "image_id": doc.image_id,
            "template_kind": doc.template_kind,
            "with_descriptions": doc.with_descriptions,
            "region_indices": list(doc.regions_included),
        },
    )


def _region_cost(region, image_id: str, toks: Tokenizers) -> int:
    """Token cost of one region block (text + framed visual run).

    Block text tokenizes the same in either template order, so the cost
    is additive and packing can run on a running sum.
    """
    lines = [
        REGION_HEADER,
        f"Location of the selected region in the image: {region.location}",
        "Objects:",
    ]
    lines.extend(f"- {label}" for label in region.labels)
    lines.append("Region:")
    text_tokens = len(toks.text.tokenize("\n".join(lines)))
    visual_tokens = len(toks.visual.tokenize(visual_key_for_region(image_id, region.square)))
    return text_tokens + visual_tokens + 2  # +2 for the [IMG]/[/IMG] frame


def pack(
    image: AnnotatedImage,
    pool: Sequence,
    table: LabelTable,
    recipe: RecipeConfig,
    variant: Variant,
    toks: Tokenizers,
    rng: random.Random,
    budget: int = MAX_TOKENS,
    repetition_index: int = 0,
) -> Union[TokenizedSample, Discard]:
    """Shuffle regions, keep the longest prefix fitting the budget.

    If the document overflows even with zero regions and descriptions
    are on, it is re-rendered without descriptions and packing retries
    with the same shuffled order; a sample that still overflows is
    discarded.
    """
    order = list(range(len(pool)))
    rng.shuffle(order)

    def finish(sample: TokenizedSample) -> TokenizedSample:
        sample.provenance["repetition_index"] = repetition_index
        return sample

    def attempt(with_desc: bool) -> Optional[TokenizedSample]:
        effective = Variant(variant.template_kind, with_desc)
        base_doc = render_document(image, (), table, recipe, effective, region_indices=())
        base_sample = assemble(base_doc, toks)
        base = len(base_sample)
        if base > budget:
            return None
        if not (recipe.regions and pool):
            return finish(base_sample)
        header_cost = len(toks.text.tokenize(REGION_SECTION_HEADER))
        kept = 0
        running = base
        for k, pool_index in enumerate(order):
            cost = _region_cost(pool[pool_index], image.id, toks)
            extra = header_cost if k == 0 else 0
            if running + extra + cost > budget:
                break
            running += extra + cost
            kept = k + 1
        if kept == 0:
            return finish(base_sample)
        indices = order[:kept]
        doc = render_document(
            image, [pool[i] for i in indices], table, recipe, effective, region_indices=indices
        )
        return finish(assemble(doc, toks))

    effective_desc = variant.with_descriptions and recipe.descriptions
    sample = attempt(effective_desc)
    if sample is None and effective_desc:
        sample = attempt(False)
    if sample is None:
        return Discard(image.id, repetition_index)
    return sample


def emit_loss_weights(
    sample: TokenizedSample, config: LossConfig, rng: random.Random, spec: TokenizerSpec
) -> List[float]:
    """Autoregressive loss weights for a pre-training sample.

    One seeded Bernoulli(mask_prob) draw per sample decides whether
    visual tokens (and their [IMG]/[/IMG] frame) carry weight 0 or
    alpha; text and </s> carry 1; the leading <s> is never a target.
    """
    masked = rng.random() < config.mask_prob
    visual_weight = 0.0 if masked else config.alpha
    frame = {spec.img_open_id, spec.img_close_id}
    weights: List[float] = []
    for i, (token_id, tag) in enumerate(zip(sample.ids, sample.modality)):
        if i == 0 and token_id == spec.bos_id:
            weights.append(0.0)  # never a prediction target
        elif tag == MODALITY_VISUAL or token_id in frame:
            weights.append(visual_weight)
        else:
            weights.append(1.0)
    return weights


def assemble_sft(sample: SftSample, toks: Tokenizers) -> TokenizedSample:
    """Tokenize an SFT sample, recording answer spans per round.

    Each span covers the answer segments plus the round's closing </s>.
    """
    spec = toks.spec
    ids: List[int] = []
    modality: List[int] = []
    spans: List[Tuple[int, int]] = []

    def emit_text(chunk: str) -> None:
        text_ids = toks.text.tokenize(chunk)
        ids.extend(text_ids)
        modality.extend([MODALITY_TEXT] * len(text_ids))

    def emit_segments(segments) -> None:
        for segment in segments:
            if isinstance(segment, Text):
                emit_text(segment.text)
            elif isinstance(segment, ImageRef):
                _visual_run(ids, modality, toks, visual_key_for_image(segment.image_id))
            elif isinstance(segment, RegionRef):
                region = sample.regions[segment.index]
                if sample.image_id is None:
                    raise SpanError("sample with region refs lacks an image id")
                _visual_run(
                    ids, modality, toks, visual_key_for_region(sample.image_id, region.square)
                )
            else:
                raise TypeError(f"unknown segment {segment!r}")

    for i, rnd in enumerate(sample.rounds):
        ids.append(spec.bos_id)
        modality.append(MODALITY_SPECIAL)
        if i == 0:
            emit_text(f"[INST] <<SYS>>\n{sample.system_prompt}\n<</SYS>>\n\n")
        else:
            emit_text("[INST] ")
        emit_segments(rnd.instruction)
        emit_text(" [/INST] ")
        span_start = len(ids)
        emit_segments(rnd.answer)
        ids.append(spec.eos_id)
        modality.append(MODALITY_SPECIAL)
        spans.append((span_start, len(ids)))

    return TokenizedSample(
        ids=ids,
        modality=modality,
        provenance={"task": sample.task, "rounds": len(sample.rounds)},
        answer_spans=spans,
    )


def emit_sft_mask(sample: TokenizedSample, config: LossConfig, spec: TokenizerSpec) -> List[float]:
    """Weights for SFT: answer spans plus each round's </s>, zero elsewhere.

    Text in an answer weighs 1; visual runs in an answer weigh alpha.
    A span boundary inside a visual run is a hard error.
    """
    if sample.answer_spans is None:
        raise SpanError("sample has no recorded answer spans")
    runs = _visual_run_intervals(sample, spec)
    weights = [0.0] * len(sample.ids)
    frame = {spec.img_open_id, spec.img_close_id}
    for start, end in sample.answer_spans:
        if not (0 <= start <= end <= len(sample.ids)):
            raise SpanError(f"span ({start}, {end}) outside sample")
        for run_start, run_end in runs:
            if start < run_end and end > run_start:  # overlap
                if not (start <= run_start and end >= run_end):
                    raise SpanError(
                        f"span ({start}, {end}) cuts visual run ({run_start}, {run_end})"
                    )
        for i in range(start, end):
            if sample.modality[i] == MODALITY_VISUAL or sample.ids[i] in frame:
                weights[i] = config.alpha
            else:
                weights[i] = 1.0
    return weights


def _visual_run_intervals(sample: TokenizedSample, spec: TokenizerSpec) -> List[Tuple[int, int]]:
    """[start, end) intervals covering each [IMG]...[/IMG] run."""
    runs = []
    open_at = None
    for i, token_id in enumerate(sample.ids):
        if token_id == spec.img_open_id:
            if open_at is not None:
                raise SpanError("nested [IMG] runs")
            open_at = i
        elif token_id == spec.img_close_id:
            if open_at is None:
                raise SpanError("[/IMG] without [IMG]")
            runs.append((open_at, i + 1))
            open_at = None
    if open_at is not None:
        raise SpanError("unterminated [IMG] run")
    return runs


def repetition_pass(
    image: AnnotatedImage,
    pool: Sequence,
    table: LabelTable,
    recipe: RecipeConfig,
    toks: Tokenizers,
    loss: LossConfig,
    seed: int,
    repeat_factor: int = 1,
    budget: int = MAX_TOKENS,
) -> List[Union[TokenizedSample, Discard]]:
    """Run choose_variant -> render -> pack -> weights repeat_factor times.

    Each repetition draws from its own (seed, image, repetition, purpose)
    streams, so worker count and run order cannot change the output.
    """
    out: List[Union[TokenizedSample, Discard]] = []
    for rep in range(repeat_factor):
        variant = choose_variant(rng_for(seed, image.id, rep, "variant"), recipe)
        result = pack(
            image,
            pool,
            table,
            recipe,
            variant,
            toks,
            rng_for(seed, image.id, rep, "shuffle"),
            budget=budget,
            repetition_index=rep,
        )
        if isinstance(result, TokenizedSample):
            result.weights = emit_loss_weights(
                result, loss, rng_for(seed, image.id, rep, "mask"), toks.spec
            )
        out.append(result)
    return out


# --- serialization -----------------------------------------------------------

BINARY_MAGIC = b"MMDOCSEQ"
BINARY_VERSION = 1


def write_samples_jsonl(path, samples: Sequence[TokenizedSample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(json.dumps(sample.to_json(), ensure_ascii=False) + "\n")


def write_samples_binary(path, samples: Sequence[TokenizedSample]) -> None:
    """Fixed-width binary: 16-byte header then per-sample records.

    Header: 8s magic, u32 version, u32 sample count (little endian).
    Record: u32 n, then n*u32 ids, n*u8 modality, n*f32 weights.
    """
    with open(path, "wb") as fh:
        fh.write(struct.pack("<8sII", BINARY_MAGIC, BINARY_VERSION, len(samples)))
        for sample in samples:
            n = len(sample.ids)
            weights = sample.weights or [0.0] * n
            fh.write(struct.pack("<I", n))
            fh.write(struct.pack(f"<{n}I", *sample.ids))
            fh.write(struct.pack(f"<{n}B", *sample.modality))
            fh.write(struct.pack(f"<{n}f", *weights))


def read_samples_binary(path) -> List[TokenizedSample]:
    with open(path, "rb") as fh:
        magic, version, count = struct.unpack("<8sII", fh.read(16))
        if magic != BINARY_MAGIC:
            raise ConfigError(f"bad magic {magic!r} in {path}")
        if version != BINARY_VERSION:
            raise ConfigError(f"unsupported binary version {version}")
        samples = []
        for _ in range(count):
            (n,) = struct.unpack("<I", fh.read(4))
            ids = list(struct.unpack(f"<{n}I", fh.read(4 * n)))
            modality = list(struct.unpack(f"<{n}B", fh.read(n)))
            weights = list(struct.unpack(f"<{n}f", fh.read(4 * n)))
            samples.append(TokenizedSample(ids=ids, modality=modality, weights=weights))
        return samples
