"""Instruction-tuning sample templates.

Each sample is a list of rounds rendered as
"<s> [INST] ... [/INST] answer </s>"; the first round carries the
system prompt inside a <<SYS>> block.  Answer segments are kept
separate so the loss mask can weight only answer tokens.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .compose import (
    IMAGE_FIRST,
    TEXT_FIRST,
    ImageRef,
    RecipeConfig,
    RegionRef,
    RenderedDocument,
    Text,
    Variant,
    render_document,
)
from .errors import MultigrainError
from .regions import RegionSpec
from .schema import AnnotatedImage, LabelTable

SYSTEM_PROMPT = (
    "You are a helpful, respectful and honest assistant. Always answer as helpfully "
    "as possible, while being safe. Your answers should not include any harmful, "
    "unethical, racist, sexist, toxic, dangerous, or illegal content. Please ensure "
    "that your responses are socially unbiased and positive in nature"
)

TASK_CONVERSATION = "conversation"
TASK_OPEN_VQA = "open_vqa"
TASK_MULTI_CHOICE = "multi_choice"
TASK_DETAILED_CAPTION = "detailed_caption"
TASK_IMAGE_CAPTION = "image_caption"
TASK_IMAGE_EDITING = "image_editing"
TASK_TEXT2IMAGE = "text2image"
TASK_TEXT_ONLY = "text_only"
TASK_PLAYBACK_TEXT_FIRST = "playback_text_first"
TASK_PLAYBACK_IMAGE_FIRST = "playback_image_first"

TASKS = (
    TASK_CONVERSATION,
    TASK_OPEN_VQA,
    TASK_MULTI_CHOICE,
    TASK_DETAILED_CAPTION,
    TASK_IMAGE_CAPTION,
    TASK_IMAGE_EDITING,
    TASK_TEXT2IMAGE,
    TASK_TEXT_ONLY,
    TASK_PLAYBACK_TEXT_FIRST,
    TASK_PLAYBACK_IMAGE_FIRST,
)

VQA_SUFFIX = "\nAnswer the question using a single word or phrase."
MULTI_CHOICE_SUFFIX = "\nAnswer with the option's letter from the given choices directly."
IMAGE_CAPTION_INSTRUCTION = "Provide a one-sentence caption for the provided image."
TEXT2IMAGE_PREFIX = "Create an image that visually represents the description: "
TEXT2IMAGE_ANSWER = "Here is the image: "
IMAGE_EDITING_ANSWER = "Here is the edited image: "


@dataclass(frozen=True)
class SftRound:
    instruction: tuple  # segments
    answer: tuple  # segments


@dataclass(frozen=True)
class SftSample:
    task: str
    rounds: tuple
    system_prompt: str = SYSTEM_PROMPT
    regions: tuple = ()  # RegionSpec pool for RegionRef resolution (playback)
    image_id: Optional[str] = None  # owner of the region pool

    def to_text(self) -> str:
        parts = []
        for i, rnd in enumerate(self.rounds):
            instruction = _segments_text(rnd.instruction)
            answer = _segments_text(rnd.answer)
            if i == 0:
                parts.append(
                    f"<s> [INST] <<SYS>>\n{self.system_prompt}\n<</SYS>>\n\n"
                    f"{instruction} [/INST] {answer} </s>"
                )
            else:
                parts.append(f"<s>[INST] {instruction} [/INST] {answer} </s>")
        return "".join(parts)


def _segments_text(segments: Sequence) -> str:
    return "".join(s.text if isinstance(s, Text) else "[IMG]" for s in segments)


def _image_question(image_id: str, question: str) -> tuple:
    return (ImageRef(image_id), Text(f"\n{question}"))


def render_sft(record: dict, corpus: Optional[dict] = None) -> SftSample:
    """Build an SftSample from one instruction record.

    Record fields vary by task; see the README's instruction-file
    schema.  Playback tasks need `corpus`: {image_id: (image, regions,
    label_table, recipe)}.  Unknown tasks are an error.
    """
    task = record.get("task")
    if task in (TASK_PLAYBACK_TEXT_FIRST, TASK_PLAYBACK_IMAGE_FIRST):
        if corpus is None:
            raise MultigrainError(f"task {task!r} requires corpus context")
        image_id = str(record["image"])
        if image_id not in corpus:
            raise MultigrainError(f"playback image {image_id!r} not in corpus")
        image, regions, table, recipe = corpus[image_id]
        return render_playback(
            image, regions, table, recipe, image_first=task == TASK_PLAYBACK_IMAGE_FIRST
        )
    if task == TASK_CONVERSATION:
        rounds = []
        for i, rnd in enumerate(record["rounds"]):
            question, response = str(rnd["question"]), str(rnd["response"])
            instruction = (
                _image_question(str(record["image"]), question) if i == 0 else (Text(question),)
            )
            rounds.append(SftRound(instruction, (Text(response),)))
        return SftSample(task, tuple(rounds))
    if task == TASK_OPEN_VQA:
        instruction = _image_question(str(record["image"]), str(record["question"]) + VQA_SUFFIX)
        return SftSample(task, (SftRound(instruction, (Text(str(record["response"])),)),))
    if task == TASK_MULTI_CHOICE:
        instruction = _image_question(
            str(record["image"]), str(record["question"]) + MULTI_CHOICE_SUFFIX
        )
        return SftSample(task, (SftRound(instruction, (Text(str(record["response"])),)),))
    if task == TASK_DETAILED_CAPTION:
        instruction = _image_question(str(record["image"]), str(record["instruction"]))
        return SftSample(task, (SftRound(instruction, (Text(str(record["response"])),)),))
    if task == TASK_IMAGE_CAPTION:
        instruction = _image_question(str(record["image"]), IMAGE_CAPTION_INSTRUCTION)
        return SftSample(task, (SftRound(instruction, (Text(str(record["response"])),)),))
    if task == TASK_IMAGE_EDITING:
        instruction = (ImageRef(str(record["image"])), Text(" " + str(record["instruction"])))
        answer = (Text(IMAGE_EDITING_ANSWER), ImageRef(str(record["output_image"])))
        return SftSample(task, (SftRound(instruction, answer),))
    if task == TASK_TEXT2IMAGE:
        instruction = (Text(TEXT2IMAGE_PREFIX + str(record["caption"])),)
        answer = (Text(TEXT2IMAGE_ANSWER), ImageRef(str(record["output_image"])))
        return SftSample(task, (SftRound(instruction, answer),))
    if task == TASK_TEXT_ONLY:
        rounds = tuple(
            SftRound((Text(str(rnd["question"])),), (Text(str(rnd["response"])),))
            for rnd in record["rounds"]
        )
        return SftSample(task, rounds)
    raise MultigrainError(f"unknown SFT task {task!r}")


def render_playback(
    image: AnnotatedImage,
    regions: Sequence[RegionSpec],
    table: LabelTable,
    recipe: RecipeConfig,
    image_first: bool,
) -> SftSample:
    """Corpus playback: image-level part in round 1, one round per region.

    Text-first pairs annotation text as the instruction with the image
    as the answer; image-first swaps the direction.
    """
    kind = IMAGE_FIRST if image_first else TEXT_FIRST
    doc = render_document(
        image,
        regions=(),
        table=table,
        recipe=RecipeConfig(recipe.caption, recipe.labels, recipe.descriptions, False),
        variant=Variant(kind, recipe.descriptions),
    )
    image_text = _image_level_text(doc)
    image_segment = (ImageRef(image.id),)
    text_segment = (Text(image_text),)
    if image_first:
        rounds = [SftRound(image_segment, text_segment)]
    else:
        rounds = [SftRound(text_segment, image_segment)]

    pool = tuple(regions) if recipe.regions else ()
    for i, region in enumerate(pool):
        lines = [f"Location of the selected region in the image: {region.location}", "Objects:"]
        lines.extend(f"- {label}" for label in region.labels)
        region_text = (Text("\n".join(lines)),)
        region_segment = (RegionRef(i),)
        if image_first:
            rounds.append(SftRound(region_segment, region_text))
        else:
            rounds.append(SftRound(region_text, region_segment))
    task = TASK_PLAYBACK_IMAGE_FIRST if image_first else TASK_PLAYBACK_TEXT_FIRST
    return SftSample(task, tuple(rounds), regions=pool, image_id=image.id)


def _image_level_text(doc: RenderedDocument) -> str:
    """Document text minus the header and the Image: line, trimmed."""
    text = doc.to_text()
    lines = [
        line
        for line in text.splitlines()
        if not line.startswith("# ") and line not in ("Image: [IMG]",)
    ]
    while lines and not lines[0].strip():
        lines.pop(0)
    while lines and not lines[-1].strip():
        lines.pop()
    return "\n".join(lines)
