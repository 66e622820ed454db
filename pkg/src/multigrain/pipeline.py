"""End-to-end corpus build orchestration.

parse -> captions -> prune -> filter/resize -> regions -> vocabulary
pre-pass -> parallel per-(image, repetition) sample emission -> reports.
Unit outputs merge in (source, image id, repetition) order, so the
result is bit-identical for any worker count.
"""

from __future__ import annotations

import json
import multiprocessing
import os
import sys
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .captions import CaptionCandidate, CaptionFilterConfig, group_rounds, read_candidate_file, select_caption
from .cleanse import (
    CleanseConfig,
    Drop,
    compute_frequencies,
    filter_and_resize,
    prune_labels,
    write_drop_report,
)
from .compose import IMAGE_FIRST, RecipeConfig, Variant, render_document
from .errors import ConfigError, RecordIssue
from .regions import RegionConfig, build_regions, write_region_manifest
from .reporting import CorpusSlice, StatsReport, compute_stats, write_stats_json
from .schema import KINDS, AnnotatedImage, LabelTable, normalize_text, parse_corpus
from .scoring import SCORER_CMD_ENV, BridgeClient, ScoreRequest, StaticScoreFile, text_hash
from .sequence import (
    Discard,
    LossConfig,
    MAX_TOKENS,
    TokenizedSample,
    Tokenizers,
    repetition_pass,
    write_samples_binary,
    write_samples_jsonl,
)
from .tokenizers import MockTextTokenizer, MockVisualTokenizer, TokenizerSpec


@dataclass
class SourceSpec:
    name: str
    annotations: str
    labels: str
    renames: Optional[str] = None
    candidates: Optional[str] = None
    scores: Optional[str] = None
    repeat_factor: int = 1
    label_min_freq: Dict[str, int] = field(default_factory=dict)


@dataclass
class PipelineConfig:
    sources: List[SourceSpec]
    output_dir: str
    seed: int = 0
    recipe: RecipeConfig = field(default_factory=RecipeConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    caption_filter: CaptionFilterConfig = field(default_factory=CaptionFilterConfig)
    cleanse: CleanseConfig = field(default_factory=CleanseConfig)
    regions: RegionConfig = field(default_factory=RegionConfig)
    tokenizer: TokenizerSpec = field(default_factory=TokenizerSpec)
    budget: int = MAX_TOKENS
    workers: int = 1
    scorer_cmd: Optional[str] = None

    def __post_init__(self):
        if not self.sources:
            raise ConfigError("at least one source is required")
        names = [s.name for s in self.sources]
        if len(set(names)) != len(names):
            raise ConfigError("source names must be unique")
        if self.budget < 8:
            raise ConfigError("token budget is unusably small")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


def _resolve(base_dir: str, path: Optional[str]) -> Optional[str]:
    if path is None:
        return None
    return path if os.path.isabs(path) else os.path.join(base_dir, path)


def _load_raw_config(path: str) -> dict:
    try:
        if path.endswith(".toml"):
            try:
                import tomllib  # py311+
            except ModuleNotFoundError:
                import tomli as tomllib
            with open(path, "rb") as fh:
                return tomllib.load(fh)
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except (json.JSONDecodeError, ValueError) as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc


_TOP_KEYS = {
    "seed",
    "budget",
    "workers",
    "recipe",
    "loss",
    "caption_filter",
    "cleanse",
    "regions",
    "tokenizer",
    "output",
    "sources",
    "scorer_cmd",
}


def load_config(path: str, overrides: Optional[dict] = None) -> PipelineConfig:
    """Load a TOML/JSON pipeline config; flag overrides win over the file."""
    raw = _load_raw_config(path)
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    overrides = overrides or {}
    base_dir = os.path.dirname(os.path.abspath(path))

    recipe_raw = overrides.get("recipe", raw.get("recipe", "CLDR"))
    recipe = (
        RecipeConfig.from_flags(recipe_raw)
        if isinstance(recipe_raw, str)
        else RecipeConfig(**recipe_raw)
    )

    loss_raw = dict(raw.get("loss", {}))
    if "mask_prob" in overrides:
        loss_raw["mask_prob"] = overrides["mask_prob"]
    try:
        loss = LossConfig(**loss_raw)
        caption_filter = CaptionFilterConfig(**raw.get("caption_filter", {}))
        cleanse_raw = dict(raw.get("cleanse", {}))
        global_repeat, per_source_repeat = _split_repeat(cleanse_raw.pop("repeat_factor", 1), raw)
        global_freq = cleanse_raw.pop("label_min_freq", {})
        if not isinstance(global_freq, dict) or not set(global_freq) <= set(KINDS):
            raise ConfigError("cleanse.label_min_freq must map label kinds to thresholds")
        cleanse = CleanseConfig(
            label_min_freq={k: int(v) for k, v in global_freq.items()},
            repeat_factor=global_repeat,
            **cleanse_raw,
        )
        region_config = RegionConfig(**raw.get("regions", {}))
        tokenizer = TokenizerSpec(**raw.get("tokenizer", {}))
    except TypeError as exc:
        raise ConfigError(f"bad config section: {exc}") from exc

    sources = []
    for i, entry in enumerate(raw.get("sources", [])):
        entry = dict(entry)
        name = entry.pop("name", None)
        if not name:
            raise ConfigError(f"sources[{i}] missing a name")
        freq = entry.pop("label_min_freq", None)
        spec = SourceSpec(
            name=name,
            annotations=_resolve(base_dir, entry.pop("annotations", None)),
            labels=_resolve(base_dir, entry.pop("labels", None)),
            renames=_resolve(base_dir, entry.pop("renames", None)),
            candidates=_resolve(base_dir, entry.pop("candidates", None)),
            scores=_resolve(base_dir, entry.pop("scores", None)),
            repeat_factor=int(
                entry.pop("repeat_factor", per_source_repeat.get(name, global_repeat))
            ),
            label_min_freq=(
                {k: int(v) for k, v in freq.items()} if freq else dict(cleanse.label_min_freq)
            ),
        )
        if entry:
            raise ConfigError(f"sources[{i}] has unknown keys: {sorted(entry)}")
        if spec.annotations is None or spec.labels is None:
            raise ConfigError(f"source {name!r} needs annotations and labels paths")
        sources.append(spec)

    output = raw.get("output", {})
    out_dir = overrides.get("output_dir", output.get("dir"))
    if not out_dir:
        raise ConfigError("output.dir is required")

    config = PipelineConfig(
        sources=sources,
        output_dir=_resolve(base_dir, out_dir),
        seed=int(overrides.get("seed", raw.get("seed", 0))),
        recipe=recipe,
        loss=loss,
        caption_filter=caption_filter,
        cleanse=cleanse,
        regions=region_config,
        tokenizer=tokenizer,
        budget=int(overrides.get("budget", raw.get("budget", MAX_TOKENS))),
        workers=int(overrides.get("workers", raw.get("workers", 1))),
        scorer_cmd=overrides.get("scorer_cmd", raw.get("scorer_cmd")),
    )
    _check_paths(config)
    return config


def _split_repeat(raw_repeat, raw_config) -> Tuple[int, Dict[str, int]]:
    if isinstance(raw_repeat, int):
        return raw_repeat, {}
    if isinstance(raw_repeat, dict):
        names = {entry.get("name") for entry in raw_config.get("sources", [])}
        unknown = set(raw_repeat) - names
        if unknown:
            raise ConfigError(f"repeat_factor names unknown sources: {sorted(unknown)}")
        return 1, {k: int(v) for k, v in raw_repeat.items()}
    raise ConfigError("cleanse.repeat_factor must be an int or a source->count map")


def _check_paths(config: PipelineConfig) -> None:
    for source in config.sources:
        for path in (source.annotations, source.labels, source.renames, source.candidates, source.scores):
            if path is not None and not os.path.exists(path):
                raise ConfigError(f"source {source.name!r}: missing input file {path}")


@dataclass
class SourceBuild:
    spec: SourceSpec
    images: List[AnnotatedImage]
    labels: LabelTable
    regions: Dict[str, list]
    drops: List[Drop]
    issues: List[RecordIssue]


@dataclass
class BuildResult:
    samples: List[TokenizedSample]
    discards: List[Discard]
    sources: Dict[str, SourceBuild]
    stats: StatsReport
    issues: List[RecordIssue]
    vocab: Dict[str, int]


def _score_candidates(source: SourceSpec, records, scorer_cmd: Optional[str]) -> List[CaptionCandidate]:
    """Attach similarity scores to raw candidate records."""
    if source.scores:
        static = StaticScoreFile(source.scores)
        return [
            CaptionCandidate(r["image_id"], r["text"], static.lookup(r["image_id"], r["round"], r["text"]), r["round"])
            for r in records
        ]
    if not scorer_cmd:
        raise ConfigError(
            f"source {source.name!r} has caption candidates but no score file and no "
            f"scorer command (set {SCORER_CMD_ENV} or scores=...)"
        )
    requests = {}
    for r in records:
        rid = f"{r['image_id']}\x1f{r['round']}\x1f{text_hash(r['text'])[:16]}"
        requests.setdefault(rid, ScoreRequest(rid, r["image_id"], r["text"]))
    ordered = [requests[k] for k in sorted(requests)]
    scores = BridgeClient(scorer_cmd).fetch(ordered)
    return [
        CaptionCandidate(
            r["image_id"],
            r["text"],
            scores[f"{r['image_id']}\x1f{r['round']}\x1f{text_hash(r['text'])[:16]}"],
            r["round"],
        )
        for r in records
    ]


def _fill_captions(
    images: List[AnnotatedImage],
    source: SourceSpec,
    filter_config: CaptionFilterConfig,
    scorer_cmd: Optional[str],
) -> None:
    """Synthesize captions for images lacking one (provided captions win)."""
    if not source.candidates:
        return
    records = read_candidate_file(source.candidates)
    candidates = _score_candidates(source, records, scorer_cmd)
    grouped = group_rounds(candidates)
    for image in images:
        if image.caption is not None or image.id not in grouped:
            continue
        best = select_caption(grouped[image.id], filter_config)
        image.caption = normalize_text(best.text) or None


def _prepare_source(source: SourceSpec, config: PipelineConfig) -> SourceBuild:
    images, labels, issues = parse_corpus(source.annotations, source.labels, source.renames)
    _fill_captions(images, source, config.caption_filter, _scorer_cmd(config))

    freqs = compute_frequencies(images)
    pruned = prune_labels(images, labels, freqs, source.label_min_freq)

    kept: List[AnnotatedImage] = []
    drops: List[Drop] = []
    for image in pruned.images:
        result = filter_and_resize(image, config.cleanse)
        if isinstance(result, Drop):
            drops.append(result)
        else:
            kept.append(result)

    region_map = {image.id: build_regions(image, pruned.labels, config.regions) for image in kept}
    return SourceBuild(
        spec=source,
        images=kept,
        labels=pruned.labels,
        regions=region_map,
        drops=drops,
        issues=issues,
    )


def _scorer_cmd(config: PipelineConfig) -> Optional[str]:
    return config.scorer_cmd or os.environ.get(SCORER_CMD_ENV)


def _vocabulary_prepass(builds: Dict[str, SourceBuild], config: PipelineConfig) -> MockTextTokenizer:
    """Grow the text vocabulary over every renderable document, then freeze.

    The with-descriptions render covers the without-descriptions one, and
    both template orders share the same token pieces, so one render per
    image suffices.
    """
    text_tok = MockTextTokenizer(config.tokenizer)
    variant = Variant(IMAGE_FIRST, config.recipe.descriptions)
    for source in config.sources:
        build = builds[source.name]
        for image in build.images:
            doc = render_document(
                image, build.regions[image.id], build.labels, config.recipe, variant
            )
            text_tok.feed(doc.to_text())
    text_tok.frozen = True
    return text_tok


_WORKER_STATE: dict = {}


def _init_worker(state: dict) -> None:
    _WORKER_STATE.update(state)


def _run_unit(unit: Tuple[str, str]) -> list:
    source_name, image_id = unit
    state = _WORKER_STATE
    build_data = state["sources"][source_name]
    image = build_data["images"][image_id]
    toks = Tokenizers(
        spec=state["spec"],
        text=MockTextTokenizer(state["spec"], vocab=state["vocab"], frozen=True),
        visual=MockVisualTokenizer(state["spec"]),
    )
    results = repetition_pass(
        image,
        build_data["regions"][image_id],
        build_data["labels"],
        state["recipe"],
        toks,
        state["loss"],
        seed=state["seed"],
        repeat_factor=build_data["repeat"],
        budget=state["budget"],
    )
    for result in results:
        if isinstance(result, TokenizedSample):
            result.provenance["source"] = source_name
    return results


def build_corpus(config: PipelineConfig) -> BuildResult:
    builds = {source.name: _prepare_source(source, config) for source in config.sources}
    text_tok = _vocabulary_prepass(builds, config)

    state = {
        "spec": config.tokenizer,
        "vocab": text_tok.vocab,
        "recipe": config.recipe,
        "loss": config.loss,
        "seed": config.seed,
        "budget": config.budget,
        "sources": {
            name: {
                "images": {img.id: img for img in build.images},
                "regions": build.regions,
                "labels": build.labels,
                "repeat": build.spec.repeat_factor,
            }
            for name, build in builds.items()
        },
    }
    units = [
        (source.name, image.id)
        for source in config.sources
        for image in sorted(builds[source.name].images, key=lambda im: im.id)
    ]

    if config.workers == 1 or len(units) <= 1:
        _init_worker(state)
        per_unit = [_run_unit(unit) for unit in units]
        _WORKER_STATE.clear()
    else:
        with multiprocessing.Pool(
            processes=config.workers, initializer=_init_worker, initargs=(state,)
        ) as pool:
            per_unit = pool.map(_run_unit, units, chunksize=1)

    samples: List[TokenizedSample] = []
    discards: List[Discard] = []
    for unit, results in zip(units, per_unit):
        for result in results:
            if isinstance(result, TokenizedSample):
                samples.append(result)
            else:
                discards.append(result)

    corpus = {
        name: CorpusSlice(images=build.images, regions=build.regions, labels=build.labels)
        for name, build in builds.items()
    }
    stats = compute_stats(corpus, samples)
    issues = [issue for build in builds.values() for issue in build.issues]
    return BuildResult(
        samples=samples,
        discards=discards,
        sources=builds,
        stats=stats,
        issues=issues,
        vocab=text_tok.vocab,
    )


def _atomic(path: str, write_fn) -> None:
    tmp = f"{path}.tmp"
    write_fn(tmp)
    os.replace(tmp, path)


def write_build_outputs(result: BuildResult, config: PipelineConfig) -> Dict[str, str]:
    """Write all build artifacts atomically; returns {artifact: path}."""
    out = config.output_dir
    os.makedirs(out, exist_ok=True)
    paths = {
        "samples_jsonl": os.path.join(out, "samples.jsonl"),
        "samples_bin": os.path.join(out, "samples.bin"),
        "drops": os.path.join(out, "drops.jsonl"),
        "errors": os.path.join(out, "errors.jsonl"),
        "regions": os.path.join(out, "regions.jsonl"),
        "vocab": os.path.join(out, "vocab.json"),
        "stats": os.path.join(out, "stats.json"),
    }
    _atomic(paths["samples_jsonl"], lambda p: write_samples_jsonl(p, result.samples))
    _atomic(paths["samples_bin"], lambda p: write_samples_binary(p, result.samples))

    drops = [d for build in result.sources.values() for d in build.drops]
    _atomic(paths["drops"], lambda p: write_drop_report(p, drops))

    def _write_errors(p):
        with open(p, "w", encoding="utf-8") as fh:
            for issue in result.issues:
                fh.write(json.dumps(issue.to_json(), ensure_ascii=False) + "\n")

    _atomic(paths["errors"], _write_errors)

    def _write_regions(p):
        entries = [
            (image.id, region)
            for name in sorted(result.sources)
            for image in result.sources[name].images
            for region in result.sources[name].regions[image.id]
        ]
        write_region_manifest(p, entries)

    _atomic(paths["regions"], _write_regions)

    def _write_vocab(p):
        with open(p, "w", encoding="utf-8") as fh:
            json.dump(result.vocab, fh, ensure_ascii=False)

    _atomic(paths["vocab"], _write_vocab)
    _atomic(paths["stats"], lambda p: write_stats_json(p, result.stats))

    if not result.samples:
        sys.stderr.write("multigrain: warning: build emitted zero samples\n")
    return paths
