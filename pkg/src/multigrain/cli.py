"""Command-line entry point.

Exit codes: 0 ok, 1 fatal input error, 2 config error, 3 scorer-bridge
failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .cleanse import compute_frequencies, coverage_downsample, read_concept_lists
from .errors import ConfigError, MultigrainError, ParseError, ScorerError
from .pipeline import PipelineConfig, build_corpus, load_config, write_build_outputs
from .reporting import concept_overlap, frequency_histogram, write_histogram_csv
from .schema import KINDS, parse_corpus
from .sequence import Tokenizers, assemble_sft, emit_sft_mask, write_samples_jsonl
from .sft import TASK_PLAYBACK_IMAGE_FIRST, TASK_PLAYBACK_TEXT_FIRST, render_sft


def _add_config_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="pipeline config (TOML or JSON)")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--recipe", default=None, help='content flags, e.g. "CLDR" or "CL"')
    parser.add_argument("--mask-prob", type=float, default=None)
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--budget", type=int, default=None)
    parser.add_argument("--output-dir", default=None)
    parser.add_argument("--scorer-cmd", default=None)


def _config_from_args(args) -> PipelineConfig:
    overrides = {}
    for key in ("seed", "recipe", "mask_prob", "workers", "budget", "output_dir", "scorer_cmd"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    return load_config(args.config, overrides)


def _cmd_build(args) -> int:
    config = _config_from_args(args)
    result = build_corpus(config)
    paths = write_build_outputs(result, config)
    print(
        f"build: {len(result.samples)} samples, {len(result.discards)} discarded, "
        f"{sum(len(b.drops) for b in result.sources.values())} images dropped, "
        f"{len(result.issues)} record issues -> {config.output_dir}"
    )
    for name in sorted(paths):
        print(f"  {name}: {paths[name]}")
    return 0


def _cmd_stats(args) -> int:
    config = _config_from_args(args)
    result = build_corpus(config)
    os.makedirs(config.output_dir, exist_ok=True)
    stats_path = os.path.join(config.output_dir, "stats.json")
    with open(stats_path, "w", encoding="utf-8") as fh:
        json.dump(result.stats.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    kept = [image for build in result.sources.values() for image in build.images]
    freqs = compute_frequencies(kept)
    for kind in KINDS:
        series, low_share = frequency_histogram(freqs, kind)
        csv_path = os.path.join(config.output_dir, f"histogram_{kind}.csv")
        write_histogram_csv(csv_path, series, kind)
        print(f"{kind}: {len(series)} labels, low-frequency share {low_share:.4f} -> {csv_path}")
    print(f"stats -> {stats_path}")
    return 0


def _read_concepts(path) -> list:
    concepts = []
    for _, concept_list in read_concept_lists(path):
        concepts.extend(concept_list)
    return concepts


def _cmd_overlap(args) -> int:
    report = concept_overlap(_read_concepts(args.train), _read_concepts(args.eval))
    payload = json.dumps(report.to_json(), indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(payload + "\n")
    print(payload)
    return 0


def _cmd_sft(args) -> int:
    config = _config_from_args(args)
    records = []
    with open(args.instructions, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))

    corpus = None
    if any(r.get("task") in (TASK_PLAYBACK_TEXT_FIRST, TASK_PLAYBACK_IMAGE_FIRST) for r in records):
        build = build_corpus(config)
        corpus = {}
        for name, source_build in build.sources.items():
            for image in source_build.images:
                corpus[image.id] = (
                    image,
                    source_build.regions[image.id],
                    source_build.labels,
                    config.recipe,
                )

    toks = Tokenizers.fresh(config.tokenizer)
    samples = []
    for record in records:
        sample = render_sft(record, corpus)
        tokenized = assemble_sft(sample, toks)
        tokenized.weights = emit_sft_mask(tokenized, config.loss, config.tokenizer)
        samples.append(tokenized)

    out_path = args.out or os.path.join(config.output_dir, "sft_samples.jsonl")
    os.makedirs(os.path.dirname(os.path.abspath(out_path)), exist_ok=True)
    write_samples_jsonl(out_path, samples)
    print(f"sft: {len(samples)} samples -> {out_path}")
    return 0


def _cmd_validate(args) -> int:
    config = _config_from_args(args)
    issues = []
    for source in config.sources:
        _, _, source_issues = parse_corpus(source.annotations, source.labels, source.renames)
        issues.extend((source.name, issue) for issue in source_issues)
    os.makedirs(config.output_dir, exist_ok=True)
    report_path = os.path.join(config.output_dir, "errors.jsonl")
    with open(report_path, "w", encoding="utf-8") as fh:
        for source_name, issue in issues:
            record = {"source": source_name, **issue.to_json()}
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    print(f"validate: {len(issues)} issues -> {report_path}")
    return 0 if not issues else 1


def _cmd_downsample(args) -> int:
    selected = coverage_downsample(
        read_concept_lists(args.concepts),
        min_freq=args.min_freq,
        cap=args.cap,
        seed=args.seed,
    )
    with open(args.out, "w", encoding="utf-8") as fh:
        for caption_id in sorted(selected):
            fh.write(json.dumps({"caption_id": caption_id}) + "\n")
    print(f"downsample: {len(selected)} captions -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="multigrain",
        description="Compile object-detection annotations into interleaved multimodal training samples.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_build = sub.add_parser("build", help="run the full pipeline and write sample files")
    _add_config_arguments(p_build)
    p_build.set_defaults(func=_cmd_build)

    p_stats = sub.add_parser("stats", help="compute corpus statistics and histograms")
    _add_config_arguments(p_stats)
    p_stats.set_defaults(func=_cmd_stats)

    p_overlap = sub.add_parser("overlap", help="concept overlap between two concept files")
    p_overlap.add_argument("--train", required=True)
    p_overlap.add_argument("--eval", required=True)
    p_overlap.add_argument("--out", default=None)
    p_overlap.set_defaults(func=_cmd_overlap)

    p_sft = sub.add_parser("sft", help="render instruction-tuning samples with loss masks")
    _add_config_arguments(p_sft)
    p_sft.add_argument("--instructions", required=True, help="JSONL instruction records")
    p_sft.add_argument("--out", default=None)
    p_sft.set_defaults(func=_cmd_sft)

    p_validate = sub.add_parser("validate", help="schema-check the input files only")
    _add_config_arguments(p_validate)
    p_validate.set_defaults(func=_cmd_validate)

    p_down = sub.add_parser("downsample", help="coverage-preserving caption downsampling")
    p_down.add_argument("--concepts", required=True, help="JSONL {caption_id, concepts:[...]}")
    p_down.add_argument("--min-freq", type=int, default=20)
    p_down.add_argument("--cap", type=int, default=50)
    p_down.add_argument("--seed", type=int, default=0)
    p_down.add_argument("--out", required=True)
    p_down.set_defaults(func=_cmd_downsample)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ScorerError as exc:
        print(f"scorer error: {exc}", file=sys.stderr)
        return 3
    except (ParseError, MultigrainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
