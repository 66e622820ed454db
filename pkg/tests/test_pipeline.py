"""End-to-end builds: determinism, worker equivalence, and the CLI surface."""

import json
import os

import pytest

from conftest import make_pipeline_fixture, write_corpus, write_jsonl
from multigrain.cli import main
from multigrain.errors import ConfigError
from multigrain.pipeline import build_corpus, load_config
from multigrain.sequence import read_samples_binary


def _read_all(out_dir):
    contents = {}
    for name in sorted(os.listdir(out_dir)):
        contents[name] = (out_dir / name).read_bytes()
    return contents


class TestBuild:
    def test_outputs_written(self, tmp_path, capsys):
        config_path, out_dir, _ = make_pipeline_fixture(tmp_path, n_images=8)
        assert main(["build", "--config", str(config_path)]) == 0
        for artifact in (
            "samples.jsonl",
            "samples.bin",
            "drops.jsonl",
            "errors.jsonl",
            "regions.jsonl",
            "vocab.json",
            "stats.json",
        ):
            assert (out_dir / artifact).exists(), artifact
        samples = [
            json.loads(line)
            for line in (out_dir / "samples.jsonl").read_text().splitlines()
        ]
        assert samples
        binary = read_samples_binary(out_dir / "samples.bin")
        assert len(binary) == len(samples)
        stats = json.loads((out_dir / "stats.json").read_text())
        assert stats["total"]["samples"] == len(samples)
        assert set(stats["sources"]) == {"alpha", "beta"}

    def test_two_runs_bit_identical(self, tmp_path):
        config_path, out_dir, _ = make_pipeline_fixture(tmp_path, n_images=10)
        assert main(["build", "--config", str(config_path)]) == 0
        first = _read_all(out_dir)
        assert main(["build", "--config", str(config_path)]) == 0
        second = _read_all(out_dir)
        assert first == second

    def test_worker_counts_bit_identical(self, tmp_path):
        config_path, out_dir, _ = make_pipeline_fixture(tmp_path, n_images=10)
        assert main(["build", "--config", str(config_path), "--workers", "1"]) == 0
        serial = _read_all(out_dir)
        assert main(["build", "--config", str(config_path), "--workers", "8"]) == 0
        parallel = _read_all(out_dir)
        assert serial == parallel

    def test_recipe_c_has_fewer_textual_tokens(self, tmp_path):
        config_path, _, _ = make_pipeline_fixture(tmp_path, n_images=8)
        full = build_corpus(load_config(str(config_path)))
        caption_only = build_corpus(load_config(str(config_path), {"recipe": "C"}))
        assert (
            caption_only.stats.total.textual_tokens < full.stats.total.textual_tokens
        )

    def test_tiny_budget_discards_everything_with_warning(self, tmp_path, capsys):
        config_path, out_dir, _ = make_pipeline_fixture(tmp_path, n_images=6, budget=64)
        code = main(["build", "--config", str(config_path)])
        captured = capsys.readouterr()
        assert code == 0
        assert "zero samples" in captured.err
        assert (out_dir / "samples.jsonl").read_text() == ""
        result = build_corpus(load_config(str(config_path)))
        assert result.samples == []
        assert result.discards

    def test_repeat_factor_multiplies_units(self, tmp_path):
        config_path, _, _ = make_pipeline_fixture(tmp_path, n_images=8, repeat_b=3)
        result = build_corpus(load_config(str(config_path)))
        beta_images = len(result.sources["beta"].images)
        beta_outcomes = [
            s for s in result.samples if s.provenance["source"] == "beta"
        ] + [d for d in result.discards if d.image_id.startswith("beta")]
        assert len(beta_outcomes) == beta_images * 3

    def test_every_input_accounted_for(self, tmp_path):
        config_path, _, _ = make_pipeline_fixture(tmp_path, n_images=10)
        config = load_config(str(config_path))
        result = build_corpus(config)
        for name, build in result.sources.items():
            kept = {im.id for im in build.images}
            dropped = {d.image_id for d in build.drops}
            assert not kept & dropped
            emitted = {
                s.provenance["image_id"]
                for s in result.samples
                if s.provenance["source"] == name
            }
            discarded = {d.image_id for d in result.discards if d.image_id in kept}
            assert emitted | discarded == kept or emitted | discarded <= kept
            # each kept image yields exactly repeat_factor outcomes
            repeat = build.spec.repeat_factor
            outcome_count = sum(
                1 for s in result.samples if s.provenance["source"] == name
            ) + sum(1 for d in result.discards if d.image_id in kept)
            assert outcome_count == len(kept) * repeat

    def test_sample_budget_and_framing_invariants(self, tmp_path):
        config_path, _, _ = make_pipeline_fixture(tmp_path, n_images=10, budget=1024)
        config = load_config(str(config_path))
        result = build_corpus(config)
        assert result.samples
        spec = config.tokenizer
        for sample in result.samples:
            assert len(sample.ids) <= 1024
            assert sample.ids[0] == spec.bos_id and sample.ids[-1] == spec.eos_id
            assert len(sample.weights) == len(sample.ids)
            depth = 0
            for token in sample.ids:
                if token == spec.img_open_id:
                    depth += 1
                elif token == spec.img_close_id:
                    depth -= 1
                assert depth in (0, 1)
            assert depth == 0


class TestConfig:
    def test_missing_input_path_is_config_error(self, tmp_path):
        config_path, _, paths = make_pipeline_fixture(tmp_path, n_images=4)
        raw = json.loads(config_path.read_text())
        raw["sources"][0]["annotations"] = str(tmp_path / "nope.json")
        config_path.write_text(json.dumps(raw))
        with pytest.raises(ConfigError):
            load_config(str(config_path))
        assert main(["build", "--config", str(config_path)]) == 2

    def test_unknown_top_level_key_rejected(self, tmp_path):
        config_path, _, _ = make_pipeline_fixture(tmp_path, n_images=4)
        raw = json.loads(config_path.read_text())
        raw["surprise"] = 1
        config_path.write_text(json.dumps(raw))
        assert main(["build", "--config", str(config_path)]) == 2

    def test_unknown_source_in_repeat_map_rejected(self, tmp_path):
        config_path, _, _ = make_pipeline_fixture(tmp_path, n_images=4)
        raw = json.loads(config_path.read_text())
        raw["cleanse"] = {"repeat_factor": {"gamma": 3}}
        config_path.write_text(json.dumps(raw))
        with pytest.raises(ConfigError, match="gamma"):
            load_config(str(config_path))

    def test_flag_overrides_win(self, tmp_path):
        config_path, _, _ = make_pipeline_fixture(tmp_path, n_images=4)
        config = load_config(str(config_path), {"seed": 99, "budget": 512, "recipe": "CL"})
        assert config.seed == 99
        assert config.budget == 512
        assert config.recipe.to_flags() == "CL"

    def test_toml_config_supported(self, tmp_path):
        config_path, _, _ = make_pipeline_fixture(tmp_path, n_images=4, with_candidates=False)
        raw = json.loads(config_path.read_text())
        toml_path = tmp_path / "pipeline.toml"
        lines = [
            f"seed = {raw['seed']}",
            f"budget = {raw['budget']}",
            f"recipe = \"{raw['recipe']}\"",
            "[output]",
            f"dir = \"{raw['output']['dir']}\"",
        ]
        for source in raw["sources"]:
            lines.append("[[sources]]")
            for key, value in source.items():
                if isinstance(value, dict):
                    continue
                if isinstance(value, int):
                    lines.append(f"{key} = {value}")
                else:
                    lines.append(f'{key} = "{value}"')
        toml_path.write_text("\n".join(lines), encoding="utf-8")
        config = load_config(str(toml_path))
        assert config.seed == raw["seed"]
        assert [s.name for s in config.sources] == ["alpha", "beta"]

    def test_seed_changes_output(self, tmp_path):
        config_path, _, _ = make_pipeline_fixture(tmp_path, n_images=8)
        a = build_corpus(load_config(str(config_path), {"seed": 1}))
        b = build_corpus(load_config(str(config_path), {"seed": 2}))
        ids_a = [s.ids for s in a.samples]
        ids_b = [s.ids for s in b.samples]
        assert ids_a != ids_b


class TestOtherCommands:
    def test_validate_clean_corpus(self, tmp_path, capsys):
        config_path, out_dir, _ = make_pipeline_fixture(tmp_path, n_images=4)
        assert main(["validate", "--config", str(config_path)]) == 0
        assert (out_dir / "errors.jsonl").read_text() == ""

    def test_validate_reports_issues(self, tmp_path):
        config_path, out_dir, _ = make_pipeline_fixture(tmp_path, n_images=4, with_candidates=False)
        raw = json.loads(config_path.read_text())
        ann_path = raw["sources"][0]["annotations"]
        annotations = json.loads(open(ann_path).read())
        annotations["objects"][0]["bbox"] = [0, 0, 0, 5]
        open(ann_path, "w").write(json.dumps(annotations))
        assert main(["validate", "--config", str(config_path)]) == 1
        report = [json.loads(l) for l in (out_dir / "errors.jsonl").read_text().splitlines()]
        assert any(r["message"] == "illegal coordinates" for r in report)
        # reference closure: annotations on the bad object are reported too
        for record in report:
            assert record["source"] == "alpha"

    def test_stats_command(self, tmp_path):
        config_path, out_dir, _ = make_pipeline_fixture(tmp_path, n_images=6)
        assert main(["stats", "--config", str(config_path)]) == 0
        stats = json.loads((out_dir / "stats.json").read_text())
        assert stats["total"]["images"] > 0
        for kind in ("object", "attribute", "relationship"):
            assert (out_dir / f"histogram_{kind}.csv").exists()

    def test_overlap_command(self, tmp_path, capsys):
        train = tmp_path / "train.jsonl"
        eval_path = tmp_path / "eval.jsonl"
        write_jsonl(train, [{"caption_id": "t", "concepts": ["a", "b", "c"]}])
        write_jsonl(eval_path, [{"caption_id": "e", "concepts": ["b", "c", "d"]}])
        out = tmp_path / "overlap.json"
        assert main(["overlap", "--train", str(train), "--eval", str(eval_path), "--out", str(out)]) == 0
        report = json.loads(out.read_text())
        assert report["covered"] == 2 and report["total"] == 3

    def test_overlap_empty_eval_exits_one(self, tmp_path):
        train = tmp_path / "train.jsonl"
        eval_path = tmp_path / "eval.jsonl"
        write_jsonl(train, [{"caption_id": "t", "concepts": ["a"]}])
        write_jsonl(eval_path, [])
        assert main(["overlap", "--train", str(train), "--eval", str(eval_path)]) == 1

    def test_sft_command(self, tmp_path):
        config_path, out_dir, _ = make_pipeline_fixture(tmp_path, n_images=4)
        instructions = tmp_path / "instructions.jsonl"
        write_jsonl(
            instructions,
            [
                {"task": "image_caption", "image": "x", "response": "a caption"},
                {"task": "text2image", "caption": "a scene", "output_image": "gen"},
                {"task": "text_only", "rounds": [{"question": "hi", "response": "hello"}]},
            ],
        )
        assert main(["sft", "--config", str(config_path), "--instructions", str(instructions)]) == 0
        lines = (out_dir / "sft_samples.jsonl").read_text().splitlines()
        assert len(lines) == 3
        for line in lines:
            record = json.loads(line)
            assert record["weights"] is not None
            assert len(record["weights"]) == len(record["ids"])

    def test_sft_playback_uses_corpus(self, tmp_path):
        config_path, out_dir, _ = make_pipeline_fixture(tmp_path, n_images=4)
        result = build_corpus(load_config(str(config_path)))
        image_id = result.sources["alpha"].images[0].id
        instructions = tmp_path / "instructions.jsonl"
        write_jsonl(instructions, [{"task": "playback_image_first", "image": image_id}])
        assert main(["sft", "--config", str(config_path), "--instructions", str(instructions)]) == 0
        record = json.loads((out_dir / "sft_samples.jsonl").read_text().splitlines()[0])
        assert record["provenance"]["task"] == "playback_image_first"

    def test_downsample_command(self, tmp_path):
        concepts = tmp_path / "concepts.jsonl"
        records = [
            {"caption_id": f"cap{i}", "concepts": ["common"]} for i in range(30)
        ] + [{"caption_id": "rare_cap", "concepts": ["rare"]}]
        write_jsonl(concepts, records)
        out = tmp_path / "selected.jsonl"
        assert main([
            "downsample", "--concepts", str(concepts), "--min-freq", "20",
            "--cap", "25", "--seed", "3", "--out", str(out),
        ]) == 0
        selected = [json.loads(l)["caption_id"] for l in out.read_text().splitlines()]
        assert len(selected) == 25
        assert "rare_cap" not in selected


class TestScorerIntegration:
    BRIDGE = os.path.join(
        os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "bridge", "scorer.py"
    )

    def _strip_scores(self, config_path):
        raw = json.loads(config_path.read_text())
        raw["sources"][0].pop("scores")
        config_path.write_text(json.dumps(raw))

    def test_bridge_build_matches_static_score_build(self, tmp_path, monkeypatch):
        import sys as _sys

        config_path, out_dir, paths = make_pipeline_fixture(tmp_path, n_images=8)
        monkeypatch.delenv("MGIC_SCORER_CMD", raising=False)
        assert main(["build", "--config", str(config_path)]) == 0
        via_static = (out_dir / "samples.jsonl").read_bytes()

        self._strip_scores(config_path)
        monkeypatch.setenv(
            "MGIC_SCORER_CMD", f"{_sys.executable} {self.BRIDGE} --refs {paths['refs']}"
        )
        assert main(["build", "--config", str(config_path)]) == 0
        via_bridge = (out_dir / "samples.jsonl").read_bytes()
        assert via_static == via_bridge

    def test_missing_scorer_is_config_error(self, tmp_path, monkeypatch):
        config_path, _, _ = make_pipeline_fixture(tmp_path, n_images=4)
        self._strip_scores(config_path)
        monkeypatch.delenv("MGIC_SCORER_CMD", raising=False)
        assert main(["build", "--config", str(config_path)]) == 2

    def test_broken_scorer_exits_three(self, tmp_path, monkeypatch):
        config_path, _, _ = make_pipeline_fixture(tmp_path, n_images=4)
        self._strip_scores(config_path)
        monkeypatch.setenv("MGIC_SCORER_CMD", "false")  # exits nonzero immediately
        assert main(["build", "--config", str(config_path)]) == 3


class TestProvidedCaptionWins:
    def test_candidates_never_override_a_provided_caption(self, tmp_path):
        from conftest import synth_corpus
        from multigrain.scoring import text_hash as _th

        annotations, labels = synth_corpus(3, seed=4, id_prefix="cap")
        for record in annotations["images"]:
            record.pop("caption", None)
        annotations["images"][0]["caption"] = "the original provided caption"
        provided_id = annotations["images"][0]["id"]
        candidates = [
            {"image_id": record["id"], "round": 1, "text": "a synthetic candidate caption here"}
            for record in annotations["images"]
        ]
        scores = [
            {"image_id": c["image_id"], "round": 1,
             "text_hash": _th(c["text"]), "score": 0.9}
            for c in candidates
        ]
        ann, label_path, _ = write_corpus(tmp_path, annotations, labels, prefix="cap")
        cand_path = tmp_path / "cands.jsonl"
        write_jsonl(cand_path, candidates)
        score_path = tmp_path / "scores.jsonl"
        write_jsonl(score_path, scores)
        out_dir = tmp_path / "out"
        config = {
            "seed": 1,
            "output": {"dir": str(out_dir)},
            "sources": [{
                "name": "cap", "annotations": str(ann), "labels": str(label_path),
                "candidates": str(cand_path), "scores": str(score_path),
            }],
        }
        config_path = tmp_path / "c.json"
        config_path.write_text(json.dumps(config))
        result = build_corpus(load_config(str(config_path)))
        by_id = {im.id: im for im in result.sources["cap"].images}
        assert by_id[provided_id].caption == "the original provided caption"
        for image_id, image in by_id.items():
            if image_id != provided_id:
                assert image.caption == "a synthetic candidate caption here"
