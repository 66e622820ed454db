"""Shared fixtures: the hand-checked golden image and corpus file builders."""

import hashlib
import json
import random

import pytest

from multigrain.schema import parse_corpus

GOLDEN_LABELS = [
    {"name": "batter", "kind": "object", "description": "a baseball player who is batting"},
    {"name": "bat", "kind": "object", "description": "a smooth wooden or metal club used to hit the ball"},
    {"name": "glove", "kind": "object", "description": "a padded leather covering for the hand used in baseball"},
    {"name": "ball", "kind": "object", "description": "a round object that is hit, thrown, or kicked in games"},
    {"name": "wooden", "kind": "attribute", "description": "made of or consisting of wood"},
    {"name": "holding", "kind": "relationship", "description": "having or keeping in the hand"},
]

GOLDEN_RENAMES = [{"name": "batter", "kind": "object", "rename": "batter (ballplayer)"}]

# 224x224 source so boxes land on the canvas unchanged; o4 is small enough
# to be size-gated out of the region list while still merging into o1's crop.
GOLDEN_ANNOTATIONS = {
    "images": [
        {
            "id": "img_ball",
            "width": 224,
            "height": 224,
            "caption": "A baseball player swinging a bat at a ball.",
            "localized_narrative": "In this image we can see a player holding a bat in his hands.",
        }
    ],
    "objects": [
        {"id": "o1", "image_id": "img_ball", "bbox": [60, 80, 60, 100], "label": "batter"},
        {"id": "o2", "image_id": "img_ball", "bbox": [100, 60, 40, 90], "label": "bat"},
        {"id": "o3", "image_id": "img_ball", "bbox": [10, 150, 30, 30], "label": "glove"},
        {"id": "o4", "image_id": "img_ball", "bbox": [45, 90, 20, 20], "label": "ball"},
    ],
    "attributes": [{"label": "wooden", "object_ids": ["o2"]}],
    "relationships": [{"label": "holding", "subject_id": "o1", "object_id": "o2"}],
}


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def write_corpus(tmp_path, annotations, labels, renames=None, prefix="corpus"):
    ann_path = tmp_path / f"{prefix}_annotations.json"
    ann_path.write_text(json.dumps(annotations), encoding="utf-8")
    label_path = tmp_path / f"{prefix}_labels.jsonl"
    write_jsonl(label_path, labels)
    rename_path = None
    if renames is not None:
        rename_path = tmp_path / f"{prefix}_renames.jsonl"
        write_jsonl(rename_path, renames)
    return ann_path, label_path, rename_path


@pytest.fixture
def golden_corpus(tmp_path):
    """(images, label_table, issues) for the hand-checked fixture image."""
    ann, labels, renames = write_corpus(tmp_path, GOLDEN_ANNOTATIONS, GOLDEN_LABELS, GOLDEN_RENAMES)
    return parse_corpus(ann, labels, renames)


@pytest.fixture
def golden_image(golden_corpus):
    images, _, issues = golden_corpus
    assert not issues
    return images[0]


@pytest.fixture
def golden_labels(golden_corpus):
    return golden_corpus[1]


def synth_corpus(n_images, seed=0, id_prefix="img", min_dim=224, max_dim=900):
    """Randomized well-formed corpus for property and determinism tests."""
    rng = random.Random(seed)
    object_labels = [f"thing_{i}" for i in range(12)]
    attribute_labels = [f"attr_{i}" for i in range(4)]
    relation_labels = [f"rel_{i}" for i in range(4)]
    labels = (
        [
            {"name": name, "kind": "object", "description": f"a {name.replace('_', ' ')} of some note"}
            for name in object_labels
        ]
        + [
            {"name": name, "kind": "attribute", "description": f"being {name.replace('_', ' ')}"}
            for name in attribute_labels
        ]
        + [
            {"name": name, "kind": "relationship", "description": f"acting {name.replace('_', ' ')}"}
            for name in relation_labels
        ]
    )
    annotations = {"images": [], "objects": [], "attributes": [], "relationships": []}
    counter = 0
    for i in range(n_images):
        image_id = f"{id_prefix}_{i:04d}"
        width = rng.randint(min_dim, max_dim)
        height = rng.randint(min_dim, max_dim)
        record = {"id": image_id, "width": width, "height": height}
        if rng.random() < 0.8:
            record["caption"] = f"scene {i} with {rng.choice(object_labels).replace('_', ' ')} nearby"
        if rng.random() < 0.3:
            record["localized_narrative"] = f"narrative {i} describing the layout in detail"
        annotations["images"].append(record)
        ids = []
        for _ in range(rng.randint(1, 6)):
            w = rng.randint(10, max(11, width // 2))
            h = rng.randint(10, max(11, height // 2))
            x = rng.randint(0, width - w)
            y = rng.randint(0, height - h)
            obj_id = f"{id_prefix}_o{counter:05d}"
            counter += 1
            ids.append(obj_id)
            annotations["objects"].append(
                {
                    "id": obj_id,
                    "image_id": image_id,
                    "bbox": [x, y, w, h],
                    "label": rng.choice(object_labels),
                }
            )
        if len(ids) >= 2 and rng.random() < 0.6:
            annotations["attributes"].append(
                {"label": rng.choice(attribute_labels), "object_ids": rng.sample(ids, 2)}
            )
        if len(ids) >= 2 and rng.random() < 0.6:
            a, b = rng.sample(ids, 2)
            annotations["relationships"].append(
                {"label": rng.choice(relation_labels), "subject_id": a, "object_id": b}
            )
    return annotations, labels


def synth_candidates(annotations, seed=0, rounds=3):
    """Caption candidates + Jaccard-consistent static scores + references.

    Images without a caption get `rounds` rounds of 3 candidates each;
    scores equal the Jaccard word-set similarity against a reference
    text, so a static score file and the mock bridge agree exactly.
    """
    rng = random.Random(seed)
    vocab = ["river", "stone", "lantern", "market", "garden", "bridge", "cart", "mural"]
    candidates = []
    scores = []
    references = []
    for record in annotations["images"]:
        if "caption" in record:
            continue
        reference_words = rng.sample(vocab, 5)
        reference = " ".join(reference_words)
        references.append({"image_ref": record["id"], "text": reference})
        for round_no in range(1, rounds + 1):
            for i in range(3):
                length = rng.randint(3, 9)
                words = rng.sample(vocab, min(length, len(vocab)))
                text = " ".join(words)
                a, b = set(text.lower().split()), set(reference.lower().split())
                score = len(a & b) / len(a | b)
                candidates.append({"image_id": record["id"], "round": round_no, "text": text})
                scores.append(
                    {
                        "image_id": record["id"],
                        "round": round_no,
                        "text_hash": hashlib.sha256(text.encode()).hexdigest(),
                        "score": score,
                    }
                )
    return candidates, scores, references


def make_pipeline_fixture(
    tmp_path,
    n_images=24,
    seed=0,
    budget=2048,
    recipe="CLDR",
    workers=1,
    repeat_b=2,
    with_candidates=True,
):
    """Two-source corpus plus a pipeline config file; returns (config_path, out_dir)."""
    paths = {}
    for source, (count, src_seed) in {"alpha": (n_images, seed), "beta": (max(2, n_images // 2), seed + 1)}.items():
        annotations, labels = synth_corpus(count, seed=src_seed, id_prefix=source)
        # strip some captions so candidate selection has work, source alpha only
        if source == "alpha":
            for record in annotations["images"][::3]:
                record.pop("caption", None)
        ann, label_path, _ = write_corpus(tmp_path, annotations, labels, prefix=source)
        entry = {"name": source, "annotations": str(ann), "labels": str(label_path)}
        if source == "beta":
            entry["repeat_factor"] = repeat_b
            entry["label_min_freq"] = {"object": 2}
        if source == "alpha" and with_candidates:
            candidates, scores, references = synth_candidates(annotations, seed=seed)
            cand_path = tmp_path / "alpha_candidates.jsonl"
            write_jsonl(cand_path, candidates)
            score_path = tmp_path / "alpha_scores.jsonl"
            write_jsonl(score_path, scores)
            refs_path = tmp_path / "alpha_refs.jsonl"
            write_jsonl(refs_path, references)
            entry["candidates"] = str(cand_path)
            entry["scores"] = str(score_path)
            paths["refs"] = refs_path
        paths[source] = entry

    out_dir = tmp_path / "out"
    config = {
        "seed": 7,
        "budget": budget,
        "workers": workers,
        "recipe": recipe,
        "loss": {"alpha": 0.1, "mask_prob": 0.9},
        "output": {"dir": str(out_dir)},
        "sources": [paths["alpha"], paths["beta"]],
    }
    config_path = tmp_path / "pipeline.json"
    config_path.write_text(json.dumps(config, indent=1), encoding="utf-8")
    return config_path, out_dir, paths
