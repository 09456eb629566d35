from __future__ import annotations

import sys

import numpy as np
import pytest

from ovadeval.types import (
    AnnotatedImage,
    AnnotatedInstance,
    BoundingBox,
    Dataset,
    ImagePredictions,
    load_categories,
    load_taxonomy,
    parse_taxonomy,
)

TOY_TAXONOMY = {
    "types": ["position", "state", "color", "color quantity"],
    "attributes": [
        {"id": 0, "name": "vertical", "synonyms": ["vertical", "upright"], "type": "position", "exclusivity": "Exclusive"},
        {"id": 1, "name": "horizontal", "synonyms": ["horizontal", "lying"], "type": "position", "exclusivity": "Exclusive"},
        {"id": 2, "name": "open", "synonyms": ["open"], "type": "state", "exclusivity": "AntonymPairs", "antonym_of": 3},
        {"id": 3, "name": "closed", "synonyms": ["closed"], "type": "state", "exclusivity": "AntonymPairs", "antonym_of": 2},
        {"id": 4, "name": "red", "synonyms": ["red"], "type": "color", "exclusivity": "ColorMultiSelect"},
    ],
    "feasibility": {
        "human": ["position"],
        "animal": ["position", "color"],
        "food": ["position", "color"],
        "object": ["position", "state", "color"],
    },
}

TOY_CATEGORIES = [
    {"id": 1, "name": "person", "synonyms": ["person"], "split": "Base", "group": "human"},
    {"id": 2, "name": "cup", "synonyms": ["cup"], "split": "Novel", "group": "object"},
    {"id": 3, "name": "dog", "synonyms": ["dog"], "split": "Base", "group": "animal"},
]


@pytest.fixture(scope="session")
def taxonomy():
    return load_taxonomy()


@pytest.fixture(scope="session")
def categories():
    return load_categories()


@pytest.fixture
def toy_taxonomy():
    return parse_taxonomy(TOY_TAXONOMY, expected_attributes=None)


@pytest.fixture
def toy_categories():
    return load_categories(TOY_CATEGORIES, full=False)


def random_dataset(rng, taxonomy, categories, n_images=10, max_inst=5, size=100.0, p_unknown=0.2):
    """Synthetic dataset with random boxes and tri-state labels."""
    n_attr = len(taxonomy)
    images = []
    for i in range(n_images):
        insts = []
        for _ in range(rng.integers(0, max_inst + 1)):
            x, y = rng.uniform(0, size * 0.7, 2)
            w, h = rng.uniform(5, size * 0.3, 2)
            labels = rng.choice([1, 0, -1], size=n_attr, p=[0.3, 0.7 - p_unknown, p_unknown]).astype(np.int8)
            cat = categories[rng.integers(len(categories))].id
            insts.append(AnnotatedInstance(BoundingBox(x, y, w, h), cat, labels))
        images.append(AnnotatedImage(i, size, size, tuple(insts)))
    return Dataset(taxonomy, tuple(categories), tuple(images))


def jittered_predictions(rng, d, n_cat, jitter=8.0, extra=2, drop=0.2):
    """Detections near the ground truth (some dropped), plus random extra boxes."""
    n_attr = len(d.taxonomy)
    out = {}
    for im in d.images:
        boxes = []
        for inst in im.instances:
            if rng.random() < drop:
                continue
            b = np.array(inst.box.as_list()) + rng.normal(0, jitter, 4) * [1, 1, 0.5, 0.5]
            b[2:] = np.maximum(b[2:], 1.0)
            boxes.append(b)
        for _ in range(rng.integers(0, extra + 1)):
            boxes.append(np.concatenate([rng.uniform(0, 70, 2), rng.uniform(5, 30, 2)]))
        m = len(boxes)
        out[im.image_id] = ImagePredictions(
            np.array(boxes).reshape(m, 4),
            rng.uniform(0.01, 0.99, (m, n_cat)),
            rng.uniform(0.01, 0.99, (m, n_attr)),
        )
    return out


def write_toy_files(tmp_path, seed=0, n_images=10, taxonomy_raw=None, categories_raw=None):
    """Toy taxonomy, categories, annotations and detections on disk; returns paths and objects."""
    import json

    from ovadeval.fileio import predictions_to_json
    from ovadeval.types import dataset_to_json

    taxonomy_raw = taxonomy_raw or TOY_TAXONOMY
    categories_raw = categories_raw or TOY_CATEGORIES
    tax = parse_taxonomy(taxonomy_raw, expected_attributes=None)
    cats = load_categories(categories_raw, full=False)
    rng = np.random.default_rng(seed)
    d = random_dataset(rng, tax, cats, n_images=n_images)
    preds = jittered_predictions(rng, d, len(cats))
    paths = {k: tmp_path / f"{k}.json" for k in ("taxonomy", "categories", "ann", "pred")}
    paths["taxonomy"].write_text(json.dumps(taxonomy_raw))
    paths["categories"].write_text(json.dumps(categories_raw))
    paths["ann"].write_text(json.dumps(dataset_to_json(d)))
    paths["pred"].write_text(json.dumps(predictions_to_json(preds)))
    return paths, d, preds


def pytest_terminal_summary(terminalreporter):
    lines = getattr(sys.modules.get("test_acceptance"), "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
