import copy
import json
import logging

import numpy as np
import pytest

from ovadeval.types import (
    AnnotatedImage,
    AnnotatedInstance,
    BoundingBox,
    DataError,
    Dataset,
    Exclusivity,
    Split,
    load_annotations,
    load_categories,
    load_taxonomy,
    parse_taxonomy,
    reference_categories_path,
    save_taxonomy,
    validate_dataset,
)

from conftest import TOY_CATEGORIES, TOY_TAXONOMY


class TestTaxonomy:
    def test_reference_counts(self, taxonomy):
        assert len(taxonomy.attributes) == 117
        assert len(taxonomy.types) == 19
        assert set(taxonomy.feasibility) == {"human", "animal", "food", "object"}

    def test_ids_follow_file_order(self, taxonomy):
        assert [a.id for a in taxonomy.attributes] == list(range(117))

    def test_antonyms_are_involutions(self, taxonomy):
        paired = [a for a in taxonomy.attributes if a.antonym_of is not None]
        assert paired
        for a in paired:
            assert a.exclusivity is Exclusivity.ANTONYM_PAIRS
            assert taxonomy.attributes[a.antonym_of].antonym_of == a.id

    def test_twelve_colors_per_color_slot(self, taxonomy):
        for slot in ("color", "hair color", "clothes color"):
            assert len(taxonomy.slots[slot]) == 12

    def test_116_attributes_rejected(self):
        raw = json.loads(json.dumps(load_taxonomy().to_json()))
        raw["attributes"].pop()
        with pytest.raises(DataError, match="116 attributes"):
            parse_taxonomy(raw)

    def test_wrong_type_count_rejected(self):
        raw = load_taxonomy().to_json()
        raw["types"] = raw["types"] + ["extra"]
        with pytest.raises(DataError, match="types"):
            parse_taxonomy(raw)

    def test_one_sided_antonym_rejected(self):
        raw = copy.deepcopy(TOY_TAXONOMY)
        del raw["attributes"][3]["antonym_of"]  # closed no longer points back at open
        with pytest.raises(DataError, match="dangling antonym"):
            parse_taxonomy(raw, expected_attributes=None)

    def test_out_of_range_antonym_rejected(self):
        raw = copy.deepcopy(TOY_TAXONOMY)
        raw["attributes"][2]["antonym_of"] = 99
        with pytest.raises(DataError, match="dangling"):
            parse_taxonomy(raw, expected_attributes=None)

    def test_empty_synonyms_rejected(self):
        raw = copy.deepcopy(TOY_TAXONOMY)
        raw["attributes"][0]["synonyms"] = []
        with pytest.raises(DataError, match="synonyms"):
            parse_taxonomy(raw, expected_attributes=None)

    def test_bad_feasibility_keys(self):
        raw = copy.deepcopy(TOY_TAXONOMY)
        raw["feasibility"]["vehicle"] = []
        with pytest.raises(DataError, match="feasibility"):
            parse_taxonomy(raw, expected_attributes=None)

    def test_malformed_file(self, tmp_path):
        p = tmp_path / "tax.json"
        p.write_text("{not json")
        with pytest.raises(DataError):
            load_taxonomy(p)

    def test_round_trip_reference(self, taxonomy, tmp_path):
        p = tmp_path / "tax.json"
        save_taxonomy(taxonomy, p)
        again = load_taxonomy(p)
        assert again == taxonomy
        assert again.to_json() == taxonomy.to_json()

    def test_round_trip_toy(self, toy_taxonomy, tmp_path):
        p = tmp_path / "tax.json"
        save_taxonomy(toy_taxonomy, p)
        assert load_taxonomy(p, expected_attributes=None) == toy_taxonomy


class TestCategories:
    def test_split_partition(self, categories):
        assert len(categories) == 80
        assert sum(c.split is Split.BASE for c in categories) == 48
        assert sum(c.split is Split.NOVEL for c in categories) == 32

    def test_category_groups(self, categories):
        by_name = {c.name: c for c in categories}
        assert by_name["person"].group == "human"
        assert by_name["zebra"].group == "animal"
        assert by_name["hot dog"].group == "food"
        assert by_name["skateboard"].group == "object"
        assert sum(c.group == "animal" for c in categories) == 10
        assert sum(c.group == "food" for c in categories) == 10

    def test_wrong_split_rejected(self):
        raw = json.loads(open(reference_categories_path()).read())
        raw[0]["split"] = "Novel" if raw[0]["split"] == "Base" else "Base"
        with pytest.raises(DataError):
            load_categories(raw)

    def test_unknown_group_rejected(self):
        raw = [dict(TOY_CATEGORIES[0], group="vehicle")]
        with pytest.raises(DataError, match="group"):
            load_categories(raw, full=False)


def _ann(att_len=5, bbox=(10, 10, 20, 20)):
    return {
        "images": [{"id": 1, "width": 100, "height": 80}, {"id": 2, "width": 50, "height": 50}],
        "instances": [
            {"image_id": 1, "bbox": list(bbox), "category_id": 2, "att_vec": [1, 0, -1, 0, 1][:att_len] + [0] * max(0, att_len - 5)},
            {"image_id": 2, "bbox": [0, 0, 10, 10], "category_id": 3, "att_vec": [0, 1, -1, -1, 0]},
        ],
    }


class TestAnnotations:
    def test_well_formed_dataset_is_valid(self, toy_taxonomy, toy_categories):
        d = load_annotations(_ann(), toy_taxonomy, toy_categories)
        assert validate_dataset(d) == []
        assert d.num_instances == 2
        assert d.label_matrix.shape == (2, 5)

    def test_short_label_vector_reported(self, toy_taxonomy, toy_categories):
        d = load_annotations(_ann(att_len=4), toy_taxonomy, toy_categories, strict=False)
        v = validate_dataset(d)
        assert len(v) == 1
        assert "image 1 instance 0" in v[0].locus and "length 4" in v[0].message

    def test_zero_width_box_reported(self, toy_taxonomy, toy_categories):
        d = load_annotations(_ann(bbox=(10, 10, 0, 20)), toy_taxonomy, toy_categories, strict=False)
        v = validate_dataset(d)
        assert len(v) == 1 and "degenerate" in v[0].message

    def test_strict_load_rejects_violations(self, toy_taxonomy, toy_categories):
        with pytest.raises(DataError, match="violation"):
            load_annotations(_ann(bbox=(10, 10, 0, 20)), toy_taxonomy, toy_categories)

    def test_out_of_bounds_box_clamped_with_warning(self, toy_taxonomy, toy_categories, caplog):
        with caplog.at_level(logging.WARNING):
            d = load_annotations(_ann(bbox=(90, 70, 30, 30)), toy_taxonomy, toy_categories)
        assert d.images[0].instances[0].box == BoundingBox(90, 70, 10, 10)
        assert "clamped 1" in caplog.text

    def test_unknown_category_reported(self, toy_taxonomy, toy_categories):
        raw = _ann()
        raw["instances"][0]["category_id"] = 42
        d = load_annotations(raw, toy_taxonomy, toy_categories, strict=False)
        assert [v.message for v in validate_dataset(d)] == ["unknown category id 42"]

    def test_coco_style_annotations_key(self, toy_taxonomy, toy_categories):
        raw = _ann()
        raw["annotations"] = raw.pop("instances")
        assert load_annotations(raw, toy_taxonomy, toy_categories).num_instances == 2

    def test_validate_does_not_mutate(self, toy_taxonomy):
        inst = AnnotatedInstance(BoundingBox(0, 0, 0, 5), 1, np.zeros(3, dtype=np.int8))
        d = Dataset(toy_taxonomy, (), (AnnotatedImage(0, 10, 10, (inst,)),))
        validate_dataset(d)
        assert inst.box.w == 0 and len(inst.labels) == 3

    def test_labels_read_only(self, toy_taxonomy, toy_categories):
        d = load_annotations(_ann(), toy_taxonomy, toy_categories)
        with pytest.raises(ValueError):
            d.images[0].instances[0].labels[0] = 0


class TestBoundingBox:
    def test_corner_conversion(self):
        assert BoundingBox(1, 2, 3, 4).to_xyxy() == (1, 2, 4, 6)

    def test_validity(self):
        assert BoundingBox(0, 0, 1, 1).is_valid()
        assert not BoundingBox(0, 0, 0, 1).is_valid()
        assert not BoundingBox(float("nan"), 0, 1, 1).is_valid()


def test_non_integer_labels_rejected(toy_taxonomy, toy_categories):
    raw = _ann()
    raw["instances"][0]["att_vec"] = [1, 0.5, 0, 0, 0]
    with pytest.raises(DataError, match="integers"):
        load_annotations(raw, toy_taxonomy, toy_categories)


def test_out_of_range_label_reported(toy_taxonomy, toy_categories):
    raw = _ann()
    raw["instances"][0]["att_vec"] = [1, 300, 0, 0, 0]
    d = load_annotations(raw, toy_taxonomy, toy_categories, strict=False)
    assert [v.message for v in validate_dataset(d)] == ["label values must be 1, 0 or -1"]
