import json

import numpy as np
import pytest

from ovadeval.cli import main
from ovadeval.fileio import box_oracle_to_json, write_json
from ovadeval.scoring import EmbeddingTable, save_embeddings
from ovadeval.types import dataset_to_json, load_categories, load_taxonomy

from conftest import random_dataset, write_toy_files


@pytest.fixture
def toy(tmp_path):
    paths, d, preds = write_toy_files(tmp_path)
    flags = ["--taxonomy", str(paths["taxonomy"]), "--categories", str(paths["categories"]), "--any-size"]
    return paths, d, preds, flags


@pytest.fixture(scope="module")
def reference_set(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("ref")
    tax, cats = load_taxonomy(), load_categories()
    d = random_dataset(np.random.default_rng(0), tax, cats, n_images=20, max_inst=4)
    ann = tmp / "ann.json"
    write_json(dataset_to_json(d), ann)
    return tmp, d, ann


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_eval_box_perfect(capsys, reference_set):
    tmp, d, ann = reference_set
    scores = {im.image_id: np.array([(i.labels == 1).astype(float) for i in im.instances]).reshape(-1, 117) for im in d.images}
    pred = tmp / "perfect.json"
    write_json(box_oracle_to_json(scores), pred)
    code, out, _ = run(capsys, "eval-box", "--ann", ann, "--pred", pred, "--json", tmp / "r.json", "--csv", tmp / "r.csv")
    assert code == 0
    header, row = out.splitlines()[:2]
    assert header.split()[0] == "All" and row.split()[1] == "100.0"
    rep = json.loads((tmp / "r.json").read_text())
    assert rep["schema_version"] == 1 and rep["map"]["all"] == 1.0
    assert len(rep["attributes"]) == 117 and "type_map" in rep
    assert (tmp / "r.csv").read_text().startswith("id,name,type,split,positives,negatives,ap\n")


def test_eval_ovad_empty_predictions(capsys, reference_set):
    tmp, d, ann = reference_set
    pred = tmp / "empty.json"
    write_json([{"image_id": im.image_id, "predictions": []} for im in d.images], pred)
    code, out, _ = run(capsys, "eval-ovad", "--ann", ann, "--pred", pred, "--json", tmp / "e.json")
    assert code == 0
    rep = json.loads((tmp / "e.json").read_text())
    assert rep["map"]["all"] == 0.0
    assert (rep["ovd80"]["ap50_novel"], rep["ovd80"]["ap50_base"], rep["ovd80"]["ap50_all"]) == (0.0, 0.0, 0.0)
    assert "OVD-80" in out


def test_eval_ovad_toy_is_deterministic(capsys, toy, tmp_path):
    paths, _, _, flags = toy
    outs = []
    for k, workers in enumerate(["2", "2", "1"]):
        target = tmp_path / f"run{k}.json"
        code, _, _ = run(capsys, "eval-ovad", "--ann", paths["ann"], "--pred", paths["pred"], *flags, "--json", target, "--workers", workers)
        assert code == 0
        outs.append(target.read_bytes())
    assert outs[0] == outs[1]
    # the worker count changes only the recorded config
    a, b = json.loads(outs[0]), json.loads(outs[2])
    assert a.pop("config")["worker_count"] == 2 and b.pop("config")["worker_count"] == 1
    assert a == b


def test_toy_without_any_size_is_a_data_error(capsys, toy):
    paths = toy[0]
    code, _, err = run(capsys, "eval-ovad", "--ann", paths["ann"], "--pred", paths["pred"], "--taxonomy", paths["taxonomy"])
    assert code == 1 and "attributes" in err


def test_chance_and_stats(capsys, reference_set):
    tmp, _, ann = reference_set
    code, out, _ = run(capsys, "chance", "--ann", ann, "--json", tmp / "c.json")
    assert code == 0 and "published chance row" in out
    code, out, _ = run(capsys, "stats", "--ann", ann, "--json", tmp / "s.json")
    assert code == 0
    stats = json.loads((tmp / "s.json").read_text())
    assert stats["images"] == 20 and "FLAG" in out


def test_splits_from_frequencies(capsys, toy, tmp_path):
    paths, _, _, flags = toy
    freq = tmp_path / "f.json"
    freq.write_text(json.dumps([9, 10, 11, 10, 10]))
    code, out, _ = run(capsys, "splits", "--freq", freq, *flags, "--json", tmp_path / "sp.json")
    assert code == 0
    sp = json.loads((tmp_path / "sp.json").read_text())
    assert sp["head"] == [2] and sp["tail"] == [0]


def test_splits_wrong_length(capsys, toy, tmp_path):
    paths, _, _, flags = toy
    freq = tmp_path / "f.json"
    freq.write_text("[1, 2]")
    assert run(capsys, "splits", "--freq", freq, *flags)[0] == 1


def test_stability(capsys, toy, tmp_path):
    paths, _, _, flags = toy
    args = ["stability", "--ann", paths["ann"], "--pred", paths["pred"], "--mode", "det", *flags, "--fractions", "0.1,0.2", "--trials", "2"]
    code, out, _ = run(capsys, *args, "--json", tmp_path / "a.json")
    assert code == 0 and "fraction" in out
    run(capsys, *args, "--json", tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    code, _, err = run(capsys, "stability", "--ann", paths["ann"], "--pred", paths["pred"], "--mode", "det", *flags, "--fractions", "0.5")
    assert code == 2 and "three" in err


def test_score_then_eval(capsys, toy, tmp_path):
    paths, d, _, flags = toy
    rng = np.random.default_rng(0)
    tax_raw = json.loads(paths["taxonomy"].read_text())
    cat_raw = json.loads(paths["categories"].read_text())
    words = {s for a in tax_raw["attributes"] for s in a["synonyms"]} | {s for c in cat_raw for s in c["synonyms"]}
    entries = {w: rng.normal(size=8) for w in sorted(words)}
    entries.update({f"r{k}": rng.normal(size=8) for k in range(4)})
    emb = tmp_path / "emb.bin"
    save_embeddings(EmbeddingTable.from_dict(entries), emb)
    regions = [
        {"image_id": im.image_id, "regions": [{"bbox": i.box.as_list(), "embedding": f"r{k % 4}"} for k, i in enumerate(im.instances)]}
        for im in d.images
    ]
    (tmp_path / "regions.json").write_text(json.dumps(regions))
    out_pred = tmp_path / "scored.json"
    code, _, _ = run(capsys, "score", "--emb", emb, "--regions", tmp_path / "regions.json", "--out", out_pred, *flags)
    assert code == 0
    code, _, _ = run(capsys, "eval-ovad", "--ann", paths["ann"], "--pred", out_pred, *flags)
    assert code == 0

    oracle_regions = [
        {"image_id": im.image_id, "instance_index": j, "embedding": f"r{j % 4}"}
        for im in d.images for j in range(len(im.instances))
    ]
    (tmp_path / "oracle.json").write_text(json.dumps(oracle_regions))
    code, _, _ = run(capsys, "score", "--emb", emb, "--regions", tmp_path / "oracle.json", "--out", tmp_path / "bo.json", *flags)
    assert code == 0
    assert run(capsys, "eval-box", "--ann", paths["ann"], "--pred", tmp_path / "bo.json", *flags)[0] == 0


def test_extract_parts(capsys, tmp_path):
    caps = tmp_path / "caps.txt"
    caps.write_text("a_DET red_ADJ helmet_NOUN on_ADP a_DET wooden_ADJ table_NOUN\ncows_NOUN graze_VERB\n")
    code, out, _ = run(capsys, "extract-parts", "--captions", caps, "--json", tmp_path / "p.json")
    assert code == 0
    parts = json.loads((tmp_path / "p.json").read_text())
    assert parts[0]["noun_complements"] == ["red", "wooden"] and parts[1]["noun_phrases"] == []


def test_propagate(capsys, tmp_path):
    sel = tmp_path / "sel.json"
    sel.write_text(json.dumps([{"category_id": 1, "selections": {"position": "vertical", "gender": "unknown"}}]))
    code, _, _ = run(capsys, "propagate", "--selections", sel, "--json", tmp_path / "v.json")
    assert code == 0
    (rec,) = json.loads((tmp_path / "v.json").read_text())
    tax = load_taxonomy()
    vec = rec["att_vec"]
    assert len(vec) == 117 and vec[tax.find("position", "vertical")] == 1
    assert vec[tax.find("material", "wood")] == 0
    code, _, _ = run(capsys, "propagate", "--selections", sel, "--infeasible", "unk", "--json", tmp_path / "u.json")
    assert json.loads((tmp_path / "u.json").read_text())[0]["att_vec"][tax.find("material", "wood")] == -1


def test_propagate_infeasible_selection(capsys, tmp_path):
    sel = tmp_path / "sel.json"
    sel.write_text(json.dumps([{"category_id": 1, "selections": {"material": "wood"}}]))
    assert run(capsys, "propagate", "--selections", sel)[0] == 1


def test_validate(capsys, toy, tmp_path):
    paths, d, _, flags = toy
    code, out, _ = run(capsys, "validate", "--ann", paths["ann"], "--ann2", paths["ann"], *flags, "--json", tmp_path / "v.json")
    assert code == 0 and "consistency: 100.00%" in out
    bad = json.loads(paths["ann"].read_text())
    bad["instances"][0]["bbox"][2] = 0
    (tmp_path / "bad.json").write_text(json.dumps(bad))
    code, out, _ = run(capsys, "validate", "--ann", tmp_path / "bad.json", *flags)
    assert code == 1 and "1 violation" in out


def test_usage_errors(capsys, toy):
    paths, _, _, flags = toy
    assert run(capsys)[0] == 2
    assert run(capsys, "no-such-command")[0] == 2
    assert run(capsys, "eval-box", "--ann", paths["ann"])[0] == 2
    assert run(capsys, "eval-ovad", "--ann", paths["ann"], "--pred", paths["pred"], *flags, "--iou", "1.5")[0] == 2
    assert run(capsys, "eval-ovad", "--ann", paths["ann"], "--pred", paths["pred"], *flags, "--workers", "0")[0] == 2


def test_missing_file_is_data_error(capsys, tmp_path):
    assert run(capsys, "stats", "--ann", tmp_path / "nope.json")[0] == 1


def test_wrong_prediction_format(capsys, toy):
    paths, _, _, flags = toy
    code, _, err = run(capsys, "eval-box", "--ann", paths["ann"], "--pred", paths["pred"], *flags)
    assert code == 1 and "eval-ovad" in err
