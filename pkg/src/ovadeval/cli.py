"""Command-line front end.

Exit codes: 0 success, 1 data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import annotation, captions, fileio, metrics, scoring
from .types import (
    NUM_ATTRIBUTES,
    DataError,
    Dataset,
    ImagePredictions,
    load_annotations,
    load_categories,
    load_taxonomy,
    validate_dataset,
)

logger = logging.getLogger("ovadeval")


class UsageError(Exception):
    pass


def _common(p: argparse.ArgumentParser, ann: bool = True) -> None:
    if ann:
        p.add_argument("--ann", required=True, help="annotation JSON file")
    p.add_argument("--taxonomy", help="taxonomy JSON (default: bundled reference taxonomy)")
    p.add_argument("--categories", help="category JSON (default: bundled COCO-80 list)")
    p.add_argument(
        "--any-size", action="store_true",
        help="accept custom taxonomies/category lists without the 117-attribute / 80-category checks",
    )
    p.add_argument("--json", dest="json_out", help="write the report as JSON to this path")
    p.add_argument("--csv", dest="csv_out", help="write per-attribute rows as CSV to this path")
    p.add_argument("--workers", default="1", help="worker threads, or 'auto'")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ovadeval", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval-ovad", help="attribute mAP with detections, plus OVD-80 AP50")
    _common(p)
    p.add_argument("--pred", required=True)
    p.add_argument("--iou", type=float, default=0.5)

    p = sub.add_parser("eval-box", help="attribute mAP on ground-truth boxes")
    _common(p)
    p.add_argument("--pred", required=True)

    p = sub.add_parser("chance", help="prevalence (constant-scorer) baseline")
    _common(p)

    p = sub.add_parser("stats", help="dataset statistics vs published figures")
    _common(p)

    p = sub.add_parser("splits", help="head/medium/tail attribute splits")
    _common(p, ann=False)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--ann", help="annotation JSON file")
    src.add_argument("--freq", help="JSON list of positive counts per attribute")

    p = sub.add_parser("stability", help="mAP std across disjoint image subsets")
    _common(p)
    p.add_argument("--pred", required=True)
    p.add_argument("--mode", choices=["box", "det"], default="box")
    p.add_argument("--fractions", default="0.03,0.05,0.1,0.15,0.2,0.25,0.33")
    p.add_argument("--trials", type=int, default=6)
    p.add_argument("--iou", type=float, default=0.5)

    p = sub.add_parser("score", help="region/text embeddings -> prediction file")
    _common(p, ann=False)
    p.add_argument("--emb", required=True, help="embedding file (binary or .json)")
    p.add_argument("--regions", required=True, help="JSON list of regions referencing embedding names")
    p.add_argument("--out", required=True, help="output prediction file")
    p.add_argument("--tau", type=float, default=scoring.DEFAULT_TAU)

    p = sub.add_parser("extract-parts", help="tagged captions -> nouns / noun phrases / complements")
    p.add_argument("--captions", required=True, help="one caption per line, tokens as text_TAG")
    p.add_argument("--json", dest="json_out")

    p = sub.add_parser("propagate", help="per-type selections -> att_vec arrays")
    _common(p, ann=False)
    p.add_argument("--selections", required=True)
    p.add_argument("--infeasible", choices=["neg", "unk"], default="neg")

    p = sub.add_parser("validate", help="check annotation invariants; compare two annotation sets")
    _common(p)
    p.add_argument("--ann2", help="second annotation of the same instances")
    return parser


# --------------------------------------------------------------------------


def _taxonomy(args):
    if not args.taxonomy:
        return load_taxonomy()
    return load_taxonomy(args.taxonomy, expected_attributes=None if args.any_size else NUM_ATTRIBUTES)


def _categories(args):
    if not args.categories:
        return load_categories()
    return load_categories(args.categories, full=not args.any_size)


def _dataset(args, path: str | None = None, strict: bool = True) -> Dataset:
    return load_annotations(path or args.ann, _taxonomy(args), _categories(args), strict=strict)


def _config(args) -> fileio.RunConfig:
    try:
        return fileio.RunConfig(
            iou_threshold=getattr(args, "iou", 0.5),
            tau=getattr(args, "tau", scoring.DEFAULT_TAU),
            infeasible_policy=getattr(args, "infeasible", "neg"),
            seed=args.seed,
            worker_count=fileio.parse_workers(args.workers),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _emit(args, text: str, payload: dict | list | None, csv_text: str | None = None) -> None:
    print(text)
    if getattr(args, "json_out", None) and payload is not None:
        fileio.write_json(payload, args.json_out)
    if getattr(args, "csv_out", None) and csv_text is not None:
        Path(args.csv_out).write_text(csv_text, encoding="utf-8")


def _emit_report(args, d: Dataset, report: metrics.EvalReport, cfg: fileio.RunConfig, title: str) -> None:
    payload = report.to_json(d.taxonomy, d.categories)
    payload["config"] = fileio.config_json(cfg)
    _emit(args, fileio.render_report(report, title), payload, fileio.report_csv(report, d.taxonomy))


def cmd_eval_ovad(args) -> None:
    cfg = _config(args)
    d = _dataset(args)
    preds = fileio.load_predictions(args.pred, len(d.categories), len(d.taxonomy))
    unknown = set(preds) - {im.image_id for im in d.images}
    if unknown:
        logger.warning("ignoring predictions for %d image(s) not in the annotations", len(unknown))
    report = metrics.attribute_eval(d, preds, metrics.EvalMode.DETECTION, cfg.iou_threshold, workers=cfg.worker_count)
    ovd = metrics.ovd80_eval(d, preds, cfg.iou_threshold)
    report = dataclasses.replace(report, ovd80=ovd)
    _emit_report(args, d, report, cfg, "eval-ovad")


def cmd_eval_box(args) -> None:
    cfg = _config(args)
    d = _dataset(args)
    scores = fileio.load_box_oracle(args.pred, d)
    report = metrics.attribute_eval(d, scores, metrics.EvalMode.BOX_ORACLE, workers=cfg.worker_count)
    _emit_report(args, d, report, cfg, "eval-box")


def cmd_chance(args) -> None:
    cfg = _config(args)
    d = _dataset(args)
    report = metrics.chance_report(d)
    notes = list(report.notes) + [
        "published chance row (x100): " + " / ".join(f"{k} {v}" for k, v in metrics.PUBLISHED_CHANCE.items())
    ]
    report = dataclasses.replace(report, notes=tuple(notes))
    _emit_report(args, d, report, cfg, "chance")


def cmd_stats(args) -> None:
    d = _dataset(args)
    stats = metrics.dataset_stats(d)
    _emit(args, fileio.render_stats(stats), stats.to_json())


def cmd_splits(args) -> None:
    tax = _taxonomy(args)
    if args.freq:
        freq = np.asarray(json.loads(Path(args.freq).read_text()), dtype=np.float64)
        if len(freq) != len(tax):
            raise DataError(f"frequency list has {len(freq)} entries, expected {len(tax)}")
    else:
        freq = _dataset(args).positive_counts()
    s = metrics.frequency_splits(freq)
    lines = [
        f"t_high = {s.t_high:.4f}   t_low = {s.t_low:.4f}",
        f"head={len(s.head)} medium={len(s.medium)} tail={len(s.tail)}",
    ]
    for name in ("head", "medium", "tail"):
        ids = sorted(getattr(s, name))
        lines.append(f"{name}: " + ", ".join(tax.attributes[i].label for i in ids))
    lines += [f"published sizes ({src}): head={h} medium={m} tail={t}" for src, (h, m, t) in metrics.PUBLISHED_SPLIT_SIZES.items()]
    payload = {
        "schema_version": metrics.SCHEMA_VERSION,
        "t_high": s.t_high,
        "t_low": s.t_low,
        "head": sorted(s.head),
        "medium": sorted(s.medium),
        "tail": sorted(s.tail),
        "frequencies": [float(v) for v in freq],
    }
    _emit(args, "\n".join(lines), payload)


def cmd_stability(args) -> None:
    cfg = _config(args)
    d = _dataset(args)
    try:
        fractions = [float(x) for x in args.fractions.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"bad --fractions: {exc}") from exc
    if args.mode == "box":
        preds = fileio.load_box_oracle(args.pred, d)
        mode = metrics.EvalMode.BOX_ORACLE
    else:
        preds = fileio.load_predictions(args.pred, len(d.categories), len(d.taxonomy))
        mode = metrics.EvalMode.DETECTION
    try:
        results = metrics.subset_stability(d, preds, fractions, args.trials, cfg.seed, mode, iou_thresh=cfg.iou_threshold)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    lines = [f"{'fraction':>9}{'images':>8}{'sets':>6}{'All':>8}{'Head':>8}{'Medium':>8}{'Tail':>8}"]
    for r in results:
        lines.append(
            f"{r.fraction:>9.3f}{r.subset_size:>8}{r.num_subsets:>6}"
            + "".join(f"{fileio.pct(r.std[k]):>8}" for k in ("all", "head", "medium", "tail"))
        )
    payload = {
        "schema_version": metrics.SCHEMA_VERSION,
        "prng": "numpy PCG64",
        "config": fileio.config_json(cfg),
        "trials": args.trials,
        "results": [{"fraction": r.fraction, "subset_size": r.subset_size, "num_subsets": r.num_subsets, "std": r.std} for r in results],
    }
    _emit(args, "\n".join(lines), payload)


def cmd_score(args) -> None:
    cfg = _config(args)
    tax = _taxonomy(args)
    cats = _categories(args)
    table = scoring.load_embeddings(args.emb)
    regions = json.loads(Path(args.regions).read_text(encoding="utf-8"))
    obj_classes = [(c.name, scoring.class_embedding(c.synonyms, table)) for c in cats]
    att_classes = [(a.label, scoring.class_embedding(a.synonyms, table)) for a in tax.attributes]
    oracle = bool(regions) and "instance_index" in regions[0]
    if oracle:
        out: dict = {}
        for r in regions:
            emb = table[r["embedding"]]
            row = scoring.score_all(emb, att_classes, cfg.tau)[0]
            out.setdefault(r["image_id"], []).append((int(r["instance_index"]), row))
        payload = [
            {"image_id": image_id, "instance_index": j, "attribute_scores": [float(v) for v in row]}
            for image_id, rows in out.items()
            for j, row in sorted(rows, key=lambda t: t[0])
        ]
    else:
        preds = {}
        for r in regions:
            regs = r["regions"]
            if not regs:
                preds[r["image_id"]] = ImagePredictions.empty(len(cats), len(tax))
                continue
            embs = np.stack([table[x["embedding"]] for x in regs])
            preds[r["image_id"]] = ImagePredictions(
                np.array([x["bbox"] for x in regs], dtype=np.float64),
                scoring.score_all(embs, obj_classes, cfg.tau),
                scoring.score_all(embs, att_classes, cfg.tau),
            )
        payload = fileio.predictions_to_json(preds)
    fileio.write_json(payload, args.out)
    print(f"wrote {'box-oracle scores' if oracle else 'predictions'} for {len(regions)} record(s) to {args.out}")


def cmd_extract_parts(args) -> None:
    parts = [captions.extract_parts(c).to_json() for c in captions.read_tagged_captions(args.captions)]
    text = "\n".join(json.dumps(p) for p in parts)
    _emit(args, text, parts)


def cmd_propagate(args) -> None:
    cfg = _config(args)
    tax = _taxonomy(args)
    cats = {c.id: c for c in _categories(args)}
    raw = json.loads(Path(args.selections).read_text(encoding="utf-8"))
    out = []
    for k, rec in enumerate(raw):
        try:
            cat = cats[int(rec["category_id"])]
            sels = annotation.selections_from_names(rec["selections"], tax)
            vec = annotation.propagate_labels(sels, cat, tax, cfg.infeasible_policy)
        except (KeyError, ValueError) as exc:
            raise DataError(f"selection record #{k}: {exc}") from exc
        out.append({"category_id": cat.id, "att_vec": [int(v) for v in vec]})
    _emit(args, json.dumps(out), out)


def cmd_validate(args) -> None:
    a = _dataset(args, strict=False)
    lines, payload = [], {"schema_version": metrics.SCHEMA_VERSION}
    violations = validate_dataset(a)
    payload["violations"] = [str(v) for v in violations]
    lines.append(f"{args.ann}: {len(violations)} violation(s)")
    lines += [f"  {v}" for v in violations]
    failed = bool(violations)
    if args.ann2:
        b = _dataset(args, args.ann2, strict=False)
        vb = validate_dataset(b)
        lines.append(f"{args.ann2}: {len(vb)} violation(s)")
        lines += [f"  {v}" for v in vb]
        failed = failed or bool(vb)
        if [im.image_id for im in a.images] != [im.image_id for im in b.images]:
            raise DataError("the two annotation files cover different images")
        va = [inst.labels for im in a.images for inst in im.instances]
        vb_ = [inst.labels for im in b.images for inst in im.instances]
        consistency = annotation.annotation_consistency(va, vb_)
        payload["consistency"] = consistency
        lines.append(f"consistency: {consistency:.2f}%")
    _emit(args, "\n".join(lines), payload)
    if failed:
        raise DataError("annotation invariants violated")


COMMANDS = {
    "eval-ovad": cmd_eval_ovad,
    "eval-box": cmd_eval_box,
    "chance": cmd_chance,
    "stats": cmd_stats,
    "splits": cmd_splits,
    "stability": cmd_stability,
    "score": cmd_score,
    "extract-parts": cmd_extract_parts,
    "propagate": cmd_propagate,
    "validate": cmd_validate,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
