"""Compare the compiled and numpy kernel backends.

    python benchmarks/bench_kernels.py [--repeat N]

Times each hot kernel on evaluation-sized inputs, then a whole box-oracle
evaluation of 14,300 instances x 117 attributes, once per backend.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from ovadeval import _kernels
from ovadeval.metrics import EvalMode, attribute_eval
from ovadeval.types import AnnotatedImage, AnnotatedInstance, BoundingBox, Dataset, load_taxonomy


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def synthetic(rng, n_img=2000, n_inst=14_300):
    tax = load_taxonomy()
    image_of = np.sort(np.r_[np.arange(n_img), rng.integers(0, n_img, n_inst - n_img)])
    labels = rng.choice(np.array([1, 0, -1], dtype=np.int8), size=(n_inst, len(tax)), p=[0.086, 0.81, 0.104])
    per_image = [[] for _ in range(n_img)]
    for k, i in enumerate(image_of):
        per_image[i].append(AnnotatedInstance(BoundingBox(10, 10, 50, 50), 1, labels[k]))
    d = Dataset(tax, (), tuple(AnnotatedImage(i, 640, 640, tuple(v)) for i, v in enumerate(per_image)))
    preds = {i: rng.random((len(v), len(tax))) for i, v in enumerate(per_image)}
    return d, preds


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)

    n = 14_300
    scores = np.sort(rng.random(n))[::-1].copy()
    labels = (rng.random(n) < 0.1).astype(np.int8)
    boxes_a = np.c_[rng.uniform(0, 500, (300, 2)), rng.uniform(5, 100, (300, 2))]
    boxes_b = np.c_[rng.uniform(0, 500, (300, 2)), rng.uniform(5, 100, (300, 2))]
    ious = _kernels.iou_matrix(boxes_a, boxes_b)
    order = np.argsort(-rng.random(300), kind="stable")
    d, preds = synthetic(rng)

    cases = {
        "ap_sorted (14,300 entries)": lambda: _kernels.ap_sorted(scores, labels, 50),
        "iou_matrix (300 x 300)": lambda: _kernels.iou_matrix(boxes_a, boxes_b),
        "greedy_match (300 x 300)": lambda: _kernels.greedy_match(ious, order, 0.5),
        "box-oracle eval (14,300 x 117)": lambda: attribute_eval(d, preds, EvalMode.BOX_ORACLE),
    }
    results = {}
    for backend in _kernels.BACKENDS:
        _kernels.use_backend(backend)
        results[backend] = {name: best_of(fn, args.repeat) for name, fn in cases.items()}
    _kernels.use_backend(_kernels.BACKENDS[0])

    cols = list(_kernels.BACKENDS)
    print(f"{'kernel':<32}" + "".join(f"{c:>12}" for c in cols) + ("     speedup" if len(cols) > 1 else ""))
    for name in cases:
        row = f"{name:<32}" + "".join(f"{1e3 * results[c][name]:>10.3f}ms" for c in cols)
        if len(cols) > 1:
            row += f"{results['python'][name] / results['cython'][name]:>11.1f}x"
        print(row)
    if len(cols) == 1:
        print("compiled kernels not built; only the numpy fallback was timed")


if __name__ == "__main__":
    main()
