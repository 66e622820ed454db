#!/usr/bin/env python3
"""Benchmark the compiled geometry kernels against the pure-Python fallback.

The region-merge inner loop (square placement + IoA threshold over all
object pairs) dominates corpus-build time at production scale; this
script measures both backends on the same workload.

    python benches/bench_kernels.py [--images 2000] [--objects 12]
"""

import argparse
import random
import time

from multigrain import _geometry_py, geometry


def make_workload(n_images, max_objects, seed=0):
    rng = random.Random(seed)
    images = []
    for _ in range(n_images):
        boxes = []
        for _ in range(rng.randint(2, max_objects)):
            w = rng.randint(4, 200)
            h = rng.randint(4, 200)
            x = rng.randint(0, 224 - w)
            y = rng.randint(0, 224 - h)
            boxes.append((x, y, w, h))
        images.append(boxes)
    return images


def run(impl, images):
    crops = 0
    merges = 0
    for boxes in images:
        xs = [b[0] for b in boxes]
        ys = [b[1] for b in boxes]
        ws = [b[2] for b in boxes]
        hs = [b[3] for b in boxes]
        for i, (x, y, w, h) in enumerate(boxes):
            x0, y0, side = impl.square_crop(x, y, w, h)
            crops += 1
            merges += len(impl.qualifying_neighbors(x0, y0, side, xs, ys, ws, hs, 4, 5, i))
            impl.grid_cell(x0, y0, side)
    return crops, merges


def bench(impl, images, repeats=3):
    best = float("inf")
    result = None
    for _ in range(repeats):
        start = time.perf_counter()
        result = run(impl, images)
        best = min(best, time.perf_counter() - start)
    return best, result


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--images", type=int, default=2000)
    parser.add_argument("--objects", type=int, default=12)
    args = parser.parse_args()

    images = make_workload(args.images, args.objects)
    total_boxes = sum(len(b) for b in images)
    print(f"workload: {args.images} images, {total_boxes} boxes")
    print(f"selected kernel at import: {geometry.KERNEL_IMPLEMENTATION}")

    pure_time, pure_result = bench(_geometry_py, images)
    print(f"pure python : {pure_time:8.4f}s  ({total_boxes / pure_time:10.0f} boxes/s)")

    if geometry.HAVE_SPEEDUPS:
        from multigrain import _speedups

        fast_time, fast_result = bench(_speedups, images)
        print(f"cython      : {fast_time:8.4f}s  ({total_boxes / fast_time:10.0f} boxes/s)")
        assert fast_result == pure_result, "backends disagree"
        print(f"speedup     : {pure_time / fast_time:8.2f}x")
    else:
        print("cython      : not built (install with Cython + a C compiler)")


if __name__ == "__main__":
    main()
