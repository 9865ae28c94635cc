#!/usr/bin/env python3
"""Time the compiled kernels against the numpy fallback.

Runs every shared kernel on identical inputs under both backends and
reports per-call medians plus the native speedup. The end-to-end row
swaps the active backend under a real model forward+backward so the
numbers reflect what training actually sees.

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --elements 1048576 --json out.json
"""

import argparse
import json
import statistics
import time

import numpy as np

from visent.autograd import kernels, ops
from visent.autograd.kernels import NumpyKernels, select_backend
from visent.autograd.tensor import ComputationRecord, backward
from visent.layers import EmbeddingTable
from visent.models import ModelConfig, VEModel, cross_entropy


def _median_ms(fn, repeats):
    fn()  # warm-up
    samples = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - start) * 1e3)
    return statistics.median(samples)


def _kernel_cases(elements, rows, cols):
    rng = np.random.default_rng(0)
    flat = rng.uniform(-3.0, 3.0, size=elements).astype(np.float32)
    positive = rng.uniform(1e-3, 10.0, size=elements).astype(np.float32)
    cotangent = rng.uniform(-1.0, 1.0, size=elements).astype(np.float32)
    matrix = rng.uniform(-6.0, 6.0, size=(rows, cols)).astype(np.float32)
    keep = (rng.random((rows, cols)) > 0.25).astype(np.float32)
    keep[:, 0] = 1.0
    probs = NumpyKernels().softmax_rows(matrix)

    def adam_case(backend):
        param = flat.copy()
        grad = cotangent.copy()
        m = np.zeros_like(param)
        v = np.zeros_like(param)
        step = [0]

        def call():
            step[0] += 1
            backend.adam_update(param, grad, m, v, step[0], 1e-3, 0.9,
                                0.999, 1e-8, 1e-4)

        return call

    flat_label = f"{elements} floats"
    grid_label = f"{rows}x{cols}"
    return [
        ("tanh", flat_label, lambda b: lambda: b.tanh(flat)),
        ("sigmoid", flat_label, lambda b: lambda: b.sigmoid(flat)),
        ("relu", flat_label, lambda b: lambda: b.relu(flat)),
        ("exp", flat_label, lambda b: lambda: b.exp(flat)),
        ("log", flat_label, lambda b: lambda: b.log(positive)),
        ("square", flat_label, lambda b: lambda: b.square(flat)),
        ("tanh_grad", flat_label,
         lambda b: lambda: b.tanh_grad(flat, cotangent)),
        ("sigmoid_grad", flat_label,
         lambda b: lambda: b.sigmoid_grad(flat, cotangent)),
        ("softmax_rows", grid_label,
         lambda b: lambda: b.softmax_rows(matrix)),
        ("softmax_rows masked", grid_label,
         lambda b: lambda: b.softmax_rows(matrix, keep)),
        ("softmax_rows_grad", grid_label,
         lambda b: lambda: b.softmax_rows_grad(probs, matrix)),
        ("adam_update", flat_label, adam_case),
    ]


def _model_step_case():
    rng = np.random.default_rng(1)
    table = EmbeddingTable.random_init(
        [f"w{i}" for i in range(50)], dim=64, seed=1)
    config = ModelConfig.for_variant(
        "eve-image", embed_dim=64, hidden_size=64, attn_dim=64,
        fusion_width=64, classifier_hidden=64, region_dim=64, seed=2)
    model = VEModel(config, table)
    indices = model.embedding.lookup(tuple(f"w{i}" for i in range(12)))
    regions = rng.uniform(-1.0, 1.0, size=(36, 64)).astype(np.float32)

    def factory(backend):
        def call():
            kernels.active = backend
            model.zero_grad()
            with ComputationRecord() as record:
                loss = cross_entropy(model.forward(indices, regions), 2)
            backward(loss, record)

        return call

    return ("model forward+backward", "L=12 N=36 dims=64", factory)


def run(elements, rows, cols, repeats):
    backends = {"numpy": NumpyKernels()}
    try:
        backends["native"] = select_backend("native")
    except ImportError:
        print("compiled extension not built; timing the numpy fallback only")

    cases = _kernel_cases(elements, rows, cols) + [_model_step_case()]
    results = []
    saved = kernels.active
    try:
        for name, size, factory in cases:
            row = {"kernel": name, "size": size}
            for backend_name, backend in backends.items():
                row[backend_name] = _median_ms(factory(backend), repeats)
            if "native" in row:
                row["speedup"] = row["numpy"] / row["native"]
            results.append(row)
    finally:
        kernels.active = saved
    return results


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--elements", type=int, default=262144,
                        help="flat buffer length for elementwise kernels")
    parser.add_argument("--rows", type=int, default=512,
                        help="softmax row count")
    parser.add_argument("--cols", type=int, default=256,
                        help="softmax row width")
    parser.add_argument("--repeats", type=int, default=30,
                        help="timed calls per kernel (median reported)")
    parser.add_argument("--json", help="also write results to this path")
    args = parser.parse_args()

    results = run(args.elements, args.rows, args.cols, args.repeats)
    have_native = any("native" in row for row in results)
    header = f"{'kernel':24s}  {'size':16s}  {'numpy ms':>9s}"
    if have_native:
        header += f"  {'native ms':>9s}  {'speedup':>7s}"
    print(header)
    print("-" * len(header))
    for row in results:
        line = f"{row['kernel']:24s}  {row['size']:16s}  {row['numpy']:9.3f}"
        if "native" in row:
            line += f"  {row['native']:9.3f}  {row['speedup']:6.2f}x"
        print(line)
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(results, fh, indent=2, sort_keys=True)
            fh.write("\n")


if __name__ == "__main__":
    main()
