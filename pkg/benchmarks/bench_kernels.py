"""Benchmark the compiled kernels against the numpy fallback on
training-realistic shapes (length-1000 sequences, the default conv stack).

    python3 benchmarks/bench_kernels.py [--repeats 50]
"""

import argparse
import time

import numpy as np

from dtadyn.kernels import numpy_backend

try:
    from dtadyn.kernels import _ckernels
except ImportError:
    _ckernels = None


def timeit(fn, repeats):
    fn()  # warm up
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_case(name, make_args, call, repeats):
    args = make_args()
    rows = []
    backends = [("numpy", numpy_backend)]
    if _ckernels is not None:
        backends.append(("cython", _ckernels))
    times = {}
    for backend_name, backend in backends:
        times[backend_name] = timeit(lambda: call(backend, *args), repeats)
    base = times["numpy"]
    for backend_name, elapsed in times.items():
        rows.append((name, backend_name, elapsed * 1e3, base / elapsed))
    return rows


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=50)
    options = parser.parse_args()
    r = np.random.default_rng(0)

    seq_len, embed = 1000, 64
    cases = []

    def conv_args(c_in, c_out, n, k=7, dilation=4):
        return (
            r.normal(size=(c_in, n)),
            r.normal(size=(c_out, c_in, k)),
            r.normal(size=c_out),
            dilation,
        )

    cases.append(bench_case(
        "conv1d fwd 64ch->32ch N=1000 K=7 D=4",
        lambda: conv_args(embed, 32, seq_len),
        lambda b, s, w, bias, d: b.conv1d_dilated_forward(s, w, bias, d),
        options.repeats,
    ))

    def conv_bwd_args():
        s, w, bias, d = conv_args(embed, 32, seq_len)
        n_out = seq_len - 6 * d
        return s, w, d, r.normal(size=(32, n_out))

    cases.append(bench_case(
        "conv1d bwd 64ch->32ch N=1000 K=7 D=4",
        conv_bwd_args,
        lambda b, s, w, d, g: b.conv1d_dilated_backward(s, w, d, g),
        options.repeats,
    ))

    def scatter_args():
        ids = r.integers(0, 26, size=seq_len)
        return (
            np.zeros((26, embed)),
            ids.astype(np.int64),
            r.normal(size=(seq_len, embed)),
        )

    cases.append(bench_case(
        "embedding scatter-add 1000x64 -> 26x64",
        scatter_args,
        lambda b, t, i, rows: b.scatter_add_rows(t, i, rows),
        options.repeats,
    ))

    cases.append(bench_case(
        "column max 946x64",
        lambda: (np.ascontiguousarray(r.normal(size=(946, embed))),),
        lambda b, x: b.column_max(x),
        options.repeats,
    ))

    print(f"{'case':42s} {'backend':8s} {'best ms':>9s} {'vs numpy':>9s}")
    for rows in cases:
        for name, backend_name, ms, speedup in rows:
            print(f"{name:42s} {backend_name:8s} {ms:9.3f} {speedup:8.2f}x")
    if _ckernels is None:
        print("\ncompiled extension not built; numpy fallback only "
              "(run `python setup.py build_ext --inplace`)")


if __name__ == "__main__":
    main()
