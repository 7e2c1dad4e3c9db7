"""Compare the compiled and numpy GRU kernels on forward + backward.

    python benchmarks/bench_gru.py [--repeat 20]

Shapes cover the three places the recurrence runs: text tokens (stage I),
utterance sequences (stage II) and a larger stress shape.
"""
import argparse
import json
import time

import numpy as np

from hcam.numcore import _kernels

SHAPES = [  # (T, B, H)
    (8, 32, 32),     # token bi-GRU, batch of utterances
    (20, 8, 16),     # contextual GRU, batch of conversations
    (60, 16, 64),
    (200, 4, 32),    # long sequence, tiny batch: loop overhead dominates
]


def _inputs(T, B, H, dtype, rng):
    ax = rng.standard_normal((T, B, 3 * H)).astype(dtype)
    u = (rng.standard_normal((3 * H, H)) / np.sqrt(H)).astype(dtype)
    h0 = np.zeros((B, H), dtype=dtype)
    mask = np.ones((T, B), dtype=bool)
    mask[T // 2:, 0] = False
    dhs = rng.standard_normal((T, B, H)).astype(dtype)
    return ax, mask, u, h0, dhs


def _time(fn, repeat):
    fn()
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(repeat=20, dtype=np.float32):
    rng = np.random.default_rng(0)
    rows = []
    backends = _kernels.available_backends()
    for T, B, H in SHAPES:
        ax, mask, u, h0, dhs = _inputs(T, B, H, dtype, rng)
        row = {"T": T, "B": B, "H": H}
        outs = {}
        for name in backends:
            _kernels.set_backend(name)

            def step():
                hs, cache = _kernels.gru_forward(ax, mask, u, h0)
                return hs, _kernels.gru_backward(dhs, cache, mask, u)

            outs[name] = step()
            row[name + "_ms"] = 1e3 * _time(step, repeat)
        if "cython" in outs:
            row["speedup"] = row["python_ms"] / row["cython_ms"]
            row["max_abs_diff"] = float(max(np.abs(a - b).max() for a, b in
                                            zip([outs["python"][0], *outs["python"][1]],
                                                [outs["cython"][0], *outs["cython"][1]])))
        rows.append(row)
    _kernels.set_backend(backends[-1])
    return rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--json", action="store_true")
    args = ap.parse_args()
    rows = bench(args.repeat)
    if args.json:
        print(json.dumps(rows, indent=1))
        return
    print(f"backends: {_kernels.available_backends()}  (fp32, forward+backward, best of {args.repeat})")
    print(f"{'T':>4} {'B':>4} {'H':>4} {'python ms':>10} {'cython ms':>10} {'speedup':>8} {'max diff':>9}")
    for r in rows:
        print(f"{r['T']:>4} {r['B']:>4} {r['H']:>4} {r['python_ms']:>10.3f} "
              f"{r.get('cython_ms', float('nan')):>10.3f} {r.get('speedup', float('nan')):>8.2f} "
              f"{r.get('max_abs_diff', float('nan')):>9.1e}")


if __name__ == "__main__":
    main()
