"""Timing comparison of the compiled and numpy recurrent kernels.

Runs the GRU forward/backward pair on a few (sequence length, hidden size)
shapes typical of desk-scale dialogue models and prints a table of
per-call times plus the speedup of the compiled extension over the
reference implementation.

Usage::

    python benchmarks/bench_kernels.py [--repeats N] [--dtype f32|f64]
"""

import argparse
import time

import numpy as np

from iatdial.kernels import reference

try:
    from iatdial.kernels import _recurrent
except ImportError:
    _recurrent = None

SHAPES = [
    # (T, embed, hidden)
    (8, 32, 64),
    (16, 32, 64),
    (32, 32, 64),
    (16, 64, 128),
    (64, 64, 128),
]


def _time_backend(module, wh, xg, h0, dh, repeats):
    best_fwd = float("inf")
    best_bwd = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        hs, zrc, hc = module.gru_forward(wh, xg, h0)
        t1 = time.perf_counter()
        module.gru_backward(wh, hs, zrc, hc, dh)
        t2 = time.perf_counter()
        best_fwd = min(best_fwd, t1 - t0)
        best_bwd = min(best_bwd, t2 - t1)
    return best_fwd, best_bwd


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=200)
    parser.add_argument("--dtype", choices=("f32", "f64"), default="f32")
    args = parser.parse_args()
    dtype = np.float32 if args.dtype == "f32" else np.float64

    if _recurrent is None:
        print("compiled extension not available; timing reference only")
    rng = np.random.default_rng(0)
    header = f"{'shape (T,E,H)':>16} {'numpy fwd+bwd':>14} {'cython fwd+bwd':>15} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for T, E, H in SHAPES:
        wh = rng.standard_normal((H, 3 * H)).astype(dtype) * 0.1
        xg = rng.standard_normal((T, 3 * H)).astype(dtype)
        h0 = np.zeros(H, dtype=dtype)
        dh = rng.standard_normal((T, H)).astype(dtype)
        ref_fwd, ref_bwd = _time_backend(reference, wh, xg, h0, dh, args.repeats)
        ref_total = ref_fwd + ref_bwd
        row = f"{f'({T},{E},{H})':>16} {ref_total * 1e6:>11.1f} us"
        if _recurrent is not None:
            cy_fwd, cy_bwd = _time_backend(_recurrent, wh, xg, h0, dh, args.repeats)
            cy_total = cy_fwd + cy_bwd
            row += f" {cy_total * 1e6:>12.1f} us {ref_total / cy_total:>7.2f}x"
        print(row)


if __name__ == "__main__":
    main()
