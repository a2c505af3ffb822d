"""Compare the numba and pure-numpy kernel paths.

Runs every hot kernel at an inference-like shape (single sequence /
short segment) and a training-like shape (wide batch), under
``SEQGAP_KERNELS=numba`` and ``SEQGAP_KERNELS=numpy``, and prints the
per-call times side by side. The ``auto`` dispatch policy in
``seqgap._kernels`` encodes the outcome of exactly this comparison:
JIT wins on narrow sequential work, numpy's vectorized tanh wins on
wide batches.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

CASES = {
    # name -> (T, B, d_in, c, d_out)
    "forward single": (50, 1, 30, 96, 30),
    "forward batch40": (50, 40, 30, 96, 30),
    "backward single": (50, 1, 30, 96, 30),
    "backward batch40": (50, 40, 30, 96, 30),
    "uni_bptt single": (50, 1, 30, 96, 30),
    "uni_bptt batch40": (50, 40, 30, 96, 30),
    "bi_bptt batch40": (50, 40, 30, 64, 30),
    "suffix_loglik a=30": (30, 30, 30, 96, 30),
    "segment g=5 chains": (5, 100, 30, 64, 30),
}


def run_case(name: str, repeats: int) -> float:
    import numpy as np

    from seqgap import _kernels as k

    t, b, d_in, c, d_out = CASES[name]
    rng = np.random.default_rng(0)
    x = rng.random((t, b, d_in))
    w_x = rng.uniform(-1, 1, (c, d_in))
    w_h = rng.uniform(-0.17, 0.17, (c, c))
    b_h = np.zeros(c)
    w_y = rng.uniform(-0.3, 0.3, (d_out, c))
    b_y = np.zeros(d_out)
    h0 = np.zeros((b, c))
    d_logits = rng.standard_normal((t, b, d_out)) * 1e-3

    if "forward" in name or "segment" in name:
        fn = lambda: k.recurrent_forward(h0, x, w_x, w_h, b_h)
    elif "backward" in name:
        fn = lambda: k.recurrent_backward(h0, x, w_x, w_h, b_h)
    elif "uni_bptt" in name:
        h = k.recurrent_forward(h0, x, w_x, w_h, b_h)
        fn = lambda: k.uni_bptt(x, h, d_logits, w_h, w_y)
    elif "bi_bptt" in name:
        hf = k.recurrent_forward(h0, x, w_x, w_h, b_h)
        hb = k.recurrent_backward(h0, x, w_x, w_h, b_h)
        w_h2 = rng.uniform(-0.17, 0.17, (c, c))
        w_y2 = rng.uniform(-0.3, 0.3, (d_out, c))
        fn = lambda: k.bi_bptt(x, hf, hb, d_logits, w_h, w_h2, w_y, w_y2)
    else:  # suffix log-likelihood over proposals
        h_prop = rng.standard_normal((b, c)) * 0.1
        x_common = x[:, 0, :].copy()
        targets = rng.integers(0, d_out, t)
        fn = lambda: k.categorical_suffix_loglik(
            h_prop, x_common, targets, w_x, w_h, b_h, w_y, b_y
        )

    fn()  # warm-up / JIT compile
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=200)
    ap.add_argument("--mode", choices=("numba", "numpy"), default=None,
                    help="internal: run one mode and emit JSON")
    args = ap.parse_args()

    if args.mode:
        results = {name: run_case(name, args.repeats) for name in CASES}
        print(json.dumps(results))
        return 0

    here = os.path.dirname(os.path.abspath(__file__))
    times = {}
    for mode in ("numba", "numpy"):
        env = dict(os.environ, SEQGAP_KERNELS=mode)
        out = subprocess.run(
            [sys.executable, os.path.join(here, "bench_kernels.py"),
             "--mode", mode, "--repeats", str(args.repeats)],
            capture_output=True, text=True, env=env, check=True,
        )
        times[mode] = json.loads(out.stdout.strip().splitlines()[-1])

    width = max(len(n) for n in CASES) + 2
    print(f"{'kernel / shape':<{width}} {'numba':>10} {'numpy':>10}  winner")
    for name in CASES:
        nb, np_ = times["numba"][name], times["numpy"][name]
        winner = "numba" if nb < np_ else "numpy"
        print(f"{name:<{width}} {nb * 1e6:>8.0f}us {np_ * 1e6:>8.0f}us  {winner}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
