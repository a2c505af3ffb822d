"""Asymptotic cost checks for the gap-filling strategies.

The cached-context implementation gives the documented costs:

* Gibbs filling scales linearly in the number of MCMC steps M at fixed
  (d, c, T, g) - the per-step work is O(g(dc + c^2)) thanks to the
  cached flanking states;
* one exact-conditional Gibbs step costs roughly d times a plain
  conditional at matched sizes (every proposal value rolls out the
  remaining sequence);
* ordered one-pass reconstruction does g conditionals of O(g) work each
  after an O(T) setup, so it grows like T + g^2: effectively affine in
  g while gaps stay short relative to the sequence.

This script measures wall time over grids of M and g and prints the
ratios; it is a benchmark, not a test, because absolute timings wobble
with the machine.

Usage: python benchmarks/bench_complexity.py
"""

from __future__ import annotations

import time

import numpy as np

from seqgap.corpus import GapSpec
from seqgap.inference import ChainConfig, bayes_mcmc_fill, gsn_fill, nade_fill
from seqgap.models import init_bi, init_uni


def timed(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> int:
    rng = np.random.default_rng(0)
    d, c, t, g = 20, 48, 60, 5
    x = np.eye(d)[rng.integers(0, d, t)].astype(float)
    gap = GapSpec(25, g)

    bi = init_bi(d, d, c, rng)
    print("gsn_fill wall time vs M (expect ~linear):")
    base = None
    for m in (25, 50, 100, 200, 400):
        cfg = ChainConfig(mcmc_steps=m, n_chains=10, seed=1)
        dt = timed(lambda: gsn_fill(bi, x, gap, cfg))
        base = base or dt / m
        print(f"  M={m:>4}: {dt * 1e3:8.1f} ms   (x{dt / (base * m):.2f} of linear)")

    uni = init_uni(d, d, c, rng)
    print("bayes_mcmc_fill vs gsn_fill at matched sizes (expect ~d x): ")
    cfg = ChainConfig(mcmc_steps=50, n_chains=5, seed=1)
    dt_gsn = timed(lambda: gsn_fill(bi, x, gap, cfg))
    dt_bay = timed(lambda: bayes_mcmc_fill(uni, x, gap, cfg))
    print(f"  gsn {dt_gsn * 1e3:.1f} ms, bayes {dt_bay * 1e3:.1f} ms, ratio {dt_bay / dt_gsn:.1f} (d={d})")

    nade_model = init_bi(d + 1, d, c, rng)
    print("nade_fill wall time vs g (expect ~affine while g << T):")
    for gg in (2, 4, 8, 16):
        gap_g = GapSpec(20, gg)
        dt = timed(lambda: nade_fill(nade_model, x, gap_g, np.random.default_rng(2)))
        print(f"  g={gg:>3}: {dt * 1e6:8.0f} us")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
