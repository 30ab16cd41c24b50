"""Time the compiled simulation kernel against the pure-Python fallback.

Usage::

    python benchmarks/bench_kernels.py [--bins 200000] [--lags 50] [--repeat 3]

Both backends receive identical inputs; the script checks that their counts
agree before reporting the best-of-``repeat`` wall time of each.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from sepglm import _pykernels

try:
    from sepglm import _kernels
except ImportError:  # extension not built
    _kernels = None


def make_inputs(n_bins: int, n_lags: int, rate: float, seed: int):
    rng = np.random.default_rng(seed)
    hist = np.concatenate([[-np.inf, -3.0, -1.0], 0.5 * np.exp(-np.arange(4, n_lags + 1) / 8.0)])[:n_lags]
    base = np.log(rate) + rng.normal(scale=0.5, size=n_bins)
    return hist, base, rng.random(n_bins)


def best_time(fn, args, repeat: int) -> tuple[float, tuple]:
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--bins", type=int, default=200_000)
    ap.add_argument("--lags", type=int, default=50)
    ap.add_argument("--rate", type=float, default=0.01, help="baseline spikes per bin")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    hist, base, u = make_inputs(args.bins, args.lags, args.rate, args.seed)
    call = (hist, base, u, 1e4)
    t_py, (c_py, bad_py) = best_time(_pykernels.simulate_counts, call, args.repeat)
    print(f"python  {t_py:10.4f} s  ({args.bins} bins, {args.lags} lags, {int(c_py.sum())} spikes)")
    if _kernels is None:
        print("cython  not built (run `pip install --no-build-isolation -e .` to compile)")
        return 0
    t_cy, (c_cy, bad_cy) = best_time(_kernels.simulate_counts, call, args.repeat)
    if bad_cy != bad_py or not np.array_equal(c_cy, c_py):
        print("backends disagree", file=sys.stderr)
        return 1
    print(f"cython  {t_cy:10.4f} s  speed-up x{t_py / t_cy:.1f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
