"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both backends are imported directly so one process can compare them; the
outputs are checked for bitwise equality before any timing is reported.
"""

import argparse
import timeit

import numpy as np

from triplet_nn import _fallback

try:
    from triplet_nn import _kernels
except ImportError:  # extension not built
    _kernels = None


def workloads(rng):
    X = rng.normal(size=(20_000, 16))
    ids = np.arange(X.shape[0], dtype=np.int64)
    C = rng.integers(0, 4, size=(20_000, 24)).astype(np.int32)
    Q = rng.normal(size=(200, 16))
    skip = np.full(200, -1, dtype=np.int64)
    D = np.concatenate([[0.0], np.sort(rng.random(20_000))])  # includes the centre itself
    small = rng.normal(size=(2_000, 3))
    centres = np.arange(0, 2_000, 10, dtype=np.int64)
    return {
        "euclid_dists": lambda k: k.euclid_dists(X, ids, X[0]),
        "hamming_dists": lambda k: k.hamming_dists(C, ids, C[0]),
        "closer_mask_euclid": lambda k: k.closer_mask_euclid(X, ids, 1, 2),
        "nearest_euclid": lambda k: k.nearest_euclid(X, Q, skip),
        "expansion_ratio_sorted": lambda k: k.expansion_ratio_sorted(D),
        "expansion_rates_euclid": lambda k: k.expansion_rates_euclid(small, centres),
    }


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    a, b = np.asarray(a), np.asarray(b)
    return a.shape == b.shape and a.tobytes() == b.tobytes()


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; run `python3 setup.py build_ext --inplace` first")
        return 1
    print(f"{'kernel':<24}{'fallback ms':>13}{'cython ms':>11}{'speedup':>9}  equal")
    for name, call in workloads(np.random.default_rng(args.seed)).items():
        eq = same(call(_fallback), call(_kernels))
        t_py = min(timeit.repeat(lambda: call(_fallback), number=1, repeat=args.repeat)) * 1e3
        t_cy = min(timeit.repeat(lambda: call(_kernels), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<24}{t_py:>13.2f}{t_cy:>11.2f}{t_py / t_cy:>8.1f}x  {eq}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
