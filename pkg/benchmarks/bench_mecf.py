"""Compare the compiled and numpy correlation-stack kernels.

    python benchmarks/bench_mecf.py [--length 3000] [--nodes 20] [--d-max 64]
"""
import argparse
import timeit

import numpy as np

from foloc import mecf


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--length", type=int, default=3000)
    ap.add_argument("--nodes", type=int, default=20)
    ap.add_argument("--d-max", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    X = np.cumsum(np.random.default_rng(0).normal(size=(args.nodes, args.length)), axis=1)
    backends = ["python"] + (["cython"] if mecf.BACKEND == "cython" else [])
    times = {}
    for name in backends:
        kernel = mecf.get_kernel(name)
        run = lambda: [kernel(x, 3, 2, 3, args.d_max) for x in X]  # noqa: E731
        times[name] = min(timeit.repeat(run, number=1, repeat=args.repeat)) / args.nodes
        print(f"{name:>7}: {1e3 * times[name]:8.2f} ms per series "
              f"(T={args.length}, d_max={args.d_max})")
    if len(times) == 2:
        G1, _ = mecf.get_kernel("python")(X[0], 3, 2, 3, args.d_max)
        G2, _ = mecf.get_kernel("cython")(X[0], 3, 2, 3, args.d_max)
        print(f"speed-up {times['python'] / times['cython']:.1f}x, max |diff| {np.max(np.abs(G1 - G2)):.1e}")
    else:
        print("compiled kernel not built; only the numpy backend was timed")


if __name__ == "__main__":
    main()
