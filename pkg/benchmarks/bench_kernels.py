"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--sizes 100 400 1600]
"""

import argparse
import timeit

import numpy as np

from riemcl import _kernels
from riemcl import manifold as M
from riemcl.curvnet import node_weights
from riemcl.graphstore import synth_sequence


def _graph(n, seed):
    spec = {"feature_dim": 2, "seed": seed, "tasks": [{"generator": "erdos_renyi", "n": n, "p": min(1.0, 8.0 / n)}]}
    return synth_sequence(spec)[0].load()


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench(sizes, repeat):
    backends = ["python"] + (["cython"] if _kernels.BACKEND == "cython" else [])
    rows = []
    for n in sizes:
        g = _graph(n, 0)
        indptr, indices = g.csr()
        w = node_weights(g)
        x = M.random_point(16, -1.0, np.random.default_rng(n), 0.7, size=n)
        for name, call in (
            ("forman_directed", lambda b: _kernels.forman_directed(indptr, indices, w, backend=b)),
            ("pairwise_distance", lambda b: _kernels.pairwise_distance(x, x, -1.0, backend=b)),
        ):
            times = {b: _best(lambda b=b: call(b), repeat) for b in backends}
            rows.append((name, n, times))
    return backends, rows


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--sizes", type=int, nargs="+", default=[100, 400, 1600])
    args = parser.parse_args()
    backends, rows = bench(args.sizes, args.repeat)
    if len(backends) == 1:
        print("compiled extension not built; timing the fallback only")
    header = f"{'kernel':<18} {'n':>6} " + " ".join(f"{b + ' (ms)':>13}" for b in backends)
    print(header + ("   speedup" if len(backends) == 2 else ""))
    for name, n, times in rows:
        line = f"{name:<18} {n:>6} " + " ".join(f"{times[b] * 1e3:>13.3f}" for b in backends)
        if len(backends) == 2:
            line += f"   {times['python'] / times['cython']:>6.1f}x"
        print(line)


if __name__ == "__main__":
    main()
