"""Compare the compiled and numpy kernels on the hot paths.

Usage: python benchmarks/bench_kernels.py [--rows 10] [--repeat 200]
"""
import argparse
import timeit

import numpy as np

from lbpconv import LbpOptions, bound_matrix, init_messages, kernels, run
from lbpconv._layout import layout_of
from lbpconv.experiments import GridSpec, generate_grid


def bench(label, fn, repeat):
    t = min(timeit.repeat(fn, number=repeat, repeat=5)) / repeat
    print(f"  {label:<28s} {t * 1e6:10.1f} us")
    return t


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=10)
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()

    g = generate_grid(GridSpec(args.rows, args.rows, True, 0.0, 0.5, seed=1))
    lay = layout_of(g)
    lam = init_messages(g, "random", seed=0).values
    out = np.empty(lay.size)
    A = bound_matrix(g)
    v = np.random.default_rng(0).random(A.dim)
    # strongly frustrated couplings keep LBP iterating for the whole run
    hard = generate_grid(GridSpec(args.rows, args.rows, True, 0.0, 3.0, seed=1))
    print(f"{args.rows}x{args.rows} torus: {lay.num_edges} directed edges, {A.nnz} bound-matrix entries")
    results = {}
    for name, kern in kernels.BACKENDS.items():
        print(f"backend {name}")
        kern.lbp_update(lay, lam, out, 0.0)  # warm caches
        results[name] = (
            bench("lbp_update", lambda: kern.lbp_update(lay, lam, out, 0.0), args.repeat),
            bench("quotient_residual", lambda: kern.quotient_residual(out, lam, lay.msg_off), args.repeat),
            bench("csr_matvec", lambda: kern.csr_matvec(A.indptr, A.indices, A.data, v), args.repeat),
            bench("full run (200 iters)",
                  lambda: run(hard, LbpOptions(max_iters=200, init="random"), backend=name), max(1, args.repeat // 100)),
        )
    if len(results) == 2:
        speed = np.array(results["python"]) / np.array(results["cython"])
        print("speed-up (python / cython): " + ", ".join(f"{s:.1f}x" for s in speed))


if __name__ == "__main__":
    main()
