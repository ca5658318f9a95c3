"""Compare the compiled and NumPy/SciPy kernel backends.

Times sparse matvec, one forward Gauss-Seidel sweep and one full AMLI
W-cycle application on 2D Poisson hierarchies of increasing size.

    python benchmarks/bench_kernels.py --levels 4 5 6 --repeat 5
"""
import argparse
import timeit

import numpy as np

from amli import _backend
from amli.hierarchy import CycleSpec, build_hierarchy, gen_poisson
from amli.precond import amli_apply


def best_time(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def bench(levels, n0, repeat):
    H = build_hierarchy(gen_poisson(2, levels + 1, n0), CycleSpec.w_cycle(levels))
    A = H.A
    x = np.random.default_rng(0).standard_normal(A.n)
    kernels = {
        "spmv": (lambda: A.matvec(x), 20),
        "gs_sweep": (lambda: A.lower_solve(x), 10),
        "amli_apply": (lambda: amli_apply(H, x), 2),
    }
    rows = []
    for name, (fn, number) in kernels.items():
        times = {}
        for backend in _backend.available():
            with _backend.use(backend):
                fn()  # warm-up
                times[backend] = best_time(fn, repeat, number)
        rows.append((A.n, A.nnz, name, times))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--levels", type=int, nargs="+", default=[4, 5, 6])
    ap.add_argument("--n0", type=int, default=4)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    names = _backend.available()
    if len(names) < 2:
        print("compiled extension not built; timing the python backend only")
    header = f"{'n':>8} {'nnz':>9} {'kernel':>11} " + " ".join(f"{b + ' [ms]':>15}" for b in names)
    if len(names) == 2:
        header += f" {'speedup':>8}"
    print(header)
    for L in args.levels:
        for n, nnz, name, times in bench(L, args.n0, args.repeat):
            line = f"{n:>8} {nnz:>9} {name:>11} " + " ".join(f"{1e3 * times[b]:>15.3f}" for b in names)
            if len(names) == 2:
                line += f" {times['python'] / times['compiled']:>7.2f}x"
            print(line)


if __name__ == "__main__":
    main()
