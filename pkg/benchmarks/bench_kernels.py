"""Compare the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--n 2000] [--sweeps 20] [--repeat 3]

Both backends receive the same pre-drawn random numbers, so each row also
reports whether their outputs agree.
"""
import argparse
import time

import numpy as np

from treeising import _fallback
from treeising.graph import random_regular_graph, random_tree
from treeising.tree_ising import tree_structure

try:
    from treeising import _kernels
except ImportError:
    _kernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_glauber(mod, g, beta, sites, unif, sweeps):
    def go():
        spins = np.ones(g.n, dtype=np.int8)
        mags = np.empty(sweeps, dtype=np.int64)
        edges = np.empty(sweeps, dtype=np.int64)
        mod.glauber_run(spins, g.indptr, g.indices, beta, np.zeros(g.n), sites, unif, sweeps,
                        mags, edges, g.n, len(g.edges))
        return spins, mags, edges
    return go


def bench_bp(mod, order, parent, fields, beta):
    def go():
        h_up, acc = mod.bp_upward(order, parent, fields, beta)
        return h_up, mod.bp_downward(order, parent, fields, beta, h_up, acc)
    return go


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--sweeps", type=int, default=20)
    ap.add_argument("--tree-size", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; only the fallback is available")
        return 1
    rng = np.random.default_rng(args.seed)
    beta = 0.8

    g = random_regular_graph(args.n, 3, rng)
    sites = rng.integers(0, g.n, size=g.n * args.sweeps, dtype=np.int64)
    unif = rng.random(g.n * args.sweeps)
    tree = random_tree(args.tree_size, rng)
    order, parent, _ = tree_structure(tree)
    fields = rng.normal(size=tree.n)
    h = rng.normal(scale=5.0, size=1_000_000)

    cases = [
        (f"glauber_run n={g.n} sweeps={args.sweeps}",
         lambda m: bench_glauber(m, g, beta, sites, unif, args.sweeps)),
        (f"bp up+down n={tree.n}", lambda m: bench_bp(m, order, parent, fields, beta)),
        (f"f_theta len={len(h)}", lambda m: (lambda: m.f_theta(h, beta))),
    ]
    print(f"{'kernel':<34}{'cython s':>12}{'python s':>12}{'speedup':>10}  agree")
    for name, make in cases:
        tc, oc = best_of(make(_kernels), args.repeat)
        tp, op = best_of(make(_fallback), args.repeat)
        oc = oc if isinstance(oc, tuple) else (oc,)
        op = op if isinstance(op, tuple) else (op,)
        agree = all(np.allclose(a, b, rtol=1e-12, atol=1e-12) for a, b in zip(oc, op))
        print(f"{name:<34}{tc:>12.4f}{tp:>12.4f}{tp / tc:>10.1f}  {agree}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
