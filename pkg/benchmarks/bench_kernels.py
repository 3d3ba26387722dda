"""Compiled kernels against the numpy fallback on the same inputs.

    python3 benchmarks/bench_kernels.py [--rows 2000] [--repeat 5]

Prints the best-of-``repeat`` wall time of each kernel under both backends
and the speed-up. Skips the compiled column when the extension is not built.
"""
import argparse
import time

import numpy as np

from pqlift import _kernels
from pqlift._kernels import _fallback
from pqlift.assumption import toy_gl
from pqlift.persistence import PersistentSolver, initial_ket
from pqlift.rng import kernel_key
from pqlift.solver import zoo


def raw_case(R, n, seed=0):
    P = toy_gl()
    B = zoo(P)["duplicate-detecting"]
    rng = np.random.default_rng(seed)
    xs = np.array([[P.generate(int(r)) for r in rng.integers(0, 256, n)] for _ in range(R)])
    keys = np.ascontiguousarray(B.bank_indices(np.broadcast_to(np.arange(1, n + 1), xs.shape), xs))
    psi = np.tile(B.initial_branches()[0][2], (R, 1)).astype(complex)
    rk = np.array([kernel_key(rng) for _ in range(R)], dtype=np.uint64)
    rec = np.tile(np.array([0, n // 2, n]), (R, 1)).astype(np.int64)

    def run(mod):
        ctr = np.zeros(R, dtype=np.uint64)
        mod.walk_raw(B.bank, keys, psi.copy(), B.d_out, rk.copy(), ctr, rec)
    return run


def persisted_cases(R, n, seed=1):
    P = toy_gl()
    S = PersistentSolver(P, zoo(P)["use-once"], 0.1)
    op = S.op
    rng = np.random.default_rng(seed)
    xs = np.array([[P.generate(int(r)) for r in rng.integers(0, 256, n)] for _ in range(R)])
    xk = np.ascontiguousarray(S.bank_indices(xs))
    psi = np.stack([initial_ket(S.B, rng)[1] for _ in range(R)])
    rk = np.array([kernel_key(rng) for _ in range(R)], dtype=np.uint64)
    rec = np.full((R, 1), n, dtype=np.int64)

    def valest(mod):
        mod.valest_exact(op.V, op.level, op.levels, psi.copy(), rk.copy(),
                         np.zeros(R, dtype=np.uint64))

    def walk(mod):
        p, ctr = psi.copy(), np.zeros(R, dtype=np.uint64)
        mod.valest_exact(op.V, op.level, op.levels, p, rk.copy(), ctr)
        mod.walk_persisted(op.V, op.level, op.levels, S._ubank, S._gbank, xk, p,
                           np.zeros(R, dtype=np.int64), S.eta, rk.copy(), ctr, rec)
    return valest, walk


def best(fn, mod, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(mod)
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=2000)
    ap.add_argument("--steps", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    valest, walk = persisted_cases(args.rows, args.steps)
    cases = [("walk_raw", raw_case(args.rows, args.steps)), ("valest_exact", valest),
             ("walk_persisted", walk)]
    core = _kernels.compiled_kernels
    print(f"{args.rows} rows, {args.steps} steps, best of {args.repeat}")
    print(f"{'kernel':<16}{'python [s]':>12}{'compiled [s]':>14}{'speed-up':>10}")
    for name, fn in cases:
        tp = best(fn, _fallback, args.repeat)
        if core is None:
            print(f"{name:<16}{tp:>12.4f}{'n/a':>14}{'':>10}")
            continue
        tc = best(fn, core, args.repeat)
        print(f"{name:<16}{tp:>12.4f}{tc:>14.4f}{tp / tc:>9.1f}x")


if __name__ == "__main__":
    main()
