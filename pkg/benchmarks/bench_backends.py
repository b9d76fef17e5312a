"""Compare the compiled and pure-Python backends on representative workloads.

Run:  python3 benchmarks/bench_backends.py [--repeat N]

Workloads: batched feedforward over all states of a 12-variable model,
the exact expected-kernel recursion on grid-model circuit pairs, and a
collapsed-Gram clamped batch. Results from both backends are checked to
agree before timings are reported.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from circuitkernels import enumerate_states
from circuitkernels._core import _fast, pybackend
from circuitkernels.compilation import compile_from_factors
from circuitkernels.kernels import build_hamming_kc, build_rbf_kc
from circuitkernels.models import build_ising


def _time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return out, best


def _feedforward_inputs(pc, X):
    f = pc.flat
    V = np.zeros((f.kind.shape[0], X.shape[0]))
    for u in range(f.kind.shape[0]):
        if f.kind[u] == 0:
            V[u] = f.lw[f.lw_off[u] + X[:, f.var[u]]]
    return f, V


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    if _fast is None:
        raise SystemExit("compiled backend is not built; nothing to compare")

    rows = []

    pc = compile_from_factors(build_ising(3, 4, seed=7), normalize=True)
    X = enumerate_states(pc.domain)
    f, V0 = _feedforward_inputs(pc, X)

    def run_ff(be):
        V = V0.copy()
        be.feedforward(f.kind, f.ch_off, f.ch, f.wt, V)
        return V[f.root]

    r_py, t_py = _time(lambda: run_ff(pybackend), args.repeat)
    r_fa, t_fa = _time(lambda: run_ff(_fast), args.repeat)
    assert np.array_equal(r_py, r_fa)
    rows.append(("feedforward 12 vars x 4096 states", t_py, t_fa))

    pa = compile_from_factors(build_ising(4, 4, seed=1), normalize=True)
    pb = compile_from_factors(build_ising(4, 4, seed=2), normalize=True)
    kh = build_hamming_kc(pa.domain, pa.vtree)
    r_py, t_py = _time(lambda: pybackend.expected_kernel_scalar(pa.flat, pb.flat, kh.flat), args.repeat)
    r_fa, t_fa = _time(lambda: _fast.expected_kernel_scalar(pa.flat, pb.flat, kh.flat), args.repeat)
    assert r_py == r_fa
    rows.append(("expected kernel 4x4 grid pair", t_py, t_fa))

    kr = build_rbf_kc(pa.domain, pa.vtree, gamma=0.5)
    rng = np.random.default_rng(0)
    s = list(range(8))
    ev = rng.integers(0, 2, size=(40, len(s))).astype(np.int64)
    pairs = [(i, j) for i in range(40) for j in range(i, 40)]
    r_py, t_py = _time(lambda: pybackend.clamped_ek_batch(pa.flat, kr.flat, s, ev, pairs), args.repeat)
    r_fa, t_fa = _time(lambda: _fast.clamped_ek_batch(pa.flat, kr.flat, s, ev, pairs), args.repeat)
    assert np.allclose(r_py[0], r_fa[0], rtol=0, atol=0)
    rows.append(("clamped batch 40 samples, 8 kept vars", t_py, t_fa))

    width = max(len(r[0]) for r in rows)
    print(f"{'workload':<{width}}  {'python':>10}  {'compiled':>10}  {'speedup':>8}")
    for name, t_py, t_fa in rows:
        print(f"{name:<{width}}  {t_py * 1e3:>8.2f}ms  {t_fa * 1e3:>8.2f}ms  {t_py / t_fa:>7.1f}x")


if __name__ == "__main__":
    main()
