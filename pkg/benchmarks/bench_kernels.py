"""Timing harness for the per-support trace kernels.

Runs the numpy and (when importable) numba implementations of the two hot
loops on full enumeration ensembles at a couple of representative sizes and
prints mean +/- std over repeats.  Warm-up calls are excluded so the numba
numbers do not include compilation.

Usage: python3 benchmarks/bench_kernels.py [--repeats 20]
"""

import argparse
import time

import numpy as np

from csdesign import _kernels
from csdesign.model import SupportEnsemble, SystemModel, exponential_correlation
from csdesign.metrics import _spd_inverse, observation_information

CASES = [
    dict(n=36, k=3, m=18, rho=0.25),
    dict(n=24, k=4, m=12, rho=0.5),
]


def build(case):
    model = SystemModel(
        n=case["n"], k=case["k"], m=case["m"],
        r=exponential_correlation(case["k"], case["rho"]),
        g=0.5, sigma_v=0.0, sigma_w=0.1, p=10.0,
    )
    ensemble = SupportEnsemble.full(model.n, model.k)
    rng = np.random.default_rng(0)
    a = rng.standard_normal((model.m, model.l))
    info = observation_information(model, a)
    base_inv = _spd_inverse(model.r, "r")
    return info, ensemble.supports, base_inv, model.n


def timeit(fn, args, repeats):
    fn(*args)  # warm-up (and jit compile)
    samples = np.empty(repeats)
    for i in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        samples[i] = time.perf_counter() - t0
    return samples.mean() * 1e3, samples.std() * 1e3


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()

    impls = [("numpy", _kernels._terms_numpy, _kernels._terms_scatter_numpy)]
    try:
        impls.append(("numba", _kernels._terms_numba, _kernels._terms_scatter_numba))
    except AttributeError:
        print("numba implementation unavailable; timing numpy only")

    for case in CASES:
        info, supports, base_inv, n = build(case)
        print(
            f"N={case['n']} K={case['k']} "
            f"({supports.shape[0]} supports, backend selected: {_kernels.BACKEND})"
        )
        for name, terms_fn, scatter_fn in impls:
            mean, std = timeit(terms_fn, (info, supports, base_inv), args.repeats)
            print(f"  {name:6s} trace terms      {mean:8.3f} +- {std:.3f} ms")
            mean, std = timeit(scatter_fn, (info, supports, base_inv, n), args.repeats)
            print(f"  {name:6s} terms + scatter  {mean:8.3f} +- {std:.3f} ms")
        ref = impls[0][1](info, supports, base_inv)
        for name, terms_fn, _ in impls[1:]:
            dev = np.max(np.abs(terms_fn(info, supports, base_inv) - ref))
            print(f"  max |{name} - numpy| on trace terms: {dev:.3e}")


if __name__ == "__main__":
    main()
