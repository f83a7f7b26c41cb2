"""Time the numba and numpy local-bound kernels on random Bell functionals.

Run with ``python3 benchmarks/bench_local_bound.py``. Sizes are
(inputs per party, outcomes per party); the enumeration covers
n_outcomes ** n_inputs deterministic strategies for Alice.
"""

import argparse
import time

import numpy as np

from bellcat import _kernels

SIZES = [(2, 2), (3, 2), (4, 3), (6, 2), (8, 2), (10, 2), (6, 4)]


def best_of(fn, coeffs, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn(coeffs)
        times.append(time.perf_counter() - t0)
    return min(times), result


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    if _kernels.local_bound_numba is None:
        print("numba path unavailable (disabled or not installed); nothing to compare")
        return 1

    rng = np.random.default_rng(args.seed)
    # warm up the jit so compile time stays out of the table
    _kernels.local_bound_numba(rng.normal(size=(2, 2, 2, 2)))

    print(f"{'inputs':>6} {'outcomes':>8} {'strategies':>10} {'numpy [s]':>11} {'numba [s]':>11} {'speedup':>8} {'|diff|':>9}")
    for nX, nA in SIZES:
        coeffs = rng.normal(size=(nX, nX, nA, nA))
        t_np, (v_np, a_np, b_np) = best_of(_kernels.local_bound_numpy, coeffs, args.repeat)
        t_nb, (v_nb, a_nb, b_nb) = best_of(_kernels.local_bound_numba, coeffs, args.repeat)
        diff = abs(v_np - v_nb)
        assert diff <= 1e-9, (nX, nA, v_np, v_nb)
        print(f"{nX:>6} {nA:>8} {nA**nX:>10} {t_np:>11.2e} {t_nb:>11.2e} {t_np / t_nb:>8.1f} {diff:>9.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
