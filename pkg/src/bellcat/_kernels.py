"""Hot loops for deterministic-strategy enumeration.

Two implementations of the same contract live here: a numba ``@njit`` path
and a vectorised numpy path. Set ``BELLCAT_DISABLE_NUMBA=1`` (or run
without numba installed) to force the numpy path. Both must return the
same maximum and the same tie-broken argmax.
"""

from __future__ import annotations

import os

import numpy as np

TIE_TOL = 1e-12

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and os.environ.get("BELLCAT_DISABLE_NUMBA", "") not in ("1", "true", "yes")


def strategy_table(n_inputs: int, n_outcomes: int) -> np.ndarray:
    """All deterministic response functions, lexicographic order.

    Row ``s`` holds the outcome for each input; input 0 is the most
    significant digit.
    """
    count = n_outcomes**n_inputs
    idx = np.arange(count)
    out = np.empty((count, n_inputs), dtype=np.int64)
    for x in range(n_inputs - 1, -1, -1):
        out[:, x] = idx % n_outcomes
        idx = idx // n_outcomes
    return out


def _bob_best_numpy(coeffs: np.ndarray, alice: np.ndarray, chunk: int = 4096):
    """Best Bob reply for every Alice strategy, vectorised in chunks."""
    nX, nY, nA, nB = coeffs.shape
    n_alice = alice.shape[0]
    values = np.empty(n_alice)
    replies = np.empty((n_alice, nY), dtype=np.int64)
    xs = np.arange(nX)
    for start in range(0, n_alice, chunk):
        a = alice[start : start + chunk]
        # w[s, y, b] = sum_x coeffs[x, y, a_s(x), b]
        w = coeffs[xs[None, :], :, a, :].sum(axis=1)
        best_b = np.argmax(w, axis=2)
        replies[start : start + chunk] = best_b
        values[start : start + chunk] = np.take_along_axis(w, best_b[:, :, None], axis=2)[:, :, 0].sum(axis=1)
    return values, replies


def local_bound_numpy(coeffs: np.ndarray):
    nX, nY, nA, nB = coeffs.shape
    alice = strategy_table(nX, nA)
    values, replies = _bob_best_numpy(coeffs, alice)
    best = values.max()
    s = int(np.flatnonzero(values >= best - TIE_TOL)[0])
    return float(best), alice[s].copy(), replies[s].copy()


if USE_NUMBA:

    @numba.njit(cache=True)
    def _local_bound_jit(coeffs):
        nX, nY, nA, nB = coeffs.shape
        n_alice = nA**nX
        values = np.empty(n_alice)
        a = np.zeros(nX, dtype=np.int64)
        w = np.empty(nB)
        for s in range(n_alice):
            rem = s
            for x in range(nX - 1, -1, -1):
                a[x] = rem % nA
                rem //= nA
            total = 0.0
            for y in range(nY):
                for b in range(nB):
                    acc = 0.0
                    for x in range(nX):
                        acc += coeffs[x, y, a[x], b]
                    w[b] = acc
                total += w.max()
            values[s] = total
        best = values.max()
        winner = 0
        for s in range(n_alice):
            if values[s] >= best - 1e-12:
                winner = s
                break
        rem = winner
        for x in range(nX - 1, -1, -1):
            a[x] = rem % nA
            rem //= nA
        reply = np.zeros(nY, dtype=np.int64)
        for y in range(nY):
            for b in range(nB):
                acc = 0.0
                for x in range(nX):
                    acc += coeffs[x, y, a[x], b]
                w[b] = acc
            reply[y] = np.argmax(w)
        return best, a.copy(), reply

    def local_bound_numba(coeffs: np.ndarray):
        best, a, b = _local_bound_jit(np.ascontiguousarray(coeffs, dtype=np.float64))
        return float(best), a, b

    local_bound_kernel = local_bound_numba
else:
    local_bound_numba = None
    local_bound_kernel = local_bound_numpy
