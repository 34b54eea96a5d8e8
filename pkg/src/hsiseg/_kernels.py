"""Numba kernels for the sampling hot loops.

Every kernel derives one RNG stream per read from (mixed seed XOR
read-index), so results are independent of any execution order over reads
and reproducible for a fixed seed. The seed is mixed before the XOR:
adjacent raw seeds would otherwise produce permutations of each other's
stream sets, which aggregation cannot tell apart. The generator is
xorshift64*, seeded through a splitmix64 mix; uniforms are the top 53 bits
scaled to [0, 1).
"""

from __future__ import annotations

import numba as nb
import numpy as np

_U64 = np.uint64
_MASK = _U64(0xFFFFFFFFFFFFFFFF)
_TWO_NEG53 = 1.1102230246251565e-16  # 2**-53


@nb.njit(cache=True, inline="always")
def _mix64(x):
    # splitmix64 finalizer
    x = (x + _U64(0x9E3779B97F4A7C15)) & _MASK
    x = ((x ^ (x >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)) & _MASK
    x = ((x ^ (x >> _U64(27))) * _U64(0x94D049BB133111EB)) & _MASK
    return x ^ (x >> _U64(31))


@nb.njit(cache=True, inline="always")
def _read_state(seed, read_index):
    s = _mix64(_mix64(_U64(seed)) ^ _U64(read_index))
    if s == _U64(0):
        s = _U64(0x106689D45497FDB5)
    return s


@nb.njit(cache=True, inline="always")
def _next_unit(s):
    # xorshift64* step -> (state, uniform in [0, 1))
    s ^= s >> _U64(12)
    s ^= (s << _U64(25)) & _MASK
    s ^= s >> _U64(27)
    x = (s * _U64(0x2545F4914F6CDD1D)) & _MASK
    return s, (x >> _U64(11)) * _TWO_NEG53


@nb.njit(cache=True)
def gibbs_table_kernel(table_h, table_v, n_visible, n_hidden, sweeps, num_reads, seed, out):
    """Block Gibbs chains driven by precomputed conditional tables.

    table_h[(j << n_visible) + v_pattern] = P(h_j = 1 | v); table_v analogous.
    Only usable while both layer sizes stay small enough to enumerate.
    """
    for r in range(num_reads):
        s = _read_state(seed, r)
        vidx = 0
        for i in range(n_visible):
            s, u = _next_unit(s)
            if u < 0.5:
                vidx |= 1 << i
        hidx = 0
        for _ in range(sweeps):
            hidx = 0
            for j in range(n_hidden):
                s, u = _next_unit(s)
                if u < table_h[(j << n_visible) + vidx]:
                    hidx |= 1 << j
            vidx = 0
            for i in range(n_visible):
                s, u = _next_unit(s)
                if u < table_v[(i << n_hidden) + hidx]:
                    vidx |= 1 << i
        for i in range(n_visible):
            out[r, i] = (vidx >> i) & 1
        for j in range(n_hidden):
            out[r, n_visible + j] = (hidx >> j) & 1


@nb.njit(cache=True)
def gibbs_general_kernel(weights, a, b, sweeps, num_reads, seed, out):
    """Block Gibbs chains computing conditionals directly (any layer sizes)."""
    n_visible, n_hidden = weights.shape
    v = np.zeros(n_visible, np.uint8)
    h = np.zeros(n_hidden, np.uint8)
    for r in range(num_reads):
        s = _read_state(seed, r)
        for i in range(n_visible):
            s, u = _next_unit(s)
            v[i] = 1 if u < 0.5 else 0
        for _ in range(sweeps):
            for j in range(n_hidden):
                arg = b[j]
                for i in range(n_visible):
                    if v[i]:
                        arg += weights[i, j]
                p = 1.0 / (1.0 + np.exp(-arg))
                s, u = _next_unit(s)
                h[j] = 1 if u < p else 0
            for i in range(n_visible):
                arg = a[i]
                for j in range(n_hidden):
                    if h[j]:
                        arg += weights[i, j]
                p = 1.0 / (1.0 + np.exp(-arg))
                s, u = _next_unit(s)
                v[i] = 1 if u < p else 0
        for i in range(n_visible):
            out[r, i] = v[i]
        for j in range(n_hidden):
            out[r, n_visible + j] = h[j]


@nb.njit(cache=True)
def sa_kernel(linear, coupling, betas, num_restarts, num_reads, seed, out):
    """Single-flip Metropolis over a QUBO with a per-read geometric beta ramp.

    coupling is the symmetric off-diagonal matrix (zero diagonal); local
    fields are maintained incrementally so a flip costs O(n).
    """
    n = linear.shape[0]
    x = np.zeros(n, np.uint8)
    fields = np.zeros(n, np.float64)
    for r in range(num_reads):
        s = _read_state(seed, r)
        for i in range(n):
            s, u = _next_unit(s)
            x[i] = 1 if u < 0.5 else 0
        for i in range(n):
            f = linear[i]
            for j in range(n):
                if x[j]:
                    f += coupling[i, j]
            fields[i] = f
        for _ in range(num_restarts):
            for t in range(betas.shape[0]):
                beta = betas[t]
                for i in range(n):
                    delta = fields[i] if x[i] == 0 else -fields[i]
                    accept = delta <= 0.0
                    if not accept:
                        s, u = _next_unit(s)
                        accept = u < np.exp(-beta * delta)
                    if accept:
                        if x[i] == 0:
                            x[i] = 1
                            for j in range(n):
                                fields[j] += coupling[i, j]
                        else:
                            x[i] = 0
                            for j in range(n):
                                fields[j] -= coupling[i, j]
        for i in range(n):
            out[r, i] = x[i]
