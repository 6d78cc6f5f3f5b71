"""Compiled inner loops for packed sparse-hyperplane systems.

A packed system stores all row normals in CSR-style arrays
(``indptr``, ``indices``, ``data``) together with per-row offsets and
squared norms.  Everything here is sequential and runs in a fixed
order, so results are bit-reproducible across calls and processes.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def sweep_rows(x, order, indptr, indices, data, offset, norm_sq):
    """Exact orthogonal projections onto the listed rows, applied in order.

    Mutates ``x`` in place; callers own the copy semantics.
    """
    for n in range(order.shape[0]):
        i = order[n]
        lo = indptr[i]
        hi = indptr[i + 1]
        s = 0.0
        for p in range(lo, hi):
            s += data[p] * x[indices[p]]
        c = (s - offset[i]) / norm_sq[i]
        if c != 0.0:
            for p in range(lo, hi):
                x[indices[p]] -= c * data[p]


@njit(cache=True)
def block_step(x, resid, rows, indptr, indices, data, offset, norm_sq, r_max):
    """One averaged-projection block step, in place.

    Moves ``x`` by 1/r_max times the summed projection corrections of the
    block's rows; rows outside the block contribute the identity.  All
    correction coefficients are computed against the incoming ``x`` first
    (the block is simultaneous), then scattered; ``resid`` is a caller
    buffer with room for one coefficient per block row.
    """
    for n in range(rows.shape[0]):
        i = rows[n]
        s = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            s += data[p] * x[indices[p]]
        resid[n] = (s - offset[i]) / norm_sq[i]
    inv = 1.0 / r_max
    for n in range(rows.shape[0]):
        c = resid[n] * inv
        if c != 0.0:
            i = rows[n]
            for p in range(indptr[i], indptr[i + 1]):
                x[indices[p]] -= c * data[p]


@njit(cache=True)
def block_pass(x, resid, block_ptr, block_rows, indptr, indices, data, offset, norm_sq, r_max):
    """Full composite pass: every block step once, first block first."""
    for u in range(block_ptr.shape[0] - 1):
        block_step(
            x,
            resid,
            block_rows[block_ptr[u] : block_ptr[u + 1]],
            indptr,
            indices,
            data,
            offset,
            norm_sq,
            r_max,
        )


@njit(cache=True)
def proximity_sq(x, indptr, indices, data, offset, norm_sq):
    """Sum of squared row distances, Kahan-compensated.

    The compensation keeps the fixed-order reduction stable to well below
    1e-10 relative regardless of row count.
    """
    total = 0.0
    comp = 0.0
    for i in range(indptr.shape[0] - 1):
        s = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            s += data[p] * x[indices[p]]
        r = s - offset[i]
        term = (r * r) / norm_sq[i]
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total
