"""Pure numpy implementations of the hot loops (fallback backend)."""

import numpy as np


def propagate(expa, kicks, h0):
    """Affine recursion ``H[n+1] = expa[n] * H[n] + kicks[n]`` with ``H[0] = h0``."""
    expa = np.ascontiguousarray(expa, dtype=np.complex128)
    kicks = np.ascontiguousarray(kicks, dtype=np.complex128)
    N, M = expa.shape
    out = np.empty((N + 1, M), dtype=np.complex128)
    out[0] = h0
    for n in range(N):
        out[n + 1] = expa[n] * out[n] + kicks[n]
    return out


def running_extrema(P):
    """Running minimum and maximum along axis 0."""
    P = np.asarray(P, dtype=np.float64)
    return np.minimum.accumulate(P, axis=0), np.maximum.accumulate(P, axis=0)


def sup_abs_cumsum(incr):
    """Row-wise ``max_n |sum_{m<n} incr[m]|`` including the empty sum."""
    incr = np.asarray(incr, dtype=np.float64)
    if incr.shape[-1] == 0:
        return np.zeros(incr.shape[:-1])
    s = np.cumsum(incr, axis=-1)
    return np.maximum(np.max(np.abs(s), axis=-1), 0.0)


def first_passage(B, level, cap):
    """First index ``n`` in ``1..cap`` with ``B[n]`` at or beyond ``level``, else ``cap``."""
    B = np.asarray(B, dtype=np.float64)
    seg = B[1 : cap + 1]
    hit = seg >= level if level > 0 else seg <= level
    if hit.any():
        return int(np.argmax(hit)) + 1
    return int(cap)
