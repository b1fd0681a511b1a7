"""Finite-difference helpers on uniform grids."""
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def fornberg_weights(offsets, m):
    """Weights for the m-th derivative at 0 from samples at integer ``offsets``."""
    z = np.asarray(offsets, dtype=float)
    n = len(z)
    c = np.zeros((n, m + 1))
    c1, c4 = 1.0, z[0]
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, z[i]
        for j in range(i):
            c3 = z[i] - z[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m].copy()


def derivative(y, h, m=1, axis=-1, order=6):
    """m-th derivative of samples ``y`` along ``axis`` with spacing ``h``.

    Interior points use a centred stencil of formal accuracy ``order``; points
    near the ends use shifted stencils of the same width.
    """
    y = np.moveaxis(np.asarray(y), axis, -1)
    n = y.shape[-1]
    width = order + m - 1 if m % 2 == 0 else order + m
    width += (width + 1) % 2  # odd width keeps the interior centred
    if n < width:
        raise ValueError(f"need at least {width} samples for derivative, got {n}")
    half = width // 2
    out = np.zeros(y.shape, dtype=np.result_type(y, float))
    wc = fornberg_weights(tuple(float(j) for j in range(-half, half + 1)), m)
    for k, w in enumerate(wc):
        out[..., half:n - half] += w * y[..., k:n - width + 1 + k]
    we = min(width + 2, n)  # wider one-sided stencils recover accuracy at the ends
    for i in list(range(half)) + list(range(n - half, n)):
        start = min(max(i - we // 2, 0), n - we)
        offs = tuple(float(j - i) for j in range(start, start + we))
        w = fornberg_weights(offs, m)
        out[..., i] = y[..., start:start + we] @ w
    return np.moveaxis(out / h ** m, -1, axis)
