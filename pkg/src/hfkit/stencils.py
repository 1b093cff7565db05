"""Second-order finite-difference stencils on uniform axes.

Interior nodes use centered differences; the first and last node use
one-sided second-order formulas, so every stencil is exact on quadratics.
"""
import numpy as np
import scipy.sparse as sp

MIN_NODES = 4


def _check(n, axis_name="axis"):
    if n < MIN_NODES:
        raise ValueError(
            f"grid too coarse along {axis_name}: {n} nodes, need at least {MIN_NODES}"
        )


def d1(f, h, axis=0):
    f = np.moveaxis(np.asarray(f), axis, 0)
    _check(f.shape[0])
    out = np.empty_like(f, dtype=np.result_type(f, float))
    out[1:-1] = (f[2:] - f[:-2]) / (2.0 * h)
    out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h)
    out[-1] = (3.0 * f[-1] - 4.0 * f[-2] + f[-3]) / (2.0 * h)
    return np.moveaxis(out, 0, axis)


def d2(f, h, axis=0):
    f = np.moveaxis(np.asarray(f), axis, 0)
    _check(f.shape[0])
    out = np.empty_like(f, dtype=np.result_type(f, float))
    out[1:-1] = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / h**2
    out[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / h**2
    out[-1] = (2.0 * f[-1] - 5.0 * f[-2] + 4.0 * f[-3] - f[-4]) / h**2
    return np.moveaxis(out, 0, axis)


def d1_matrix(n, h):
    _check(n)
    rows, cols, vals = [], [], []
    for i in range(1, n - 1):
        rows += [i, i]
        cols += [i - 1, i + 1]
        vals += [-0.5 / h, 0.5 / h]
    rows += [0, 0, 0, n - 1, n - 1, n - 1]
    cols += [0, 1, 2, n - 1, n - 2, n - 3]
    vals += [-1.5 / h, 2.0 / h, -0.5 / h, 1.5 / h, -2.0 / h, 0.5 / h]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def d2_matrix(n, h):
    _check(n)
    h2 = h * h
    rows, cols, vals = [], [], []
    for i in range(1, n - 1):
        rows += [i, i, i]
        cols += [i - 1, i, i + 1]
        vals += [1.0 / h2, -2.0 / h2, 1.0 / h2]
    for i, sgn in ((0, 1), (n - 1, -1)):
        rows += [i] * 4
        cols += [i, i + sgn, i + 2 * sgn, i + 3 * sgn]
        vals += [2.0 / h2, -5.0 / h2, 4.0 / h2, -1.0 / h2]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
