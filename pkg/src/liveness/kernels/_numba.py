"""Loop kernels compiled with numba.

Every accumulation runs in a fixed order (ascending loop indices), so
results are bit-reproducible run to run. The innermost loop is always a
contiguous axpy over the last axis, which LLVM vectorises without needing
to reassociate any sum.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def matmul(a, b):
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n))
    for i in range(m):
        row = out[i]
        for t in range(k):
            s = a[i, t]
            bt = b[t]
            for j in range(n):
                row[j] += s * bt[j]
    return out


@njit(cache=True)
def conv3x3_same(x, k, bias):
    n_batch, h, w, c_in = x.shape
    c_out = k.shape[3]
    out = np.empty((n_batch, h, w, c_out))
    for n in range(n_batch):
        for y in range(h):
            for xx in range(w):
                o = out[n, y, xx]
                for co in range(c_out):
                    o[co] = bias[co]
                for dy in range(3):
                    iy = y + dy - 1
                    if iy < 0 or iy >= h:
                        continue
                    for dx in range(3):
                        ix = xx + dx - 1
                        if ix < 0 or ix >= w:
                            continue
                        for ci in range(c_in):
                            v = x[n, iy, ix, ci]
                            kk = k[dy, dx, ci]
                            for co in range(c_out):
                                o[co] += v * kk[co]
    return out


@njit(cache=True)
def conv3x3_same_grad_params(x, dout):
    n_batch, h, w, c_in = x.shape
    c_out = dout.shape[3]
    dk = np.zeros((3, 3, c_in, c_out))
    db = np.zeros(c_out)
    for n in range(n_batch):
        for y in range(h):
            for xx in range(w):
                g = dout[n, y, xx]
                for co in range(c_out):
                    db[co] += g[co]
                for dy in range(3):
                    iy = y + dy - 1
                    if iy < 0 or iy >= h:
                        continue
                    for dx in range(3):
                        ix = xx + dx - 1
                        if ix < 0 or ix >= w:
                            continue
                        for ci in range(c_in):
                            v = x[n, iy, ix, ci]
                            acc = dk[dy, dx, ci]
                            for co in range(c_out):
                                acc[co] += v * g[co]
    return dk, db


@njit(cache=True)
def maxpool2x2(x):
    n_batch, h, w, c = x.shape
    ho = h // 2
    wo = w // 2
    out = np.empty((n_batch, ho, wo, c))
    arg = np.empty((n_batch, ho, wo, c), dtype=np.int8)
    for n in range(n_batch):
        for y in range(ho):
            for xx in range(wo):
                for ch in range(c):
                    best = x[n, 2 * y, 2 * xx, ch]
                    idx = 0
                    # window scanned in row-major order; strict '>' keeps the first max
                    for j in range(1, 4):
                        v = x[n, 2 * y + j // 2, 2 * xx + j % 2, ch]
                        if v > best:
                            best = v
                            idx = j
                    out[n, y, xx, ch] = best
                    arg[n, y, xx, ch] = idx
    return out, arg


@njit(cache=True)
def maxpool2x2_backward(dout, arg):
    n_batch, ho, wo, c = dout.shape
    dx = np.zeros((n_batch, 2 * ho, 2 * wo, c))
    for n in range(n_batch):
        for y in range(ho):
            for xx in range(wo):
                for ch in range(c):
                    j = arg[n, y, xx, ch]
                    dx[n, 2 * y + j // 2, 2 * xx + j % 2, ch] = dout[n, y, xx, ch]
    return dx
