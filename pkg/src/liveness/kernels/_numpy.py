"""Pure-numpy versions of the loop kernels (im2col + BLAS)."""

import numpy as np


def matmul(a, b):
    return a @ b


def _im2col3x3(x):
    n, h, w, c = x.shape
    padded = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = np.empty((n, h, w, 3, 3, c))
    for dy in range(3):
        for dx in range(3):
            cols[:, :, :, dy, dx, :] = padded[:, dy:dy + h, dx:dx + w, :]
    return cols.reshape(n * h * w, 9 * c)


def conv3x3_same(x, k, bias):
    n, h, w, _ = x.shape
    c_out = k.shape[3]
    out = _im2col3x3(x) @ k.reshape(-1, c_out) + bias
    return out.reshape(n, h, w, c_out)


def conv3x3_same_grad_params(x, dout):
    c_in = x.shape[3]
    c_out = dout.shape[3]
    g = dout.reshape(-1, c_out)
    dk = (_im2col3x3(x).T @ g).reshape(3, 3, c_in, c_out)
    return dk, g.sum(axis=0)


def _windows(x):
    n, h, w, c = x.shape
    # (n, h/2, w/2, c, 4), window order (0,0) (0,1) (1,0) (1,1)
    return x.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(
        n, h // 2, w // 2, c, 4)


def maxpool2x2(x):
    win = _windows(x)
    arg = np.argmax(win, axis=-1)  # first occurrence on ties
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return out, arg.astype(np.int8)


def maxpool2x2_backward(dout, arg):
    n, ho, wo, c = dout.shape
    win = np.zeros((n, ho, wo, c, 4))
    np.put_along_axis(win, arg[..., None].astype(np.intp), dout[..., None], axis=-1)
    return win.reshape(n, ho, wo, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(
        n, 2 * ho, 2 * wo, c)
