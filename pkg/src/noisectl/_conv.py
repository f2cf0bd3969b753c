"""3x3 'same' convolutions on [batch, channels, H, W] float64 arrays.

Column layout is (channel, ky, kx), matching ``weight.reshape(cout, -1)``.
"""

import numpy as np


def im2col(x, k=3):
    b, c, h, w = x.shape
    pad = k // 2
    xp = np.zeros((b, h + 2 * pad, w + 2 * pad, c))
    xp[:, pad:pad + h, pad:pad + w] = x.transpose(0, 2, 3, 1)
    cols = np.empty((b, h, w, c, k, k))
    for i in range(k):
        for j in range(k):
            cols[..., i, j] = xp[:, i:i + h, j:j + w]
    return cols.reshape(b * h * w, c * k * k)


def col2im(cols, shape, k=3):
    b, c, h, w = shape
    pad = k // 2
    cols = cols.reshape(b, h, w, c, k, k)
    out = np.zeros((b, h + 2 * pad, w + 2 * pad, c))
    for i in range(k):
        for j in range(k):
            out[:, i:i + h, j:j + w] += cols[..., i, j]
    return out[:, pad:pad + h, pad:pad + w].transpose(0, 3, 1, 2)


def conv_forward(x, weight, bias):
    """Returns (output, im2col matrix) so the backward pass can reuse it."""
    b, _, h, w = x.shape
    cout = weight.shape[0]
    cols = im2col(x, weight.shape[-1])
    out = cols @ weight.reshape(cout, -1).T + bias
    return out.reshape(b, h, w, cout).transpose(0, 3, 1, 2), cols


def conv_backward(dout, cols, x_shape, weight, need_dx=True):
    cout = weight.shape[0]
    dflat = dout.transpose(0, 2, 3, 1).reshape(-1, cout)
    dweight = (dflat.T @ cols).reshape(weight.shape)
    dbias = dflat.sum(axis=0)
    if not need_dx:
        return None, dweight, dbias
    # a contiguous transposed copy keeps BLAS off a very slow path for small inner dims
    wt = np.ascontiguousarray(weight.reshape(cout, -1).T)
    dx = col2im(dflat @ wt.T, x_shape, weight.shape[-1])
    return dx, dweight, dbias
