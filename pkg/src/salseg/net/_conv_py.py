"""Pure numpy convolution kernels (fallback when the compiled extension is
unavailable).  Layout is NCHW; weights are (out, in, k, k)."""
import numpy as np


def _out_size(size, k, stride, dilation, pad):
    return (size + 2 * pad - dilation * (k - 1) - 1) // stride + 1


def _columns(x, k, stride, dilation, pad, Ho, Wo):
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    n, c = x.shape[:2]
    cols = np.empty((n, c, k, k, Ho, Wo))
    for ki in range(k):
        for kj in range(k):
            r, s = ki * dilation, kj * dilation
            cols[:, :, ki, kj] = xp[:, :, r:r + stride * (Ho - 1) + 1:stride,
                                    s:s + stride * (Wo - 1) + 1:stride]
    return cols


def conv2d_forward(x, w, b, stride, dilation, pad):
    k = w.shape[2]
    Ho = _out_size(x.shape[2], k, stride, dilation, pad)
    Wo = _out_size(x.shape[3], k, stride, dilation, pad)
    cols = _columns(x, k, stride, dilation, pad, Ho, Wo)
    out = np.tensordot(cols, w, axes=([1, 2, 3], [1, 2, 3]))  # (n, Ho, Wo, out)
    out = out.transpose(0, 3, 1, 2) + b[None, :, None, None]
    return np.ascontiguousarray(out)


def conv2d_backward(dout, x, w, stride, dilation, pad):
    k = w.shape[2]
    n, c, H, W = x.shape
    Ho, Wo = dout.shape[2:]
    cols = _columns(x, k, stride, dilation, pad, Ho, Wo)
    dw = np.tensordot(dout, cols, axes=([0, 2, 3], [0, 4, 5]))  # (out, c, k, k)
    db = dout.sum(axis=(0, 2, 3))
    dcols = np.tensordot(dout, w, axes=([1], [0]))  # (n, Ho, Wo, c, k, k)
    dxp = np.zeros((n, c, H + 2 * pad, W + 2 * pad))
    for ki in range(k):
        for kj in range(k):
            r, s = ki * dilation, kj * dilation
            dxp[:, :, r:r + stride * (Ho - 1) + 1:stride,
                s:s + stride * (Wo - 1) + 1:stride] += dcols[..., ki, kj].transpose(0, 3, 1, 2)
    dx = dxp[:, :, pad:pad + H, pad:pad + W]
    return np.ascontiguousarray(dx), dw, db
