# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Direct-loop convolution kernels.  Same contract as ``_conv_py``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t _out_size(Py_ssize_t size, Py_ssize_t k, Py_ssize_t stride,
                                 Py_ssize_t dilation, Py_ssize_t pad):
    return (size + 2 * pad - dilation * (k - 1) - 1) // stride + 1


cdef inline Py_ssize_t _first(Py_ssize_t offset, Py_ssize_t stride) nogil:
    # smallest i >= 0 with i * stride + offset >= 0
    if offset >= 0:
        return 0
    return (-offset + stride - 1) // stride


cdef inline Py_ssize_t _stop(Py_ssize_t offset, Py_ssize_t stride, Py_ssize_t size,
                             Py_ssize_t n_out) nogil:
    # one past the largest i with i * stride + offset < size, capped at n_out
    cdef Py_ssize_t last
    if size - 1 - offset < 0:
        return 0
    last = (size - 1 - offset) // stride + 1
    return last if last < n_out else n_out


def conv2d_forward(x, w, b, int stride, int dilation, int pad):
    cdef double[:, :, :, ::1] X = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, :, :, ::1] Wt = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[::1] B = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t N = X.shape[0], C = X.shape[1], H = X.shape[2], Wd = X.shape[3]
    cdef Py_ssize_t O = Wt.shape[0], K = Wt.shape[2]
    cdef Py_ssize_t Ho = _out_size(H, K, stride, dilation, pad)
    cdef Py_ssize_t Wo = _out_size(Wd, K, stride, dilation, pad)
    out = np.empty((N, O, Ho, Wo), dtype=np.float64)
    cdef double[:, :, :, ::1] Y = out
    cdef Py_ssize_t n, o, c, i, j, ki, kj, r, s, ro, so, i1, j0, j1
    cdef double wv
    with nogil:
        for n in range(N):
            for o in range(O):
                for i in range(Ho):
                    for j in range(Wo):
                        Y[n, o, i, j] = B[o]
                for c in range(C):
                    for ki in range(K):
                        for kj in range(K):
                            wv = Wt[o, c, ki, kj]
                            ro = ki * dilation - pad
                            so = kj * dilation - pad
                            i1 = _stop(ro, stride, H, Ho)
                            j0 = _first(so, stride)
                            j1 = _stop(so, stride, Wd, Wo)
                            for i in range(_first(ro, stride), i1):
                                r = i * stride + ro
                                for j in range(j0, j1):
                                    Y[n, o, i, j] += wv * X[n, c, r, j * stride + so]
    return out


def conv2d_backward(dout, x, w, int stride, int dilation, int pad):
    cdef double[:, :, :, ::1] D = np.ascontiguousarray(dout, dtype=np.float64)
    cdef double[:, :, :, ::1] X = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, :, :, ::1] Wt = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t N = X.shape[0], C = X.shape[1], H = X.shape[2], Wd = X.shape[3]
    cdef Py_ssize_t O = Wt.shape[0], K = Wt.shape[2]
    cdef Py_ssize_t Ho = D.shape[2], Wo = D.shape[3]
    dx_arr = np.zeros((N, C, H, Wd), dtype=np.float64)
    dw_arr = np.zeros((O, C, K, K), dtype=np.float64)
    db_arr = np.zeros(O, dtype=np.float64)
    cdef double[:, :, :, ::1] dX = dx_arr
    cdef double[:, :, :, ::1] dW = dw_arr
    cdef double[::1] dB = db_arr
    cdef Py_ssize_t n, o, c, i, j, ki, kj, r, s, ro, so, i1, j0, j1
    cdef double g, wv, acc
    with nogil:
        for n in range(N):
            for o in range(O):
                for i in range(Ho):
                    for j in range(Wo):
                        dB[o] += D[n, o, i, j]
                for c in range(C):
                    for ki in range(K):
                        for kj in range(K):
                            wv = Wt[o, c, ki, kj]
                            acc = 0.0
                            ro = ki * dilation - pad
                            so = kj * dilation - pad
                            i1 = _stop(ro, stride, H, Ho)
                            j0 = _first(so, stride)
                            j1 = _stop(so, stride, Wd, Wo)
                            for i in range(_first(ro, stride), i1):
                                r = i * stride + ro
                                for j in range(j0, j1):
                                    s = j * stride + so
                                    g = D[n, o, i, j]
                                    acc += g * X[n, c, r, s]
                                    dX[n, c, r, s] += g * wv
                            dW[o, c, ki, kj] += acc
    return dx_arr, dw_arr, db_arr
