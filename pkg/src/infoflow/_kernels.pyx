# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled MLP kernels (forward, backward, Adam, Polyak).

Same contract and memory layout as ``_kernels_py``. Dense products go through
scipy's BLAS bindings; row-major blocks are passed to column-major dgemm as
their transposes.
"""

import numpy as np
from libc.math cimport tanh, sqrt, pow
from scipy.linalg.cython_blas cimport dgemm

ACT_LINEAR = 0
ACT_TANH = 1
ACT_RELU = 2


cdef inline void _gemm(char ta, char tb, int m, int n, int k,
                       double alpha, double* a, int lda,
                       double* b, int ldb, double beta,
                       double* c, int ldc) noexcept nogil:
    dgemm(&ta, &tb, &m, &n, &k, &alpha, a, &lda, b, &ldb, &beta, c, &ldc)


def mlp_forward(double[::1] params, long[::1] sizes, int hidden_act, int out_act,
                double out_scale, double[:, ::1] x, double[::1] work):
    cdef int batch = x.shape[0]
    cdef int n_layers = sizes.shape[0] - 1
    cdef int i, r, c, n_in, n_out, act
    cdef Py_ssize_t p_off = 0, a_off = 0, a_next
    cdef double* W
    cdef double* bias
    cdef double* a_in
    cdef double* a_out
    cdef double z

    if x.shape[1] != sizes[0]:
        raise ValueError("input has %d columns, network expects %d" % (x.shape[1], sizes[0]))

    with nogil:
        for r in range(batch):
            for c in range(sizes[0]):
                work[r * sizes[0] + c] = x[r, c]
        for i in range(n_layers):
            n_in = sizes[i]
            n_out = sizes[i + 1]
            W = &params[p_off]
            bias = &params[p_off + n_in * n_out]
            p_off += n_in * n_out + n_out
            a_in = &work[a_off]
            a_next = a_off + batch * n_in
            a_out = &work[a_next]
            for r in range(batch):
                for c in range(n_out):
                    a_out[r * n_out + c] = bias[c]
            # out(B, n_out) += in(B, n_in) @ W(n_in, n_out)
            _gemm(b'N', b'N', n_out, batch, n_in, 1.0, W, n_out, a_in, n_in, 1.0, a_out, n_out)
            act = out_act if i == n_layers - 1 else hidden_act
            if act == 1:
                if i == n_layers - 1 and out_scale != 1.0:
                    for r in range(batch * n_out):
                        a_out[r] = out_scale * tanh(a_out[r])
                else:
                    for r in range(batch * n_out):
                        a_out[r] = tanh(a_out[r])
            elif act == 2:
                for r in range(batch * n_out):
                    if a_out[r] < 0.0:
                        a_out[r] = 0.0
            a_off = a_next

    n_out = sizes[n_layers]
    return np.asarray(work[a_off:a_off + batch * n_out]).reshape(batch, n_out).copy()


def mlp_backward(double[::1] params, long[::1] sizes, int hidden_act, int out_act,
                 double out_scale, double[::1] work, double[:, ::1] dout,
                 double[::1] grad, double[:, ::1] dx):
    cdef int batch = dout.shape[0]
    cdef int n_layers = sizes.shape[0] - 1
    cdef int i, r, c, n_in, n_out, act, max_w = 0
    cdef Py_ssize_t total = 0
    cdef double t
    cdef double* W
    cdef double* gW
    cdef double* gb
    cdef double* a_in
    cdef double* a_out
    cdef double* d_cur
    cdef double* d_prev

    for i in range(n_layers + 1):
        if sizes[i] > max_w:
            max_w = sizes[i]
    cdef double[::1] buf_a = np.empty(batch * max_w)
    cdef double[::1] buf_b = np.empty(batch * max_w)
    cdef long[::1] p_offs = np.empty(n_layers, dtype=np.int64)
    cdef long[::1] a_offs = np.empty(n_layers + 1, dtype=np.int64)

    for i in range(n_layers):
        p_offs[i] = total
        total += sizes[i] * sizes[i + 1] + sizes[i + 1]
    total = 0
    for i in range(n_layers + 1):
        a_offs[i] = total
        total += batch * sizes[i]

    with nogil:
        d_cur = &buf_a[0]
        d_prev = &buf_b[0]
        n_out = sizes[n_layers]
        for r in range(batch):
            for c in range(n_out):
                d_cur[r * n_out + c] = dout[r, c]
        for i in range(n_layers - 1, -1, -1):
            n_in = sizes[i]
            n_out = sizes[i + 1]
            a_in = &work[a_offs[i]]
            a_out = &work[a_offs[i + 1]]
            act = out_act if i == n_layers - 1 else hidden_act
            if act == 1:
                if i == n_layers - 1 and out_scale != 1.0:
                    for r in range(batch * n_out):
                        t = a_out[r] / out_scale
                        d_cur[r] *= out_scale * (1.0 - t * t)
                else:
                    for r in range(batch * n_out):
                        d_cur[r] *= 1.0 - a_out[r] * a_out[r]
            elif act == 2:
                for r in range(batch * n_out):
                    if a_out[r] <= 0.0:
                        d_cur[r] = 0.0
            W = &params[p_offs[i]]
            gW = &grad[p_offs[i]]
            gb = &grad[p_offs[i] + n_in * n_out]
            # gW(n_in, n_out) = in^T @ delta
            _gemm(b'N', b'T', n_out, n_in, batch, 1.0, d_cur, n_out, a_in, n_in, 0.0, gW, n_out)
            for c in range(n_out):
                gb[c] = 0.0
            for r in range(batch):
                for c in range(n_out):
                    gb[c] += d_cur[r * n_out + c]
            # delta_prev(B, n_in) = delta @ W^T
            _gemm(b'T', b'N', n_in, batch, n_out, 1.0, W, n_out, d_cur, n_out, 0.0, d_prev, n_in)
            d_cur, d_prev = d_prev, d_cur
        n_in = sizes[0]
        for r in range(batch):
            for c in range(n_in):
                dx[r, c] = d_cur[r * n_in + c]


def adam_update(double[::1] params, double[::1] grad, double[::1] m, double[::1] v,
                double lr, double beta1, double beta2, double eps, long step):
    cdef Py_ssize_t i, n = params.shape[0]
    cdef double c1 = 1.0 - pow(beta1, <double>step)
    cdef double c2 = 1.0 - pow(beta2, <double>step)
    cdef double g
    with nogil:
        for i in range(n):
            g = grad[i]
            m[i] = beta1 * m[i] + (1.0 - beta1) * g
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
            params[i] -= lr * (m[i] / c1) / (sqrt(v[i] / c2) + eps)


def polyak(double[::1] target, double[::1] source, double tau):
    cdef Py_ssize_t i, n = target.shape[0]
    with nogil:
        if tau == 1.0:
            for i in range(n):
                target[i] = source[i]
        else:
            for i in range(n):
                target[i] = (1.0 - tau) * target[i] + tau * source[i]
