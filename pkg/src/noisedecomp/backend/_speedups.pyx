# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels in reference.py.

Same signatures and float64 semantics; matrix products go through BLAS.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport erfc, exp, log1p, sqrt, tanh
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

BACKEND_NAME = "compiled"

ACT_IDENTITY = 0
ACT_RELU = 1
ACT_TANH = 2
ACT_SIGMOID = 3
ACT_SOFTPLUS = 4

cdef double SQRT_2PI = sqrt(2.0 * np.pi)
cdef double INV_SQRT2 = 1.0 / sqrt(2.0)


cdef inline double _sigmoid(double z) nogil:
    cdef double e
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


cdef inline double _act(double z, int code) nogil:
    if code == 0:
        return z
    if code == 1:
        return z if z > 0.0 else 0.0
    if code == 2:
        return tanh(z)
    if code == 3:
        return _sigmoid(z)
    # softplus, saturating for large z
    if z > 30.0:
        return z
    return log1p(exp(z))


cdef inline double _act_grad(double pre, double out, int code) nogil:
    if code == 0:
        return 1.0
    if code == 1:
        return 1.0 if pre > 0.0 else 0.0
    if code == 2:
        return 1.0 - out * out
    if code == 3:
        return out * (1.0 - out)
    return _sigmoid(pre)


cdef void _gemm(double[:, ::1] a, double[:, ::1] b, double[:, ::1] c,
                bint trans_a, bint trans_b, int m, int k, int n):
    # Row-major C(m,n) = opA(m,k) @ opB(k,n) via the column-major swap:
    # BLAS computes C^T = opB^T @ opA^T on the same buffers.
    cdef char ta = c'T' if trans_b else c'N'
    cdef char tb = c'T' if trans_a else c'N'
    cdef int bm = n, bn = m, bk = k
    cdef int lda = (k if trans_b else n)
    cdef int ldb = (m if trans_a else k)
    cdef int ldc = n
    cdef double one = 1.0, zero = 0.0
    dgemm(&ta, &tb, &bm, &bn, &bk, &one, &b[0, 0], &lda,
          &a[0, 0], &ldb, &zero, &c[0, 0], &ldc)


def dense_forward(x, weights, biases, acts):
    cdef cnp.ndarray current = np.ascontiguousarray(x, dtype=np.float64)
    inputs = []
    preacts = []
    cdef cnp.ndarray z_arr, out_arr
    cdef double[:, ::1] cur_v, w_v, z_v, out_v
    cdef double[::1] b_v
    cdef int bsz, nin, nout, i, j, code
    for layer in range(len(weights)):
        w = np.ascontiguousarray(weights[layer], dtype=np.float64)
        bias = np.ascontiguousarray(biases[layer], dtype=np.float64)
        code = acts[layer]
        inputs.append(current)
        cur_v = current
        w_v = w
        b_v = bias
        bsz = cur_v.shape[0]
        nin = cur_v.shape[1]
        nout = w_v.shape[1]
        z_arr = np.empty((bsz, nout), dtype=np.float64)
        z_v = z_arr
        _gemm(cur_v, w_v, z_v, 0, 0, bsz, nin, nout)
        out_arr = np.empty((bsz, nout), dtype=np.float64)
        out_v = out_arr
        for i in range(bsz):
            for j in range(nout):
                z_v[i, j] += b_v[j]
                out_v[i, j] = _act(z_v[i, j], code)
        preacts.append(z_arr)
        current = out_arr
    return current, inputs, preacts


def dense_backward(d_out, weights, acts, inputs, preacts):
    cdef int n_layers = len(weights)
    d_ws = [None] * n_layers
    d_bs = [None] * n_layers
    cdef cnp.ndarray grad = np.ascontiguousarray(d_out, dtype=np.float64)
    cdef cnp.ndarray d_pre_arr, dw_arr, db_arr, next_grad
    cdef double[:, ::1] grad_v, pre_v, inp_v, w_v, d_pre_v, dw_v, out_v, next_grad_v
    cdef double[::1] db_v
    cdef int bsz, nin, nout, i, j, code, layer
    cdef double o, acc
    cdef bint last
    for layer in range(n_layers - 1, -1, -1):
        w = np.ascontiguousarray(weights[layer], dtype=np.float64)
        inp = inputs[layer]
        pre = preacts[layer]
        code = acts[layer]
        last = layer == n_layers - 1
        if last:
            out_v = None
        else:
            out_v = inputs[layer + 1]
        grad_v = grad
        pre_v = pre
        inp_v = inp
        w_v = w
        bsz = pre_v.shape[0]
        nout = pre_v.shape[1]
        nin = inp_v.shape[1]
        d_pre_arr = np.empty((bsz, nout), dtype=np.float64)
        d_pre_v = d_pre_arr
        for i in range(bsz):
            for j in range(nout):
                o = _act(pre_v[i, j], code) if last else out_v[i, j]
                d_pre_v[i, j] = grad_v[i, j] * _act_grad(pre_v[i, j], o, code)
        dw_arr = np.empty((nin, nout), dtype=np.float64)
        dw_v = dw_arr
        _gemm(inp_v, d_pre_v, dw_v, 1, 0, nin, bsz, nout)
        db_arr = np.empty(nout, dtype=np.float64)
        db_v = db_arr
        for j in range(nout):
            acc = 0.0
            for i in range(bsz):
                acc += d_pre_v[i, j]
            db_v[j] = acc
        next_grad = np.empty((bsz, nin), dtype=np.float64)
        next_grad_v = next_grad
        _gemm(d_pre_v, w_v, next_grad_v, 0, 1, bsz, nout, nin)
        d_ws[layer] = dw_arr
        d_bs[layer] = db_arr
        grad = next_grad
    return d_ws, d_bs, grad


def gaussian_mixture_pdf(x, means, variances, weights):
    x_arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    cdef double[::1] xs = np.ascontiguousarray(x_arr.ravel())
    cdef double[::1] mu = np.ascontiguousarray(means, dtype=np.float64)
    cdef double[::1] var = np.ascontiguousarray(variances, dtype=np.float64)
    cdef double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t n = xs.shape[0], m = mu.shape[0], g, i
    out_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double inv_sig, c0, d
    for i in range(m):
        inv_sig = 1.0 / sqrt(var[i])
        c0 = w[i] * inv_sig / SQRT_2PI
        for g in range(n):
            d = (xs[g] - mu[i]) * inv_sig
            out[g] += c0 * exp(-0.5 * d * d)
    res = out_arr.reshape(x_arr.shape)
    if np.asarray(x).ndim == 0:
        return float(res[0])
    return res


def mixture_fit_terms(grid, cell, mus, sigmas, weights, target_pdf):
    cdef double[::1] xs = np.ascontiguousarray(grid, dtype=np.float64)
    cdef double[:, ::1] mu = np.atleast_2d(np.ascontiguousarray(mus, dtype=np.float64))
    cdef double[:, ::1] sig = np.atleast_2d(np.ascontiguousarray(sigmas, dtype=np.float64))
    cdef double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef double[::1] target = np.ascontiguousarray(target_pdf, dtype=np.float64)
    cdef Py_ssize_t bsz = mu.shape[0], n_comp = mu.shape[1], n_grid = xs.shape[0]
    cdef Py_ssize_t b, i, g

    phi_arr = np.empty((bsz, n_comp, n_grid), dtype=np.float64)
    cdef double[:, :, ::1] phi = phi_arr
    pdf_arr = np.zeros(n_grid, dtype=np.float64)
    cdef double[::1] pdf_hat = pdf_arr
    cdef double inv_sig, c0, z, cw = float(cell)
    for b in range(bsz):
        for i in range(n_comp):
            inv_sig = 1.0 / sig[b, i]
            c0 = inv_sig / SQRT_2PI
            for g in range(n_grid):
                z = (xs[g] - mu[b, i]) * inv_sig
                phi[b, i, g] = c0 * exp(-0.5 * z * z)
                pdf_hat[g] += w[i] * phi[b, i, g]

    cdef double inv_b = 1.0 / bsz
    cdef double loss = 0.0, r
    resid_arr = np.empty(n_grid, dtype=np.float64)
    cdef double[::1] resid = resid_arr
    for g in range(n_grid):
        pdf_hat[g] *= inv_b
        r = pdf_hat[g] - target[g]
        resid[g] = r
        loss += r * r
    loss *= cw

    d_mu_arr = np.empty((bsz, n_comp), dtype=np.float64)
    d_sigma_arr = np.empty((bsz, n_comp), dtype=np.float64)
    d_w_arr = np.zeros(n_comp, dtype=np.float64)
    cdef double[:, ::1] d_mu = d_mu_arr
    cdef double[:, ::1] d_sigma = d_sigma_arr
    cdef double[::1] d_w = d_w_arr
    cdef double scale = 2.0 * cw * inv_b
    cdef double acc_mu, acc_sig, acc_w, rp
    for b in range(bsz):
        for i in range(n_comp):
            inv_sig = 1.0 / sig[b, i]
            acc_mu = 0.0
            acc_sig = 0.0
            acc_w = 0.0
            for g in range(n_grid):
                rp = resid[g] * phi[b, i, g]
                z = (xs[g] - mu[b, i]) * inv_sig
                acc_mu += rp * z * inv_sig
                acc_sig += rp * (z * z - 1.0) * inv_sig
                acc_w += rp
            d_mu[b, i] = scale * w[i] * acc_mu
            d_sigma[b, i] = scale * w[i] * acc_sig
            d_w[i] += scale * acc_w
    return pdf_arr, loss, d_mu_arr, d_sigma_arr, d_w_arr


cdef inline Py_ssize_t _lower_bound(double[::1] arr, double val) nogil:
    cdef Py_ssize_t lo = 0, hi = arr.shape[0], mid
    while lo < hi:
        mid = (lo + hi) // 2
        if arr[mid] < val:
            lo = mid + 1
        else:
            hi = mid
    return lo


def kde_cdf(x, sorted_samples, bandwidth):
    x_in = np.asarray(x, dtype=np.float64)
    x_arr = np.atleast_1d(x_in)
    cdef double[::1] xs = np.ascontiguousarray(x_arr.ravel())
    cdef double[::1] samp = np.ascontiguousarray(sorted_samples, dtype=np.float64)
    cdef double h = float(bandwidth)
    cdef Py_ssize_t n = samp.shape[0], m = xs.shape[0], q, j, left, right
    out_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double acc, inv_h = 1.0 / h, span = 8.0 * h
    for q in range(m):
        left = _lower_bound(samp, xs[q] - span)
        right = _lower_bound(samp, xs[q] + span)
        acc = <double> left
        for j in range(left, right):
            # standard normal CDF via erfc
            acc += 0.5 * erfc(-(xs[q] - samp[j]) * inv_h * INV_SQRT2)
        out[q] = acc / n
    res = out_arr.reshape(x_arr.shape)
    if x_in.ndim == 0:
        return float(res[0])
    return res


def kde_pdf(x, sorted_samples, bandwidth):
    x_in = np.asarray(x, dtype=np.float64)
    x_arr = np.atleast_1d(x_in)
    cdef double[::1] xs = np.ascontiguousarray(x_arr.ravel())
    cdef double[::1] samp = np.ascontiguousarray(sorted_samples, dtype=np.float64)
    cdef double h = float(bandwidth)
    cdef Py_ssize_t n = samp.shape[0], m = xs.shape[0], q, j, left, right
    out_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double acc, z, inv_h = 1.0 / h, span = 8.0 * h
    cdef double norm = 1.0 / (n * h * SQRT_2PI)
    for q in range(m):
        left = _lower_bound(samp, xs[q] - span)
        right = _lower_bound(samp, xs[q] + span)
        acc = 0.0
        for j in range(left, right):
            z = (xs[q] - samp[j]) * inv_h
            acc += exp(-0.5 * z * z)
        out[q] = acc * norm
    res = out_arr.reshape(x_arr.shape)
    if x_in.ndim == 0:
        return float(res[0])
    return res
