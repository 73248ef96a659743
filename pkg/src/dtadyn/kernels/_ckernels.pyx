# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: dilated conv1d forward/backward, embedding
scatter-add, columnwise max.  Semantics match kernels/numpy_backend.py."""

import numpy as np


def conv1d_dilated_forward(double[:, ::1] seq, double[:, :, ::1] weights,
                           double[::1] bias, int dilation):
    cdef Py_ssize_t c_out = weights.shape[0]
    cdef Py_ssize_t c_in = weights.shape[1]
    cdef Py_ssize_t k = weights.shape[2]
    cdef Py_ssize_t n_out = seq.shape[1] - (k - 1) * dilation
    out_arr = np.empty((c_out, n_out), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t o, i, j, n
    cdef double acc
    for o in range(c_out):
        for n in range(n_out):
            acc = bias[o]
            for i in range(c_in):
                for j in range(k):
                    acc += weights[o, i, j] * seq[i, n + j * dilation]
            out[o, n] = acc
    return out_arr


def conv1d_dilated_backward(double[:, ::1] seq, double[:, :, ::1] weights,
                            int dilation, double[:, ::1] grad_out):
    cdef Py_ssize_t c_out = weights.shape[0]
    cdef Py_ssize_t c_in = weights.shape[1]
    cdef Py_ssize_t k = weights.shape[2]
    cdef Py_ssize_t n_out = grad_out.shape[1]
    grad_seq_arr = np.zeros((seq.shape[0], seq.shape[1]), dtype=np.float64)
    grad_w_arr = np.zeros((c_out, c_in, k), dtype=np.float64)
    grad_b_arr = np.zeros(c_out, dtype=np.float64)
    cdef double[:, ::1] grad_seq = grad_seq_arr
    cdef double[:, :, ::1] grad_w = grad_w_arr
    cdef double[::1] grad_b = grad_b_arr
    cdef Py_ssize_t o, i, j, n
    cdef double g
    for o in range(c_out):
        for n in range(n_out):
            g = grad_out[o, n]
            grad_b[o] += g
            for i in range(c_in):
                for j in range(k):
                    grad_w[o, i, j] += g * seq[i, n + j * dilation]
                    grad_seq[i, n + j * dilation] += g * weights[o, i, j]
    return grad_seq_arr, grad_w_arr, grad_b_arr


def scatter_add_rows(double[:, ::1] table, long[::1] ids, double[:, ::1] rows):
    cdef Py_ssize_t n = ids.shape[0]
    cdef Py_ssize_t d = table.shape[1]
    cdef Py_ssize_t i, j
    cdef Py_ssize_t row
    for i in range(n):
        row = ids[i]
        for j in range(d):
            table[row, j] += rows[i, j]


def column_max(double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    vals_arr = np.empty(d, dtype=np.float64)
    idx_arr = np.zeros(d, dtype=np.int64)
    cdef double[::1] vals = vals_arr
    cdef long[::1] idx = idx_arr
    cdef Py_ssize_t i, j
    for j in range(d):
        vals[j] = x[0, j]
    for i in range(1, n):
        for j in range(d):
            if x[i, j] > vals[j]:
                vals[j] = x[i, j]
                idx[j] = i
    return vals_arr, idx_arr
