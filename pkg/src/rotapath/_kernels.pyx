# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: fused complex-distance scoring and segment ops.

Semantics match rotapath._kernels_py exactly (the parity tests enforce it).
"""

import numpy as np

from libc.math cimport exp, sqrt
from libc.stdint cimport int64_t

cdef double _EPS = 1e-30


def score_candidates(double[::1] hr_re, double[::1] hr_im,
                     double[:, ::1] c_re, double[:, ::1] c_im, int norm):
    cdef Py_ssize_t n = c_re.shape[0], d = c_re.shape[1]
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double acc, dre, dim
    for i in range(n):
        acc = 0.0
        if norm == 1:
            for j in range(d):
                dre = hr_re[j] - c_re[i, j]
                dim = hr_im[j] - c_im[i, j]
                acc += sqrt(dre * dre + dim * dim)
        else:
            for j in range(d):
                dre = hr_re[j] - c_re[i, j]
                dim = hr_im[j] - c_im[i, j]
                acc += dre * dre + dim * dim
            acc = sqrt(acc)
        out[i] = -acc
    return out_arr


def score_candidates_backward(double[::1] hr_re, double[::1] hr_im,
                              double[:, ::1] c_re, double[:, ::1] c_im,
                              int norm, double[::1] gout):
    cdef Py_ssize_t n = c_re.shape[0], d = c_re.shape[1]
    g_hr_re_arr = np.zeros(d)
    g_hr_im_arr = np.zeros(d)
    g_c_re_arr = np.empty((n, d))
    g_c_im_arr = np.empty((n, d))
    cdef double[::1] g_hr_re = g_hr_re_arr, g_hr_im = g_hr_im_arr
    cdef double[:, ::1] g_c_re = g_c_re_arr, g_c_im = g_c_im_arr
    cdef Py_ssize_t i, j
    cdef double dre, dim, mod, scale, dist, gre, gim
    for i in range(n):
        if norm == 1:
            for j in range(d):
                dre = hr_re[j] - c_re[i, j]
                dim = hr_im[j] - c_im[i, j]
                mod = sqrt(dre * dre + dim * dim)
                if mod < _EPS:
                    mod = _EPS
                scale = -gout[i] / mod
                gre = scale * dre
                gim = scale * dim
                g_hr_re[j] += gre
                g_hr_im[j] += gim
                g_c_re[i, j] = -gre
                g_c_im[i, j] = -gim
        else:
            dist = 0.0
            for j in range(d):
                dre = hr_re[j] - c_re[i, j]
                dim = hr_im[j] - c_im[i, j]
                dist += dre * dre + dim * dim
            dist = sqrt(dist)
            if dist < _EPS:
                dist = _EPS
            scale = -gout[i] / dist
            for j in range(d):
                dre = hr_re[j] - c_re[i, j]
                dim = hr_im[j] - c_im[i, j]
                gre = scale * dre
                gim = scale * dim
                g_hr_re[j] += gre
                g_hr_im[j] += gim
                g_c_re[i, j] = -gre
                g_c_im[i, j] = -gim
    return g_hr_re_arr, g_hr_im_arr, g_c_re_arr, g_c_im_arr


def score_pairs(double[:, ::1] hr_re, double[:, ::1] hr_im,
                double[:, ::1] t_re, double[:, ::1] t_im, int norm):
    cdef Py_ssize_t n = hr_re.shape[0], d = hr_re.shape[1]
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double acc, dre, dim
    for i in range(n):
        acc = 0.0
        if norm == 1:
            for j in range(d):
                dre = hr_re[i, j] - t_re[i, j]
                dim = hr_im[i, j] - t_im[i, j]
                acc += sqrt(dre * dre + dim * dim)
        else:
            for j in range(d):
                dre = hr_re[i, j] - t_re[i, j]
                dim = hr_im[i, j] - t_im[i, j]
                acc += dre * dre + dim * dim
            acc = sqrt(acc)
        out[i] = -acc
    return out_arr


def score_pairs_backward(double[:, ::1] hr_re, double[:, ::1] hr_im,
                         double[:, ::1] t_re, double[:, ::1] t_im,
                         int norm, double[::1] gout):
    cdef Py_ssize_t n = hr_re.shape[0], d = hr_re.shape[1]
    g_hr_re_arr = np.empty((n, d))
    g_hr_im_arr = np.empty((n, d))
    g_t_re_arr = np.empty((n, d))
    g_t_im_arr = np.empty((n, d))
    cdef double[:, ::1] g_hr_re = g_hr_re_arr, g_hr_im = g_hr_im_arr
    cdef double[:, ::1] g_t_re = g_t_re_arr, g_t_im = g_t_im_arr
    cdef Py_ssize_t i, j
    cdef double dre, dim, mod, scale, dist, gre, gim
    for i in range(n):
        if norm == 1:
            for j in range(d):
                dre = hr_re[i, j] - t_re[i, j]
                dim = hr_im[i, j] - t_im[i, j]
                mod = sqrt(dre * dre + dim * dim)
                if mod < _EPS:
                    mod = _EPS
                scale = -gout[i] / mod
                gre = scale * dre
                gim = scale * dim
                g_hr_re[i, j] = gre
                g_hr_im[i, j] = gim
                g_t_re[i, j] = -gre
                g_t_im[i, j] = -gim
        else:
            dist = 0.0
            for j in range(d):
                dre = hr_re[i, j] - t_re[i, j]
                dim = hr_im[i, j] - t_im[i, j]
                dist += dre * dre + dim * dim
            dist = sqrt(dist)
            if dist < _EPS:
                dist = _EPS
            scale = -gout[i] / dist
            for j in range(d):
                dre = hr_re[i, j] - t_re[i, j]
                dim = hr_im[i, j] - t_im[i, j]
                gre = scale * dre
                gim = scale * dim
                g_hr_re[i, j] = gre
                g_hr_im[i, j] = gim
                g_t_re[i, j] = -gre
                g_t_im[i, j] = -gim
    return g_hr_re_arr, g_hr_im_arr, g_t_re_arr, g_t_im_arr


def segment_softmax(double[::1] logits, int64_t[::1] offsets):
    cdef Py_ssize_t n_seg = offsets.shape[0] - 1
    out_arr = np.empty(logits.shape[0])
    cdef double[::1] out = out_arr
    cdef Py_ssize_t s, i, lo, hi
    cdef double mx, total
    for s in range(n_seg):
        lo = offsets[s]
        hi = offsets[s + 1]
        if hi == lo:
            continue
        mx = logits[lo]
        for i in range(lo + 1, hi):
            if logits[i] > mx:
                mx = logits[i]
        total = 0.0
        for i in range(lo, hi):
            out[i] = exp(logits[i] - mx)
            total += out[i]
        for i in range(lo, hi):
            out[i] /= total
    return out_arr


def segment_softmax_backward(double[::1] weights, int64_t[::1] offsets,
                             double[::1] gout):
    cdef Py_ssize_t n_seg = offsets.shape[0] - 1
    out_arr = np.empty(weights.shape[0])
    cdef double[::1] out = out_arr
    cdef Py_ssize_t s, i, lo, hi
    cdef double dot
    for s in range(n_seg):
        lo = offsets[s]
        hi = offsets[s + 1]
        if hi == lo:
            continue
        dot = 0.0
        for i in range(lo, hi):
            dot += weights[i] * gout[i]
        for i in range(lo, hi):
            out[i] = weights[i] * (gout[i] - dot)
    return out_arr


def segment_weighted_sum(double[:, ::1] values, double[::1] weights,
                         int64_t[::1] offsets):
    cdef Py_ssize_t n_seg = offsets.shape[0] - 1, d = values.shape[1]
    out_arr = np.zeros((n_seg, d))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t s, i, j
    cdef double w
    for s in range(n_seg):
        for i in range(offsets[s], offsets[s + 1]):
            w = weights[i]
            for j in range(d):
                out[s, j] += w * values[i, j]
    return out_arr


def segment_weighted_sum_backward(double[:, ::1] values, double[::1] weights,
                                  int64_t[::1] offsets, double[:, ::1] gout):
    cdef Py_ssize_t m = values.shape[0], d = values.shape[1]
    cdef Py_ssize_t n_seg = offsets.shape[0] - 1
    g_values_arr = np.empty((m, d))
    g_weights_arr = np.empty(m)
    cdef double[:, ::1] g_values = g_values_arr
    cdef double[::1] g_weights = g_weights_arr
    cdef Py_ssize_t s, i, j
    cdef double acc, w
    for s in range(n_seg):
        for i in range(offsets[s], offsets[s + 1]):
            w = weights[i]
            acc = 0.0
            for j in range(d):
                g_values[i, j] = w * gout[s, j]
                acc += values[i, j] * gout[s, j]
            g_weights[i] = acc
    return g_values_arr, g_weights_arr
