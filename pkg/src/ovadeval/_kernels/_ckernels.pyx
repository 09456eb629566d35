# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Arithmetic mirrors ``_pykernels`` operation for operation."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def ap_sorted(const double[::1] scores, const signed char[::1] labels, Py_ssize_t n_ghost):
    cdef Py_ssize_t n = scores.shape[0]
    cdef Py_ssize_t i, g = 0
    cdef Py_ssize_t tp = 0, fp = 0, npos = n_ghost
    cdef double ap = 0.0, prev = 0.0
    for i in range(n):
        if labels[i] == 1:
            npos += 1
    if npos == 0:
        return float("nan")
    if n == 0:
        return 0.0
    cdef double[::1] rec = np.empty(n, dtype=np.float64)
    cdef double[::1] prec = np.empty(n, dtype=np.float64)
    with nogil:
        for i in range(n):
            if labels[i] == 1:
                tp += 1
            else:
                fp += 1
            if i == n - 1 or scores[i + 1] != scores[i]:
                rec[g] = <double>tp / <double>npos
                prec[g] = <double>tp / <double>(tp + fp)
                g += 1
        for i in range(g - 2, -1, -1):
            if prec[i] < prec[i + 1]:
                prec[i] = prec[i + 1]
        for i in range(g):
            ap += (rec[i] - prev) * prec[i]
            prev = rec[i]
    return ap


def iou_matrix(const double[:, ::1] a, const double[:, ::1] b):
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0], i, j
    out = np.zeros((n, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double ax2, ay2, bx2, by2, iw, ih, inter, union, area_a, area_b
    with nogil:
        for i in range(n):
            ax2 = a[i, 0] + a[i, 2]
            ay2 = a[i, 1] + a[i, 3]
            # areas from corner differences, so a box against itself gives exactly 1
            area_a = (ax2 - a[i, 0]) * (ay2 - a[i, 1])
            for j in range(m):
                bx2 = b[j, 0] + b[j, 2]
                by2 = b[j, 1] + b[j, 3]
                iw = min(ax2, bx2) - max(a[i, 0], b[j, 0])
                ih = min(ay2, by2) - max(a[i, 1], b[j, 1])
                if iw <= 0.0 or ih <= 0.0:
                    continue
                area_b = (bx2 - b[j, 0]) * (by2 - b[j, 1])
                inter = iw * ih
                union = area_a + area_b - inter
                o[i, j] = inter / union
    return out


def greedy_match(const double[:, ::1] iou, const cnp.int64_t[::1] order, double thresh):
    cdef Py_ssize_t p = iou.shape[0], ng = iou.shape[1], k, g, best, t
    cdef double v, best_iou
    tp = np.zeros(p, dtype=np.int8)
    assigned = np.full(p, -1, dtype=np.int64)
    claimed_arr = np.zeros(ng, dtype=np.int8)
    cdef signed char[::1] tp_v = tp
    cdef cnp.int64_t[::1] as_v = assigned
    cdef signed char[::1] claimed = claimed_arr
    with nogil:
        for t in range(order.shape[0]):
            k = order[t]
            best = -1
            best_iou = 0.0
            for g in range(ng):
                if claimed[g]:
                    continue
                v = iou[k, g]
                if v >= thresh and (best < 0 or v > best_iou):
                    best = g
                    best_iou = v
            if best >= 0:
                claimed[best] = 1
                tp_v[k] = 1
                as_v[k] = best
    return tp, assigned
