# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Signatures mirror ``_pykernels`` exactly."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

ctypedef cnp.uint8_t u8


def confusion_counts(pred, gt):
    pred = np.ascontiguousarray(pred)
    gt = np.ascontiguousarray(gt)
    if pred.dtype != np.bool_:
        pred = pred.astype(bool)
    if gt.dtype != np.bool_:
        gt = gt.astype(bool)
    # bool bytes are exactly 0 or 1, so they can be summed directly
    cdef const u8[::1] p = pred.view(np.uint8).ravel()
    cdef const u8[::1] g = gt.view(np.uint8).ravel()
    cdef Py_ssize_t n = p.shape[0], i, start, stop
    cdef long long tp = 0, np_ = 0, ng = 0
    cdef unsigned int btp, bp, bg
    # 32-bit block sums let the compiler vectorize the inner loop
    for start in range(0, n, 1 << 20):
        stop = min(start + (1 << 20), n)
        btp = bp = bg = 0
        for i in range(start, stop):
            btp += p[i] & g[i]
            bp += p[i]
            bg += g[i]
        tp += btp
        np_ += bp
        ng += bg
    return int(tp), int(np_ - tp), int(ng - tp), int(n - np_ - ng + tp)


def box_histogram(image, int x0, int y0, int x1, int y1):
    cdef const u8[:, :] img = np.ascontiguousarray(image, dtype=np.uint8)
    hist = np.zeros(256, dtype=np.int64)
    cdef cnp.int64_t[:] hv = hist
    cdef Py_ssize_t i, j
    for i in range(y0, y1):
        for j in range(x0, x1):
            hv[img[i, j]] += 1
    return hist


def otsu_level(hist):
    cdef cnp.int64_t[:] h = np.ascontiguousarray(hist, dtype=np.int64)
    cdef Py_ssize_t t, nb = h.shape[0]
    cdef double total = 0.0, total_sum = 0.0
    cdef double w0 = 0.0, s0 = 0.0, w1, m0, m1, var, best = -1.0
    cdef int nonzero = 0, last = -1, level = 0
    for t in range(nb):
        if h[t] > 0:
            nonzero += 1
            last = <int>t
        total += h[t]
        total_sum += <double>t * h[t]
    if nonzero == 0:
        return -1
    if nonzero == 1:
        return last
    for t in range(nb):
        w0 += h[t]
        s0 += <double>t * h[t]
        w1 = total - w0
        if w0 == 0.0 or w1 == 0.0:
            var = 0.0
        else:
            m0 = s0 / w0
            m1 = (total_sum - s0) / w1
            var = (w0 / total) * (w1 / total) * (m0 - m1) * (m0 - m1)
        if var > best:
            best = var
            level = <int>t
    return level


def gate_statuses(detected, long hold):
    cdef const u8[:] d = np.ascontiguousarray(detected).view(np.uint8)
    cdef Py_ssize_t n = d.shape[0], t
    out = np.zeros(n, dtype=np.int8)
    cdef cnp.int8_t[:] o = out
    cdef long since = -1
    cdef bint seen = False
    for t in range(n):
        if d[t]:
            seen = True
            since = 0
            o[t] = 2
        else:
            if seen:
                since += 1
                if hold < 0 or since < hold:
                    o[t] = 1
    return out


def subset_sum_counts(weights, int k):
    cdef cnp.int64_t[:] w = np.ascontiguousarray(weights, dtype=np.int64)
    cdef Py_ssize_t n = w.shape[0], r, j, s
    cdef long long total = 0
    for r in range(n):
        total += w[r]
    counts = np.zeros((k + 1, total + 1), dtype=np.float64)
    cdef double[:, :] c = counts
    cdef long long reach = 0, wr
    c[0, 0] = 1.0
    for r in range(n):
        wr = w[r]
        reach += wr
        for j in range(min(r + 1, k), 0, -1):
            for s in range(reach, wr - 1, -1):
                c[j, s] += c[j - 1, s - wr]
    return counts[k].copy()
