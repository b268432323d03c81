"""numpy implementations of the compiled kernels, used when the extension is absent."""

import numpy as np


def confusion_counts(pred, gt):
    p = np.asarray(pred, dtype=bool)
    g = np.asarray(gt, dtype=bool)
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p)) - tp
    fn = int(np.count_nonzero(g)) - tp
    return tp, fp, fn, p.size - tp - fp - fn


def box_histogram(image, x0, y0, x1, y1):
    region = np.asarray(image, dtype=np.uint8)[y0:y1, x0:x1]
    return np.bincount(region.ravel(), minlength=256).astype(np.int64)


def otsu_level(hist):
    h = np.asarray(hist, dtype=np.float64)
    nz = np.flatnonzero(h)
    if nz.size == 0:
        return -1
    if nz.size == 1:
        return int(nz[0])
    total = h.sum()
    levels = np.arange(h.size, dtype=np.float64)
    w0 = np.cumsum(h)
    s0 = np.cumsum(levels * h)
    w1 = total - w0
    with np.errstate(divide="ignore", invalid="ignore"):
        m0 = s0 / w0
        m1 = (s0[-1] - s0) / w1
        var = (w0 / total) * (w1 / total) * (m0 - m1) * (m0 - m1)
    var[(w0 == 0) | (w1 == 0)] = 0.0
    # argmax returns the first maximum, i.e. the lowest level on ties
    return int(np.argmax(var))


def gate_statuses(detected, hold):
    d = np.asarray(detected, dtype=bool)
    out = np.zeros(d.size, dtype=np.int8)
    since = -1
    for t, fired in enumerate(d.tolist()):
        if fired:
            since = 0
            out[t] = 2
        elif since >= 0:
            since += 1
            if hold < 0 or since < hold:
                out[t] = 1
    return out


def subset_sum_counts(weights, k):
    w = np.asarray(weights, dtype=np.int64)
    total = int(w.sum())
    counts = np.zeros((k + 1, total + 1), dtype=np.float64)
    counts[0, 0] = 1.0
    reach = 0
    for r, wr in enumerate(w.tolist()):
        reach += wr
        for j in range(min(r + 1, k), 0, -1):
            counts[j, wr:reach + 1] += counts[j - 1, : reach + 1 - wr]
    return counts[k].copy()
