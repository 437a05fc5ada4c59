# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the kernels in _reference.py (same signatures)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, INFINITY

cnp.import_array()

cdef double GELU_C = 0.7978845608028654  # sqrt(2/pi)


def _rows(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.shape[x.ndim - 1] if x.ndim else 1
    return x, x.reshape(x.size // n, n)


def gelu_fwd(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    out = np.empty_like(x)
    deriv = np.empty_like(x)
    cdef double[::1] xv = x.reshape(-1)
    cdef double[::1] ov = out.reshape(-1)
    cdef double[::1] dv = deriv.reshape(-1)
    cdef Py_ssize_t i, n = xv.shape[0]
    cdef double a, th, x2, u
    with nogil:
        for i in range(n):
            a = xv[i]
            x2 = a * a
            # tanh via exp: glibc's tanh is several times slower than exp
            u = GELU_C * (a + 0.044715 * x2 * a)
            if u > 20.0:
                th = 1.0
            elif u < -20.0:
                th = -1.0
            else:
                th = 1.0 - 2.0 / (exp(2.0 * u) + 1.0)
            ov[i] = 0.5 * a * (1.0 + th)
            dv[i] = 0.5 * (1.0 + th) + 0.5 * a * (1.0 - th * th) * GELU_C * (1.0 + 3 * 0.044715 * x2)
    return out, deriv


def layer_norm_fwd(x, double eps):
    x, x2 = _rows(x)
    xhat = np.empty_like(x2)
    inv = np.empty((x2.shape[0], 1))
    cdef double[:, ::1] xv = x2
    cdef double[:, ::1] hv = xhat
    cdef double[:, ::1] iv = inv
    cdef Py_ssize_t r, j, R = xv.shape[0], n = xv.shape[1]
    cdef double mu, var, d, s
    with nogil:
        for r in range(R):
            mu = 0.0
            for j in range(n):
                mu += xv[r, j]
            mu /= n
            var = 0.0
            for j in range(n):
                d = xv[r, j] - mu
                var += d * d
            s = 1.0 / sqrt(var / n + eps)
            iv[r, 0] = s
            for j in range(n):
                hv[r, j] = (xv[r, j] - mu) * s
    return xhat.reshape(x.shape), inv.reshape(tuple(x.shape)[: x.ndim - 1] + (1,))


def layer_norm_bwd(g, xhat, inv):
    g, g2 = _rows(g)
    _, h2 = _rows(xhat)
    _, i2 = _rows(inv)
    out = np.empty_like(g2)
    cdef double[:, ::1] gv = g2
    cdef double[:, ::1] hv = h2
    cdef double[:, ::1] iv = i2
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t r, j, R = gv.shape[0], n = gv.shape[1]
    cdef double gm, gh
    with nogil:
        for r in range(R):
            gm = 0.0
            gh = 0.0
            for j in range(n):
                gm += gv[r, j]
                gh += gv[r, j] * hv[r, j]
            gm /= n
            gh /= n
            for j in range(n):
                ov[r, j] = iv[r, 0] * (gv[r, j] - gm - hv[r, j] * gh)
    return out.reshape(g.shape)


def attention_probs(s):
    s, s2 = _rows(s)
    out = np.empty_like(s2)
    cdef double[:, ::1] sv = s2
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t r, j, R = sv.shape[0], n = sv.shape[1]
    cdef double m, z, e
    with nogil:
        for r in range(R):
            m = -INFINITY
            for j in range(n):
                if sv[r, j] > m:
                    m = sv[r, j]
            if m == -INFINITY:
                for j in range(n):
                    ov[r, j] = 0.0
                continue
            z = 0.0
            for j in range(n):
                e = exp(sv[r, j] - m)
                ov[r, j] = e
                z += e
            for j in range(n):
                ov[r, j] = ov[r, j] / z
    return out.reshape(s.shape)


def softmax_bwd(g, y):
    g, g2 = _rows(g)
    _, y2 = _rows(y)
    out = np.empty_like(g2)
    cdef double[:, ::1] gv = g2
    cdef double[:, ::1] yv = y2
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t r, j, R = gv.shape[0], n = gv.shape[1]
    cdef double dot
    with nogil:
        for r in range(R):
            dot = 0.0
            for j in range(n):
                dot += gv[r, j] * yv[r, j]
            for j in range(n):
                ov[r, j] = yv[r, j] * (gv[r, j] - dot)
    return out.reshape(g.shape)


def col2im(cols, out_shape, int kh, int kw, int stride):
    cols = np.ascontiguousarray(cols, dtype=np.float64)
    out = np.zeros(out_shape, dtype=np.float64)
    cdef double[:, :, :, :, :, ::1] cv = cols
    cdef double[:, :, :, ::1] ov = out
    cdef Py_ssize_t b, y, x, i, j, c
    cdef Py_ssize_t B = cv.shape[0], Ho = cv.shape[1], Wo = cv.shape[2], C = cv.shape[5]
    with nogil:
        for b in range(B):
            for y in range(Ho):
                for x in range(Wo):
                    for i in range(kh):
                        for j in range(kw):
                            for c in range(C):
                                ov[b, y * stride + i, x * stride + j, c] += cv[b, y, x, i, j, c]
    return out


def levenshtein(a, b):
    cdef Py_ssize_t n = len(a), m = len(b), i, j
    cdef long[::1] prev = np.arange(m + 1, dtype=np.int64)
    cdef long[::1] cur = np.empty(m + 1, dtype=np.int64)
    cdef long best, cost
    for i in range(1, n + 1):
        cur[0] = i
        ca = a[i - 1]
        for j in range(1, m + 1):
            cost = 0 if ca == b[j - 1] else 1
            best = prev[j] + 1
            if cur[j - 1] + 1 < best:
                best = cur[j - 1] + 1
            if prev[j - 1] + cost < best:
                best = prev[j - 1] + cost
            cur[j] = best
        prev, cur = cur, prev
    return int(prev[m])


def hamming_to_templates(cell, templates):
    c = np.ascontiguousarray(cell, dtype=np.uint8).reshape(-1)
    t = np.ascontiguousarray(templates, dtype=np.uint8).reshape(len(templates), -1)
    if t.shape[1] != c.shape[0]:
        raise ValueError(f"cell {np.shape(cell)} does not match templates {np.shape(templates)}")
    out = np.zeros(t.shape[0], dtype=np.int64)
    cdef unsigned char[::1] cv = c
    cdef unsigned char[:, ::1] tv = t
    cdef long[::1] ov = out
    cdef Py_ssize_t k, p
    for k in range(tv.shape[0]):
        for p in range(tv.shape[1]):
            if tv[k, p] != cv[p]:
                ov[k] += 1
    return out
