# cython: language_level=3
"""Compiled inner loops: product-kernel weighted sums and exact nearest neighbours."""
import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt, M_PI

cnp.import_array()

DEF GAUSSIAN = 0
DEF EPANECHNIKOV = 1


cdef inline double _poly(double u, int order) noexcept nogil:
    cdef double u2 = u * u
    if order == 2:
        return 1.0
    elif order == 4:
        return 0.5 * (3.0 - u2)
    else:
        return 0.125 * (15.0 - 10.0 * u2 + u2 * u2)


def nw_sums(const double[:, ::1] train, const double[:] y,
            const double[:, ::1] query, double h, int family, int order):
    """Return (sum_i K((q - t_i)/h) y_i, sum_i K((q - t_i)/h)) for every query row."""
    cdef Py_ssize_t n = train.shape[0]
    cdef Py_ssize_t m = query.shape[0]
    cdef Py_ssize_t r = train.shape[1]
    cdef Py_ssize_t i, j, d
    cdef double inv_h = 1.0 / h
    cdef double norm_g = (2.0 * M_PI) ** (-0.5 * r)
    cdef double u, s2, w, poly, num, den
    cdef bint inside
    num_out = np.zeros(m, dtype=np.float64)
    den_out = np.zeros(m, dtype=np.float64)
    cdef double[:] nv = num_out
    cdef double[:] dv = den_out
    with nogil:
        for j in range(m):
            num = 0.0
            den = 0.0
            for i in range(n):
                if family == GAUSSIAN:
                    s2 = 0.0
                    poly = 1.0
                    for d in range(r):
                        u = (query[j, d] - train[i, d]) * inv_h
                        s2 = s2 + u * u
                        if order != 2:
                            poly = poly * _poly(u, order)
                    if s2 > 1400.0:
                        continue
                    w = norm_g * exp(-0.5 * s2) * poly
                else:
                    w = 1.0
                    inside = True
                    for d in range(r):
                        u = (query[j, d] - train[i, d]) * inv_h
                        if u >= 1.0 or u <= -1.0:
                            inside = False
                            break
                        w = w * 0.75 * (1.0 - u * u)
                    if not inside:
                        continue
                num = num + w * y[i]
                den = den + w
            nv[j] = num
            dv[j] = den
    return num_out, den_out


def nearest_index(const double[:, ::1] train, const double[:, ::1] query):
    """Index of the nearest training row (squared Euclidean); ties go to the lowest index."""
    cdef Py_ssize_t n = train.shape[0]
    cdef Py_ssize_t m = query.shape[0]
    cdef Py_ssize_t p = train.shape[1]
    cdef Py_ssize_t i, j, d
    cdef double best, dist, diff
    cdef Py_ssize_t arg
    out = np.empty(m, dtype=np.int64)
    cdef cnp.int64_t[:] ov = out
    with nogil:
        for j in range(m):
            best = 1.0e308
            arg = 0
            for i in range(n):
                dist = 0.0
                for d in range(p):
                    diff = query[j, d] - train[i, d]
                    dist = dist + diff * diff
                    if dist >= best:
                        break
                if dist < best:
                    best = dist
                    arg = i
            ov[j] = arg
    return out


def colsum(const double[:, ::1] a):
    """Neumaier-compensated column sums, rows added in order."""
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = a.shape[1]
    cdef Py_ssize_t i, j
    cdef double x, t
    s_arr = np.zeros(m)
    c_arr = np.zeros(m)
    cdef double[::1] s = s_arr
    cdef double[::1] c = c_arr
    with nogil:
        for i in range(n):
            for j in range(m):
                x = a[i, j]
                t = s[j] + x
                if (s[j] if s[j] >= 0 else -s[j]) >= (x if x >= 0 else -x):
                    c[j] += (s[j] - t) + x
                else:
                    c[j] += (x - t) + s[j]
                s[j] = t
        for j in range(m):
            s[j] = s[j] + c[j]
    return s_arr
