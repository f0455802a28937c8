"""Pure-numpy versions of the compiled kernels in ``_ckernels.pyx``.

Same signatures and semantics; used when the extension is not built.
"""
import numpy as np

GAUSSIAN = 0
EPANECHNIKOV = 1

_BLOCK = 512


def _poly(u, order):
    if order == 2:
        return np.ones_like(u)
    u2 = u * u
    if order == 4:
        return 0.5 * (3.0 - u2)
    return 0.125 * (15.0 - 10.0 * u2 + u2 * u2)


def _weights(train, qblock, h, family, order):
    u = (qblock[:, None, :] - train[None, :, :]) / h
    if family == GAUSSIAN:
        r = train.shape[1]
        s2 = np.einsum("ijk,ijk->ij", u, u)
        w = (2.0 * np.pi) ** (-0.5 * r) * np.exp(-0.5 * s2)
        w[s2 > 1400.0] = 0.0
        if order != 2:
            w = w * np.prod(_poly(u, order), axis=2)
        return w
    inside = np.all(np.abs(u) < 1.0, axis=2)
    w = np.prod(0.75 * (1.0 - u * u), axis=2)
    return np.where(inside, w, 0.0)


def nw_sums(train, y, query, h, family, order):
    train = np.ascontiguousarray(train, dtype=float)
    query = np.ascontiguousarray(query, dtype=float)
    y = np.asarray(y, dtype=float)
    m = query.shape[0]
    num = np.zeros(m)
    den = np.zeros(m)
    for start in range(0, m, _BLOCK):
        w = _weights(train, query[start:start + _BLOCK], h, family, order)
        num[start:start + _BLOCK] = w @ y
        den[start:start + _BLOCK] = w.sum(axis=1)
    return num, den


def nearest_index(train, query):
    train = np.ascontiguousarray(train, dtype=float)
    query = np.ascontiguousarray(query, dtype=float)
    out = np.empty(query.shape[0], dtype=np.int64)
    for start in range(0, query.shape[0], _BLOCK):
        block = query[start:start + _BLOCK]
        diff = block[:, None, :] - train[None, :, :]
        dist = np.einsum("ijk,ijk->ij", diff, diff)
        # argmin returns the first minimiser, i.e. the lowest training index
        out[start:start + _BLOCK] = np.argmin(dist, axis=1)
    return out


def colsum(a):
    """Neumaier-compensated column sums, rows added in order."""
    a = np.ascontiguousarray(a, dtype=float)
    s = np.zeros(a.shape[1])
    c = np.zeros(a.shape[1])
    for x in a:
        t = s + x
        big = np.abs(s) >= np.abs(x)
        c += np.where(big, (s - t) + x, (x - t) + s)
        s = t
    return s + c
