# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: exact squared Euclidean distance transform and the
splitmix64 counter stream. Pure-Python equivalents live in ``_fallback``."""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t MIX1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t MIX2 = 0x94D049BB133111EBULL
cdef int64_t INF = 1LL << 60


cdef inline uint64_t _mix(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * MIX1
    z = (z ^ (z >> 27)) * MIX2
    return z ^ (z >> 31)


def splitmix_uint64(uint64_t key, uint64_t start, Py_ssize_t n):
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] out = np.empty(n, dtype=np.uint64)
    cdef Py_ssize_t i
    cdef uint64_t base = key + start * GOLDEN
    with nogil:
        for i in range(n):
            base = base + GOLDEN
            out[i] = _mix(base)
    return out


cdef void _envelope(int64_t* f, int64_t* d, Py_ssize_t n,
                    int64_t* v, double* z) noexcept nogil:
    # Felzenszwalb-Huttenlocher lower envelope of parabolas, integer heights.
    cdef Py_ssize_t k = -1, j
    cdef int64_t q
    cdef double s
    for q in range(n):
        if f[q] >= INF:
            continue
        while k >= 0:
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * (q - v[k]))
            if s <= z[k]:
                k -= 1
            else:
                break
        k += 1
        v[k] = q
        if k == 0:
            z[k] = -1e300
        else:
            z[k] = ((f[q] + q * q) - (f[v[k - 1]] + v[k - 1] * v[k - 1])) / (2.0 * (q - v[k - 1]))
    if k < 0:
        for q in range(n):
            d[q] = INF
        return
    z[k + 1] = 1e300
    j = 0
    for q in range(n):
        while z[j + 1] < q:
            j += 1
        d[q] = (q - v[j]) * (q - v[j]) + f[v[j]]


def edt_sq(features):
    """Exact squared distance (int64) from every pixel to the nearest True pixel.

    Pixels are at infinite distance (2**60) when ``features`` has no True entry.
    """
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] feat = np.ascontiguousarray(features, dtype=np.uint8)
    cdef Py_ssize_t h = feat.shape[0], w = feat.shape[1], y, x, n = max(h, w)
    cdef cnp.ndarray[cnp.int64_t, ndim=2] out = np.empty((h, w), dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] f = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] d = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] v = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] z = np.empty(n + 1, dtype=np.float64)
    with nogil:
        for x in range(w):
            for y in range(h):
                f[y] = 0 if feat[y, x] else INF
            _envelope(&f[0], &d[0], h, &v[0], &z[0])
            for y in range(h):
                out[y, x] = d[y]
        for y in range(h):
            for x in range(w):
                f[x] = out[y, x]
            _envelope(&f[0], &d[0], w, &v[0], &z[0])
            for x in range(w):
                out[y, x] = d[x] if d[x] < INF else INF
    return out
