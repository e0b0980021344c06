# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled counter-based random kernels (see ``_pykernels`` for semantics)."""

from array import array

from libc.stdint cimport uint64_t, int64_t

BACKEND = "cython"

cdef uint64_t _GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t _M1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t _M2 = 0x94D049BB133111EBULL
cdef double _INV53 = 1.0 / 9007199254740992.0


cdef inline uint64_t _mix(uint64_t z) nogil:
    z = z + _GOLDEN
    z = (z ^ (z >> 30)) * _M1
    z = (z ^ (z >> 27)) * _M2
    return z ^ (z >> 31)


cdef inline double _uniform(uint64_t key, uint64_t idx) nogil:
    return <double>(_mix(key ^ _mix(idx)) >> 11) * _INV53


def mix64(z):
    return _mix(<uint64_t>(z & 0xFFFFFFFFFFFFFFFF))


def uniform(key, index):
    return _uniform(<uint64_t>(key & 0xFFFFFFFFFFFFFFFF),
                    <uint64_t>(index & 0xFFFFFFFFFFFFFFFF))


def uniform_block(key, start, Py_ssize_t count):
    cdef uint64_t k = <uint64_t>(key & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t s = <uint64_t>(start & 0xFFFFFFFFFFFFFFFF)
    out = array("d", bytes(8 * count))
    cdef double[::1] view = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(count):
            view[i] = _uniform(k, s + <uint64_t>i)
    return out


def draw_modes(key, start, Py_ssize_t count, cumulative):
    cdef uint64_t k = <uint64_t>(key & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t s = <uint64_t>(start & 0xFFFFFFFFFFFFFFFF)
    bounds = array("d", [float(x) for x in cumulative])
    cdef Py_ssize_t n = len(bounds)
    cdef double[::1] b
    if n:
        b = bounds
    out = array("q", bytes(8 * count))
    cdef int64_t[::1] view = out
    cdef Py_ssize_t i, lo, hi, mid
    cdef double u
    with nogil:
        for i in range(count):
            u = _uniform(k, s + <uint64_t>i)
            # bisect_right
            lo = 0
            hi = n
            while lo < hi:
                mid = (lo + hi) >> 1
                if u < b[mid]:
                    hi = mid
                else:
                    lo = mid + 1
            view[i] = lo if lo < n else -1
    return out
