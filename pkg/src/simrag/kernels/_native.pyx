# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled text kernels: word-run tokenization and hashed embedding.

Mirrors ``_pure.py`` exactly; the word-run delimiter set is whitespace
(Py_UNICODE_ISSPACE, identical to str.isspace / re's \\s), '=' and '/'.
"""

from cpython.unicode cimport Py_UNICODE_ISSPACE
from libc.stdint cimport int64_t, uint64_t

import numpy as np

cdef uint64_t FNV_OFFSET = 0xCBF29CE484222325u
cdef uint64_t FNV_PRIME = 0x100000001B3u
cdef uint64_t FNV_SIGN_OFFSET = 0x9FF8F251EC41B3CDu


cdef inline bint _is_delim(Py_UCS4 ch):
    return ch == u'=' or ch == u'/' or Py_UNICODE_ISSPACE(ch)


cdef inline uint64_t _fnv1a(const unsigned char[::1] data, uint64_t seed):
    cdef uint64_t h = seed
    cdef Py_ssize_t i
    for i in range(data.shape[0]):
        h ^= <uint64_t>data[i]
        h *= FNV_PRIME
    return h


def count_words(unicode text not None):
    cdef Py_ssize_t i, n = len(text)
    cdef Py_ssize_t count = 0
    cdef bint in_word = False
    cdef Py_UCS4 ch
    for i in range(n):
        ch = text[i]
        if _is_delim(ch):
            in_word = False
        elif not in_word:
            in_word = True
            count += 1
    return count


def token_spans(unicode text not None):
    """(start, end) character offsets of every word run, shape (n, 2)."""
    cdef Py_ssize_t i, n = len(text)
    cdef Py_ssize_t count = count_words(text)
    spans = np.empty((count, 2), dtype=np.int64)
    cdef int64_t[:, ::1] out = spans
    cdef Py_ssize_t row = 0
    cdef Py_ssize_t start = -1
    cdef Py_UCS4 ch
    for i in range(n):
        ch = text[i]
        if _is_delim(ch):
            if start >= 0:
                out[row, 0] = start
                out[row, 1] = i
                row += 1
                start = -1
        elif start < 0:
            start = i
    if start >= 0:
        out[row, 0] = start
        out[row, 1] = n
    return spans


def hash_embed(unicode text not None, Py_ssize_t dim):
    """Unnormalized signed bag-of-words vector of ``text``."""
    vec = np.zeros(dim, dtype=np.float64)
    cdef double[::1] out = vec
    cdef Py_ssize_t i, n = len(text)
    cdef Py_ssize_t start = -1
    cdef Py_UCS4 ch
    cdef const unsigned char[::1] data
    cdef uint64_t bucket
    for i in range(n):
        ch = text[i]
        if _is_delim(ch):
            if start >= 0:
                data = text[start:i].lower().encode("utf-8")
                bucket = _fnv1a(data, FNV_OFFSET) % <uint64_t>dim
                if _fnv1a(data, FNV_SIGN_OFFSET) & 1u:
                    out[bucket] += 1.0
                else:
                    out[bucket] -= 1.0
                start = -1
        elif start < 0:
            start = i
    if start >= 0:
        data = text[start:n].lower().encode("utf-8")
        bucket = _fnv1a(data, FNV_OFFSET) % <uint64_t>dim
        if _fnv1a(data, FNV_SIGN_OFFSET) & 1u:
            out[bucket] += 1.0
        else:
            out[bucket] -= 1.0
    return vec
