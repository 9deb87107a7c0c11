"""Pure-Python text kernels.

Reference implementation of the hot loops: word-run tokenization and the
hashed bag-of-words embedding. The compiled extension in ``_native.pyx``
must produce bit-identical results; parity is enforced by tests.

A *word* is a maximal run of characters delimited by whitespace, ``=`` or
``/``. Delimiters never count as words and consecutive delimiters collapse
into one split.
"""

from __future__ import annotations

import re

import numpy as np

# re's \s and str.isspace() agree character-for-character, which keeps this
# regex in lockstep with the code-point scan in the compiled kernel.
_WORD_RE = re.compile(r"[^\s=/]+")

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
FNV_SIGN_OFFSET = 0x9FF8F251EC41B3CD
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a(data: bytes, seed: int = FNV_OFFSET) -> int:
    """64-bit FNV-1a over ``data`` starting from ``seed``."""
    h = seed
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & _MASK64
    return h


def count_words(text: str) -> int:
    return sum(1 for _ in _WORD_RE.finditer(text))


def token_spans(text: str) -> np.ndarray:
    """(start, end) character offsets of every word run, shape (n, 2)."""
    spans = [m.span() for m in _WORD_RE.finditer(text)]
    if not spans:
        return np.empty((0, 2), dtype=np.int64)
    return np.array(spans, dtype=np.int64)


def hash_embed(text: str, dim: int) -> np.ndarray:
    """Unnormalized signed bag-of-words vector of ``text``.

    Each lowercased word is hashed to a bucket in [0, dim) and contributes
    +1 or -1 according to an independent second hash.
    """
    vec = np.zeros(dim, dtype=np.float64)
    for m in _WORD_RE.finditer(text):
        data = m.group().lower().encode("utf-8")
        bucket = fnv1a(data) % dim
        if fnv1a(data, FNV_SIGN_OFFSET) & 1:
            vec[bucket] += 1.0
        else:
            vec[bucket] -= 1.0
    return vec
