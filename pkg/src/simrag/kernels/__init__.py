"""Kernel dispatch: compiled extension when available, pure Python otherwise.

Set SIMRAG_PURE_PYTHON=1 to force the pure implementation (used by the
parity tests and the benchmark). Both implementations are bit-identical;
``IMPLEMENTATION`` reports which one is active.
"""

from __future__ import annotations

import os

from ._pure import FNV_OFFSET, FNV_PRIME, FNV_SIGN_OFFSET, fnv1a

if os.environ.get("SIMRAG_PURE_PYTHON") == "1":
    _impl = None
else:
    try:
        from . import _native as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = None

if _impl is not None:
    IMPLEMENTATION = "native"
    count_words = _impl.count_words
    token_spans = _impl.token_spans
    hash_embed = _impl.hash_embed
else:
    from . import _pure as _pure_mod

    IMPLEMENTATION = "pure"
    count_words = _pure_mod.count_words
    token_spans = _pure_mod.token_spans
    hash_embed = _pure_mod.hash_embed

__all__ = [
    "IMPLEMENTATION",
    "FNV_OFFSET",
    "FNV_PRIME",
    "FNV_SIGN_OFFSET",
    "fnv1a",
    "count_words",
    "token_spans",
    "hash_embed",
]
