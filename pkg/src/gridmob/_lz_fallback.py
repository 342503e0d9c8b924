"""Pure-Python match-length kernel, used when the compiled one is absent.

Same contract as the compiled module: for each position p, the length
of the shortest substring starting at p that is not contained in
s[0:p], overrunning by one when the whole suffix is contained.

Symbols are mapped to unicode code points so the containment check can
ride on ``str.find`` (a C-level substring search); match lengths shrink
by at most one per position, so only extensions are ever searched.
"""

from __future__ import annotations

import numpy as np

_SURROGATE_START = 0xD800
_SURROGATE_SPAN = 0x800


def _codepoint(index: int) -> int:
    if index >= _SURROGATE_START:
        index += _SURROGATE_SPAN
    return index


def match_lengths(symbols: np.ndarray, sigma: int) -> np.ndarray:
    n = len(symbols)
    out = np.empty(n, dtype=np.int64)
    if n == 0:
        return out
    text = "".join(chr(_codepoint(int(s))) for s in symbols)
    length = 0
    find = text.find
    for p in range(n):
        if length > 0:
            length -= 1
        cap = n - p
        while length < cap and find(text[p : p + length + 1], 0, p) != -1:
            length += 1
        out[p] = length + 1 if length < cap else cap + 1
    return out
