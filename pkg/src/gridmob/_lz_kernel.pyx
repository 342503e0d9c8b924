# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled match-length kernel for the sequence-entropy estimator.

For each position p of a symbol sequence, computes the length of the
shortest substring starting at p that does not occur anywhere inside
the preceding window s[0:p] (overrunning by one when the entire suffix
occurs). Symbols must be relabeled to the dense range 0..sigma-1.

The scan keeps the previous position's match (shifting it by one keeps
it valid, so the inherited length never needs re-verification) and
extends it by walking per-symbol chains of earlier occurrences. When
the alphabet is small enough, chains are indexed by symbol pairs, which
prunes candidates sharply on low-entropy inputs.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

# pair-indexed chains need sigma**2 slots; cap the table at ~32 MB
DEF MAX_PAIR_SIGMA = 2048


def match_lengths(cnp.int64_t[::1] s, cnp.int64_t sigma):
    cdef Py_ssize_t n = s.shape[0]
    out = np.empty(n, dtype=np.int64)
    if n == 0:
        return out
    cdef cnp.int64_t[::1] lam = out
    cdef bint use_pairs = sigma <= MAX_PAIR_SIGMA and n > 2

    last1_arr = np.full(sigma, -1, dtype=np.int64)
    prev1_arr = np.full(n, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] last1 = last1_arr
    cdef cnp.int64_t[::1] prev1 = prev1_arr

    if use_pairs:
        last2_arr = np.full(sigma * sigma, -1, dtype=np.int64)
        prev2_arr = np.full(n, -1, dtype=np.int64)
    else:
        last2_arr = np.empty(0, dtype=np.int64)
        prev2_arr = np.empty(0, dtype=np.int64)
    cdef cnp.int64_t[::1] last2 = last2_arr
    cdef cnp.int64_t[::1] prev2 = prev2_arr

    cdef Py_ssize_t p, q, c, j, cap, L, pair
    cdef bint extended, ok

    with nogil:
        L = 0
        q = -1
        for p in range(n):
            if L > 0:
                L -= 1
                q += 1
            else:
                q = -1
            cap = n - p
            while L < cap:
                extended = False
                if q >= 0 and q + L + 1 <= p and s[q + L] == s[p + L]:
                    L += 1
                    extended = True
                elif use_pairs and L >= 1:
                    # candidates whose first two symbols already match
                    pair = s[p] * sigma + s[p + 1]
                    c = last2[pair]
                    while c > p - L - 1:
                        c = prev2[c]
                    while c >= 0:
                        ok = True
                        for j in range(2, L + 1):
                            if s[c + j] != s[p + j]:
                                ok = False
                                break
                        if ok:
                            q = c
                            L += 1
                            extended = True
                            break
                        c = prev2[c]
                else:
                    c = last1[s[p]]
                    while c > p - L - 1:
                        c = prev1[c]
                    while c >= 0:
                        ok = True
                        for j in range(1, L + 1):
                            if s[c + j] != s[p + j]:
                                ok = False
                                break
                        if ok:
                            q = c
                            L += 1
                            extended = True
                            break
                        c = prev1[c]
                if not extended:
                    break
            if L < cap:
                lam[p] = L + 1
            else:
                lam[p] = cap + 1
            prev1[p] = last1[s[p]]
            last1[s[p]] = p
            if use_pairs and p >= 1:
                pair = s[p - 1] * sigma + s[p]
                prev2[p - 1] = last2[pair]
                last2[pair] = p - 1
    return out
