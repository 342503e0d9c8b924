"""Entropy estimation for per-user location sequences.

The production estimator is the match-length (Lempel-Ziv style)
estimator of the entropy rate: with lambda_p the shortest-novel-
substring length at position p, the estimate is
``n * log2(n) / sum(lambda)`` bits per symbol. It is sensitive to visit
frequencies, to the order of movements, and to time spent per location,
because repeated slots repeat the symbol.

A plug-in estimator over fixed-length windows is provided as a
desk-scale cross-check; it is exact for the window statistics it sees
but blind to longer-range structure.

The match-length scan is the hot loop of the package: a compiled
kernel is used when available, with a pure-Python fallback selected at
import (force the fallback with ``GRIDMOB_PURE_PYTHON=1``).
"""

from __future__ import annotations

import math
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import InputError
from .store import PeriodView

if os.environ.get("GRIDMOB_PURE_PYTHON"):
    from . import _lz_fallback as _kernel_module

    KERNEL = "python"
else:
    try:
        from . import _lz_kernel as _kernel_module  # type: ignore[no-redef]

        KERNEL = "compiled"
    except ImportError:
        from . import _lz_fallback as _kernel_module  # type: ignore[no-redef]

        KERNEL = "python"

ESTIMATOR_LZ = "lz_match_length"
ESTIMATOR_PLUGIN = "naive_plugin"


@dataclass(frozen=True)
class LocationSequence:
    """Time-ordered cells of one user; gaps in observation are skipped, not filled."""

    user: int
    period: str
    symbols: np.ndarray

    @property
    def n(self) -> int:
        return len(self.symbols)


@dataclass(frozen=True)
class EntropyEstimate:
    user: int
    period: str
    bits: float
    estimator: str
    n: int


def sequence_for_user(view: PeriodView, user: int) -> LocationSequence:
    sl = view.user_slice(user)
    return LocationSequence(
        user=user, period=view.spec.name, symbols=view.cell_codes()[sl]
    )


def lz_match_lengths(symbols: np.ndarray) -> np.ndarray:
    """Shortest-novel-substring length at every position (with overrun)."""
    symbols = np.ascontiguousarray(symbols, dtype=np.int64)
    if len(symbols) == 0:
        return np.empty(0, dtype=np.int64)
    _, compact = np.unique(symbols, return_inverse=True)
    compact = np.ascontiguousarray(compact, dtype=np.int64)
    sigma = int(compact.max()) + 1
    return _kernel_module.match_lengths(compact, sigma)


def _lz_bits(symbols: np.ndarray) -> float:
    n = len(symbols)
    lam_sum = int(lz_match_lengths(symbols).sum())
    return n * math.log2(n) / lam_sum


def real_entropy_lz(seq: LocationSequence) -> EntropyEstimate:
    """Match-length entropy-rate estimate, in bits per symbol."""
    if seq.n < 2:
        raise InputError("sequence too short: need at least 2 observations")
    return EntropyEstimate(
        user=seq.user, period=seq.period, bits=_lz_bits(seq.symbols),
        estimator=ESTIMATOR_LZ, n=seq.n,
    )


def naive_plugin_entropy(seq: LocationSequence, m: int = 1) -> EntropyEstimate:
    """Shannon entropy of length-m window frequencies, per symbol."""
    if m < 1:
        raise InputError("window length m must be >= 1")
    if seq.n < m:
        raise InputError(f"sequence of length {seq.n} has no windows of length {m}")
    symbols = seq.symbols
    counts = Counter(
        tuple(symbols[i : i + m].tolist()) for i in range(seq.n - m + 1)
    )
    total = sum(counts.values())
    h = -sum(c / total * math.log2(c / total) for c in counts.values())
    return EntropyEstimate(
        user=seq.user, period=seq.period, bits=h / m,
        estimator=ESTIMATOR_PLUGIN, n=seq.n,
    )


def population_entropy(
    view: PeriodView, threads: int = 1
) -> tuple[pd.DataFrame, int]:
    """Match-length entropy for every user with >= 2 records in the period.

    Returns (frame indexed by uid with columns bits and n, count of
    users excluded for having fewer than 2 records).
    """
    codes = view.cell_codes()
    spans = [
        (int(u), view.user_slice(int(u))) for u in view.users
    ]
    eligible = [(u, sl) for u, sl in spans if sl.stop - sl.start >= 2]
    excluded = len(spans) - len(eligible)

    def one(item: tuple[int, slice]) -> tuple[int, float, int]:
        u, sl = item
        return u, _lz_bits(codes[sl]), sl.stop - sl.start

    if threads > 1 and len(eligible) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, eligible))
    else:
        results = [one(item) for item in eligible]
    frame = pd.DataFrame(
        results, columns=["uid", "bits", "n"]
    ).set_index("uid")
    return frame, excluded
