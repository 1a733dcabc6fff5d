"""Pure-numpy reference implementation of the correlation kernels.

Used automatically when the compiled extension is unavailable (or when
``QDCASCADE_PURE_PYTHON=1``).  Output is bit-identical to the compiled
version; only speed differs.
"""

from __future__ import annotations

import numpy as np

# cap on materialized pairs per chunk (about 100 MB of transient arrays)
_CHUNK_PAIRS = 4_000_000


def pair_delay_histogram(ts_a, ts_b, bin_width: int, n_half: int) -> np.ndarray:
    """Histogram delays t_b - t_a over all pairs with floor(d/w) in [-K, K-1].

    Same contract as the compiled kernel: sorted int64 inputs, returns int64
    counts of length ``2 * n_half`` where bin i covers
    [(i - K) * w, (i - K + 1) * w).
    """
    a = np.ascontiguousarray(ts_a, dtype=np.int64)
    b = np.ascontiguousarray(ts_b, dtype=np.int64)
    bin_width = int(bin_width)
    n_half = int(n_half)
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    if n_half <= 0:
        raise ValueError("n_half must be positive")
    nbins = 2 * n_half
    counts = np.zeros(nbins, dtype=np.int64)
    if a.size == 0 or b.size == 0:
        return counts

    window = n_half * bin_width
    lo = np.searchsorted(b, a - window, side="left")
    hi = np.searchsorted(b, a + window, side="left")
    npairs = hi - lo

    # process ranges of a whose total pair count stays below the chunk cap
    total = np.cumsum(npairs)
    start = 0
    while start < a.size:
        base = total[start - 1] if start > 0 else 0
        stop = int(np.searchsorted(total, base + _CHUNK_PAIRS, side="left")) + 1
        stop = min(stop, a.size)
        m = npairs[start:stop]
        n_tot = int(m.sum())
        if n_tot > 0:
            offsets = np.cumsum(m) - m
            idx = np.repeat(lo[start:stop] - offsets, m) + np.arange(n_tot)
            delays = b[idx] - np.repeat(a[start:stop], m)
            k = np.floor_divide(delays, bin_width) + n_half
            counts += np.bincount(k, minlength=nbins)
        start = stop
    return counts
