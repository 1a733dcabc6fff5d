"""Backend selection for the correlation kernels.

The compiled Cython extension is used when it imported successfully and
``QDCASCADE_PURE_PYTHON`` is not set; otherwise the numpy fallback takes
over.  Both implement the same contract bit-for-bit.
"""

from __future__ import annotations

import os

from . import _corr_py

try:
    from . import _corr
except ImportError:
    _corr = None

_FORCE_PY = os.environ.get("QDCASCADE_PURE_PYTHON", "") not in ("", "0")

HAVE_COMPILED = _corr is not None
USING_COMPILED = HAVE_COMPILED and not _FORCE_PY

_impl = _corr if USING_COMPILED else _corr_py


def backend_name() -> str:
    """Name of the active kernel backend: 'compiled' or 'numpy'."""
    return "compiled" if USING_COMPILED else "numpy"


def pair_delay_histogram(ts_a, ts_b, bin_width: int, n_half: int):
    """Dispatch to the active backend; see ``_corr_py`` for the contract."""
    return _impl.pair_delay_histogram(ts_a, ts_b, bin_width, n_half)
