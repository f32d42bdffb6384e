"""Kernel backend selection.

The numba kernels are used unless ``GLRSM_DISABLE_NUMBA=1`` is set or numba
cannot be imported, in which case the numpy/scipy implementations in
:mod:`glrsm._np` are used instead. Both modules expose the same functions.
"""

import os

ENV_FLAG = "GLRSM_DISABLE_NUMBA"


def _numba_requested() -> bool:
    return os.environ.get(ENV_FLAG, "0").strip().lower() not in ("1", "true", "yes")


USE_NUMBA = False
if _numba_requested():
    try:
        import numba  # noqa: F401

        USE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USE_NUMBA = False

if USE_NUMBA:
    from glrsm import _nb as kernels
else:
    from glrsm import _np as kernels

BACKEND = "numba" if USE_NUMBA else "numpy"

__all__ = ["BACKEND", "ENV_FLAG", "USE_NUMBA", "kernels"]
