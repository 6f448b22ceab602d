"""Kernel backend selection.

The compiled extension is used when it imports; setting ``SPECWN_PURE=1``
forces the numpy fallback. ``BACKEND`` names the active choice.
"""

import os

from . import _pykernels

if os.environ.get("SPECWN_PURE", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
        BACKEND = "python"

propagate = _impl.propagate
running_extrema = _impl.running_extrema
sup_abs_cumsum = _impl.sup_abs_cumsum
first_passage = _impl.first_passage

__all__ = ["BACKEND", "propagate", "running_extrema", "sup_abs_cumsum", "first_passage"]
