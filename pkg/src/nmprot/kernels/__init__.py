"""Backend dispatch for the hot numeric kernels.

The default backend is numba when it imports cleanly, otherwise numpy.
Set ``NMPROT_BACKEND=numpy`` or ``NMPROT_BACKEND=numba`` to force one;
forcing numba on a machine where it cannot import is an error.

``benchmarks/bench_backends.py`` times the two implementations against
each other on training-sized inputs.
"""

import os

_requested = os.environ.get("NMPROT_BACKEND", "").strip().lower()
if _requested not in ("", "numpy", "numba"):
    raise RuntimeError(
        f"NMPROT_BACKEND must be 'numpy' or 'numba', got {_requested!r}"
    )

if _requested == "numpy":
    from . import _numpy as _impl

    BACKEND = "numpy"
else:
    try:
        from . import _numba as _impl

        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        from . import _numpy as _impl

        BACKEND = "numpy"

softmax_rows = _impl.softmax_rows
masked_softmax_rows = _impl.masked_softmax_rows
softmax_rows_backward = _impl.softmax_rows_backward
adam_update = _impl.adam_update

__all__ = [
    "BACKEND",
    "softmax_rows",
    "masked_softmax_rows",
    "softmax_rows_backward",
    "adam_update",
]
