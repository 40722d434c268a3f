"""Recurrent-cell kernels with a compiled core and a numpy fallback.

Both backends expose the same two functions (gru_forward, gru_backward);
see iatdial.kernels.reference for the cell convention and contracts.  The
compiled extension is preferred when it imported cleanly; set the
environment variable IATDIAL_KERNELS to "numpy" or "cython" to force one.
"""

from __future__ import annotations

import os

from . import reference

_FORCED = os.environ.get("IATDIAL_KERNELS", "").strip().lower()

try:
    from . import _recurrent
except ImportError:
    _recurrent = None

if _FORCED == "numpy":
    _impl = reference
elif _FORCED == "cython":
    if _recurrent is None:
        raise ImportError(
            "IATDIAL_KERNELS=cython but the compiled extension is not available"
        )
    _impl = _recurrent
elif _FORCED:
    raise ImportError(
        f"unknown IATDIAL_KERNELS value {_FORCED!r}; expected 'numpy' or 'cython'"
    )
else:
    _impl = _recurrent if _recurrent is not None else reference

BACKEND = "cython" if _impl is _recurrent and _recurrent is not None else "numpy"

gru_forward = _impl.gru_forward
gru_backward = _impl.gru_backward

__all__ = ["BACKEND", "gru_forward", "gru_backward", "reference"]
