"""Backend selection for the dilated convolution kernels.

The compiled extension is preferred when present; the numpy fallback is
picked up transparently otherwise. ``TCNKIT_KERNELS`` overrides the
choice: ``auto`` (default), ``cython``, or ``python``.
"""

import os

from ..errors import ConfigError
from . import pyref

_choice = os.environ.get("TCNKIT_KERNELS", "auto").lower()

if _choice in ("auto", "cython"):
    try:
        from . import _conv as _impl
    except ImportError:
        if _choice == "cython":
            raise ConfigError(
                "TCNKIT_KERNELS=cython but the compiled extension is not built"
            ) from None
        _impl = pyref
elif _choice == "python":
    _impl = pyref
else:
    raise ConfigError(
        f"unknown TCNKIT_KERNELS value {_choice!r}; expected auto, cython or python"
    )

BACKEND = _impl.NAME
conv_forward = _impl.conv_forward
conv_backward = _impl.conv_backward
