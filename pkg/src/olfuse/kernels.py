"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when it was built; otherwise
the numpy fallback in ``_pykernels`` is loaded. Setting the environment
variable ``OLFUSE_PURE_PYTHON=1`` forces the fallback.
"""

import os

if os.environ.get("OLFUSE_PURE_PYTHON", "") not in ("", "0"):
    from . import _pykernels as _impl
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        from . import _pykernels as _impl
        BACKEND = "python"

mul_sp = _impl.mul_sp
online_add = _impl.online_add
end_scan = _impl.end_scan
decode_scaled = _impl.decode_scaled
encode_binary = _impl.encode_binary


def available_backends():
    """Map backend name to its module, for cross-checking and benchmarks."""
    from . import _pykernels

    found = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        found["cython"] = _ckernels
    return found
