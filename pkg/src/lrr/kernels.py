"""Kernel backend selection: compiled extension if importable, numpy otherwise.

Set ``LRR_KERNELS=python`` to force the fallback (used by the kernel
benchmark and the equivalence tests), ``LRR_KERNELS=ext`` to require the
compiled module.
"""

import os

from . import _core_py

_choice = os.environ.get("LRR_KERNELS", "auto")

if _choice == "python":
    _impl = _core_py
    BACKEND = "python"
elif _choice == "ext":
    from . import _core as _impl  # noqa: F401  (ImportError here is intentional)

    BACKEND = "ext"
else:
    try:
        from . import _core as _impl
        BACKEND = "ext"
    except ImportError:
        _impl = _core_py
        BACKEND = "python"

im2col = _impl.im2col
gather2x2 = _impl.gather2x2
scatter2x2_add = _impl.scatter2x2_add


def backends():
    """Return {name: module} for every importable backend."""
    out = {"python": _core_py}
    try:
        from . import _core
        out["ext"] = _core
    except ImportError:
        pass
    return out
