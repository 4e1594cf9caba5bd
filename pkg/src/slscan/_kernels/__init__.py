"""Kernel backend selection.

The compiled lane (``_native``, Cython) and the numpy lane (``pure``) implement
the same three entry points. The compiled lane is preferred when built; set
``SLS_KERNEL=pure`` or ``SLS_KERNEL=native`` to force one.
"""

import logging
import os

from . import pure

log = logging.getLogger(__name__)

try:
    from . import _native
except ImportError:
    _native = None

_requested = os.environ.get("SLS_KERNEL", "auto").strip().lower()
if _requested == "pure":
    _active = pure
elif _requested == "native":
    if _native is None:
        raise ImportError(
            "SLS_KERNEL=native but the compiled kernel extension is not built; "
            "run: python setup.py build_ext --inplace"
        )
    _active = _native
else:
    if _requested not in ("", "auto"):
        log.warning("unknown SLS_KERNEL=%r, falling back to auto", _requested)
    _active = _native if _native is not None else pure

backend_name = "native" if _active is _native else "pure"

raycast = _active.raycast
intersect_pairs = _active.intersect_pairs
classify_stack = _active.classify_stack


def available_backends():
    """Mapping of backend name to module, for benchmarks and tests."""
    out = {"pure": pure}
    if _native is not None:
        out["native"] = _native
    return out
