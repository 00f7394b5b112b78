"""Hot kernels for the agent's MLPs, with backend selection at import time.

The compiled Cython extension is preferred when present; the numpy fallback
is numerically equivalent (within floating-point reassociation) and always
available. Set ``EDGEPLAN_KERNELS=numpy`` to force the fallback or
``EDGEPLAN_KERNELS=cython`` to require the extension.
"""

from __future__ import annotations

import os

from . import _mlp_numpy

_requested = os.environ.get("EDGEPLAN_KERNELS", "auto").strip().lower()

if _requested in ("auto", "", "cython"):
    try:
        from . import _mlp_cy as _impl
        BACKEND = "cython"
    except ImportError:
        if _requested == "cython":
            raise
        _impl = _mlp_numpy
        BACKEND = "numpy"
elif _requested in ("numpy", "python"):
    _impl = _mlp_numpy
    BACKEND = "numpy"
else:
    raise ImportError(f"EDGEPLAN_KERNELS must be auto, cython, or numpy; got {_requested!r}")

forward = _impl.forward
backward = _impl.backward
adam_step = _impl.adam_step
blend = _impl.blend


def available_backends() -> dict[str, object]:
    """Importable backend modules by name (for tests and benchmarks)."""
    backends: dict[str, object] = {"numpy": _mlp_numpy}
    try:
        from . import _mlp_cy
        backends["cython"] = _mlp_cy
    except ImportError:
        pass
    return backends
