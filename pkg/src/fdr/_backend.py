"""Pick the compiled kernel when available; ``FDR_BACKEND=python`` forces NumPy."""
from __future__ import annotations

import os

from . import _kernels_py

BACKENDS = {"python": _kernels_py}

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None
else:
    BACKENDS["cython"] = _compiled

DEFAULT = os.environ.get("FDR_BACKEND", "cython" if _compiled is not None else "python")
if DEFAULT not in BACKENDS:
    DEFAULT = "python"


def get(name: str | None = None):
    """Kernel module for ``name`` (``"cython"``, ``"python"`` or None for the default)."""
    name = DEFAULT if name in (None, "auto") else name
    if name not in BACKENDS:
        raise ValueError(f"backend {name!r} is not available; have {sorted(BACKENDS)}")
    return BACKENDS[name]
