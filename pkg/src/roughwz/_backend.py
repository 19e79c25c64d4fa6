"""Select the compiled kernels when available, else the NumPy fallback.

Set ``ROUGHWZ_PURE=1`` in the environment to force the fallback (used
by the benchmark and by tests that compare the two implementations).
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("ROUGHWZ_PURE") == "1":
    kernels = _kernels_py
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]
    except ImportError:
        kernels = _kernels_py

BACKEND = kernels.BACKEND_NAME

__all__ = ["kernels", "BACKEND"]
