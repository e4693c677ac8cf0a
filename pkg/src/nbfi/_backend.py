"""Pick the compiled event loop when available, the pure-Python one otherwise.

Set ``NBFI_PURE_PYTHON=1`` to force the fallback (useful for debugging and
for checking that both kernels agree).
"""

import os

from . import _simcore_py

kernel = _simcore_py
name = "python"

if os.environ.get("NBFI_PURE_PYTHON", "") in ("", "0"):
    try:
        from . import _simcore as _compiled
    except ImportError:  # extension not built
        pass
    else:
        kernel = _compiled
        name = "cython"


def get(backend: str | None = None):
    """Kernel module for ``backend`` ('cython', 'python' or None for the default)."""
    if backend is None:
        return kernel
    if backend == "python":
        return _simcore_py
    if backend == "cython":
        from . import _simcore

        return _simcore
    raise ValueError(f"unknown backend {backend!r}")
