"""Select the kernel backend at import time.

The compiled extension is preferred when present; the pure-Python module is
the fallback. Both expose the same functions with bit-identical semantics.
Set CMKD_BACKEND=python or CMKD_BACKEND=compiled to force a choice (forcing
"compiled" raises if the extension was not built).
"""

import os

_choice = os.environ.get("CMKD_BACKEND", "").strip().lower()
if _choice not in ("", "compiled", "python"):
    raise ImportError(
        f"CMKD_BACKEND={_choice!r} not understood; use 'compiled' or 'python'")

if _choice == "python":
    from . import _kernels_py as kernels
else:
    try:
        from . import _kernels_c as kernels  # type: ignore[no-redef]
    except ImportError:
        if _choice == "compiled":
            raise ImportError(
                "CMKD_BACKEND=compiled but the extension is not built; "
                "reinstall with a C compiler and Cython available")
        from . import _kernels_py as kernels  # type: ignore[no-redef]


def backend_name() -> str:
    """Name of the active kernel backend: 'compiled' or 'python'."""
    return kernels.BACKEND_NAME


def load_backend(name: str):
    """Import a specific backend module by name (for tests and benchmarks)."""
    if name == "python":
        from . import _kernels_py
        return _kernels_py
    if name == "compiled":
        from . import _kernels_c  # raises ImportError when not built
        return _kernels_c
    raise ValueError(f"unknown backend {name!r}")
