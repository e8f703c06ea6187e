"""Cross-modal knowledge distillation toolkit.

Loss kernels with analytic gradients, a compact teacher-student training
harness on paired clean/corrupted modalities, dimensional-structure
diagnostics, and radar-to-optics pointing geometry. Heavy numeric loops run
in a compiled extension when available, with a bit-identical pure-Python
fallback (see cmkd._backend).
"""

from ._backend import backend_name

__version__ = "0.1.0"

__all__ = ["backend_name", "__version__"]
