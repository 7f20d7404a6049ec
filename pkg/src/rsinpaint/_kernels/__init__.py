"""Hot loops of the canny detector.

The compiled extension is used when it was built; otherwise the numpy/scipy
fallback is selected at import. ``BACKEND`` names the active one.
"""

from . import _canny_py as python_backend

try:
    from . import _canny_ext as compiled_backend
except ImportError:  # extension not built
    compiled_backend = None

if compiled_backend is not None:
    non_max_suppression = compiled_backend.non_max_suppression
    hysteresis = compiled_backend.hysteresis
    BACKEND = "cython"
else:
    non_max_suppression = python_backend.non_max_suppression
    hysteresis = python_backend.hysteresis
    BACKEND = "python"

__all__ = ["BACKEND", "compiled_backend", "python_backend", "non_max_suppression", "hysteresis"]
