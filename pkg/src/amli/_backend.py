"""Kernel backend selection.

The compiled extension is preferred; the NumPy/SciPy module is the fallback.
Set ``AMLI_PURE_PYTHON=1`` before import to force the fallback.
"""
import os

from . import _kernels_py as python_kernels

try:
    from . import _kernels as compiled_kernels
except ImportError:  # extension not built
    compiled_kernels = None

if compiled_kernels is not None and os.environ.get("AMLI_PURE_PYTHON", "") not in ("1", "true"):
    kernels = compiled_kernels
    NAME = "compiled"
else:
    kernels = python_kernels
    NAME = "python"


def available():
    """Names of the backends importable in this environment."""
    return ["compiled", "python"] if compiled_kernels is not None else ["python"]


def get(name):
    if name == "compiled":
        if compiled_kernels is None:
            raise ImportError("compiled kernels are not built")
        return compiled_kernels
    if name == "python":
        return python_kernels
    raise ValueError(f"unknown backend {name!r}")


class use:
    """Context manager that temporarily switches the active backend (tests, benchmarks)."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        global kernels, NAME
        self._saved = (kernels, NAME)
        kernels, NAME = get(self.name), self.name
        return kernels

    def __exit__(self, *exc):
        global kernels, NAME
        kernels, NAME = self._saved
        return False
