"""Algebraic multilevel iteration (AMLI) preconditioners with polynomial acceleration."""
from . import _backend
from .polyapprox import (
    MonomialPoly,
    SpectralInterval,
    best_error,
    best_q,
    cheb_accel_q,
    spectral_params,
)
from .sparse import CsrMatrix

BACKEND = _backend.NAME

__all__ = [
    "BACKEND",
    "CsrMatrix",
    "MonomialPoly",
    "SpectralInterval",
    "best_error",
    "best_q",
    "cheb_accel_q",
    "spectral_params",
]
__version__ = "0.1.0"
