"""Stencil kernels for the solver's hot path.

Two interchangeable backends: a compiled Cython extension (`_core`) and a
vectorized numpy fallback.  The compiled one is preferred when the
extension built; set CMALAB_KERNELS=fallback or =compiled to force a
choice.  Both expose the same functions and agree to rounding.
"""
import os

from . import fallback

_choice = os.environ.get("CMALAB_KERNELS", "auto")

if _choice not in ("auto", "compiled", "fallback"):
    raise ValueError(f"CMALAB_KERNELS must be auto, compiled or fallback, not {_choice!r}")

if _choice == "fallback":
    backend = fallback
else:
    try:
        from . import _core as backend
    except ImportError:
        if _choice == "compiled":
            raise
        backend = fallback

BACKEND_NAME = backend.BACKEND

hermitian_entries = backend.hermitian_entries
det_and_min_eig = backend.det_and_min_eig
linearized_stencil_weights = backend.linearized_stencil_weights
